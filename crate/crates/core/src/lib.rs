//! Limited-resolution hybrid analog-digital precoding.
//!
//! The crate designs hybrid precoders `F_RF · F_BB` for multi-user, multi-carrier
//! MIMO downlinks where the analog phase shifters take values from a finite set of
//! unit-modulus phases and every digital precoder entry is drawn from a uniform
//! quantization grid. Each alternating step is a finite-alphabet least-squares
//! problem, solved exactly by Schnorr-Euchner sphere decoding or approximately by
//! expectation propagation.
//!
//! Module map:
//!
//! * [`alphabets`]: phase and quantization label sets, step selection, rounding.
//! * [`channel`]: scenario configuration, Rician multi-tap channels, link budget.
//! * [`wmmse`]: fully-digital WMMSE target and rate/MSE metrics.
//! * [`detect`]: triangularization, sphere decoder, EP, brute-force oracle.
//! * [`hybrid`]: the alternating design loop and the dynamic-connected variant.
//! * [`baselines`]: AltMin reference designs and nearest-point quantization.
//! * [`harness`]: experiment specs, Monte Carlo runs, CSV output, runtime table.

pub mod alphabets;
pub mod baselines;
pub mod channel;
pub mod detect;
mod error;
pub mod harness;
pub mod hybrid;
pub mod linalg;
pub mod wmmse;

pub use alphabets::{Alphabet, AlphabetKind, DeltaRule};
pub use channel::{ChannelSet, LinkBudget, SystemConfig};
pub use detect::{SolveResult, SolverKind, TriangularSystem};
pub use hybrid::{HybridPrecoder, PrecoderMode, SolveTrace};
pub use error::{Error, Result};

pub use num_complex::Complex64;
pub use wmmse::{FullyDigitalPrecoder, RateReport};
/// Dense complex matrix used throughout the crate.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<Complex64>;
