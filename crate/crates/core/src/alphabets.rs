//! Discrete label sets for analog phase shifters and quantized digital entries.
//!
//! Analog entries take one of `2^b` uniformly spaced unit-modulus phases
//! starting at angle zero. Digital entries take real and imaginary parts from
//! the midrise grid `Δ(i - (L-1)/2)`, `i = 0..L`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphabetKind {
    AnalogPhase,
    DigitalComplex,
    DigitalReal,
}

/// An ordered, finite set of labels.
///
/// Label order matters: every nearest-label and solver tie is broken towards
/// the lowest index.
#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet {
    labels: Vec<Complex64>,
    kind: AlphabetKind,
    resolution_bits: Option<u32>,
    levels: Option<u32>,
    step: Option<f64>,
}

impl Alphabet {
    /// `{e^{jℓπ/2^{b-1}} : ℓ = 0..2^b}`.
    pub fn analog(bits: u32) -> Result<Self> {
        if !(1..=16).contains(&bits) {
            return Err(Error::param(format!("analog resolution {bits} outside 1..=16")));
        }
        let n = 1usize << bits;
        let half = (1u64 << (bits - 1)) as f64;
        let labels = (0..n)
            .map(|l| {
                // exact quarter-turn values keep b=1,2 labels free of rounding noise
                match (4 * l) % n {
                    0 => match (4 * l) / n {
                        0 => Complex64::new(1.0, 0.0),
                        1 => Complex64::new(0.0, 1.0),
                        2 => Complex64::new(-1.0, 0.0),
                        _ => Complex64::new(0.0, -1.0),
                    },
                    _ => Complex64::from_polar(1.0, l as f64 * PI / half),
                }
            })
            .collect();
        Ok(Self {
            labels,
            kind: AlphabetKind::AnalogPhase,
            resolution_bits: Some(bits),
            levels: None,
            step: None,
        })
    }

    /// Real quantization labels `Δ(i - (L-1)/2)`.
    pub fn digital_real(levels: u32, delta: f64) -> Result<Self> {
        check_digital(levels, delta)?;
        let labels = real_grid(levels, delta)
            .into_iter()
            .map(|p| Complex64::new(p, 0.0))
            .collect();
        Ok(Self {
            labels,
            kind: AlphabetKind::DigitalReal,
            resolution_bits: None,
            levels: Some(levels),
            step: Some(delta),
        })
    }

    /// Cartesian square of the real grid, ordered real-part major.
    pub fn digital_complex(levels: u32, delta: f64) -> Result<Self> {
        check_digital(levels, delta)?;
        let grid = real_grid(levels, delta);
        let labels = grid
            .iter()
            .flat_map(|&re| grid.iter().map(move |&im| Complex64::new(re, im)))
            .collect();
        Ok(Self {
            labels,
            kind: AlphabetKind::DigitalComplex,
            resolution_bits: None,
            levels: Some(levels),
            step: Some(delta),
        })
    }

    /// Alphabet from explicit labels; used for the binary switch set.
    pub fn custom(labels: Vec<Complex64>, kind: AlphabetKind) -> Result<Self> {
        if labels.is_empty() || labels.iter().any(|l| !l.re.is_finite() || !l.im.is_finite()) {
            return Err(Error::param("custom alphabet needs finite labels"));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(Error::param("custom alphabet labels must be distinct"));
            }
        }
        Ok(Self {
            labels,
            kind,
            resolution_bits: None,
            levels: None,
            step: None,
        })
    }

    /// `{0, 1}` connection states of a switch network.
    pub fn binary() -> Self {
        Self::custom(
            vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
            AlphabetKind::DigitalReal,
        )
        .expect("static labels")
    }

    pub fn labels(&self) -> &[Complex64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn kind(&self) -> AlphabetKind {
        self.kind
    }

    pub fn resolution_bits(&self) -> Option<u32> {
        self.resolution_bits
    }

    pub fn levels(&self) -> Option<u32> {
        self.levels
    }

    pub fn step(&self) -> Option<f64> {
        self.step
    }

    /// The real grid a complex digital alphabet is built from.
    pub fn real_part_alphabet(&self) -> Result<Alphabet> {
        match (self.kind, self.levels, self.step) {
            (AlphabetKind::DigitalComplex | AlphabetKind::DigitalReal, Some(l), Some(d)) => {
                Alphabet::digital_real(l, d)
            }
            _ => Err(Error::param("alphabet has no real quantization grid")),
        }
    }

    pub fn contains(&self, v: Complex64) -> bool {
        self.labels.contains(&v)
    }

    /// Index of the closest label; ties go to the lowest index.
    pub fn nearest_index(&self, value: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, l) in self.labels.iter().enumerate() {
            let d = (value - l).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn nearest(&self, value: Complex64) -> Complex64 {
        self.labels[self.nearest_index(value)]
    }
}

/// Free-function form of [`Alphabet::analog`].
pub fn make_analog_alphabet(bits: u32) -> Result<Alphabet> {
    Alphabet::analog(bits)
}

/// Free-function form of [`Alphabet::digital_real`]; use
/// [`Alphabet::digital_complex`] for the Cartesian square.
pub fn make_digital_alphabet(levels: u32, delta: f64) -> Result<Alphabet> {
    Alphabet::digital_real(levels, delta)
}

pub fn nearest_label(value: Complex64, alphabet: &Alphabet) -> Complex64 {
    alphabet.nearest(value)
}

fn check_digital(levels: u32, delta: f64) -> Result<()> {
    if levels < 2 {
        return Err(Error::param(format!("need at least 2 quantization levels, got {levels}")));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::param(format!("quantization step must be positive, got {delta}")));
    }
    Ok(())
}

fn real_grid(levels: u32, delta: f64) -> Vec<f64> {
    let mid = (levels as f64 - 1.0) / 2.0;
    (0..levels).map(|i| delta * (i as f64 - mid)).collect()
}

/// How the digital quantization step Δ is picked.
#[derive(Debug, Clone, PartialEq)]
pub enum DeltaRule {
    Fixed(f64),
    /// `Δ = c(L) σ̂`; levels missing from the table are optimized on demand.
    GaussianFit(BTreeMap<u32, f64>),
}

impl DeltaRule {
    /// Gaussian fit with `c(L)` tabulated for `L = 2, 4, ..., 1024`.
    pub fn gaussian_fit() -> Self {
        let table = (1..=10).map(|k| (1u32 << k, gaussian_step_coefficient(1 << k))).collect();
        DeltaRule::GaussianFit(table)
    }

    pub fn fixed(delta: f64) -> Result<Self> {
        if delta > 0.0 && delta.is_finite() {
            Ok(DeltaRule::Fixed(delta))
        } else {
            Err(Error::param(format!("fixed step must be positive, got {delta}")))
        }
    }

    fn coefficient(&self, levels: u32) -> f64 {
        match self {
            DeltaRule::Fixed(_) => unreachable!("fixed rule has no coefficient"),
            DeltaRule::GaussianFit(table) => table
                .get(&levels)
                .copied()
                .unwrap_or_else(|| gaussian_step_coefficient(levels)),
        }
    }
}

impl Default for DeltaRule {
    fn default() -> Self {
        DeltaRule::gaussian_fit()
    }
}

/// Picks the quantization step for a set of reference precoder entries.
pub fn choose_delta(reference: &[Complex64], levels: u32, rule: &DeltaRule) -> Result<f64> {
    if reference.is_empty() || reference.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return Err(Error::DegenerateInput("reference entries are all zero".into()));
    }
    if let DeltaRule::Fixed(d) = rule {
        return Ok(*d);
    }
    if levels < 2 {
        return Err(Error::param(format!("need at least 2 quantization levels, got {levels}")));
    }
    let n = (2 * reference.len()) as f64;
    let mean = reference.iter().map(|z| z.re + z.im).sum::<f64>() / n;
    let ss: f64 = reference
        .iter()
        .map(|z| (z.re - mean).powi(2) + (z.im - mean).powi(2))
        .sum();
    let mut sigma = (ss / (n - 1.0)).sqrt();
    if !(sigma > 0.0) {
        // all pooled parts identical and nonzero
        sigma = (reference.iter().map(|z| z.norm_sqr()).sum::<f64>() / n).sqrt();
    }
    Ok(rule.coefficient(levels) * sigma)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// `E[(q(x) - x)²]` for `x ~ N(0, 1)` and the `L`-level midrise quantizer with step `delta`.
pub fn gaussian_quantization_mse(levels: u32, delta: f64) -> f64 {
    let mid = (levels as f64 - 1.0) / 2.0;
    let mut total = 0.0;
    for i in 0..levels {
        let p = delta * (i as f64 - mid);
        let lo = if i == 0 { f64::NEG_INFINITY } else { delta * (i as f64 - levels as f64 / 2.0) };
        let hi = if i + 1 == levels {
            f64::INFINITY
        } else {
            delta * (i as f64 + 1.0 - levels as f64 / 2.0)
        };
        let (pa, pb) = (std_normal_pdf(lo), std_normal_pdf(hi));
        let mass = std_normal_cdf(hi) - std_normal_cdf(lo);
        let xa = if lo.is_finite() { lo * pa } else { 0.0 };
        let xb = if hi.is_finite() { hi * pb } else { 0.0 };
        total += mass * (1.0 + p * p) + (xa - xb) - 2.0 * p * (pa - pb);
    }
    total
}

/// Step minimizing [`gaussian_quantization_mse`], by golden-section search.
pub fn gaussian_step_coefficient(levels: u32) -> f64 {
    let (mut a, mut b) = (1e-4, 8.0 / (levels as f64).sqrt().max(1.0) + 1.0);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let mut f1 = gaussian_quantization_mse(levels, x1);
    let mut f2 = gaussian_quantization_mse(levels, x2);
    while b - a > 1e-12 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = gaussian_quantization_mse(levels, x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = gaussian_quantization_mse(levels, x2);
        }
    }
    0.5 * (a + b)
}
