//! Reference designs: alternating minimization with continuous precoders,
//! followed by nearest-point quantization, plus two mixed schemes that pair
//! nearest-point mapping on one side with EP on the other.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::alphabets::{choose_delta, Alphabet, DeltaRule};
use crate::channel::SystemConfig;
use crate::detect::SolverKind;
use crate::error::{Error, Result};
use crate::hybrid::{
    init_analog_svd, optimize_analog, optimize_digital, optimize_digital_unquantized, DeltaChoice,
    HybridPrecoder, PrecoderMode, SolverOptions,
};
use crate::linalg;
use crate::wmmse::FullyDigitalPrecoder;
use crate::CMatrix;

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const MAX_MANIFOLD_STEPS: usize = 100;
const MAX_STEP_HALVINGS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Altmin1,
    Altmin1Quantized,
    Altmin2,
    Altmin2Quantized,
    FullyDigital,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaselineTrace {
    /// Objective of the starting point (SVD phases, least-squares digital).
    pub initial_objective: f64,
    pub objective_per_iter: Vec<f64>,
    pub converged: bool,
    /// Objective of the returned pair before the power rescaling.
    pub best_objective: f64,
    pub line_search_failures: usize,
    pub rescaled_subcarriers: Vec<usize>,
}

fn check(f_fd: &FullyDigitalPrecoder, config: &SystemConfig) -> Result<()> {
    config.validate()?;
    if f_fd.f_fd.nrows() != config.n_tx || f_fd.f_fd.ncols() != config.n_users * config.n_subcarriers {
        return Err(Error::param("fully-digital target does not match the configuration"));
    }
    Ok(())
}

fn unit_phase(z: Complex64) -> Complex64 {
    if z == Complex64::new(0.0, 0.0) {
        Complex64::new(1.0, 0.0)
    } else {
        z / z.norm()
    }
}

/// Scales the digital columns of every sub-carrier whose power exceeds `p_s`
/// down to the budget. Returns the touched sub-carriers.
pub fn rescale_to_budget(f_rf: &CMatrix, f_bb: &mut CMatrix, n_users: usize, n_subcarriers: usize, p_s: f64) -> Vec<usize> {
    let mut touched = vec![];
    for s in 0..n_subcarriers {
        let p: f64 = (0..n_users).map(|k| (f_rf * f_bb.column(k * n_subcarriers + s)).norm_squared()).sum();
        if p > p_s {
            let g = Complex64::new((p_s / p).sqrt(), 0.0);
            for k in 0..n_users {
                let col = k * n_subcarriers + s;
                let c = f_bb.column(col) * g;
                f_bb.set_column(col, &c);
            }
            touched.push(s);
        }
    }
    touched
}

fn objective(f_fd: &CMatrix, f_rf: &CMatrix, f_bb: &CMatrix) -> f64 {
    (f_fd - f_rf * f_bb).norm_squared()
}

/// Phase-projected least-squares analog update: `exp(j·arg(F_FD F_BB†))`.
fn analog_ls(f_fd: &CMatrix, f_bb: &CMatrix) -> CMatrix {
    let x = linalg::least_squares(&f_bb.transpose(), &f_fd.transpose());
    x.transpose().map(unit_phase)
}

/// Euclidean gradient `-2 (F_FD - F F_BB) F_BBᴴ` projected onto the tangent
/// space of the unit-modulus product manifold at `f_rf`.
pub fn riemannian_gradient(f_fd: &CMatrix, f_rf: &CMatrix, f_bb: &CMatrix) -> CMatrix {
    let g = (f_fd - f_rf * f_bb) * f_bb.adjoint() * Complex64::new(-2.0, 0.0);
    CMatrix::from_fn(g.nrows(), g.ncols(), |i, j| {
        let f = f_rf[(i, j)];
        g[(i, j)] - f * (g[(i, j)] * f.conj()).re
    })
}

/// Armijo-backtracked Riemannian gradient descent on the analog matrix.
/// Returns the new matrix and whether a line search failed.
fn analog_manifold(f_fd: &CMatrix, f_rf: &CMatrix, f_bb: &CMatrix) -> (CMatrix, bool) {
    let mut f = f_rf.clone();
    let mut cost = objective(f_fd, &f, f_bb);
    let scale = f_bb.norm_squared().max(f64::MIN_POSITIVE);
    let mut step = 1.0 / scale;
    let mut first_norm = None;
    for _ in 0..MAX_MANIFOLD_STEPS {
        let rg = riemannian_gradient(f_fd, &f, f_bb);
        let gn = rg.norm_squared();
        let g0 = *first_norm.get_or_insert(gn);
        if gn <= 1e-18 * g0.max(f64::MIN_POSITIVE) || gn == 0.0 {
            break;
        }
        let mut t = step * 2.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand = (&f - &rg * Complex64::new(t, 0.0)).map(unit_phase);
            let c = objective(f_fd, &cand, f_bb);
            if c <= cost - ARMIJO_C * t * gn {
                accepted = Some((cand, c));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, c)) => {
                let done = cost - c <= 1e-12 * cost;
                f = cand;
                cost = c;
                step = t;
                if done {
                    break;
                }
            }
            None => return (f, true),
        }
    }
    (f, false)
}

fn altmin(f_fd: &FullyDigitalPrecoder, config: &SystemConfig, manifold: bool) -> Result<(CMatrix, CMatrix, BaselineTrace)> {
    check(f_fd, config)?;
    let fd = &f_fd.f_fd;
    let mut f_rf = init_analog_svd(f_fd, config.m_rf)?;
    let mut f_bb = linalg::least_squares(&f_rf, fd);
    let mut trace = BaselineTrace {
        initial_objective: objective(fd, &f_rf, &f_bb),
        ..Default::default()
    };
    let mut best = (trace.initial_objective, f_rf.clone(), f_bb.clone());
    let mut prev = trace.initial_objective;
    for _ in 0..config.outer_max_iter {
        if manifold {
            let (f, failed) = analog_manifold(fd, &f_rf, &f_bb);
            f_rf = f;
            trace.line_search_failures += failed as usize;
        } else {
            f_rf = analog_ls(fd, &f_bb);
        }
        f_bb = linalg::least_squares(&f_rf, fd);
        let obj = objective(fd, &f_rf, &f_bb);
        trace.objective_per_iter.push(obj);
        if obj < best.0 {
            best = (obj, f_rf.clone(), f_bb.clone());
        }
        if (prev - obj).abs() <= config.outer_tol * prev.abs().max(f64::MIN_POSITIVE) {
            trace.converged = true;
            break;
        }
        prev = obj;
    }
    let (obj, f_rf, mut f_bb) = best;
    trace.best_objective = obj;
    trace.rescaled_subcarriers = rescale_to_budget(
        &f_rf,
        &mut f_bb,
        f_fd.n_users,
        f_fd.n_subcarriers,
        config.subcarrier_power_mw(),
    );
    Ok((f_rf, f_bb, trace))
}

/// Least squares on both sides; the analog update keeps only the phases.
pub fn altmin2(f_fd: &FullyDigitalPrecoder, config: &SystemConfig) -> Result<(CMatrix, CMatrix, BaselineTrace)> {
    altmin(f_fd, config, false)
}

/// Least-squares digital update and Riemannian gradient descent on the
/// unit-modulus analog matrix.
pub fn altmin1(f_fd: &FullyDigitalPrecoder, config: &SystemConfig) -> Result<(CMatrix, CMatrix, BaselineTrace)> {
    altmin(f_fd, config, true)
}

fn nearest_grid(f_bb: &CMatrix, alphabet: &Alphabet) -> CMatrix {
    f_bb.map(|z| alphabet.nearest(z))
}

fn max_violation(f_rf: &CMatrix, f_bb: &CMatrix, n_users: usize, n_subcarriers: usize, p_s: f64) -> bool {
    (0..n_subcarriers).any(|s| {
        let p: f64 = (0..n_users).map(|k| (f_rf * f_bb.column(k * n_subcarriers + s)).norm_squared()).sum();
        p > p_s
    })
}

/// Nearest-point quantization of a continuous pair.
///
/// With `levels = None` the digital part stays continuous and is only
/// rescaled to the budget. Otherwise the step comes from `rule` and is halved
/// until every sub-carrier meets the budget.
#[allow(clippy::too_many_arguments)]
pub fn quantize_baseline(
    f_rf: &CMatrix,
    f_bb: &CMatrix,
    analog: &Alphabet,
    levels: Option<u32>,
    rule: &DeltaRule,
    p_s: f64,
    n_users: usize,
    n_subcarriers: usize,
) -> Result<HybridPrecoder> {
    if f_rf.iter().chain(f_bb.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::param("non-finite precoder entries"));
    }
    let q_rf = f_rf.map(|z| analog.nearest(z));
    let (q_bb, delta) = match levels {
        None => {
            let mut bb = f_bb.clone();
            rescale_to_budget(&q_rf, &mut bb, n_users, n_subcarriers, p_s);
            (bb, None)
        }
        Some(l) => {
            let mut delta = choose_delta(f_bb.as_slice(), l, rule)?;
            let mut bb = nearest_grid(f_bb, &Alphabet::digital_complex(l, delta)?);
            let mut halvings = 0;
            while max_violation(&q_rf, &bb, n_users, n_subcarriers, p_s) {
                if halvings == MAX_STEP_HALVINGS {
                    return Err(Error::Infeasible {
                        subcarrier: 0,
                        shrinks: halvings,
                    });
                }
                delta /= 2.0;
                halvings += 1;
                bb = nearest_grid(f_bb, &Alphabet::digital_complex(l, delta)?);
            }
            (bb, Some(delta))
        }
    };
    Ok(HybridPrecoder {
        f_rf: q_rf,
        f_bb: q_bb,
        delta,
        mode: PrecoderMode::FullyConnected,
        switch: None,
        phase_diag: None,
        n_users,
        n_subcarriers,
    })
}

fn rule_of(config: &SystemConfig) -> Result<DeltaRule> {
    match config.delta_fixed {
        Some(d) => DeltaRule::fixed(d),
        None => Ok(DeltaRule::gaussian_fit()),
    }
}

fn quantize_for(config: &SystemConfig, f_rf: &CMatrix, f_bb: &CMatrix, analog: &Alphabet) -> Result<HybridPrecoder> {
    let levels = (!config.infinite_resolution_digital).then_some(config.quant_levels);
    quantize_baseline(
        f_rf,
        f_bb,
        analog,
        levels,
        &rule_of(config)?,
        config.subcarrier_power_mw(),
        config.n_users,
        config.n_subcarriers,
    )
}

/// A baseline design together with its trace.
pub fn run_baseline(f_fd: &FullyDigitalPrecoder, config: &SystemConfig, kind: BaselineKind) -> Result<(HybridPrecoder, BaselineTrace)> {
    let analog = Alphabet::analog(config.analog_bits)?;
    let continuous = |f_rf: CMatrix, f_bb: CMatrix| HybridPrecoder {
        f_rf,
        f_bb,
        delta: None,
        mode: PrecoderMode::FullyConnected,
        switch: None,
        phase_diag: None,
        n_users: config.n_users,
        n_subcarriers: config.n_subcarriers,
    };
    match kind {
        BaselineKind::Altmin1 => altmin1(f_fd, config).map(|(a, b, t)| (continuous(a, b), t)),
        BaselineKind::Altmin2 => altmin2(f_fd, config).map(|(a, b, t)| (continuous(a, b), t)),
        BaselineKind::Altmin1Quantized => {
            let (a, b, t) = altmin1(f_fd, config)?;
            Ok((quantize_for(config, &a, &b, &analog)?, t))
        }
        BaselineKind::Altmin2Quantized => {
            let (a, b, t) = altmin2(f_fd, config)?;
            Ok((quantize_for(config, &a, &b, &analog)?, t))
        }
        BaselineKind::FullyDigital => {
            check(f_fd, config)?;
            let eye = CMatrix::identity(config.n_tx, config.n_tx);
            Ok((continuous(eye, f_fd.f_fd.clone()), BaselineTrace::default()))
        }
    }
}

/// AltMin 2, nearest-point analog quantization, then one EP digital update
/// on the quantized analog matrix.
pub fn np_analog_ep_digital(f_fd: &FullyDigitalPrecoder, config: &SystemConfig) -> Result<HybridPrecoder> {
    let (a, _, _) = altmin2(f_fd, config)?;
    let analog = Alphabet::analog(config.analog_bits)?;
    let f_rf = a.map(|z| analog.nearest(z));
    let p_s = config.subcarrier_power_mw();
    let (k_n, s_n) = (config.n_users, config.n_subcarriers);
    let sol = if config.infinite_resolution_digital {
        optimize_digital_unquantized(&f_fd.f_fd, &f_rf, k_n, s_n, p_s)?
    } else {
        optimize_digital(
            &f_fd.f_fd,
            &f_rf,
            k_n,
            s_n,
            p_s,
            config.quant_levels,
            &DeltaChoice::Estimate(rule_of(config)?),
            &SolverOptions::from_config(SolverKind::Ep, config),
            config.bisection_tol,
        )?
    };
    Ok(HybridPrecoder {
        f_rf,
        f_bb: sol.f_bb,
        delta: sol.delta,
        mode: PrecoderMode::FullyConnected,
        switch: None,
        phase_diag: None,
        n_users: k_n,
        n_subcarriers: s_n,
    })
}

/// Alternates continuous least-squares digital updates with EP analog
/// updates, then quantizes the digital part by nearest-point mapping.
pub fn ep_analog_np_digital(f_fd: &FullyDigitalPrecoder, config: &SystemConfig) -> Result<HybridPrecoder> {
    check(f_fd, config)?;
    let fd = &f_fd.f_fd;
    let analog = Alphabet::analog(config.analog_bits)?;
    let opts = SolverOptions::from_config(SolverKind::Ep, config);
    let p_s = config.subcarrier_power_mw();
    let (k_n, s_n) = (config.n_users, config.n_subcarriers);
    let mut f_rf = init_analog_svd(f_fd, config.m_rf)?;
    let mut best: Option<(f64, CMatrix, CMatrix)> = None;
    let mut prev: Option<f64> = None;
    for _ in 0..config.outer_max_iter {
        let dig = optimize_digital_unquantized(fd, &f_rf, k_n, s_n, p_s)?;
        f_rf = optimize_analog(fd, &dig.f_bb, &opts, &analog)?.0;
        let obj = objective(fd, &f_rf, &dig.f_bb);
        if best.as_ref().is_none_or(|b| obj < b.0) {
            best = Some((obj, f_rf.clone(), dig.f_bb));
        }
        if prev.is_some_and(|p| (p - obj).abs() <= config.outer_tol * p.abs().max(f64::MIN_POSITIVE)) {
            break;
        }
        prev = Some(obj);
    }
    let (_, f_rf, _) = best.expect("at least one iteration");
    // digital part refit on the final analog matrix, then quantized
    let f_bb = optimize_digital_unquantized(fd, &f_rf, k_n, s_n, p_s)?.f_bb;
    quantize_for(config, &f_rf, &f_bb, &analog)
}

/// `F_RF` phases as a matrix of angles, used by gradient checks.
pub fn phases(f_rf: &CMatrix) -> DMatrix<f64> {
    f_rf.map(|z| z.arg())
}

