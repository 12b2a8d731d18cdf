//! Alternating design of limited-resolution hybrid precoders.
//!
//! The objective is `‖F_FD - F_RF F_BB‖_F²`. With `F_BB` fixed the analog
//! matrix splits into one finite-alphabet problem per antenna; with `F_RF`
//! fixed the digital matrix splits into one problem per user and
//! sub-carrier, coupled only through a per-sub-carrier Lagrange multiplier
//! found by bisection.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabets::{choose_delta, Alphabet, DeltaRule};
use crate::channel::{stream_rng, DeltaSchedule, SystemConfig, AUX_STREAM};
use crate::detect::{self, EpOptions, EpProblem, SolveResult, SolverKind, TriangularSystem};
use crate::error::{Error, Result};
use crate::linalg::{self, Field};
use crate::wmmse::FullyDigitalPrecoder;
use crate::{CMatrix, CVector};

/// Default node budget of one sphere-decoder call.
pub const DEFAULT_MAX_NODES: u64 = 20_000_000;
const MAX_DOUBLINGS: usize = 60;
const MAX_BISECTIONS: usize = 200;
const MAX_DELTA_SHRINKS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrecoderMode {
    FullyConnected,
    DynamicConnected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridPrecoder {
    pub f_rf: CMatrix,
    /// `M_T × (K·S)`, column `k·S + s`.
    pub f_bb: CMatrix,
    /// Quantization step of `f_bb`; `None` for an unquantized digital part.
    pub delta: Option<f64>,
    pub mode: PrecoderMode,
    pub switch: Option<DMatrix<u8>>,
    pub phase_diag: Option<Vec<Complex64>>,
    pub n_users: usize,
    pub n_subcarriers: usize,
}

impl HybridPrecoder {
    /// `F_RF F_BB`, laid out like the channel.
    pub fn effective(&self) -> CMatrix {
        &self.f_rf * &self.f_bb
    }

    pub fn subcarrier_power(&self, s: usize) -> f64 {
        subcarrier_power(&self.f_rf, &self.f_bb, self.n_users, self.n_subcarriers, s)
    }

    pub fn objective(&self, f_fd: &CMatrix) -> f64 {
        (f_fd - self.effective()).norm_squared()
    }
}

fn subcarrier_power(f_rf: &CMatrix, f_bb: &CMatrix, k_n: usize, s_n: usize, s: usize) -> f64 {
    (0..k_n).map(|k| (f_rf * f_bb.column(k * s_n + s)).norm_squared()).sum()
}

/// Aggregated solver effort.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolverStats {
    pub solves: u64,
    pub nodes_visited: u64,
    pub ep_iterations: u64,
    /// Calls that hit a node or iteration budget.
    pub truncated: u64,
}

impl SolverStats {
    fn record<T: Field>(&mut self, r: &SolveResult<T>) {
        self.solves += 1;
        self.nodes_visited += r.nodes_visited;
        self.ep_iterations += r.iterations as u64;
        self.truncated += r.truncated as u64;
    }

    fn merge(&mut self, o: &SolverStats) {
        self.solves += o.solves;
        self.nodes_visited += o.nodes_visited;
        self.ep_iterations += o.ep_iterations;
        self.truncated += o.truncated;
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveTrace {
    /// Objective after each outer iteration.
    pub objective_per_outer_iter: Vec<f64>,
    /// Multipliers of the returned iterate.
    pub mu_per_subcarrier: Vec<f64>,
    /// Bisection steps per outer iteration, summed over sub-carriers.
    pub inner_bisection_iters: Vec<usize>,
    pub solver_stats: SolverStats,
    pub analog_time: Duration,
    pub digital_time: Duration,
    pub converged: bool,
    /// Index into `objective_per_outer_iter` of the returned iterate.
    pub best_iteration: usize,
    /// Objective of the returned precoder after the exit power repair.
    pub final_objective: f64,
    pub delta_shrinks: usize,
    /// Sub-carriers re-solved at exit to restore power feasibility.
    pub repaired_subcarriers: Vec<usize>,
    /// The SVD initialization failed and random phases were used.
    pub init_fallback: bool,
}

impl SolveTrace {
    pub fn outer_iterations(&self) -> usize {
        self.objective_per_outer_iter.len()
    }

    pub fn design_time(&self) -> Duration {
        self.analog_time + self.digital_time
    }
}

/// Solver selection plus per-solver knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub kind: SolverKind,
    pub ep: EpOptions,
    pub max_nodes: Option<u64>,
}

impl SolverOptions {
    pub fn new(kind: SolverKind) -> Self {
        SolverOptions {
            kind,
            ep: EpOptions::default(),
            max_nodes: Some(DEFAULT_MAX_NODES),
        }
    }

    pub fn from_config(kind: SolverKind, config: &SystemConfig) -> Self {
        SolverOptions {
            kind,
            ep: EpOptions {
                damping: config.ep_damping,
                max_iter: config.ep_max_iter,
                tol: config.ep_tol,
            },
            max_nodes: Some(DEFAULT_MAX_NODES),
        }
    }
}

/// Upper Cholesky factor of `gram`, with escalating diagonal loading.
fn factor<T: Field>(gram: &DMatrix<T>) -> Result<(DMatrix<T>, f64)> {
    let mut ridge = 0.0;
    for _ in 0..10 {
        let mut g = gram.clone();
        for i in 0..g.nrows() {
            g[(i, i)] += T::from_real(ridge);
        }
        if let Some(r) = linalg::cholesky_upper(g) {
            return Ok((r, ridge));
        }
        ridge = if ridge == 0.0 { linalg::default_ridge(gram) } else { ridge * 100.0 };
    }
    Err(Error::SingularGram {
        suggested_ridge: ridge,
    })
}

/// Runs the chosen solver on `‖c - G z‖²` given `r` (`rᴴr = GᴴG + ridge·I`),
/// `GᴴG`, `Gᴴc` and `‖c‖²`.
fn solve_with<T: Field>(
    opts: &SolverOptions,
    r: &DMatrix<T>,
    ridge: f64,
    gram: &DMatrix<T>,
    ghc: &[T],
    c_norm2: f64,
    alphabet: &Alphabet,
) -> Result<SolveResult<T>> {
    match opts.kind {
        SolverKind::Sesd => {
            let sys = TriangularSystem::from_factor(r.clone(), ghc, c_norm2, ridge);
            detect::sesd_solve_limited(&sys, alphabet, opts.max_nodes)
        }
        SolverKind::Ep => {
            let p = EpProblem {
                gram: gram.clone(),
                ghc: DVector::from_column_slice(ghc),
                c_norm2,
            };
            detect::ep_solve_problem(&p, alphabet, &opts.ep).map(|(res, _)| res)
        }
    }
}

/// Continuous-phase initialization from the top `m_rf` left singular pairs.
pub fn init_analog_svd(f_fd: &FullyDigitalPrecoder, m_rf: usize) -> Result<CMatrix> {
    init_analog_svd_matrix(&f_fd.f_fd, m_rf).map(|(f, _)| f)
}

/// Returns the matrix and whether the random fallback was used.
fn init_analog_svd_matrix(f_fd: &CMatrix, m_rf: usize) -> Result<(CMatrix, bool)> {
    let (n_t, cols) = f_fd.shape();
    if m_rf == 0 || m_rf > n_t.min(cols) {
        return Err(Error::param(format!("m_rf {m_rf} must lie in 1..=min(N_T, K*S)")));
    }
    match f_fd.clone().try_svd(true, false, f64::EPSILON, 10_000) {
        Some(svd) => {
            let u = svd.u.expect("requested U");
            let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
            order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
            let f = CMatrix::from_fn(n_t, m_rf, |n, j| {
                let v = u[(n, order[j])] * svd.singular_values[order[j]];
                Complex64::from_polar(1.0, v.arg())
            });
            Ok((f, false))
        }
        None => {
            let mut rng = stream_rng(0, 0, AUX_STREAM);
            let f = CMatrix::from_fn(n_t, m_rf, |_, _| {
                Complex64::from_polar(1.0, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
            });
            Ok((f, true))
        }
    }
}

/// Per-antenna finite-alphabet update of `F_RF` with `F_BB` fixed.
pub fn optimize_analog(
    f_fd: &CMatrix,
    f_bb: &CMatrix,
    opts: &SolverOptions,
    alphabet: &Alphabet,
) -> Result<(CMatrix, SolverStats)> {
    let (n_t, cols) = f_fd.shape();
    let m = f_bb.nrows();
    if f_bb.ncols() != cols {
        return Err(Error::param("F_BB column count does not match F_FD"));
    }
    // B = F_BBᵀ, so BᴴB = conj(F_BB) F_BBᵀ
    let b = f_bb.transpose();
    let gram = b.adjoint() * &b;
    let (r, ridge) = factor(&gram)?;
    let bh = b.adjoint();
    let rows: Vec<Result<(Vec<Complex64>, SolveResult)>> = (0..n_t)
        .into_par_iter()
        .map(|n| {
            let a: CVector = f_fd.row(n).transpose();
            let ghc = &bh * &a;
            solve_with(opts, &r, ridge, &gram, ghc.as_slice(), a.norm_squared(), alphabet)
                .map(|res| (res.z.clone(), res))
                .map_err(|e| Error::Antenna {
                    antenna: n,
                    source: Box::new(e),
                })
        })
        .collect();
    let mut f_rf = CMatrix::zeros(n_t, m);
    let mut stats = SolverStats::default();
    for (n, row) in rows.into_iter().enumerate() {
        let (z, res) = row?;
        for (j, v) in z.into_iter().enumerate() {
            f_rf[(n, j)] = v;
        }
        stats.record(&res);
    }
    Ok((f_rf, stats))
}

/// Result of one digital update.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalSolution {
    pub f_bb: CMatrix,
    pub delta: Option<f64>,
    pub mu: Vec<f64>,
    /// Bisection steps per sub-carrier.
    pub bisection_iters: Vec<usize>,
    pub stats: SolverStats,
    pub delta_shrinks: usize,
}

/// How the digital step obtains its quantization step.
#[derive(Debug, Clone, PartialEq)]
pub enum DeltaChoice {
    /// Estimate from the unconstrained least-squares digital solution.
    Estimate(DeltaRule),
    Given(f64),
}

/// Shared per-call data of the quantized digital step.
struct DigitalContext<'a> {
    opts: &'a SolverOptions,
    /// Real Gram `realify(F_RFᴴF_RF)` and its factor.
    gram: DMatrix<f64>,
    r0: DMatrix<f64>,
    ridge: f64,
    /// Per (k, s) column: `realify(F_RFᴴ a)`, `R0⁻ᵀ v` and `‖a‖²`.
    v: Vec<DVector<f64>>,
    d0: Vec<DVector<f64>>,
    a_norm2: Vec<f64>,
    k_n: usize,
    s_n: usize,
    p_s: f64,
    tol: f64,
}

struct SubcarrierSolve {
    b: Vec<Vec<f64>>,
    power: f64,
    stats: SolverStats,
}

impl DigitalContext<'_> {
    fn solve_at(&self, s: usize, mu: f64, alphabet: &Alphabet) -> Result<SubcarrierSolve> {
        let scale = (mu + 1.0).sqrt();
        let mut stats = SolverStats::default();
        let mut b = Vec::with_capacity(self.k_n);
        let mut power = 0.0;
        for k in 0..self.k_n {
            let col = k * self.s_n + s;
            let res = match self.opts.kind {
                SolverKind::Sesd => {
                    let sys = TriangularSystem {
                        r: &self.r0 * scale,
                        d: &self.d0[col] / scale,
                        constant_offset: 0.0,
                        ridge: self.ridge,
                    };
                    detect::sesd_solve_limited(&sys, alphabet, self.opts.max_nodes)?
                }
                SolverKind::Ep => {
                    let p = EpProblem {
                        gram: &self.gram * (mu + 1.0),
                        ghc: self.v[col].clone(),
                        c_norm2: self.a_norm2[col] / (mu + 1.0),
                    };
                    detect::ep_solve_problem(&p, alphabet, &self.opts.ep)?.0
                }
            };
            stats.record(&res);
            let z = DVector::from_column_slice(&res.z);
            power += z.dot(&(&self.gram * &z));
            b.push(res.z);
        }
        Ok(SubcarrierSolve { b, power, stats })
    }

    /// Bisection on `μ_s`; `None` when even a very large multiplier cannot
    /// meet the budget.
    fn bisect(&self, s: usize, alphabet: &Alphabet) -> Result<Option<(SubcarrierSolve, f64, usize)>> {
        let p_s = self.p_s;
        let mut steps = 1;
        let at_zero = self.solve_at(s, 0.0, alphabet)?;
        if at_zero.power <= p_s * (1.0 + self.tol) {
            return Ok(Some((at_zero, 0.0, steps)));
        }
        let mut stats = at_zero.stats;
        let mut hi = 1.0;
        let mut hi_sol = None;
        for _ in 0..MAX_DOUBLINGS {
            let sol = self.solve_at(s, hi, alphabet)?;
            steps += 1;
            stats.merge(&sol.stats);
            if sol.power <= p_s {
                hi_sol = Some(sol);
                break;
            }
            hi *= 2.0;
        }
        let Some(mut best) = hi_sol else {
            return Ok(None);
        };
        let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
        for _ in 0..MAX_BISECTIONS {
            if hi - lo < 1e-8 * hi.max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let sol = self.solve_at(s, mid, alphabet)?;
            steps += 1;
            stats.merge(&sol.stats);
            if (sol.power - p_s).abs() < self.tol * p_s {
                best = sol;
                hi = mid;
                break;
            }
            if sol.power > p_s {
                lo = mid;
            } else {
                hi = mid;
                best = sol;
            }
        }
        best.stats = stats;
        Ok(Some((best, hi, steps)))
    }
}

fn digital_dims(f_fd: &CMatrix, f_rf: &CMatrix, k_n: usize, s_n: usize) -> Result<()> {
    if f_fd.nrows() != f_rf.nrows() || f_fd.ncols() != k_n * s_n || k_n * s_n == 0 {
        return Err(Error::param("inconsistent dimensions in the digital step"));
    }
    if f_rf.norm_squared() == 0.0 {
        return Err(Error::param("analog precoder is zero"));
    }
    Ok(())
}

/// Quantized digital update with per-sub-carrier multiplier bisection.
///
/// Sub-carriers where no multiplier meets the budget trigger a global halving
/// of the quantization step, at most eight times.
#[allow(clippy::too_many_arguments)]
pub fn optimize_digital(
    f_fd: &CMatrix,
    f_rf: &CMatrix,
    n_users: usize,
    n_subcarriers: usize,
    p_s: f64,
    levels: u32,
    delta: &DeltaChoice,
    opts: &SolverOptions,
    bisection_tol: f64,
) -> Result<DigitalSolution> {
    digital_dims(f_fd, f_rf, n_users, n_subcarriers)?;
    if !(p_s > 0.0) {
        return Err(Error::param("power budget must be positive"));
    }
    let mut delta = match delta {
        DeltaChoice::Given(d) => *d,
        DeltaChoice::Estimate(rule) => {
            let ls = linalg::least_squares(f_rf, f_fd);
            choose_delta(ls.as_slice(), levels, rule)?
        }
    };
    let gram_c = f_rf.adjoint() * f_rf;
    let gram = linalg::realify_matrix(&gram_c);
    let (r0, ridge) = factor(&gram)?;
    let fh = f_rf.adjoint();
    let cols = n_users * n_subcarriers;
    let mut v = Vec::with_capacity(cols);
    let mut d0 = Vec::with_capacity(cols);
    let mut a_norm2 = Vec::with_capacity(cols);
    for col in 0..cols {
        let a = f_fd.column(col);
        let vc = linalg::realify_vector(&(&fh * a));
        d0.push(DVector::from_vec(linalg::solve_upper_adjoint(&r0, vc.as_slice())));
        v.push(vc);
        a_norm2.push(a.norm_squared());
    }
    let ctx = DigitalContext {
        opts,
        gram,
        r0,
        ridge,
        v,
        d0,
        a_norm2,
        k_n: n_users,
        s_n: n_subcarriers,
        p_s,
        tol: bisection_tol,
    };
    for shrinks in 0..=MAX_DELTA_SHRINKS {
        let alphabet = Alphabet::digital_real(levels, delta)?;
        let per_s: Vec<Result<Option<(SubcarrierSolve, f64, usize)>>> =
            (0..n_subcarriers).into_par_iter().map(|s| ctx.bisect(s, &alphabet)).collect();
        let mut f_bb = CMatrix::zeros(f_rf.ncols(), cols);
        let mut mu = vec![0.0; n_subcarriers];
        let mut iters = vec![0; n_subcarriers];
        let mut stats = SolverStats::default();
        let mut infeasible = None;
        for (s, r) in per_s.into_iter().enumerate() {
            match r? {
                Some((sol, m, it)) => {
                    for (k, b) in sol.b.iter().enumerate() {
                        let z = linalg::complexify_vector(b);
                        f_bb.set_column(k * n_subcarriers + s, &CVector::from_vec(z));
                    }
                    mu[s] = m;
                    iters[s] = it;
                    stats.merge(&sol.stats);
                }
                None => {
                    infeasible.get_or_insert(s);
                }
            }
        }
        match infeasible {
            None => {
                return Ok(DigitalSolution {
                    f_bb,
                    delta: Some(delta),
                    mu,
                    bisection_iters: iters,
                    stats,
                    delta_shrinks: shrinks,
                })
            }
            Some(s) if shrinks == MAX_DELTA_SHRINKS => {
                return Err(Error::Infeasible {
                    subcarrier: s,
                    shrinks,
                })
            }
            Some(_) => delta /= 2.0,
        }
    }
    unreachable!("loop returns on its last pass")
}

/// Unquantized digital update: the per-sub-carrier multiplier has a closed
/// form because the power of the scaled least-squares solution is
/// `P_ls/(μ+1)²`.
pub fn optimize_digital_unquantized(
    f_fd: &CMatrix,
    f_rf: &CMatrix,
    n_users: usize,
    n_subcarriers: usize,
    p_s: f64,
) -> Result<DigitalSolution> {
    digital_dims(f_fd, f_rf, n_users, n_subcarriers)?;
    let ls = linalg::least_squares(f_rf, f_fd);
    let mut f_bb = ls.clone();
    let mut mu = vec![0.0; n_subcarriers];
    for s in 0..n_subcarriers {
        let p = subcarrier_power(f_rf, &ls, n_users, n_subcarriers, s);
        if p > p_s {
            let scale = (p_s / p).sqrt();
            mu[s] = 1.0 / scale - 1.0;
            for k in 0..n_users {
                let col = k * n_subcarriers + s;
                let c = f_bb.column(col) * Complex64::new(scale, 0.0);
                f_bb.set_column(col, &c);
            }
        }
    }
    Ok(DigitalSolution {
        f_bb,
        delta: None,
        mu,
        bisection_iters: vec![0; n_subcarriers],
        stats: SolverStats::default(),
        delta_shrinks: 0,
    })
}

struct DesignProblem<'a> {
    f_fd: &'a CMatrix,
    config: &'a SystemConfig,
    opts: SolverOptions,
    k_n: usize,
    s_n: usize,
    p_s: f64,
    rule: DeltaRule,
}

impl DesignProblem<'_> {
    fn new<'a>(f_fd: &'a FullyDigitalPrecoder, config: &'a SystemConfig, solver: SolverKind) -> Result<DesignProblem<'a>> {
        config.validate()?;
        if f_fd.f_fd.nrows() != config.n_tx
            || f_fd.n_users != config.n_users
            || f_fd.n_subcarriers != config.n_subcarriers
        {
            return Err(Error::param("fully-digital target does not match the configuration"));
        }
        let rule = match config.delta_fixed {
            Some(d) => DeltaRule::fixed(d)?,
            None => DeltaRule::gaussian_fit(),
        };
        Ok(DesignProblem {
            f_fd: &f_fd.f_fd,
            config,
            opts: SolverOptions::from_config(solver, config),
            k_n: f_fd.n_users,
            s_n: f_fd.n_subcarriers,
            p_s: config.subcarrier_power_mw(),
            rule,
        })
    }

    /// Digital step; `delta` carries the frozen step between iterations.
    fn digital(&self, f_rf: &CMatrix, delta: &mut Option<f64>, first: bool) -> Result<DigitalSolution> {
        let c = self.config;
        if c.infinite_resolution_digital {
            return optimize_digital_unquantized(self.f_fd, f_rf, self.k_n, self.s_n, self.p_s);
        }
        let choice = match (c.delta_schedule, *delta) {
            (DeltaSchedule::FirstIteration, Some(d)) if !first => DeltaChoice::Given(d),
            _ => DeltaChoice::Estimate(self.rule.clone()),
        };
        let sol = optimize_digital(
            self.f_fd,
            f_rf,
            self.k_n,
            self.s_n,
            self.p_s,
            c.quant_levels,
            &choice,
            &self.opts,
            c.bisection_tol,
        )?;
        *delta = sol.delta;
        Ok(sol)
    }

    /// Re-solves the digital part on sub-carriers whose power exceeds the
    /// budget under `f_rf`, keeping the quantization step.
    fn repair(&self, f_rf: &CMatrix, f_bb: &mut CMatrix, delta: Option<f64>, mu: &mut [f64], trace: &mut SolveTrace) -> Result<()> {
        let limit = self.p_s * (1.0 + self.config.bisection_tol);
        let bad: Vec<usize> = (0..self.s_n)
            .filter(|&s| subcarrier_power(f_rf, f_bb, self.k_n, self.s_n, s) > limit)
            .collect();
        if bad.is_empty() {
            return Ok(());
        }
        let sol = match delta {
            None => optimize_digital_unquantized(self.f_fd, f_rf, self.k_n, self.s_n, self.p_s)?,
            Some(d) => optimize_digital(
                self.f_fd,
                f_rf,
                self.k_n,
                self.s_n,
                self.p_s,
                self.config.quant_levels,
                &DeltaChoice::Given(d),
                &self.opts,
                self.config.bisection_tol,
            )?,
        };
        trace.solver_stats.merge(&sol.stats);
        if sol.delta != delta {
            // the step had to shrink: every sub-carrier must use the new grid
            *f_bb = sol.f_bb;
            mu.copy_from_slice(&sol.mu);
            trace.delta_shrinks += sol.delta_shrinks;
            trace.repaired_subcarriers = (0..self.s_n).collect();
            return Ok(());
        }
        for &s in &bad {
            for k in 0..self.k_n {
                let col = k * self.s_n + s;
                f_bb.set_column(col, &sol.f_bb.column(col).clone_owned());
            }
            mu[s] = sol.mu[s];
        }
        trace.repaired_subcarriers = bad;
        Ok(())
    }
}

struct Iterate {
    objective: f64,
    f_rf: CMatrix,
    f_bb: CMatrix,
    delta: Option<f64>,
    mu: Vec<f64>,
    extra: Option<(DMatrix<u8>, Vec<Complex64>)>,
}

fn record_objective(trace: &mut SolveTrace, best: &mut Option<Iterate>, it: Iterate) {
    let obj = it.objective;
    trace.objective_per_outer_iter.push(obj);
    if best.as_ref().is_none_or(|b| obj < b.objective) {
        trace.best_iteration = trace.objective_per_outer_iter.len() - 1;
        *best = Some(it);
    }
}

fn relative_change_small(prev: Option<f64>, obj: f64, tol: f64) -> bool {
    match prev {
        Some(p) => (p - obj).abs() <= tol * p.abs().max(f64::MIN_POSITIVE),
        None => false,
    }
}

/// Alternating minimization with a fully-connected phase-shifter network.
pub fn alternate(
    f_fd: &FullyDigitalPrecoder,
    config: &SystemConfig,
    solver: SolverKind,
) -> Result<(HybridPrecoder, SolveTrace)> {
    let (init, fallback) = init_analog_svd_matrix(&f_fd.f_fd, config.m_rf)?;
    let (hp, mut trace) = alternate_with_init(f_fd, config, solver, init)?;
    trace.init_fallback = fallback;
    Ok((hp, trace))
}

/// [`alternate`] from a caller-supplied `N_T × M_T` starting analog matrix.
pub fn alternate_with_init(
    f_fd: &FullyDigitalPrecoder,
    config: &SystemConfig,
    solver: SolverKind,
    init: CMatrix,
) -> Result<(HybridPrecoder, SolveTrace)> {
    let p = DesignProblem::new(f_fd, config, solver)?;
    if init.shape() != (config.n_tx, config.m_rf) {
        return Err(Error::param("initial analog matrix has the wrong shape"));
    }
    let analog_alphabet = Alphabet::analog(config.analog_bits)?;
    let mut trace = SolveTrace::default();
    let mut f_rf = init;
    let mut delta = None;
    let mut best: Option<Iterate> = None;
    for it in 0..config.outer_max_iter {
        let t0 = Instant::now();
        let dig = p.digital(&f_rf, &mut delta, it == 0)?;
        trace.digital_time += t0.elapsed();
        trace.solver_stats.merge(&dig.stats);
        trace.delta_shrinks += dig.delta_shrinks;
        trace.inner_bisection_iters.push(dig.bisection_iters.iter().sum());

        let t1 = Instant::now();
        let (rf, stats) = optimize_analog(p.f_fd, &dig.f_bb, &p.opts, &analog_alphabet)?;
        trace.analog_time += t1.elapsed();
        trace.solver_stats.merge(&stats);
        f_rf = rf;

        let objective = (p.f_fd - &f_rf * &dig.f_bb).norm_squared();
        let prev = trace.objective_per_outer_iter.last().copied();
        record_objective(
            &mut trace,
            &mut best,
            Iterate {
                objective,
                f_rf: f_rf.clone(),
                f_bb: dig.f_bb,
                delta: dig.delta,
                mu: dig.mu,
                extra: None,
            },
        );
        if relative_change_small(prev, objective, config.outer_tol) {
            trace.converged = true;
            break;
        }
    }
    let mut b = best.expect("at least one outer iteration");
    let t0 = Instant::now();
    p.repair(&b.f_rf, &mut b.f_bb, b.delta, &mut b.mu, &mut trace)?;
    trace.digital_time += t0.elapsed();
    trace.final_objective = (p.f_fd - &b.f_rf * &b.f_bb).norm_squared();
    trace.mu_per_subcarrier = b.mu;
    Ok((
        HybridPrecoder {
            f_rf: b.f_rf,
            f_bb: b.f_bb,
            delta: b.delta,
            mode: PrecoderMode::FullyConnected,
            switch: None,
            phase_diag: None,
            n_users: p.k_n,
            n_subcarriers: p.s_n,
        },
        trace,
    ))
}

/// `‖a - B x‖²` for a single antenna row.
fn row_residual(a: &CVector, b: &CMatrix, x: &[Complex64]) -> f64 {
    linalg::residual_sq(a, b, x)
}

/// Binary switch update with the phases fixed; repaired so that every RF
/// chain is connected and no two chains share the same antenna set.
pub fn optimize_switch(
    f_fd: &CMatrix,
    phase_diag: &[Complex64],
    f_bb: &CMatrix,
    opts: &SolverOptions,
) -> Result<(DMatrix<u8>, SolverStats)> {
    let (n_t, cols) = f_fd.shape();
    let m = f_bb.nrows();
    if phase_diag.len() != n_t || f_bb.ncols() != cols {
        return Err(Error::param("inconsistent dimensions in the switch step"));
    }
    if phase_diag.iter().any(|p| (p.norm() - 1.0).abs() > 1e-9) {
        return Err(Error::param("phase entries must have unit modulus"));
    }
    let binary = Alphabet::binary();
    let b = f_bb.transpose();
    let gram = b.adjoint() * &b;
    let (r, ridge) = factor(&gram)?;
    let bh = b.adjoint();
    let targets: Vec<CVector> = (0..n_t)
        .map(|n| f_fd.row(n).transpose() * phase_diag[n].conj())
        .collect();
    let rows: Vec<Result<SolveResult>> = (0..n_t)
        .into_par_iter()
        .map(|n| {
            let a = &targets[n];
            let ghc = &bh * a;
            solve_with(opts, &r, ridge, &gram, ghc.as_slice(), a.norm_squared(), &binary).map_err(|e| Error::Antenna {
                antenna: n,
                source: Box::new(e),
            })
        })
        .collect();
    let mut sw = DMatrix::<u8>::zeros(n_t, m);
    let mut stats = SolverStats::default();
    for (n, row) in rows.into_iter().enumerate() {
        let res = row?;
        for j in 0..m {
            sw[(n, j)] = (res.z[j].re > 0.5) as u8;
        }
        stats.record(&res);
    }
    repair_switch(&mut sw, &targets, &b)?;
    Ok((sw, stats))
}

fn switch_violation(sw: &DMatrix<u8>) -> Option<usize> {
    let m = sw.ncols();
    for j in 0..m {
        if sw.column(j).iter().all(|&v| v == 0) {
            return Some(j);
        }
        for i in 0..j {
            if sw.column(i) == sw.column(j) {
                return Some(j);
            }
        }
    }
    None
}

fn repair_switch(sw: &mut DMatrix<u8>, targets: &[CVector], b: &CMatrix) -> Result<()> {
    let (n_t, m) = sw.shape();
    let row_vec = |sw: &DMatrix<u8>, n: usize| -> Vec<Complex64> {
        (0..m).map(|j| Complex64::new(sw[(n, j)] as f64, 0.0)).collect()
    };
    for _ in 0..n_t * m {
        let Some(j) = switch_violation(sw) else {
            return Ok(());
        };
        let mut best: Option<(f64, usize)> = None;
        for n in 0..n_t {
            let before = row_residual(&targets[n], b, &row_vec(sw, n));
            sw[(n, j)] ^= 1;
            let fixes = sw.column(j).iter().any(|&v| v != 0) && (0..m).all(|i| i == j || sw.column(i) != sw.column(j));
            if fixes {
                let inc = row_residual(&targets[n], b, &row_vec(sw, n)) - before;
                if best.is_none_or(|(v, _)| inc < v) {
                    best = Some((inc, n));
                }
            }
            sw[(n, j)] ^= 1;
        }
        match best {
            Some((_, n)) => sw[(n, j)] ^= 1,
            None => break,
        }
    }
    match switch_violation(sw) {
        None => Ok(()),
        Some(_) => {
            let chains = (0..m)
                .filter(|&j| {
                    sw.column(j).iter().all(|&v| v == 0) || (0..m).any(|i| i != j && sw.column(i) == sw.column(j))
                })
                .collect();
            Err(Error::SwitchRank { chains })
        }
    }
}

/// Per-antenna one-dimensional phase scan with the switch fixed.
pub fn optimize_phase_diag(
    f_fd: &CMatrix,
    switch: &DMatrix<u8>,
    f_bb: &CMatrix,
    alphabet: &Alphabet,
) -> Result<Vec<Complex64>> {
    let (n_t, cols) = f_fd.shape();
    if switch.shape() != (n_t, f_bb.nrows()) || f_bb.ncols() != cols {
        return Err(Error::param("inconsistent dimensions in the phase step"));
    }
    let sw = switch.map(|v| Complex64::new(v as f64, 0.0));
    // column n of B̃ = F_BBᵀ F_SWᵀ is the row the n-th antenna radiates
    let bt = f_bb.transpose() * sw.transpose();
    Ok((0..n_t)
        .map(|n| {
            let mut best = (f64::INFINITY, 0);
            for (i, x) in alphabet.labels().iter().enumerate() {
                let cost: f64 = (0..cols).map(|mm| (f_fd[(n, mm)] - bt[(mm, n)] * x).norm_sqr()).sum();
                if cost < best.0 {
                    best = (cost, i);
                }
            }
            alphabet.labels()[best.1]
        })
        .collect())
}

fn dynamic_rf(phase: &[Complex64], sw: &DMatrix<u8>) -> CMatrix {
    CMatrix::from_fn(sw.nrows(), sw.ncols(), |n, j| phase[n] * sw[(n, j)] as f64)
}

/// Alternating design for the dynamic-connected network
/// `F_RF = diag(φ) F_SW`: digital, switch and phase updates in turn.
pub fn alternate_dynamic(
    f_fd: &FullyDigitalPrecoder,
    config: &SystemConfig,
    solver: SolverKind,
) -> Result<(HybridPrecoder, SolveTrace)> {
    let p = DesignProblem::new(f_fd, config, solver)?;
    let analog_alphabet = Alphabet::analog(config.analog_bits)?;
    let mut trace = SolveTrace::default();
    let (init, fallback) = init_analog_svd_matrix(p.f_fd, config.m_rf)?;
    trace.init_fallback = fallback;
    let (n_t, m) = (config.n_tx, config.m_rf);
    let mut sw = DMatrix::<u8>::from_fn(n_t, m, |n, j| (n % m == j) as u8);
    let mut phase: Vec<Complex64> = (0..n_t).map(|n| analog_alphabet.nearest(init[(n, n % m)])).collect();
    let mut delta = None;
    let mut best: Option<Iterate> = None;
    for it in 0..config.outer_max_iter {
        let f_rf = dynamic_rf(&phase, &sw);
        let t0 = Instant::now();
        let dig = p.digital(&f_rf, &mut delta, it == 0)?;
        trace.digital_time += t0.elapsed();
        trace.solver_stats.merge(&dig.stats);
        trace.delta_shrinks += dig.delta_shrinks;
        trace.inner_bisection_iters.push(dig.bisection_iters.iter().sum());

        let t1 = Instant::now();
        let (new_sw, stats) = optimize_switch(p.f_fd, &phase, &dig.f_bb, &p.opts)?;
        sw = new_sw;
        phase = optimize_phase_diag(p.f_fd, &sw, &dig.f_bb, &analog_alphabet)?;
        trace.analog_time += t1.elapsed();
        trace.solver_stats.merge(&stats);

        let f_rf = dynamic_rf(&phase, &sw);
        let objective = (p.f_fd - &f_rf * &dig.f_bb).norm_squared();
        let prev = trace.objective_per_outer_iter.last().copied();
        record_objective(
            &mut trace,
            &mut best,
            Iterate {
                objective,
                f_rf,
                f_bb: dig.f_bb,
                delta: dig.delta,
                mu: dig.mu,
                extra: Some((sw.clone(), phase.clone())),
            },
        );
        if relative_change_small(prev, objective, config.outer_tol) {
            trace.converged = true;
            break;
        }
    }
    let mut b = best.expect("at least one outer iteration");
    let t0 = Instant::now();
    p.repair(&b.f_rf, &mut b.f_bb, b.delta, &mut b.mu, &mut trace)?;
    trace.digital_time += t0.elapsed();
    trace.final_objective = (p.f_fd - &b.f_rf * &b.f_bb).norm_squared();
    trace.mu_per_subcarrier = b.mu;
    let (sw, phase) = b.extra.expect("dynamic iterate");
    Ok((
        HybridPrecoder {
            f_rf: b.f_rf,
            f_bb: b.f_bb,
            delta: b.delta,
            mode: PrecoderMode::DynamicConnected,
            switch: Some(sw),
            phase_diag: Some(phase),
            n_users: p.k_n,
            n_subcarriers: p.s_n,
        },
        trace,
    ))
}
