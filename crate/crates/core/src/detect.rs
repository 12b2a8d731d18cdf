//! Finite-alphabet least-squares solvers for `min ‖c - G z‖²`.
//!
//! Three solvers share one result type: an exhaustive oracle, a depth-first
//! Schnorr-Euchner sphere decoder on a triangularized system, and
//! expectation propagation. All are generic over real and complex data via
//! [`Field`]; the real path is used for realified digital subproblems.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::alphabets::Alphabet;
use crate::error::{Error, Result};
use crate::linalg::{self, Field};
use crate::{CMatrix, CVector};

/// Enumeration guard for [`brute_force_ml`].
pub const BRUTE_FORCE_LIMIT: u64 = 1 << 24;

const VARIANCE_FLOOR: f64 = 1e-12;
const PRECISION_FLOOR: f64 = 1e-8;
const CAVITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Sesd,
    Ep,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Sesd => "sesd",
            SolverKind::Ep => "ep",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult<T: Field = Complex64> {
    pub z: Vec<T>,
    /// Label index of every entry of `z`.
    pub indices: Vec<usize>,
    pub objective: f64,
    pub nodes_visited: u64,
    pub iterations: usize,
    pub wall_time: Duration,
    /// Set when a node or iteration budget ended the search early.
    pub truncated: bool,
    /// Diagonal loading applied to the Gram matrix, 0 if none.
    pub ridge: f64,
}

/// `‖d - r z‖² + constant_offset` form of a least-squares problem.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangularSystem<T: Field = Complex64> {
    pub r: DMatrix<T>,
    pub d: DVector<T>,
    pub constant_offset: f64,
    pub ridge: f64,
}

impl<T: Field> TriangularSystem<T> {
    /// Builds the system from a precomputed factor `r` (with `rᴴr = GᴴG + ridge·I`),
    /// the correlation `Gᴴc` and `‖c‖²`.
    pub fn from_factor(r: DMatrix<T>, ghc: &[T], c_norm2: f64, ridge: f64) -> Self {
        let d = DVector::from_vec(linalg::solve_upper_adjoint(&r, ghc));
        let constant_offset = c_norm2 - d.norm_squared();
        TriangularSystem {
            r,
            d,
            constant_offset,
            ridge,
        }
    }

    pub fn dim(&self) -> usize {
        self.r.nrows()
    }

    /// `‖d - r z‖²` without the offset.
    pub fn partial_objective(&self, z: &[T]) -> f64 {
        linalg::residual_sq(&self.d, &self.r, z)
    }

    pub fn objective(&self, z: &[T]) -> f64 {
        self.partial_objective(z) + self.constant_offset
    }
}

impl TriangularSystem<Complex64> {
    /// Equivalent real system of twice the dimension, re-triangularized so the
    /// sphere decoder can run on it. Unknowns are ordered `[Re z; Im z]`.
    pub fn to_real(&self) -> Result<TriangularSystem<f64>> {
        let (dr, rr) = realify(&self.d, &self.r);
        let gram = rr.transpose() * &rr;
        let ghc = rr.transpose() * &dr;
        let r = linalg::cholesky_upper(gram).ok_or_else(|| Error::SingularGram {
            suggested_ridge: 0.0,
        })?;
        let mut sys = TriangularSystem::from_factor(r, ghc.as_slice(), dr.norm_squared(), self.ridge);
        sys.constant_offset += self.constant_offset;
        Ok(sys)
    }
}

/// Triangularizes `‖c - g z‖²` through the Cholesky factor of `gᴴg + ridge·I`.
///
/// With `ridge = 0` a failed factorization returns [`Error::SingularGram`]
/// carrying a suggested loading.
pub fn prepare_triangular<T: Field>(g: &DMatrix<T>, c: &DVector<T>, ridge: f64) -> Result<TriangularSystem<T>> {
    if g.nrows() == 0 || g.ncols() == 0 {
        return Err(Error::param("empty system"));
    }
    if c.len() != g.nrows() {
        return Err(Error::param(format!("c has length {}, expected {}", c.len(), g.nrows())));
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::param("ridge must be a nonnegative finite number"));
    }
    let mut gram = g.adjoint() * g;
    for i in 0..gram.nrows() {
        gram[(i, i)] += T::from_real(ridge);
    }
    let suggested = linalg::default_ridge(&gram);
    let r = linalg::cholesky_upper(gram).ok_or(Error::SingularGram {
        suggested_ridge: suggested,
    })?;
    let ghc = g.adjoint() * c;
    let c_norm2 = c.norm_squared();
    Ok(TriangularSystem::from_factor(r, ghc.as_slice(), c_norm2, ridge))
}

/// [`prepare_triangular`] with automatic diagonal loading on failure.
pub fn prepare_triangular_auto<T: Field>(g: &DMatrix<T>, c: &DVector<T>) -> Result<TriangularSystem<T>> {
    let mut ridge = 0.0;
    for _ in 0..8 {
        match prepare_triangular(g, c, ridge) {
            Err(Error::SingularGram { suggested_ridge }) => {
                ridge = if ridge == 0.0 { suggested_ridge } else { ridge * 100.0 };
            }
            other => return other,
        }
    }
    prepare_triangular(g, c, ridge)
}

/// Stacked `[Re; Im]` vector and `[[Re, -Im], [Im, Re]]` matrix.
pub fn realify(d: &CVector, r: &CMatrix) -> (DVector<f64>, DMatrix<f64>) {
    (linalg::realify_vector(d), linalg::realify_matrix(r))
}

fn labels_as<T: Field>(alphabet: &Alphabet) -> Result<Vec<T>> {
    if alphabet.is_empty() {
        return Err(Error::param("alphabet is empty"));
    }
    let labels: Vec<T> = alphabet.labels().iter().map(|&l| T::from_complex(l)).collect();
    for (l, t) in alphabet.labels().iter().zip(&labels) {
        if (t.to_complex() - l).norm() > 0.0 {
            return Err(Error::param("complex alphabet used on a real-valued problem"));
        }
    }
    Ok(labels)
}

fn nearest<T: Field>(labels: &[T], v: T) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, l) in labels.iter().enumerate() {
        let d = (*l - v).modulus_squared();
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Exhaustive minimizer; ties go to the lexicographically smallest index vector.
pub fn brute_force_ml<T: Field>(c: &DVector<T>, g: &DMatrix<T>, alphabet: &Alphabet) -> Result<SolveResult<T>> {
    let start = Instant::now();
    let labels = labels_as::<T>(alphabet)?;
    let (n, m) = g.shape();
    if c.len() != n || m == 0 {
        return Err(Error::param("inconsistent dimensions"));
    }
    let size = (labels.len() as f64).powi(m as i32);
    if size > BRUTE_FORCE_LIMIT as f64 {
        return Err(Error::SearchSpaceTooLarge {
            size,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let q = labels.len();
    let mut idx = vec![0usize; m];
    let z0: Vec<T> = vec![labels[0]; m];
    let mut resid: Vec<T> = (0..n).map(|i| c[i] - (0..m).map(|j| g[(i, j)] * z0[j]).fold(T::zero(), |a, b| a + b)).collect();
    let mut best_idx = idx.clone();
    let mut best = resid.iter().map(|x| x.modulus_squared()).sum::<f64>();
    let mut visited = 1u64;
    loop {
        // odometer with the last entry fastest gives lexicographic order
        for j in (0..m).rev() {
            let old = labels[idx[j]];
            idx[j] = (idx[j] + 1) % q;
            let delta = old - labels[idx[j]];
            for i in 0..n {
                resid[i] += g[(i, j)] * delta;
            }
            if idx[j] != 0 {
                break;
            }
        }
        if idx.iter().all(|&i| i == 0) {
            break;
        }
        visited += 1;
        let cost: f64 = resid.iter().map(|x| x.modulus_squared()).sum();
        if cost < best {
            best = cost;
            best_idx.copy_from_slice(&idx);
        }
    }
    let z: Vec<T> = best_idx.iter().map(|&i| labels[i]).collect();
    Ok(SolveResult {
        objective: linalg::residual_sq(c, g, &z),
        z,
        indices: best_idx,
        nodes_visited: visited,
        iterations: 0,
        wall_time: start.elapsed(),
        truncated: false,
        ridge: 0.0,
    })
}

struct Sesd<'a, T: Field> {
    sys: &'a TriangularSystem<T>,
    labels: &'a [T],
    z: Vec<T>,
    idx: Vec<usize>,
    best_idx: Vec<usize>,
    radius: f64,
    nodes: u64,
    max_nodes: u64,
    truncated: bool,
    order: Vec<Vec<(f64, usize)>>,
}

impl<T: Field> Sesd<'_, T> {
    fn search(&mut self, level: usize, partial: f64) {
        let r = &self.sys.r;
        let m = r.nrows();
        let mut acc = self.sys.d[level];
        for j in level + 1..m {
            acc -= r[(level, j)] * self.z[j];
        }
        let rii = r[(level, level)];
        let y = acc / rii;
        let rii2 = rii.modulus_squared();
        let mut order = std::mem::take(&mut self.order[level]);
        order.clear();
        order.extend(self.labels.iter().enumerate().map(|(i, l)| ((*l - y).modulus_squared(), i)));
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(dist, i) in &order {
            let cost = partial + rii2 * dist;
            if cost >= self.radius {
                break;
            }
            if self.nodes >= self.max_nodes {
                self.truncated = true;
                break;
            }
            self.nodes += 1;
            self.z[level] = self.labels[i];
            self.idx[level] = i;
            if level == 0 {
                self.radius = cost;
                self.best_idx.copy_from_slice(&self.idx);
            } else {
                self.search(level - 1, cost);
            }
            if self.truncated {
                break;
            }
        }
        self.order[level] = order;
    }
}

/// Exact minimizer of `‖d - r z‖²` by Schnorr-Euchner enumeration.
pub fn sesd_solve<T: Field>(sys: &TriangularSystem<T>, alphabet: &Alphabet) -> Result<SolveResult<T>> {
    sesd_solve_limited(sys, alphabet, None)
}

/// [`sesd_solve`] with an optional node budget; the incumbent is returned
/// with `truncated` set when the budget runs out.
pub fn sesd_solve_limited<T: Field>(
    sys: &TriangularSystem<T>,
    alphabet: &Alphabet,
    max_nodes: Option<u64>,
) -> Result<SolveResult<T>> {
    let start = Instant::now();
    let labels = labels_as::<T>(alphabet)?;
    let m = sys.dim();
    if m == 0 || sys.d.len() != m || sys.r.ncols() != m {
        return Err(Error::param("inconsistent triangular system"));
    }
    let x = linalg::solve_upper(&sys.r, sys.d.as_slice());
    let inc_idx: Vec<usize> = x.iter().map(|v| nearest(&labels, *v)).collect();
    let inc_z: Vec<T> = inc_idx.iter().map(|&i| labels[i]).collect();
    let radius = sys.partial_objective(&inc_z);
    let mut state = Sesd {
        sys,
        labels: &labels,
        z: inc_z.clone(),
        idx: inc_idx.clone(),
        best_idx: inc_idx,
        radius: if radius.is_finite() { radius } else { f64::INFINITY },
        nodes: 0,
        max_nodes: max_nodes.unwrap_or(u64::MAX),
        truncated: false,
        order: vec![Vec::with_capacity(labels.len()); m],
    };
    state.search(m - 1, 0.0);
    let z: Vec<T> = state.best_idx.iter().map(|&i| labels[i]).collect();
    Ok(SolveResult {
        objective: sys.objective(&z),
        z,
        indices: state.best_idx,
        nodes_visited: state.nodes,
        iterations: 0,
        wall_time: start.elapsed(),
        truncated: state.truncated,
        ridge: sys.ridge,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpOptions {
    /// Weight on the previous iterate in the parameter update.
    pub damping: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for EpOptions {
    fn default() -> Self {
        EpOptions {
            damping: 0.0,
            max_iter: 30,
            tol: 1e-4,
        }
    }
}

/// Sufficient statistics of `‖c - G z‖²`: `GᴴG`, `Gᴴc` and `‖c‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpProblem<T: Field = Complex64> {
    pub gram: DMatrix<T>,
    pub ghc: DVector<T>,
    pub c_norm2: f64,
}

impl<T: Field> EpProblem<T> {
    pub fn new(c: &DVector<T>, g: &DMatrix<T>) -> Result<Self> {
        if c.len() != g.nrows() || g.ncols() == 0 {
            return Err(Error::param("inconsistent dimensions"));
        }
        Ok(EpProblem {
            gram: g.adjoint() * g,
            ghc: g.adjoint() * c,
            c_norm2: c.norm_squared(),
        })
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    /// `‖c - G z‖²` evaluated through the Gram form.
    pub fn objective(&self, z: &[T]) -> f64 {
        let zv = DVector::from_column_slice(z);
        let cross = zv.dotc(&self.ghc).real();
        let quad = zv.dotc(&(&self.gram * &zv)).real();
        (self.c_norm2 - 2.0 * cross + quad).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EPState<T: Field = Complex64> {
    pub lambda: Vec<f64>,
    pub gamma: Vec<T>,
    pub sigma: DMatrix<T>,
    pub mu: Vec<T>,
    pub sigma2_hat: f64,
    pub zeta: Vec<f64>,
    pub nu: Vec<T>,
    pub rho: Vec<T>,
    pub omega: Vec<f64>,
    pub iteration: usize,
}

fn moments<T: Field>(p: &EpProblem<T>, sigma2: f64, lambda: &[f64], gamma: &[T]) -> Option<(DMatrix<T>, Vec<T>)> {
    let m = p.dim();
    let inv = T::from_real(1.0 / sigma2);
    let mut prec = p.gram.map(|x| x * inv);
    for i in 0..m {
        prec[(i, i)] += T::from_real(lambda[i]);
    }
    let chol = nalgebra::Cholesky::new(prec)?;
    let sigma = chol.inverse();
    let rhs = DVector::from_fn(m, |i, _| p.ghc[i] * inv + gamma[i]);
    let mu = (&sigma * rhs).iter().copied().collect::<Vec<T>>();
    let finite = sigma.iter().chain(mu.iter()).all(|x| x.to_complex().re.is_finite() && x.to_complex().im.is_finite());
    finite.then_some((sigma, mu))
}

/// Expectation-propagation solver on `‖c - g z‖²`.
pub fn ep_solve<T: Field>(
    c: &DVector<T>,
    g: &DMatrix<T>,
    alphabet: &Alphabet,
    damping: f64,
    max_iter: usize,
    tol: f64,
) -> Result<SolveResult<T>> {
    let problem = EpProblem::new(c, g)?;
    let opts = EpOptions {
        damping,
        max_iter,
        tol,
    };
    let (mut res, _) = ep_solve_problem(&problem, alphabet, &opts)?;
    res.objective = linalg::residual_sq(c, g, &res.z);
    Ok(res)
}

/// EP on a problem given by its Gram form. The reported objective is the
/// Gram-form value; the best hard decision across all iterates is returned
/// together with the final state.
pub fn ep_solve_problem<T: Field>(
    p: &EpProblem<T>,
    alphabet: &Alphabet,
    opts: &EpOptions,
) -> Result<(SolveResult<T>, EPState<T>)> {
    let start = Instant::now();
    let alpha = opts.damping;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::param("damping must lie in [0, 1]"));
    }
    let labels = labels_as::<T>(alphabet)?;
    let m = p.dim();
    if m == 0 {
        return Err(Error::param("empty system"));
    }
    let kappa = T::GAUSS_SCALE;
    let label_energy = labels.iter().map(|l| l.modulus_squared()).sum::<f64>() / labels.len() as f64;
    let trace: f64 = p.gram.diagonal().iter().map(|d| d.real()).sum();
    let scale = p.c_norm2.max(trace * label_energy) / m as f64;
    let sigma2_floor = if scale > 0.0 && scale.is_finite() { VARIANCE_FLOOR * scale } else { VARIANCE_FLOOR };

    let fail = |iteration: usize, reason: &str| Error::NumericalFailure {
        iteration,
        reason: reason.to_string(),
    };
    let mut lambda = vec![1.0; m];
    let mut gamma = vec![T::zero(); m];
    let mut sigma2 = 1.0;
    let (mut sigma, mut mu) = moments(p, sigma2, &lambda, &gamma).ok_or_else(|| fail(0, "posterior covariance"))?;

    let hard = |mu: &[T]| -> (Vec<usize>, Vec<T>) {
        let idx: Vec<usize> = mu.iter().map(|v| nearest(&labels, *v)).collect();
        let z = idx.iter().map(|&i| labels[i]).collect();
        (idx, z)
    };
    let (idx, z) = hard(&mu);
    let mut best = (p.objective(&z), idx, z);

    let mut zeta = vec![0.0; m];
    let mut nu = vec![T::zero(); m];
    let mut rho = vec![T::zero(); m];
    let mut omega = vec![0.0; m];
    let mut logp = vec![0.0; labels.len()];
    let mut iterations = 0;
    let mut converged = opts.max_iter == 0;
    for t in 1..=opts.max_iter {
        iterations = t;
        for i in 0..m {
            let s = sigma[(i, i)].real();
            let denom = (1.0 - s * lambda[i]).max(CAVITY_FLOOR);
            zeta[i] = s / denom;
            nu[i] = (mu[i] * T::from_real(1.0 / s) - gamma[i]) * T::from_real(zeta[i]);

            let mut top = f64::NEG_INFINITY;
            for (lp, l) in logp.iter_mut().zip(&labels) {
                *lp = -kappa * (*l - nu[i]).modulus_squared() / zeta[i];
                top = top.max(*lp);
            }
            let mut total = 0.0;
            for lp in logp.iter_mut() {
                *lp = (*lp - top).exp();
                total += *lp;
            }
            let mut mean = T::zero();
            for (w, l) in logp.iter().zip(&labels) {
                mean += *l * T::from_real(*w / total);
            }
            let mut var = 0.0;
            for (w, l) in logp.iter().zip(&labels) {
                var += (*l - mean).modulus_squared() * *w / total;
            }
            rho[i] = mean;
            omega[i] = var.max(VARIANCE_FLOOR);

            let mut lam_new = 1.0 / omega[i] - 1.0 / zeta[i];
            let mut gam_new = rho[i] * T::from_real(1.0 / omega[i]) - nu[i] * T::from_real(1.0 / zeta[i]);
            if lam_new <= 0.0 {
                lam_new = PRECISION_FLOOR;
                gam_new = gamma[i];
            }
            lambda[i] = (1.0 - alpha) * lam_new + alpha * lambda[i];
            gamma[i] = gam_new * T::from_real(1.0 - alpha) + gamma[i] * T::from_real(alpha);
            if !lambda[i].is_finite() || !gamma[i].to_complex().re.is_finite() || !gamma[i].to_complex().im.is_finite() {
                return Err(fail(t, "site parameters"));
            }
        }
        sigma2 = (p.objective(&rho) / m as f64).max(sigma2_floor);
        if !sigma2.is_finite() {
            return Err(fail(t, "error variance"));
        }
        let (sigma_new, mu_new) = moments(p, sigma2, &lambda, &gamma).ok_or_else(|| fail(t, "posterior covariance"))?;

        let (idx, z) = hard(&mu_new);
        let obj = p.objective(&z);
        if obj < best.0 {
            best = (obj, idx, z);
        }

        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..m {
            num += (mu_new[i] - mu[i]).modulus_squared();
            num += (sigma_new[(i, i)].real() - sigma[(i, i)].real()).powi(2);
            den += mu[i].modulus_squared() + sigma[(i, i)].real().powi(2);
        }
        sigma = sigma_new;
        mu = mu_new;
        if num <= tol_sq(opts.tol) * den {
            converged = true;
            break;
        }
    }
    let state = EPState {
        lambda,
        gamma,
        sigma,
        mu,
        sigma2_hat: sigma2,
        zeta,
        nu,
        rho,
        omega,
        iteration: iterations,
    };
    let (objective, indices, z) = best;
    Ok((
        SolveResult {
            z,
            indices,
            objective,
            nodes_visited: 0,
            iterations,
            wall_time: start.elapsed(),
            truncated: !converged,
            ridge: 0.0,
        },
        state,
    ))
}

fn tol_sq(tol: f64) -> f64 {
    tol * tol
}
