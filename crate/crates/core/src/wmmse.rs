//! Fully-digital WMMSE precoding and the rate/MSE metrics.
//!
//! Channels act by plain transpose: user `k` on sub-carrier `s` receives
//! `h_k[:,s]ᵀ f`. The WMMSE loop therefore works with `conj(h_k)` as the
//! effective matched direction.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::{CMatrix, CVector};

/// Infinite-resolution precoder, same column layout as the channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FullyDigitalPrecoder {
    pub f_fd: CMatrix,
    pub n_users: usize,
    pub n_subcarriers: usize,
}

impl FullyDigitalPrecoder {
    pub fn column(&self, k: usize, s: usize) -> nalgebra::DVectorView<'_, Complex64> {
        self.f_fd.column(k * self.n_subcarriers + s)
    }

    /// `Σ_k ‖f_k[:,s]‖²`.
    pub fn subcarrier_power(&self, s: usize) -> f64 {
        (0..self.n_users).map(|k| self.column(k, s).norm_squared()).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WmmseTrace {
    /// Sum rate (bits/s/Hz) of each sub-carrier before each precoder update
    /// and after the last one.
    pub utility_per_subcarrier: Vec<Vec<f64>>,
    pub truncated: bool,
}

impl WmmseTrace {
    pub fn iterations(&self) -> usize {
        self.utility_per_subcarrier.iter().map(|t| t.len().saturating_sub(1)).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// `K × S`, bits/s/Hz.
    pub per_user_per_subcarrier_rate: DMatrix<f64>,
    pub sum_rate_per_subcarrier_avg: f64,
    pub total_sum_rate: f64,
}

fn check_dims(h: &ChannelSet, f: &CMatrix) -> Result<()> {
    if f.shape() != h.h.shape() {
        return Err(Error::param(format!(
            "precoder shape {:?} does not match channel shape {:?}",
            f.shape(),
            h.h.shape()
        )));
    }
    Ok(())
}

fn apply(h: &ChannelSet, f: &CMatrix, k: usize, i: usize, s: usize) -> Complex64 {
    h.column(k, s).iter().zip(f.column(i * h.n_subcarriers + s).iter()).map(|(a, b)| a * b).sum()
}

/// SINR of user `k` on sub-carrier `s` for the effective precoder `f`.
pub fn sinr(h: &ChannelSet, f: &CMatrix, k: usize, s: usize, n0: f64) -> Result<f64> {
    check_dims(h, f)?;
    if !(n0 > 0.0) {
        return Err(Error::param("noise power must be positive"));
    }
    let signal = apply(h, f, k, k, s).norm_sqr();
    let interference: f64 = (0..h.n_users)
        .filter(|&i| i != k)
        .map(|i| apply(h, f, k, i, s).norm_sqr())
        .sum();
    Ok(signal / (interference + n0))
}

pub fn sum_rate(h: &ChannelSet, f: &CMatrix, n0: f64) -> Result<RateReport> {
    check_dims(h, f)?;
    let (k_n, s_n) = (h.n_users, h.n_subcarriers);
    let mut rates = DMatrix::zeros(k_n, s_n);
    for k in 0..k_n {
        for s in 0..s_n {
            rates[(k, s)] = (1.0 + sinr(h, f, k, s, n0)?).log2();
        }
    }
    let total = rates.sum();
    Ok(RateReport {
        per_user_per_subcarrier_rate: rates,
        sum_rate_per_subcarrier_avg: total / s_n as f64,
        total_sum_rate: total,
    })
}

/// `‖F_FD - F_RF F_BB‖_F²`.
pub fn mse_to_target(f_fd: &CMatrix, f_rf: &CMatrix, f_bb: &CMatrix) -> Result<f64> {
    if f_rf.ncols() != f_bb.nrows() || f_rf.nrows() != f_fd.nrows() || f_bb.ncols() != f_fd.ncols() {
        return Err(Error::param("inconsistent dimensions in mse_to_target"));
    }
    Ok((f_fd - f_rf * f_bb).norm_squared())
}

/// Per sub-carrier WMMSE state: the active users' matched directions.
struct SubcarrierProblem {
    /// `conj(h_k)` for the active users, `N_T × K_a`.
    hc: CMatrix,
    /// Indices of the users whose channel is nonzero.
    active: Vec<usize>,
    gram: CMatrix,
    p_s: f64,
    n0: f64,
}

impl SubcarrierProblem {
    /// Per-user `(signal, total received power)` for `F = hc · x`.
    fn receive(&self, x: &CMatrix) -> CMatrix {
        // Q[k, i] = h_kᵀ f_i = conj(h_k)ᴴ f_i, with f = hc x
        &self.gram * x
    }

    fn rate(&self, x: &CMatrix) -> f64 {
        let q = self.receive(x);
        let ka = self.active.len();
        (0..ka)
            .map(|k| {
                let total: f64 = (0..ka).map(|i| q[(k, i)].norm_sqr()).sum::<f64>() + self.n0;
                let sig = q[(k, k)].norm_sqr();
                (total / (total - sig)).log2()
            })
            .sum()
    }

    fn power(&self, x: &CMatrix) -> f64 {
        (x.adjoint() * &self.gram * x).trace().re
    }

    fn update(&self, x: &CMatrix) -> CMatrix {
        let q = self.receive(x);
        let ka = self.active.len();
        let mut wu2 = vec![0.0; ka];
        let mut d = CMatrix::zeros(ka, ka);
        for k in 0..ka {
            let total: f64 = (0..ka).map(|i| q[(k, i)].norm_sqr()).sum::<f64>() + self.n0;
            let u = q[(k, k)].conj() / total;
            let e = 1.0 - (u * q[(k, k)]).re;
            let w = 1.0 / e;
            wu2[k] = w * u.norm_sqr();
            d[(k, k)] = u.conj() * w;
        }
        let solve = |mu: f64| -> Option<CMatrix> {
            let mut a = CMatrix::from_fn(ka, ka, |i, j| self.gram[(i, j)] * wu2[i]);
            for i in 0..ka {
                a[(i, i)] += Complex64::new(mu, 0.0);
            }
            a.lu().solve(&d).filter(|x| x.iter().all(|v| v.re.is_finite() && v.im.is_finite()))
        };
        let scale: f64 = (0..ka).map(|i| self.gram[(i, i)].re * wu2[i]).sum::<f64>().max(f64::MIN_POSITIVE);
        if let Some(x0) = solve(0.0) {
            if self.power(&x0) <= self.p_s {
                return x0;
            }
        }
        let mut hi = scale * 1e-6;
        let mut x_hi = solve(hi).expect("regularized system is invertible");
        while self.power(&x_hi) > self.p_s {
            hi *= 2.0;
            x_hi = solve(hi).expect("regularized system is invertible");
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            if hi - lo <= 1e-15 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let x_mid = match solve(mid) {
                Some(x) => x,
                None => {
                    lo = mid;
                    continue;
                }
            };
            if self.power(&x_mid) > self.p_s {
                lo = mid;
            } else {
                hi = mid;
                x_hi = x_mid;
            }
        }
        x_hi
    }
}

/// Sum-rate maximizing fully-digital precoder, one WMMSE loop per sub-carrier.
///
/// Starts from matched filtering at full power and stops when the relative
/// sum-rate change drops below `tol`. The best iterate is returned; hitting
/// `max_iter` sets the trace's truncation flag.
pub fn wmmse_fully_digital(
    h: &ChannelSet,
    p_s: f64,
    n0: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(FullyDigitalPrecoder, WmmseTrace)> {
    if !(p_s > 0.0) || !(n0 > 0.0) {
        return Err(Error::param("WMMSE needs positive power budget and noise"));
    }
    let (n_t, k_n, s_n) = (h.n_tx(), h.n_users, h.n_subcarriers);
    let mut f_fd = CMatrix::zeros(n_t, k_n * s_n);
    let mut trace = WmmseTrace::default();
    for s in 0..s_n {
        let active: Vec<usize> = (0..k_n).filter(|&k| h.column(k, s).norm_squared() > 0.0).collect();
        if active.is_empty() {
            trace.utility_per_subcarrier.push(vec![0.0]);
            continue;
        }
        let hc = CMatrix::from_fn(n_t, active.len(), |n, j| h.column(active[j], s)[n].conj());
        let gram = hc.adjoint() * &hc;
        let problem = SubcarrierProblem {
            hc,
            active,
            gram,
            p_s,
            n0,
        };
        let ka = problem.active.len();
        // matched filter: f_k = sqrt(p_s/K_a) conj(h_k)/‖h_k‖
        let mut x = CMatrix::zeros(ka, ka);
        for k in 0..ka {
            x[(k, k)] = Complex64::new((p_s / ka as f64).sqrt() / problem.gram[(k, k)].re.sqrt(), 0.0);
        }
        let mut utility = vec![problem.rate(&x)];
        let mut best = (utility[0], x.clone());
        let mut converged = false;
        for _ in 0..max_iter {
            x = problem.update(&x);
            let u = problem.rate(&x);
            let prev = *utility.last().expect("nonempty");
            utility.push(u);
            if u > best.0 {
                best = (u, x.clone());
            }
            if (u - prev).abs() <= tol * prev.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        if !converged {
            trace.truncated = true;
        }
        let f_s = &problem.hc * &best.1;
        for (j, &k) in problem.active.iter().enumerate() {
            f_fd.set_column(k * s_n + s, &CVector::from_iterator(n_t, f_s.column(j).iter().copied()));
        }
        trace.utility_per_subcarrier.push(utility);
    }
    Ok((
        FullyDigitalPrecoder {
            f_fd,
            n_users: k_n,
            n_subcarriers: s_n,
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::stream_rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_channel(n_t: usize, k: usize, s: usize, seed: u64) -> ChannelSet {
        let mut rng = stream_rng(seed, 0, 0);
        let h = CMatrix::from_fn(n_t, k * s, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        });
        ChannelSet::from_matrix(h, k, s).unwrap()
    }

    /// Independent re-evaluation of the SINR formula with explicit loops.
    fn sinr_oracle(h: &CMatrix, f: &CMatrix, k: usize, s: usize, k_n: usize, s_n: usize, n0: f64) -> f64 {
        let gain = |user: usize, stream: usize| {
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 0..h.nrows() {
                acc += h[(n, user * s_n + s)] * f[(n, stream * s_n + s)];
            }
            acc.norm_sqr()
        };
        let mut interf = 0.0;
        for i in 0..k_n {
            if i != k {
                interf += gain(k, i);
            }
        }
        gain(k, k) / (interf + n0)
    }

    #[test]
    fn sinr_matches_oracle() {
        let h = random_channel(5, 3, 2, 11);
        let f = random_channel(5, 3, 2, 12).h;
        for k in 0..3 {
            for s in 0..2 {
                let a = sinr(&h, &f, k, s, 0.3).unwrap();
                let b = sinr_oracle(&h.h, &f, k, s, 3, 2, 0.3);
                assert!((a - b).abs() <= 1e-12 * b.max(1.0));
            }
        }
    }

    #[test]
    fn sinr_single_user_and_orthogonal() {
        let h = random_channel(4, 1, 1, 3);
        let f = random_channel(4, 1, 1, 4).h;
        let hf: Complex64 = h.h.column(0).iter().zip(f.column(0).iter()).map(|(a, b)| a * b).sum();
        assert!((sinr(&h, &f, 0, 0, 0.5).unwrap() - hf.norm_sqr() / 0.5).abs() < 1e-12);
        // f orthogonal to conj(h): f = [h1, -h0, 0, 0]
        let mut g = CMatrix::zeros(4, 1);
        g[(0, 0)] = h.h[(1, 0)];
        g[(1, 0)] = -h.h[(0, 0)];
        assert!(sinr(&h, &g, 0, 0, 1.0).unwrap() < 1e-24);
    }

    #[test]
    fn zero_precoder_zero_rate() {
        let h = random_channel(4, 2, 3, 5);
        let r = sum_rate(&h, &CMatrix::zeros(4, 6), 1.0).unwrap();
        assert_eq!(r.total_sum_rate, 0.0);
        assert_eq!(r.sum_rate_per_subcarrier_avg, 0.0);
    }

    #[test]
    fn mse_examples() {
        let fd = random_channel(4, 2, 3, 6).h;
        let rf = random_channel(4, 1, 2, 7).h;
        let bb = random_channel(2, 2, 3, 8).h;
        assert_eq!(mse_to_target(&(&rf * &bb), &rf, &bb).unwrap(), 0.0);
        assert_eq!(mse_to_target(&fd, &rf, &CMatrix::zeros(2, 6)).unwrap(), fd.norm_squared());
        let prod = &rf * &bb;
        let mut naive = 0.0;
        for i in 0..4 {
            for j in 0..6 {
                naive += (fd[(i, j)] - prod[(i, j)]).norm_sqr();
            }
        }
        assert!((mse_to_target(&fd, &rf, &bb).unwrap() - naive).abs() < 1e-12 * naive);
    }

    #[test]
    fn single_user_is_mrt() {
        let h = random_channel(6, 1, 1, 9);
        let (p, n0) = (2.0, 0.1);
        let (fd, _) = wmmse_fully_digital(&h, p, n0, 1e-4, 200).unwrap();
        let rate = sum_rate(&h, &fd.f_fd, n0).unwrap().total_sum_rate;
        let closed = (1.0 + p * h.h.column(0).norm_squared() / n0).log2();
        assert!((rate - closed).abs() <= 1e-6 * closed);
        // collinear with conj(h)
        let hc: Vec<Complex64> = h.h.column(0).iter().map(|x| x.conj()).collect();
        let inner: Complex64 = hc.iter().zip(fd.f_fd.column(0).iter()).map(|(a, b)| a.conj() * b).sum();
        assert!((inner.norm() - p.sqrt() * h.h.column(0).norm()).abs() < 1e-9);
    }

    #[test]
    fn zero_channel_user_gets_nothing() {
        let mut h = random_channel(6, 2, 2, 10);
        h.h.column_mut(1 * 2 + 1).fill(Complex64::new(0.0, 0.0));
        let (fd, _) = wmmse_fully_digital(&h, 1.0, 0.1, 1e-4, 200).unwrap();
        assert_eq!(fd.column(1, 1).norm(), 0.0);
        assert!(fd.column(0, 1).norm() > 0.0);
    }

    #[test]
    fn utility_monotone_and_power_feasible() {
        for seed in 0..100 {
            let h = random_channel(6, 3, 2, 100 + seed);
            let p = 0.5 + seed as f64 * 0.05;
            let (fd, trace) = wmmse_fully_digital(&h, p, 0.2, 1e-4, 200).unwrap();
            for t in &trace.utility_per_subcarrier {
                for w in t.windows(2) {
                    assert!(w[1] >= w[0] * (1.0 - 1e-9), "seed {seed}: {} -> {}", w[0], w[1]);
                }
            }
            for s in 0..2 {
                assert!(fd.subcarrier_power(s) <= p * (1.0 + 1e-6));
            }
        }
    }

    #[test]
    fn beats_equal_power_matched_filter() {
        let mut wins = 0;
        let trials = 200;
        for seed in 0..trials {
            let h = random_channel(4, 2, 1, 1000 + seed);
            let (p, n0) = (4.0, 0.25);
            let (fd, _) = wmmse_fully_digital(&h, p, n0, 1e-4, 200).unwrap();
            let mut mf = CMatrix::zeros(4, 2);
            for k in 0..2 {
                let col = h.h.column(k);
                let scale = (p / 2.0).sqrt() / col.norm();
                for n in 0..4 {
                    mf[(n, k)] = col[n].conj() * scale;
                }
            }
            let a = sum_rate(&h, &fd.f_fd, n0).unwrap().total_sum_rate;
            let b = sum_rate(&h, &mf, n0).unwrap().total_sum_rate;
            if a >= b {
                wins += 1;
            }
        }
        assert!(wins as f64 >= 0.95 * trials as f64, "{wins}/{trials}");
    }
}
