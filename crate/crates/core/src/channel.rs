//! Scenario configuration, Rician multi-tap channels and link budget.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::CMatrix;

/// How the total transmit power maps onto the per-sub-carrier budget `P_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerSplit {
    /// `P_s = P / S`.
    EqualSplit,
    /// `P_s = P` on every sub-carrier.
    PerSubcarrier,
}

/// When the digital quantization step is re-estimated inside the design loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaSchedule {
    /// Re-estimate at every outer iteration.
    EveryIteration,
    /// Estimate once, at the first outer iteration, then keep it.
    FirstIteration,
}

/// All scenario constants of one simulation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub n_tx: usize,
    pub m_rf: usize,
    pub n_users: usize,
    pub n_subcarriers: usize,
    pub analog_bits: u32,
    pub quant_levels: u32,
    /// Leave the digital precoder unquantized (only the analog side is discrete).
    pub infinite_resolution_digital: bool,
    pub total_power_dbm: f64,
    pub power_split: PowerSplit,
    pub carrier_ghz: f64,
    pub noise_figure_db: f64,
    pub subcarrier_bandwidth_hz: f64,
    pub rician_k_db: f64,
    pub n_taps_minus_one: usize,
    pub distance_range_m: [f64; 2],
    pub angle_range_rad: [f64; 2],
    pub n_sym: usize,
    pub fronthaul_budget_bits_per_symbol: f64,
    /// Fixed quantization step; `None` selects the Gaussian-fit rule.
    pub delta_fixed: Option<f64>,
    pub delta_schedule: DeltaSchedule,
    pub ep_damping: f64,
    pub ep_max_iter: usize,
    pub ep_tol: f64,
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    pub bisection_tol: f64,
    pub wmmse_tol: f64,
    pub wmmse_max_iter: usize,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_tx: 64,
            m_rf: 8,
            n_users: 2,
            n_subcarriers: 64,
            analog_bits: 1,
            quant_levels: 2,
            infinite_resolution_digital: false,
            total_power_dbm: 35.0,
            power_split: PowerSplit::EqualSplit,
            carrier_ghz: 28.0,
            noise_figure_db: 10.0,
            subcarrier_bandwidth_hz: 10e6,
            rician_k_db: 10.0,
            n_taps_minus_one: 3,
            distance_range_m: [100.0, 200.0],
            angle_range_rad: [-PI / 3.0, PI / 3.0],
            n_sym: 140,
            fronthaul_budget_bits_per_symbol: 15.0,
            delta_fixed: None,
            delta_schedule: DeltaSchedule::EveryIteration,
            ep_damping: 0.0,
            ep_max_iter: 30,
            ep_tol: 1e-4,
            outer_tol: 0.01,
            outer_max_iter: 50,
            bisection_tol: 1e-3,
            wmmse_tol: 1e-4,
            wmmse_max_iter: 200,
            seed: 1,
        }
    }
}

impl SystemConfig {
    /// Reduced dimensions for quick runs: 16 antennas, 8 sub-carriers.
    pub fn desk() -> Self {
        Self {
            n_tx: 16,
            n_subcarriers: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.n_users >= 1 && self.n_users <= self.m_rf && self.m_rf < self.n_tx) {
            return bad(format!(
                "need 1 <= K <= M_T < N_T, got K={}, M_T={}, N_T={}",
                self.n_users, self.m_rf, self.n_tx
            ));
        }
        if self.n_subcarriers == 0 {
            return bad("n_subcarriers must be at least 1".into());
        }
        if self.n_users * self.n_subcarriers < self.m_rf {
            return bad(format!(
                "K*S = {} must be at least M_T = {}",
                self.n_users * self.n_subcarriers,
                self.m_rf
            ));
        }
        if !(1..=16).contains(&self.analog_bits) {
            return bad(format!("analog_bits {} outside 1..=16", self.analog_bits));
        }
        if self.quant_levels < 2 || !self.quant_levels.is_power_of_two() {
            return bad(format!("quant_levels {} must be a power of two >= 2", self.quant_levels));
        }
        let positive = [
            ("carrier_ghz", self.carrier_ghz),
            ("subcarrier_bandwidth_hz", self.subcarrier_bandwidth_hz),
            ("outer_tol", self.outer_tol),
            ("bisection_tol", self.bisection_tol),
            ("ep_tol", self.ep_tol),
            ("wmmse_tol", self.wmmse_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !self.total_power_dbm.is_finite() || !self.noise_figure_db.is_finite() {
            return bad("power and noise figure must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.ep_damping) {
            return bad(format!("ep_damping {} outside [0, 1]", self.ep_damping));
        }
        let [d0, d1] = self.distance_range_m;
        if !(d0 > 0.0 && d1 >= d0) {
            return bad(format!("invalid distance range {:?}", self.distance_range_m));
        }
        let [a0, a1] = self.angle_range_rad;
        if !(a0.is_finite() && a1 >= a0) {
            return bad(format!("invalid angle range {:?}", self.angle_range_rad));
        }
        if self.n_sym == 0 || self.outer_max_iter == 0 || self.wmmse_max_iter == 0 {
            return bad("iteration and symbol counts must be positive".into());
        }
        if let Some(d) = self.delta_fixed {
            if !(d > 0.0 && d.is_finite()) {
                return bad(format!("delta_fixed must be positive, got {d}"));
            }
        }
        Ok(())
    }

    pub fn rician_k_linear(&self) -> f64 {
        db_to_linear(self.rician_k_db)
    }

    pub fn total_power_mw(&self) -> f64 {
        db_to_linear(self.total_power_dbm)
    }

    /// Per-sub-carrier power budget `P_s` in mW.
    pub fn subcarrier_power_mw(&self) -> f64 {
        match self.power_split {
            PowerSplit::EqualSplit => self.total_power_mw() / self.n_subcarriers as f64,
            PowerSplit::PerSubcarrier => self.total_power_mw(),
        }
    }

    pub fn noise_power_mw(&self) -> f64 {
        db_to_linear(noise_power_dbm(self))
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Frequency-domain channel of all users on all sub-carriers.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// `N_T × (K·S)`, user-major: column `k·S + s`.
    pub h: CMatrix,
    pub n_users: usize,
    pub n_subcarriers: usize,
    pub user_distances_m: Vec<f64>,
    pub user_angles_rad: Vec<f64>,
}

impl ChannelSet {
    pub fn from_matrix(h: CMatrix, n_users: usize, n_subcarriers: usize) -> Result<Self> {
        if h.ncols() != n_users * n_subcarriers {
            return Err(Error::param(format!(
                "channel has {} columns, expected K*S = {}",
                h.ncols(),
                n_users * n_subcarriers
            )));
        }
        Ok(Self {
            h,
            n_users,
            n_subcarriers,
            user_distances_m: vec![f64::NAN; n_users],
            user_angles_rad: vec![f64::NAN; n_users],
        })
    }

    pub fn n_tx(&self) -> usize {
        self.h.nrows()
    }

    /// Channel of user `k` on sub-carrier `s`.
    pub fn column(&self, k: usize, s: usize) -> nalgebra::DVectorView<'_, Complex64> {
        self.h.column(k * self.n_subcarriers + s)
    }

    /// `h_k`, `N_T × S`.
    pub fn user(&self, k: usize) -> CMatrix {
        self.h.columns(k * self.n_subcarriers, self.n_subcarriers).into_owned()
    }
}

/// Uniform-linear-array response with half-wavelength spacing.
pub fn array_response(angle: f64, n: usize) -> Vec<Complex64> {
    let phase = PI * angle.sin();
    (0..n).map(|m| Complex64::from_polar(1.0, phase * m as f64)).collect()
}

/// 3GPP path loss `22 log10(d) + 28 + 20 log10(f_c)` in dB.
pub fn path_loss_db(distance_m: f64, carrier_ghz: f64) -> Result<f64> {
    if !(distance_m > 0.0 && carrier_ghz > 0.0) {
        return Err(Error::param(format!(
            "path loss needs positive distance and frequency, got {distance_m} m, {carrier_ghz} GHz"
        )));
    }
    Ok(22.0 * distance_m.log10() + 28.0 + 20.0 * carrier_ghz.log10())
}

/// Thermal noise power per sub-carrier in dBm.
pub fn noise_power_dbm(config: &SystemConfig) -> f64 {
    -174.0 + 10.0 * config.subcarrier_bandwidth_hz.log10() + config.noise_figure_db
}

/// Stream index reserved for per-trial draws that belong to no user.
pub const AUX_STREAM: u64 = 0xFFFF;

/// Independent counter-based random stream for `(seed, trial, stream)`.
///
/// Each trial/user pair gets its own ChaCha stream, so results do not depend on
/// the order in which trials are executed.
pub fn stream_rng(seed: u64, trial: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream((trial << 16) | (stream & 0xFFFF));
    rng
}

fn complex_normal<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Time-domain taps of one user: tap 0 is line-of-sight, the rest i.i.d. Rayleigh.
fn draw_user_taps(config: &SystemConfig, rng: &mut ChaCha12Rng) -> Result<(f64, f64, Vec<Vec<Complex64>>)> {
    let [d0, d1] = config.distance_range_m;
    let [a0, a1] = config.angle_range_rad;
    let distance = if d1 > d0 { rng.random_range(d0..=d1) } else { d0 };
    let angle = if a1 > a0 { rng.random_range(a0..a1) } else { a0 };
    let beta = db_to_linear(-path_loss_db(distance, config.carrier_ghz)?);
    let kappa = config.rician_k_linear();
    let los = (kappa / (kappa + 1.0)).sqrt() * beta.sqrt();
    let nlos = (1.0 / (kappa + 1.0)).sqrt() * beta.sqrt();
    let mut taps = Vec::with_capacity(config.n_taps_minus_one + 1);
    taps.push(array_response(angle, config.n_tx).into_iter().map(|a| a * los).collect());
    for _ in 0..config.n_taps_minus_one {
        taps.push((0..config.n_tx).map(|_| complex_normal(rng) * nlos).collect());
    }
    Ok((distance, angle, taps))
}

/// Sums taps into sub-carrier columns: `H[:, s] = Σ_ℓ tap_ℓ e^{-j2πℓs/S}`.
pub fn taps_to_frequency(taps: &[Vec<Complex64>], n_subcarriers: usize) -> CMatrix {
    let n_tx = taps.first().map_or(0, Vec::len);
    CMatrix::from_fn(n_tx, n_subcarriers, |n, s| {
        taps.iter()
            .enumerate()
            .map(|(l, tap)| {
                let ang = -2.0 * PI * ((l * s) % n_subcarriers) as f64 / n_subcarriers as f64;
                tap[n] * Complex64::from_polar(1.0, ang)
            })
            .sum()
    })
}

/// Draws the channel of one Monte Carlo trial.
pub fn draw_channel(config: &SystemConfig, trial: u64) -> Result<ChannelSet> {
    let (k, s) = (config.n_users, config.n_subcarriers);
    let mut h = CMatrix::zeros(config.n_tx, k * s);
    let mut distances = Vec::with_capacity(k);
    let mut angles = Vec::with_capacity(k);
    for user in 0..k {
        let mut rng = stream_rng(config.seed, trial, user as u64);
        let (d, a, taps) = draw_user_taps(config, &mut rng)?;
        h.columns_mut(user * s, s).copy_from(&taps_to_frequency(&taps, s));
        distances.push(d);
        angles.push(a);
    }
    Ok(ChannelSet {
        h,
        n_users: k,
        n_subcarriers: s,
        user_distances_m: distances,
        user_angles_rad: angles,
    })
}

/// Fronthaul load of the separate data/precoder transmission versus sending
/// precoded samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkBudget {
    pub data_bits_per_symbol: f64,
    pub precoder_update_bits_per_symbol: f64,
    pub proposed_total: f64,
    pub conventional_total: f64,
    pub iq_bits: u32,
    /// Largest `log2(L)` that fits the configured fronthaul budget.
    pub max_levels_log2: f64,
}

impl LinkBudget {
    /// Largest power-of-two level count allowed by the budget, if any.
    pub fn max_levels(&self) -> Option<u32> {
        let bits = self.max_levels_log2.floor();
        (bits >= 1.0).then(|| 1u32 << (bits.min(31.0) as u32))
    }
}

pub fn fronthaul_accounting(config: &SystemConfig, modulation_order: u32, iq_bits: u32) -> Result<LinkBudget> {
    if modulation_order == 0 || iq_bits == 0 || config.n_sym == 0 {
        return Err(Error::param("fronthaul accounting needs positive counts"));
    }
    let (m, k, s) = (config.m_rf as f64, config.n_users as f64, config.n_subcarriers as f64);
    let nsym = config.n_sym as f64;
    let update = 2.0 * (config.quant_levels as f64).log2() * m * k * s / nsym;
    let data = k * s * (modulation_order as f64).log2();
    Ok(LinkBudget {
        data_bits_per_symbol: data,
        precoder_update_bits_per_symbol: update,
        proposed_total: data + update,
        conventional_total: s * m * iq_bits as f64,
        iq_bits,
        max_levels_log2: config.fronthaul_budget_bits_per_symbol * nsym / (2.0 * m * k * s),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_config(levels: u32) -> SystemConfig {
        SystemConfig {
            m_rf: 8,
            n_users: 2,
            n_subcarriers: 64,
            n_sym: 140,
            quant_levels: levels,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn array_response_values() {
        assert!(array_response(0.0, 4).iter().all(|a| (a - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let a = array_response(PI / 2.0, 2);
        assert!((a[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
        let norm: f64 = array_response(0.77, 33).iter().map(|x| x.norm_sqr()).sum();
        assert!((norm - 33.0).abs() < 1e-12);
    }

    #[test]
    fn path_loss_values() {
        assert!((path_loss_db(150.0, 28.0).unwrap() - 104.81).abs() < 0.01);
        assert_eq!(path_loss_db(1.0, 1.0).unwrap(), 28.0);
        // 44 + 28 + 20 log10(28) = 100.9431
        assert!((path_loss_db(100.0, 28.0).unwrap() - 100.9431).abs() < 1e-4);
        assert!(path_loss_db(0.0, 28.0).is_err());
        assert!(path_loss_db(10.0, -1.0).is_err());
    }

    #[test]
    fn noise_power_values() {
        assert_eq!(noise_power_dbm(&SystemConfig::default()), -94.0);
        let one_hz = SystemConfig {
            subcarrier_bandwidth_hz: 1.0,
            noise_figure_db: 0.0,
            ..SystemConfig::default()
        };
        assert_eq!(noise_power_dbm(&one_hz), -174.0);
        let wide = SystemConfig {
            subcarrier_bandwidth_hz: 20e6,
            ..SystemConfig::default()
        };
        assert!((noise_power_dbm(&wide) + 90.9897).abs() < 1e-4);
    }

    #[test]
    fn fronthaul_examples() {
        let b = fronthaul_accounting(&example_config(2), 16, 12).unwrap();
        assert!((b.precoder_update_bits_per_symbol - 14.63).abs() < 0.005);
        assert!((b.proposed_total - 526.63).abs() < 0.005);
        assert_eq!(b.conventional_total, 6144.0);
        let b4 = fronthaul_accounting(&example_config(4), 16, 12).unwrap();
        assert!((b4.proposed_total - 541.26).abs() < 0.005);
    }

    #[test]
    fn fronthaul_level_bound() {
        for (budget, levels) in [(15.0, 2), (30.0, 4)] {
            let cfg = SystemConfig {
                fronthaul_budget_bits_per_symbol: budget,
                ..example_config(2)
            };
            assert_eq!(fronthaul_accounting(&cfg, 16, 12).unwrap().max_levels(), Some(levels));
        }
    }

    #[test]
    fn level_bound_iff_update_fits() {
        // boundary: budget exactly equal to the update rate of L
        for levels in [2u32, 4, 8] {
            let cfg = example_config(levels);
            let need = fronthaul_accounting(&cfg, 4, 12).unwrap().precoder_update_bits_per_symbol;
            for budget in [need * (1.0 - 1e-9), need, need * (1.0 + 1e-9)] {
                let cfg = SystemConfig {
                    fronthaul_budget_bits_per_symbol: budget,
                    ..cfg.clone()
                };
                let b = fronthaul_accounting(&cfg, 4, 12).unwrap();
                let fits_levels = (levels as f64).log2() <= b.max_levels_log2 * (1.0 + 1e-12);
                let fits_rate = b.precoder_update_bits_per_symbol <= budget * (1.0 + 1e-12);
                assert_eq!(fits_levels, fits_rate, "L={levels}, budget={budget}");
            }
        }
    }

    #[test]
    fn single_subcarrier_sums_taps() {
        let taps = vec![
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.0)],
            vec![Complex64::new(0.5, -0.5), Complex64::new(1.0, 1.0)],
        ];
        let h = taps_to_frequency(&taps, 1);
        assert_eq!(h[(0, 0)], Complex64::new(1.5, -0.5));
        assert_eq!(h[(1, 0)], Complex64::new(1.0, 3.0));
    }

    #[test]
    fn frequency_conversion_is_linear() {
        let cfg = SystemConfig::desk();
        let mut rng = stream_rng(3, 0, 0);
        let (_, _, taps) = draw_user_taps(&cfg, &mut rng).unwrap();
        let scaled: Vec<Vec<Complex64>> = taps.iter().map(|t| t.iter().map(|x| x * 2.5).collect()).collect();
        let a = taps_to_frequency(&taps, 8) * Complex64::new(2.5, 0.0);
        let b = taps_to_frequency(&scaled, 8);
        assert!((&a - &b).norm() < 1e-12 * b.norm());
    }

    #[test]
    fn strong_los_is_collinear_with_array() {
        let cfg = SystemConfig {
            rician_k_db: 300.0,
            ..SystemConfig::desk()
        };
        let ch = draw_channel(&cfg, 0).unwrap();
        for k in 0..cfg.n_users {
            let a = array_response(ch.user_angles_rad[k], cfg.n_tx);
            for s in 0..cfg.n_subcarriers {
                let col = ch.column(k, s);
                let inner: Complex64 = a.iter().zip(col.iter()).map(|(x, y)| x.conj() * y).sum();
                let cos = inner.norm() / (col.norm() * (cfg.n_tx as f64).sqrt());
                assert!((cos - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn draw_is_reproducible() {
        let cfg = SystemConfig::desk();
        assert_eq!(draw_channel(&cfg, 4).unwrap(), draw_channel(&cfg, 4).unwrap());
        assert_ne!(draw_channel(&cfg, 4).unwrap().h, draw_channel(&cfg, 5).unwrap().h);
    }

    #[test]
    fn mean_subcarrier_energy() {
        // E‖H_k[:,s]‖² = N_T β (κ + T)/(κ + 1), fixed distance so β is constant
        let cfg = SystemConfig {
            n_tx: 8,
            m_rf: 2,
            n_users: 1,
            n_subcarriers: 4,
            distance_range_m: [150.0, 150.0],
            ..SystemConfig::default()
        };
        let beta = db_to_linear(-path_loss_db(150.0, 28.0).unwrap());
        let kappa = cfg.rician_k_linear();
        let expected = cfg.n_tx as f64 * beta * (kappa + 3.0) / (kappa + 1.0);
        let trials = 10_000;
        let mut acc = 0.0;
        for t in 0..trials {
            let ch = draw_channel(&cfg, t).unwrap();
            acc += ch.column(0, 1).norm_squared();
        }
        let mean = acc / trials as f64;
        assert!((mean / expected - 1.0).abs() < 0.03, "{mean} vs {expected}");
    }

    #[test]
    fn config_validation() {
        assert!(SystemConfig::default().validate().is_ok());
        let bad = SystemConfig {
            m_rf: 64,
            ..SystemConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SystemConfig {
            ep_damping: 1.5,
            ..SystemConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SystemConfig {
            quant_levels: 3,
            ..SystemConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn subcarrier_power_split() {
        let cfg = SystemConfig::default();
        assert!((cfg.subcarrier_power_mw() * 64.0 - cfg.total_power_mw()).abs() < 1e-9);
        let per = SystemConfig {
            power_split: PowerSplit::PerSubcarrier,
            ..cfg
        };
        assert_eq!(per.subcarrier_power_mw(), per.total_power_mw());
    }
}
