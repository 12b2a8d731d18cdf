//! Fixtures shared by the criterion benches.

use lrhp::channel::draw_channel;
use lrhp::wmmse::{wmmse_fully_digital, FullyDigitalPrecoder};
use lrhp::SystemConfig;

/// Reduced system used by the design benches.
pub fn bench_config(m_rf: usize) -> SystemConfig {
    SystemConfig {
        n_tx: 32,
        n_subcarriers: 16,
        m_rf,
        ..SystemConfig::default()
    }
}

/// Fully-digital target for trial `trial` of `config`.
pub fn target(config: &SystemConfig, trial: u64) -> FullyDigitalPrecoder {
    let ch = draw_channel(config, trial).expect("valid config");
    wmmse_fully_digital(
        &ch,
        config.subcarrier_power_mw(),
        config.noise_power_mw(),
        config.wmmse_tol,
        config.wmmse_max_iter,
    )
    .expect("wmmse")
    .0
}
