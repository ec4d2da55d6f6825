//! Line-of-sight air-to-ground link budget and Shannon rate.

use super::config::ScenarioConfig;
use super::EnvError;

pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn w_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Free-space loss at the carrier frequency plus the fixed LoS excess loss.
pub fn path_loss_db(uav_pos: [f64; 3], gu_pos: [f64; 3], cfg: &ScenarioConfig) -> Result<f64, EnvError> {
    let d = distance(uav_pos, gu_pos);
    if !(d > 0.0) {
        return Err(EnvError::Domain("path loss undefined at zero distance".into()));
    }
    Ok(free_space_loss_db(d, cfg.f_c_hz) + cfg.sigma_los_db)
}

pub fn free_space_loss_db(d: f64, f_c_hz: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * f_c_hz * d / SPEED_OF_LIGHT).log10()
}

/// Downlink rate of one UAV/GU link in bit/s.
///
/// Received power is formed in the dB domain (`P[dBm] - PL[dB]`) and
/// converted back to watts for the SNR against `n0 * B`.
pub fn link_rate_bps(
    p_alloc_w: f64,
    b_alloc_hz: f64,
    pl_db: f64,
    served: bool,
    cfg: &ScenarioConfig,
) -> Result<f64, EnvError> {
    if p_alloc_w < 0.0 || b_alloc_hz < 0.0 || p_alloc_w.is_nan() || b_alloc_hz.is_nan() {
        return Err(EnvError::Domain(format!(
            "negative allocation: power {p_alloc_w} W, bandwidth {b_alloc_hz} Hz"
        )));
    }
    if !served {
        return Ok(0.0);
    }
    if b_alloc_hz == 0.0 {
        return Err(EnvError::Domain("served link needs positive bandwidth".into()));
    }
    let p_rec_w = dbm_to_w(w_to_dbm(p_alloc_w) - pl_db);
    let snr = p_rec_w / (cfg.n0_w_per_hz * b_alloc_hz);
    Ok(b_alloc_hz * snr.ln_1p() / std::f64::consts::LN_2)
}
