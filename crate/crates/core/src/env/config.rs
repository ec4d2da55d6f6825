use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EnvError;

/// Physical constants, counts, bounds and the episode seed of one scenario.
///
/// Defaults without a paper value (`sigma_los_db`, `alpha`, `c1..c4`,
/// `lambda_fair`, `uav_max_speed`, `p_min_w`) are tuning knobs, not
/// measured quantities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_uavs: usize,
    pub num_gus: usize,
    pub area_half_extent: f64,
    pub altitude_range: [f64; 2],
    pub p_total_dbm: f64,
    pub b_total_hz: f64,
    pub f_c_hz: f64,
    pub n0_w_per_hz: f64,
    pub b_min_hz: f64,
    pub p_min_w: f64,
    pub sigma_los_db: f64,
    pub alpha: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub lambda_fair: f64,
    pub t_max: usize,
    pub dt_decision: f64,
    pub uav_max_speed: f64,
    pub gu_max_speed: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_uavs: 2,
            num_gus: 8,
            area_half_extent: 100.0,
            altitude_range: [10.0, 100.0],
            p_total_dbm: 10.0,
            b_total_hz: 30e6,
            f_c_hz: 2e9,
            n0_w_per_hz: 1e-17,
            b_min_hz: 0.1e6,
            p_min_w: 1e-5,
            sigma_los_db: 1.0,
            alpha: 2.0,
            c1: 0.5,
            c2: 0.5,
            c3: 0.5,
            c4: 0.5,
            lambda_fair: 0.3,
            t_max: 1000,
            dt_decision: 1.0,
            uav_max_speed: 20.0,
            gu_max_speed: 10.0,
            gamma: 0.99,
            seed: 0,
        }
    }
}

/// Named scenario sizes: `2x4` is the desk preset, the rest follow the
/// published experiments.
pub const PRESETS: &[&str] = &["2x4", "2x8", "3x9", "4x16"];

impl ScenarioConfig {
    pub fn preset(name: &str) -> Result<Self, EnvError> {
        let (m, n, t_max) = match name {
            "2x4" => (2, 4, 200),
            "2x8" => (2, 8, 1000),
            "3x9" => (3, 9, 1000),
            "4x16" => (4, 16, 1000),
            other => {
                return Err(EnvError::Config(format!(
                    "unknown preset `{other}` (expected one of {PRESETS:?})"
                )))
            }
        };
        Ok(Self {
            num_uavs: m,
            num_gus: n,
            t_max,
            ..Self::default()
        })
    }

    pub fn altitude_min(&self) -> f64 {
        self.altitude_range[0]
    }

    pub fn altitude_max(&self) -> f64 {
        self.altitude_range[1]
    }

    /// Per-UAV power budget in watts.
    pub fn p_total_w(&self) -> f64 {
        super::channel::dbm_to_w(self.p_total_dbm)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let fail = |msg: String| Err(EnvError::Config(msg));
        if self.num_uavs < 1 {
            return fail("num_uavs must be at least 1".into());
        }
        if self.num_gus < self.num_uavs {
            return fail(format!(
                "num_gus ({}) must be >= num_uavs ({})",
                self.num_gus, self.num_uavs
            ));
        }
        if (self.c1 + self.c2 - 1.0).abs() > 1e-12 || (self.c3 + self.c4 - 1.0).abs() > 1e-12 {
            return fail("mixing weights must satisfy c1 + c2 = 1 and c3 + c4 = 1".into());
        }
        if [self.c1, self.c2, self.c3, self.c4].iter().any(|c| *c < 0.0) {
            return fail("mixing weights must be nonnegative".into());
        }
        if self.b_min_hz * self.num_gus as f64 > self.b_total_hz {
            return fail("b_min_hz * num_gus exceeds b_total_hz".into());
        }
        if self.p_min_w * self.num_gus as f64 > self.p_total_w() {
            return fail("p_min_w * num_gus exceeds the power budget".into());
        }
        if self.gu_max_speed >= self.uav_max_speed {
            return fail("gu_max_speed must be below uav_max_speed".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail("gamma must lie in [0, 1]".into());
        }
        let [lo, hi] = self.altitude_range;
        if !(lo > 0.0 && lo <= hi) {
            return fail(format!("altitude_range [{lo}, {hi}] must satisfy 0 < min <= max"));
        }
        if self.area_half_extent <= 0.0 || self.dt_decision <= 0.0 || self.t_max == 0 {
            return fail("area_half_extent, dt_decision and t_max must be positive".into());
        }
        if self.b_total_hz <= 0.0 || self.f_c_hz <= 0.0 || self.n0_w_per_hz <= 0.0 {
            return fail("bandwidth, carrier frequency and noise density must be positive".into());
        }
        if self.gu_max_speed < 0.0 || self.alpha < 0.0 || self.lambda_fair < 0.0 {
            return fail("speeds, alpha and lambda_fair must be nonnegative".into());
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self, EnvError> {
        let cfg: Self = toml::from_str(s).map_err(|e| EnvError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn load(path: &Path) -> Result<Self, EnvError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ScenarioConfig::default().validate().unwrap();
        for p in PRESETS {
            ScenarioConfig::preset(p).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn preset_2x8() {
        let c = ScenarioConfig::preset("2x8").unwrap();
        assert_eq!((c.num_uavs, c.num_gus), (2, 8));
        assert!(ScenarioConfig::preset("9x9").is_err());
    }

    #[test]
    fn invariants_checked() {
        let bad = [
            ScenarioConfig { num_uavs: 0, ..Default::default() },
            ScenarioConfig { num_gus: 1, ..Default::default() },
            ScenarioConfig { c1: 0.6, ..Default::default() },
            ScenarioConfig { b_min_hz: 5e6, ..Default::default() },
            ScenarioConfig { gu_max_speed: 25.0, ..Default::default() },
            ScenarioConfig { gamma: 1.5, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn toml_roundtrip_and_unknown_keys() {
        let c = ScenarioConfig::preset("3x9").unwrap();
        let back = ScenarioConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, back);
        let extra = format!("{}\nwarp_drive = true\n", c.to_toml_string());
        assert!(ScenarioConfig::from_toml_str(&extra).is_err());
    }
}
