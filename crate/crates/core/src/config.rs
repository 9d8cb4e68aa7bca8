//! Scenario configuration.
//!
//! A configuration file is a flat JSON object. Lengths are meters, delays
//! seconds, angles degrees, powers watts; every key is optional and falls
//! back to [`ScenarioConfig::default`]. Angles are exposed in radians through
//! accessor methods.
//!
//! The stochastic defaults (delay/angular spreads, shadowing, decay, cluster
//! placement spreads) are COST-book-style values chosen for a 2 GHz NLoS
//! micro-cell; they are not verified against any published table and every
//! experiment reads them from here so they can be overridden.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SPEED_OF_LIGHT;
use crate::localization::{PatternVariant, SounderConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(rename = "_comment", skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,

    /// Half side `R` of the square cell `[-R, R]^2`.
    pub cell_half_side_m: f64,
    /// No user closer than `exclusion_fraction * R` to the BS.
    pub exclusion_fraction: f64,
    pub num_users: usize,
    pub num_antennas: usize,
    pub num_selected: usize,
    pub carrier_hz: f64,
    /// Element spacing of the ULA; half a wavelength when absent.
    pub antenna_spacing_m: Option<f64>,
    pub h_bs_m: f64,
    pub h_ms_m: f64,

    /// Expected number of visible clusters `N_C`.
    pub expected_clusters: f64,
    pub vr_radius_m: f64,
    pub vr_transition_m: f64,
    pub mpcs_per_cluster: usize,
    /// Fraction of non-local clusters that are single (the rest are twin).
    pub single_fraction: f64,
    pub bs_local_cluster: bool,

    pub delay_spread_median_s: f64,
    pub delay_spread_sigma_db: f64,
    pub angular_spread_median_deg: f64,
    pub angular_spread_sigma_db: f64,
    pub shadowing_sigma_db: f64,
    /// Cross-correlation of (shadowing, angular spread, delay spread).
    pub corr_sf_as: f64,
    pub corr_sf_ds: f64,
    pub corr_as_ds: f64,

    /// Cluster power decay `k_tau`, 1/s.
    pub decay_per_s: f64,
    /// Cut-off delay `tau_B`, given as excess over the LoS delay of the user.
    pub cutoff_excess_delay_s: f64,
    pub r_min_m: f64,
    pub sigma_r_m: f64,
    pub sigma_phi_c_deg: f64,
    pub twin_link_delay_mean_s: f64,

    pub theta_bs_deg: f64,
    pub phi_bs_deg: f64,
    pub theta_ms_deg: f64,
    pub phi_ms_deg: f64,

    pub p_total_w: f64,
    pub noise_power_w: f64,
    /// Multiply MPC amplitudes of a cluster by `sqrt(S_m)`.
    pub apply_shadowing: bool,
    /// Use the bare `1 + interference` SINR denominator instead of filtered noise.
    pub eq4_literal: bool,
    pub condition_cap: f64,

    pub eps_h: f64,
    pub eps_g: f64,
    /// Candidate `eps_g` values; an empty grid means fixed `eps_g`.
    pub eps_g_grid: Vec<f64>,
    pub activity_fraction: f64,

    pub sounder_bandwidth_hz: f64,
    pub sounder_periods: u32,
    pub sounder_pn_length: u32,
    pub sounder_snr_db: f64,
    pub sounder_side_count: u32,
    pub sounder_spacing_ratio: f64,
    pub sounder_pattern: PatternVariant,

    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            comment: None,
            cell_half_side_m: 600.0,
            exclusion_fraction: 0.1,
            num_users: 120,
            num_antennas: 64,
            num_selected: 16,
            carrier_hz: 2.0e9,
            antenna_spacing_m: None,
            h_bs_m: 5.0,
            h_ms_m: 1.5,
            expected_clusters: 3.0,
            vr_radius_m: 50.0,
            vr_transition_m: 20.0,
            mpcs_per_cluster: 6,
            single_fraction: 0.5,
            bs_local_cluster: true,
            delay_spread_median_s: 0.4e-6,
            delay_spread_sigma_db: 3.0,
            angular_spread_median_deg: 10.0,
            angular_spread_sigma_db: 3.0,
            shadowing_sigma_db: 6.0,
            corr_sf_as: -0.6,
            corr_sf_ds: -0.6,
            corr_as_ds: 0.5,
            decay_per_s: 2.0e6,
            cutoff_excess_delay_s: 2.0e-6,
            r_min_m: 20.0,
            sigma_r_m: 100.0,
            sigma_phi_c_deg: 10.0,
            twin_link_delay_mean_s: 0.3e-6,
            theta_bs_deg: 3.0,
            phi_bs_deg: 10.0,
            theta_ms_deg: 10.0,
            phi_ms_deg: 30.0,
            p_total_w: 1.0,
            noise_power_w: 1.0e-12,
            apply_shadowing: true,
            eq4_literal: false,
            condition_cap: 1.0e6,
            eps_h: 0.2,
            eps_g: 0.4,
            eps_g_grid: (1..=10).map(|i| i as f64 / 10.0).collect(),
            activity_fraction: 0.01,
            sounder_bandwidth_hz: 20.0e6,
            sounder_periods: 1,
            sounder_pn_length: 127,
            sounder_snr_db: 20.0,
            sounder_side_count: 5,
            sounder_spacing_ratio: 0.5,
            sounder_pattern: PatternVariant::AsPrinted,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn antenna_spacing(&self) -> f64 {
        self.antenna_spacing_m.unwrap_or(self.wavelength() / 2.0)
    }

    pub fn exclusion_radius(&self) -> f64 {
        self.exclusion_fraction * self.cell_half_side_m
    }

    pub fn theta_bs(&self) -> f64 {
        self.theta_bs_deg.to_radians()
    }

    pub fn phi_bs(&self) -> f64 {
        self.phi_bs_deg.to_radians()
    }

    pub fn theta_ms(&self) -> f64 {
        self.theta_ms_deg.to_radians()
    }

    pub fn phi_ms(&self) -> f64 {
        self.phi_ms_deg.to_radians()
    }

    pub fn sigma_phi_c(&self) -> f64 {
        self.sigma_phi_c_deg.to_radians()
    }

    /// Equal power per selected user, `P_t / K_s`.
    pub fn power_per_user(&self) -> f64 {
        self.p_total_w / self.num_selected as f64
    }

    /// LSP cross-correlation in (shadowing, angular spread, delay spread) order.
    pub fn lsp_correlation(&self) -> [[f64; 3]; 3] {
        [
            [1.0, self.corr_sf_as, self.corr_sf_ds],
            [self.corr_sf_as, 1.0, self.corr_as_ds],
            [self.corr_sf_ds, self.corr_as_ds, 1.0],
        ]
    }

    pub fn sounder(&self) -> SounderConfig {
        SounderConfig {
            bandwidth_hz: self.sounder_bandwidth_hz,
            periods: self.sounder_periods,
            pn_length: self.sounder_pn_length,
            snr_linear: 10f64.powf(self.sounder_snr_db / 10.0),
            antennas: self.num_antennas,
            side_count: self.sounder_side_count,
            spacing_ratio: self.sounder_spacing_ratio,
            pattern: self.sounder_pattern,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{name} must be finite and > 0, got {v}"
                )))
            }
        }
        fn nonnegative(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )))
            }
        }
        fn acute(name: &str, deg: f64) -> Result<()> {
            if deg > 0.0 && deg < 90.0 {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{name} must lie in (0, 90) degrees, got {deg}"
                )))
            }
        }

        positive("cell_half_side_m", self.cell_half_side_m)?;
        if !(0.0..1.0).contains(&self.exclusion_fraction) {
            return Err(Error::Config(
                "exclusion_fraction must lie in [0, 1)".into(),
            ));
        }
        if self.num_selected > self.num_antennas.min(self.num_users) {
            return Err(Error::Config(format!(
                "num_selected {} exceeds min(M = {}, K = {})",
                self.num_selected, self.num_antennas, self.num_users
            )));
        }
        positive("carrier_hz", self.carrier_hz)?;
        if let Some(d) = self.antenna_spacing_m {
            positive("antenna_spacing_m", d)?;
        }
        nonnegative("h_bs_m", self.h_bs_m)?;
        nonnegative("h_ms_m", self.h_ms_m)?;
        if !(self.expected_clusters >= 1.0) {
            return Err(Error::Config("expected_clusters must be >= 1".into()));
        }
        positive("vr_transition_m", self.vr_transition_m)?;
        if !(self.vr_radius_m > self.vr_transition_m) {
            return Err(Error::Config(
                "vr_radius_m must exceed vr_transition_m".into(),
            ));
        }
        if self.mpcs_per_cluster == 0 {
            return Err(Error::Config("mpcs_per_cluster must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.single_fraction) {
            return Err(Error::Config("single_fraction must lie in [0, 1]".into()));
        }
        positive("delay_spread_median_s", self.delay_spread_median_s)?;
        nonnegative("delay_spread_sigma_db", self.delay_spread_sigma_db)?;
        positive("angular_spread_median_deg", self.angular_spread_median_deg)?;
        nonnegative("angular_spread_sigma_db", self.angular_spread_sigma_db)?;
        nonnegative("shadowing_sigma_db", self.shadowing_sigma_db)?;
        crate::scenario::lsp_factor(&self.lsp_correlation())?;
        positive("decay_per_s", self.decay_per_s)?;
        positive("cutoff_excess_delay_s", self.cutoff_excess_delay_s)?;
        nonnegative("r_min_m", self.r_min_m)?;
        nonnegative("sigma_r_m", self.sigma_r_m)?;
        nonnegative("sigma_phi_c_deg", self.sigma_phi_c_deg)?;
        nonnegative("twin_link_delay_mean_s", self.twin_link_delay_mean_s)?;
        acute("theta_bs_deg", self.theta_bs_deg)?;
        acute("phi_bs_deg", self.phi_bs_deg)?;
        acute("theta_ms_deg", self.theta_ms_deg)?;
        acute("phi_ms_deg", self.phi_ms_deg)?;
        positive("p_total_w", self.p_total_w)?;
        positive("noise_power_w", self.noise_power_w)?;
        positive("condition_cap", self.condition_cap)?;
        if !(self.eps_h > 0.0 && self.eps_h <= 1.0) {
            return Err(Error::Config(format!(
                "eps_h must lie in (0, 1], got {}",
                self.eps_h
            )));
        }
        for &e in std::iter::once(&self.eps_g).chain(&self.eps_g_grid) {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::Config(format!(
                    "eps_g values must lie in (0, 1], got {e}"
                )));
            }
        }
        if !(self.activity_fraction > 0.0 && self.activity_fraction < 1.0) {
            return Err(Error::Config("activity_fraction must lie in (0, 1)".into()));
        }
        self.sounder().validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ScenarioConfig::default().validate().unwrap();
    }

    #[test]
    fn json_roundtrip_and_partial_files() {
        let cfg = ScenarioConfig::default();
        let back = ScenarioConfig::from_json_str(&cfg.to_json_pretty()).unwrap();
        assert_eq!(cfg, back);

        let partial =
            ScenarioConfig::from_json_str(r#"{"num_users": 10, "num_selected": 4}"#).unwrap();
        assert_eq!(partial.num_users, 10);
        assert_eq!(partial.num_antennas, 64);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ScenarioConfig::from_json_str(r#"{"num_userz": 10}"#).is_err());
        assert!(ScenarioConfig::from_json_str(r#"{"num_selected": 200}"#).is_err());
        assert!(ScenarioConfig::from_json_str(r#"{"vr_radius_m": 10}"#).is_err());
        assert!(ScenarioConfig::from_json_str(r#"{"eps_h": 0}"#).is_err());
        assert!(ScenarioConfig::from_json_str(r#"{"theta_bs_deg": 90}"#).is_err());
        // correlation matrix that is not PSD
        assert!(ScenarioConfig::from_json_str(
            r#"{"corr_sf_as": 0.9, "corr_sf_ds": 0.9, "corr_as_ds": -0.9}"#
        )
        .is_err());
    }

    #[test]
    fn derived_quantities() {
        let cfg = ScenarioConfig::default();
        assert!((cfg.wavelength() - 0.149_896_229).abs() < 1e-9);
        assert_eq!(cfg.antenna_spacing(), cfg.wavelength() / 2.0);
        assert!((cfg.exclusion_radius() - 60.0).abs() < 1e-12);
        assert!((cfg.sounder().snr_linear - 100.0).abs() < 1e-9);
    }
}
