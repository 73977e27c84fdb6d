//! Uplink scenarios: users' channel gains, power budgets and rate weights,
//! plus the unit conversions and random user drops used by the experiments.
//!
//! Everything is in SI units: linear gains, watts, hertz, W/Hz.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Converts a power in dBm to watts.
pub fn dbm_to_watt(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

pub fn watt_to_dbm(p_w: f64) -> f64 {
    10.0 * p_w.log10() + 30.0
}

/// Linear channel power gain for the log-distance model
/// `128.1 + 37.6 log10(d_km)` dB plus `shadow_db` of extra loss.
pub fn channel_gain(d_km: f64, shadow_db: f64) -> Result<f64> {
    if !(d_km > 0.0) || !d_km.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "distance must be positive and finite, got {d_km} km"
        )));
    }
    let loss_db = 128.1 + 37.6 * d_km.log10() + shadow_db;
    Ok(10f64.powf(-loss_db / 10.0))
}

/// Mixes a base seed with an index (SplitMix64 finalizer) so that every
/// trial, start or order gets an independent, reproducible stream.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One uplink user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserParams {
    /// Linear channel power gain to the base station.
    #[serde(rename = "gain")]
    pub h: f64,
    /// Maximum transmit power in watts.
    #[serde(rename = "p_max_w")]
    pub p_max: f64,
    /// Proportional rate weight.
    #[serde(rename = "weight")]
    pub d: f64,
}

impl UserParams {
    pub fn new(h: f64, p_max: f64, d: f64) -> Result<Self> {
        for (name, v) in [("gain", h), ("p_max", p_max), ("weight", d)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidScenario(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(Self { h, p_max, d })
    }

    /// Received power `h * P` at full budget.
    pub fn received_power(&self) -> f64 {
        self.h * self.p_max
    }
}

#[derive(Deserialize)]
struct ScenarioDoc {
    users: Vec<UserParams>,
    bandwidth_hz: f64,
    noise_psd_w_per_hz: f64,
}

/// A validated single-cell uplink scenario. Weights always sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioDoc")]
pub struct Scenario {
    users: Vec<UserParams>,
    bandwidth_hz: f64,
    noise_psd_w_per_hz: f64,
    #[serde(skip)]
    noise_floor: f64,
}

impl TryFrom<ScenarioDoc> for Scenario {
    type Error = Error;

    fn try_from(doc: ScenarioDoc) -> Result<Self> {
        Scenario::new(doc.users, doc.bandwidth_hz, doc.noise_psd_w_per_hz)
    }
}

impl Scenario {
    /// Builds a scenario, rejecting nonpositive parameters and normalizing the
    /// rate weights so that they sum to one.
    pub fn new(users: Vec<UserParams>, bandwidth_hz: f64, noise_psd_w_per_hz: f64) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::InvalidScenario("at least one user is required".into()));
        }
        if !(bandwidth_hz > 0.0) || !bandwidth_hz.is_finite() {
            return Err(Error::InvalidScenario(format!(
                "bandwidth must be positive, got {bandwidth_hz}"
            )));
        }
        if !(noise_psd_w_per_hz > 0.0) || !noise_psd_w_per_hz.is_finite() {
            return Err(Error::InvalidScenario(format!(
                "noise density must be positive, got {noise_psd_w_per_hz}"
            )));
        }
        let mut users = users
            .into_iter()
            .map(|u| UserParams::new(u.h, u.p_max, u.d))
            .collect::<Result<Vec<_>>>()?;
        let total: f64 = users.iter().map(|u| u.d).sum();
        for u in &mut users {
            u.d /= total;
        }
        let noise_floor = noise_psd_w_per_hz * bandwidth_hz;
        Ok(Self {
            users,
            bandwidth_hz,
            noise_psd_w_per_hz,
            noise_floor,
        })
    }

    /// Convenience constructor from parallel slices.
    pub fn from_parts(
        gains: &[f64],
        p_max: &[f64],
        weights: &[f64],
        bandwidth_hz: f64,
        noise_psd_w_per_hz: f64,
    ) -> Result<Self> {
        if gains.len() != p_max.len() || gains.len() != weights.len() {
            return Err(Error::InvalidScenario(format!(
                "length mismatch: {} gains, {} powers, {} weights",
                gains.len(),
                p_max.len(),
                weights.len()
            )));
        }
        let users = gains
            .iter()
            .zip(p_max)
            .zip(weights)
            .map(|((&h, &p), &d)| UserParams { h, p_max: p, d })
            .collect();
        Scenario::new(users, bandwidth_hz, noise_psd_w_per_hz)
    }

    pub fn users(&self) -> &[UserParams] {
        &self.users
    }

    pub fn user(&self, k: usize) -> &UserParams {
        &self.users[k]
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    pub fn noise_psd_w_per_hz(&self) -> f64 {
        self.noise_psd_w_per_hz
    }

    /// Noise power over the whole band, `sigma^2 * B`.
    pub fn noise_floor(&self) -> f64 {
        self.noise_floor
    }

    pub fn weights(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.d).collect()
    }

    /// Full-band, full-power SNR of user `k`.
    pub fn snr(&self, k: usize) -> f64 {
        self.users[k].received_power() / self.noise_floor
    }

    /// Single-user capacity `B log2(1 + h P / (sigma^2 B))`.
    pub fn single_user_capacity(&self, k: usize) -> f64 {
        self.bandwidth_hz * self.snr(k).ln_1p() / std::f64::consts::LN_2
    }

    /// Same channels and budgets with new rate weights (normalized).
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::InvalidScenario(format!(
                "{} weights for {} users",
                weights.len(),
                self.len()
            )));
        }
        let users = self
            .users
            .iter()
            .zip(weights)
            .map(|(u, &d)| UserParams { d, ..*u })
            .collect();
        Scenario::new(users, self.bandwidth_hz, self.noise_psd_w_per_hz)
    }

    /// Same scenario with every user's budget set to `p_max` watts.
    pub fn with_power(&self, p_max: f64) -> Result<Self> {
        let users = self.users.iter().map(|u| UserParams { p_max, ..*u }).collect();
        Scenario::new(users, self.bandwidth_hz, self.noise_psd_w_per_hz)
    }

    pub fn with_bandwidth(&self, bandwidth_hz: f64) -> Result<Self> {
        Scenario::new(self.users.clone(), bandwidth_hz, self.noise_psd_w_per_hz)
    }

    /// Sub-scenario restricted to `indices`, weights renormalized.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let users = indices
            .iter()
            .map(|&i| {
                self.users.get(i).copied().ok_or(Error::UserIndex {
                    index: i,
                    users: self.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Scenario::new(users, self.bandwidth_hz, self.noise_psd_w_per_hz)
    }
}

/// Geometry and randomness of a user drop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropConfig {
    pub area_side_m: f64,
    pub k: usize,
    pub shadow_std_db: f64,
    pub seed: u64,
    pub min_dist_m: f64,
}

impl DropConfig {
    /// 500 m square, 8 dB shadowing, 1 m distance floor.
    pub fn table_defaults(k: usize, seed: u64) -> Self {
        Self {
            area_side_m: 500.0,
            k,
            shadow_std_db: 8.0,
            seed,
            min_dist_m: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.area_side_m > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "area side must be positive, got {}",
                self.area_side_m
            )));
        }
        if !(self.min_dist_m > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "distance floor must be positive, got {}",
                self.min_dist_m
            )));
        }
        if !(self.shadow_std_db >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "shadowing std must be nonnegative, got {}",
                self.shadow_std_db
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("a drop needs at least one user".into()));
        }
        Ok(())
    }

    /// Gain of a user at `(x, y)` meters inside the square, with the base
    /// station at the center.
    pub fn gain_at(&self, x_m: f64, y_m: f64, shadow_db: f64) -> Result<f64> {
        let c = self.area_side_m / 2.0;
        let dist_m = (x_m - c).hypot(y_m - c).max(self.min_dist_m);
        channel_gain(dist_m / 1000.0, shadow_db)
    }
}

/// Per-user quantities shared by every user of a drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkDefaults {
    pub p_max_w: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_w_per_hz: f64,
    /// Rate weights; `None` means equal weights.
    pub weights: Option<Vec<f64>>,
}

impl LinkDefaults {
    /// 1 dBm budget, 1 MHz, -174 dBm/Hz, equal weights.
    pub fn table_defaults() -> Self {
        Self {
            p_max_w: dbm_to_watt(1.0),
            bandwidth_hz: 1e6,
            noise_psd_w_per_hz: dbm_to_watt(-174.0),
            weights: None,
        }
    }
}

/// Drops `cfg.k` users uniformly in the square around the base station and
/// draws one lognormal shadowing value per user. Deterministic in `cfg.seed`.
pub fn drop_users(cfg: &DropConfig, defaults: &LinkDefaults) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shadow = if cfg.shadow_std_db > 0.0 {
        Some(Normal::new(0.0, cfg.shadow_std_db).map_err(|e| Error::InvalidArgument(e.to_string()))?)
    } else {
        None
    };
    let weights = match &defaults.weights {
        Some(w) if w.len() == cfg.k => w.clone(),
        Some(w) => {
            return Err(Error::InvalidScenario(format!(
                "{} weights for a drop of {} users",
                w.len(),
                cfg.k
            )))
        }
        None => vec![1.0; cfg.k],
    };
    let mut users = Vec::with_capacity(cfg.k);
    for &d in &weights {
        let x = rng.gen::<f64>() * cfg.area_side_m;
        let y = rng.gen::<f64>() * cfg.area_side_m;
        let s = shadow.map_or(0.0, |n| n.sample(&mut rng));
        users.push(UserParams {
            h: cfg.gain_at(x, y, s)?,
            p_max: defaults.p_max_w,
            d,
        });
    }
    Scenario::new(users, defaults.bandwidth_hz, defaults.noise_psd_w_per_hz)
}
