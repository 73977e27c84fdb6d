//! Capacity-region arithmetic: subset-sum constraints, the closed-form
//! optimum under proportional rates, and the two-user region boundaries of
//! every multiple access scheme.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rsma::{DecodingOrder, PowerSplit};
use crate::scenario::Scenario;
use crate::special::{bandwidth_fraction_for_rate, rate_on_fraction};

/// Largest user count for the `2^K - 1` subset enumeration.
pub const MAX_SUBSET_USERS: usize = 25;

/// Per-user rates (bits/s) and their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateAllocation {
    pub rates: Vec<f64>,
    pub sum: f64,
}

impl RateAllocation {
    pub fn from_rates(rates: Vec<f64>) -> Self {
        let sum = rates.iter().sum();
        Self { rates, sum }
    }

    /// `r_k = D_k * tau`.
    pub fn proportional(s: &Scenario, tau: f64) -> Self {
        Self::from_rates(s.users().iter().map(|u| u.d * tau).collect())
    }
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / LN_2
}

fn mask_of(s: &Scenario, subset: &[usize]) -> Result<u64> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let mut mask = 0u64;
    for &k in subset {
        if k >= s.len() || k >= 64 {
            return Err(Error::UserIndex {
                index: k,
                users: s.len(),
            });
        }
        mask |= 1 << k;
    }
    Ok(mask)
}

fn users_of(mask: u64) -> Vec<usize> {
    (0..64).filter(|k| mask >> k & 1 == 1).collect()
}

fn mask_capacity(s: &Scenario, mask: u64) -> f64 {
    let rx: f64 = users_of(mask).iter().map(|&k| s.user(k).received_power()).sum();
    s.bandwidth_hz() * log2_1p(rx / s.noise_floor())
}

/// Sum capacity of a user subset, `B log2(1 + sum_k h_k P_k / (sigma^2 B))`.
pub fn subset_capacity(s: &Scenario, subset: &[usize]) -> Result<f64> {
    Ok(mask_capacity(s, mask_of(s, subset)?))
}

/// Optimal proportional-rate point of the full capacity region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsmaOptimum {
    /// Optimal sum-rate, bits/s.
    pub tau: f64,
    pub allocation: RateAllocation,
    /// Subset whose capacity constraint is tight at the optimum.
    pub binding: Vec<usize>,
}

/// Minimum of `capacity(S) / weight(S)` over the subsets whose mask has the
/// given high bits, walking the low bits in Gray-code order.
fn chunk_min(rx: &[f64], d: &[f64], noise: f64, b: f64, high: u64, low_bits: usize) -> (f64, u64) {
    let base = high << low_bits;
    let (mut sum_rx, mut sum_d) = (0.0, 0.0);
    for k in low_bits..rx.len() {
        if base >> k & 1 == 1 {
            sum_rx += rx[k];
            sum_d += d[k];
        }
    }
    let mut best = (f64::INFINITY, 0u64);
    let mut consider = |mask: u64, sum_rx: f64, sum_d: f64| {
        if mask == 0 {
            return;
        }
        let v = b * log2_1p(sum_rx / noise) / sum_d;
        if v < best.0 || (v == best.0 && mask < best.1) {
            best = (v, mask);
        }
    };
    consider(base, sum_rx, sum_d);
    let mut gray = 0u64;
    for i in 1u64..(1u64 << low_bits) {
        let bit = i.trailing_zeros() as usize;
        gray ^= 1 << bit;
        if gray >> bit & 1 == 1 {
            sum_rx += rx[bit];
            sum_d += d[bit];
        } else {
            sum_rx -= rx[bit];
            sum_d -= d[bit];
        }
        consider(base | gray, sum_rx, sum_d);
    }
    best
}

/// Closed-form optimum of the sum-rate under proportional constraints:
/// `tau* = min_S capacity(S) / sum_{k in S} D_k` over all nonempty subsets.
pub fn rsma_optimal_sum_rate(s: &Scenario) -> Result<RsmaOptimum> {
    rsma_optimal_sum_rate_with(s, Exec::default())
}

pub fn rsma_optimal_sum_rate_with(s: &Scenario, exec: Exec) -> Result<RsmaOptimum> {
    let k = s.len();
    if k > MAX_SUBSET_USERS {
        return Err(Error::TooManyUsers {
            what: "subset enumeration",
            max: MAX_SUBSET_USERS,
            got: k,
        });
    }
    let rx: Vec<f64> = s.users().iter().map(|u| u.received_power()).collect();
    let d = s.weights();
    let low_bits = k.min(12);
    let chunks = 1usize << (k - low_bits);
    let noise = s.noise_floor();
    let b = s.bandwidth_hz();
    let exec = if chunks > 1 { exec } else { Exec::Sequential };
    let (_, mask) = exec
        .map_range(chunks, |h| chunk_min(&rx, &d, noise, b, h as u64, low_bits))
        .into_iter()
        .fold((f64::INFINITY, 0u64), |best, c| {
            if c.0 < best.0 || (c.0 == best.0 && c.1 < best.1) {
                c
            } else {
                best
            }
        });
    let binding = users_of(mask);
    let weight: f64 = binding.iter().map(|&i| d[i]).sum();
    let tau = mask_capacity(s, mask) / weight;
    Ok(RsmaOptimum {
        tau,
        allocation: RateAllocation::proportional(s, tau),
        binding,
    })
}

/// Smallest relative slack `(capacity(S) - sum_{k in S} r_k) / capacity(S)`
/// over all nonempty subsets, with the subset attaining it.
pub fn min_subset_slack(s: &Scenario, rates: &[f64]) -> Result<(f64, Vec<usize>)> {
    let k = s.len();
    if k > MAX_SUBSET_USERS {
        return Err(Error::TooManyUsers {
            what: "subset enumeration",
            max: MAX_SUBSET_USERS,
            got: k,
        });
    }
    if rates.len() != k {
        return Err(Error::InvalidArgument(format!("{} rates for {k} users", rates.len())));
    }
    let mut best = (f64::INFINITY, 0u64);
    for mask in 1u64..(1u64 << k) {
        let cap = mask_capacity(s, mask);
        let used: f64 = users_of(mask).iter().map(|&i| rates[i]).sum();
        let slack = (cap - used) / cap;
        if slack < best.0 {
            best = (slack, mask);
        }
    }
    Ok((best.0, users_of(best.1)))
}

fn require_two(s: &Scenario) -> Result<()> {
    if s.len() != 2 {
        return Err(Error::UserCount {
            expected: 2,
            got: s.len(),
        });
    }
    Ok(())
}

/// `(R1, R2, R_max)` from the received powers of two users.
pub fn corner_rates(rx1: f64, rx2: f64, noise_floor: f64, bandwidth_hz: f64) -> (f64, f64, f64) {
    (
        bandwidth_hz * log2_1p(rx1 / noise_floor),
        bandwidth_hz * log2_1p(rx2 / noise_floor),
        bandwidth_hz * log2_1p((rx1 + rx2) / noise_floor),
    )
}

/// Single-user capacities and the sum capacity of a two-user scenario.
pub fn two_user_corners(s: &Scenario) -> Result<(f64, f64, f64)> {
    require_two(s)?;
    Ok(corner_rates(
        s.user(0).received_power(),
        s.user(1).received_power(),
        s.noise_floor(),
        s.bandwidth_hz(),
    ))
}

/// Which face of the two-user region a boundary point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCase {
    User1Max,
    User2Max,
    SumMax,
}

impl BoundaryCase {
    pub fn tag(self) -> &'static str {
        match self {
            BoundaryCase::User1Max => "user1_max",
            BoundaryCase::User2Max => "user2_max",
            BoundaryCase::SumMax => "sum_max",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoUserBoundaryPoint {
    pub r1: f64,
    pub r2: f64,
    pub powers: PowerSplit,
    pub order: DecodingOrder,
    pub case: BoundaryCase,
}

/// Maximal `r2` for a given `r1` with explicit powers.
///
/// The order decodes user 2's first message, then user 1, then user 2's
/// second message; user 1 never splits. Below `R_max - R2` user 2 keeps its
/// whole budget on the last message; above it both users transmit at full
/// power and user 2's split moves the point along the sum-rate face.
pub fn two_user_boundary_point(s: &Scenario, r1: f64) -> Result<TwoUserBoundaryPoint> {
    let (big_r1, big_r2, r_max) = two_user_corners(s)?;
    if !(r1 >= 0.0) || r1 > big_r1 * (1.0 + 1e-12) {
        return Err(Error::OutOfRange {
            value: r1,
            lo: 0.0,
            hi: big_r1,
        });
    }
    let r1 = r1.min(big_r1);
    let b = s.bandwidth_hz();
    let noise = s.noise_floor();
    let (u1, u2) = (s.user(0), s.user(1));
    let order = DecodingOrder::from_users(&[1, 0, 1, 0])?;
    let growth = |r: f64| (r * LN_2 / b).exp_m1();

    let (r2, p, case) = if r1 >= big_r1 * (1.0 - 1e-12) {
        let r2 = r_max - big_r1;
        let p21 = growth(r2) * (u1.received_power() + noise) / u2.h;
        (r2, [[u1.p_max, 0.0], [p21.min(u2.p_max), 0.0]], BoundaryCase::User1Max)
    } else if r1 <= r_max - big_r2 || r1 < b * 1e-12 {
        let p11 = growth(r1) * (u2.received_power() + noise) / u1.h;
        (big_r2, [[p11.min(u1.p_max), 0.0], [0.0, u2.p_max]], BoundaryCase::User2Max)
    } else {
        let p22 = ((u1.received_power() / growth(r1) - noise) / u2.h).clamp(0.0, u2.p_max);
        (
            r_max - r1,
            [[u1.p_max, 0.0], [u2.p_max - p22, p22]],
            BoundaryCase::SumMax,
        )
    };
    Ok(TwoUserBoundaryPoint {
        r1,
        r2,
        powers: PowerSplit::new(p.to_vec()),
        order,
        case,
    })
}

/// Multiple access scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scheme {
    Rsma,
    Noma,
    Fdma,
    Tdma,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Rsma, Scheme::Noma, Scheme::Fdma, Scheme::Tdma];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Rsma => "RSMA",
            Scheme::Noma => "NOMA",
            Scheme::Fdma => "FDMA",
            Scheme::Tdma => "TDMA",
        }
    }
}

/// Largest `r2` achievable together with `r1` in the two-user region of
/// `scheme`. NOMA decodes the stronger user first.
pub fn two_user_boundary(scheme: Scheme, s: &Scenario, r1: f64) -> Result<f64> {
    let (big_r1, big_r2, r_max) = two_user_corners(s)?;
    if !(r1 >= 0.0) || r1 > big_r1 * (1.0 + 1e-12) {
        return Err(Error::OutOfRange {
            value: r1,
            lo: 0.0,
            hi: big_r1,
        });
    }
    let r1 = r1.min(big_r1);
    let b = s.bandwidth_hz();
    let (u1, u2) = (s.user(0), s.user(1));
    let r2 = match scheme {
        Scheme::Rsma => big_r2.min(r_max - r1),
        Scheme::Noma => {
            let growth = (r1 * LN_2 / b).exp_m1();
            if u1.h >= u2.h {
                // User 1 decoded first at full power, user 2 interference-free.
                let ratio = s.snr(0) / growth;
                big_r2.min(b * ratio.log2())
            } else {
                // User 2 decoded first; user 1 uses the least power reaching r1.
                let interference = 1.0 + growth;
                big_r2.min(b * log2_1p(s.snr(1) / interference))
            }
        }
        Scheme::Fdma => {
            let f1 = bandwidth_fraction_for_rate(r1, u1.h, u1.p_max, b, s.noise_psd_w_per_hz())
                .unwrap_or(1.0);
            rate_on_fraction(1.0 - f1, u2.h, u2.p_max, b, s.noise_psd_w_per_hz())
        }
        Scheme::Tdma => big_r2 * (1.0 - r1 / big_r1),
    };
    Ok(r2.clamp(0.0, big_r2))
}

/// One sampled frontier point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub r1_bits_per_s: f64,
    pub r2_bits_per_s: f64,
    pub scheme: Scheme,
    pub case_tag: String,
}

/// Samples every scheme's two-user frontier on `grid_points` evenly spaced
/// values of `r1` in `[0, R1]`. Frontiers that end above the axis at `R1`
/// are closed with the point `(R1, 0)`.
pub fn sample_region(s: &Scenario, grid_points: usize) -> Result<Vec<RegionRow>> {
    let (big_r1, _, _) = two_user_corners(s)?;
    if grid_points < 2 {
        return Err(Error::InvalidArgument("need at least two grid points".into()));
    }
    let mut rows = Vec::with_capacity(4 * (grid_points + 1));
    for scheme in Scheme::ALL {
        for i in 0..grid_points {
            let r1 = if i + 1 == grid_points {
                big_r1
            } else {
                big_r1 * i as f64 / (grid_points - 1) as f64
            };
            let (r2, tag) = if scheme == Scheme::Rsma {
                let p = two_user_boundary_point(s, r1)?;
                (p.r2, p.case.tag().to_string())
            } else {
                (two_user_boundary(scheme, s, r1)?, "frontier".to_string())
            };
            rows.push(RegionRow {
                r1_bits_per_s: r1,
                r2_bits_per_s: r2,
                scheme,
                case_tag: tag,
            });
        }
        if rows.last().is_some_and(|r| r.r2_bits_per_s > 0.0) {
            rows.push(RegionRow {
                r1_bits_per_s: big_r1,
                r2_bits_per_s: 0.0,
                scheme,
                case_tag: "axis".to_string(),
            });
        }
    }
    Ok(rows)
}
