//! User pairing for large user counts: each pair runs two-user RSMA on its
//! own slice of the band, and a bisection on the common rate scale sizes
//! the slices.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::gain_order;
use crate::error::{Error, Result};
use crate::rate_region::{rsma_optimal_sum_rate, two_user_boundary_point, TwoUserBoundaryPoint};
use crate::scenario::Scenario;
use crate::special::bandwidth_fraction_for_rate;

/// Default relative stopping tolerance of the bisection on `tau`.
pub const DEFAULT_EPS: f64 = 1e-6;

/// How users are matched after ranking them by channel gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairingStrategy {
    /// Strongest with weakest.
    SW,
    /// Strongest half matched in order with the weakest half.
    SM,
    /// Neighbours in the ranking.
    SS,
}

impl PairingStrategy {
    pub const ALL: [PairingStrategy; 3] = [PairingStrategy::SW, PairingStrategy::SM, PairingStrategy::SS];

    pub fn name(self) -> &'static str {
        match self {
            PairingStrategy::SW => "SW",
            PairingStrategy::SM => "SM",
            PairingStrategy::SS => "SS",
        }
    }
}

impl fmt::Display for PairingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PairingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SW" => Ok(PairingStrategy::SW),
            "SM" => Ok(PairingStrategy::SM),
            "SS" => Ok(PairingStrategy::SS),
            other => Err(Error::InvalidArgument(format!("unknown pairing strategy {other:?}"))),
        }
    }
}

/// Pairs of original user indices; the first member has the larger gain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingPlan {
    pub strategy: PairingStrategy,
    pub pairs: Vec<(usize, usize)>,
}

pub fn make_pairs(s: &Scenario, strategy: PairingStrategy) -> Result<PairingPlan> {
    let k = s.len();
    if k == 0 || !k.is_multiple_of(2) {
        return Err(Error::OddUserCount(k));
    }
    let rank = gain_order(s);
    let m = k / 2;
    let pairs = (0..m)
        .map(|i| match strategy {
            PairingStrategy::SW => (rank[i], rank[k - 1 - i]),
            PairingStrategy::SM => (rank[i], rank[m + i]),
            PairingStrategy::SS => (rank[2 * i], rank[2 * i + 1]),
        })
        .collect();
    Ok(PairingPlan { strategy, pairs })
}

/// Smallest band fraction on which pair `(a, b)` supports rates
/// `(D_a tau, D_b tau)`: the largest of the fractions each single-user
/// constraint and the sum constraint need on their own.
pub fn pair_min_fraction(s: &Scenario, pair: (usize, usize), tau: f64) -> Option<f64> {
    let (ua, ub) = (s.user(pair.0), s.user(pair.1));
    let (b, n0) = (s.bandwidth_hz(), s.noise_psd_w_per_hz());
    let fa = bandwidth_fraction_for_rate(ua.d * tau, ua.h, ua.p_max, b, n0)?;
    let fb = bandwidth_fraction_for_rate(ub.d * tau, ub.h, ub.p_max, b, n0)?;
    let rx = ua.received_power() + ub.received_power();
    let fs = bandwidth_fraction_for_rate((ua.d + ub.d) * tau, 1.0, rx, b, n0)?;
    Some(fa.max(fb).max(fs))
}

fn pair_fractions(s: &Scenario, plan: &PairingPlan, tau: f64) -> Option<Vec<f64>> {
    plan.pairs.iter().map(|&p| pair_min_fraction(s, p, tau)).collect()
}

pub fn pairing_feasible(s: &Scenario, plan: &PairingPlan, tau: f64) -> bool {
    pair_fractions(s, plan, tau).is_some_and(|f| f.iter().sum::<f64>() <= 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAllocation {
    pub strategy: PairingStrategy,
    pub pairs: Vec<(usize, usize)>,
    /// Band fraction of each pair.
    pub fractions: Vec<f64>,
    pub tau: f64,
    /// Per-user rates `D_k tau`, original order.
    pub rates: Vec<f64>,
}

/// Bisection on `tau` over `[0, tau*_RSMA]`, stopping once the bracket is
/// within `eps` relative. Returns the feasible end of the bracket.
pub fn pairing_solve(s: &Scenario, plan: &PairingPlan, eps: f64) -> Result<PairAllocation> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let mut lo = 0.0;
    let mut hi = rsma_optimal_sum_rate(s)?.tau;
    if pairing_feasible(s, plan, hi) {
        lo = hi;
    }
    while hi - lo > eps * hi {
        let mid = 0.5 * (lo + hi);
        if pairing_feasible(s, plan, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let fractions = pair_fractions(s, plan, lo)
        .ok_or_else(|| Error::Numerical("pair fractions infeasible at a feasible scale".into()))?;
    Ok(PairAllocation {
        strategy: plan.strategy,
        pairs: plan.pairs.clone(),
        fractions,
        tau: lo,
        rates: s.users().iter().map(|u| u.d * lo).collect(),
    })
}

/// Explicit powers for every pair: the two-user boundary point at the first
/// member's rate, on the pair's own slice of the band.
pub fn realize_pairs(s: &Scenario, alloc: &PairAllocation) -> Result<Vec<TwoUserBoundaryPoint>> {
    alloc
        .pairs
        .iter()
        .zip(&alloc.fractions)
        .map(|(&(a, b), &f)| {
            let sub = s.subset(&[a, b])?.with_bandwidth(f * s.bandwidth_hz())?;
            let cap = sub.single_user_capacity(0);
            two_user_boundary_point(&sub, alloc.rates[a].min(cap))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::dbm_to_watt;

    fn scenario(gains: &[f64]) -> Scenario {
        let k = gains.len();
        Scenario::from_parts(gains, &vec![dbm_to_watt(1.0); k], &vec![1.0; k], 1e6, dbm_to_watt(-174.0)).unwrap()
    }

    #[test]
    fn pairing_by_rank() {
        let s = scenario(&[4e-10, 3e-10, 2e-10, 1e-10]);
        assert_eq!(make_pairs(&s, PairingStrategy::SW).unwrap().pairs, vec![(0, 3), (1, 2)]);
        assert_eq!(make_pairs(&s, PairingStrategy::SM).unwrap().pairs, vec![(0, 2), (1, 3)]);
        assert_eq!(make_pairs(&s, PairingStrategy::SS).unwrap().pairs, vec![(0, 1), (2, 3)]);
        let shuffled = scenario(&[2e-10, 4e-10, 1e-10, 3e-10]);
        assert_eq!(make_pairs(&shuffled, PairingStrategy::SW).unwrap().pairs, vec![(1, 2), (3, 0)]);
        assert!(matches!(make_pairs(&scenario(&[1e-10; 3]), PairingStrategy::SW), Err(Error::OddUserCount(3))));
    }

    #[test]
    fn ties_follow_index() {
        let s = scenario(&[1e-10; 4]);
        assert_eq!(make_pairs(&s, PairingStrategy::SS).unwrap().pairs, vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn single_pair_matches_full_rsma() {
        let s = Scenario::from_parts(
            &[9.45e-9, 6.17e-9],
            &[dbm_to_watt(1.0); 2],
            &[0.3, 0.7],
            1e6,
            dbm_to_watt(-174.0),
        )
        .unwrap();
        let full = rsma_optimal_sum_rate(&s).unwrap().tau;
        for st in PairingStrategy::ALL {
            let a = pairing_solve(&s, &make_pairs(&s, st).unwrap(), DEFAULT_EPS).unwrap();
            assert!(a.tau <= full && (full - a.tau) <= DEFAULT_EPS * full, "{st}");
        }
    }

    #[test]
    fn pair_fraction_is_symmetric() {
        let s = scenario(&[5e-10, 2e-11]);
        for tau in [1e6, 4e6, 9e6] {
            assert_eq!(pair_min_fraction(&s, (0, 1), tau), pair_min_fraction(&s, (1, 0), tau));
        }
    }

    #[test]
    fn fractions_fit_the_band() {
        let gains: Vec<f64> = (0..10).map(|i| 10f64.powf(-8.0 - 0.3 * i as f64)).collect();
        let s = scenario(&gains);
        let full = rsma_optimal_sum_rate(&s).unwrap().tau;
        for st in PairingStrategy::ALL {
            let a = pairing_solve(&s, &make_pairs(&s, st).unwrap(), DEFAULT_EPS).unwrap();
            assert!(a.fractions.iter().sum::<f64>() <= 1.0);
            assert!(a.tau > 0.0 && a.tau <= full);
        }
    }

    #[test]
    fn realized_powers_meet_the_rates() {
        let gains: Vec<f64> = (0..4).map(|i| 10f64.powf(-8.0 - 0.5 * i as f64)).collect();
        let s = scenario(&gains);
        let a = pairing_solve(&s, &make_pairs(&s, PairingStrategy::SW).unwrap(), DEFAULT_EPS).unwrap();
        let pts = realize_pairs(&s, &a).unwrap();
        for ((&(u, v), pt), &f) in a.pairs.iter().zip(&pts).zip(&a.fractions) {
            assert!(f > 0.0);
            assert!((pt.r1 - a.rates[u]).abs() <= 1e-6 * a.rates[u]);
            assert!(pt.r2 >= a.rates[v] * (1.0 - 1e-6));
        }
    }
}
