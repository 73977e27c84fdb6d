//! Closed-form optima of the conventional schemes under proportional rates:
//! NOMA with strongest-first decoding, FDMA and TDMA.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rate_region::rsma_optimal_sum_rate;
use crate::scenario::Scenario;
use crate::special::{bandwidth_fraction_for_rate, bisect_root, bisect_root_expanding};

const ROOT_TOL: f64 = 1e-15;

/// User indices by decreasing channel gain; ties keep the original order.
pub fn gain_order(s: &Scenario) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s.user(b).h.total_cmp(&s.user(a).h).then(a.cmp(&b)));
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NomaSolution {
    pub tau: f64,
    /// Transmit powers in original user order, watts.
    pub q: Vec<f64>,
    /// Decoding order (user indices, first decoded first).
    pub order: Vec<usize>,
    pub rates: Vec<f64>,
}

/// Powers giving every user exactly `D_k * tau` under strongest-first SIC.
///
/// Walks from the last decoded user backwards: with `z` the received power of
/// all users decoded after user `k`, user `k` needs
/// `(2^{D_k tau / B} - 1)(z + sigma^2 B) / h_k`.
pub fn noma_power_for_tau(s: &Scenario, tau: f64) -> Vec<f64> {
    let order = gain_order(s);
    noma_powers_in_order(s, &order, tau)
}

fn noma_powers_in_order(s: &Scenario, order: &[usize], tau: f64) -> Vec<f64> {
    let b = s.bandwidth_hz();
    let noise = s.noise_floor();
    let mut q = vec![0.0; s.len()];
    let mut z = 0.0;
    for &k in order.iter().rev() {
        let u = s.user(k);
        let growth = (u.d * tau * LN_2 / b).exp_m1();
        let rx = growth * (z + noise);
        q[k] = rx / u.h;
        z += rx;
    }
    q
}

/// Forward NOMA rates of powers `q` under strongest-first decoding, bits/s.
pub fn noma_rates(s: &Scenario, q: &[f64]) -> Vec<f64> {
    let order = gain_order(s);
    let b = s.bandwidth_hz();
    let mut rates = vec![0.0; s.len()];
    let mut later = 0.0;
    for &k in order.iter().rev() {
        let rx = s.user(k).h * q[k];
        rates[k] = b * (rx / (later + s.noise_floor())).ln_1p() / LN_2;
        later += rx;
    }
    rates
}

/// Largest common scale: each user's budget caps `tau` at the root of
/// `q_k(tau) = P_k`, and the optimum is the smallest such root.
pub fn noma_solve(s: &Scenario) -> Result<NomaSolution> {
    let order = gain_order(s);
    let mut tau = f64::INFINITY;
    for k in 0..s.len() {
        let cap = s.user(k).p_max;
        let hi = s.single_user_capacity(k).max(1.0);
        let tau_k = bisect_root_expanding(
            |t| noma_powers_in_order(s, &order, t)[k] - cap,
            0.0,
            hi,
            ROOT_TOL,
        )?;
        tau = tau.min(tau_k);
    }
    let q: Vec<f64> = noma_powers_in_order(s, &order, tau)
        .into_iter()
        .zip(s.users())
        .map(|(q, u)| q.min(u.p_max))
        .collect();
    let rates = noma_rates(s, &q);
    Ok(NomaSolution { tau, q, order, rates })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalSolution {
    pub tau: f64,
    /// Bandwidth fractions (FDMA) or time fractions (TDMA).
    pub shares: Vec<f64>,
    pub rates: Vec<f64>,
}

fn fdma_fractions(s: &Scenario, tau: f64) -> Option<Vec<f64>> {
    s.users()
        .iter()
        .map(|u| {
            bandwidth_fraction_for_rate(u.d * tau, u.h, u.p_max, s.bandwidth_hz(), s.noise_psd_w_per_hz())
        })
        .collect()
}

/// Every user at full power on its own band; the band split solves
/// `sum_k b_k(tau) = 1` by bisection on `tau`.
pub fn fdma_solve(s: &Scenario) -> Result<OrthogonalSolution> {
    let hi = (0..s.len())
        .map(|k| s.single_user_capacity(k) / s.user(k).d)
        .fold(f64::INFINITY, f64::min);
    let excess = |t: f64| fdma_fractions(s, t).map_or(f64::INFINITY, |f| f.iter().sum::<f64>() - 1.0);
    let tau = if excess(hi) <= 0.0 {
        hi
    } else {
        bisect_root(excess, 0.0, hi, ROOT_TOL)?
    };
    let shares = fdma_fractions(s, tau)
        .ok_or_else(|| Error::Numerical("FDMA fractions infeasible at the root".into()))?;
    let rates = s.users().iter().map(|u| u.d * tau).collect();
    Ok(OrthogonalSolution { tau, shares, rates })
}

/// Harmonic closed form `tau* = 1 / sum_k (D_k / C_k)`, `a_k = D_k tau* / C_k`.
pub fn tdma_solve(s: &Scenario) -> Result<OrthogonalSolution> {
    let caps: Vec<f64> = (0..s.len()).map(|k| s.single_user_capacity(k)).collect();
    let tau = 1.0 / s.users().iter().zip(&caps).map(|(u, c)| u.d / c).sum::<f64>();
    let shares: Vec<f64> = s.users().iter().zip(&caps).map(|(u, c)| u.d * tau / c).collect();
    let rates = shares.iter().zip(&caps).map(|(a, c)| a * c).collect();
    Ok(OrthogonalSolution { tau, shares, rates })
}

/// Optimal sum-rates of all four schemes and whether they are ordered as
/// the region inclusions require.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub rsma: f64,
    pub noma: f64,
    pub fdma: f64,
    pub tdma: f64,
    pub rsma_ge_noma: bool,
    pub rsma_ge_fdma_ge_tdma: bool,
}

pub const ORDERING_SLACK: f64 = 1e-9;

pub fn check_ordering(s: &Scenario) -> Result<OrderingReport> {
    let rsma = rsma_optimal_sum_rate(s)?.tau;
    let noma = noma_solve(s)?.tau;
    let fdma = fdma_solve(s)?.tau;
    let tdma = tdma_solve(s)?.tau;
    let ge = |a: f64, b: f64| a >= b - ORDERING_SLACK * a.abs().max(b.abs());
    Ok(OrderingReport {
        rsma,
        noma,
        fdma,
        tdma,
        rsma_ge_noma: ge(rsma, noma),
        rsma_ge_fdma_ge_tdma: ge(rsma, fdma) && ge(fdma, tdma),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::dbm_to_watt;
    use crate::special::rate_on_fraction;
    use proptest::prelude::*;

    fn fig1(d: [f64; 2]) -> Scenario {
        let p = dbm_to_watt(1.0);
        Scenario::from_parts(&[9.45e-9, 6.17e-9], &[p, p], &d, 1e6, dbm_to_watt(-174.0)).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    /// Independent SINR evaluation with an explicit interference sum.
    fn sinr_rates(s: &Scenario, q: &[f64]) -> Vec<f64> {
        let order = gain_order(s);
        order
            .iter()
            .enumerate()
            .map(|(pos, &k)| {
                let interf: f64 = order[pos + 1..].iter().map(|&j| s.user(j).h * q[j]).sum();
                (k, 1e6 * (1.0 + s.user(k).h * q[k] / (interf + s.noise_floor())).log2())
            })
            .fold(vec![0.0; s.len()], |mut acc, (k, r)| {
                acc[k] = r;
                acc
            })
    }

    #[test]
    fn noma_powers() {
        let s = fig1([0.5, 0.5]);
        assert!(noma_power_for_tau(&s, 0.0).iter().all(|&q| q == 0.0));
        let q = noma_power_for_tau(&s, 8e6);
        let r = sinr_rates(&s, &q);
        assert!(rel(r[0], 4e6) < 1e-9 && rel(r[1], 4e6) < 1e-9);

        let one = s.subset(&[0]).unwrap();
        let q = noma_power_for_tau(&one, 5e6);
        let expect = (2f64.powf(5.0) - 1.0) * one.noise_floor() / 9.45e-9;
        assert!(rel(q[0], expect) < 1e-12);
    }

    #[test]
    fn noma_example() {
        let s = fig1([0.5, 0.5]);
        let sol = noma_solve(&s).unwrap();
        // 40-digit bisection oracle.
        assert!(rel(sol.tau, 11_571_525.368_014_274) < 1e-12);
        assert!(sol.tau < 12_270_434.830_435_236);
        assert_eq!(sol.order, vec![0, 1]);
        assert!(rel(sol.q[0], s.user(0).p_max) < 1e-9);
        let r = sinr_rates(&s, &sol.q);
        assert!(rel(r[0], sol.tau / 2.0) < 1e-9 && rel(r[1], sol.tau / 2.0) < 1e-9);
    }

    #[test]
    fn single_user_all_schemes_agree() {
        let s = fig1([0.5, 0.5]).subset(&[1]).unwrap();
        let c = s.single_user_capacity(0);
        assert!(rel(noma_solve(&s).unwrap().tau, c) < 1e-12);
        let f = fdma_solve(&s).unwrap();
        assert!(rel(f.tau, c) < 1e-12 && f.shares == vec![1.0]);
        let t = tdma_solve(&s).unwrap();
        assert!(rel(t.tau, c) < 1e-15 && t.shares == vec![1.0]);
        let rep = check_ordering(&s).unwrap();
        assert!(rel(rep.rsma, c) < 1e-12 && rel(rep.fdma, c) < 1e-12);
    }

    #[test]
    fn symmetric_users() {
        let s = Scenario::from_parts(&[2e-9; 4], &[1e-3; 4], &[1.0; 4], 1e6, 4e-21).unwrap();
        let f = fdma_solve(&s).unwrap();
        assert!(f.shares.iter().all(|b| (b - 0.25).abs() < 1e-12));
        let t = tdma_solve(&s).unwrap();
        assert!(t.shares.iter().all(|a| (a - 0.25).abs() < 1e-15));
        let n = noma_solve(&s).unwrap();
        // Identical users: only the last decoded one can be at its cap.
        assert!(n.q.iter().all(|&q| q <= 1e-3 * (1.0 + 1e-12)));
    }

    #[test]
    fn fig1_baselines() {
        let s = fig1([0.5, 0.5]);
        let t = tdma_solve(&s).unwrap();
        assert!(rel(t.tau, 11_229_815.617_570_741) < 1e-12);
        let f = fdma_solve(&s).unwrap();
        assert!(rel(f.tau, 12_228_578.810_449_552) < 1e-10);
        assert!(f.tau > t.tau && f.tau < 12_270_434.830_435_236);
        let rep = check_ordering(&s).unwrap();
        assert!(rep.rsma_ge_noma && rep.rsma_ge_fdma_ge_tdma);
    }

    proptest! {
        #[test]
        fn baseline_constraints(g in proptest::collection::vec(-12.0f64..-7.0, 1..8),
                                w in proptest::collection::vec(0.05f64..1.0, 8)) {
            let k = g.len();
            let gains: Vec<f64> = g.iter().map(|e| 10f64.powf(*e)).collect();
            let s = Scenario::from_parts(&gains, &vec![dbm_to_watt(1.0); k], &w[..k], 1e6, dbm_to_watt(-174.0)).unwrap();

            let n = noma_solve(&s).unwrap();
            let r = sinr_rates(&s, &n.q);
            for (k, u) in s.users().iter().enumerate() {
                prop_assert!((r[k] - u.d * n.tau).abs() <= 1e-9 * u.d * n.tau);
                prop_assert!(n.q[k] <= u.p_max + 1e-12);
            }
            let slack = s.users().iter().zip(&n.q).map(|(u, q)| (u.p_max - q) / u.p_max).fold(f64::INFINITY, f64::min);
            prop_assert!(slack <= 1e-6);

            let f = fdma_solve(&s).unwrap();
            prop_assert!((f.shares.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            for (u, b) in s.users().iter().zip(&f.shares) {
                let r = rate_on_fraction(*b, u.h, u.p_max, 1e6, s.noise_psd_w_per_hz());
                prop_assert!((r - u.d * f.tau).abs() <= 1e-9 * u.d * f.tau);
            }

            let t = tdma_solve(&s).unwrap();
            prop_assert!((t.shares.iter().sum::<f64>() - 1.0).abs() <= 1e-12);

            let rep = check_ordering(&s).unwrap();
            prop_assert!(rep.rsma_ge_noma && rep.rsma_ge_fdma_ge_tdma);
        }
    }
}
