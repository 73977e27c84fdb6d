//! The `solve` bundle: every requested scheme on one scenario.

use anyhow::Result;
use rsma_core::baselines::{check_ordering, fdma_solve, noma_solve, tdma_solve, OrderingReport};
use rsma_core::montecarlo::SweepScheme;
use rsma_core::pairing::{make_pairs, pairing_solve, realize_pairs, PairingStrategy};
use rsma_core::rate_region::{rsma_optimal_sum_rate_with, two_user_boundary_point, TwoUserBoundaryPoint};
use rsma_core::rsma::{recover_order_and_power, OrderTrace, PowerSplit, ScaOptions, MAX_ORDER_USERS};
use rsma_core::{Error, Exec, Scenario};
use serde::Serialize;

use crate::RecoverMode;

/// Bundle format version.
pub const SCHEMA: u32 = 1;

#[derive(Serialize)]
pub struct Bundle {
    pub schema: u32,
    pub seed: u64,
    pub scenario: Scenario,
    pub results: Vec<SchemeResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ordering: Option<OrderingReport>,
    pub failed: Vec<String>,
}

#[derive(Serialize)]
pub struct SchemeResult {
    pub scheme: SweepScheme,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Serialize)]
#[serde(untagged)]
pub enum Outcome {
    Ok(Box<Solution>),
    Err { error: String },
}

#[derive(Serialize)]
pub struct Solution {
    pub tau_bps: f64,
    pub rates_bps: Vec<f64>,
    pub resources: Resources,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Resources {
    Rsma {
        binding_subset: Vec<usize>,
        /// Closed-form order and powers (two users only).
        #[serde(skip_serializing_if = "Option::is_none")]
        boundary_point: Option<TwoUserBoundaryPoint>,
        #[serde(skip_serializing_if = "Option::is_none")]
        recovery: Option<RecoveryOut>,
    },
    Pairing {
        strategy: PairingStrategy,
        pairs: Vec<(usize, usize)>,
        band_fractions: Vec<f64>,
        pair_points: Vec<TwoUserBoundaryPoint>,
    },
    Powers {
        powers_w: Vec<f64>,
        decoding_order: Vec<usize>,
    },
    BandFractions {
        fractions: Vec<f64>,
    },
    TimeFractions {
        fractions: Vec<f64>,
    },
}

#[derive(Serialize)]
pub struct RecoveryOut {
    pub order: String,
    pub powers_w: PowerSplit,
    pub alpha: f64,
    pub achieved_rates_bps: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<OrderTrace>>,
}

pub fn default_schemes(s: &Scenario) -> Vec<SweepScheme> {
    let mut v = vec![SweepScheme::Rsma];
    if s.len().is_multiple_of(2) && s.len() > 2 {
        v.push(SweepScheme::RsmaUp(PairingStrategy::SW));
    }
    v.extend([SweepScheme::Noma, SweepScheme::Fdma, SweepScheme::Tdma]);
    v
}

fn solve_one(
    s: &Scenario,
    scheme: SweepScheme,
    sca: &ScaOptions,
    eps: f64,
    recover: RecoverMode,
    verbose: bool,
    exec: Exec,
) -> rsma_core::Result<Solution> {
    Ok(match scheme {
        SweepScheme::Rsma => {
            let opt = rsma_optimal_sum_rate_with(s, exec)?;
            let want = match recover {
                RecoverMode::Never => false,
                RecoverMode::Auto => s.len() <= MAX_ORDER_USERS,
                RecoverMode::Always => {
                    if s.len() > MAX_ORDER_USERS {
                        return Err(Error::TooManyUsers {
                            what: "decoding order recovery",
                            max: MAX_ORDER_USERS,
                            got: s.len(),
                        });
                    }
                    true
                }
            };
            let recovery = if want {
                let r = recover_order_and_power(s, &opt.allocation, sca, exec)?;
                Some(RecoveryOut {
                    order: r.order.to_string(),
                    powers_w: r.powers,
                    alpha: r.alpha,
                    achieved_rates_bps: r.rates,
                    trace: verbose.then_some(r.trace),
                })
            } else {
                None
            };
            let boundary_point = if s.len() == 2 {
                Some(two_user_boundary_point(s, opt.allocation.rates[0])?)
            } else {
                None
            };
            Solution {
                tau_bps: opt.tau,
                rates_bps: opt.allocation.rates,
                resources: Resources::Rsma {
                    binding_subset: opt.binding,
                    boundary_point,
                    recovery,
                },
            }
        }
        SweepScheme::RsmaUp(st) => {
            let a = pairing_solve(s, &make_pairs(s, st)?, eps)?;
            let pair_points = realize_pairs(s, &a)?;
            Solution {
                tau_bps: a.tau,
                rates_bps: a.rates,
                resources: Resources::Pairing {
                    strategy: a.strategy,
                    pairs: a.pairs,
                    band_fractions: a.fractions,
                    pair_points,
                },
            }
        }
        SweepScheme::Noma => {
            let n = noma_solve(s)?;
            Solution {
                tau_bps: n.tau,
                rates_bps: n.rates,
                resources: Resources::Powers {
                    powers_w: n.q,
                    decoding_order: n.order,
                },
            }
        }
        SweepScheme::Fdma => {
            let f = fdma_solve(s)?;
            Solution {
                tau_bps: f.tau,
                rates_bps: f.rates,
                resources: Resources::BandFractions { fractions: f.shares },
            }
        }
        SweepScheme::Tdma => {
            let t = tdma_solve(s)?;
            Solution {
                tau_bps: t.tau,
                rates_bps: t.rates,
                resources: Resources::TimeFractions { fractions: t.shares },
            }
        }
    })
}

pub fn solve_all(
    s: &Scenario,
    schemes: &[SweepScheme],
    sca: &ScaOptions,
    eps: f64,
    recover: RecoverMode,
    verbose: bool,
    exec: Exec,
) -> Result<Bundle> {
    let mut results = Vec::with_capacity(schemes.len());
    let mut failed = Vec::new();
    for &scheme in schemes {
        let outcome = match solve_one(s, scheme, sca, eps, recover, verbose, exec) {
            Ok(sol) => Outcome::Ok(Box::new(sol)),
            Err(e) => {
                eprintln!("error: {scheme}: {e}");
                failed.push(scheme.to_string());
                Outcome::Err { error: e.to_string() }
            }
        };
        results.push(SchemeResult { scheme, outcome });
    }
    let ordering = match check_ordering(s) {
        Ok(r) => Some(r),
        Err(e) => {
            eprintln!("error: ordering check: {e}");
            failed.push("ordering".into());
            None
        }
    };
    Ok(Bundle {
        schema: SCHEMA,
        seed: sca.seed,
        scenario: s.clone(),
        results,
        ordering,
        failed,
    })
}
