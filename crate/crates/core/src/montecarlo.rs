//! Monte Carlo sweeps over random user drops.
//!
//! Trial `t` of a sweep point uses the drop seed `derive_seed(seed, t)`, so
//! every scheme sees the same drops and results do not depend on how trials
//! are spread over threads.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{fdma_solve, noma_solve, tdma_solve};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::pairing::{make_pairs, pairing_solve, PairingStrategy, DEFAULT_EPS};
use crate::rate_region::rsma_optimal_sum_rate_with;
use crate::scenario::{dbm_to_watt, derive_seed, drop_users, DropConfig, LinkDefaults, Scenario};

/// A scheme as evaluated in sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepScheme {
    Rsma,
    RsmaUp(PairingStrategy),
    Noma,
    Fdma,
    Tdma,
}

impl SweepScheme {
    pub const DEFAULT_SET: [SweepScheme; 5] = [
        SweepScheme::Rsma,
        SweepScheme::RsmaUp(PairingStrategy::SW),
        SweepScheme::Noma,
        SweepScheme::Fdma,
        SweepScheme::Tdma,
    ];

    /// Optimal sum-rate of the scheme on `s`, bits/s.
    pub fn sum_rate(self, s: &Scenario) -> Result<f64> {
        match self {
            SweepScheme::Rsma => Ok(rsma_optimal_sum_rate_with(s, Exec::Sequential)?.tau),
            SweepScheme::RsmaUp(st) => Ok(pairing_solve(s, &make_pairs(s, st)?, DEFAULT_EPS)?.tau),
            SweepScheme::Noma => Ok(noma_solve(s)?.tau),
            SweepScheme::Fdma => Ok(fdma_solve(s)?.tau),
            SweepScheme::Tdma => Ok(tdma_solve(s)?.tau),
        }
    }
}

impl fmt::Display for SweepScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepScheme::Rsma => f.write_str("RSMA"),
            SweepScheme::RsmaUp(st) => write!(f, "RSMA-UP-{st}"),
            SweepScheme::Noma => f.write_str("NOMA"),
            SweepScheme::Fdma => f.write_str("FDMA"),
            SweepScheme::Tdma => f.write_str("TDMA"),
        }
    }
}

impl FromStr for SweepScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        match up.as_str() {
            "RSMA" => Ok(SweepScheme::Rsma),
            "NOMA" => Ok(SweepScheme::Noma),
            "FDMA" => Ok(SweepScheme::Fdma),
            "TDMA" => Ok(SweepScheme::Tdma),
            _ => match up.strip_prefix("RSMA-UP-") {
                Some(st) => Ok(SweepScheme::RsmaUp(st.parse()?)),
                None => Err(Error::InvalidArgument(format!("unknown scheme {s:?}"))),
            },
        }
    }
}

impl Serialize for SweepScheme {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SweepScheme {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    PMaxDbm,
    BandwidthHz,
    /// Weight of the second user in a two-user drop; the first gets `1 - v`.
    D2Weight,
    KUsers,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::PMaxDbm => "p_max_dbm",
            Axis::BandwidthHz => "bandwidth_hz",
            Axis::D2Weight => "d2_weight",
            Axis::KUsers => "k_users",
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p_max_dbm" => Ok(Axis::PMaxDbm),
            "bandwidth_hz" => Ok(Axis::BandwidthHz),
            "d2_weight" => Ok(Axis::D2Weight),
            "k_users" => Ok(Axis::KUsers),
            other => Err(Error::InvalidArgument(format!("unknown sweep axis {other:?}"))),
        }
    }
}

fn default_trials() -> usize {
    200
}

fn default_schemes() -> Vec<SweepScheme> {
    SweepScheme::DEFAULT_SET.to_vec()
}

fn default_k() -> usize {
    10
}

fn default_drop() -> DropConfig {
    DropConfig::table_defaults(10, 0)
}

fn default_link() -> LinkDefaults {
    LinkDefaults::table_defaults()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<SweepScheme>,
    /// User count for every axis except `k_users`.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Geometry; its `k` and `seed` are overridden per trial.
    #[serde(default = "default_drop")]
    pub drop: DropConfig,
    #[serde(default = "default_link")]
    pub link: LinkDefaults,
    /// Fixed channel gains instead of random drops (all trials identical).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_gains: Option<Vec<f64>>,
}

impl SweepSpec {
    pub fn new(axis: Axis, values: Vec<f64>) -> Self {
        SweepSpec {
            axis,
            values,
            trials: default_trials(),
            seed: 0,
            schemes: default_schemes(),
            k: default_k(),
            drop: default_drop(),
            link: default_link(),
            fixed_gains: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("a sweep needs at least one trial".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidArgument("no schemes to evaluate".into()));
        }
        for &v in &self.values {
            let ok = match self.axis {
                Axis::PMaxDbm => v.is_finite(),
                Axis::BandwidthHz => v.is_finite() && v > 0.0,
                Axis::D2Weight => v > 0.0 && v < 1.0,
                Axis::KUsers => v >= 1.0 && v.fract() == 0.0,
            };
            if !ok {
                return Err(Error::InvalidArgument(format!("bad {} value {v}", self.axis.name())));
            }
        }
        if self.axis == Axis::D2Weight && self.k != 2 {
            return Err(Error::InvalidArgument(format!(
                "the d2_weight axis needs k = 2, got {}",
                self.k
            )));
        }
        Ok(())
    }

    /// Scenario of trial `t` at sweep value `v`.
    pub fn scenario(&self, v: f64, t: usize) -> Result<Scenario> {
        let k = match self.axis {
            Axis::KUsers => v as usize,
            _ => self.k,
        };
        let mut link = self.link.clone();
        match self.axis {
            Axis::PMaxDbm => link.p_max_w = dbm_to_watt(v),
            Axis::BandwidthHz => link.bandwidth_hz = v,
            Axis::D2Weight => link.weights = Some(vec![1.0 - v, v]),
            Axis::KUsers => link.weights = None,
        }
        let weights = link.weights.clone().unwrap_or_else(|| vec![1.0; k]);
        match &self.fixed_gains {
            Some(g) => {
                if g.len() != k {
                    return Err(Error::UserCount { expected: k, got: g.len() });
                }
                Scenario::from_parts(g, &vec![link.p_max_w; k], &weights, link.bandwidth_hz, link.noise_psd_w_per_hz)
            }
            None => {
                let cfg = DropConfig {
                    k,
                    seed: derive_seed(self.seed, t as u64),
                    ..self.drop
                };
                drop_users(&cfg, &link)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub axis_value: f64,
    pub scheme: SweepScheme,
    pub mean_sum_rate_bps: f64,
    pub std_bps: f64,
    pub trials: usize,
}

fn trial_rates(spec: &SweepSpec, v: f64, t: usize) -> Result<Vec<f64>> {
    let s = spec.scenario(v, t)?;
    spec.schemes.iter().map(|sc| sc.sum_rate(&s)).collect()
}

/// Per-trial sum-rates at every sweep value: `out[value][trial][scheme]`.
pub fn sweep_samples(spec: &SweepSpec, exec: Exec) -> Result<Vec<Vec<Vec<f64>>>> {
    spec.validate()?;
    spec.values
        .iter()
        .map(|&v| exec.map_range(spec.trials, |t| trial_rates(spec, v, t)).into_iter().collect())
        .collect()
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<ResultRow>> {
    run_sweep_with(spec, Exec::default())
}

pub fn run_sweep_with(spec: &SweepSpec, exec: Exec) -> Result<Vec<ResultRow>> {
    let samples = sweep_samples(spec, exec)?;
    let mut rows = Vec::with_capacity(spec.values.len() * spec.schemes.len());
    for (&v, trials) in spec.values.iter().zip(&samples) {
        for (j, &scheme) in spec.schemes.iter().enumerate() {
            let xs: Vec<f64> = trials.iter().map(|r| r[j]).collect();
            let (mean, std) = mean_std(&xs);
            rows.push(ResultRow {
                axis_value: v,
                scheme,
                mean_sum_rate_bps: mean,
                std_bps: std,
                trials: xs.len(),
            });
        }
    }
    Ok(rows)
}

/// Mean and sample standard deviation (zero for a single sample).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfSpec {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<SweepScheme>,
    #[serde(default = "default_drop")]
    pub drop: DropConfig,
    #[serde(default = "default_link")]
    pub link: LinkDefaults,
}

impl CdfSpec {
    pub fn new(k: usize, trials: usize, seed: u64) -> Self {
        CdfSpec {
            k,
            trials,
            seed,
            schemes: default_schemes(),
            drop: default_drop(),
            link: default_link(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub scheme: SweepScheme,
    pub sum_rate_bps: f64,
    pub cdf: f64,
}

/// Empirical distribution of per-drop sum-rates, one sorted series per
/// scheme, with plotting positions `(i - 0.5) / n`.
pub fn run_cdf(spec: &CdfSpec, exec: Exec) -> Result<Vec<CdfPoint>> {
    if spec.trials < 10 {
        return Err(Error::InvalidArgument(format!(
            "a distribution needs at least 10 trials, got {}",
            spec.trials
        )));
    }
    let sweep = SweepSpec {
        axis: Axis::KUsers,
        values: vec![spec.k as f64],
        trials: spec.trials,
        seed: spec.seed,
        schemes: spec.schemes.clone(),
        k: spec.k,
        drop: spec.drop,
        link: spec.link.clone(),
        fixed_gains: None,
    };
    let samples = sweep_samples(&sweep, exec)?.remove(0);
    let n = samples.len() as f64;
    let mut out = Vec::with_capacity(samples.len() * spec.schemes.len());
    for (j, &scheme) in spec.schemes.iter().enumerate() {
        let mut xs: Vec<f64> = samples.iter().map(|r| r[j]).collect();
        xs.sort_by(f64::total_cmp);
        out.extend(xs.into_iter().enumerate().map(|(i, x)| CdfPoint {
            scheme,
            sum_rate_bps: x,
            cdf: (i as f64 + 0.5) / n,
        }));
    }
    Ok(out)
}

fn sci(x: f64) -> String {
    format!("{x:e}")
}

pub const SWEEP_HEADER: [&str; 5] = ["axis_value", "scheme", "mean_sum_rate_bps", "std_bps", "trials"];
pub const CDF_HEADER: [&str; 3] = ["scheme", "sum_rate_bps", "cdf"];

/// Writes sweep rows as CSV with floats in round-trippable scientific notation.
pub fn emit_csv<W: Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(SWEEP_HEADER)?;
    for r in rows {
        wr.write_record([
            sci(r.axis_value),
            r.scheme.to_string(),
            sci(r.mean_sum_rate_bps),
            sci(r.std_bps),
            r.trials.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| {
            field(i)
                .parse::<f64>()
                .map_err(|e| Error::InvalidArgument(format!("column {}: {e}", SWEEP_HEADER[i])))
        };
        rows.push(ResultRow {
            axis_value: num(0)?,
            scheme: field(1).parse()?,
            mean_sum_rate_bps: num(2)?,
            std_bps: num(3)?,
            trials: field(4)
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("column trials: {e}")))?,
        });
    }
    Ok(rows)
}

pub fn emit_cdf_csv<W: Write>(points: &[CdfPoint], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(CDF_HEADER)?;
    for p in points {
        wr.write_record([p.scheme.to_string(), sci(p.sum_rate_bps), sci(p.cdf)])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(axis: Axis, values: Vec<f64>) -> SweepSpec {
        let mut s = SweepSpec::new(axis, values);
        s.trials = 8;
        s.k = 4;
        s.seed = 7;
        s
    }

    #[test]
    fn scheme_names_round_trip() {
        let all = [
            SweepScheme::Rsma,
            SweepScheme::RsmaUp(PairingStrategy::SW),
            SweepScheme::RsmaUp(PairingStrategy::SM),
            SweepScheme::RsmaUp(PairingStrategy::SS),
            SweepScheme::Noma,
            SweepScheme::Fdma,
            SweepScheme::Tdma,
        ];
        for s in all {
            assert_eq!(s.to_string().parse::<SweepScheme>().unwrap(), s);
        }
        assert!("RSMA-UP-XX".parse::<SweepScheme>().is_err());
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let spec = small(Axis::PMaxDbm, vec![-5.0, 1.0, 10.0]);
        let a = run_sweep_with(&spec, Exec::Sequential).unwrap();
        let b = run_sweep_with(&spec, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 15);
    }

    #[test]
    fn same_seed_same_rows() {
        let spec = small(Axis::BandwidthHz, vec![1e6, 5e6]);
        assert_eq!(run_sweep(&spec).unwrap(), run_sweep(&spec).unwrap());
    }

    #[test]
    fn rsma_dominates_each_trial() {
        let spec = small(Axis::KUsers, vec![2.0, 6.0]);
        for trials in sweep_samples(&spec, Exec::default()).unwrap() {
            for r in trials {
                let top = r[0];
                assert!(r[1..].iter().all(|&x| x <= top * (1.0 + 1e-9)));
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let rows = run_sweep(&small(Axis::PMaxDbm, vec![0.0, 3.0])).unwrap();
        let mut buf = Vec::new();
        emit_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("axis_value,scheme,mean_sum_rate_bps,std_bps,trials\n"));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = small(Axis::D2Weight, vec![0.1, 0.5]);
        let mut spec = spec;
        spec.k = 2;
        spec.fixed_gains = Some(vec![9.45e-9, 6.17e-9]);
        let back: SweepSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
        let minimal: SweepSpec = serde_json::from_str(r#"{"axis":"k_users","values":[2,4]}"#).unwrap();
        assert_eq!(minimal.trials, 200);
        assert_eq!(minimal.schemes, SweepScheme::DEFAULT_SET.to_vec());
    }

    #[test]
    fn fixed_gains_give_zero_spread() {
        let mut spec = small(Axis::D2Weight, vec![0.2]);
        spec.k = 2;
        spec.schemes = vec![SweepScheme::Rsma, SweepScheme::Noma, SweepScheme::Fdma, SweepScheme::Tdma];
        spec.fixed_gains = Some(vec![9.45e-9, 6.17e-9]);
        let rows = run_sweep(&spec).unwrap();
        assert!(rows.iter().all(|r| r.std_bps <= 1e-9 * r.mean_sum_rate_bps));
    }

    #[test]
    fn d2_axis_needs_two_users() {
        let spec = small(Axis::D2Weight, vec![0.5]);
        assert!(run_sweep(&spec).is_err());
    }

    #[test]
    fn cdf_is_monotone() {
        let mut spec = CdfSpec::new(4, 20, 3);
        spec.schemes = vec![SweepScheme::Rsma, SweepScheme::Tdma];
        let pts = run_cdf(&spec, Exec::default()).unwrap();
        assert_eq!(pts.len(), 40);
        for series in pts.chunks(20) {
            assert!(series.windows(2).all(|w| w[0].sum_rate_bps <= w[1].sum_rate_bps && w[0].cdf < w[1].cdf));
            assert!((series[0].cdf - 0.025).abs() < 1e-15);
        }
        assert!(run_cdf(&CdfSpec::new(4, 5, 0), Exec::default()).is_err());
    }
}
