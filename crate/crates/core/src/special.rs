//! Real Lambert W, bracketing bisection, and the bandwidth a link needs to
//! carry a given rate.

use std::f64::consts::{E, LN_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INV_E: f64 = 1.0 / E;
const HALLEY_MAX_ITER: usize = 50;

/// Real branch of the Lambert W function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `W >= -1`, defined for `x >= -1/e`.
    Principal,
    /// `W <= -1`, defined for `-1/e <= x < 0`.
    Lower,
}

impl Branch {
    fn name(self) -> &'static str {
        match self {
            Branch::Principal => "principal",
            Branch::Lower => "lower",
        }
    }
}

/// Solves `w * exp(w) = x` on the requested real branch.
///
/// Halley iteration from a branch-point series, an asymptotic expansion or a
/// logarithmic guess, whichever regime `x` is in. Arguments that fall below
/// `-1/e` by no more than a few ulps are treated as the branch point.
pub fn lambert_w(branch: Branch, x: f64) -> Result<f64> {
    let domain = || Error::LambertDomain {
        x,
        branch: branch.name(),
    };
    if x.is_nan() || x < -INV_E - 4.0 * f64::EPSILON * INV_E {
        return Err(domain());
    }
    if x <= -INV_E {
        return Ok(-1.0);
    }
    match branch {
        Branch::Principal => {
            if x == 0.0 {
                return Ok(0.0);
            }
            if x == f64::INFINITY {
                return Ok(f64::INFINITY);
            }
            if x > 1e100 {
                return Ok(principal_log_newton(x));
            }
            let w0 = if x < -0.25 {
                branch_point_series(x, 1.0)
            } else if x < E {
                // Winitzki's approximation.
                let l = x.ln_1p();
                l * (1.0 - l.ln_1p() / (2.0 + l))
            } else {
                asymptotic(x.ln())
            };
            Ok(halley(x, w0))
        }
        Branch::Lower => {
            if x >= 0.0 {
                return Err(domain());
            }
            let w0 = if x < -0.25 {
                branch_point_series(x, -1.0)
            } else {
                asymptotic((-x).ln())
            };
            Ok(halley(x, w0))
        }
    }
}

/// `-1 + p - p^2/3 + 11 p^3 / 72` with `p = ±sqrt(2 (e x + 1))`.
fn branch_point_series(x: f64, sign: f64) -> f64 {
    let p = sign * (2.0 * (E * x + 1.0)).max(0.0).sqrt();
    -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * 11.0 / 72.0))
}

/// `L1 - L2 + L2 / L1` with `L1 = ln|x|`, `L2 = ln|L1|`.
fn asymptotic(l1: f64) -> f64 {
    let l2 = l1.abs().ln();
    l1 - l2 + l2 / l1
}

fn halley(x: f64, mut w: f64) -> f64 {
    for _ in 0..HALLEY_MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            break;
        }
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        let step = f / denom;
        let next = w - step;
        if !next.is_finite() {
            break;
        }
        if (next - w).abs() <= 2.0 * f64::EPSILON * next.abs().max(f64::MIN_POSITIVE) {
            w = next;
            break;
        }
        w = next;
    }
    w
}

/// Newton on `w + ln w = ln x` for arguments where `exp(w)` is huge.
fn principal_log_newton(x: f64) -> f64 {
    let lx = x.ln();
    let mut w = asymptotic(lx);
    for _ in 0..HALLEY_MAX_ITER {
        let g = w + w.ln() - lx;
        let next = w - g * w / (w + 1.0);
        if (next - w).abs() <= 2.0 * f64::EPSILON * next.abs() {
            return next;
        }
        w = next;
    }
    w
}

/// Bisection for a monotone `f` with a sign change on `[lo, hi]`.
///
/// Stops once `|hi - lo| <= tol * max(|hi|, eps)` or the interval can no
/// longer shrink, and returns the midpoint.
pub fn bisect_root<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    let flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.is_nan() || fhi.is_nan() || flo.signum() == fhi.signum() {
        return Err(Error::NoSignChange { lo, hi });
    }
    let lo_negative = flo < 0.0;
    loop {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= tol * hi.abs().max(f64::EPSILON) || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Like [`bisect_root`] but doubles `hi` (up to 200 times) until `f` changes
/// sign.
pub fn bisect_root_expanding<F: FnMut(f64) -> f64>(mut f: F, lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let flo = f(lo);
    let mut tries = 0;
    while f(hi).signum() == flo.signum() {
        tries += 1;
        if tries > 200 || !hi.is_finite() {
            return Err(Error::NoSignChange { lo, hi });
        }
        hi *= 2.0;
    }
    bisect_root(f, lo, hi, tol)
}

/// Rate in bits/s that a link of `fraction * b` Hz carries at power `p`.
pub fn rate_on_fraction(fraction: f64, h: f64, p: f64, b: f64, sigma2: f64) -> f64 {
    if fraction <= 0.0 {
        return 0.0;
    }
    let snr = h * p / (sigma2 * b);
    b * fraction * (snr / fraction).ln_1p() / LN_2
}

struct Link {
    snr: f64,
    b: f64,
}

impl Link {
    fn rate(&self, f: f64) -> f64 {
        if f <= 0.0 {
            0.0
        } else {
            self.b * f * (self.snr / f).ln_1p() / LN_2
        }
    }

    fn rate_derivative(&self, f: f64) -> f64 {
        let q = self.snr / f;
        self.b * (q.ln_1p() - q / (1.0 + q)) / LN_2
    }

    fn capacity(&self) -> f64 {
        self.rate(1.0)
    }
}

/// Lambert-W closed form for the fraction carrying `rate`, unverified.
///
/// With `a = rate ln2 sigma^2 / (h p)` the nontrivial root of
/// `f ln(1 + snr/f) = rate ln2 / b` is `f = -(rate ln2 / b) / (W_{-1}(-a e^{-a}) + a)`.
/// `None` when the demand exceeds what an infinite band could carry.
pub fn bandwidth_fraction_closed_form(rate: f64, h: f64, p: f64, b: f64, sigma2: f64) -> Option<f64> {
    if rate <= 0.0 {
        return Some(0.0);
    }
    let c = rate * LN_2 / b;
    let a = rate * LN_2 * sigma2 / (h * p);
    if !(a < 1.0) {
        return None;
    }
    let w = lambert_w(Branch::Lower, -a * (-a).exp()).ok()?;
    let f = -c / (w + a);
    (f.is_finite() && f > 0.0).then_some(f)
}

/// Reference bisection root of the same equation on `(0, 1]`.
pub fn bandwidth_fraction_bisect(rate: f64, h: f64, p: f64, b: f64, sigma2: f64) -> Option<f64> {
    if rate <= 0.0 {
        return Some(0.0);
    }
    let link = Link {
        snr: h * p / (sigma2 * b),
        b,
    };
    let cap = link.capacity();
    if rate > cap * (1.0 + 1e-12) {
        return None;
    }
    if rate >= cap {
        return Some(1.0);
    }
    bisect_root(|f| link.rate(f) - rate, 0.0, 1.0, 1e-15).ok()
}

/// Relative fraction-space residual used to accept the closed form.
pub const CLOSED_FORM_RESIDUAL: f64 = 1e-9;

/// Smallest bandwidth fraction `f` with `b f log2(1 + h p / (sigma2 b f)) >= rate`.
///
/// The Lambert-W closed form is tried first and accepted only if the Newton
/// correction it implies is below [`CLOSED_FORM_RESIDUAL`] relative; otherwise
/// the root is bracketed and bisected. Returns `None` when even the full band
/// cannot carry `rate`.
pub fn bandwidth_fraction_for_rate(rate: f64, h: f64, p: f64, b: f64, sigma2: f64) -> Option<f64> {
    if rate <= 0.0 {
        return Some(0.0);
    }
    let link = Link {
        snr: h * p / (sigma2 * b),
        b,
    };
    let cap = link.capacity();
    if rate > cap * (1.0 + 1e-12) {
        return None;
    }
    if rate >= cap {
        return Some(1.0);
    }
    if let Some(f) = bandwidth_fraction_closed_form(rate, h, p, b, sigma2) {
        if f <= 1.0 {
            let step = (rate - link.rate(f)) / link.rate_derivative(f);
            if step.is_finite() && step.abs() <= CLOSED_FORM_RESIDUAL * f {
                return Some(f);
            }
        }
    }
    bisect_root(|f| link.rate(f) - rate, 0.0, 1.0, 1e-15).ok()
}
