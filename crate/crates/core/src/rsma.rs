//! Decoding-order and split-power recovery for uplink rate splitting.
//!
//! Each user sends two messages; the receiver decodes all `2K` messages in one
//! successive interference cancellation chain. Given per-user target rates
//! on the capacity boundary, the orders are searched exhaustively and for
//! each one the scaled-target problem "maximize alpha such that every user
//! reaches alpha times its target" is attacked by successive convex
//! approximation: the interference logarithm is linearized at the current
//! point, the resulting concave program is solved by a log-barrier Newton
//! method, and the linearization point is moved until alpha stops improving.
//!
//! Internally powers are normalized by the budget (`x = p / P_k`) and rates
//! by the bandwidth, which keeps the subproblems well scaled.

use std::f64::consts::LN_2;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rate_region::RateAllocation;
use crate::scenario::{derive_seed, Scenario};

/// Largest user count for which orders are enumerated (`8!/16 = 2520` orders).
pub const MAX_ORDER_USERS: usize = 4;

/// One of the two messages of a user. `split` is 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub user: usize,
    pub split: usize,
}

/// A successive decoding order over all `2K` messages, first decoded first.
///
/// Orders are kept canonical: a user's split 0 is decoded before its split 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Message>", into = "Vec<Message>")]
pub struct DecodingOrder {
    sequence: Vec<Message>,
    ranks: Vec<[usize; 2]>,
}

impl DecodingOrder {
    /// Builds an order from the sequence of users in decoding order; each
    /// user must appear exactly twice, its first appearance being split 0.
    pub fn from_users(users: &[usize]) -> Result<Self> {
        let k = users.len() / 2;
        if users.len() != 2 * k || k == 0 {
            return Err(Error::InvalidArgument(format!(
                "a decoding order needs 2K entries, got {}",
                users.len()
            )));
        }
        let mut seen = vec![0usize; k];
        let mut sequence = Vec::with_capacity(users.len());
        for &u in users {
            if u >= k || seen[u] == 2 {
                return Err(Error::InvalidArgument(format!(
                    "user {u} appears out of range or more than twice"
                )));
            }
            sequence.push(Message {
                user: u,
                split: seen[u],
            });
            seen[u] += 1;
        }
        Self::try_from(sequence)
    }

    /// Sequence of messages, first decoded first.
    pub fn sequence(&self) -> &[Message] {
        &self.sequence
    }

    pub fn users(&self) -> usize {
        self.ranks.len()
    }

    /// Decoding position of a message (0 = decoded first).
    pub fn rank(&self, user: usize, split: usize) -> usize {
        self.ranks[user][split]
    }
}

impl TryFrom<Vec<Message>> for DecodingOrder {
    type Error = Error;

    fn try_from(sequence: Vec<Message>) -> Result<Self> {
        let k = sequence.len() / 2;
        if sequence.len() != 2 * k || k == 0 {
            return Err(Error::InvalidArgument("a decoding order needs 2K messages".into()));
        }
        let mut ranks = vec![[usize::MAX; 2]; k];
        for (pos, m) in sequence.iter().enumerate() {
            if m.user >= k || m.split > 1 || ranks[m.user][m.split] != usize::MAX {
                return Err(Error::InvalidArgument(format!(
                    "message ({}, {}) is invalid or repeated",
                    m.user, m.split
                )));
            }
            ranks[m.user][m.split] = pos;
        }
        if ranks.iter().any(|r| r[0] > r[1]) {
            return Err(Error::InvalidArgument(
                "orders must decode split 0 of a user before split 1".into(),
            ));
        }
        Ok(Self { sequence, ranks })
    }
}

impl From<DecodingOrder> for Vec<Message> {
    fn from(o: DecodingOrder) -> Self {
        o.sequence
    }
}

impl fmt::Display for DecodingOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, m) in self.sequence.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "s{}{}", m.user + 1, m.split + 1)?;
        }
        Ok(())
    }
}

/// Transmit powers of both messages of every user, in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowerSplit {
    p: Vec<[f64; 2]>,
}

impl PowerSplit {
    pub fn new(p: Vec<[f64; 2]>) -> Self {
        Self { p }
    }

    pub fn zeros(k: usize) -> Self {
        Self { p: vec![[0.0; 2]; k] }
    }

    pub fn get(&self, user: usize, split: usize) -> f64 {
        self.p[user][split]
    }

    pub fn rows(&self) -> &[[f64; 2]] {
        &self.p
    }

    pub fn total(&self, user: usize) -> f64 {
        self.p[user][0] + self.p[user][1]
    }

    pub fn users(&self) -> usize {
        self.p.len()
    }

    /// Nonnegative and within every budget up to `slack` watts.
    pub fn is_feasible(&self, s: &Scenario, slack: f64) -> bool {
        self.p.len() == s.len()
            && self
                .p
                .iter()
                .zip(s.users())
                .all(|(r, u)| r[0] >= 0.0 && r[1] >= 0.0 && r[0] + r[1] <= u.p_max + slack)
    }

    fn normalized(&self, s: &Scenario) -> Vec<[f64; 2]> {
        self.p
            .iter()
            .zip(s.users())
            .map(|(r, u)| [r[0] / u.p_max, r[1] / u.p_max])
            .collect()
    }

    fn from_normalized(x: &[[f64; 2]], s: &Scenario) -> Self {
        Self {
            p: x.iter()
                .zip(s.users())
                .map(|(r, u)| [r[0] * u.p_max, r[1] * u.p_max])
                .collect(),
        }
    }
}

fn check_shapes(s: &Scenario, order: &DecodingOrder, powers: &PowerSplit) -> Result<()> {
    if order.users() != s.len() || powers.users() != s.len() {
        return Err(Error::InvalidArgument(format!(
            "order covers {} users and powers {}, scenario has {}",
            order.users(),
            powers.users(),
            s.len()
        )));
    }
    Ok(())
}

/// SIC view of one order with normalized quantities.
struct Sic<'a> {
    order: &'a DecodingOrder,
    /// Full-power SNR of each user.
    snr: Vec<f64>,
}

impl<'a> Sic<'a> {
    fn new(s: &Scenario, order: &'a DecodingOrder) -> Self {
        Self {
            order,
            snr: (0..s.len()).map(|k| s.snr(k)).collect(),
        }
    }

    fn n_msgs(&self) -> usize {
        self.order.sequence.len()
    }

    /// Received normalized power per decoding position.
    fn received(&self, x: &[[f64; 2]]) -> Vec<f64> {
        self.order
            .sequence
            .iter()
            .map(|m| self.snr[m.user] * x[m.user][m.split])
            .collect()
    }

    /// `tail[i] = 1 + sum of received power at positions >= i`; `tail[2K] = 1`.
    fn tail(&self, x: &[[f64; 2]]) -> Vec<f64> {
        let y = self.received(x);
        let mut tail = vec![1.0; y.len() + 1];
        for i in (0..y.len()).rev() {
            tail[i] = tail[i + 1] + y[i];
        }
        tail
    }

    /// Rate of every user in bits/s/Hz.
    fn user_rates(&self, x: &[[f64; 2]]) -> Vec<f64> {
        let y = self.received(x);
        let tail = self.tail(x);
        let mut rates = vec![0.0; self.snr.len()];
        for (i, m) in self.order.sequence.iter().enumerate() {
            rates[m.user] += (y[i] / tail[i + 1]).ln_1p() / LN_2;
        }
        rates
    }

    /// Concave minorant of every user's rate, tight at `x_ref`.
    fn lower_bounds(&self, x: &[[f64; 2]], x_ref: &[[f64; 2]]) -> Vec<f64> {
        let y = self.received(x);
        let y_ref = self.received(x_ref);
        let tail_ref = self.tail(x_ref);
        let n = y.len();
        // later[i] = interference change at position i, summed over positions > i.
        let mut later = vec![0.0; n + 1];
        for i in (0..n).rev() {
            later[i] = later[i + 1] + (y[i] - y_ref[i]);
        }
        let mut lb = vec![0.0; self.snr.len()];
        for (i, m) in self.order.sequence.iter().enumerate() {
            let i_ref = tail_ref[i + 1];
            let d_int = later[i + 1];
            lb[m.user] += ((y[i] + d_int) / i_ref).ln_1p() / LN_2 - d_int / (i_ref * LN_2);
        }
        lb
    }
}

/// Rate of message `(k, j)` in bits/s: everything decoded later is noise.
pub fn message_rate(
    s: &Scenario,
    order: &DecodingOrder,
    powers: &PowerSplit,
    k: usize,
    j: usize,
) -> Result<f64> {
    check_shapes(s, order, powers)?;
    if k >= s.len() || j > 1 {
        return Err(Error::UserIndex {
            index: k,
            users: s.len(),
        });
    }
    let rank = order.rank(k, j);
    let interference: f64 = order.sequence[rank + 1..]
        .iter()
        .map(|m| s.user(m.user).h * powers.get(m.user, m.split))
        .sum();
    let signal = s.user(k).h * powers.get(k, j);
    Ok(s.bandwidth_hz() * (signal / (interference + s.noise_floor())).ln_1p() / LN_2)
}

/// Sum of both message rates of every user, bits/s.
pub fn user_rates(s: &Scenario, order: &DecodingOrder, powers: &PowerSplit) -> Result<Vec<f64>> {
    check_shapes(s, order, powers)?;
    let x = powers.normalized(s);
    let b = s.bandwidth_hz();
    Ok(Sic::new(s, order).user_rates(&x).into_iter().map(|r| r * b).collect())
}

/// Every canonical decoding order of `k_users` users in lexicographic order
/// of the user sequence; there are `(2K)! / 2^K` of them.
pub fn enumerate_orders(k_users: usize) -> Result<Vec<DecodingOrder>> {
    if k_users > MAX_ORDER_USERS {
        return Err(Error::TooManyUsers {
            what: "decoding order enumeration",
            max: MAX_ORDER_USERS,
            got: k_users,
        });
    }
    if k_users == 0 {
        return Err(Error::InvalidArgument("need at least one user".into()));
    }
    let mut seq: Vec<usize> = (0..k_users).flat_map(|u| [u, u]).collect();
    let mut out = Vec::new();
    loop {
        out.push(DecodingOrder::from_users(&seq)?);
        if !next_permutation(&mut seq) {
            break;
        }
    }
    Ok(out)
}

/// Lexicographic successor of a multiset permutation.
fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Concave lower bound on user `k`'s rate (bits/s), obtained by replacing the
/// interference logarithm with its tangent at `p_ref`. Equal to the true rate
/// when `powers == p_ref`.
pub fn dc_lower_bound(
    s: &Scenario,
    order: &DecodingOrder,
    powers: &PowerSplit,
    p_ref: &PowerSplit,
    k: usize,
) -> Result<f64> {
    check_shapes(s, order, powers)?;
    check_shapes(s, order, p_ref)?;
    if k >= s.len() {
        return Err(Error::UserIndex {
            index: k,
            users: s.len(),
        });
    }
    let lb = Sic::new(s, order).lower_bounds(&powers.normalized(s), &p_ref.normalized(s));
    Ok(lb[k] * s.bandwidth_hz())
}

/// Knobs of the successive convex approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScaOptions {
    /// Upper bound on alpha in the subproblems.
    pub alpha_max: f64,
    /// Stop a start once alpha improves by at most `tol * max(1, alpha)`.
    pub tol: f64,
    pub max_iter: usize,
    pub n_starts: usize,
    /// Order acceptance threshold on the best alpha.
    pub accept_alpha: f64,
    pub seed: u64,
}

impl Default for ScaOptions {
    fn default() -> Self {
        Self {
            alpha_max: 10.0,
            tol: 1e-7,
            max_iter: 100,
            n_starts: 10,
            accept_alpha: 1.0 - 1e-4,
            seed: 0,
        }
    }
}

/// The linearized subproblem around a fixed point, solved by a barrier method.
///
/// Each interference-free logarithm `ln tail_i(x)` gets an epigraph variable
/// `w_i` with `e^{w_i} <= tail_i(x)`, which makes every rate constraint
/// linear and leaves only exponential-cone and linear barriers. Variables are
/// `z = (t, x_{1,1}, x_{1,2}, ..., w_0, ..., w_{2K-1})`.
struct Linearized<'a> {
    sic: &'a Sic<'a>,
    /// Targets in bits/s/Hz.
    targets: &'a [f64],
    x_ref: &'a [[f64; 2]],
    alpha_max: f64,
    /// Interference seen at each position at the reference point.
    i_ref: Vec<f64>,
    /// Decoding positions that carry a message of a user with a target.
    active: Vec<bool>,
}

const BARRIER_GAP: f64 = 1e-10;

impl<'a> Linearized<'a> {
    fn new(sic: &'a Sic<'a>, targets: &'a [f64], x_ref: &'a [[f64; 2]], alpha_max: f64) -> Self {
        let tail_ref = sic.tail(x_ref);
        let i_ref = tail_ref[1..].to_vec();
        let active = sic.order.sequence.iter().map(|m| targets[m.user] > 0.0).collect();
        Self {
            sic,
            targets,
            x_ref,
            alpha_max,
            i_ref,
            active,
        }
    }

    fn n_x(&self) -> usize {
        2 * self.sic.snr.len()
    }

    fn dim(&self) -> usize {
        1 + self.n_x() + self.sic.n_msgs()
    }

    fn x_index(m: &Message) -> usize {
        1 + 2 * m.user + m.split
    }

    fn w_index(&self, pos: usize) -> usize {
        1 + self.n_x() + pos
    }

    fn unpack(&self, z: &DVector<f64>) -> (f64, Vec<[f64; 2]>) {
        let k = self.sic.snr.len();
        let x = (0..k).map(|u| [z[1 + 2 * u], z[2 + 2 * u]]).collect();
        (z[0], x)
    }

    /// `tail[i] = 1 + sum_{l >= i} snr x` at `z`, length `2K + 1`.
    fn tails(&self, z: &DVector<f64>) -> Vec<f64> {
        let seq = &self.sic.order.sequence;
        let mut tail = vec![1.0; seq.len() + 1];
        for i in (0..seq.len()).rev() {
            tail[i] = tail[i + 1] + self.sic.snr[seq[i].user] * z[Self::x_index(&seq[i])];
        }
        tail
    }

    /// Linearized rate of every user in bits/s/Hz, with the epigraph
    /// variables standing in for the logarithms.
    fn rates(&self, z: &DVector<f64>, tail: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.targets.len()];
        for (i, m) in self.sic.order.sequence.iter().enumerate() {
            if self.active[i] {
                let ir = self.i_ref[i];
                r[m.user] += (z[self.w_index(i)] - ir.ln() - (tail[i + 1] - ir) / ir) / LN_2;
            }
        }
        r
    }

    /// Sum of the logarithms of all slacks, or `None` outside the domain.
    fn log_slacks(&self, z: &DVector<f64>) -> Option<f64> {
        let t = z[0];
        let tail = self.tails(z);
        let mut acc = 0.0;
        for (r, &target) in self.rates(z, &tail).iter().zip(self.targets) {
            if target > 0.0 {
                let sl = r - t * target;
                if !(sl > 0.0) {
                    return None;
                }
                acc += sl.ln();
            }
        }
        for i in 0..self.sic.n_msgs() {
            if self.active[i] {
                let u = tail[i].ln() - z[self.w_index(i)];
                if !(u > 0.0) {
                    return None;
                }
                acc += u.ln() + tail[i].ln();
            }
        }
        for j in 1..=self.n_x() {
            if !(z[j] > 0.0) {
                return None;
            }
            acc += z[j].ln();
        }
        for k in 0..self.sic.snr.len() {
            let rest = 1.0 - z[1 + 2 * k] - z[2 + 2 * k];
            if !(rest > 0.0) {
                return None;
            }
            acc += rest.ln();
        }
        let cap = self.alpha_max - t;
        if !(cap > 0.0) {
            return None;
        }
        Some(acc + cap.ln())
    }

    fn merit(&self, z: &DVector<f64>, mu: f64) -> Option<f64> {
        Some(z[0] + mu * self.log_slacks(z)?)
    }

    fn n_constraints(&self) -> usize {
        let users = self.targets.iter().filter(|&&r| r > 0.0).count();
        let cones = self.active.iter().filter(|&&a| a).count();
        users + 2 * cones + 3 * self.sic.snr.len() + 1
    }

    /// Gradient and Hessian of the barrier merit at a strictly feasible `z`.
    fn derivatives(&self, z: &DVector<f64>, mu: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.dim();
        let seq = &self.sic.order.sequence;
        let t = z[0];
        let tail = self.tails(z);
        let rates = self.rates(z, &tail);
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        grad[0] = 1.0;

        // Linear rate constraints.
        for (user, &target) in self.targets.iter().enumerate() {
            if target <= 0.0 {
                continue;
            }
            let slack = rates[user] - t * target;
            let mut g = DVector::<f64>::zeros(n);
            g[0] = -target;
            for (i, m) in seq.iter().enumerate() {
                if m.user != user {
                    continue;
                }
                g[self.w_index(i)] += 1.0 / LN_2;
                let ir = self.i_ref[i];
                for ml in &seq[i + 1..] {
                    g[Self::x_index(ml)] -= self.sic.snr[ml.user] / (ir * LN_2);
                }
            }
            grad.axpy(mu / slack, &g, 1.0);
            hess.ger(-mu / (slack * slack), &g, &g, 1.0);
        }

        // Exponential cones e^{w_i} <= tail_i(x).
        for i in 0..seq.len() {
            if !self.active[i] {
                continue;
            }
            let wi = self.w_index(i);
            let ti = tail[i];
            let u = ti.ln() - z[wi];
            let mut a = DVector::<f64>::zeros(n);
            for ml in &seq[i..] {
                a[Self::x_index(ml)] = self.sic.snr[ml.user];
            }
            // Gradient of u: a / T in x, -1 in w.
            let mut gu = &a / ti;
            gu[wi] = -1.0;
            grad.axpy(mu / u, &gu, 1.0);
            hess.ger(-mu / (ti * ti * u), &a, &a, 1.0);
            hess.ger(-mu / (u * u), &gu, &gu, 1.0);
            // log T.
            grad.axpy(mu / ti, &a, 1.0);
            hess.ger(-mu / (ti * ti), &a, &a, 1.0);
        }

        // Power box.
        for u in 0..self.sic.snr.len() {
            let (i0, i1) = (1 + 2 * u, 2 + 2 * u);
            for i in [i0, i1] {
                grad[i] += mu / z[i];
                hess[(i, i)] -= mu / (z[i] * z[i]);
            }
            let rest = 1.0 - z[i0] - z[i1];
            let c = mu / (rest * rest);
            grad[i0] -= mu / rest;
            grad[i1] -= mu / rest;
            hess[(i0, i0)] -= c;
            hess[(i1, i1)] -= c;
            hess[(i0, i1)] -= c;
            hess[(i1, i0)] -= c;
        }
        let cap = self.alpha_max - t;
        grad[0] -= mu / cap;
        hess[(0, 0)] -= mu / (cap * cap);
        (grad, hess)
    }

    /// Maximizes the barrier merit for a fixed `mu` by damped Newton steps.
    fn center(&self, z: &mut DVector<f64>, mu: f64) -> Result<()> {
        for _ in 0..200 {
            let (grad, hess) = self.derivatives(z, mu);
            let step = match newton_step(-hess, &grad) {
                Some(step) => step,
                // The barrier has become too ill-conditioned to improve on.
                None => return Ok(()),
            };
            let decrement = grad.dot(&step);
            if !decrement.is_finite() {
                return Err(Error::Numerical("non-finite Newton decrement".into()));
            }
            if decrement <= 1e-3 * mu {
                return Ok(());
            }
            let f0 = self.merit(z, mu).expect("feasible");
            let mut s = 1.0;
            loop {
                let cand = &*z + &step * s;
                if let Some(f) = self.merit(&cand, mu) {
                    if f >= f0 + 0.25 * s * decrement {
                        *z = cand;
                        break;
                    }
                }
                s *= 0.5;
                if s < 1e-10 {
                    return Ok(());
                }
            }
        }
        Ok(())
    }

    fn solve(&self) -> Result<(f64, Vec<[f64; 2]>)> {
        if self.targets.iter().all(|&r| r <= 0.0) {
            return Ok((self.alpha_max, self.x_ref.to_vec()));
        }
        let mut z = DVector::zeros(self.dim());
        let theta = 1e-3;
        for (u, row) in self.x_ref.iter().enumerate() {
            for j in 0..2 {
                z[1 + 2 * u + j] = (1.0 - theta) * row[j].clamp(0.0, 1.0) + theta / 3.0;
            }
        }
        let tail = self.tails(&z);
        for i in 0..self.sic.n_msgs() {
            z[self.w_index(i)] = tail[i].ln() - 1e-3;
        }
        let t0 = self
            .rates(&z, &tail)
            .iter()
            .zip(self.targets)
            .filter(|(_, &r)| r > 0.0)
            .map(|(l, r)| l / r)
            .fold(f64::INFINITY, f64::min)
            .min(self.alpha_max);
        z[0] = t0 - 1e-3 * t0.abs().max(1.0);
        let n_constraints = self.n_constraints() as f64;
        let mut mu = 1.0;
        loop {
            self.center(&mut z, mu)?;
            if n_constraints * mu <= BARRIER_GAP {
                break;
            }
            mu /= 50.0;
        }
        let (t, x) = self.unpack(&z);
        Ok((t, x))
    }
}

/// Solves `neg * step = grad` for a positive definite `neg`, adding a small
/// ridge when the factorization breaks down.
fn newton_step(neg: DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = neg.clone().cholesky() {
        return Some(ch.solve(grad));
    }
    let scale = neg.diagonal().amax();
    let mut reg = neg;
    for i in 0..reg.nrows() {
        reg[(i, i)] += 1e-12 * scale;
    }
    let step = reg.cholesky()?.solve(grad);
    step.iter().all(|v| v.is_finite()).then_some(step)
}

fn normalized_targets(s: &Scenario, r_target: &RateAllocation) -> Result<Vec<f64>> {
    if r_target.rates.len() != s.len() {
        return Err(Error::InvalidArgument(format!(
            "{} targets for {} users",
            r_target.rates.len(),
            s.len()
        )));
    }
    Ok(r_target.rates.iter().map(|r| r / s.bandwidth_hz()).collect())
}

fn min_ratio(rates: &[f64], targets: &[f64], cap: f64) -> f64 {
    rates
        .iter()
        .zip(targets)
        .filter(|(_, &t)| t > 0.0)
        .map(|(r, t)| r / t)
        .fold(cap, f64::min)
}

/// Solves the convex subproblem obtained by linearizing at `p_ref`: maximize
/// alpha with every user's lower bound at least alpha times its target.
///
/// Returns the subproblem optimum and its powers. All-zero targets make the
/// problem unbounded; alpha is then capped at `alpha_max`.
pub fn solve_linearized(
    s: &Scenario,
    order: &DecodingOrder,
    r_target: &RateAllocation,
    p_ref: &PowerSplit,
    alpha_max: f64,
) -> Result<(f64, PowerSplit)> {
    check_shapes(s, order, p_ref)?;
    let targets = normalized_targets(s, r_target)?;
    let sic = Sic::new(s, order);
    let x_ref = p_ref.normalized(s);
    let (alpha, x) = Linearized::new(&sic, &targets, &x_ref, alpha_max).solve()?;
    Ok((alpha, PowerSplit::from_normalized(&x, s)))
}

/// Outcome of one SCA run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartTrace {
    pub initial_alpha: f64,
    pub alpha: f64,
    pub iterations: usize,
    /// True-rate alpha after every accepted iteration.
    pub history: Vec<f64>,
}

/// Best point over several SCA starts for one order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerSolution {
    pub alpha: f64,
    pub powers: PowerSplit,
    pub starts: Vec<StartTrace>,
}

fn run_sca(
    sic: &Sic,
    targets: &[f64],
    mut x: Vec<[f64; 2]>,
    opts: &ScaOptions,
) -> Result<(f64, Vec<[f64; 2]>, StartTrace)> {
    let initial_alpha = min_ratio(&sic.user_rates(&x), targets, f64::INFINITY);
    let mut alpha = initial_alpha;
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let next = match Linearized::new(sic, targets, &x, opts.alpha_max).solve() {
            Ok((_, next)) => next,
            Err(Error::Numerical(_)) => break,
            Err(e) => return Err(e),
        };
        let next_alpha = min_ratio(&sic.user_rates(&next), targets, f64::INFINITY);
        if !(next_alpha >= alpha) {
            break;
        }
        let gain = next_alpha - alpha;
        alpha = next_alpha;
        x = next;
        history.push(alpha);
        if gain <= opts.tol * alpha.max(1.0) {
            break;
        }
    }
    Ok((
        alpha,
        x,
        StartTrace {
            initial_alpha,
            alpha,
            iterations,
            history,
        },
    ))
}

fn random_start(k: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| {
            let mut row = [rng.gen::<f64>(), rng.gen::<f64>()];
            let total = row[0] + row[1];
            if total > 1.0 {
                row[0] /= total;
                row[1] /= total;
            }
            row
        })
        .collect()
}

/// Multi-start SCA for a fixed order. Start `i` is seeded from
/// `derive_seed(seed, i)`, so results do not depend on the executor.
pub fn solve_inner(
    s: &Scenario,
    order: &DecodingOrder,
    r_target: &RateAllocation,
    opts: &ScaOptions,
    exec: Exec,
) -> Result<InnerSolution> {
    if order.users() != s.len() {
        return Err(Error::InvalidArgument("order does not match scenario".into()));
    }
    if opts.n_starts == 0 {
        return Err(Error::InvalidArgument("n_starts must be at least 1".into()));
    }
    let targets = normalized_targets(s, r_target)?;
    let sic = Sic::new(s, order);
    let runs = exec.map_range(opts.n_starts, |i| {
        run_sca(&sic, &targets, random_start(s.len(), derive_seed(opts.seed, i as u64)), opts)
    });
    let mut best: Option<(f64, Vec<[f64; 2]>)> = None;
    let mut starts = Vec::with_capacity(runs.len());
    for run in runs {
        let (alpha, x, trace) = run?;
        if best.as_ref().is_none_or(|(a, _)| alpha > *a) {
            best = Some((alpha, x));
        }
        starts.push(trace);
    }
    let (alpha, x) = best.expect("at least one start");
    Ok(InnerSolution {
        alpha,
        powers: PowerSplit::from_normalized(&x, s),
        starts,
    })
}

/// Per-order diagnostics of the exhaustive search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderTrace {
    pub order: String,
    pub alpha: f64,
    pub starts: usize,
    pub iterations: Vec<usize>,
}

/// Decoding order and split powers realizing a target rate vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub order: DecodingOrder,
    pub powers: PowerSplit,
    pub alpha: f64,
    /// Rates the returned order and powers actually achieve, bits/s.
    pub rates: Vec<f64>,
    pub trace: Vec<OrderTrace>,
}

/// Walks the canonical orders and returns the first whose best alpha reaches
/// `opts.accept_alpha`, together with its powers.
pub fn recover_order_and_power(
    s: &Scenario,
    r_star: &RateAllocation,
    opts: &ScaOptions,
    exec: Exec,
) -> Result<Recovery> {
    if s.len() > MAX_ORDER_USERS {
        return Err(Error::TooManyUsers {
            what: "decoding order recovery",
            max: MAX_ORDER_USERS,
            got: s.len(),
        });
    }
    normalized_targets(s, r_star)?;
    if s.len() == 1 {
        let order = DecodingOrder::from_users(&[0, 0])?;
        let powers = PowerSplit::new(vec![[s.user(0).p_max, 0.0]]);
        let rates = user_rates(s, &order, &powers)?;
        let alpha = min_ratio(&rates, &r_star.rates, opts.alpha_max);
        return Ok(Recovery {
            trace: vec![OrderTrace {
                order: order.to_string(),
                alpha,
                starts: 0,
                iterations: vec![],
            }],
            order,
            powers,
            alpha,
            rates,
        });
    }
    let orders = enumerate_orders(s.len())?;
    let width = exec.batch_width();
    let mut trace = Vec::new();
    let mut best_alpha = f64::NEG_INFINITY;
    for (batch_idx, batch) in orders.chunks(width).enumerate() {
        let solved = exec.map_range(batch.len(), |i| {
            let order_idx = batch_idx * width + i;
            let o = ScaOptions {
                seed: derive_seed(opts.seed, order_idx as u64),
                ..*opts
            };
            solve_inner(s, &batch[i], r_star, &o, Exec::Sequential)
        });
        for (order, sol) in batch.iter().zip(solved) {
            let sol = sol?;
            trace.push(OrderTrace {
                order: order.to_string(),
                alpha: sol.alpha,
                starts: sol.starts.len(),
                iterations: sol.starts.iter().map(|t| t.iterations).collect(),
            });
            best_alpha = best_alpha.max(sol.alpha);
            if sol.alpha >= opts.accept_alpha {
                let rates = user_rates(s, order, &sol.powers)?;
                return Ok(Recovery {
                    order: order.clone(),
                    powers: sol.powers,
                    alpha: sol.alpha,
                    rates,
                    trace,
                });
            }
        }
    }
    Err(Error::NoOrderFound {
        threshold: opts.accept_alpha,
        best_alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate_region::{rsma_optimal_sum_rate, two_user_boundary_point, two_user_corners};
    use crate::scenario::dbm_to_watt;
    use proptest::prelude::*;

    fn fig1(d: [f64; 2]) -> Scenario {
        let p = dbm_to_watt(1.0);
        Scenario::from_parts(&[9.45e-9, 6.17e-9], &[p, p], &d, 1e6, dbm_to_watt(-174.0)).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn order_counts() {
        let counts: Vec<usize> = (1..=4).map(|k| enumerate_orders(k).unwrap().len()).collect();
        assert_eq!(counts, vec![1, 6, 90, 2520]);
        assert!(matches!(enumerate_orders(5), Err(Error::TooManyUsers { .. })));
        let orders = enumerate_orders(2).unwrap();
        assert_eq!(orders[0].to_string(), "s11,s12,s21,s22");
        assert_eq!(orders[5].to_string(), "s21,s22,s11,s12");
    }

    #[test]
    fn canonical_splits() {
        let o = DecodingOrder::from_users(&[1, 0, 1, 0]).unwrap();
        assert_eq!(o.to_string(), "s21,s11,s22,s12");
        assert_eq!((o.rank(1, 0), o.rank(0, 0), o.rank(1, 1), o.rank(0, 1)), (0, 1, 2, 3));
        assert!(DecodingOrder::from_users(&[0, 0, 1]).is_err());
        let back: DecodingOrder = serde_json::from_str(&serde_json::to_string(&o).unwrap()).unwrap();
        assert_eq!(back, o);
    }

    #[test]
    fn zero_targets_cap_alpha() {
        let s = fig1([0.5, 0.5]);
        let order = DecodingOrder::from_users(&[0, 0, 1, 1]).unwrap();
        let p_ref = PowerSplit::new(vec![[1e-4, 1e-4]; 2]);
        let zero = RateAllocation::from_rates(vec![0.0, 0.0]);
        let (alpha, _) = solve_linearized(&s, &order, &zero, &p_ref, 10.0).unwrap();
        assert_eq!(alpha, 10.0);
    }

    #[test]
    fn single_user_subproblem_uses_full_power() {
        let s = fig1([0.5, 0.5]).subset(&[0]).unwrap();
        let order = DecodingOrder::from_users(&[0, 0]).unwrap();
        let target = RateAllocation::from_rates(vec![1e6]);
        let p_ref = PowerSplit::new(vec![[0.3 * s.user(0).p_max, 0.2 * s.user(0).p_max]]);
        let (alpha, p) = solve_linearized(&s, &order, &target, &p_ref, 100.0).unwrap();
        // Only the total power matters when nothing else interferes.
        let cap = s.single_user_capacity(0) / 1e6;
        assert!(alpha <= cap * (1.0 + 1e-9));
        assert!(rel(p.total(0), s.user(0).p_max) < 1e-6, "{alpha} {cap} {p:?}");
        let rates = user_rates(&s, &order, &p).unwrap();
        assert!(rel(rates[0], s.single_user_capacity(0)) < 1e-6);
    }

    #[test]
    fn linearized_optimum_beats_grid() {
        let s = fig1([0.5, 0.5]);
        let order = DecodingOrder::from_users(&[1, 0, 1, 0]).unwrap();
        let target = RateAllocation::proportional(&s, 11e6);
        let p_ref = PowerSplit::new(vec![[0.5e-3, 0.1e-3], [0.4e-3, 0.4e-3]]);
        let (alpha, _) = solve_linearized(&s, &order, &target, &p_ref, 10.0).unwrap();
        let sic_lb = |p: &PowerSplit| -> f64 {
            (0..2)
                .map(|k| dc_lower_bound(&s, &order, p, &p_ref, k).unwrap() / target.rates[k])
                .fold(f64::INFINITY, f64::min)
        };
        let pm = s.user(0).p_max;
        let n = 12;
        let mut best = f64::NEG_INFINITY;
        for a in 0..=n {
            for c in 0..=n - a {
                for d in 0..=n {
                    for e in 0..=n - d {
                        let f = |i: usize| pm * i as f64 / n as f64;
                        let p = PowerSplit::new(vec![[f(a), f(c)], [f(d), f(e)]]);
                        best = best.max(sic_lb(&p));
                    }
                }
            }
        }
        assert!(alpha >= best - 1e-9, "{alpha} < grid {best}");
    }

    #[test]
    fn lemma_order_recovers_boundary_point() {
        let s = fig1([0.5, 0.5]);
        let opt = rsma_optimal_sum_rate(&s).unwrap();
        let rec = recover_order_and_power(&s, &opt.allocation, &ScaOptions::default(), Exec::Sequential).unwrap();
        assert!(rec.alpha >= 1.0 - 1e-4);
        assert!(rec.powers.is_feasible(&s, 1e-9));
        for (r, t) in rec.rates.iter().zip(&opt.allocation.rates) {
            assert!(rel(*r, *t) < 1e-4);
        }
        let closed = two_user_boundary_point(&s, opt.allocation.rates[0]).unwrap();
        let replay = user_rates(&s, &closed.order, &closed.powers).unwrap();
        assert!(rel(replay[1], opt.allocation.rates[1]) < 1e-9);
    }

    #[test]
    fn wrong_order_falls_short() {
        // A sum-face point needs user 1 decoded after part of user 2.
        let s = fig1([0.5, 0.5]);
        let (_, big_r2, r_max) = two_user_corners(&s).unwrap();
        let r1 = 0.5 * ((r_max - big_r2) + 11e6);
        let target = RateAllocation::from_rates(vec![r1, r_max - r1]);
        let first = DecodingOrder::from_users(&[0, 0, 1, 1]).unwrap();
        let sol = solve_inner(&s, &first, &target, &ScaOptions::default(), Exec::Sequential).unwrap();
        assert!(sol.alpha < 1.0 - 1e-3, "{}", sol.alpha);
        let good = DecodingOrder::from_users(&[1, 0, 1, 0]).unwrap();
        let sol = solve_inner(&s, &good, &target, &ScaOptions::default(), Exec::Sequential).unwrap();
        assert!(sol.alpha >= 1.0 - 1e-4, "{}", sol.alpha);
    }

    #[test]
    fn sca_never_decreases() {
        let s = fig1([0.3, 0.7]);
        let target = RateAllocation::proportional(&s, rsma_optimal_sum_rate(&s).unwrap().tau);
        let order = DecodingOrder::from_users(&[1, 0, 1, 0]).unwrap();
        let sol = solve_inner(&s, &order, &target, &ScaOptions::default(), Exec::Sequential).unwrap();
        for st in &sol.starts {
            assert!(st.history.windows(2).all(|w| w[1] >= w[0]));
            assert!(st.alpha >= st.initial_alpha);
        }
    }

    #[test]
    fn executors_agree() {
        let s = fig1([0.4, 0.6]);
        let opt = rsma_optimal_sum_rate(&s).unwrap();
        let opts = ScaOptions::default();
        let a = recover_order_and_power(&s, &opt.allocation, &opts, Exec::Sequential).unwrap();
        let b = recover_order_and_power(&s, &opt.allocation, &opts, Exec::Parallel).unwrap();
        assert_eq!(a.order, b.order);
        assert_eq!(a.powers, b.powers);
    }

    #[test]
    fn refuses_large_k() {
        let s = Scenario::from_parts(&[1e-9; 5], &[1e-3; 5], &[1.0; 5], 1e6, 4e-21).unwrap();
        let r = RateAllocation::proportional(&s, 1e6);
        assert!(matches!(
            recover_order_and_power(&s, &r, &ScaOptions::default(), Exec::Sequential),
            Err(Error::TooManyUsers { .. })
        ));
    }

    fn arb_case() -> impl Strategy<Value = (Scenario, DecodingOrder, PowerSplit, PowerSplit)> {
        (1usize..=4)
            .prop_flat_map(|k| {
                (
                    proptest::collection::vec(-11.0f64..-7.0, k),
                    proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), k),
                    proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), k),
                    Just(k),
                    0usize..2520,
                )
            })
            .prop_map(|(g, a, b, k, o)| {
                let gains: Vec<f64> = g.iter().map(|e| 10f64.powf(*e)).collect();
                let s = Scenario::from_parts(&gains, &vec![1e-3; k], &vec![1.0; k], 1e6, 4e-21).unwrap();
                let orders = enumerate_orders(k).unwrap();
                let order = orders[o % orders.len()].clone();
                let split = |v: &[(f64, f64)]| PowerSplit::new(v.iter().map(|(x, y)| [x * 5e-4, y * 5e-4]).collect());
                (s, order, split(&a), split(&b))
            })
    }

    proptest! {
        #[test]
        fn rates_telescope((s, order, p, _) in arb_case()) {
            let total: f64 = user_rates(&s, &order, &p).unwrap().iter().sum();
            let rx: f64 = (0..s.len()).map(|k| s.user(k).h * p.total(k)).sum();
            let expect = s.bandwidth_hz() * (rx / s.noise_floor()).ln_1p() / LN_2;
            prop_assert!((total - expect).abs() <= 1e-9 * expect.max(1.0));
            let by_msg: f64 = (0..s.len())
                .flat_map(|k| [(k, 0), (k, 1)])
                .map(|(k, j)| message_rate(&s, &order, &p, k, j).unwrap())
                .sum();
            prop_assert!((by_msg - total).abs() <= 1e-9 * expect.max(1.0));
        }

        #[test]
        fn dc_bound_minorizes((s, order, p, p_ref) in arb_case()) {
            let rates = user_rates(&s, &order, &p).unwrap();
            let at_ref = user_rates(&s, &order, &p_ref).unwrap();
            for k in 0..s.len() {
                let lb = dc_lower_bound(&s, &order, &p, &p_ref, k).unwrap();
                prop_assert!(lb <= rates[k] + 1e-6);
                let tight = dc_lower_bound(&s, &order, &p_ref, &p_ref, k).unwrap();
                prop_assert!((tight - at_ref[k]).abs() <= 1e-9 * at_ref[k].max(1.0));
            }
        }
    }
}
