//! Exponential-kernel interactions, reflection across a point, and the Laplace
//! representation of the one-dimensional energy.
//!
//! Writing `Khat_0(z) = int_0^inf C_q alpha^(q-1) / Gamma(q) e^(-alpha |z|) dalpha`
//! turns every power-law interaction into a superposition of exponential ones,
//! and those have closed forms on unions of intervals.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::energy1d::{chessboard_rhs, f0};
use crate::error::{domain, Result};
use crate::geometry::PeriodicSet1D;
use crate::kernels::{cq_constant, ModelParams};
use crate::quad::{integrate, integrate_to_infinity, Tolerance};

/// Sorted, disjoint closed intervals inside the window `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalUnion {
    pub lo: f64,
    pub hi: f64,
    pub intervals: Vec<(f64, f64)>,
}

impl IntervalUnion {
    pub fn new(lo: f64, hi: f64, mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        if !(hi > lo) {
            return domain(format!("empty window [{lo}, {hi}]"));
        }
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (i, &(a, b)) in intervals.iter().enumerate() {
            if !(a < b) || a < lo || b > hi {
                return domain(format!("interval [{a}, {b}] is empty or outside [{lo}, {hi}]"));
            }
            if i > 0 && intervals[i - 1].1 > a {
                return domain(format!("intervals overlap at {a}"));
            }
        }
        Ok(IntervalUnion { lo, hi, intervals })
    }

    /// Complementary intervals within the window.
    pub fn complement(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut cur = self.lo;
        for &(a, b) in &self.intervals {
            if a > cur {
                out.push((cur, a));
            }
            cur = b;
        }
        if self.hi > cur {
            out.push((cur, self.hi));
        }
        out
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| x >= a && x <= b)
    }
}

/// `int_I int_G e^(-alpha |x - y|) dy dx` for disjoint intervals.
pub fn rect_exp(i: (f64, f64), g: (f64, f64), alpha: f64) -> f64 {
    let ((a, b), (c, d)) = if i.1 <= g.0 { (i, g) } else { (g, i) };
    let gap = (c - b).max(0.0);
    (-(-alpha * (b - a)).exp_m1()) * (-(-alpha * (d - c)).exp_m1()) * (-alpha * gap).exp() / (alpha * alpha)
}

/// `-int int_{W^2} |chi_E(x) - chi_E(y)| e^(-alpha |x - y|)` over the window `W`.
pub fn exp_interaction(set: &IntervalUnion, alpha: f64) -> f64 {
    let comp = set.complement();
    let mut acc = 0.0;
    for &i in &set.intervals {
        for &g in &comp {
            acc += rect_exp(i, g, alpha);
        }
    }
    -2.0 * acc
}

/// Left part `E1 in [0, L1]` and right part `E2 in [L1, L]` with a rate `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionPair {
    pub l1: f64,
    pub l: f64,
    pub left: Vec<(f64, f64)>,
    pub right: Vec<(f64, f64)>,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReflectSide {
    Left,
    Right,
}

impl ReflectionPair {
    pub fn new(l1: f64, l: f64, left: Vec<(f64, f64)>, right: Vec<(f64, f64)>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return domain(format!("alpha must be positive, got {alpha}"));
        }
        if !(l1 > 0.0 && l > l1) {
            return domain(format!("need 0 < L1 < L, got L1 = {l1}, L = {l}"));
        }
        let left = IntervalUnion::new(0.0, l1, left)?.intervals;
        let right = IntervalUnion::new(l1, l, right)?.intervals;
        Ok(ReflectionPair { l1, l, left, right, alpha })
    }

    /// `E1 u E2` on `[0, L]`, merging intervals that meet at `L1`.
    pub fn union(&self) -> IntervalUnion {
        let mut v: Vec<(f64, f64)> = self.left.clone();
        for &(a, b) in &self.right {
            match v.last_mut() {
                Some(last) if last.1 >= a => last.1 = b,
                _ => v.push((a, b)),
            }
        }
        IntervalUnion { lo: 0.0, hi: self.l, intervals: v }
    }

    /// `J(E1, E2)`.
    pub fn interaction(&self) -> f64 {
        exp_interaction(&self.union(), self.alpha)
    }

    /// `(E1, theta E1)` on `[0, 2 L1]` or `(theta E2, E2)` on `[2 L1 - L, L]`,
    /// where `theta` reflects across `L1` and complements.
    pub fn reflect(&self, side: ReflectSide) -> IntervalUnion {
        let l1 = self.l1;
        let mirror = |v: &[(f64, f64)]| -> Vec<(f64, f64)> {
            let mut m: Vec<(f64, f64)> = v.iter().map(|&(a, b)| (2.0 * l1 - b, 2.0 * l1 - a)).collect();
            m.reverse();
            m
        };
        let (lo, hi, kept, mirrored_comp) = match side {
            ReflectSide::Left => {
                let src = IntervalUnion { lo: 0.0, hi: l1, intervals: self.left.clone() };
                (0.0, 2.0 * l1, self.left.clone(), mirror(&src.complement()))
            }
            ReflectSide::Right => {
                let src = IntervalUnion { lo: l1, hi: self.l, intervals: self.right.clone() };
                (2.0 * l1 - self.l, self.l, self.right.clone(), mirror(&src.complement()))
            }
        };
        let mut all: Vec<(f64, f64)> = kept.into_iter().chain(mirrored_comp).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(all.len());
        for (a, b) in all {
            match merged.last_mut() {
                Some(last) if last.1 >= a => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        IntervalUnion { lo, hi, intervals: merged }
    }
}

/// `J(E1, E2) - (J(E1, theta E1) + J(theta E2, E2)) / 2`, nonnegative by
/// reflection positivity.
pub fn rp_margin(pair: &ReflectionPair) -> f64 {
    let a = pair.alpha;
    pair.interaction()
        - 0.5
            * (exp_interaction(&pair.reflect(ReflectSide::Left), a)
                + exp_interaction(&pair.reflect(ReflectSide::Right), a))
}

/// The same margin written as a sum of squares of boundary-weighted masses.
pub fn rp_margin_squares(pair: &ReflectionPair) -> f64 {
    let alpha = pair.alpha;
    let l1 = pair.l1;
    let weight = |v: &[(f64, f64)], left: bool| -> f64 {
        v.iter()
            .map(|&(x, y)| {
                // int e^(-alpha dist(., L1)) over [x, y]
                let (near, far) = if left { (l1 - y, l1 - x) } else { (x - l1, y - l1) };
                ((-alpha * near).exp() - (-alpha * far).exp()) / alpha
            })
            .sum()
    };
    let lw = IntervalUnion { lo: 0.0, hi: l1, intervals: pair.left.clone() };
    let rw = IntervalUnion { lo: l1, hi: pair.l, intervals: pair.right.clone() };
    let a = weight(&pair.left, true);
    let ac = weight(&lw.complement(), true);
    let b = weight(&pair.right, false);
    let bc = weight(&rw.complement(), false);
    (a - bc).powi(2) + (ac - b).powi(2)
}

/// `e_{alpha,inf}(h) = -(2 / (alpha^2 h)) tanh(alpha h / 2)`: the exponential
/// interaction per length of stripes of width `h`, with the image series summed
/// exactly.
pub fn stripe_energy_alpha(h: f64, alpha: f64) -> Result<f64> {
    if !(h > 0.0 && alpha > 0.0) {
        return domain(format!("need h > 0 and alpha > 0, got h = {h}, alpha = {alpha}"));
    }
    Ok(-2.0 / (alpha * alpha * h) * (0.5 * alpha * h).tanh())
}

/// `1 - e^(-alpha x)` without cancellation.
fn one_minus_exp(alpha: f64, x: f64) -> f64 {
    -(-alpha * x).exp_m1()
}

/// `D_alpha(E) = 2 per / alpha^2 - int_R omega(z) e^(-alpha |z|) dz` for the
/// periodic set, evaluated in a form free of cancellation.
pub fn exp_deficit(set: &PeriodicSet1D, alpha: f64) -> f64 {
    let n = set.count();
    if n == 0 {
        return 0.0;
    }
    let l = set.period();
    let iv = set.intervals();
    let h = set.widths();
    let g = set.gaps();
    let near: f64 =
        set.boundary().iter().map(|b| (-alpha * b.h).exp() + (-alpha * b.g).exp() - (-alpha * (b.h + b.g)).exp()).sum();
    let wrap = -1.0 / (-alpha * l).exp_m1();
    let mut far = 0.0;
    for i in 0..n {
        let hi = one_minus_exp(alpha, h[i]);
        for j in 0..n {
            // gap j lies to the right of interval i at distance c, to the left at c2
            let c = if i == j { l } else { (iv[j].1 - iv[i].1).rem_euclid(l) };
            let next_start = if j + 1 < n { iv[j + 1].0 } else { iv[0].0 + l };
            let c2 = if (j + 1) % n == i { l } else { (iv[i].0 - next_start).rem_euclid(l) };
            far += hi * one_minus_exp(alpha, g[j]) * ((-alpha * c).exp() + (-alpha * c2).exp());
        }
    }
    2.0 / (alpha * alpha) * (near - far * wrap)
}

/// `D_alpha - (2/alpha^2) sum_x [s(alpha h) + s(alpha g)]`, `s(y) = e^-y / (1 + e^-y)`:
/// the periodic exponential chessboard margin, zero for stripes.
pub fn chessboard_exp_margin(set: &PeriodicSet1D, alpha: f64) -> f64 {
    let s = |y: f64| {
        let e = (-y).exp();
        e / (1.0 + e)
    };
    let bound: f64 = set.boundary().iter().map(|b| s(alpha * b.h) + s(alpha * b.g)).sum();
    exp_deficit(set, alpha) - 2.0 / (alpha * alpha) * bound
}

/// `-(1/k) int int_{[0,kL]^2} |chi - chi| e^(-alpha|x-y|)` on `k` copies of
/// the period with free ends, plus `2 per / alpha^2`. Tends to `D_alpha` as
/// `k -> inf`, at rate `1/k`.
pub fn exp_deficit_free(set: &PeriodicSet1D, alpha: f64, k: usize) -> Result<f64> {
    let l = set.period();
    let mut v: Vec<(f64, f64)> = Vec::new();
    for m in 0..k {
        let shift = m as f64 * l;
        for &(a, b) in &set.segments() {
            let (a, b) = (a + shift, b + shift);
            match v.last_mut() {
                Some(last) if last.1 >= a => last.1 = b,
                _ => v.push((a, b)),
            }
        }
    }
    let u = IntervalUnion::new(0.0, k as f64 * l, v)?;
    Ok(2.0 * set.perimeter() / (alpha * alpha) + exp_interaction(&u, alpha) / k as f64)
}

/// Unit-mass density on `(0, inf)` used to split the perimeter term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Density {
    /// `e^-alpha`.
    Exponential,
    /// `alpha^(k-1) e^(-alpha/theta) / (Gamma(k) theta^k)`.
    Gamma { shape: f64, scale: f64 },
}

impl Density {
    pub fn value(&self, alpha: f64) -> f64 {
        match *self {
            Density::Exponential => (-alpha).exp(),
            Density::Gamma { shape, scale } => {
                alpha.powf(shape - 1.0) * (-alpha / scale).exp() / (gamma(shape) * scale.powf(shape))
            }
        }
    }
}

/// Laplace integrand: `(1/L)[-rho(alpha) per + C_q alpha^(q-1) / Gamma(q) D_alpha]`.
pub fn laplace_integrand(set: &PeriodicSet1D, params: &ModelParams, rho: Density, alpha: f64) -> f64 {
    if alpha <= 0.0 {
        return 0.0;
    }
    let q = params.q();
    let w = cq_constant(params) * alpha.powf(q - 1.0) / gamma(q);
    (-rho.value(alpha) * set.perimeter() + w * exp_deficit(set, alpha)) / set.period()
}

/// `|F0(E) - int_0^inf laplace_integrand dalpha|`.
pub fn laplace_identity_residual(set: &PeriodicSet1D, params: &ModelParams, rho: Density, tol: f64) -> Result<f64> {
    if set.count() == 0 {
        return Ok(0.0);
    }
    let exact = f0(set, params, tol * 1e-3)?.total;
    let scale = 1.0 / set.min_scale();
    let t = Tolerance::new(tol * 1e-2, 1e-12);
    let f = |a: f64| laplace_integrand(set, params, rho, a);
    let lap = integrate(f, 0.0, scale, t)? + integrate_to_infinity(f, scale, scale, t)?;
    Ok((exact - lap.value).abs())
}

/// `(1/L) int_0^inf C_q alpha^(q-1)/Gamma(q) chessboard_exp_margin dalpha`,
/// which equals `F0(E) - chessboard_rhs(E)`.
pub fn integrated_exp_margin(set: &PeriodicSet1D, params: &ModelParams, tol: f64) -> Result<f64> {
    if set.count() == 0 {
        return Ok(0.0);
    }
    let q = params.q();
    let c = cq_constant(params) / gamma(q);
    let f = |a: f64| if a <= 0.0 { 0.0 } else { c * a.powf(q - 1.0) * chessboard_exp_margin(set, a) };
    let scale = 1.0 / set.min_scale();
    let t = Tolerance::new(tol, 1e-12);
    let v = integrate(f, 0.0, scale, t)? + integrate_to_infinity(f, scale, scale, t)?;
    Ok(v.value / set.period())
}

/// `F0(E) - chessboard_rhs(E)` via the exact one-dimensional evaluator.
pub fn chessboard_margin(set: &PeriodicSet1D, params: &ModelParams, tol: f64) -> Result<f64> {
    Ok(f0(set, params, tol)?.total - chessboard_rhs(set, params)?)
}
