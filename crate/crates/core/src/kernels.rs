//! Power-law kernels with a temperature floor and the constants derived from them.
//!
//! The kernel is `K_tau(zeta) = 1 / (|zeta|^p + tau^(p/beta))` on `R^d`, with
//! `q = p - d + 1` and `beta = p - d - 1`. Its marginal on a coordinate axis is
//! `Khat_tau(z) = int_{R^(d-1)} K_tau(z, xi) dxi`, which at `tau = 0` reduces to
//! `C_q |z|^(-q)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{domain, Result};
use crate::quad::{integrate, integrate_to_infinity, Estimate, Tolerance};

/// Dimension, exponent, temperature, interfacial weight and period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub d: usize,
    pub p: f64,
    pub tau: f64,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "L")]
    pub l: f64,
}

impl ModelParams {
    /// Parameters with `tau = 0`, `J = 0` and `L = 1`.
    pub fn new(d: usize, p: f64) -> Result<Self> {
        let m = ModelParams { d, p, tau: 0.0, j: 0.0, l: 1.0 };
        m.validate()?;
        Ok(m)
    }

    pub fn with_tau(self, tau: f64) -> Result<Self> {
        let m = ModelParams { tau, ..self };
        m.validate()?;
        Ok(m)
    }

    pub fn with_j(self, j: f64) -> Self {
        ModelParams { j, ..self }
    }

    pub fn with_l(self, l: f64) -> Result<Self> {
        let m = ModelParams { l, ..self };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return domain(format!("dimension must be at least 2, got {}", self.d));
        }
        if !(self.p > 2.0 * self.d as f64) || !self.p.is_finite() {
            return domain(format!("exponent p = {} must exceed 2d = {}", self.p, 2 * self.d));
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return domain(format!("tau = {} must be finite and nonnegative", self.tau));
        }
        if !(self.l > 0.0) || !self.l.is_finite() {
            return domain(format!("period L = {} must be positive", self.l));
        }
        Ok(())
    }

    pub fn q(&self) -> f64 {
        self.p - self.d as f64 + 1.0
    }

    pub fn beta(&self) -> f64 {
        self.p - self.d as f64 - 1.0
    }

    /// `tau^(p/beta)`, the floor added to `|zeta|^p`.
    pub fn floor(&self) -> f64 {
        tau_power(self.tau, self.p / self.beta())
    }

    /// `tau^(1/beta)`, the length scale below which the floor dominates.
    pub fn floor_length(&self) -> f64 {
        tau_power(self.tau, 1.0 / self.beta())
    }
}

/// `tau^e` evaluated in log space so small temperatures do not underflow early.
pub fn tau_power(tau: f64, e: f64) -> f64 {
    if tau == 0.0 {
        0.0
    } else {
        (e * tau.ln()).exp()
    }
}

/// Surface area of the unit sphere in `R^k`, `2 pi^(k/2) / Gamma(k/2)`.
pub fn sphere_area(k: usize) -> f64 {
    let h = k as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// `int_{S^(d-1)} |omega_1| d omega = 2 pi^((d-1)/2) / Gamma((d+1)/2)`.
pub fn sphere_abs_moment(d: usize) -> f64 {
    2.0 * PI.powf((d as f64 - 1.0) / 2.0) / gamma((d as f64 + 1.0) / 2.0)
}

/// `int_0^inf r^(s-1) / (r^p + c) dr = c^(s/p - 1) (pi/p) / sin(s pi / p)` for `0 < s < p`, `c > 0`.
pub fn radial_moment(s: f64, p: f64, c: f64) -> f64 {
    c.powf(s / p - 1.0) * (PI / p) / (s * PI / p).sin()
}

pub fn kernel_value(zeta: &[f64], params: &ModelParams) -> f64 {
    let r2: f64 = zeta.iter().map(|x| x * x).sum();
    let c = params.floor();
    if r2 == 0.0 && c == 0.0 {
        return f64::INFINITY;
    }
    1.0 / (r2.powf(params.p / 2.0) + c)
}

/// `int_{R^d} K_tau`, finite only for `tau > 0`.
pub fn kernel_mass(params: &ModelParams) -> f64 {
    let c = params.floor();
    if c == 0.0 {
        return f64::INFINITY;
    }
    sphere_area(params.d) * radial_moment(params.d as f64, params.p, c)
}

/// `int_{R^d} K_tau(zeta) |zeta_1| dzeta`, equal to `J_c / tau` for `tau > 0`.
pub fn kernel_abs_moment(params: &ModelParams) -> f64 {
    let c = params.floor();
    if c == 0.0 {
        return f64::INFINITY;
    }
    sphere_abs_moment(params.d) * radial_moment(params.d as f64 + 1.0, params.p, c)
}

/// `C_q = pi^((d-1)/2) Gamma(q/2) / Gamma(p/2)`, the constant in `Khat_0(z) = C_q |z|^(-q)`.
pub fn cq_constant(params: &ModelParams) -> f64 {
    let d = params.d as f64;
    let lg = ln_gamma(params.q() / 2.0) - ln_gamma(params.p / 2.0);
    PI.powf((d - 1.0) / 2.0) * lg.exp()
}

/// Riemann zeta for real `s > 1` by Euler-Maclaurin summation.
pub fn riemann_zeta(s: f64) -> Result<f64> {
    if !(s > 1.0) {
        return domain(format!("zeta({s}) diverges"));
    }
    // B_2 .. B_20
    const B: [f64; 10] = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
        7.0 / 6.0,
        -3617.0 / 510.0,
        43867.0 / 798.0,
        -174611.0 / 330.0,
    ];
    let n = 16.0_f64;
    let mut head = 0.0;
    for k in (1..16).rev() {
        head += (k as f64).powf(-s);
    }
    let mut tail = n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    // term j: B_2j / (2j)! * s (s+1) ... (s+2j-2) * n^(-s-2j+1)
    let mut rising = s;
    let mut fact = 2.0;
    let mut npow = n.powf(-s - 1.0);
    for (j, b) in B.iter().enumerate() {
        let term = b / fact * rising * npow;
        tail += term;
        if term.abs() < 1e-18 * (head + tail) {
            break;
        }
        let k = 2.0 * (j as f64 + 1.0);
        rising *= (s + k - 1.0) * (s + k);
        fact *= (k + 1.0) * (k + 2.0);
        npow /= n * n;
    }
    Ok(head + tail)
}

/// `Cbar_q = 4 C_q (1 - 2^-(q-3)) zeta(q-2) / ((q-2)(q-1))`.
pub fn cbar_constant(params: &ModelParams) -> Result<f64> {
    let q = params.q();
    if !(q > 3.0) {
        return domain(format!("Cbar_q requires q > 3, got q = {q}"));
    }
    let z = riemann_zeta(q - 2.0)?;
    Ok(4.0 * cq_constant(params) * (-(-(q - 3.0) * 2f64.ln()).exp_m1()) * z / ((q - 2.0) * (q - 1.0)))
}

/// Closed form `J_c = omega_d (pi/p) / sin((d+1) pi / p)`.
pub fn jc_closed_form(params: &ModelParams) -> f64 {
    sphere_abs_moment(params.d) * radial_moment(params.d as f64 + 1.0, params.p, 1.0)
}

/// `J_c = int_{R^d} |zeta_1| / (1 + |zeta|^p)`, by radial quadrature times the
/// angular moment of `|omega_1|`.
pub fn jc_constant(params: &ModelParams, tol: f64) -> Result<Estimate> {
    let d = params.d as i32;
    let p = params.p;
    let f = |r: f64| r.powi(d) / (1.0 + r.powf(p));
    let t = Tolerance::relative(tol / 2.0);
    let est = integrate(f, 0.0, 1.0, t)? + integrate_to_infinity(f, 1.0, 1.0, t)?;
    let w = sphere_abs_moment(params.d);
    Ok(Estimate { value: w * est.value, error: w * est.error, ..est })
}

/// `Khat_tau(z)`. Closed form at `tau = 0`, radial quadrature otherwise.
pub fn marginal_kernel(z: f64, params: &ModelParams, tol: f64) -> Result<Estimate> {
    let z = z.abs();
    let c = params.floor();
    if c == 0.0 {
        if z == 0.0 {
            return Ok(Estimate::exact(f64::INFINITY));
        }
        return Ok(Estimate::exact(cq_constant(params) * z.powf(-params.q())));
    }
    let k = params.d - 2;
    let half_p = params.p / 2.0;
    let z2 = z * z;
    let f = |r: f64| r.powi(k as i32) / ((z2 + r * r).powf(half_p) + c);
    radial(f, z.max(params.floor_length()), params.d, tol)
}

/// `Khat_0(z) - Khat_tau(z) >= 0`, evaluated without cancellation.
pub fn marginal_deficit(z: f64, params: &ModelParams, tol: f64) -> Result<Estimate> {
    let z = z.abs();
    let c = params.floor();
    if c == 0.0 {
        return Ok(Estimate::exact(0.0));
    }
    if z == 0.0 {
        return Ok(Estimate::exact(f64::INFINITY));
    }
    let k = params.d - 2;
    let half_p = params.p / 2.0;
    let z2 = z * z;
    let f = |r: f64| {
        let a = (z2 + r * r).powf(half_p);
        r.powi(k as i32) * c / (a * (a + c))
    };
    radial(f, z.max(params.floor_length()), params.d, tol)
}

/// Bound on `marginal_deficit` for `|z|` large: `c C' |z|^(d-1-2p)`.
pub fn deficit_tail_coefficient(params: &ModelParams) -> f64 {
    let d = params.d as f64;
    let p = params.p;
    let lg = ln_gamma(p - (d - 1.0) / 2.0) - ln_gamma(p);
    params.floor() * PI.powf((d - 1.0) / 2.0) * lg.exp()
}

fn radial<F: Fn(f64) -> f64>(f: F, split: f64, d: usize, tol: f64) -> Result<Estimate> {
    let t = Tolerance::relative(tol / 2.0);
    let est = integrate(&f, 0.0, split, t)? + integrate_to_infinity(&f, split, split, t)?;
    let s = sphere_area(d - 1);
    Ok(Estimate { value: s * est.value, error: s * est.error, ..est })
}

/// Ratio `Khat_tau(z) (|z|^q + tau^(q/beta))` over a grid; returns its (min, max).
pub fn sandwich_constants(params: &ModelParams, zs: &[f64], taus: &[f64], tol: f64) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for &tau in taus {
        let m = params.with_tau(tau)?;
        let floor_q = tau_power(tau, m.q() / m.beta());
        for &z in zs {
            let k = marginal_kernel(z, &m, tol)?.value;
            let r = k * (z.abs().powf(m.q()) + floor_q);
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    Ok((lo, hi))
}
