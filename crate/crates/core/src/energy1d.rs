//! One-dimensional energies: the nonlocal term `G1d`, the limit functional
//! `F0`, the infinite-stripe energy `e_inf`, and the chessboard lower bound.

use serde::Serialize;

use crate::error::Result;
use crate::geometry::{PeriodicSet1D, PiecewiseLinearProfile};
use crate::kernels::{cbar_constant, cq_constant, deficit_tail_coefficient, marginal_deficit, ModelParams};
use crate::quad::{integrate, Estimate, Tolerance};

/// Itemized energy. In one dimension `per_direction` has a single entry and
/// `cross_term` is zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub total: f64,
    pub perimeter_term: f64,
    pub nonlocal_term: f64,
    pub per_direction: Vec<f64>,
    pub cross_term: f64,
    pub err_estimate: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// `int_a^{a+w} z^-q dz`, accurate when `w << a`.
fn power_moment0(q: f64, a: f64, w: f64) -> f64 {
    let lx = (w / a).ln_1p();
    a.powf(1.0 - q) * (-((1.0 - q) * lx).exp_m1()) / (q - 1.0)
}

/// `int_a^{a+w} (z - a) z^-q dz`.
fn power_moment1(q: f64, a: f64, w: f64) -> f64 {
    let lx = (w / a).ln_1p();
    a.powf(2.0 - q) * (((2.0 - q) * lx).exp_m1() / (2.0 - q) - ((1.0 - q) * lx).exp_m1() / (1.0 - q))
}

/// Linear pieces of the bracket `P z - omega(z)` over one period, as
/// `(z0, width, value at z0, slope)` relative to the start of the period.
fn bracket_pieces(profile: &PiecewiseLinearProfile, per: f64) -> Vec<(f64, f64, f64, f64)> {
    profile
        .pieces()
        .map(|(z0, z1, v0, v1)| {
            let w = z1 - z0;
            (z0, w, per * z0 - v0, per - (v1 - v0) / w)
        })
        .collect()
}

/// Bracket pieces on `[b1, inf)` in increasing order; the bracket vanishes
/// identically on `[0, b1]`.
fn bracket_pieces_from(profile: &PiecewiseLinearProfile, per: f64) -> impl Iterator<Item = (f64, f64, f64, f64)> {
    let pieces = bracket_pieces(profile, per);
    let l = profile.l;
    (0usize..).flat_map(move |k| {
        let shift = k as f64 * l;
        let skip = usize::from(k == 0);
        pieces.clone().into_iter().skip(skip).map(move |(z0, w, b0, slope)| (z0 + shift, w, b0 + per * shift, slope))
    })
}

/// `(1/2) int_0^L |omega - mean|`, which bounds the antiderivative of `omega - mean`.
fn oscillation(profile: &PiecewiseLinearProfile, mean: f64) -> f64 {
    let mut acc = 0.0;
    for (z0, z1, v0, v1) in profile.pieces() {
        let (a, b) = (v0 - mean, v1 - mean);
        let w = z1 - z0;
        acc +=
            if a * b >= 0.0 { 0.5 * w * (a.abs() + b.abs()) } else { 0.5 * w * (a * a + b * b) / (a.abs() + b.abs()) };
    }
    0.5 * acc
}

/// `G1d(E) = int_R Khat_tau(z) (per |z| - omega(z)) dz`.
///
/// `tol` is an absolute error target. At `tau = 0` the integral is done piece
/// by piece in closed form with an analytic far-field tail; for `tau > 0` the
/// deficit `Khat_0 - Khat_tau` is integrated adaptively and subtracted.
pub fn g1d(set: &PeriodicSet1D, params: &ModelParams, tol: f64) -> Result<Estimate> {
    if set.count() == 0 {
        return Ok(Estimate::exact(0.0));
    }
    let exact = g1d_limit(set, params, tol / 2.0)?;
    if params.tau == 0.0 {
        return Ok(exact);
    }
    let deficit = deficit_integral(set, params, tol / 2.0)?;
    Ok(Estimate {
        value: exact.value - deficit.value,
        error: exact.error + deficit.error,
        evaluations: exact.evaluations + deficit.evaluations,
    })
}

fn g1d_limit(set: &PeriodicSet1D, params: &ModelParams, tol: f64) -> Result<Estimate> {
    let q = params.q();
    let l = set.period();
    let per = set.perimeter();
    let cq = cq_constant(params);
    let profile = set.difference_profile();
    let mean = profile.mean();
    let osc = oscillation(&profile, mean);

    // smallest whole number of periods making 2 C_q osc Z^-q <= tol/2
    let z_needed = (4.0 * cq * osc / tol).powf(1.0 / q);
    let periods = ((z_needed / l).ceil() as usize).clamp(2, 1_000_000);
    let z_far = periods as f64 * l;

    let mut sum = 0.0;
    let mut mag = 0.0;
    for (a, w, b0, slope) in bracket_pieces_from(&profile, per) {
        if a >= z_far * (1.0 - 1e-14) {
            break;
        }
        let t = b0 * power_moment0(q, a, w) + slope * power_moment1(q, a, w);
        sum += t;
        mag += t.abs();
    }
    let tail = per * z_far.powf(2.0 - q) / (q - 2.0) - mean * z_far.powf(1.0 - q) / (q - 1.0);
    let remainder = osc * z_far.powf(-q);
    let value = 2.0 * cq * (sum + tail);
    let error = 2.0 * cq * (remainder + 16.0 * f64::EPSILON * (mag + tail.abs()));
    Ok(Estimate { value, error, evaluations: 0 })
}

/// `2 int_{b1}^inf (Khat_0 - Khat_tau)(z) (per z - omega(z)) dz`.
fn deficit_integral(set: &PeriodicSet1D, params: &ModelParams, tol: f64) -> Result<Estimate> {
    let per = set.perimeter();
    let profile = set.difference_profile();
    let d = params.d as f64;
    let expo = 2.0 * params.p - d - 1.0;
    let cc = deficit_tail_coefficient(params);
    // 2 cc per Z^-(2p-d-1) / (2p-d-1) <= tol/2
    let z_far = (4.0 * cc * per / (expo * tol)).powf(1.0 / expo).max(profile.breakpoints[1]);
    let jobs: Vec<_> = bracket_pieces_from(&profile, per).take_while(|&(a, ..)| a < z_far).collect();
    let covered = jobs.last().map_or(z_far, |&(a, w, _, _)| a + w);
    let tol_piece = Tolerance::new(tol / (4.0 * jobs.len().max(1) as f64), 1e-11);
    let inner = 1e-12;
    let mut acc = Estimate::default();
    let mut inner_fail = None;
    for &(a, w, b0, slope) in &jobs {
        let est = integrate(
            |z: f64| match marginal_deficit(z, params, inner) {
                Ok(e) => e.value * (b0 + slope * (z - a)),
                Err(e) => {
                    inner_fail.get_or_insert(e);
                    f64::NAN
                }
            },
            a,
            a + w,
            tol_piece,
        );
        if let Some(e) = inner_fail.take() {
            return Err(e);
        }
        acc = acc + est?;
    }
    let tail = 2.0 * cc * per * covered.powf(-expo) / expo;
    Ok(Estimate {
        value: 2.0 * acc.value,
        error: 2.0 * acc.error + 2.0 * inner * acc.value.abs() + tail,
        evaluations: acc.evaluations,
    })
}

/// `F0(E) = (1/L)(-per + G1d_0(E))`; the temperature in `params` is ignored.
pub fn f0(set: &PeriodicSet1D, params: &ModelParams, tol: f64) -> Result<EnergyReport> {
    let limit = ModelParams { tau: 0.0, ..*params };
    energy_at(set, &limit, tol)
}

/// `(1/L)(-per + G1d_tau(E))`, the one-dimensional energy at temperature `tau`.
pub fn energy_at(set: &PeriodicSet1D, params: &ModelParams, tol: f64) -> Result<EnergyReport> {
    let l = set.period();
    let g = g1d(set, params, tol)?;
    let perimeter_term = -set.perimeter() / l;
    let nonlocal = g.value / l;
    Ok(EnergyReport {
        total: perimeter_term + nonlocal,
        perimeter_term,
        nonlocal_term: nonlocal,
        per_direction: vec![nonlocal],
        cross_term: 0.0,
        err_estimate: g.error / l,
        notes: Vec::new(),
    })
}

/// `e_inf(h) = -1/h + Cbar_q h^-(q-1)`, the energy per length of stripes of width `h`.
pub fn stripe_energy_inf(h: f64, params: &ModelParams) -> Result<f64> {
    if !(h > 0.0) {
        return crate::error::domain(format!("stripe width must be positive, got {h}"));
    }
    Ok(-1.0 / h + cbar_constant(params)? * h.powf(1.0 - params.q()))
}

/// `(1/2L) sum_x [h(x) e_inf(h(x)) + g(x) e_inf(g(x))]`.
pub fn chessboard_rhs(set: &PeriodicSet1D, params: &ModelParams) -> Result<f64> {
    let mut acc = 0.0;
    for b in set.boundary() {
        acc += b.h * stripe_energy_inf(b.h, params)? + b.g * stripe_energy_inf(b.g, params)?;
    }
    Ok(acc / (2.0 * set.period()))
}

/// `G1d(E) / sum_x [min(h^-beta, 1/tau) + min(g^-beta, 1/tau)]`, a diagnostic
/// for the width/gap lower bound.
pub fn width_gap_ratio(set: &PeriodicSet1D, params: &ModelParams, tol: f64) -> Result<f64> {
    let beta = params.beta();
    let cap = if params.tau > 0.0 { 1.0 / params.tau } else { f64::INFINITY };
    let denom: f64 = set.boundary().iter().map(|b| b.h.powf(-beta).min(cap) + b.g.powf(-beta).min(cap)).sum();
    if denom == 0.0 {
        return Ok(f64::NAN);
    }
    Ok(g1d(set, params, tol)?.value / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::random_set;
    use crate::geometry::make_stripes;
    use crate::kernels::marginal_kernel;
    use crate::quad::integrate_to_infinity;
    use crate::rng::SplitMix64;
    use std::f64::consts::PI;

    fn m25() -> ModelParams {
        ModelParams::new(2, 5.0).unwrap()
    }

    #[test]
    fn moments_match_quadrature() {
        for (a, w) in [(0.3, 2.0), (50.0, 0.01), (1.0, 1.0)] {
            let q = 4.5;
            let t = Tolerance::relative(1e-13);
            let m0 = integrate(|z: f64| z.powf(-q), a, a + w, t).unwrap().value;
            let m1 = integrate(|z: f64| (z - a) * z.powf(-q), a, a + w, t).unwrap().value;
            assert!((power_moment0(q, a, w) - m0).abs() < 1e-12 * m0);
            assert!((power_moment1(q, a, w) - m1).abs() < 1e-10 * m1);
        }
    }

    #[test]
    fn stripes_closed_form() {
        let m = m25();
        let cbar = 2.0 * PI * PI / 27.0;
        for h in [0.5, 1.0, 1.5, 2.0] {
            let s = make_stripes(h, 2.0 * h).unwrap();
            let e = f0(&s, &m, 1e-13).unwrap();
            let expect = -1.0 / h + cbar * h.powi(-3);
            assert!(((e.total - expect) / expect).abs() < 1e-10, "h={h}");
            assert!((stripe_energy_inf(h, &m).unwrap() - expect).abs() < 1e-13 * expect.abs());
            // several periods of the same pattern give the same energy per length
            let s4 = make_stripes(h, 8.0 * h).unwrap();
            assert!((f0(&s4, &m, 1e-13).unwrap().total - expect).abs() < 1e-10);
        }
        assert!((stripe_energy_inf(1.0, &m).unwrap() + 0.268_918_192_511_899).abs() < 1e-12);
    }

    #[test]
    fn empty_and_full_sets() {
        let m = m25();
        assert_eq!(g1d(&PeriodicSet1D::empty(3.0).unwrap(), &m, 1e-10).unwrap().value, 0.0);
        assert_eq!(f0(&PeriodicSet1D::full(3.0).unwrap(), &m, 1e-10).unwrap().total, 0.0);
    }

    /// Midpoint sums for both the profile and the z-integral, with the exact
    /// power tail beyond `z_max`.
    fn riemann_g1d(set: &PeriodicSet1D, m: &ModelParams, nx: usize, nz: usize, z_max: f64) -> f64 {
        let l = set.period();
        let dx = l / nx as f64;
        let xs: Vec<bool> = (0..nx).map(|i| set.contains((i as f64 + 0.5) * dx)).collect();
        let omega = |z: f64| (0..nx).filter(|&i| xs[i] != set.contains((i as f64 + 0.5) * dx + z)).count() as f64 * dx;
        let cq = cq_constant(m);
        let q = m.q();
        let per = set.perimeter();
        // the bracket vanishes below the smallest width or gap
        let z_min = set.min_scale();
        let dz = (z_max - z_min) / nz as f64;
        let mut acc = 0.0;
        for k in 0..nz {
            let z = z_min + (k as f64 + 0.5) * dz;
            let b = per * z - omega(z);
            if b > 0.0 {
                acc += cq * z.powf(-q) * b * dz;
            }
        }
        let mean = 2.0 * set.measure() * (l - set.measure()) / l;
        acc += cq * (per * z_max.powf(2.0 - q) / (q - 2.0) - mean * z_max.powf(1.0 - q) / (q - 1.0));
        2.0 * acc
    }

    #[test]
    fn single_interval_matches_riemann_oracle() {
        let m = m25();
        let s = PeriodicSet1D::new(3.0, vec![(0.0, 1.0)]).unwrap();
        let exact = g1d(&s, &m, 1e-12).unwrap();
        let oracle = riemann_g1d(&s, &m, 3000, 10_000, 30.0);
        assert!(((exact.value - oracle) / exact.value).abs() < 1e-4, "{} vs {oracle}", exact.value);
        assert!(exact.error < 1e-11);
    }

    #[test]
    fn random_sets_match_riemann_oracle() {
        let m = m25();
        let mut g = SplitMix64::new(21);
        let (nx, nz) = (8000, 8000);
        for _ in 0..5 {
            let s = random_set(&mut g);
            let exact = g1d(&s, &m, 1e-12).unwrap().value;
            let z_max = 4.0 * s.period();
            let oracle = riemann_g1d(&s, &m, nx, nz, z_max);
            // sampled omega is off by at most 2 per dx; midpoint rule error from f''
            let (q, cq, b1, per) = (m.q(), cq_constant(&m), s.min_scale(), s.perimeter());
            let dx = s.period() / nx as f64;
            let dz = (z_max - b1) / nz as f64;
            let sampling = 2.0 * cq * 2.0 * per * dx * b1.powf(1.0 - q) / (q - 1.0);
            let midpoint = 2.0 * cq * dz * dz / 24.0 * q * (q + 1.0) * per * b1.powf(-q) * z_max;
            assert!((exact - oracle).abs() <= sampling + midpoint, "{exact} vs {oracle}");
        }
    }

    #[test]
    fn positive_tau_matches_direct_quadrature() {
        // integrate Khat_tau against the bracket directly, without the deficit form
        let mut g = SplitMix64::new(4);
        for tau in [0.05, 1.0] {
            let m = m25().with_tau(tau).unwrap();
            let s = random_set(&mut g);
            let per = s.perimeter();
            let w = s.difference_profile();
            let mut pts: Vec<f64> = Vec::new();
            for k in 0..30 {
                pts.extend(w.breakpoints.iter().map(|b| b + k as f64 * s.period()));
            }
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            let t = Tolerance::new(1e-11, 1e-9);
            let f = |z: f64| marginal_kernel(z, &m, 1e-12).unwrap().value * (per * z - w.value(z));
            let mut direct = 0.0;
            for p in pts.windows(2) {
                direct += integrate(f, p[0], p[1], t).unwrap().value;
            }
            // beyond 30 periods omega is replaced by its mean; the error is far below tolerance
            let last = *pts.last().unwrap();
            let mean = w.mean();
            let smooth = |z: f64| marginal_kernel(z, &m, 1e-12).unwrap().value * (per * z - mean);
            direct += integrate_to_infinity(smooth, last, last, t).unwrap().value;
            direct *= 2.0;
            let ours = g1d(&s, &m, 1e-10).unwrap();
            assert!((ours.value - direct).abs() < 1e-8 * direct.abs().max(1.0), "{} vs {direct}", ours.value);
            assert!(ours.error < 1e-9);
        }
    }

    #[test]
    fn monotone_in_tau_and_nonnegative() {
        let mut g = SplitMix64::new(8);
        for _ in 0..5 {
            let s = random_set(&mut g);
            let mut prev = -1.0;
            for tau in [1.0, 0.1, 0.01, 0.001, 0.0] {
                let v = g1d(&s, &m25().with_tau(tau).unwrap(), 1e-10).unwrap();
                assert!(v.value >= 0.0);
                assert!(v.value >= prev - v.error, "tau={tau}");
                prev = v.value;
            }
        }
    }

    #[test]
    fn chessboard_examples() {
        let m = m25();
        for h in [0.7, 1.3] {
            let s = make_stripes(h, 4.0 * h).unwrap();
            assert!((chessboard_rhs(&s, &m).unwrap() - stripe_energy_inf(h, &m).unwrap()).abs() < 1e-14);
        }
        let s = PeriodicSet1D::new(3.0, vec![(0.0, 1.0)]).unwrap();
        let expect = (2.0 * stripe_energy_inf(1.0, &m).unwrap() + 4.0 * stripe_energy_inf(2.0, &m).unwrap()) / 6.0;
        assert!((chessboard_rhs(&s, &m).unwrap() - expect).abs() < 1e-15);
        let mut g = SplitMix64::new(1);
        for _ in 0..50 {
            let s = random_set(&mut g);
            let lhs = f0(&s, &m, 1e-12).unwrap().total;
            assert!(lhs - chessboard_rhs(&s, &m).unwrap() >= -1e-9);
        }
    }

    #[test]
    fn report_is_itemized() {
        let s = PeriodicSet1D::new(5.0, vec![(1.0, 2.5)]).unwrap();
        let r = f0(&s, &m25(), 1e-12).unwrap();
        let sum: f64 = r.perimeter_term + r.per_direction.iter().sum::<f64>() + r.cross_term;
        assert!((r.total - sum).abs() <= r.err_estimate + 1e-15);
        assert!(r.nonlocal_term >= 0.0);
        // a fixed interval in a growing period: energy per length tends to zero
        let big = PeriodicSet1D::new(500.0, vec![(1.0, 2.5)]).unwrap();
        assert!(f0(&big, &m25(), 1e-12).unwrap().total.abs() < 0.01);
    }

    #[test]
    fn width_gap_ratio_is_positive() {
        let mut g = SplitMix64::new(12);
        let mut lo = f64::INFINITY;
        for _ in 0..20 {
            let s = random_set(&mut g);
            lo = lo.min(width_gap_ratio(&s, &m25(), 1e-10).unwrap());
        }
        assert!(lo > 0.0);
    }
}
