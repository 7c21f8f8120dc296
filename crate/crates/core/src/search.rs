//! Optimizers and experiment drivers: the optimal stripe width, minimizers of
//! the limit functional on a period, temperature sweeps and the scaling law
//! of the minimal energy.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::energy1d::{f0, g1d, stripe_energy_inf};
use crate::error::{domain, Error, Result};
use crate::geometry::{aligned_sym_diff, stripes_count, PeriodicSet1D};
use crate::kernels::{cbar_constant, ModelParams};

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section minimization on `[a, b]` driven by `diff(x, y)`, which must
/// return `f(x) - f(y)`. Passing an accurate difference instead of two rounded
/// values lets the search resolve the minimizer far below `sqrt(eps)`.
///
/// Stops when the bracket is narrower than `xtol` times its midpoint. Fails
/// when the first interior point is not below both ends.
pub fn golden_section<F: FnMut(f64, f64) -> f64>(mut diff: F, a: f64, b: f64, xtol: f64) -> Result<f64> {
    if !(a < b) {
        return Err(Error::Bracketing(format!("empty bracket [{a}, {b}]")));
    }
    let (mut a, mut b) = (a, b);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    if !(diff(c, a) < 0.0 && diff(d, b) < 0.0) {
        return Err(Error::Bracketing(format!("no interior minimum detected in [{a}, {b}]")));
    }
    for _ in 0..400 {
        if b - a <= xtol * 0.5 * (a.abs() + b.abs()) {
            break;
        }
        if diff(c, d) < 0.0 {
            b = d;
            d = c;
            c = b - INV_PHI * (b - a);
        } else {
            a = c;
            c = d;
            d = a + INV_PHI * (b - a);
        }
    }
    Ok(0.5 * (a + b))
}

/// Optimal stripe width and energy.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HStar {
    /// Golden-section minimizer of `e_inf`.
    pub h_star: f64,
    /// `e_inf(h_star)`.
    pub e_star: f64,
    /// Stationary point `((q-1) Cbar_q)^(1/(q-2))`.
    pub closed_form: f64,
}

/// `e_inf(x) - e_inf(y)` without the cancellation of subtracting two values.
fn stripe_energy_difference(x: f64, y: f64, q: f64, cbar: f64) -> f64 {
    let first = (x - y) / (x * y);
    let second = cbar * y.powf(1.0 - q) * ((1.0 - q) * ((x - y) / y).ln_1p()).exp_m1();
    first + second
}

/// Minimizer of `e_inf(h) = -1/h + Cbar_q h^(1-q)`, found by golden section
/// and checked against the stationarity condition.
pub fn find_hstar(params: &ModelParams) -> Result<HStar> {
    let q = params.q();
    if !(q > 3.0) {
        return domain(format!("need q > 3 for a positive stripe constant, got q = {q}"));
    }
    let cbar = cbar_constant(params)?;
    let closed_form = ((q - 1.0) * cbar).powf(1.0 / (q - 2.0));
    // e_inf vanishes at Cbar^(1/(q-2)) and tends to 0 from below at infinity,
    // so the minimum lies in between
    let zero = cbar.powf(1.0 / (q - 2.0));
    let h = golden_section(|x, y| stripe_energy_difference(x, y, q, cbar), 0.5 * zero, 50.0 * zero, 1e-15)?;
    if ((h - closed_form) / closed_form).abs() > 1e-8 {
        return Err(Error::Bracketing(format!(
            "golden section found {h}, the stationarity condition gives {closed_form}"
        )));
    }
    Ok(HStar { h_star: h, e_star: stripe_energy_inf(h, params)?, closed_form })
}

/// Best periodic stripes on a period `L`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StripeMinimizer {
    #[serde(rename = "N")]
    pub n: usize,
    pub h: f64,
    pub energy: f64,
}

/// Minimizer of `F0` over stripes `E_{L/2N}`: compares the two counts next to
/// `L / (2 h*)` through `x -> -x + Cbar_q L^(2-q) x^(q-1)` with `x = 2N`;
/// ties go to the smaller count.
pub fn minimize_f0_stripes(l: f64, params: &ModelParams) -> Result<StripeMinimizer> {
    if !(l > 0.0) {
        return domain(format!("period must be positive, got {l}"));
    }
    let hs = find_hstar(params)?;
    let q = params.q();
    let cbar = cbar_constant(params)?;
    let ratio = l / (2.0 * hs.h_star);
    let lo = (ratio.floor() as usize).max(1);
    let hi = (ratio.ceil() as usize).max(1);
    let value = |n: usize| {
        let x = 2.0 * n as f64;
        -x + cbar * l.powf(2.0 - q) * x.powf(q - 1.0)
    };
    let n = if value(hi) < value(lo) { hi } else { lo };
    let h = l / (2.0 * n as f64);
    Ok(StripeMinimizer { n, h, energy: stripe_energy_inf(h, params)? })
}

/// Outcome of the free-endpoint descent.
#[derive(Debug, Clone, Serialize)]
pub struct FreeMinimizer {
    pub set: PeriodicSet1D,
    pub energy: f64,
    pub converged: bool,
    pub sweeps: usize,
    /// Energy after every accepted move.
    pub history: Vec<f64>,
}

/// Local minimization of `F0` over the `2N` endpoints of `initial` by
/// coordinate descent with an adaptive step. Moves act on single endpoints
/// and on whole intervals; a move is rejected when it would bring two
/// endpoints closer than a tenth of the initial smallest width or gap, or when
/// its gain is within the evaluation error.
pub fn minimize_f0_free(initial: &PeriodicSet1D, params: &ModelParams, steps: usize) -> Result<FreeMinimizer> {
    let n = initial.count();
    let l = initial.period();
    if n == 0 || initial.is_full() {
        return domain("free minimization needs at least one boundary point");
    }
    let tol = 1e-13;
    let min_gap = initial.min_scale() / 10.0;
    let mut x: Vec<f64> = initial.intervals().iter().flat_map(|&(s, t)| [s, t]).collect();
    let build = |x: &[f64]| -> Result<PeriodicSet1D> {
        let v: Vec<(f64, f64)> = x.chunks(2).map(|c| (c[0], c[1])).collect();
        PeriodicSet1D::from_unsorted(l, &v)
    };
    let feasible = |x: &[f64]| -> bool {
        (0..x.len()).all(|i| {
            let next = if i + 1 < x.len() { x[i + 1] } else { x[0] + l };
            next - x[i] >= min_gap
        })
    };
    // a move counts only if it beats the incumbent by more than the combined
    // evaluation error, so rounding noise cannot drive the descent
    let energy = |x: &[f64]| -> Result<(f64, f64)> {
        let r = f0(&build(x)?, params, tol)?;
        Ok((r.total, r.err_estimate + 8.0 * f64::EPSILON * r.total.abs()))
    };
    let (mut best, mut best_err) = energy(&x)?;
    let mut history = vec![best];
    let mut step = 0.05 * initial.min_scale();
    let stop = 1e-9 * l;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < steps {
        sweeps += 1;
        let mut improved = false;
        // single endpoints, then whole intervals
        let moves: Vec<Vec<usize>> =
            (0..2 * n).map(|i| vec![i]).chain((0..n).map(|i| vec![2 * i, 2 * i + 1])).collect();
        for mv in &moves {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                for &i in mv {
                    y[i] += dir * step;
                }
                if !feasible(&y) {
                    continue;
                }
                let (e, err) = energy(&y)?;
                if e < best - (err + best_err) {
                    best = e;
                    best_err = err;
                    x = y;
                    history.push(e);
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
            if step < stop {
                converged = true;
                break;
            }
        }
    }
    Ok(FreeMinimizer { set: build(&x)?, energy: best, converged, sweeps, history })
}

/// One point of a temperature sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub tau: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub h: f64,
    pub energy: f64,
    pub err_estimate: f64,
    pub symdiff_to_limit: f64,
    pub wall_ms: f64,
}

/// `tau_max, ..., tau_min` log-spaced with `per_decade` points per decade,
/// both ends included.
pub fn tau_grid(tau_max: f64, tau_min: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(tau_max >= tau_min && tau_min > 0.0) || per_decade == 0 {
        return domain(format!(
            "need tau_max >= tau_min > 0 and per_decade > 0, got {tau_max}, {tau_min}, {per_decade}"
        ));
    }
    let decades = (tau_max / tau_min).log10();
    let steps = (decades * per_decade as f64).round() as usize;
    if steps == 0 {
        return Ok(vec![tau_max]);
    }
    Ok((0..=steps).map(|k| tau_max * (tau_min / tau_max).powf(k as f64 / steps as f64)).collect())
}

/// `(1/L)(-2N + G1d_tau(E_{L/2N}))` with its error estimate.
fn stripe_energy_tau(n: usize, l: f64, params: &ModelParams, tol: f64) -> Result<(f64, f64)> {
    let g = g1d(&stripes_count(n, l)?, params, tol)?;
    Ok(((-2.0 * n as f64 + g.value) / l, g.error / l))
}

/// For each temperature, the best stripes `E_{L/2N}` on a period `L` for the
/// energy at that temperature, found by a discrete descent in `N` started from
/// the limit minimizer. Temperatures must be positive and decreasing; points
/// are computed in parallel and returned in input order. `timing = false`
/// records zero wall times so that output is reproducible byte for byte.
pub fn tau_sweep(l: f64, params: &ModelParams, taus: &[f64], tol: f64, timing: bool) -> Result<Vec<SweepRecord>> {
    if taus.iter().any(|&t| !(t > 0.0)) || taus.windows(2).any(|w| w[1] > w[0]) {
        return domain("temperatures must be positive and decreasing");
    }
    let limit = minimize_f0_stripes(l, params)?;
    let limit_set = stripes_count(limit.n, l)?;
    taus.par_iter()
        .map(|&tau| {
            let start = Instant::now();
            let p = params.with_tau(tau)?;
            let mut n = limit.n;
            let (mut e, mut err) = stripe_energy_tau(n, l, &p, tol)?;
            for dir in [1isize, -1] {
                loop {
                    let m = n as isize + dir;
                    if m < 1 {
                        break;
                    }
                    let (e2, err2) = stripe_energy_tau(m as usize, l, &p, tol)?;
                    if e2 < e {
                        n = m as usize;
                        e = e2;
                        err = err2;
                    } else {
                        break;
                    }
                }
            }
            let sd = aligned_sym_diff(&stripes_count(n, l)?, &limit_set)?;
            let wall_ms = if timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
            Ok(SweepRecord {
                tau,
                n,
                h: l / (2.0 * n as f64),
                energy: e,
                err_estimate: err,
                symdiff_to_limit: sd,
                wall_ms,
            })
        })
        .collect()
}

/// Writes sweep records as CSV with a header row.
pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Minimal stripe energy of `F~_{J,L}` at `J = J_c - tau` in the original
/// variables, where the kernel keeps unit temperature.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScalingPoint {
    pub tau: f64,
    pub h: f64,
    pub energy: f64,
}

/// `(1/2h)(-2 tau + G1d_1(E_h))` for stripes of width `h` and period `2h`.
fn ftilde_stripes(h: f64, tau: f64, unit: &ModelParams, tol: f64) -> Result<f64> {
    let g = g1d(&stripes_count(1, 2.0 * h)?, unit, tol)?;
    Ok((-2.0 * tau + g.value) / (2.0 * h))
}

/// Minimizes the stripe energy of `F~` over the width for every `tau`.
pub fn scaling_sweep(params: &ModelParams, taus: &[f64], tol: f64) -> Result<Vec<ScalingPoint>> {
    let unit = params.with_tau(1.0)?;
    let hs = find_hstar(params)?;
    let beta = params.beta();
    taus.par_iter()
        .map(|&tau| {
            if !(tau > 0.0) {
                return domain(format!("tau must be positive, got {tau}"));
            }
            // optimal widths scale like tau^(-1/beta) times h*
            let guess = hs.h_star * tau.powf(-1.0 / beta);
            let mut failure = None;
            let h = golden_section(
                |x, y| match (ftilde_stripes(x, tau, &unit, tol), ftilde_stripes(y, tau, &unit, tol)) {
                    (Ok(a), Ok(b)) => a - b,
                    (Err(e), _) | (_, Err(e)) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                },
                0.2 * guess,
                5.0 * guess,
                1e-7,
            );
            if let Some(e) = failure {
                return Err(e);
            }
            let h = h?;
            Ok(ScalingPoint { tau, h, energy: ftilde_stripes(h, tau, &unit, tol)? })
        })
        .collect()
}

/// Least-squares slope of `log(-energy)` against `log(tau)`.
pub fn fit_scaling_slope(points: &[ScalingPoint]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|p| !(p.energy < 0.0)) {
        return domain("the fit needs at least two points with negative energy");
    }
    let xs: Vec<f64> = points.iter().map(|p| p.tau.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| (-p.energy).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}
