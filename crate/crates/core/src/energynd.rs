//! Energies of periodic pixel sets in `d = 2, 3` dimensions.
//!
//! The nonlocal term is `int K(zeta) Phi(zeta) dzeta` with the difference
//! function `Phi(zeta) = int_{Q_L} |chi(x) - chi(x + zeta)| dx`. For a pixel
//! set `Phi` is the multilinear interpolant of its values on the offset
//! lattice `h Z^d` (the autocorrelation of a cube is a tensor product of
//! hats), so the inner integral is exact from cyclic bit counts and the outer
//! one reduces to a weighted lattice sum
//!
//! ```text
//! int K Phi = sum_m W_m Phi(m h),   W_m = int K(zeta) hat(zeta/h - m) dzeta.
//! ```
//!
//! The same holds for the directional functions `Phi_i(z) = Phi(z e_i)` and
//! for the products `Psi_i` entering the cross term, whose factors move along
//! complementary coordinates. Weights are computed once per kernel and grid
//! shape, folded onto one period over a box of whole periods, and the rest of
//! the lattice is replaced by the mean of the periodic function plus a
//! certified bound on the oscillating remainder.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::Serialize;

use crate::energy1d::{g1d, EnergyReport};
use crate::error::{domain, Error, Result};
use crate::geometry::{GridSetND, PeriodicSet1D};
use crate::kernels::{
    cq_constant, jc_closed_form, kernel_abs_moment, kernel_mass, marginal_deficit, sphere_area, tau_power, ModelParams,
};
use crate::quad::{gauss_legendre, integrate_to_infinity, Estimate, Tolerance};

/// Largest supported cells per axis (one machine word per grid row).
pub const MAX_CELLS: usize = 64;

const MAX_DEPTH: usize = 10;

/// Exact correlation counts of a pixel set at every lattice offset.
///
/// `phi[r]` counts cells `x` with `chi(x) != chi(x + r)`; `psi[i][r]` counts
/// cells with both `chi(x) != chi(x + r_i e_i)` and
/// `chi(x) != chi(x + r - r_i e_i)`. Offsets use the grid's cell ordering.
#[derive(Debug, Clone)]
pub struct Correlations {
    d: usize,
    n: usize,
    phi: Vec<u32>,
    psi: Vec<Vec<u32>>,
}

impl Correlations {
    pub fn new(grid: &GridSetND) -> Result<Self> {
        let (d, n) = (grid.dim(), grid.cells());
        if n > MAX_CELLS {
            return domain(format!("at most {MAX_CELLS} cells per axis are supported, got {n}"));
        }
        let rows = bit_rows(grid);
        let front = n.pow(d as u32 - 1);
        let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        let rot = |row: u64, s: usize| -> u64 {
            if s == 0 {
                row
            } else {
                ((row >> s) | (row << (n - s))) & full
            }
        };
        // front index of y + r for front multi-indices stored in the same order
        let shift = |y: usize, r: usize| -> usize {
            let mut out = 0;
            let mut place = 1;
            let (mut a, mut b) = (y, r);
            for _ in 0..d - 1 {
                out += ((a % n + b % n) % n) * place;
                place *= n;
                a /= n;
                b /= n;
            }
            out
        };
        // front offset keeping only front axis k of r
        let only = |r: usize, k: usize| -> usize {
            let stride = n.pow((d - 2 - k) as u32);
            (r / stride % n) * stride
        };
        let minus = |r: usize, k: usize| -> usize {
            let stride = n.pow((d - 2 - k) as u32);
            r - (r / stride % n) * stride
        };
        let counts: Vec<(u32, Vec<u32>)> = (0..front * n)
            .into_par_iter()
            .map(|off| {
                let (rf, rl) = (off / n, off % n);
                let mut phi = 0u32;
                let mut psi = vec![0u32; d];
                for y in 0..front {
                    let here = rows[y];
                    phi += (here ^ rot(rows[shift(y, rf)], rl)).count_ones();
                    // last axis
                    let a = here ^ rot(here, rl);
                    let b = here ^ rows[shift(y, rf)];
                    psi[d - 1] += (a & b).count_ones();
                    for k in 0..d - 1 {
                        let a = here ^ rows[shift(y, only(rf, k))];
                        let b = here ^ rot(rows[shift(y, minus(rf, k))], rl);
                        psi[k] += (a & b).count_ones();
                    }
                }
                (phi, psi)
            })
            .collect();
        let mut phi = Vec::with_capacity(counts.len());
        let mut psi = vec![Vec::with_capacity(counts.len()); d];
        for (p, s) in counts {
            phi.push(p);
            for (k, v) in s.into_iter().enumerate() {
                psi[k].push(v);
            }
        }
        Ok(Correlations { d, n, phi, psi })
    }

    pub fn phi(&self) -> &[u32] {
        &self.phi
    }

    pub fn psi(&self, axis: usize) -> &[u32] {
        &self.psi[axis]
    }

    /// Offset index of `k e_axis`.
    fn axis_offset(&self, axis: usize, k: usize) -> usize {
        k * self.n.pow((self.d - 1 - axis) as u32)
    }

    /// `Phi_i(r_i)` broadcast to every offset `r`.
    fn directional(&self, axis: usize) -> Vec<u32> {
        let stride = self.n.pow((self.d - 1 - axis) as u32);
        (0..self.phi.len()).map(|r| self.phi[self.axis_offset(axis, r / stride % self.n)]).collect()
    }

    /// Index of `r` with component `axis` negated modulo `n`.
    fn flip(&self, r: usize, axis: usize) -> usize {
        let stride = self.n.pow((self.d - 1 - axis) as u32);
        let k = r / stride % self.n;
        r - k * stride + ((self.n - k) % self.n) * stride
    }

    /// `d` times the pointwise splitting slack
    /// `sum_i Phi_i(r_i) - (2/d) sum_i Psi_i(r with r_i negated) - Phi(r)`,
    /// in cell counts; it is a nonnegative integer at every offset.
    pub fn splitting_slack(&self) -> Vec<i64> {
        let d = self.d;
        let dirs: Vec<Vec<u32>> = (0..d).map(|i| self.directional(i)).collect();
        (0..self.phi.len())
            .map(|r| {
                let sum_dir: i64 = dirs.iter().map(|v| v[r] as i64).sum();
                let sum_psi: i64 = (0..d).map(|i| self.psi[i][self.flip(r, i)] as i64).sum();
                d as i64 * (sum_dir - self.phi[r] as i64) - 2 * sum_psi
            })
            .collect()
    }
}

/// Grid rows along the last axis as bit masks, indexed by the other axes.
fn bit_rows(grid: &GridSetND) -> Vec<u64> {
    let n = grid.cells();
    grid.mask()
        .chunks(n)
        .map(|row| row.iter().enumerate().fold(0u64, |acc, (k, &b)| acc | (u64::from(b) << k)))
        .collect()
}

/// Folded lattice weights of a kernel with `tau > 0` for one grid shape.
#[derive(Debug)]
pub struct LatticeWeights {
    kernel: ModelParams,
    d: usize,
    n: usize,
    l: f64,
    tol: f64,
    half: usize,
    folded: Vec<f64>,
    folded_err: Vec<f64>,
    box_mass: f64,
    box_abs: f64,
    box_abs_err: f64,
    mass: f64,
    abs_moment: f64,
    tail_coeff: f64,
    notes: Vec<String>,
    excess: OnceLock<Result<Vec<Estimate>>>,
}

/// Tensor Gauss-Legendre rule on `[0, 1]`.
struct Rule {
    x: Vec<f64>,
    w: Vec<f64>,
}

impl Rule {
    fn new(order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        Rule { x: x.iter().map(|t| 0.5 * (t + 1.0)).collect(), w: w.iter().map(|v| 0.5 * v).collect() }
    }
}

struct CellIntegrator {
    d: usize,
    h: f64,
    p: f64,
    c: f64,
    coarse: Rule,
    fine: Rule,
}

impl CellIntegrator {
    /// `int K(h u) phi_e(u - a) h^d du` over the sub-box `a + lo + [0, w]^d`
    /// for the `2^d` corner functions `phi_e`.
    fn apply(&self, rule: &Rule, a: &[usize], lo: &[f64], w: f64) -> [f64; 8] {
        let d = self.d;
        let m = rule.x.len();
        let mut out = [0.0; 8];
        let scale = (w * self.h).powi(d as i32);
        let mut idx = [0usize; 3];
        for _ in 0..m.pow(d as u32) {
            let mut r2 = 0.0;
            let mut wt = scale;
            let mut t = [0.0; 3];
            for k in 0..d {
                t[k] = lo[k] + w * rule.x[idx[k]];
                let u = (a[k] as f64 + t[k]) * self.h;
                r2 += u * u;
                wt *= rule.w[idx[k]];
            }
            let kv = wt / (r2.powf(0.5 * self.p) + self.c);
            for (e, slot) in out.iter_mut().enumerate().take(1 << d) {
                let mut phi = kv;
                for (k, tk) in t.iter().enumerate().take(d) {
                    phi *= if e >> k & 1 == 1 { *tk } else { 1.0 - *tk };
                }
                *slot += phi;
            }
            for i in idx.iter_mut() {
                *i += 1;
                if *i < m {
                    break;
                }
                *i = 0;
            }
        }
        out
    }

    fn moments(&self, a: &[usize], lo: &[f64], w: f64, target: f64, depth: usize) -> ([f64; 8], f64) {
        let fine = self.apply(&self.fine, a, lo, w);
        let coarse = self.apply(&self.coarse, a, lo, w);
        let err: f64 = fine.iter().zip(&coarse).map(|(x, y)| (x - y).abs()).sum();
        let size: f64 = fine.iter().map(|x| x.abs()).sum();
        if err <= target.max(1e-14 * size) || depth >= MAX_DEPTH {
            return (fine, err);
        }
        let mut acc = [0.0; 8];
        let mut acc_err = 0.0;
        let half = 0.5 * w;
        for child in 0..1usize << self.d {
            let sub: Vec<f64> = (0..self.d).map(|k| lo[k] + half * (child >> k & 1) as f64).collect();
            let (v, e) = self.moments(a, &sub, half, target / (1 << self.d) as f64, depth + 1);
            for (s, x) in acc.iter_mut().zip(v) {
                *s += x;
            }
            acc_err += e;
        }
        (acc, acc_err)
    }
}

/// Report of the splitting inequality on one grid.
#[derive(Debug, Clone, Serialize)]
pub struct SplittingReport {
    /// `(sum_i int K Phi_i - (2/d) sum_i int K Psi_i - int K Phi) / L^d`.
    pub margin: f64,
    /// Smallest pointwise slack over the offset lattice, in volume units.
    pub min_lattice_slack: f64,
    pub err_estimate: f64,
}

/// Directional terms along one axis, computed by slicing and on the lattice.
#[derive(Debug, Clone, Serialize)]
pub struct AxisCheck {
    pub axis: usize,
    /// Sum of slice perimeters times the cross-section of a line.
    pub sliced_perimeter: f64,
    pub directional_perimeter: f64,
    /// `G^i` from one-dimensional energies of the slices.
    pub g_slices: f64,
    /// `G^i` from the lattice sums.
    pub g_lattice: f64,
    /// `(int_{dE} |nu_i| int K eta - int K |chi - chi(. + zeta_i)|) / L^d`.
    pub directional_margin: f64,
    /// Smallest margin over single lines, per unit cross-section.
    pub min_line_margin: f64,
    pub err_estimate: f64,
}

impl LatticeWeights {
    /// Weights for `n^d` grids of period `l` under the kernel of `kernel`
    /// (which must have `tau > 0`); `tol` is the target accuracy of energies.
    pub fn new(d: usize, n: usize, l: f64, kernel: &ModelParams, tol: f64) -> Result<Self> {
        if kernel.tau <= 0.0 {
            return domain("the lattice scheme needs tau > 0; at tau = 0 the bracket integral diverges");
        }
        if kernel.d != d {
            return domain(format!("kernel dimension {} does not match grid dimension {d}", kernel.d));
        }
        if !(tol > 0.0) {
            return domain(format!("tolerance must be positive, got {tol}"));
        }
        if n == 0 || n > MAX_CELLS {
            return domain(format!("cells per axis must be in 1..={MAX_CELLS}, got {n}"));
        }
        let h = l / n as f64;
        let p = kernel.p;
        let df = d as f64;
        let mut notes = Vec::new();

        // Tail of the folded sum: sum over whole period blocks outside the box
        // of W_m (F_m - mean F) is at most tail_coeff * max |F - mean F| with
        // tail_coeff = sqrt(d) L int_{|zeta| > R} |grad K|.
        let grad_tail = |r: f64| df.sqrt() * l * sphere_area(d) * p * r.powf(df - p - 1.0) / (p + 1.0 - df);
        let cap = if d == 2 { 512 } else { 64 };
        let target = tol / (4.0 * df);
        let mut m = 1usize;
        let (half, tail_coeff) = loop {
            let half = m * n;
            let r_eff = (half as f64 - 1.0) * h - df.sqrt() * (l + 2.0 * h);
            let coeff = if r_eff > 0.0 { grad_tail(r_eff) } else { f64::INFINITY };
            if coeff <= target {
                break (half, coeff);
            }
            if (m + 1) * n > cap {
                notes.push(format!(
                    "lattice box capped at {half} cells per half-axis; far-field bound {coeff:.2e} per unit oscillation"
                ));
                break (half, coeff);
            }
            m += 1;
        };
        if kernel.floor_length() < h {
            notes.push(format!(
                "kernel floor length {:.3e} is below the cell size {h:.3e}; accuracy relies on cell subdivision near the origin",
                kernel.floor_length()
            ));
        }

        let side = half + 1;
        let ncells = side.pow(d as u32);
        let integrator = CellIntegrator { d, h, p, c: kernel.floor(), coarse: Rule::new(4), fine: Rule::new(6) };
        let cell_target = tol / (4.0 * df * ncells as f64);
        let unflatten = |c: usize| -> [usize; 3] {
            let mut a = [0usize; 3];
            let mut r = c;
            for k in (0..d).rev() {
                a[k] = r % side;
                r /= side;
            }
            a
        };
        let cells: Vec<([f64; 8], f64)> = (0..ncells)
            .into_par_iter()
            .map(|c| integrator.moments(&unflatten(c), &[0.0; 3][..d], 1.0, cell_target, 0))
            .collect();

        // W_m on the closed orthant [0, half]^d
        let corners = 1usize << d;
        let weights: Vec<(f64, f64)> = (0..ncells)
            .map(|c| {
                let mvec = unflatten(c);
                let mut w = 0.0;
                let mut e = 0.0;
                for corner in 0..corners {
                    let mut cell = 0;
                    let mut basis = 0;
                    for (k, &mk) in mvec.iter().enumerate().take(d) {
                        let ek = corner >> k & 1;
                        // a cell at index -1 mirrors onto cell 0 with the opposite corner
                        let (ak, bk) = if ek == 1 && mk == 0 { (0, 0) } else { (mk - ek, ek) };
                        if ak >= side {
                            cell = usize::MAX;
                            break;
                        }
                        cell = cell * side + ak;
                        basis |= bk << k;
                    }
                    if cell != usize::MAX {
                        w += cells[cell].0[basis];
                        e += cells[cell].1;
                    }
                }
                (w, e)
            })
            .collect();

        // fold the signed box [-half, half)^d onto one period
        let total = n.pow(d as u32);
        let mut folded = vec![0.0; total];
        let mut folded_err = vec![0.0; total];
        let (mut box_mass, mut box_abs, mut box_abs_err) = (0.0, 0.0, 0.0);
        for (c, &(w, e)) in weights.iter().enumerate() {
            let mvec = unflatten(c);
            // signed copies: +m_k when m_k < half, -m_k when m_k > 0
            let mut choices: Vec<Vec<usize>> = Vec::with_capacity(d);
            for &mk in mvec.iter().take(d) {
                let mut v = Vec::with_capacity(2);
                if mk < half {
                    v.push(mk % n);
                }
                if mk > 0 {
                    v.push((n - mk % n) % n);
                }
                choices.push(v);
            }
            let copies: usize = choices.iter().map(|v| v.len()).product();
            if copies == 0 {
                continue;
            }
            let mut pick = vec![0usize; d];
            for _ in 0..copies {
                let r = (0..d).fold(0, |acc, k| acc * n + choices[k][pick[k]]);
                folded[r] += w;
                folded_err[r] += e;
                for k in 0..d {
                    pick[k] += 1;
                    if pick[k] < choices[k].len() {
                        break;
                    }
                    pick[k] = 0;
                }
            }
            let c = copies as f64;
            box_mass += c * w;
            box_abs += c * w * mvec[0] as f64 * h;
            box_abs_err += c * e * mvec[0] as f64 * h;
        }

        Ok(LatticeWeights {
            kernel: *kernel,
            d,
            n,
            l,
            tol,
            half,
            folded,
            folded_err,
            box_mass,
            box_abs,
            box_abs_err,
            mass: kernel_mass(kernel),
            abs_moment: kernel_abs_moment(kernel),
            tail_coeff,
            notes,
            excess: OnceLock::new(),
        })
    }

    /// Weights for the shape of `grid`.
    pub fn for_grid(grid: &GridSetND, kernel: &ModelParams, tol: f64) -> Result<Self> {
        LatticeWeights::new(grid.dim(), grid.cells(), grid.period(), kernel, tol)
    }

    pub fn kernel(&self) -> &ModelParams {
        &self.kernel
    }

    /// Half-width of the lattice box in cells.
    pub fn half_width(&self) -> usize {
        self.half
    }

    fn check(&self, grid: &GridSetND) -> Result<()> {
        if grid.dim() != self.d || grid.cells() != self.n || grid.period() != self.l {
            return Err(Error::Invalid(format!(
                "grid shape (d = {}, n = {}, L = {}) does not match the weights (d = {}, n = {}, L = {})",
                grid.dim(),
                grid.cells(),
                grid.period(),
                self.d,
                self.n,
                self.l
            )));
        }
        Ok(())
    }

    fn cell_volume(&self) -> f64 {
        (self.l / self.n as f64).powi(self.d as i32)
    }

    /// `int K F` for a periodic `F` given by its values on one period of the
    /// offset lattice.
    fn integral(&self, f: &[f64]) -> Estimate {
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        let osc = f.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
        let mut sum = 0.0;
        let mut mag = 0.0;
        let mut err = 0.0;
        let mut werr = 0.0;
        for ((w, e), v) in self.folded.iter().zip(&self.folded_err).zip(f) {
            sum += w * v;
            mag += (w * v).abs();
            err += e * v.abs();
            werr += e;
        }
        let tail = self.mass - self.box_mass;
        Estimate {
            value: sum + mean * tail,
            error: err
                + werr * mean.abs()
                + self.tail_coeff * osc
                + 64.0 * f64::EPSILON * (mag + (mean * self.mass).abs()),
            evaluations: 0,
        }
    }

    /// `per * int K |zeta_1| - int K F`, with the lattice part of the first
    /// integral taken from the same weights so that their errors cancel.
    fn bracket(&self, per: f64, f: &[f64]) -> Estimate {
        let lattice = self.integral(f);
        let abs_tail = self.abs_moment - self.box_abs;
        let value = (per * self.box_abs - (lattice.value - self.mean_tail(f))) + (per * abs_tail - self.mean_tail(f));
        Estimate {
            value,
            error: lattice.error + per * self.box_abs_err + 64.0 * f64::EPSILON * per * self.abs_moment,
            evaluations: 0,
        }
    }

    fn mean_tail(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() / f.len() as f64 * (self.mass - self.box_mass)
    }

    fn volume_values(&self, counts: &[u32]) -> Vec<f64> {
        let v = self.cell_volume();
        counts.iter().map(|&c| c as f64 * v).collect()
    }

    /// Terms shared by both functionals: `(per, bracket, G^i, I)` all divided
    /// by `L^d` except `per`.
    fn terms(&self, grid: &GridSetND) -> Result<(f64, Estimate, Vec<Estimate>, Estimate)> {
        self.check(grid)?;
        let corr = Correlations::new(grid)?;
        let vol = self.l.powi(self.d as i32);
        let per = grid.perimeter();
        let phi = self.volume_values(corr.phi());
        let scale = |e: Estimate, s: f64| Estimate { value: e.value * s, error: e.error * s, evaluations: 0 };
        let bracket = scale(self.bracket(per, &phi), 1.0 / vol);
        let dirs = (0..self.d)
            .map(|i| {
                let f = self.volume_values(&corr.directional(i));
                scale(self.bracket(grid.directional_perimeter(i), &f), 1.0 / vol)
            })
            .collect();
        let mut cross = Estimate::default();
        for i in 0..self.d {
            cross = cross + self.integral(&self.volume_values(corr.psi(i)));
        }
        let cross = scale(cross, 2.0 / (self.d as f64 * vol));
        Ok((per, bracket, dirs, cross))
    }

    /// `F~_{J,L}(E) = (1/L^d)(J per_1 - int K_1 Phi)`; the weights must be
    /// those of the unit-temperature kernel.
    pub fn ftilde(&self, grid: &GridSetND, j: f64) -> Result<EnergyReport> {
        if self.kernel.tau != 1.0 {
            return domain(format!("F~ uses the kernel with tau = 1, these weights have tau = {}", self.kernel.tau));
        }
        let (per, bracket, dirs, cross) = self.terms(grid)?;
        let vol = self.l.powi(self.d as i32);
        let perimeter_term = (j - self.abs_moment) * per / vol;
        Ok(EnergyReport {
            total: perimeter_term + bracket.value,
            perimeter_term,
            nonlocal_term: bracket.value,
            per_direction: dirs.iter().map(|e| e.value).collect(),
            cross_term: cross.value,
            err_estimate: bracket.error + 64.0 * f64::EPSILON * (j.abs() + self.abs_moment) * per / vol,
            notes: self.notes.clone(),
        })
    }

    /// `F_{tau,L}(E) = (1/L^d)(-per_1 + int K_tau (sum_i per_i |zeta_i| - Phi))`.
    pub fn f_tau(&self, grid: &GridSetND) -> Result<EnergyReport> {
        let (per, bracket, dirs, cross) = self.terms(grid)?;
        let vol = self.l.powi(self.d as i32);
        let perimeter_term = -per / vol;
        Ok(EnergyReport {
            total: perimeter_term + bracket.value,
            perimeter_term,
            nonlocal_term: bracket.value,
            per_direction: dirs.iter().map(|e| e.value).collect(),
            cross_term: cross.value,
            err_estimate: bracket.error,
            notes: self.notes.clone(),
        })
    }

    /// The splitting inequality `int K Phi <= sum_i int K Phi_i - (2/d) sum_i int K Psi_i`.
    pub fn splitting(&self, grid: &GridSetND) -> Result<SplittingReport> {
        self.check(grid)?;
        let corr = Correlations::new(grid)?;
        let vol = self.l.powi(self.d as i32);
        let df = self.d as f64;
        let mut total = Estimate::default();
        for i in 0..self.d {
            total = total + self.integral(&self.volume_values(&corr.directional(i)));
            let psi = self.integral(&self.volume_values(corr.psi(i)));
            total = total + Estimate { value: -2.0 / df * psi.value, error: 2.0 / df * psi.error, evaluations: 0 };
        }
        let phi = self.integral(&self.volume_values(corr.phi()));
        let margin = (total.value - phi.value) / vol;
        let slack = corr.splitting_slack();
        let min = slack.iter().copied().min().unwrap_or(0) as f64 * self.cell_volume() / df;
        Ok(SplittingReport { margin, min_lattice_slack: min, err_estimate: (total.error + phi.error) / vol })
    }

    /// `psi(k h) = int_{kh}^inf Khat(z) (z - kh) dz` for `k = 0..=n`.
    fn excess_moments(&self) -> Result<&[Estimate]> {
        let res = self.excess.get_or_init(|| {
            let h = self.l / self.n as f64;
            let q = self.kernel.q();
            let cq = cq_constant(&self.kernel);
            let inner = 1e-12;
            (0..=self.n)
                .map(|k| {
                    if k == 0 {
                        return Ok(Estimate::exact(0.5 * self.abs_moment));
                    }
                    let a = k as f64 * h;
                    let main = cq * a.powf(2.0 - q) / ((q - 1.0) * (q - 2.0));
                    let mut failure = None;
                    let def = integrate_to_infinity(
                        |z| match marginal_deficit(z, &self.kernel, inner) {
                            Ok(e) => e.value * (z - a),
                            Err(e) => {
                                failure.get_or_insert(e);
                                0.0
                            }
                        },
                        a,
                        a.max(self.kernel.floor_length()),
                        Tolerance::new(self.tol * 1e-3, 1e-10),
                    )?;
                    if let Some(e) = failure {
                        return Err(e);
                    }
                    Ok(Estimate {
                        value: main - def.value,
                        error: def.error + inner * def.value.abs() + 16.0 * f64::EPSILON * main,
                        evaluations: def.evaluations,
                    })
                })
                .collect()
        });
        match res {
            Ok(v) => Ok(v),
            Err(e) => Err(Error::Invalid(format!("excess moments failed: {e}"))),
        }
    }

    /// Per-axis slicing checks: the slice identity for the directional
    /// perimeter, `G^i` by slices against the lattice value, and the
    /// directional bound through `eta`. `tol` is the absolute accuracy of each
    /// one-dimensional energy.
    pub fn axis_checks(&self, grid: &GridSetND, tol: f64) -> Result<Vec<AxisCheck>> {
        self.check(grid)?;
        let psi = self.excess_moments()?;
        let (_, _, dirs, _) = self.terms(grid)?;
        let h = self.l / self.n as f64;
        let vol = self.l.powi(self.d as i32);
        let section = h.powi(self.d as i32 - 1);
        let lines = grid.lines();
        (0..self.d)
            .map(|axis| {
                let per_line: Vec<(f64, Estimate, Estimate)> = lines
                    .par_iter()
                    .map(|line| -> Result<(f64, Estimate, Estimate)> {
                        let slice = grid.slice(axis, line)?;
                        if slice.count() == 0 || slice.is_full() {
                            return Ok((0.0, Estimate::default(), Estimate::default()));
                        }
                        let g = g1d(&slice, &self.kernel, tol)?;
                        let mut bound = Estimate::default();
                        for b in slice.boundary() {
                            bound = bound + psi[(b.h / h).round() as usize] + psi[(b.g / h).round() as usize];
                        }
                        Ok((slice.perimeter(), g, bound))
                    })
                    .collect::<Result<_>>()?;
                let mut sliced_perimeter = 0.0;
                let mut g_sum = 0.0;
                let mut margin = 0.0;
                let mut err = 0.0;
                let mut min_line = f64::INFINITY;
                for (p, g, b) in per_line {
                    sliced_perimeter += p;
                    g_sum += g.value;
                    margin += g.value - b.value;
                    err += g.error + b.error;
                    min_line = min_line.min(g.value - b.value);
                }
                Ok(AxisCheck {
                    axis,
                    sliced_perimeter: sliced_perimeter * section,
                    directional_perimeter: grid.directional_perimeter(axis),
                    g_slices: g_sum * section / vol,
                    g_lattice: dirs[axis].value,
                    directional_margin: margin * section / vol,
                    min_line_margin: min_line,
                    err_estimate: err * section / vol + dirs[axis].error,
                })
            })
            .collect()
    }
}

/// `F~_{J,L}` on a pixel grid with `J = params.j`.
pub fn ftilde(grid: &GridSetND, params: &ModelParams, tol: f64) -> Result<EnergyReport> {
    let unit = ModelParams { d: grid.dim(), ..*params }.with_tau(1.0)?;
    LatticeWeights::for_grid(grid, &unit, tol)?.ftilde(grid, params.j)
}

/// `F_{tau,L}` on a pixel grid; `tau = 0` is rejected.
pub fn f_tau(grid: &GridSetND, params: &ModelParams, tol: f64) -> Result<EnergyReport> {
    let kernel = ModelParams { d: grid.dim(), ..*params };
    kernel.validate()?;
    LatticeWeights::for_grid(grid, &kernel, tol)?.f_tau(grid)
}

/// `sum_x eta(x, z) - omega(z)`, nonnegative for every periodic set and shift.
pub fn band_margin(set: &PeriodicSet1D, z: f64) -> f64 {
    let cap: f64 = set.boundary().iter().map(|b| b.eta(z)).sum();
    cap - set.difference_profile().value(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// From `(J, L)` to `(tau, L^)`.
    Forward,
    /// From `(tau, L^)` back to `(J, L)`.
    Inverse,
}

/// Result of the change of variables `x = tau^(-1/beta) x^`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rescaling {
    pub tau: f64,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "L_hat")]
    pub l_hat: f64,
    /// `tau^((p-d)/beta)`, with `F~_{J,L}(E) = factor * F_{tau,L^}(E^)`.
    pub factor: f64,
}

/// Change of variables between `F~_{J,L}` and `F_{tau,L^}`.
///
/// Forward reads `J` and `L` from `params` and needs `J < J_c`; inverse reads
/// `tau` and takes `params.l` as `L^`.
pub fn scaling_transform(params: &ModelParams, direction: Direction) -> Result<Rescaling> {
    let jc = jc_closed_form(params);
    let beta = params.beta();
    let expo = (params.p - params.d as f64) / beta;
    match direction {
        Direction::Forward => {
            let tau = jc - params.j;
            if !(tau > 0.0) {
                return domain(format!("J = {} must lie below J_c = {jc}", params.j));
            }
            Ok(Rescaling {
                tau,
                j: params.j,
                l: params.l,
                l_hat: tau_power(tau, 1.0 / beta) * params.l,
                factor: tau_power(tau, expo),
            })
        }
        Direction::Inverse => {
            let tau = params.tau;
            if !(tau > 0.0) {
                return domain(format!("tau = {tau} must be positive"));
            }
            Ok(Rescaling {
                tau,
                j: jc - tau,
                l: params.l / tau_power(tau, 1.0 / beta),
                l_hat: params.l,
                factor: tau_power(tau, expo),
            })
        }
    }
}

/// The same pixel pattern on a period of length `l`.
pub fn rescale_grid(grid: &GridSetND, l: f64) -> Result<GridSetND> {
    GridSetND::new(grid.dim(), l, grid.cells(), grid.mask().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::grid_corpus;
    use crate::energy1d::energy_at;
    use crate::geometry::{make_stripes, PeriodicSet1D};
    use crate::kernels::{jc_constant, kernel_value};

    fn m25() -> ModelParams {
        ModelParams::new(2, 5.0).unwrap()
    }

    /// Brute-force counts straight from the definition.
    fn brute(grid: &GridSetND, r: &[usize]) -> (u32, Vec<u32>) {
        let n = grid.cells();
        let d = grid.dim();
        let add = |x: &[usize], s: &[usize]| -> Vec<usize> { x.iter().zip(s).map(|(a, b)| (a + b) % n).collect() };
        let mut phi = 0;
        let mut psi = vec![0; d];
        let total = n.pow(d as u32);
        for c in 0..total {
            let mut x = vec![0; d];
            let mut t = c;
            for k in (0..d).rev() {
                x[k] = t % n;
                t /= n;
            }
            let here = grid.get(&x);
            phi += u32::from(here != grid.get(&add(&x, r)));
            for i in 0..d {
                let mut ri = vec![0; d];
                ri[i] = r[i];
                let mut rp = r.to_vec();
                rp[i] = 0;
                let a = here != grid.get(&add(&x, &ri));
                let b = here != grid.get(&add(&x, &rp));
                psi[i] += u32::from(a && b);
            }
        }
        (phi, psi)
    }

    #[test]
    fn correlation_counts_match_definition() {
        for g in grid_corpus(4, 2, 2, 7, 3.0).iter().chain(grid_corpus(4, 2, 3, 5, 3.0).iter()) {
            let c = Correlations::new(g).unwrap();
            let n = g.cells();
            let d = g.dim();
            for off in 0..n.pow(d as u32) {
                let mut r = vec![0; d];
                let mut t = off;
                for k in (0..d).rev() {
                    r[k] = t % n;
                    t /= n;
                }
                let (phi, psi) = brute(g, &r);
                assert_eq!(c.phi()[off], phi);
                for (i, &expected) in psi.iter().enumerate() {
                    assert_eq!(c.psi(i)[off], expected, "offset {r:?}, axis {i}");
                }
            }
            assert!(c.splitting_slack().iter().all(|&s| s >= 0));
        }
    }

    #[test]
    fn weights_reproduce_kernel_integrals() {
        // with F = 1 the folded sum plus mean tail is the total mass
        let k = m25().with_tau(0.5).unwrap();
        let w = LatticeWeights::new(2, 8, 4.0, &k, 1e-7).unwrap();
        let ones = vec![1.0; 64];
        let e = w.integral(&ones);
        assert!((e.value - kernel_mass(&k)).abs() < 1e-12 * kernel_mass(&k));
        // a single weight against a tensor midpoint rule
        let h = 0.5;
        let m = 400;
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                let u = -1.0 + 2.0 * (i as f64 + 0.5) / m as f64;
                let v = 2.0 * (j as f64 + 0.5) / m as f64;
                let hat = (1.0 - u.abs()) * (1.0 - (v - 1.0).abs());
                acc += hat * kernel_value(&[u * h, v * h], &k);
            }
        }
        acc *= (2.0 / m as f64).powi(2) * h * h;
        // folded index (0, 1) holds W_(0,1) and its copies W_(8a, 8b+1); far
        // copies are close to h^2 K at their lattice point
        let reach = (w.half_width() / 8) as i64;
        let mut copies = 0.0;
        for a in -reach..reach {
            for b in -reach..reach {
                if (a, b) != (0, 0) {
                    copies += h * h * kernel_value(&[8.0 * a as f64 * h, (8 * b + 1) as f64 * h], &k);
                }
            }
        }
        let far = w.folded[1] - acc;
        assert!((far - copies).abs() < 0.05 * copies, "{far} vs {copies}");
    }

    #[test]
    fn trivial_grids_have_zero_energy() {
        let p = m25().with_j(2.0);
        for fill in [false, true] {
            let g = GridSetND::from_fn(2, 4.0, 8, |_| fill).unwrap();
            let r = ftilde(&g, &p, 1e-8).unwrap();
            assert_eq!(r.total, 0.0);
            let r = f_tau(&g, &p.with_tau(0.5).unwrap(), 1e-8).unwrap();
            assert_eq!(r.total, 0.0);
            assert_eq!(r.cross_term, 0.0);
        }
    }

    #[test]
    fn rejects_zero_temperature_and_bad_shapes() {
        let g = GridSetND::from_fn(2, 4.0, 8, |ix| ix[0] < 4).unwrap();
        assert!(matches!(f_tau(&g, &m25(), 1e-6), Err(Error::Domain(_))));
        let w = LatticeWeights::new(2, 4, 4.0, &m25().with_tau(1.0).unwrap(), 1e-6).unwrap();
        assert!(w.f_tau(&g).is_err());
    }

    #[test]
    fn extruded_stripes_match_one_dimensional_energy() {
        let tau = 0.5;
        let k = m25().with_tau(tau).unwrap();
        let set = PeriodicSet1D::new(4.0, vec![(0.5, 1.5), (2.0, 3.5)]).unwrap();
        let one = energy_at(&set, &k, 1e-10).unwrap();
        for axis in 0..2 {
            let g = GridSetND::extrude(&set, 2, 8, axis).unwrap();
            let r = f_tau(&g, &k, 1e-8).unwrap();
            let tol = r.err_estimate + one.err_estimate;
            assert!((r.total - one.total).abs() <= tol, "{} vs {} (tol {tol:e})", r.total, one.total);
            assert!(r.cross_term.abs() < 1e-14);
            let lower = r.perimeter_term + r.per_direction.iter().sum::<f64>();
            assert!((r.total - lower).abs() <= r.err_estimate);
            assert!(r.per_direction[1 - axis].abs() < 1e-12);
        }
    }

    #[test]
    fn ftilde_on_stripes_matches_unit_kernel_reduction() {
        let k1 = m25().with_tau(1.0).unwrap();
        let jc = jc_closed_form(&k1);
        let set = make_stripes(1.0, 4.0).unwrap();
        let g = GridSetND::extrude(&set, 2, 8, 0).unwrap();
        for j in [jc - 0.3, jc, jc + 0.5] {
            let r = ftilde(&g, &k1.with_j(j), 1e-8).unwrap();
            let one = g1d(&set, &k1, 1e-11).unwrap();
            let expect = ((j - jc) * set.perimeter() + one.value) / set.period();
            assert!((r.total - expect).abs() <= r.err_estimate + one.error, "{} vs {expect}", r.total);
        }
    }

    #[test]
    fn three_dimensional_extrusion_matches_one_dimensional_energy() {
        let k = ModelParams::new(3, 7.0).unwrap().with_tau(0.8).unwrap();
        let set = PeriodicSet1D::new(3.0, vec![(0.0, 1.5)]).unwrap();
        let one = energy_at(&set, &k, 1e-10).unwrap();
        let g = GridSetND::extrude(&set, 3, 4, 2).unwrap();
        let r = f_tau(&g, &k, 1e-7).unwrap();
        assert!((r.total - one.total).abs() <= r.err_estimate + one.err_estimate, "{} vs {}", r.total, one.total);
    }

    #[test]
    fn nonnegative_at_critical_weight() {
        let jc = jc_constant(&m25(), 1e-13).unwrap();
        let unit = m25().with_tau(1.0).unwrap();
        let w = LatticeWeights::new(2, 16, 8.0, &unit, 1e-7).unwrap();
        for g in grid_corpus(11, 6, 2, 16, 8.0) {
            let r = w.ftilde(&g, jc.value).unwrap();
            let slack = r.err_estimate + jc.error * g.perimeter() / 64.0;
            assert!(r.total >= -slack, "{} < -{slack}", r.total);
            assert!(r.nonlocal_term >= -r.err_estimate);
        }
    }

    #[test]
    fn splitting_identity_and_margin() {
        let k = m25().with_tau(0.5).unwrap();
        let w = LatticeWeights::new(2, 16, 8.0, &k, 1e-7).unwrap();
        for g in grid_corpus(12, 6, 2, 16, 8.0) {
            let s = w.splitting(&g).unwrap();
            assert!(s.min_lattice_slack >= 0.0);
            assert!(s.margin >= -s.err_estimate, "{s:?}");
            // margin equals total minus the splitting lower bound of the report
            let r = w.f_tau(&g).unwrap();
            let lower = r.perimeter_term + r.per_direction.iter().sum::<f64>() + r.cross_term;
            assert!((r.total - lower - s.margin).abs() <= s.err_estimate + r.err_estimate);
        }
    }

    #[test]
    fn energy_has_uniform_lower_bound() {
        let k = m25().with_tau(0.5).unwrap();
        let w = LatticeWeights::new(2, 16, 8.0, &k, 1e-7).unwrap();
        let worst =
            grid_corpus(13, 20, 2, 16, 8.0).iter().map(|g| w.f_tau(g).unwrap().total).fold(f64::INFINITY, f64::min);
        assert!(worst >= -10.0, "{worst}");
    }

    #[test]
    fn slicing_and_directional_bounds() {
        let k = m25().with_tau(0.5).unwrap();
        let w = LatticeWeights::new(2, 8, 4.0, &k, 1e-7).unwrap();
        for g in grid_corpus(13, 4, 2, 8, 4.0) {
            for c in w.axis_checks(&g, 1e-9).unwrap() {
                assert!((c.sliced_perimeter - c.directional_perimeter).abs() < 1e-12);
                assert!((c.g_slices - c.g_lattice).abs() <= c.err_estimate, "{c:?}");
                assert!(c.directional_margin >= -c.err_estimate);
                assert!(c.min_line_margin >= -1e-8);
            }
        }
    }

    #[test]
    fn band_margin_examples() {
        let s = PeriodicSet1D::new(4.0, vec![(0.0, 1.0), (2.0, 2.5)]).unwrap();
        for z in [0.0, 0.3, -0.7, 1.0, 2.2, -3.9, 5.0] {
            assert!(band_margin(&s, z) >= -1e-14);
        }
        // stripes with a shift below the width are an equality case
        let st = make_stripes(1.0, 4.0).unwrap();
        assert!(band_margin(&st, 0.4).abs() < 1e-14);
    }

    #[test]
    fn scaling_examples_and_round_trip() {
        let base = m25().with_l(6.0).unwrap();
        let jc = jc_closed_form(&base);
        let fixed = scaling_transform(&base.with_j(jc - 1.0), Direction::Forward).unwrap();
        assert!((fixed.tau - 1.0).abs() < 1e-15);
        assert!((fixed.l_hat - 6.0).abs() < 1e-14);
        assert!((fixed.factor - 1.0).abs() < 1e-15);
        let r = scaling_transform(&base.with_j(jc - 0.25), Direction::Forward).unwrap();
        assert!((r.l_hat - 3.0).abs() < 1e-14);
        assert!((r.factor - 0.125).abs() < 1e-15);
        let back = scaling_transform(&ModelParams { tau: r.tau, l: r.l_hat, ..base }, Direction::Inverse).unwrap();
        assert!((back.l - 6.0).abs() < 1e-14 && (back.j - (jc - 0.25)).abs() < 1e-15);
        assert!(scaling_transform(&base.with_j(jc + 0.1), Direction::Forward).is_err());
    }

    #[test]
    fn ftilde_is_factor_times_rescaled_energy() {
        let base = m25();
        let jc = jc_closed_form(&base);
        let set = make_stripes(1.0, 4.0).unwrap();
        let g = GridSetND::extrude(&set, 2, 8, 1).unwrap();
        let params = base.with_j(jc - 0.25).with_l(4.0).unwrap();
        let r = scaling_transform(&params, Direction::Forward).unwrap();
        let lhs = ftilde(&g, &params, 1e-9).unwrap();
        let gh = rescale_grid(&g, r.l_hat).unwrap();
        let rhs = f_tau(&gh, &base.with_tau(r.tau).unwrap(), 1e-9).unwrap();
        let tol = lhs.err_estimate + r.factor * rhs.err_estimate;
        assert!(
            (lhs.total - r.factor * rhs.total).abs() <= tol.max(1e-12),
            "{} vs {}",
            lhs.total,
            r.factor * rhs.total
        );
    }
}
