//! Seeded random inputs shared by the verification suites, the command line
//! and the tests. Item `i` of a corpus under `seed` is drawn from
//! `SplitMix64::stream(seed, i)`, so corpora are reproducible and can be
//! generated in parallel.

use crate::geometry::{GridSetND, PeriodicSet1D};
use crate::reflection::ReflectionPair;
use crate::rng::SplitMix64;

/// Random periodic set: period `L = 2 + 10u`, between 1 and 8 intervals, and
/// every width and gap at least `L / 100` (rejection sampling).
pub fn random_set(g: &mut SplitMix64) -> PeriodicSet1D {
    let l = g.uniform_in(2.0, 12.0);
    loop {
        let n = g.int_in(1, 8) as usize;
        let mut pts: Vec<f64> = (0..2 * n).map(|_| g.uniform_in(0.0, l)).collect();
        pts.sort_by(f64::total_cmp);
        let ok = (0..2 * n).all(|i| {
            let next = if i + 1 < 2 * n { pts[i + 1] } else { pts[0] + l };
            next - pts[i] >= l / 100.0
        });
        if ok {
            let intervals = pts.chunks(2).map(|c| (c[0], c[1])).collect();
            return PeriodicSet1D::new(l, intervals).expect("sampled endpoints are sorted and separated");
        }
    }
}

pub fn set_corpus(seed: u64, count: usize) -> Vec<PeriodicSet1D> {
    (0..count).map(|i| random_set(&mut SplitMix64::stream(seed, i as u64))).collect()
}

/// Up to four sorted intervals inside `[lo, hi]`, possibly none.
pub fn random_union(g: &mut SplitMix64, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let k = g.int_in(0, 4) as usize;
    let mut pts: Vec<f64> = (0..2 * k).map(|_| g.uniform_in(lo, hi)).collect();
    pts.sort_by(f64::total_cmp);
    pts.chunks(2).filter(|c| c[1] > c[0]).map(|c| (c[0], c[1])).collect()
}

/// Random reflection pair with `L1` in `[1, 5]`, `L - L1` in `[1, 5]` and
/// `alpha` in `[0.2, 3]`.
pub fn random_pair(g: &mut SplitMix64) -> ReflectionPair {
    let l1 = g.uniform_in(1.0, 5.0);
    let l = l1 + g.uniform_in(1.0, 5.0);
    let left = random_union(g, 0.0, l1);
    let right = random_union(g, l1, l);
    let alpha = g.uniform_in(0.2, 3.0);
    ReflectionPair::new(l1, l, left, right, alpha).expect("sampled pair is valid")
}

pub fn pair_corpus(seed: u64, count: usize) -> Vec<ReflectionPair> {
    (0..count).map(|i| random_pair(&mut SplitMix64::stream(seed, i as u64))).collect()
}

/// Random `n^d` grid. Even `kind` gives independent cells with a density drawn
/// from `[0.2, 0.8]`; odd `kind` gives a union of one to five periodic boxes.
pub fn random_grid(g: &mut SplitMix64, d: usize, n: usize, l: f64, kind: usize) -> GridSetND {
    if kind.is_multiple_of(2) {
        let rho = g.uniform_in(0.2, 0.8);
        GridSetND::from_fn(d, l, n, |_| g.uniform() < rho).expect("grid dimensions are valid")
    } else {
        let boxes: Vec<Vec<(usize, usize)>> = (0..g.int_in(1, 5))
            .map(|_| (0..d).map(|_| (g.below(n as u64) as usize, g.int_in(1, n as u64 - 1) as usize)).collect())
            .collect();
        GridSetND::from_fn(d, l, n, |ix| {
            boxes.iter().any(|b| b.iter().zip(ix).all(|(&(start, len), &k)| (k + n - start) % n < len))
        })
        .expect("grid dimensions are valid")
    }
}

pub fn grid_corpus(seed: u64, count: usize, d: usize, n: usize, l: f64) -> Vec<GridSetND> {
    (0..count).map(|i| random_grid(&mut SplitMix64::stream(seed, i as u64), d, n, l, i)).collect()
}
