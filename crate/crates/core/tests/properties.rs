use proptest::prelude::*;

use stripes::corpus::{random_grid, random_pair, random_set};
use stripes::energy1d::{chessboard_rhs, f0, g1d};
use stripes::energynd::band_margin;
use stripes::geometry::{sym_diff_measure, GridSetND, PeriodicSet1D};
use stripes::kernels::ModelParams;
use stripes::reflection::{chessboard_exp_margin, rp_margin};
use stripes::rng::SplitMix64;

fn params() -> ModelParams {
    ModelParams::new(2, 5.0).unwrap()
}

fn set_from(seed: u64) -> PeriodicSet1D {
    random_set(&mut SplitMix64::new(seed))
}

fn complement(s: &PeriodicSet1D) -> PeriodicSet1D {
    let iv = s.intervals();
    let n = iv.len();
    let gaps: Vec<(f64, f64)> =
        (0..n).map(|i| (iv[i].1, if i + 1 < n { iv[i + 1].0 } else { iv[0].0 + s.period() })).collect();
    PeriodicSet1D::from_unsorted(s.period(), &gaps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_translation_invariant(seed in any::<u64>(), shift in -20.0f64..20.0) {
        let s = set_from(seed);
        let a = f0(&s, &params(), 1e-12).unwrap();
        let b = f0(&s.translate(shift).unwrap(), &params(), 1e-12).unwrap();
        prop_assert!((a.total - b.total).abs() <= 1e-9 * (1.0 + a.total.abs()));
    }

    #[test]
    fn energy_is_complement_symmetric(seed in any::<u64>()) {
        let s = set_from(seed);
        let a = f0(&s, &params(), 1e-12).unwrap().total;
        let b = f0(&complement(&s), &params(), 1e-12).unwrap().total;
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn chessboard_bound_holds(seed in any::<u64>()) {
        let s = set_from(seed);
        let r = f0(&s, &params(), 1e-12).unwrap();
        prop_assert!(r.total - chessboard_rhs(&s, &params()).unwrap() >= -1e-9 - r.err_estimate);
    }

    #[test]
    fn exponential_chessboard_margin_is_nonnegative(seed in any::<u64>(), alpha in 0.05f64..20.0) {
        let s = set_from(seed);
        prop_assert!(chessboard_exp_margin(&s, alpha) >= -1e-9 / (alpha * alpha));
    }

    #[test]
    fn band_margin_is_nonnegative(seed in any::<u64>(), t in -1.0f64..1.0) {
        let s = set_from(seed);
        prop_assert!(band_margin(&s, t * s.period()) >= -1e-12 * s.period());
    }

    #[test]
    fn reflection_positivity_holds(seed in any::<u64>()) {
        prop_assert!(rp_margin(&random_pair(&mut SplitMix64::new(seed))) >= -1e-9);
    }

    #[test]
    fn sym_diff_is_a_metric(a in any::<u64>(), b in any::<u64>(), shift in 0.0f64..1.0) {
        let x = set_from(a);
        let y = x.translate(shift * x.period()).unwrap();
        let z = PeriodicSet1D::from_unsorted(x.period(), set_from(b).intervals().iter()
            .filter(|iv| iv.1 < x.period()).copied().collect::<Vec<_>>().as_slice());
        prop_assert_eq!(sym_diff_measure(&x, &x).unwrap(), 0.0);
        let xy = sym_diff_measure(&x, &y).unwrap();
        prop_assert!((xy - sym_diff_measure(&y, &x).unwrap()).abs() < 1e-12);
        if let Ok(z) = z {
            let xz = sym_diff_measure(&x, &z).unwrap();
            let yz = sym_diff_measure(&y, &z).unwrap();
            prop_assert!(xz <= xy + yz + 1e-12);
        }
    }

    #[test]
    fn g1d_decreases_with_temperature(seed in any::<u64>(), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let s = set_from(seed);
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let a = g1d(&s, &params().with_tau(lo).unwrap(), 1e-10).unwrap();
        let b = g1d(&s, &params().with_tau(hi).unwrap(), 1e-10).unwrap();
        prop_assert!(a.value >= b.value - a.error - b.error);
    }

    #[test]
    fn grid_json_round_trips(seed in any::<u64>(), kind in 0usize..4) {
        let g = random_grid(&mut SplitMix64::new(seed), 2, 8, 5.0, kind);
        let back = GridSetND::from_json(&g.to_json()).unwrap();
        prop_assert_eq!(back.mask(), g.mask());
        prop_assert_eq!(back.period(), g.period());
    }
}
