//! Property tests for the structural invariants of each module.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fracvi::field::{inner, lp_norm, DomainMask, Grid, Region, ScalarField, VectorField};
use fracvi::frgrad::{frac_divergence, frac_gradient, riesz_potential, FracOrder};
use fracvi::oracle::project_ball;
use fracvi::qvi::{dual_exponent, sobolev_exponent};
use fracvi::sampling::{random_feasible, random_smooth_field};
use fracvi::vi::{
    energy, feasibility_violation, penalty_value, solve_vi, EllipticCoefficients, PenaltyConfig, ProblemData, Threshold,
    EPS_FLOOR,
};

fn noise(grid: Grid, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..grid.len()).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
    ScalarField::new(grid, v).unwrap()
}

fn grid_strategy() -> impl Strategy<Value = Grid> {
    (1usize..=2, 3u32..=5, 0.5f64..4.0).prop_map(|(d, p, l)| Grid::new(d, l, 1 << p).unwrap())
}

fn small_problem(f: f64, g: f64) -> ProblemData {
    let grid = Grid::new(1, 2.0, 32).unwrap();
    let mask = DomainMask::boxed(grid, 1.0).unwrap();
    let f = ScalarField::constant(grid, f).restrict(&mask).unwrap();
    ProblemData::new(
        mask,
        FracOrder::new(0.5).unwrap(),
        EllipticCoefficients::identity(grid),
        f,
        Threshold::constant(grid, g).unwrap(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lp_norm_is_absolutely_homogeneous(grid in grid_strategy(), seed: u64, c in -50.0f64..50.0, p in prop_oneof![Just(1.0), Just(2.0), Just(3.5), Just(f64::INFINITY)]) {
        let u = noise(grid, seed);
        let a = lp_norm(&u.scale(c), p, Region::Whole).unwrap();
        let b = c.abs() * lp_norm(&u, p, Region::Whole).unwrap();
        prop_assert!((a - b).abs() <= 1e-13 * b.max(1e-300));
    }

    #[test]
    fn inner_is_symmetric_and_cauchy_schwarz(grid in grid_strategy(), s1: u64, s2: u64) {
        let (a, b) = (noise(grid, s1), noise(grid, s2));
        let ab = inner(&a, &b).unwrap();
        prop_assert_eq!(ab, inner(&b, &a).unwrap());
        let bound = lp_norm(&a, 2.0, Region::Whole).unwrap() * lp_norm(&b, 2.0, Region::Whole).unwrap();
        prop_assert!(ab.abs() <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn fvf_round_trip_is_bit_exact(grid in grid_strategy(), seed: u64) {
        let dir = tempfile::tempdir().unwrap();
        let u = noise(grid, seed).map(|v| v * 1e7);
        u.save_fvf(dir.path().join("u.fvf")).unwrap();
        let back = ScalarField::load_fvf(dir.path().join("u.fvf")).unwrap();
        prop_assert_eq!(back.grid(), u.grid());
        prop_assert!(back.values().iter().zip(u.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let w = VectorField::new((0..grid.dim()).map(|j| noise(grid, seed ^ j as u64)).collect()).unwrap();
        w.save_fvf(dir.path().join("w.fvf")).unwrap();
        prop_assert_eq!(VectorField::load_fvf(dir.path().join("w.fvf")).unwrap(), w);
    }

    #[test]
    fn frac_gradient_is_linear(grid in grid_strategy(), s1: u64, s2: u64, a in -3.0f64..3.0, b in -3.0f64..3.0, sigma in 0.05f64..=1.0) {
        let order = FracOrder::new(sigma).unwrap();
        let (u, v) = (noise(grid, s1), noise(grid, s2));
        let lhs = frac_gradient(&u.scale(a).axpy(b, &v).unwrap(), order).unwrap();
        let du = frac_gradient(&u, order).unwrap();
        let dv = frac_gradient(&v, order).unwrap();
        let scale = a.abs() * du.l2_norm() + b.abs() * dv.l2_norm() + 1.0;
        for j in 0..grid.dim() {
            let rhs = du.component(j).scale(a).axpy(b, dv.component(j)).unwrap();
            let diff = lp_norm(&lhs.component(j).sub(&rhs).unwrap(), 2.0, Region::Whole).unwrap();
            prop_assert!(diff <= 1e-12 * scale);
        }
    }

    #[test]
    fn divergence_is_negative_adjoint(grid in grid_strategy(), s1: u64, s2: u64, sigma in 0.05f64..=1.0) {
        let order = FracOrder::new(sigma).unwrap();
        let u = noise(grid, s1);
        let w = VectorField::new((0..grid.dim()).map(|j| noise(grid, s2.wrapping_add(j as u64))).collect()).unwrap();
        let du = frac_gradient(&u, order).unwrap();
        let dw = frac_divergence(&w, order).unwrap();
        let lhs = inner(&du, &w).unwrap() + inner(&u, &dw).unwrap();
        let scale = du.l2_norm() * w.l2_norm() + lp_norm(&u, 2.0, Region::Whole).unwrap() * lp_norm(&dw, 2.0, Region::Whole).unwrap();
        prop_assert!(lhs.abs() <= 1e-11 * scale);
    }

    #[test]
    fn riesz_potentials_compose_on_zero_mean_fields(seed: u64, a in 0.05f64..0.45, b in 0.05f64..0.45) {
        let grid = Grid::new(2, 3.0, 16).unwrap();
        let u = noise(grid, seed);
        let mean = u.values().iter().sum::<f64>() / grid.len() as f64;
        let u = u.map(|v| v - mean);
        let two = riesz_potential(&riesz_potential(&u, a).unwrap(), b).unwrap();
        let one = riesz_potential(&u, a + b).unwrap();
        let diff = lp_norm(&two.sub(&one).unwrap(), 2.0, Region::Whole).unwrap();
        prop_assert!(diff <= 1e-10 * lp_norm(&one, 2.0, Region::Whole).unwrap().max(1.0));
    }

    #[test]
    fn penalty_is_monotone(s1 in 0.0f64..5.0, ds in 0.0f64..5.0, e1 in EPS_FLOOR..0.99, de in 0.0f64..0.5) {
        let e2 = (e1 + de).min(0.999);
        let lo = penalty_value(s1, e1).unwrap();
        prop_assert!(penalty_value(s1 + ds, e1).unwrap() >= lo);
        if s1 > 0.0 {
            prop_assert!(penalty_value(s1, e2).unwrap() <= lo);
        }
    }

    #[test]
    fn ball_projection_is_feasible_and_idempotent(grid in grid_strategy(), seed: u64, g in 0.1f64..3.0) {
        let w = VectorField::new((0..grid.dim()).map(|j| noise(grid, seed ^ (j as u64 + 7)).scale(4.0)).collect()).unwrap();
        let t = Threshold::constant(grid, g).unwrap();
        let p = project_ball(&w, &t).unwrap();
        prop_assert!(p.magnitude().values().iter().all(|&m| m <= g * (1.0 + 1e-14)));
        let pp = project_ball(&p, &t).unwrap();
        prop_assert!(pp.sub(&p).unwrap().l2_norm() <= 1e-14 * (1.0 + p.l2_norm()));
    }

    #[test]
    fn threshold_rejects_floor_above_minimum(grid in grid_strategy(), seed: u64, shift in 0.01f64..2.0) {
        let g = noise(grid, seed).map(|v| v + 2.0);
        prop_assert!(Threshold::new(g.clone(), g.min()).is_ok());
        prop_assert!(Threshold::new(g.clone(), g.min() + shift).is_err());
        prop_assert!(Threshold::new(g, -shift).is_err());
    }

    #[test]
    fn random_feasible_samples_are_feasible(seed: u64, g in 0.5f64..5.0) {
        let d = small_problem(1.0, g);
        let v = random_feasible(&d, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(feasibility_violation(&v, &d).unwrap() <= 0.0);
        prop_assert_eq!(v.max_abs_outside(d.mask()), 0.0);
    }

    #[test]
    fn sobolev_exponents_are_conjugate(sigma in 0.05f64..=1.0) {
        for dim in 1..=3 {
            let order = FracOrder::new(sigma).unwrap();
            let (p, q) = (sobolev_exponent(dim, order), dual_exponent(dim, order));
            prop_assert!(((1.0 / p) + (1.0 / q) - 1.0).abs() < 1e-14);
        }
    }
}

#[test]
fn smooth_fields_vanish_outside_the_domain() {
    let mask = DomainMask::boxed(Grid::new(2, 2.0, 32).unwrap(), 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        assert_eq!(random_smooth_field(&mask, &mut rng, 4).max_abs_outside(&mask), 0.0);
    }
}

#[test]
fn penalty_schedule_ends_at_the_floor() {
    let cfg = PenaltyConfig::default();
    let s = cfg.schedule();
    assert_eq!(*s.last().unwrap(), cfg.eps_min);
    assert!(s.windows(2).all(|w| w[1] < w[0]));
    assert!(PenaltyConfig { eps_min: 0.03, ..cfg }.validate().is_err());
}

#[test]
fn enlarging_the_threshold_never_raises_the_energy() {
    let cfg = PenaltyConfig { newton_tol: 1e-6, ..Default::default() };
    let mut last = f64::INFINITY;
    for g in [1.0, 1.5, 2.0, 3.0] {
        let d = small_problem(10.0, g);
        let s = solve_vi(&d, &cfg).unwrap();
        let j = energy(&s.u, &d).unwrap();
        assert!(j <= last + 1e-6 * j.abs(), "g = {g}: {j} > {last}");
        assert!(s.lambda.min() >= 0.0);
        assert_eq!(s.u.max_abs_outside(d.mask()), 0.0);
        last = j;
    }
}
