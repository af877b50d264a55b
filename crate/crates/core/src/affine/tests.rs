use super::*;
use crate::linalg::nullspace_basis;
use crate::sparsity::StructuredPattern;
use crate::structured::{perturbation_at_s, solve_structured, StructuredConfig};
use crate::system::tests::reference;
use proptest::prelude::*;
use rand::Rng;

fn three_cell() -> AffinePattern {
    AffinePattern::new(&[(0, 0), (0, 2), (2, 0)], 5, 4).unwrap()
}

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> RMat {
    RMat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

#[test]
fn lift_at_origin_is_block_diagonal() {
    let sys = reference();
    let z = lifted_pencil(&sys, &RMat::zeros(5, 4), 0.0, 0.0).unwrap();
    let l0 = sys.lambda0();
    assert_eq!(z.view((0, 0), (5, 4)), l0);
    assert_eq!(z.view((5, 4), (5, 4)), l0);
    assert_eq!(z.view((0, 4), (5, 4)).norm(), 0.0);
    assert_eq!(z.view((5, 0), (5, 4)).norm(), 0.0);
    assert!(lifted_pencil(&sys, &RMat::zeros(4, 4), 0.0, 0.0).is_err());
}

#[test]
fn lift_loses_rank_at_created_zero() {
    let sys = reference();
    let pat = StructuredPattern::new(&[0, 2], &[0, 2], 5, 4).unwrap();
    let s = Complex64::new(0.8297, 0.5583);
    let sol = perturbation_at_s(&sys, &pat, s).unwrap();
    for mu in [s.im, -s.im] {
        let z = lifted_pencil(&sys, &sol.delta_full, s.re, mu).unwrap();
        let sv = singular_values(&z);
        assert!(sv[7] <= 1e-8 * sv[0], "{sv:?}");
        // singular values come in pairs
        assert!((sv[6] - sv[7]).abs() <= 1e-8 * sv[0]);
    }
    let z = lifted_pencil(&sys, &RMat::zeros(5, 4), s.re, s.im).unwrap();
    assert!(singular_values(&z)[7] > 1e-3);
}

#[test]
fn lift_is_affine() {
    let sys = reference();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (d1, d2) = (rand_mat(&mut rng, 5, 4), rand_mat(&mut rng, 5, 4));
    let f = |d: &RMat, l: f64, m: f64| lifted_pencil(&sys, d, l, m).unwrap();
    let z0 = f(&RMat::zeros(5, 4), 0.0, 0.0);
    let lhs = f(&(&d1 * 0.3 + &d2 * -1.7), 0.3 * 0.2 - 1.7 * 0.5, 0.3 * -0.4 - 1.7 * 0.9);
    let rhs = (f(&d1, 0.2, -0.4) - &z0) * 0.3 + (f(&d2, 0.5, 0.9) - &z0) * -1.7 + &z0;
    assert!((lhs - rhs).norm() < 1e-13);
}

#[test]
fn ky_fan_basics() {
    assert!((ky_fan(&RMat::identity(3, 3), 2).unwrap() - 2.0).abs() < 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z = rand_mat(&mut rng, 6, 4);
    let sv = singular_values(&z);
    let nuc: f64 = sv.iter().sum();
    assert!((ky_fan(&z, 4).unwrap() - nuc).abs() < 1e-13);
    assert!((nuc - ky_fan(&z, 3).unwrap() - sv[3]).abs() < 1e-13);
    assert!(ky_fan(&z, 5).is_err());
}

#[test]
fn l1_projection_matches_bisection() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let v: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..2.0)).collect();
        let r = rng.gen_range(0.1..8.0);
        let p = project_l1_nonneg(&v, r);
        let total: f64 = v.iter().sum();
        if total <= r {
            assert_eq!(p, v);
            continue;
        }
        let (mut lo, mut hi) = (0.0, 2.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let s: f64 = v.iter().map(|x| (x - mid).max(0.0)).sum();
            if s > r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        for (a, x) in p.iter().zip(&v) {
            assert!((a - (x - lo).max(0.0)).abs() < 1e-12);
        }
    }
}

fn spectral_prox_objective(x: &RMat, c: &RMat, t: f64) -> f64 {
    t * singular_values(x)[0] + 0.5 * (x - c).norm_squared()
}

fn nuclear_prox_objective(x: &RMat, c: &RMat, t: f64) -> f64 {
    t * singular_values(x).iter().sum::<f64>() + 0.5 * (x - c).norm_squared()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn prox_maps_are_minimizers(seed in 0u64..10_000, t in 0.01f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = rand_mat(&mut rng, 5, 4);
        let ps = prox_spectral(&c, t);
        let pn = svt(&c, t);
        let fs = spectral_prox_objective(&ps, &c, t);
        let fn_ = nuclear_prox_objective(&pn, &c, t);
        for _ in 0..20 {
            let e = rand_mat(&mut rng, 5, 4) * 1e-3;
            prop_assert!(spectral_prox_objective(&(&ps + &e), &c, t) >= fs - 1e-12);
            prop_assert!(nuclear_prox_objective(&(&pn + &e), &c, t) >= fn_ - 1e-12);
        }
    }

    #[test]
    fn penalty_is_smallest_singular_value(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = reference();
        let z = lifted_pencil(&sys, &rand_mat(&mut rng, 5, 4), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)).unwrap();
        let sv = singular_values(&z);
        let nuc: f64 = sv.iter().sum();
        prop_assert!((nuc - ky_fan(&z, 7).unwrap() - sv[7]).abs() < 1e-12 * nuc);
    }
}

#[test]
fn inner_step_stays_at_existing_zero() {
    // invariant zero at s = 0.3: A - BC has eigenvalue 0.3 and D = 1
    let a = RMat::from_row_slice(2, 2, &[1.3, 0.2, 0.0, 0.3]);
    let b = RMat::from_row_slice(2, 1, &[1.0, 0.0]);
    let c = RMat::from_row_slice(1, 2, &[1.0, 0.0]);
    let d = RMat::from_row_slice(1, 1, &[1.0]);
    let sys = StateSpaceSystem::new(a, b, c, d).unwrap();
    let pat = AffinePattern::new(&[(0, 1)], 3, 3).unwrap();
    let z = lifted_pencil(&sys, &RMat::zeros(3, 3), 0.3, 0.0).unwrap();
    assert!(singular_values(&z)[5] < 1e-12);
    let w = top_vectors(&z, 5);
    let step = inner_convex_step(&sys, &pat, (&RMat::zeros(3, 3), 0.3, 0.0), &w, 1e3, &AffineConfig::default()).unwrap();
    assert!(spectral(&step.delta) < 1e-6);
    assert!(singular_values(&step.z)[5] < 1e-6);
    let free = inner_convex_step(&sys, &pat, (&RMat::zeros(3, 3), 0.0, 0.0), &w, 0.0, &AffineConfig::default()).unwrap();
    assert_eq!(spectral(&free.delta), 0.0);
}

#[test]
fn warm_start_masks_structured_solution() {
    let sys = reference();
    let s = Complex64::new(0.8297, 0.5583);
    let sol = perturbation_at_s(&sys, &StructuredPattern::new(&[0, 2], &[0, 2], 5, 4).unwrap(), s).unwrap();
    let (d, l, m) = warm_start_from_structured(&sol, &three_cell());
    assert_eq!((l, m), (0.8297, 0.5583));
    assert_eq!(d[(2, 2)], 0.0);
    for (r, c) in [(0, 0), (0, 2), (2, 0)] {
        assert_eq!(d[(r, c)], sol.delta_full[(r, c)]);
    }
    let rect = AffinePattern::new(&[(0, 0), (0, 2), (2, 0), (2, 2)], 5, 4).unwrap();
    assert_eq!(warm_start_from_structured(&sol, &rect).0, sol.delta_full);
}

#[test]
fn reference_three_cell_fast_profile() {
    let sys = reference();
    let mut d = RMat::zeros(5, 4);
    d[(0, 0)] = -0.0341;
    d[(0, 2)] = -0.2048;
    d[(2, 0)] = 0.0682;
    let sol = solve_affine(&sys, &three_cell(), Some((d, 0.8297, 0.5583)), &AffineConfig::fast()).unwrap();
    assert_eq!(sol.status, AffineStatus::Converged);
    assert!(sol.norm <= 0.2111 + 1e-3, "{}", sol.norm);
    assert!(sol.rank_gap < 1e-6);
    assert_eq!(three_cell().mask(&sol.delta), sol.delta);
    let f0 = sol.f_history[0].f;
    for w in sol.f_history.windows(2) {
        assert!(w[1].f <= w[0].f + 1e-6 * f0);
    }
    let pert = sys.apply_perturbation(&sol.delta).unwrap();
    assert!(pert.weakly_unobservable_subspace_with(1e-5).dim() > 0);
}

#[test]
fn rectangle_cannot_beat_structured_optimum() {
    let sys = reference();
    let pat = StructuredPattern::new(&[0, 2], &[0, 2], 5, 4).unwrap();
    let st = solve_structured(&sys, &pat, &StructuredConfig::default()).unwrap();
    let rect = AffinePattern::from_structured(&pat);
    let init = warm_start_from_structured(&st, &rect);
    let sol = solve_affine(&sys, &rect, Some(init), &AffineConfig::fast()).unwrap();
    assert!(sol.norm >= st.norm - 1e-4, "{} vs {}", sol.norm, st.norm);
}

/// Unique real `(δ, s)` for a single cell `A(0,0)` when `n = 2, m = 2, p = 1`:
/// the other three rows of `Λ_s` are square with one `s` on the diagonal.
fn single_cell_oracle(sys: &StateSpaceSystem) -> (f64, f64) {
    let l0 = sys.lambda0();
    let beta = |s: f64| {
        let mut m = l0.rows(1, 3).into_owned();
        m[(0, 1)] -= s;
        m.determinant()
    };
    // determinant is affine in s
    let (d0, d1) = (beta(0.0), beta(1.0));
    let s = -d0 / (d1 - d0);
    let mut m = l0.rows(1, 3).into_owned();
    m[(0, 1)] -= s;
    let x = nullspace_basis(&m);
    let mut row = l0.row(0).into_owned();
    row[0] -= s;
    let delta = (row * x.column(0))[0] / x[(0, 0)];
    (delta, s)
}

#[test]
fn single_cell_random_starts_find_the_only_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut done = 0;
    while done < 3 {
        let sys = StateSpaceSystem::new(
            rand_mat(&mut rng, 2, 2),
            rand_mat(&mut rng, 2, 1),
            rand_mat(&mut rng, 2, 2),
            rand_mat(&mut rng, 2, 1),
        )
        .unwrap();
        let (delta, s) = single_cell_oracle(&sys);
        if delta.abs() > 2.0 || s.abs() > 3.0 {
            continue;
        }
        let pat = AffinePattern::new(&[(0, 0)], 4, 3).unwrap();
        let sol = solve_affine(&sys, &pat, None, &AffineConfig::fast()).unwrap();
        assert!((sol.norm - delta.abs()).abs() < 1e-4, "{} vs {delta}", sol.norm);
        assert!((sol.lambda_mu.0 - s).abs() < 1e-3 && sol.lambda_mu.1.abs() < 1e-3, "{:?} vs {s}", sol.lambda_mu);
        done += 1;
    }
}
