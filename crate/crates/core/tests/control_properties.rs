use fraclop::control::{
    cost_functional, cost_functional_dense, dense_oracle_solve, make_design, solve_control, ControlProblem,
    DesignGeometry, DesignKind, PrecondKind,
};
use fraclop::discretization::Coefficient1D;
use fraclop::tensor_formats::{read_canon, write_canon, CanonicalTensor, DenseTensor};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn tight(mut p: ControlProblem) -> ControlProblem {
    p.pcg.eps = 1e-10;
    p.pcg.stop_tol = 1e-10;
    p.pcg.rank_cap = 200;
    p
}

fn unit_problem(d: usize, n: usize, alpha: f64) -> ControlProblem {
    let mut p = ControlProblem::reference(d, n, alpha, DesignKind::Box).unwrap();
    p.coefficients = vec![Coefficient1D::Unit; d];
    p
}

fn dense_control(p: &ControlProblem) -> DenseTensor {
    let sol = solve_control(p).unwrap();
    assert!(sol.report.converged, "{:?}", sol.report.termination);
    sol.report.solution.to_dense().unwrap()
}

#[test]
fn laplace_preconditioner_is_nearly_exact_for_unit_coefficients() {
    let mut p = unit_problem(2, 31, 0.5);
    p.precond.kind = PrecondKind::Laplace;
    let sol = solve_control(&p).unwrap();
    assert!(sol.report.converged);
    assert!(sol.report.iterations <= 2, "{} iterations", sol.report.iterations);
}

#[test]
fn doubling_gamma_shrinks_the_control() {
    let p = ControlProblem::reference(2, 15, 0.5, DesignKind::H).unwrap();
    let mut q = p.clone();
    q.gamma = 2.0 * p.gamma;
    let a = solve_control(&p).unwrap().report.solution.norm();
    let b = solve_control(&q).unwrap().report.solution.norm();
    assert!(b < a, "{b} >= {a}");
}

#[test]
fn control_is_linear_in_the_target() {
    let base = tight(ControlProblem::reference(2, 15, 0.5, DesignKind::Box).unwrap());
    let y1 = base.design.clone();
    let y2 = make_design(DesignKind::H, &base.n, &DesignGeometry::default()).unwrap();
    let solve_for = |y: CanonicalTensor| {
        let mut p = base.clone();
        p.design = y;
        dense_control(&p)
    };
    let u1 = solve_for(y1.clone());
    let u2 = solve_for(y2.clone());
    let u = solve_for(y1.scaled(2.0).add(&y2.scaled(-3.0)).unwrap());
    let combo = DenseTensor::from_fn(u.shape(), |i| 2.0 * u1.get(i) - 3.0 * u2.get(i)).unwrap();
    assert!(u.max_abs_diff(&combo) <= 1e-6 * combo.max_abs(), "{}", u.max_abs_diff(&combo));
}

#[test]
fn unit_coefficients_and_centred_box_give_symmetric_control() {
    let p = tight(unit_problem(2, 15, 0.5));
    let u = dense_control(&p);
    let n = 15;
    let scale = u.max_abs();
    for i in 0..n {
        for j in 0..n {
            let v = u.get(&[i, j]);
            for w in [u.get(&[n - 1 - i, j]), u.get(&[i, n - 1 - j]), u.get(&[j, i])] {
                assert!((v - w).abs() <= 5e-8 * scale, "({i},{j}): {v} vs {w}");
            }
        }
    }
}

#[test]
fn small_alpha_control_tends_to_half_the_target() {
    let mut errs = Vec::new();
    for alpha in [1e-2, 1e-3, 1e-4] {
        let p = ControlProblem::reference(2, 15, alpha, DesignKind::Box).unwrap();
        let u = dense_oracle_solve(&p).unwrap().u;
        let y = p.design.to_dense().unwrap();
        let half = DenseTensor::from_fn(y.shape(), |i| 0.5 * y.get(i)).unwrap();
        errs.push(u.max_abs_diff(&half));
    }
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    assert!(errs[2] < 1e-3, "{errs:?}");
}

#[test]
fn oracle_agreement_in_3d() {
    let mut p = ControlProblem::reference(3, 15, 0.5, DesignKind::H).unwrap();
    p.pcg.eps = 1e-8;
    p.pcg.stop_tol = 1e-8;
    p.pcg.rank_cap = 200;
    let u = dense_control(&p);
    let oracle = dense_oracle_solve(&p).unwrap();
    assert!(u.max_abs_diff(&oracle.u) <= 1e-5, "{}", u.max_abs_diff(&oracle.u));
}

#[test]
fn low_rank_cost_is_not_below_the_oracle_cost() {
    for alpha in [1.0, 0.5, 0.1] {
        let p = ControlProblem::reference(2, 31, alpha, DesignKind::H).unwrap();
        let sol = solve_control(&p).unwrap();
        let u = &sol.report.solution;
        let y = sol.assembly.state(&p, u).unwrap();
        let j = cost_functional(&y, u, &p.design, p.gamma).unwrap();
        let o = dense_oracle_solve(&p).unwrap();
        let j_oracle = cost_functional_dense(&o.y, &o.u, &p.design.to_dense().unwrap(), p.gamma);
        assert!(j >= j_oracle - 1e-8, "alpha={alpha}: {j} < {j_oracle}");
    }
}

#[test]
fn oracle_control_frozen_values() {
    // Computed once from the dense oracle and frozen.
    let p = ControlProblem::reference(2, 15, 0.5, DesignKind::Box).unwrap();
    let u = dense_oracle_solve(&p).unwrap().u;
    let got = [u.get(&[7, 7]), u.get(&[3, 7]), u.get(&[0, 0])];
    let frozen = [FROZEN_CENTRE, FROZEN_EDGE, FROZEN_CORNER];
    for (g, f) in got.iter().zip(frozen) {
        assert!((g - f).abs() <= 1e-10 * f.abs().max(1e-3), "{got:?}");
    }
}

const FROZEN_CENTRE: f64 = 0.31285053564037585;
const FROZEN_EDGE: f64 = 0.27793509843468955;
const FROZEN_CORNER: f64 = 0.008623149653880642;

#[test]
fn more_preconditioner_terms_never_cost_iterations() {
    let count = |rank: usize| {
        let mut p = ControlProblem::reference(3, 15, 0.5, DesignKind::H).unwrap();
        p.precond.rank = rank;
        p.precond.eps = 1e-8;
        solve_control(&p).unwrap().report.iterations
    };
    let (r3, r6) = (count(3), count(6));
    assert!(r6 <= r3, "rank 6: {r6}, rank 3: {r3}");
}

#[test]
fn degenerate_sampled_coefficient_needs_opt_in_and_solves() {
    let csv: String = (0..=64)
        .map(|k| {
            let x = k as f64 / 64.0;
            format!("{x},{}\n", x.sin() * x.cos())
        })
        .collect();
    assert!(Coefficient1D::from_csv(&csv, false).is_err());
    let a2 = Coefficient1D::from_csv(&csv, true).unwrap();
    let mut p = ControlProblem::reference(2, 31, 0.5, DesignKind::Box).unwrap();
    p.coefficients[1] = a2;
    p.precond.kind = PrecondKind::Aniso;
    let sol = solve_control(&p).unwrap();
    assert!(sol.report.converged, "{:?}", sol.report.termination);
}

fn random_tensor(seed: u64, shape: &[usize], rank: usize) -> CanonicalTensor {
    CanonicalTensor::random(&mut StdRng::seed_from_u64(seed), shape, rank).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn canon_text_round_trip_is_exact(seed in any::<u64>(), d in 1usize..4, n in 1usize..7, rank in 0usize..5) {
        let t = random_tensor(seed, &vec![n; d], rank);
        let mut buf = Vec::new();
        write_canon(&mut buf, &t).unwrap();
        let back = read_canon(buf.as_slice()).unwrap();
        prop_assert_eq!(back.shape(), t.shape());
        let (a, b) = (t.to_dense().unwrap(), back.to_dense().unwrap());
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn canonical_algebra_matches_dense(seed in any::<u64>(), d in 2usize..4, n in 2usize..6, r1 in 1usize..4, r2 in 1usize..4) {
        let shape = vec![n; d];
        let (x, y) = (random_tensor(seed, &shape, r1), random_tensor(seed ^ 0x9e37, &shape, r2));
        let (dx, dy) = (x.to_dense().unwrap(), y.to_dense().unwrap());
        let scale = dx.max_abs().max(dy.max_abs()).max(1.0);

        let sum = x.axpy(-0.5, &y).unwrap().to_dense().unwrap();
        let want = DenseTensor::from_fn(&shape, |i| dx.get(i) - 0.5 * dy.get(i)).unwrap();
        prop_assert!(sum.max_abs_diff(&want) <= 1e-13 * scale);

        let had = x.hadamard(&y).unwrap().to_dense().unwrap();
        let want = DenseTensor::from_fn(&shape, |i| dx.get(i) * dy.get(i)).unwrap();
        prop_assert!(had.max_abs_diff(&want) <= 1e-13 * scale * scale);

        let ip = x.inner(&y).unwrap();
        prop_assert!((ip - dx.dot(&dy)).abs() <= 1e-12 * dx.frobenius_norm() * dy.frobenius_norm());
        prop_assert!((x.norm() - dx.frobenius_norm()).abs() <= 1e-7 * dx.frobenius_norm());
    }
}
