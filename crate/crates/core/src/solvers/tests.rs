use super::*;
use crate::grid::Grid;
use crate::nonlinearity::Reaction;
use crate::operators::OperatorSpec;
use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use std::f64::consts::PI;

fn laplacian(n: usize) -> Arc<AssembledOperator> {
    Arc::new(
        AssembledOperator::assemble(
            OperatorSpec::DirichletLaplacian,
            &Grid::new(0.0, 1.0, n).unwrap(),
        )
        .unwrap(),
    )
}

fn opts() -> SolverOptions {
    SolverOptions::default()
}

/// Brute force over all `3^n` partitions (lower / free / upper) of an affine
/// problem `f = g - c y`. Returns every partition whose reduced linear solve
/// satisfies the complementarity sign conditions.
fn enumerate_partitions(
    a: &DMatrix<f64>,
    rhs: &NodeVector,
    slope: f64,
    h1: &NodeVector,
    h2: Option<&NodeVector>,
) -> Vec<NodeVector> {
    let n = rhs.len();
    let states = if h2.is_some() { 3usize } else { 2 };
    let mut found = Vec::new();
    let total = states.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let part: Vec<usize> = (0..n)
            .map(|_| {
                let s = c % states;
                c /= states;
                s
            })
            .collect();
        // 0 = free, 1 = lower, 2 = upper
        let mut m = a.clone();
        let mut b = rhs.clone();
        for i in 0..n {
            m[(i, i)] += slope;
        }
        for i in 0..n {
            if part[i] != 0 {
                let val = if part[i] == 1 { h1[i] } else { h2.unwrap()[i] };
                for k in 0..n {
                    m[(i, k)] = 0.0;
                }
                m[(i, i)] = 1.0;
                b[i] = val;
            }
        }
        let Some(u) = m.lu().solve(&b) else { continue };
        let r = a * &u + &u * slope - rhs;
        let tol = 1e-9 * (1.0 + r.amax());
        let ok = (0..n).all(|i| match part[i] {
            0 => u[i] >= h1[i] - 1e-12 && h2.is_none_or(|h| u[i] <= h[i] + 1e-12),
            1 => r[i] >= -tol,
            _ => r[i] <= tol,
        });
        if ok {
            found.push(u);
        }
    }
    found
}

#[test]
fn semilinear_unit_source() {
    let op = laplacian(63);
    let u = solve_semilinear(
        &op,
        &Nonlinearity::zero(63),
        &MeasureData::constant(63, 1.0),
        &opts(),
    )
    .unwrap();
    for (i, x) in op.grid().nodes().iter().enumerate() {
        assert_abs_diff_eq!(u[i], 0.5 * x * (1.0 - x), epsilon = 1e-9);
    }
}

#[test]
fn semilinear_zero_data() {
    let op = laplacian(15);
    let u = solve_semilinear(
        &op,
        &Nonlinearity::zero(15),
        &MeasureData::zero(15),
        &opts(),
    )
    .unwrap();
    assert_eq!(u.amax(), 0.0);
}

#[test]
fn semilinear_affine_matches_direct_solve() {
    let n = 31;
    let op = laplacian(n);
    let c = 3.5;
    let f = Nonlinearity::affine(NodeVector::zeros(n), c).unwrap();
    let u = solve_semilinear(&op, &f, &MeasureData::constant(n, 1.0), &opts()).unwrap();
    let m = op.matrix() + DMatrix::identity(n, n) * c;
    let direct = m.lu().solve(&NodeVector::from_element(n, 1.0)).unwrap();
    assert!((u - direct).amax() <= 1e-12);
}

#[test]
fn semilinear_nonlinear_kinds_converge() {
    let n = 31;
    let op = laplacian(n);
    let g = op.grid().sample(|x| 50.0 * (3.0 * x).sin());
    for reaction in [
        Reaction::Saturating,
        Reaction::Power { exponent: 3 },
        Reaction::Power { exponent: 5 },
    ] {
        let f = Nonlinearity::new(reaction, g.clone()).unwrap();
        let u = solve_semilinear(&op, &f, &MeasureData::dirac(n, 0.3, -2.0), &opts()).unwrap();
        let sys_r = op.apply(&u)
            - f.eval(&u).unwrap()
            - MeasureData::dirac(n, 0.3, -2.0).lump(op.grid()).unwrap();
        assert!(sys_r.amax() <= 1e-8 * (1.0 + op.apply(&u).amax()));
    }
}

#[test]
fn penalized_inactive_obstacle_equals_semilinear() {
    let n = 31;
    let op = laplacian(n);
    let mu = MeasureData::constant(n, 1.0);
    let free = solve_semilinear(&op, &Nonlinearity::zero(n), &mu, &opts()).unwrap();
    let h1 = free.map(|v| v - 0.01);
    for pen in [1.0, 1e4, 1e8] {
        let u =
            solve_penalized_one_sided(&op, &Nonlinearity::zero(n), &mu, &h1, pen, &opts()).unwrap();
        assert!((u - &free).amax() <= 1e-12);
    }
}

#[test]
fn penalized_monotone_in_penalty() {
    let n = 63;
    let op = laplacian(n);
    let h1 = op.grid().sample(|x| 0.2 - (x - 0.5).abs());
    let f = Nonlinearity::affine(op.grid().sample(|x| (5.0 * x).cos()), 0.5).unwrap();
    let mu = MeasureData::dirac(n, 0.7, -1.0);
    let mut prev: Option<NodeVector> = None;
    for e in 0..=8 {
        let u = solve_penalized_one_sided(&op, &f, &mu, &h1, 10f64.powi(e), &opts()).unwrap();
        if let Some(p) = &prev {
            assert!(
                (0..n).all(|i| u[i] >= p[i] - 1e-10),
                "not monotone at n = 1e{e}"
            );
        }
        prev = Some(u);
    }
}

#[test]
fn penalized_kink_obstacle_matches_oracle() {
    let n = 63;
    let op = laplacian(n);
    let h1 = op.grid().sample(|x| 0.2 - (x - 0.5).abs());
    let f = Nonlinearity::zero(n);
    let mu = MeasureData::zero(n);
    let u = solve_penalized_one_sided(&op, &f, &mu, &h1, 1e8, &opts()).unwrap();
    let prob = ObstacleProblem::new(op.clone(), f, mu, Some(h1), None).unwrap();
    let oracle = lcp_oracle_one_sided(&prob, &opts()).unwrap();
    assert!((u - &oracle.u).amax() <= 1e-4);
}

#[test]
fn penalized_rejects_bad_penalty() {
    let op = laplacian(5);
    let h = NodeVector::zeros(5);
    for pen in [0.0, -1.0, f64::INFINITY] {
        assert!(solve_penalized_one_sided(
            &op,
            &Nonlinearity::zero(5),
            &MeasureData::zero(5),
            &h,
            pen,
            &opts()
        )
        .is_err());
    }
}

#[test]
fn obstacle_far_below_is_inactive() {
    let n = 31;
    let op = laplacian(n);
    let f = Nonlinearity::affine(NodeVector::from_element(n, 1.0), 1.0).unwrap();
    let mu = MeasureData::dirac(n, 0.4, 2.0);
    let free = solve_semilinear(&op, &f, &mu, &opts()).unwrap();
    let prob =
        ObstacleProblem::new(op, f, mu, Some(NodeVector::from_element(n, -1e6)), None).unwrap();
    let sol = solve_obstacle_one_sided(&prob, &opts()).unwrap();
    assert_eq!(sol.nu.plus.density.amax(), 0.0);
    assert!(sol.active_lower.is_empty());
    assert!((&sol.u - free).amax() <= 1e-12);
}

#[test]
fn obstacle_sine_barrier_matches_oracle() {
    let n = 63;
    let op = laplacian(n);
    let h1 = op.grid().sample(|x| (PI * x).sin() - 0.5);
    let prob = ObstacleProblem::new(
        op,
        Nonlinearity::zero(n),
        MeasureData::zero(n),
        Some(h1.clone()),
        None,
    )
    .unwrap();
    let sol = solve_obstacle_one_sided(&prob, &opts()).unwrap();
    let oracle = lcp_oracle_one_sided(&prob, &opts()).unwrap();
    assert!((&sol.u - &oracle.u).amax() <= 1e-4);
    assert!((sol.penalty_u.as_ref().unwrap() - &oracle.u).amax() <= 1e-4);
    assert!(!sol.active_lower.is_empty());
    // Complementarity.
    let nu = &sol.nu.plus.density;
    let pairing: f64 = (0..n)
        .map(|i| op_h(&prob) * (sol.u[i] - h1[i]) * nu[i])
        .sum();
    let tv = prob.op.grid().norm_l1(nu).unwrap();
    assert!(pairing.abs() <= 1e-6 * tv * (&sol.u - &h1).amax());
    assert!(sol.u.iter().zip(h1.iter()).all(|(u, h)| *u >= h - 1e-12));
    assert!(sol.residual_norm <= 1e-9 * sol.residual_scale);
    assert!(!sol.ill_conditioned, "discrepancy {}", sol.nu_discrepancy);
}

fn op_h(p: &ObstacleProblem) -> f64 {
    p.op.grid().h()
}

#[test]
fn one_sided_solution_invariants() {
    let n = 64;
    let op = Arc::new(
        AssembledOperator::assemble(
            OperatorSpec::SpectralFractional { alpha: 1.0 },
            &Grid::new(0.0, 1.0, n).unwrap(),
        )
        .unwrap(),
    );
    let h1 = op.grid().sample(|x| 0.3 * (2.0 * PI * x).sin() - 0.05);
    let f = Nonlinearity::new(Reaction::Saturating, op.grid().sample(|x| 1.0 - 2.0 * x)).unwrap();
    let mu = MeasureData::constant(n, -0.5).with_atom(0.33, -0.4);
    let prob = ObstacleProblem::new(op, f, mu, Some(h1.clone()), None).unwrap();
    let sol = solve_obstacle_one_sided(&prob, &opts()).unwrap();
    let oracle = lcp_oracle_one_sided(&prob, &opts()).unwrap();
    assert!((&sol.u - &oracle.u).amax() <= 1e-4);
    for i in 0..n {
        if sol.nu.plus.density[i] > 0.0 {
            assert!(sol.active_lower.contains(&i));
        }
    }
    assert_eq!(sol.nu.minus.density.amax(), 0.0);
    assert!(sol.residual_norm <= 1e-9 * sol.residual_scale);
}

#[test]
fn oracle_inactive_equals_semilinear() {
    let n = 15;
    let op = laplacian(n);
    let f = Nonlinearity::affine(NodeVector::from_element(n, 2.0), 1.0).unwrap();
    let mu = MeasureData::zero(n);
    let free = solve_semilinear(&op, &f, &mu, &opts()).unwrap();
    let prob =
        ObstacleProblem::new(op, f, mu, Some(NodeVector::from_element(n, -10.0)), None).unwrap();
    let sol = lcp_oracle_one_sided(&prob, &opts()).unwrap();
    assert!((&sol.u - free).amax() <= 1e-10);
}

#[test]
fn oracle_five_node_matches_enumeration() {
    let op = laplacian(5);
    let h1 = NodeVector::from_vec(vec![0.0, 0.5, 1.0, 0.5, 0.0]);
    let prob = ObstacleProblem::new(
        op.clone(),
        Nonlinearity::zero(5),
        MeasureData::zero(5),
        Some(h1.clone()),
        None,
    )
    .unwrap();
    let sol = lcp_oracle_one_sided(&prob, &opts()).unwrap();
    let found = enumerate_partitions(op.matrix(), &NodeVector::zeros(5), 0.0, &h1, None);
    assert_eq!(found.len(), 1);
    assert!((&sol.u - &found[0]).amax() <= 1e-10);
    // Clamped solution: u >= h1 and residual >= 0 exactly.
    let r = prob.reaction_density(&sol.u);
    assert!(sol.u.iter().zip(h1.iter()).all(|(u, h)| u >= h));
    assert!(r.iter().all(|&x| x >= -1e-9));
    let pen = solve_obstacle_one_sided(&prob, &opts()).unwrap();
    assert!((&pen.u - &found[0]).amax() <= 1e-10);
}

#[test]
fn oracle_agrees_with_penalty_on_random_problems() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let n = 31;
    let op = laplacian(n);
    for _ in 0..10 {
        let (a1, a2, c0): (f64, f64, f64) = (
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.2..0.1),
        );
        let h1 = op
            .grid()
            .sample(|x| a1 * (PI * x).sin() + a2 * (2.0 * PI * x).sin() + c0);
        let mu = MeasureData::constant(n, rng.random_range(-3.0..1.0))
            .with_atom(rng.random_range(0.1..0.9), rng.random_range(-1.0..1.0));
        let f = Nonlinearity::affine(NodeVector::zeros(n), rng.random_range(0.0..3.0)).unwrap();
        let prob = ObstacleProblem::new(op.clone(), f, mu, Some(h1), None).unwrap();
        let a = solve_obstacle_one_sided(&prob, &opts()).unwrap();
        let b = lcp_oracle_one_sided(&prob, &opts()).unwrap();
        assert!((&a.u - &b.u).amax() <= 1e-4);
    }
}

#[test]
fn doubly_penalized_pinched_barriers() {
    let n = 31;
    let op = laplacian(n);
    let v = op.grid().sample(|x| 0.1 * (PI * x).sin());
    let u = solve_two_sided_doubly_penalized(
        &op,
        &Nonlinearity::zero(n),
        &MeasureData::constant(n, 1.0),
        &v,
        &v,
        1e8,
        1e8,
        &opts(),
    )
    .unwrap();
    assert!((u - &v).amax() <= 1e-3);
}

#[test]
fn doubly_penalized_inactive_upper_matches_one_sided() {
    let n = 31;
    let op = laplacian(n);
    let f = Nonlinearity::affine(NodeVector::zeros(n), 1.0).unwrap();
    let mu = MeasureData::constant(n, -2.0);
    let h1 = op.grid().sample(|x| -0.05 * (PI * x).sin());
    let h2 = NodeVector::from_element(n, 1e6);
    for pen in [1.0, 1e3, 1e6] {
        let one = solve_penalized_one_sided(&op, &f, &mu, &h1, pen, &opts()).unwrap();
        let two =
            solve_two_sided_doubly_penalized(&op, &f, &mu, &h1, &h2, pen, 1e4, &opts()).unwrap();
        assert!((one - two).amax() <= 1e-10);
    }
}

#[test]
fn doubly_penalized_monotone_in_n_antitone_in_k() {
    let n = 31;
    let op = laplacian(n);
    let f = Nonlinearity::zero(n);
    let mu = MeasureData::dirac(n, 0.3, 4.0).with_atom(0.7, -4.0);
    let h1 = NodeVector::from_element(n, -0.15);
    let h2 = NodeVector::from_element(n, 0.15);
    let pens = [1.0, 10.0, 1e2, 1e3, 1e4, 1e6];
    for &k in &pens {
        let mut prev: Option<NodeVector> = None;
        for &np in &pens {
            let u =
                solve_two_sided_doubly_penalized(&op, &f, &mu, &h1, &h2, np, k, &opts()).unwrap();
            if let Some(p) = &prev {
                assert!((0..n).all(|i| u[i] >= p[i] - 1e-10));
            }
            prev = Some(u);
        }
    }
    for &np in &pens {
        let mut prev: Option<NodeVector> = None;
        for &k in &pens {
            let u =
                solve_two_sided_doubly_penalized(&op, &f, &mu, &h1, &h2, np, k, &opts()).unwrap();
            if let Some(p) = &prev {
                assert!((0..n).all(|i| u[i] <= p[i] + 1e-10));
            }
            prev = Some(u);
        }
    }
}

#[test]
fn two_sided_far_barriers_are_inactive() {
    let n = 31;
    let op = laplacian(n);
    let f = Nonlinearity::affine(NodeVector::from_element(n, 1.0), 0.5).unwrap();
    let mu = MeasureData::dirac(n, 0.6, -1.0);
    let free = solve_semilinear(&op, &f, &mu, &opts()).unwrap();
    let prob = ObstacleProblem::new(
        op,
        f,
        mu,
        Some(NodeVector::from_element(n, -1e6)),
        Some(NodeVector::from_element(n, 1e6)),
    )
    .unwrap();
    let sol = solve_obstacle_two_sided(&prob, &opts()).unwrap();
    assert_eq!(sol.nu_density().amax(), 0.0);
    assert!((&sol.u - free).amax() <= 1e-12);
}

#[test]
fn two_sided_sequence_is_nonincreasing() {
    let n = 63;
    let op = laplacian(n);
    let prob = ObstacleProblem::new(
        op,
        Nonlinearity::zero(n),
        MeasureData::dirac(n, 0.3, 4.0).with_atom(0.7, -4.0),
        Some(NodeVector::from_element(n, -0.15)),
        Some(NodeVector::from_element(n, 0.15)),
    )
    .unwrap();
    let o = SolverOptions {
        keep_iterates: true,
        ..opts()
    };
    let sol = solve_obstacle_two_sided(&prob, &o).unwrap();
    assert!(sol.iterates.len() > 3);
    for w in sol.iterates.windows(2) {
        assert!((0..n).all(|i| w[1][i] <= w[0][i] + 1e-12));
    }
    assert!(!sol.active_lower.is_empty() && !sol.active_upper.is_empty());
    let oracle = lcp_oracle_two_sided(&prob, &opts()).unwrap();
    assert!((&sol.u - &oracle.u).amax() <= 1e-4);
}

#[test]
fn two_sided_dirac_against_flat_barriers() {
    // The positive source keeps u > 0 = h1 everywhere; only the upper
    // barrier is in contact.
    let n = 63;
    let op = laplacian(n);
    let prob = ObstacleProblem::new(
        op,
        Nonlinearity::zero(n),
        MeasureData::dirac(n, 0.5, 4.0),
        Some(NodeVector::zeros(n)),
        Some(NodeVector::from_element(n, 0.15)),
    )
    .unwrap();
    let sol = solve_obstacle_two_sided(&prob, &opts()).unwrap();
    let oracle = lcp_oracle_two_sided(&prob, &opts()).unwrap();
    assert!((&sol.u - &oracle.u).amax() <= 1e-4);
    assert!(!sol.active_upper.is_empty());
    for i in 0..n {
        if sol.nu.minus.density[i] > 0.0 {
            assert!(sol.active_upper.contains(&i));
        }
    }
}

#[test]
fn two_sided_oracle_pinched() {
    let n = 15;
    let op = laplacian(n);
    let v = op.grid().sample(|x| x * (1.0 - x));
    let f = Nonlinearity::affine(NodeVector::from_element(n, 1.0), 2.0).unwrap();
    let mu = MeasureData::dirac(n, 0.4, 1.0);
    let prob = ObstacleProblem::new(
        op.clone(),
        f.clone(),
        mu.clone(),
        Some(v.clone()),
        Some(v.clone()),
    )
    .unwrap();
    let sol = lcp_oracle_two_sided(&prob, &opts()).unwrap();
    assert_eq!(sol.u, v);
    let want = op.apply(&v) - f.eval(&v).unwrap() - mu.lump(op.grid()).unwrap();
    assert!((sol.nu_density() - want).amax() <= 1e-12);
    let seq = solve_obstacle_two_sided(&prob, &opts()).unwrap();
    assert!((&seq.u - &v).amax() <= 1e-12);
}

#[test]
fn two_sided_five_node_matches_enumeration() {
    let op = laplacian(5);
    let h1 = NodeVector::from_vec(vec![-0.1, 0.0, 0.02, -0.05, -0.1]);
    let h2 = NodeVector::from_vec(vec![0.05, 0.03, 0.2, 0.0, 0.1]);
    let mu = MeasureData::from_density(NodeVector::from_vec(vec![8.0, 6.0, -3.0, -6.0, 2.0]));
    let f = Nonlinearity::affine(NodeVector::from_element(5, 0.5), 1.0).unwrap();
    let prob = ObstacleProblem::new(
        op.clone(),
        f,
        mu.clone(),
        Some(h1.clone()),
        Some(h2.clone()),
    )
    .unwrap();
    let rhs = mu.lump(op.grid()).unwrap() + NodeVector::from_element(5, 0.5);
    let found = enumerate_partitions(op.matrix(), &rhs, 1.0, &h1, Some(&h2));
    assert!(!found.is_empty());
    let oracle = lcp_oracle_two_sided(&prob, &opts()).unwrap();
    let seq = solve_obstacle_two_sided(&prob, &opts()).unwrap();
    for u in &found {
        assert!((u - &oracle.u).amax() <= 1e-10);
        assert!((u - &seq.u).amax() <= 1e-10);
    }
}

#[test]
fn two_sided_upper_only() {
    let n = 31;
    let op = laplacian(n);
    let prob = ObstacleProblem::new(
        op.clone(),
        Nonlinearity::zero(n),
        MeasureData::constant(n, 1.0),
        None,
        Some(NodeVector::from_element(n, 0.1)),
    )
    .unwrap();
    let sol = solve_obstacle_two_sided(&prob, &opts()).unwrap();
    assert!(sol.u.iter().all(|&u| u <= 0.1 + 1e-12));
    assert!(sol.nu.minus.density.amax() > 0.0);
    assert_eq!(sol.nu.plus.density.amax(), 0.0);
    // Mirror problem: w = -u with lower barrier -0.1 and source -1.
    let mirror = ObstacleProblem::new(
        op,
        Nonlinearity::zero(n),
        MeasureData::constant(n, -1.0),
        Some(NodeVector::from_element(n, -0.1)),
        None,
    )
    .unwrap();
    let m = solve_obstacle_one_sided(&mirror, &opts()).unwrap();
    assert!((&sol.u + &m.u).amax() <= 1e-10);
}

#[test]
fn schedules_converge_to_same_solution() {
    let n = 63;
    let op = laplacian(n);
    let h1 = op.grid().sample(|x| (PI * x).sin() - 0.5);
    let f = Nonlinearity::new(Reaction::Saturating, NodeVector::from_element(n, 0.5)).unwrap();
    let prob = ObstacleProblem::new(op, f, MeasureData::zero(n), Some(h1), None).unwrap();
    let a = solve_obstacle_one_sided(&prob, &opts()).unwrap();
    let tripling = SolverOptions {
        n0: 4.0,
        growth: 3.0,
        ..opts()
    };
    let b = solve_obstacle_one_sided(&prob, &tripling).unwrap();
    let tol = 10.0 * tripling.tol_cont * (1.0 + a.u.amax());
    assert!((&a.u - &b.u).amax() <= tol);
    assert!((a.penalty_u.unwrap() - b.penalty_u.unwrap()).amax() <= tol);
}

#[test]
fn continuation_stalls_when_budget_too_small() {
    let n = 31;
    let op = laplacian(n);
    let h1 = op.grid().sample(|x| (PI * x).sin() - 0.5);
    let prob = ObstacleProblem::new(
        op,
        Nonlinearity::zero(n),
        MeasureData::zero(n),
        Some(h1),
        None,
    )
    .unwrap();
    let o = SolverOptions { j_max: 3, ..opts() };
    assert!(matches!(
        solve_obstacle_one_sided(&prob, &o),
        Err(Error::ContinuationStalled { .. })
    ));
}

#[test]
fn crossing_barriers_rejected() {
    let n = 5;
    let op = laplacian(n);
    let r = ObstacleProblem::new(
        op,
        Nonlinearity::zero(n),
        MeasureData::zero(n),
        Some(NodeVector::from_element(n, 1.0)),
        Some(NodeVector::zeros(n)),
    );
    assert!(matches!(r, Err(Error::Precondition(_))));
}

#[test]
fn one_sided_entry_points_check_barriers() {
    let n = 5;
    let op = laplacian(n);
    let none = ObstacleProblem::new(
        op.clone(),
        Nonlinearity::zero(n),
        MeasureData::zero(n),
        None,
        None,
    )
    .unwrap();
    assert!(solve_obstacle_one_sided(&none, &opts()).is_err());
    assert!(lcp_oracle_one_sided(&none, &opts()).is_err());
    assert!(lcp_oracle_two_sided(&none, &opts()).is_err());
    let sol = solve_obstacle(&none, &opts()).unwrap();
    assert_eq!(sol.method, SolveMethod::Semilinear);
}
