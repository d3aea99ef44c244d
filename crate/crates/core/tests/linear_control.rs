use std::time::Instant;

use gva_core::linear_control::*;
use gva_core::numerics::{op_norm, Matrix, RngState};
use proptest::prelude::*;

fn m(rows: &[&[f64]]) -> Matrix {
    Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn riccati_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, s: &Matrix) -> f64 {
    let at = a.transpose();
    let bt = b.transpose();
    let inner = r.add(&bt.matmul(s).unwrap().matmul(b).unwrap()).unwrap().inverse().unwrap();
    let corr = at.matmul(s).unwrap().matmul(b).unwrap().matmul(&inner).unwrap().matmul(&bt).unwrap().matmul(s).unwrap().matmul(a).unwrap();
    let rhs = q.add(&at.matmul(s).unwrap().matmul(a).unwrap()).unwrap().sub(&corr).unwrap();
    s.sub(&rhs).unwrap().max_abs()
}

/// Positive root of `b²s² + (r - qb² - a²r)s - qr = 0` and the induced gain.
fn scalar_dare(a: f64, b: f64, q: f64, r: f64) -> (f64, f64) {
    let (qa, qb, qc) = (b * b, r - q * b * b - a * a * r, -q * r);
    let s = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
    (s, -b * s * a / (r + b * b * s))
}

/// `-Σ_{t<H} x_tᵀ(Q + KᵀRK)x_t` with `x_t = (A+BK)ᵗx₀`, by explicit matrix powers.
fn matrix_power_reward(sys: &LinearSystem, k: &Matrix, x0: &[f64]) -> f64 {
    let cl = sys.closed_loop(k).unwrap();
    let w = sys.q.add(&k.transpose().matmul(&sys.r).unwrap().matmul(k).unwrap()).unwrap();
    let mut power = Matrix::identity(cl.rows());
    let mut total = 0.0;
    for _ in 0..sys.horizon {
        let x = power.mul_vec(x0).unwrap();
        let wx = w.mul_vec(&x).unwrap();
        total += x.iter().zip(&wx).map(|(a, b)| a * b).sum::<f64>();
        power = cl.matmul(&power).unwrap();
    }
    -total
}

fn noiseless(mut s: LinearSystem, horizon: usize) -> LinearSystem {
    s.sigma_w = 0.0;
    s.horizon = horizon;
    s
}

#[test]
fn dare_with_zero_dynamics() {
    let q = m(&[&[2.0, 0.5], &[0.5, 1.0]]);
    let sol = dare_solve(&Matrix::zeros(2, 2), &Matrix::identity(2), &q, &Matrix::identity(2), DARE_TOL, 100).unwrap();
    assert_eq!(sol.s, q);
    assert_eq!(sol.k.max_abs(), 0.0);
}

#[test]
fn dare_reference_gain_to_four_decimals() {
    let sys = marginal_reference_system(1000);
    let start = Instant::now();
    let sol = dare_solve(&sys.a, &sys.b, &sys.q, &sys.r, DARE_TOL, DARE_MAX_ITER).unwrap();
    assert!(start.elapsed().as_secs_f64() < 5.0);
    let want = [[1.3867, 0.8250], [0.8250, -1.3867]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((sol.k.get(i, j) - want[i][j]).abs() < 5e-5, "K[{i}][{j}] = {}", sol.k.get(i, j));
        }
    }
    assert!(riccati_residual(&sys.a, &sys.b, &sys.q, &sys.r, &sol.s) <= 10.0 * DARE_TOL * sol.s.max_abs());
}

#[test]
fn symmetric_input_matrix_gives_a_different_gain() {
    let a = Matrix::identity(2).scale(1.0025);
    let b = m(&[&[-0.0043, -0.0026], &[-0.0026, -0.0043]]);
    let sol = dare_solve(&a, &b, &Matrix::identity(2), &Matrix::identity(2), DARE_TOL, DARE_MAX_ITER).unwrap();
    assert!((sol.k.get(0, 0) - 1.3867).abs() > 0.5);
    assert!((sol.k.get(1, 1) + 1.3867).abs() > 0.5);
}

#[test]
fn dare_rejects_bad_inputs() {
    let i2 = Matrix::identity(2);
    assert!(dare_solve(&i2, &i2, &i2.scale(-1.0), &i2, 1e-12, 10).is_err());
    assert!(dare_solve(&i2, &Matrix::zeros(3, 2), &i2, &i2, 1e-12, 10).is_err());
    // an unstabilizable loop never converges
    assert!(dare_solve(&i2.scale(2.0), &Matrix::zeros(2, 2), &i2, &i2, 1e-12, 200).is_err());
}

#[test]
fn marginal_system_construction() {
    let sys = make_marginally_stable(&mut RngState::new(0), 2, 2.5, 1000).unwrap();
    assert!((sys.a.get(0, 0) - 1.0025).abs() < 1e-15 && (sys.a.get(1, 1) - 1.0025).abs() < 1e-15);
    let hook = marginally_stable_with(&Matrix::identity(2), 2.5, 1000).unwrap();
    assert_eq!(hook.b, Matrix::identity(2).scale(-0.0025));
    assert!(make_marginally_stable(&mut RngState::new(0), 2, 0.0, 1000).is_err());
}

#[test]
fn marginal_closed_loop_is_non_expansive() {
    for seed in 0..5 {
        for d in [2, 3] {
            let sys = make_marginally_stable(&mut RngState::new(seed), d, 2.5, 1000).unwrap();
            let sol = dare_solve(&sys.a, &sys.b, &sys.q, &sys.r, DARE_TOL, DARE_MAX_ITER).unwrap();
            let n = op_norm(&sys.closed_loop(&sol.k).unwrap(), 1e-12).unwrap();
            assert!(n <= 1.0 + 1e-8, "seed {seed} d {d}: {n}");
        }
    }
}

#[test]
fn spring_cliff_examples() {
    let sys = make_spring_cliff(0.1, -0.05, 1000).unwrap();
    let want = [[0.995004, 0.099833], [-0.099833, 0.995004]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((sys.a.get(i, j) - want[i][j]).abs() < 1e-6);
        }
    }
    assert!(make_spring_cliff(0.1, 0.05, 1000).is_err());
    assert!(make_spring_cliff(0.0, -0.05, 1000).is_err());

    let sol = dare_solve(&sys.a, &sys.b, &sys.q, &sys.r, DARE_TOL, DARE_MAX_ITER).unwrap();
    let expert = LinearPolicy::new(sol.k);
    let (lo, hi) = SPRING_SAFE_ARC;
    for seed in 0..20 {
        let mut rng = RngState::new(seed);
        let phi = lo + (hi - lo) * rng.uniform();
        let r = rollout(&sys, &expert, &[phi.cos(), phi.sin()], &mut rng).unwrap();
        assert!(r.total_reward >= 0.99 * 1000.0, "seed {seed}: {}", r.total_reward);
    }
    let r = rollout(&sys, &LinearPolicy::zero(1, 2), &[-0.04, -1.0], &mut RngState::new(0)).unwrap();
    assert!(r.total_reward < 1000.0 && r.terminated_at.is_some());
    let r = rollout(&sys, &expert, &[-0.2, 0.0], &mut RngState::new(0)).unwrap();
    assert_eq!((r.total_reward, r.terminated_at), (0.0, Some(0)));
    assert_eq!(r.states.len(), 1);
}

#[test]
fn rollout_from_origin_is_zero() {
    let sys = noiseless(marginal_reference_system(50), 50);
    let r = rollout(&sys, &LinearPolicy::new(Matrix::identity(2)), &[0.0, 0.0], &mut RngState::new(0)).unwrap();
    assert_eq!(r.total_reward, 0.0);
    assert!(r.states.iter().all(|s| s.iter().all(|v| *v == 0.0)));
    assert_eq!(r.states.len(), 51);
    assert!(rollout(&sys, &LinearPolicy::zero(2, 2), &[0.0], &mut RngState::new(0)).is_err());
    assert!(rollout(&sys, &LinearPolicy::zero(1, 2), &[0.0, 0.0], &mut RngState::new(0)).is_err());
}

#[test]
fn blowup_is_reported_as_divergence() {
    let mut sys = noiseless(marginal_reference_system(5000), 5000);
    sys.a = Matrix::identity(2).scale(1e3);
    let r = rollout(&sys, &LinearPolicy::zero(2, 2), &[1.0, 1.0], &mut RngState::new(0)).unwrap();
    assert!(r.diverged);
    assert!(r.total_reward.is_finite());
}

#[test]
fn probe_matches_loop_sum() {
    let (d, eps, c, h) = (2, 0.01, 1.0, 300);
    let eps_primes = [0.0, 0.005, 0.01, 0.02, 0.03];
    let rows = error_amplification_probe(d, eps, c, &eps_primes, h).unwrap();
    for row in &rows {
        let rho = 1.0 + row.delta;
        let mut want = 0.0;
        for k in 0..h {
            want += rho.powi(2 * k as i32) - (1.0 - eps).powi(2 * k as i32);
        }
        want *= d as f64;
        assert!((row.gap - want).abs() <= 1e-10 * want.abs().max(1.0), "eps' {}: {} vs {want}", row.eps_prime, row.gap);
        assert!(row.good_gap <= 0.0);
    }
    // δ = 0: each start contributes H minus the optimal energy
    let zero = rows.iter().find(|r| r.delta == 0.0).unwrap();
    let opt: f64 = (0..h).map(|k| 0.99f64.powi(2 * k as i32)).sum();
    assert!((zero.gap - d as f64 * (h as f64 - opt)).abs() < 1e-9);
    assert!(error_amplification_probe(1, 0.0, 1.0, &[0.1], 10).is_err());
    assert!(error_amplification_probe(1, 0.01, 1.0, &[1e6], 500).is_err());
}

#[test]
fn geometric_energy_examples() {
    assert_eq!(geometric_energy(1.0, 7), 7.0);
    assert!((geometric_energy(0.5, 3) - (1.0 + 0.25 + 0.0625)).abs() < 1e-15);
}

#[test]
fn stability_margin_on_reference_system() {
    let sys = noiseless(marginal_reference_system(1000), 1000);
    let sol = dare_solve(&sys.a, &sys.b, &sys.q, &sys.r, DARE_TOL, DARE_MAX_ITER).unwrap();
    let x0 = [0.6, 0.8];
    let same = stability_margin_check(&sys, &sol.k, &sol.k, 1e-3, &x0, 1, &mut RngState::new(0)).unwrap();
    assert_eq!(same.max_gap, 0.0);
    let report = stability_margin_check(&sys, &sol.k, &sol.k, 1e-3, &x0, 50, &mut RngState::new(1)).unwrap();
    assert_eq!(report.gaps.len(), 50);
    assert!(report.all_within, "max gap {} bound {}", report.max_gap, report.bound);

    let radius = 1e-3 / (1000.0 * op_norm(&sys.b, 1e-12).unwrap());
    let far = sol.k.add(&Matrix::identity(2).scale(2.0 * radius)).unwrap();
    assert!(stability_margin_check(&sys, &sol.k, &far, 1e-3, &x0, 1, &mut RngState::new(0)).is_err());
}

#[test]
fn system_validation() {
    let mut sys = marginal_reference_system(10);
    sys.q = m(&[&[1.0, 0.0], &[0.0, -1.0]]);
    assert!(sys.validate().is_err());
    let mut sys = marginal_reference_system(10);
    sys.horizon = 0;
    assert!(sys.validate().is_err());
    let mut sys = marginal_reference_system(10);
    sys.init = InitSampler::Fixed { x: vec![1.0] };
    assert!(sys.validate().is_err());
    assert!(marginal_reference_system(10).validate().is_ok());
}

fn entry() -> impl Strategy<Value = f64> {
    -1.0f64..1.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalar_dare_matches_quadratic_root(a in -1.5f64..1.5, b in 0.2f64..2.0, q in 0.1f64..3.0, r in 0.1f64..3.0) {
        let am = Matrix::from_rows(&[vec![a]]).unwrap();
        let bm = Matrix::from_rows(&[vec![b]]).unwrap();
        let sol = dare_solve(&am, &bm, &Matrix::from_rows(&[vec![q]]).unwrap(), &Matrix::from_rows(&[vec![r]]).unwrap(), DARE_TOL, DARE_MAX_ITER).unwrap();
        let (s, k) = scalar_dare(a, b, q, r);
        prop_assert!((sol.s.get(0, 0) - s).abs() <= 1e-10 * s.max(1.0));
        prop_assert!((sol.k.get(0, 0) - k).abs() <= 1e-10);
    }

    #[test]
    fn dare_residual_is_small(v in proptest::collection::vec(entry(), 8)) {
        let a = Matrix::new(2, 2, v[..4].to_vec()).unwrap();
        let b = Matrix::new(2, 2, v[4..].to_vec()).unwrap().add(&Matrix::identity(2)).unwrap();
        prop_assume!(b.determinant().unwrap().abs() > 0.1);
        let (q, r) = (Matrix::identity(2), Matrix::identity(2));
        let sol = dare_solve(&a, &b, &q, &r, DARE_TOL, DARE_MAX_ITER).unwrap();
        prop_assert!(riccati_residual(&a, &b, &q, &r, &sol.s) <= 10.0 * DARE_TOL * sol.s.max_abs().max(1.0));
    }

    #[test]
    fn noiseless_rollout_matches_matrix_powers(v in proptest::collection::vec(entry(), 8), x0 in proptest::collection::vec(entry(), 2)) {
        let mut sys = noiseless(marginal_reference_system(40), 40);
        sys.a = Matrix::new(2, 2, v[..4].to_vec()).unwrap();
        let k = Matrix::new(2, 2, v[4..].to_vec()).unwrap();
        let r = rollout(&sys, &LinearPolicy::new(k.clone()), &x0, &mut RngState::new(0)).unwrap();
        let want = matrix_power_reward(&sys, &k, &x0);
        prop_assert!((r.total_reward - want).abs() <= 1e-9 * want.abs().max(1.0));
        let again = rollout(&sys, &LinearPolicy::new(k), &x0, &mut RngState::new(99)).unwrap();
        prop_assert_eq!(r, again);
    }

    #[test]
    fn stable_loop_reward_is_bounded(l in proptest::collection::vec(entry(), 4), k in proptest::collection::vec(entry(), 4), shrink in 0.1f64..0.95, x0 in proptest::collection::vec(entry(), 2)) {
        let mut sys = noiseless(marginal_reference_system(200), 200);
        let lm = Matrix::new(2, 2, l).unwrap();
        let n = op_norm(&lm, 1e-12).unwrap();
        prop_assume!(n > 1e-6);
        let lm = lm.scale(shrink / n);
        let km = Matrix::new(2, 2, k).unwrap();
        sys.a = lm.sub(&sys.b.matmul(&km).unwrap()).unwrap();
        let rho = op_norm(&sys.closed_loop(&km).unwrap(), 1e-12).unwrap();
        let c = op_norm(&sys.q.add(&km.transpose().matmul(&sys.r).unwrap().matmul(&km).unwrap()).unwrap(), 1e-12).unwrap();
        let x2: f64 = x0.iter().map(|v| v * v).sum();
        let r = rollout(&sys, &LinearPolicy::new(km), &x0, &mut RngState::new(0)).unwrap();
        prop_assert!(r.total_reward.abs() <= c * x2 / (1.0 - rho * rho) + 1e-6);
    }

    #[test]
    fn probe_gap_is_monotone_on_growth_branch(eps in 0.001f64..0.05, c in 0.5f64..2.0, mut eps_primes in proptest::collection::vec(0.0f64..0.08, 2..6)) {
        eps_primes.sort_by(f64::total_cmp);
        let rows = error_amplification_probe(1, eps, c, &eps_primes, 200).unwrap();
        let growth: Vec<f64> = rows.iter().filter(|r| r.delta > 0.0).map(|r| r.gap).collect();
        for w in growth.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
    }
}
