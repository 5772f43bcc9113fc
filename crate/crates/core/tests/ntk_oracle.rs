//! Kernel closed forms against the Monte-Carlo oracle, the power-iteration
//! eigensolver against a dense Jacobi oracle, and a width-sweep smoke test.

mod support;

use ndarray::{Array1, Array2};
use nlucb::ntk::{
    self, gram_convergence, mc_expectations, min_eigenvalue, ntk_matrix, ntk_pair,
    smallest_eigenvalue,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    loop {
        let v = Array1::from_iter((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let norm = v.dot(&v).sqrt();
        if norm > 1e-9 {
            return v / norm;
        }
    }
}

#[test]
fn closed_forms_agree_with_monte_carlo_on_random_covariances() {
    let mut rng = ChaCha8Rng::seed_from_u64(314);
    for trial in 0..12 {
        let a = 0.2 + 1.8 * rng.random::<f64>();
        let b = 0.2 + 1.8 * rng.random::<f64>();
        let rho: f64 = 2.0 * rng.random::<f64>() - 1.0;
        let c = rho * (a * b).sqrt() * 0.999;
        let est = mc_expectations(a, b, c, 400_000, 1000 + trial).unwrap();
        let pair_like = |x: f64| x; // readability
        // closed forms used by the recursion (halved to match raw expectations)
        let th = (c / (a * b).sqrt()).clamp(-1.0, 1.0).acos();
        let closed_ss = ((a * b).sqrt() / (2.0 * std::f64::consts::PI))
            * (th.sin() + (std::f64::consts::PI - th) * th.cos());
        let closed_dd = (std::f64::consts::PI - th) / (2.0 * std::f64::consts::PI);
        assert!(
            (pair_like(closed_ss) - est.sig_prod).abs() <= 4.0 * est.sig_prod_se,
            "trial {trial}: ss {closed_ss} vs mc {} (se {})",
            est.sig_prod,
            est.sig_prod_se
        );
        assert!(
            (closed_dd - est.deriv_prod).abs() <= 4.0 * est.deriv_prod_se,
            "trial {trial}: dd {closed_dd} vs mc {} (se {})",
            est.deriv_prod,
            est.deriv_prod_se
        );
    }
}

#[test]
fn recursion_levels_agree_with_monte_carlo() {
    // verify each level's 2E[..] factors for a couple of depths and pairs
    let mut rng = ChaCha8Rng::seed_from_u64(555);
    for trial in 0..4 {
        let x = random_unit(6, &mut rng);
        let y = random_unit(6, &mut rng);
        let pair = ntk_pair(&x.view(), &y.view(), 3).unwrap();
        for l in 0..3 {
            let prev = pair.sigma[l];
            let est =
                mc_expectations(prev.xx, prev.yy, prev.xy, 400_000, 7000 + 10 * trial + l as u64)
                    .unwrap();
            let next = pair.sigma[l + 1];
            assert!(
                (next.xy - 2.0 * est.sig_prod).abs() <= 8.0 * est.sig_prod_se,
                "level {l}: sigma {} vs mc {}",
                next.xy,
                2.0 * est.sig_prod
            );
        }
    }
}

#[test]
fn power_iteration_matches_jacobi_on_symmetric_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for &n in &[3usize, 8, 16, 32, 64] {
        let mut b = Array2::<f64>::zeros((n, n));
        for v in b.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        // symmetric, possibly indefinite
        let sym = (&b + &b.t()) * 0.5;
        let want = support::jacobi_eigenvalues(&sym)[0];
        let got = smallest_eigenvalue(&sym.view()).unwrap();
        let scale = sym.iter().fold(0.0_f64, |s, v| s.max(v.abs())).max(1.0);
        assert!(
            (want - got).abs() <= 1e-7 * scale,
            "n={n}: jacobi {want} vs power {got}"
        );
    }
}

#[test]
fn kernel_matrix_min_eigenvalue_matches_jacobi() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let points: Vec<Array1<f64>> = (0..12).map(|_| random_unit(8, &mut rng)).collect();
    let gram = ntk_matrix(&points, 2).unwrap();
    let want = support::jacobi_eigenvalues(&gram.matrix)[0];
    let got = min_eigenvalue(&gram).unwrap();
    assert!((want - got).abs() <= 1e-7, "jacobi {want} vs power {got}");
    assert!(got >= -1e-8, "kernel matrix must be PSD, got {got}");
}

#[test]
fn gradient_gram_width_sweep_smoke() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let points: Vec<Array1<f64>> = (0..6).map(|_| support::duplicated_unit(16, &mut rng)).collect();
    let widths = [32usize, 256];
    let sweep = gram_convergence(&points, 2, &widths, 3, 0).unwrap();
    assert_eq!(sweep.rows.len(), 6);
    let means = sweep.mean_errors(&widths);
    assert!(
        means[1] < means[0],
        "expected narrower width to be worse: {means:?}"
    );
    // every sampled Gram is PSD (it is a Gram matrix)
    for row in &sweep.rows {
        assert!(row.frobenius_error.is_finite());
    }
}

#[test]
fn single_point_diagonal_approaches_the_analytic_limit() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let point = vec![support::duplicated_unit(16, &mut rng)];
    let depth = 2;
    let limit = ntk::full_parameter_kernel(&point, depth).unwrap()[[0, 0]];
    assert!((limit - depth as f64 / 2.0).abs() < 1e-12);
    let mean_abs_err = |width: usize| {
        let shape = nlucb::network::NetworkShape::new(16, width, depth).unwrap();
        let mut total = 0.0;
        for seed in 0..10 {
            let params = nlucb::network::init_params_iid(shape, 9000 + seed).unwrap();
            let g = ntk::gradient_feature_gram(&point, &params).unwrap()[[0, 0]];
            total += (g - limit).abs();
        }
        total / 10.0
    };
    let coarse = mean_abs_err(16);
    let fine = mean_abs_err(512);
    assert!(
        fine < coarse,
        "diagonal error should shrink with width: {coarse} -> {fine}"
    );
}
