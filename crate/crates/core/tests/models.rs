//! Cross-module properties of the partialling and partial-linear-model code.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use medbias::partialling::{fwl_estimate, RegressionData};
use medbias::plm::{
    fit_nuisance, fit_split, plm_conditional_bias, simulate_plm, z_expansion, Alignment, CovariateLaw, NoiseLaw,
    NuisanceMethod, PlmDgp, SmoothFn,
};

fn dgp() -> PlmDgp {
    PlmDgp {
        theta0: 1.0,
        g0: SmoothFn::Sine { amp: 1.0, freq: 1.0 },
        m0: SmoothFn::Polynomial { coefs: vec![0.0, 1.0] },
        u: NoiseLaw::Normal { sd: 1.0 },
        v: NoiseLaw::Normal { sd: 1.0 },
        x: CovariateLaw::Uniform01 { d: 1 },
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn expansion_terms_center_given_first_fold() {
    let dgp = dgp();
    let d1 = simulate_plm(&dgp, 200, &mut ChaCha8Rng::seed_from_u64(1));
    let method = NuisanceMethod::Corrupted {
        rate: 0.3,
        alignment: Alignment::Aligned,
        seed: 5,
    };
    let (m_hat, g_hat) = fit_nuisance(&dgp, &d1, &method).unwrap();
    let size = 100;
    let cb = plm_conditional_bias(&dgp, &m_hat, &g_hat, size).unwrap();
    assert!(cb.cond_bias.abs() <= cb.product_bound);
    assert!(cb.cond_bias > 0.0, "aligned perturbations give a positive bias");

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut terms: [Vec<f64>; 4] = Default::default();
    for _ in 0..4000 {
        let d2 = simulate_plm(&dgp, size, &mut rng);
        let e = z_expansion(&d2, &dgp, &m_hat, &g_hat);
        assert!((e.z - e.terms.iter().sum::<f64>()).abs() <= 1e-10 * e.scale);
        for (acc, t) in terms.iter_mut().zip(e.terms) {
            acc.push(t);
        }
    }
    for (j, t) in terms[..3].iter().enumerate() {
        let (m, se) = mean_se(t);
        assert!(m.abs() <= 3.0 * se, "term {j}: mean {m} se {se}");
    }
    let (m, se) = mean_se(&terms[3]);
    assert!((m - cb.cond_bias).abs() <= 3.0 * se, "product term {m} vs {} (se {se})", cb.cond_bias);
}

#[test]
fn oracle_nuisances_have_no_bias() {
    let dgp = dgp();
    let data = simulate_plm(&dgp, 300, &mut ChaCha8Rng::seed_from_u64(3));
    let fit = fit_split(&dgp, &data, &NuisanceMethod::Oracle, 4).unwrap();
    assert_eq!(fit.cond_bias, 0.0);
    assert_eq!(fit.product_bound, 0.0);
    assert_eq!(fit.d1_indices.len() + fit.d2_indices.len(), 300);
    assert!((fit.theta_hat - 1.0).abs() < 0.5);
}

#[test]
fn linear_plm_is_recovered_by_partialling() {
    // With linear g₀ and m₀ the pooled least-squares fit on (1, X) is the
    // partialling estimator and is consistent for θ₀.
    let dgp = PlmDgp {
        theta0: -0.75,
        g0: SmoothFn::Linear { intercept: 0.3, coef: vec![2.0] },
        m0: SmoothFn::Linear { intercept: -1.0, coef: vec![1.5] },
        ..dgp()
    };
    let data = simulate_plm(&dgp, 20_000, &mut ChaCha8Rng::seed_from_u64(6));
    let reg = RegressionData::new(data.y.clone(), data.t.clone(), data.x.clone().insert_column(0, 1.0)).unwrap();
    assert_eq!(reg.d(), 2);
    let fit = fwl_estimate(&reg).unwrap();
    assert!((fit.theta_hat + 0.75).abs() < 0.05, "{}", fit.theta_hat);
}

#[test]
fn learned_nuisances_beat_no_adjustment() {
    let dgp = dgp();
    let data = simulate_plm(&dgp, 2000, &mut ChaCha8Rng::seed_from_u64(7));
    for method in [NuisanceMethod::Series { degree: 5 }, NuisanceMethod::Knn { k: 25 }] {
        let fit = fit_split(&dgp, &data, &method, 8).unwrap();
        assert!((fit.theta_hat - 1.0).abs() < 0.2, "{method:?}: {}", fit.theta_hat);
        assert!(fit.cond_bias.abs() <= fit.product_bound * (1.0 + 1e-9));
    }
}
