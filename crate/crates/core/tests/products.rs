//! DIC, kriging, exceedance, variogram, trace summaries and rescaling.

mod common;

use common::{chain_from_samples, dataset, moment_z_scores, random_coords};
use geofactor::covariance::cpc_transform;
use geofactor::oracle::joint_gaussian_oracle;
use geofactor::products::{
    autocorrelation, dic, empirical_variogram, exceedance_prob, log_likelihood_y, predict_factors,
    summarize_trace, FactorParams, Kriger, PredictConfig, PredictionResult,
};
use geofactor::rng::{stream_rng, ORACLE_STREAM};
use geofactor::sampler::rescale_samples;
use geofactor::simulate::TrueParams;
use geofactor::stats::standard_normal;
use geofactor::{Dataset, Samples};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

fn phi_ref(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

fn samples_of(rows: usize, mut f: impl FnMut(usize, &mut Samples)) -> Samples {
    let mut s = Samples::default();
    for r in 0..rows {
        s.iteration.push(r + 1);
        f(r, &mut s);
    }
    s
}

// ---------------------------------------------------------------- likelihood

#[test]
fn loglik_single_cell_at_zero_is_log_half() {
    let data = dataset(vec![[0.0, 0.0]], &[vec![1]], None);
    let ll = log_likelihood_y(&[0.4], &[-0.4], &[1.0], &data).unwrap();
    assert!((ll - 0.5f64.ln()).abs() < 1e-14);
}

#[test]
fn loglik_all_missing_is_zero() {
    let data = Dataset::new(
        vec!["a".into(), "b".into()],
        vec!["q".into()],
        vec![None, None],
        vec![[0.0, 0.0], [1.0, 0.0]],
        vec![],
        DMatrix::zeros(2, 0),
    )
    .unwrap();
    assert_eq!(log_likelihood_y(&[0.3, -1.0], &[0.2], &[0.9], &data).unwrap(), 0.0);
}

#[test]
fn loglik_matches_direct_cell_sum() {
    let data = dataset(vec![[0.0, 0.0], [1.0, 1.0]], &[vec![1, 0], vec![0, 1]], None);
    // m = 2, θ stacked by factor.
    let theta = [0.3, -1.2, 0.8, 0.1];
    let c = [0.25, -0.5];
    let a = [1.1, 0.0, -0.4, 0.7];
    let mut want = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let eta = c[j] + a[j * 2] * theta[i] + a[j * 2 + 1] * theta[2 + i];
            let p = phi_ref(eta);
            want += if data.y(i, j) == Some(1) { p.ln() } else { (1.0 - p).ln() };
        }
    }
    let got = log_likelihood_y(&theta, &c, &a, &data).unwrap();
    assert!((got - want).abs() < 1e-10, "{got} vs {want}");
}

// ----------------------------------------------------------------------- DIC

fn one_cell_chain(theta: &[f64], c: &[f64], a: &[f64]) -> geofactor::ChainOutput {
    let s = samples_of(theta.len(), |r, s| {
        s.theta.push(vec![theta[r]]);
        s.c.push(vec![c[r]]);
        s.a_star.push(vec![a[r]]);
        s.beta.push(vec![]);
        s.t.push(vec![]);
        s.phi.push(vec![]);
        s.corr.push(vec![]);
    });
    chain_from_samples((1, 1, 1, 0), vec![], 0, vec![1.0], s)
}

#[test]
fn dic_two_draws_by_hand() {
    let data = dataset(vec![[0.0, 0.0]], &[vec![1]], None);
    let chain = one_cell_chain(&[0.5, -0.3], &[0.2, 0.4], &[1.0, 0.5]);
    let r = dic(&chain, &data).unwrap();
    let d_bar = -(phi_ref(0.7).ln() + phi_ref(0.25).ln());
    // Posterior means θ = 0.1, c = 0.3, a = 0.75.
    let d_hat = -2.0 * phi_ref(0.3 + 0.75 * 0.1).ln();
    assert!((r.mean_deviance - d_bar).abs() < 1e-10);
    assert!((r.deviance_at_mean - d_hat).abs() < 1e-10);
    assert_eq!(r.p_d, r.mean_deviance - r.deviance_at_mean);
    assert_eq!(r.dic, r.mean_deviance + r.p_d);
}

#[test]
fn dic_of_identical_states_has_no_penalty() {
    let data = dataset(vec![[0.0, 0.0]], &[vec![0]], None);
    let chain = one_cell_chain(&[0.37; 5], &[-0.11; 5], &[0.9; 5]);
    let r = dic(&chain, &data).unwrap();
    assert!(r.p_d.abs() < 1e-12, "{}", r.p_d);
    assert!((r.dic - r.mean_deviance).abs() < 1e-12);
}

#[test]
fn dic_ignores_an_all_missing_item() {
    let coords = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let y = [vec![1], vec![0], vec![1]];
    let narrow = dataset(coords.clone(), &y, None);
    let wide = Dataset::new(
        (0..3).map(|i| i.to_string()).collect(),
        vec!["q0".into(), "blank".into()],
        y.iter().flat_map(|r| [Some(r[0]), None]).collect(),
        coords,
        vec![],
        DMatrix::zeros(3, 0),
    )
    .unwrap();
    let mut rng = stream_rng(4, ORACLE_STREAM);
    let rows: Vec<(Vec<f64>, f64, f64, f64, f64)> = (0..20)
        .map(|_| {
            (
                (0..3).map(|_| standard_normal(&mut rng)).collect(),
                standard_normal(&mut rng),
                rng.random::<f64>() + 0.2,
                standard_normal(&mut rng),
                standard_normal(&mut rng),
            )
        })
        .collect();
    let build = |q: usize| {
        let s = samples_of(rows.len(), |r, s| {
            let (th, c0, a0, c1, a1) = &rows[r];
            s.theta.push(th.clone());
            s.c.push([*c0, *c1][..q].to_vec());
            s.a_star.push([*a0, *a1][..q].to_vec());
            s.beta.push(vec![]);
            s.t.push(vec![]);
            s.phi.push(vec![]);
            s.corr.push(vec![]);
        });
        chain_from_samples((3, q, 1, 0), vec![], 0, vec![1.0], s)
    };
    let a = dic(&build(1), &narrow).unwrap();
    let b = dic(&build(2), &wide).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dic_rejects_an_empty_chain() {
    let data = dataset(vec![[0.0, 0.0]], &[vec![1]], None);
    let chain = one_cell_chain(&[], &[], &[]);
    assert!(dic(&chain, &data).is_err());
}

// ------------------------------------------------------------------- kriging

fn random_corr<R: Rng>(rng: &mut R, m: usize) -> DMatrix<f64> {
    let nu: Vec<f64> = (0..m * (m - 1) / 2).map(|_| standard_normal(rng)).collect();
    cpc_transform(&nu, m).unwrap()
}

fn params_to_truth(fp: &FactorParams, q: usize) -> TrueParams {
    let m = fp.m();
    TrueParams {
        c: vec![0.0; q],
        a_star: vec![vec![0.0; m]; q],
        beta: fp.beta.iter().copied().collect(),
        t: (0..m).map(|k| (0..fp.t.ncols()).map(|h| fp.t[(k, h)]).collect()).collect(),
        phi: fp.phi.clone(),
        r: (0..m).map(|k| (0..m).map(|l| fp.r[(k, l)]).collect()).collect(),
        d: fp.d.clone(),
    }
}

#[test]
fn kriging_matches_brute_force_conditioning() {
    let fp = FactorParams {
        t: DMatrix::from_element(1, 1, 0.7),
        phi: vec![0.5],
        r: DMatrix::identity(1, 1),
        d: vec![0.6],
        beta: DVector::zeros(0),
    };
    let coords = [[0.0, 0.0], [0.4, 0.3]];
    let new = [[0.2, 0.5]];
    let x = DMatrix::zeros(2, 0);
    let nx = DMatrix::zeros(1, 0);
    let theta = DVector::from_vec(vec![0.9, -0.4]);
    let (mean, cov) = Kriger::new(&fp, &coords, &x, &theta).unwrap().moments(&new, &nx).unwrap();
    let joint = joint_gaussian_oracle(&params_to_truth(&fp, 1), &coords, &x, &new, &nx).unwrap();
    let want = joint.condition_blocks("theta_new", "theta", &theta).unwrap();
    assert!((mean[0] - want.mean[0]).abs() < 1e-8);
    assert!((cov[(0, 0)] - want.cov[(0, 0)]).abs() < 1e-8);
}

#[test]
fn kriging_matches_oracle_with_covariates_and_two_processes() {
    let mut rng = stream_rng(11, ORACLE_STREAM);
    for _ in 0..20 {
        let (n, nn, m, g, p) = (5, 3, 2, 2, 1);
        let fp = FactorParams {
            t: DMatrix::from_fn(m, g, |_, _| rng.random::<f64>()),
            phi: (0..g).map(|_| 0.2 + rng.random::<f64>()).collect(),
            r: random_corr(&mut rng, m),
            d: (0..m).map(|_| 0.5 + rng.random::<f64>()).collect(),
            beta: DVector::from_fn(m * p, |_, _| standard_normal(&mut rng)),
        };
        let coords = random_coords(&mut rng, n, 1.0);
        let new = random_coords(&mut rng, nn, 1.0);
        let x = DMatrix::from_fn(n, p, |_, _| standard_normal(&mut rng));
        let nx = DMatrix::from_fn(nn, p, |_, _| standard_normal(&mut rng));
        let theta = DVector::from_fn(m * n, |_, _| standard_normal(&mut rng));
        let (mean, cov) = Kriger::new(&fp, &coords, &x, &theta).unwrap().moments(&new, &nx).unwrap();
        let joint = joint_gaussian_oracle(&params_to_truth(&fp, 1), &coords, &x, &new, &nx).unwrap();
        let want = joint.condition_blocks("theta_new", "theta", &theta).unwrap();
        assert!((mean - &want.mean).amax() < 1e-8);
        assert!((cov - &want.cov).amax() < 1e-8);
    }
}

#[test]
fn kriging_never_increases_variance() {
    let mut rng = stream_rng(12, ORACLE_STREAM);
    for _ in 0..100 {
        let n = rng.random_range(2..12);
        let nn = rng.random_range(1..6);
        let m = rng.random_range(1..4);
        let g = rng.random_range(1..3);
        let fp = FactorParams {
            t: DMatrix::from_fn(m, g, |_, _| 2.0 * rng.random::<f64>()),
            phi: (0..g).map(|_| 0.05 + 2.0 * rng.random::<f64>()).collect(),
            r: random_corr(&mut rng, m),
            d: (0..m).map(|_| 0.1 + rng.random::<f64>()).collect(),
            beta: DVector::zeros(0),
        };
        let coords = random_coords(&mut rng, n, 1.0);
        let new = random_coords(&mut rng, nn, 1.0);
        let theta = DVector::from_fn(m * n, |_, _| standard_normal(&mut rng));
        let kr = Kriger::new(&fp, &coords, &DMatrix::zeros(n, 0), &theta).unwrap();
        let (_, cond) = kr.moments(&new, &DMatrix::zeros(nn, 0)).unwrap();
        let prior = fp.cov(&new).unwrap();
        for i in 0..m * nn {
            assert!(cond[(i, i)] <= prior[(i, i)] + 1e-10);
        }
    }
}

fn spatial_chain(draws: usize, t: f64, beta: Vec<f64>, corr: f64, d: Vec<f64>, n: usize, p: usize) -> geofactor::ChainOutput {
    let m = d.len();
    let mut rng = stream_rng(21, ORACLE_STREAM);
    let s = samples_of(draws, |_, s| {
        s.theta.push((0..m * n).map(|_| standard_normal(&mut rng)).collect());
        s.c.push(vec![0.0]);
        s.a_star.push(vec![1.0; m]);
        s.beta.push(beta.clone());
        s.t.push(vec![t; m]);
        s.phi.push(vec![0.3]);
        s.corr.push(if m == 2 { vec![corr] } else { vec![] });
    });
    chain_from_samples((n, 1, m, p), (0..m).map(|k| (k, 0)).collect(), 1, d, s)
}

#[test]
fn far_away_prediction_reverts_to_the_prior() {
    let n = 4;
    let mut rng = stream_rng(3, ORACLE_STREAM);
    let coords = random_coords(&mut rng, n, 1.0);
    let x_raw = DMatrix::from_fn(n, 1, |_, _| standard_normal(&mut rng));
    let data = dataset(coords, &vec![vec![1]; n], Some(x_raw));
    let chain = spatial_chain(3, 0.8, vec![0.5, -1.5], 0.3, vec![0.7, 1.1], n, 1);
    let new = [[1e6, 1e6]];
    let nx = DMatrix::from_element(1, 1, 0.7);
    for s in 0..3 {
        let fp = FactorParams::from_chain(&chain, s);
        let theta = DVector::from_column_slice(&chain.samples.theta[s]);
        let (mean, cov) = Kriger::new(&fp, &data.coords, &data.x, &theta).unwrap().moments(&new, &nx).unwrap();
        assert!((mean[0] - 0.35).abs() < 1e-6 && (mean[1] + 1.05).abs() < 1e-6);
        assert!((cov - fp.cov(&new).unwrap()).amax() < 1e-6);
    }
}

#[test]
fn without_processes_prediction_is_the_residual_prior() {
    let n = 5;
    let mut rng = stream_rng(5, ORACLE_STREAM);
    let coords = random_coords(&mut rng, n, 1.0);
    let data = dataset(coords, &vec![vec![0]; n], None);
    let d = vec![0.8, 1.2];
    let chain = spatial_chain(6000, 0.0, vec![], 0.5, d.clone(), n, 0);
    let new = [[0.5, 0.5]];
    let fp = FactorParams::from_chain(&chain, 0);
    let theta = DVector::from_column_slice(&chain.samples.theta[0]);
    let (mean, cov) = Kriger::new(&fp, &data.coords, &data.x, &theta)
        .unwrap()
        .moments(&new, &DMatrix::zeros(1, 0))
        .unwrap();
    let drd = DMatrix::from_row_slice(2, 2, &[0.64, 0.48, 0.48, 1.44]);
    assert!(mean.amax() < 1e-12);
    assert!((&cov - &drd).amax() < 1e-12);

    let pred = predict_factors(&chain, &data, &new, &DMatrix::zeros(1, 0), &PredictConfig::default()).unwrap();
    let draws: Vec<DVector<f64>> = pred.draws.iter().map(|r| DVector::from_column_slice(r)).collect();
    let (zm, zc) = moment_z_scores(&draws, &DVector::zeros(2), &drd);
    assert!(zm < 4.0 && zc < 4.0, "z = {zm}, {zc}");
}

#[test]
fn predictive_summaries_are_ordered_and_bounded() {
    let n = 6;
    let mut rng = stream_rng(6, ORACLE_STREAM);
    let coords = random_coords(&mut rng, n, 1.0);
    let data = dataset(coords, &vec![vec![1]; n], None);
    let chain = spatial_chain(200, 0.9, vec![], 0.2, vec![0.5, 0.6], n, 0);
    let new = random_coords(&mut rng, 9, 1.0);
    let cfg = PredictConfig {
        chunk_size: 4,
        ..PredictConfig::default()
    };
    let pred = predict_factors(&chain, &data, &new, &DMatrix::zeros(9, 0), &cfg).unwrap();
    assert_eq!(pred.draws.len(), 200);
    for k in 0..2 {
        for i in 0..9 {
            assert!(pred.lower[k][i] <= pred.median[k][i] && pred.median[k][i] <= pred.upper[k][i]);
            assert!((0.0..=1.0).contains(&pred.exceedance[k][i]));
        }
    }
    let again = predict_factors(&chain, &data, &new, &DMatrix::zeros(9, 0), &cfg).unwrap();
    assert_eq!(pred, again);
}

#[test]
fn coincident_locations_need_the_flag() {
    let coords = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let data = dataset(coords, &vec![vec![1]; 3], None);
    let chain = spatial_chain(5, 0.5, vec![], 0.0, vec![1.0], 3, 0);
    let new = [[1.0, 0.0]];
    let nx = DMatrix::zeros(1, 0);
    assert!(predict_factors(&chain, &data, &new, &nx, &PredictConfig::default()).is_err());
    let cfg = PredictConfig {
        allow_coincident: true,
        ..PredictConfig::default()
    };
    assert!(predict_factors(&chain, &data, &new, &nx, &cfg).is_ok());
}

// ---------------------------------------------------------------- exceedance

fn result_with_draws(values: &[f64]) -> PredictionResult {
    PredictionResult {
        new_coords: vec![[0.0, 0.0]],
        m: 1,
        draws: values.iter().map(|&v| vec![v]).collect(),
        lower_level: 0.05,
        upper_level: 0.95,
        median: vec![],
        lower: vec![],
        upper: vec![],
        threshold: 0.0,
        exceedance: vec![],
    }
}

#[test]
fn exceedance_counts_draws_above_threshold() {
    let r = result_with_draws(&[3.0, -1.0, 7.0, 0.5, 9.0, 2.0, 6.0, 8.0, 10.0, 5.0]);
    // Sorted: -1, 0.5, 2, 3 | 5, 6, 7, 8, 9, 10.
    assert_eq!(exceedance_prob(&r, 4.0)[0][0], 0.6);
    assert_eq!(exceedance_prob(&r, f64::NEG_INFINITY)[0][0], 1.0);
}

#[test]
fn exceedance_of_symmetric_draws_is_one_half() {
    let mut rng = stream_rng(8, ORACLE_STREAM);
    let values: Vec<f64> = (0..10_000).map(|_| standard_normal(&mut rng)).collect();
    let p = exceedance_prob(&result_with_draws(&values), 0.0)[0][0];
    // Four binomial standard errors.
    assert!((p - 0.5).abs() < 4.0 * (0.25f64 / 1e4).sqrt(), "{p}");
}

// ----------------------------------------------------------------- variogram

#[test]
fn variogram_of_a_constant_field_is_zero() {
    let mut rng = stream_rng(9, ORACLE_STREAM);
    let coords = random_coords(&mut rng, 50, 1.0);
    let v = empirical_variogram(&[2.5; 50], &coords, 8, None).unwrap();
    assert!(v.gamma.iter().flatten().all(|&g| g == 0.0));
}

#[test]
fn variogram_of_two_points() {
    let v = empirical_variogram(&[0.0, 2.0], &[[0.0, 0.0], [3.0, 4.0]], 1, Some(5.0)).unwrap();
    assert_eq!(v.gamma, vec![Some(2.0)]);
    assert_eq!(v.counts, vec![1]);
}

#[test]
fn variogram_flags_empty_bins_and_rejects_zero_bins() {
    let v = empirical_variogram(&[0.0, 2.0], &[[0.0, 0.0], [3.0, 4.0]], 4, Some(5.0)).unwrap();
    assert_eq!(v.gamma[..3], [None, None, None]);
    assert_eq!(v.gamma[3], Some(2.0));
    assert!(empirical_variogram(&[0.0, 2.0], &[[0.0, 0.0], [3.0, 4.0]], 0, None).is_err());
}

#[test]
fn variogram_of_white_noise_is_flat_at_one() {
    let mut rng = stream_rng(10, ORACLE_STREAM);
    let coords = random_coords(&mut rng, 500, 1.0);
    let values: Vec<f64> = (0..500).map(|_| standard_normal(&mut rng)).collect();
    let v = empirical_variogram(&values, &coords, 10, None).unwrap();
    for (g, c) in v.gamma.iter().zip(&v.counts) {
        let g = g.expect("every bin has pairs");
        assert!((g - 1.0).abs() <= 0.2, "gamma {g} from {c} pairs");
    }
}

#[test]
fn variogram_is_invariant_to_point_order() {
    let mut rng = stream_rng(13, ORACLE_STREAM);
    let coords = random_coords(&mut rng, 80, 1.0);
    let values: Vec<f64> = (0..80).map(|_| standard_normal(&mut rng)).collect();
    let a = empirical_variogram(&values, &coords, 7, None).unwrap();
    let mut idx: Vec<usize> = (0..80).collect();
    idx.shuffle(&mut rng);
    let pv: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
    let pc: Vec<[f64; 2]> = idx.iter().map(|&i| coords[i]).collect();
    let b = empirical_variogram(&pv, &pc, 7, None).unwrap();
    assert_eq!(a, b);
}

// ------------------------------------------------------------ trace summaries

#[test]
fn constant_trace_is_flagged() {
    let s = summarize_trace(&[1.5; 40], 5);
    assert!(s.degenerate);
    assert_eq!(s.sd, 0.0);
    assert_eq!(s.ess, 40.0);
}

#[test]
fn iid_trace_summary() {
    let mut rng = stream_rng(14, ORACLE_STREAM);
    let xs: Vec<f64> = (0..10_000).map(|_| standard_normal(&mut rng)).collect();
    let s = summarize_trace(&xs, 5);
    assert!(s.mean.abs() < 0.04);
    assert!(s.autocorr[0].abs() < 0.03);
    assert!((s.sd - 1.0).abs() < 0.03);
    assert!(s.ess > 8_000.0 && s.ess < 12_000.0, "{}", s.ess);
    assert!(!s.degenerate);
}

#[test]
fn alternating_trace_has_lag_one_autocorrelation_minus_one() {
    let xs: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    assert!((autocorrelation(&xs, 1) + 1.0).abs() < 1e-12);
}

// ----------------------------------------------------------------- rescaling

#[test]
fn rescaling_preserves_linear_predictors_and_normalizes_factors() {
    let mut rng = stream_rng(15, ORACLE_STREAM);
    let (n, q, m, p) = (7, 3, 2, 1);
    let s = samples_of(50, |_, s| {
        s.theta.push((0..m * n).map(|_| 3.0 * standard_normal(&mut rng) + 1.0).collect());
        s.c.push((0..q).map(|_| standard_normal(&mut rng)).collect());
        s.a_star.push((0..q * m).map(|_| standard_normal(&mut rng)).collect());
        s.beta.push((0..m * p).map(|_| standard_normal(&mut rng)).collect());
        s.t.push(vec![0.4, 0.9]);
        s.phi.push(vec![0.3]);
        s.corr.push(vec![0.1]);
    });
    let chain = chain_from_samples((n, q, m, p), vec![(0, 0), (1, 0)], 1, vec![1.0, 0.5], s);
    let scaled = rescale_samples(&chain).unwrap();
    for (before, after) in chain.samples.theta.iter().zip(&scaled.samples.theta).zip(
        chain.samples.a_star.iter().zip(&scaled.samples.a_star),
    ).map(|((t0, t1), (a0, a1))| ((t0, a0), (t1, a1))) {
        for i in 0..n {
            for j in 0..q {
                let eta = |(t, a): (&Vec<f64>, &Vec<f64>)| (0..m).map(|k| a[j * m + k] * t[k * n + i]).sum::<f64>();
                assert!((eta(before) - eta(after)).abs() < 1e-12);
            }
        }
    }
    let q_k = scaled.scale.clone().unwrap();
    for k in 0..m {
        let pooled: Vec<f64> = scaled.samples.theta.iter().flat_map(|r| r[k * n..(k + 1) * n].to_vec()).collect();
        assert!((geofactor::stats::sample_sd(&pooled) - 1.0).abs() < 1e-8);
        assert!((scaled.d[k] * q_k[k] - chain.d[k]).abs() < 1e-12);
    }
}
