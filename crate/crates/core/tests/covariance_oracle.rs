//! Structured covariance assembly against the joint Gaussian built from the
//! independent sources, plus Monte Carlo checks of the simulator.

mod common;

use common::{max_abs_diff, moment_z_scores, spec};
use geofactor::covariance::{cpc_transform, factor_cov, factor_cov_matrix, gp_cov_matrix, marginal_z_moments};
use geofactor::oracle::joint_gaussian_oracle;
use geofactor::rng::{stream_rng, ORACLE_STREAM};
use geofactor::simulate::{simulate_with_rng, MissingPolicy, TrueParams};
use nalgebra::DMatrix;
use rand::Rng;

struct Instance {
    params: TrueParams,
    coords: Vec<[f64; 2]>,
    x: DMatrix<f64>,
}

fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let m = rng.random_range(1..=3usize);
    let n = rng.random_range(2..=50 / m);
    let q = rng.random_range(1..=3usize);
    let g = rng.random_range(0..=m);
    let p = rng.random_range(0..=2usize);
    let coords = common::random_coords(rng, n, 10.0);
    let x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let nu: Vec<f64> = (0..m * (m - 1) / 2).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let r = cpc_transform(&nu, m).unwrap();
    let params = TrueParams {
        c: (0..q).map(|_| rng.random::<f64>() - 0.5).collect(),
        a_star: (0..q).map(|_| (0..m).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect(),
        beta: (0..m * p).map(|_| rng.random::<f64>() - 0.5).collect(),
        t: (0..m)
            .map(|_| {
                (0..g)
                    .map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random::<f64>() * 1.5 })
                    .collect()
            })
            .collect(),
        phi: (0..g).map(|_| 0.5 + rng.random::<f64>() * 5.0).collect(),
        r: (0..m).map(|k| (0..m).map(|l| r[(k, l)]).collect()).collect(),
        d: (0..m).map(|_| 0.3 + rng.random::<f64>()).collect(),
    };
    Instance { params, coords, x }
}

#[test]
fn structured_assembly_matches_source_construction() {
    let mut rng = stream_rng(21, ORACLE_STREAM);
    let mut worst = 0.0f64;
    for _ in 0..60 {
        let inst = random_instance(&mut rng);
        let p = &inst.params;
        let n = inst.coords.len();
        let gp: Vec<DMatrix<f64>> = p.phi.iter().map(|&phi| gp_cov_matrix(&inst.coords, phi).unwrap()).collect();
        let t = p.t_matrix();
        let r = p.r_matrix();
        let joint = joint_gaussian_oracle(p, &inst.coords, &inst.x, &[], &DMatrix::zeros(0, inst.x.ncols())).unwrap();

        let sigma = factor_cov_matrix(&t, &gp, &p.d, &r, n).unwrap();
        let theta = joint.marginal_block("theta").unwrap();
        worst = worst.max(max_abs_diff(&sigma, &theta.cov));
        let fc = factor_cov(&t, &gp, &p.d, &r, n).unwrap();
        worst = worst.max(max_abs_diff(&fc.cov, &theta.cov));

        let (mu, cov) = marginal_z_moments(&p.c, &p.a_matrix(), &p.beta, &inst.x, &t, &gp, &p.d, &r).unwrap();
        let z = joint.marginal_block("z").unwrap();
        worst = worst.max(max_abs_diff(&cov, &z.cov));
        worst = worst.max((mu - z.mean).amax());
    }
    assert!(worst < 1e-10, "largest discrepancy {worst:e}");
}

#[test]
fn simulator_moments_match_oracle() {
    let spec = spec(
        r#"
[model]
factors = 2
discrimination = [["positive", 0], ["free", "positive"], ["free", "free"]]
loading = [[true], [true]]
residual_sd = [0.7, 0.5]
"#,
    );
    let params = TrueParams {
        c: vec![0.3, -0.2, 0.5],
        a_star: vec![vec![1.0, 0.0], vec![0.4, 0.8], vec![-0.6, 0.3]],
        beta: vec![],
        t: vec![vec![0.9], vec![0.5]],
        phi: vec![1.5],
        r: vec![vec![1.0, 0.4], vec![0.4, 1.0]],
        d: vec![0.7, 0.5],
    };
    let coords = vec![[0.0, 0.0], [1.0, 0.5], [0.3, 2.0]];
    let x = DMatrix::zeros(3, 0);
    let joint = joint_gaussian_oracle(&params, &coords, &x, &[], &DMatrix::zeros(0, 0)).unwrap();
    let z_oracle = joint.marginal_block("z").unwrap();
    let theta_oracle = joint.marginal_block("theta").unwrap();

    let mut rng = stream_rng(22, ORACLE_STREAM);
    let (mut zs, mut thetas) = (Vec::new(), Vec::new());
    for _ in 0..20_000 {
        let sim = simulate_with_rng(&spec, &params, &coords, &x, &[], &MissingPolicy::None, &mut rng).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let y = sim.data.y(i, j).unwrap();
                assert_eq!(y == 1, sim.z[j * 3 + i] > 0.0);
            }
        }
        zs.push(sim.z);
        thetas.push(sim.theta);
    }
    let (zm, zc) = moment_z_scores(&zs, &z_oracle.mean, &z_oracle.cov);
    assert!(zm < 3.5 && zc < 3.5, "z: mean {zm:.2}, cov {zc:.2}");
    let (tm, tc) = moment_z_scores(&thetas, &theta_oracle.mean, &theta_oracle.cov);
    assert!(tm < 3.5 && tc < 3.5, "theta: mean {tm:.2}, cov {tc:.2}");
}
