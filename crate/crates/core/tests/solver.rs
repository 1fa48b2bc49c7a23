use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use lspica::harness::{generate_replicate, ExperimentConfig};
use lspica::linalg::{lower_len, polar_orthogonal, sym_sqrt_and_inv_sqrt};
use lspica::logspline::{select_model, SelectionOptions};
use lspica::metrics::amari_distance;
use lspica::signals::{generate_source, mix, MixingMatrix, NoiseSpec, SourceSpec};
use lspica::spectral::cross_periodogram;
use lspica::whittle_ica::{fit, newton_update, prewhiten, SolverOptions, WhittleObjective};
use lspica::Series;

fn sources(specs: &[NoiseSpec], t: usize, seed: u64) -> Series {
    let chans: Vec<Vec<f64>> = specs
        .iter()
        .enumerate()
        .map(|(j, n)| generate_source(&SourceSpec::new(vec![], *n).unwrap(), t, seed * 31 + j as u64).unwrap())
        .collect();
    Series::from_channels(&chans).unwrap()
}

#[test]
fn ar_pair_is_separated() {
    let specs = [NoiseSpec::ar1(0.9).unwrap(), NoiseSpec::ar1(-0.9).unwrap()];
    let mut good = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let a = MixingMatrix::new(DMatrix::from_fn(2, 2, |_, _| rng.sample(StandardNormal))).unwrap();
        let x = mix(&a, &sources(&specs, 4096, seed)).unwrap();
        let est = fit(&x, &SolverOptions::default()).unwrap();
        if amari_distance(&est.unmixing, &a.inverse()).unwrap() < 0.1 {
            good += 1;
        }
    }
    assert!(good >= 18, "{good}/20");
}

#[test]
fn identity_mixing_recovers_identity() {
    let specs = [NoiseSpec::ar1(0.7).unwrap(), NoiseSpec::ar1(-0.6).unwrap(), NoiseSpec::ma1(0.5).unwrap()];
    let x = sources(&specs, 4096, 3);
    let est = fit(&x, &SolverOptions::default()).unwrap();
    assert!(est.converged);
    let d = amari_distance(&est.unmixing, &DMatrix::identity(3, 3)).unwrap();
    assert!(d < 0.05, "{d}");
}

#[test]
fn channel_permutation_equivariance() {
    let cfg = ExperimentConfig::preset("sim1_desk").unwrap();
    let perm = [2usize, 0, 3, 1];
    let p = DMatrix::from_fn(4, 4, |i, j| if perm[i] == j { 1.0 } else { 0.0 });
    for r in 0..3 {
        let x = generate_replicate(&cfg, 512, r).unwrap().observations;
        let px = x.transform(&p).unwrap();
        let w = fit(&x, &SolverOptions::default()).unwrap().unmixing;
        let wp = fit(&px, &SolverOptions::default()).unwrap().unmixing;
        let d = amari_distance(&(&wp * &p), &w).unwrap();
        assert!(d < 1e-3, "replicate {r}: {d}");
    }
}

#[test]
fn newton_update_decreases_near_truth() {
    let cfg = ExperimentConfig::preset("sim1_desk").unwrap();
    let mut decreased = 0;
    for r in 0..20 {
        let rep = generate_replicate(&cfg, 512, r).unwrap();
        let (white, w) = prewhiten(&rep.observations).unwrap();
        let truth = polar_orthogonal(&(rep.mixing.inverse() * &w.covariance_root));
        let mut rng = ChaCha8Rng::seed_from_u64(900 + r as u64);
        let e = DMatrix::from_fn(4, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let o = polar_orthogonal(&(&truth + e * (0.1 / 4.0)));
        let stack = cross_periodogram(&white).unwrap();
        let q = stack.quadratic_forms(&o);
        let models: Vec<_> = (0..4)
            .map(|j| {
                let v: Vec<f64> = q.row(j).iter().copied().collect();
                select_model(&v, 512, &SelectionOptions::default()).unwrap().0
            })
            .collect();
        let obj = WhittleObjective::new(&stack, &models).unwrap();
        let out = newton_update(&obj, &o, &DVector::zeros(lower_len(4)), 20, 0.5).unwrap();
        if out.objective_after < out.objective_before {
            decreased += 1;
        }
    }
    assert!(decreased >= 19, "{decreased}/20");
}

#[test]
fn whitening_matches_symmetric_root() {
    let cfg = ExperimentConfig::preset("sim1_desk").unwrap();
    let x = generate_replicate(&cfg, 512, 0).unwrap().observations;
    let (_, w) = prewhiten(&x).unwrap();
    let (root, inv) = sym_sqrt_and_inv_sqrt(&w.covariance, lspica::whittle_ica::RANK_TOLERANCE).unwrap();
    assert!((root - &w.covariance_root).amax() < 1e-12);
    assert!((inv - &w.covariance_root_inverse).amax() < 1e-12);
}

#[test]
fn too_short_or_single_channel_is_rejected() {
    let specs = [NoiseSpec::ar1(0.5).unwrap(), NoiseSpec::ar1(-0.5).unwrap()];
    assert!(fit(&sources(&specs, 32, 1), &SolverOptions::default()).is_err());
    assert!(fit(&sources(&specs[..1], 512, 1), &SolverOptions::default()).is_err());
}

#[test]
fn single_precision_fit_separates() {
    let specs = [NoiseSpec::ar1(0.9).unwrap(), NoiseSpec::ar1(-0.9).unwrap()];
    let s64 = sources(&specs, 2048, 7);
    let a = DMatrix::from_row_slice(2, 2, &[1.0f32, 0.6, -0.4, 1.0]);
    let s32 = lspica::signals::MultichannelSeries::<f32>::new(s64.data().map(|v| v as f32)).unwrap();
    let x = s32.transform(&a).unwrap();
    let a_inv = a.try_inverse().unwrap();
    let est = fit(&x, &SolverOptions::default()).unwrap();
    let d = amari_distance(&est.unmixing, &a_inv).unwrap();
    assert!(d < 0.1, "{d}");
    let est = lspica::sobi::sobi(&x, &lspica::sobi::LagSet::default()).unwrap();
    assert!(amari_distance(&est.unmixing, &a_inv).unwrap() < 0.1);
}
