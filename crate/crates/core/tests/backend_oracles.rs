mod common;

use common::*;
use coralpp::backend::{
    fit_backend, fit_lda, fit_pca, plda_score, scatter_matrices, score_trials, transform_embedding, Depth,
    PldaParams, PldaScorer, Scoring,
};
use coralpp::embedio::{EmbeddingSet, ScoreSet, TrialList};
use coralpp::linalg::estimate_covariance;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn clustered(seed: u64, classes: usize, per: usize, d: usize) -> (DMatrix<f64>, Vec<String>) {
    let mut r = rng(seed);
    let mix = gaussian_matrix(&mut r, d, d) * 0.5;
    let mut x = DMatrix::zeros(classes * per, d);
    let mut labels = Vec::new();
    for c in 0..classes {
        let center = gaussian_vector(&mut r, d) * 2.0;
        for u in 0..per {
            let row = gaussian_vector(&mut r, d).transpose() * &mix + center.transpose();
            x.set_row(c * per + u, &row);
            labels.push(format!("c{c:03}"));
        }
    }
    (x, labels)
}

#[test]
fn pca_beats_random_frames() {
    let (x, _) = clustered(1, 20, 10, 8);
    let cov = naive_cov(&x);
    let retained = |f: &DMatrix<f64>| (f.transpose() * &cov * f).trace();
    let p = fit_pca(&x, 3).unwrap();
    assert!((p.transpose() * &p - DMatrix::identity(3, 3)).amax() < 1e-10);
    let best = retained(&p);
    let mut r = rng(2);
    for _ in 0..100 {
        let frame = gaussian_matrix(&mut r, 8, 3).qr().q();
        assert!(best >= retained(&frame) - 1e-12);
    }
}

#[test]
fn lda_beats_random_projections() {
    let (x, labels) = clustered(3, 12, 15, 8);
    let (sw, sb) = scatter_matrices(&x, &labels);
    // Fisher criterion tr((W'SwW)^-1 W'SbW), invariant to the basis of W
    let fisher = |w: &DMatrix<f64>| {
        let a = w.transpose() * &sw * w;
        let b = w.transpose() * &sb * w;
        (a.try_inverse().unwrap() * b).trace()
    };
    let w = fit_lda(&x, &labels, 4).unwrap();
    let best = fisher(&w);
    let mut r = rng(4);
    for _ in 0..100 {
        let g = gaussian_matrix(&mut r, 8, 4);
        assert!(best >= fisher(&g) * (1.0 - 1e-9));
    }
}

#[test]
fn pca_is_isometric_on_its_subspace() {
    let mut r = rng(5);
    let basis = gaussian_matrix(&mut r, 6, 3).qr().q();
    let x = gaussian_matrix(&mut r, 40, 3) * basis.transpose();
    let p = fit_pca(&x, 3).unwrap();
    let y = &x * &p;
    for i in 0..10 {
        for j in 0..10 {
            let dx = (x.row(i) - x.row(j)).norm();
            let dy = (y.row(i) - y.row(j)).norm();
            assert!((dx - dy).abs() < 1e-10);
        }
    }
}

fn random_plda(seed: u64, d: usize) -> PldaParams {
    let mut r = rng(seed);
    let a = gaussian_matrix(&mut r, d, d);
    let b = gaussian_matrix(&mut r, d, d) * 0.5;
    PldaParams {
        mu: gaussian_vector(&mut r, d),
        between: &a * a.transpose() + DMatrix::identity(d, d) * 0.1,
        within: &b * b.transpose() + DMatrix::identity(d, d) * 0.2,
    }
}

fn sample_mvn(r: &mut rand_chacha::ChaCha8Rng, cov: &DMatrix<f64>) -> DVector<f64> {
    let l = cov.clone().cholesky().unwrap().l();
    l * gaussian_vector(r, cov.nrows())
}

#[test]
fn plda_llr_separates_model_samples() {
    let d = 5;
    let p = random_plda(6, d);
    let scorer = PldaScorer::new(&p).unwrap();
    let mut r = rng(7);
    let (mut same, mut diff) = (0.0, 0.0);
    for _ in 0..1000 {
        let y = &p.mu + sample_mvn(&mut r, &p.between);
        let e = &y + sample_mvn(&mut r, &p.within);
        let t = &y + sample_mvn(&mut r, &p.within);
        same += scorer.score(&e, &t).unwrap();
        let y2 = &p.mu + sample_mvn(&mut r, &p.between);
        let t2 = &y2 + sample_mvn(&mut r, &p.within);
        diff += scorer.score(&e, &t2).unwrap();
    }
    assert!(same / 1000.0 > diff / 1000.0);
}

#[test]
fn plda_symmetric_and_translation_consistent() {
    let d = 4;
    let p = random_plda(8, d);
    let scorer = PldaScorer::new(&p).unwrap();
    let mut r = rng(9);
    let shift = gaussian_vector(&mut r, d) * 3.0;
    let moved = PldaScorer::new(&PldaParams {
        mu: &p.mu + &shift,
        ..p.clone()
    })
    .unwrap();
    for _ in 0..50 {
        let (a, b) = (gaussian_vector(&mut r, d), gaussian_vector(&mut r, d));
        let s = scorer.score(&a, &b).unwrap();
        assert!((s - scorer.score(&b, &a).unwrap()).abs() < 1e-10);
        assert!((s - moved.score(&(&a + &shift), &(&b + &shift)).unwrap()).abs() < 1e-8);
    }
}

fn backend_data() -> (EmbeddingSet, EmbeddingSet) {
    let (x, labels) = clustered(10, 15, 6, 6);
    let train = labeled("tr", x.clone(), labels);
    let mut r = rng(11);
    let dev = unlabeled("dev", gaussian_matrix(&mut r, 30, 6) + DMatrix::from_element(30, 6, 0.3));
    (train, dev)
}

#[test]
fn fit_backend_is_deterministic() {
    let (train, dev) = backend_data();
    let a = fit_backend(&train, &dev, 5, 4).unwrap();
    let b = fit_backend(&train, &dev, 5, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.dims(), (6, 5, 4));
    assert!((a.pca.transpose() * &a.pca - DMatrix::identity(5, 5)).amax() < 1e-10);
    let dev_mean = estimate_covariance(&dev).unwrap().mean;
    assert!((&a.center_mean - dev_mean).amax() < 1e-12);
}

#[test]
fn stage_depths() {
    let (train, dev) = backend_data();
    let m = fit_backend(&train, &dev, 5, 4).unwrap();
    let c = transform_embedding(&m, &m.center_mean, Depth::Centered).unwrap();
    assert_eq!(c.amax(), 0.0);
    assert!(transform_embedding(&m, &m.center_mean, Depth::Lnorm).is_err());
    for i in 0..train.len() {
        let v = transform_embedding(&m, &train.row(i), Depth::Lnorm).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-12);
        assert_eq!(transform_embedding(&m, &train.row(i), Depth::Lda).unwrap().len(), 4);
    }
}

#[test]
fn batched_scores_match_single_trials() {
    let (train, dev) = backend_data();
    let m = fit_backend(&train, &dev, 5, 4).unwrap();
    let mut r = rng(12);
    let pairs: Vec<(String, String)> = (0..60)
        .map(|_| {
            let (a, b) = (r.random_range(0..train.len()), r.random_range(0..train.len()));
            (train.ids()[a].clone(), train.ids()[b].clone())
        })
        .collect();
    let trials = TrialList::new(pairs.clone(), None).unwrap();
    let batch = score_trials(&m, &train, &train, &trials, Scoring::Plda).unwrap();
    for ((e, t), s) in pairs.iter().zip(batch.scores()) {
        let ev = transform_embedding(&m, &train.row(train.position(e).unwrap()), Depth::Lda).unwrap();
        let tv = transform_embedding(&m, &train.row(train.position(t).unwrap()), Depth::Lda).unwrap();
        assert_eq!(plda_score(&m, &ev, &tv).unwrap().to_bits(), s.to_bits());
    }
    assert_eq!(batch, score_trials(&m, &train, &train, &trials, Scoring::Plda).unwrap());
}

#[test]
fn cosine_self_trials_score_one() {
    let (train, dev) = backend_data();
    let m = fit_backend(&train, &dev, 5, 4).unwrap();
    let pairs: Vec<(String, String)> = train.ids().iter().map(|i| (i.clone(), i.clone())).collect();
    let trials = TrialList::new(pairs, None).unwrap();
    let s: ScoreSet = score_trials(&m, &train, &train, &trials, Scoring::Cosine).unwrap();
    assert!(s.scores().iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn unknown_trial_ids_are_lookup_errors() {
    let (train, dev) = backend_data();
    let m = fit_backend(&train, &dev, 5, 4).unwrap();
    let trials = TrialList::new(vec![("nobody".into(), "tr0".into())], None).unwrap();
    let err = score_trials(&m, &train, &train, &trials, Scoring::Plda).unwrap_err();
    assert!(matches!(err, coralpp::Error::Lookup(_)));
    assert!(err.to_string().contains("nobody"));
}
