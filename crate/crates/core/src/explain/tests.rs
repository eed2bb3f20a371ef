use std::sync::Arc;

use super::*;
use crate::survival::{build_time_grid, Sample, TimeGrid};
use crate::synthetic::{
    generate_cox_data, oracle_psi_star, ConstantBlackBox, CoxBlackBox, FeatureDistribution,
    PsiSpec, SyntheticData, SyntheticSpec, Weibull,
};

const WEIBULL: Weibull = Weibull {
    scale: 1.0,
    shape: 1.5,
};

fn data(n: usize, psi: PsiSpec, seed: u64) -> SyntheticData {
    generate_cox_data(&SyntheticSpec {
        n,
        psi,
        baseline: WEIBULL,
        censoring_rate: 0.2,
        features: FeatureDistribution::Uniform {
            low: -1.0,
            high: 1.0,
        },
        seed,
    })
    .unwrap()
}

fn cox(d: &SyntheticData, psi: PsiSpec) -> CoxBlackBox {
    CoxBlackBox::new(
        Arc::new(build_time_grid(&d.dataset, 0.01).unwrap()),
        WEIBULL,
        psi,
    )
}

fn config(variant: Variant, epochs: usize) -> ExplainConfig {
    ExplainConfig {
        nam: NamConfig {
            hidden_sizes: vec![16, 8],
            learning_rate: 5e-3,
            epochs,
            variant,
            ..NamConfig::default()
        },
        ..ExplainConfig::default()
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn tiny_grid() -> Arc<TimeGrid> {
    Arc::new(TimeGrid::new(vec![1.0, 2.0, 4.0], 0.5).unwrap())
}

#[test]
fn kernel_weight_hand_values() {
    let x = [0.0, 0.0];
    let points = vec![
        vec![0.0, 0.0],
        vec![3.0, 4.0],
        vec![0.6, 0.8],
        vec![6.0, 8.0],
    ];
    let v = neighborhood_weights(&x, &points, 5.0).unwrap();
    assert_eq!(v[0], 1.0);
    assert_eq!(v[1], 0.0);
    assert!((v[2] - (1.0 - 0.2f64.sqrt())).abs() < 1e-15);
    assert_eq!(v[3], 0.0);
    let quarter = neighborhood_weights(&[0.0], &[vec![1.0]], 4.0).unwrap();
    assert!((quarter[0] - 0.5).abs() < 1e-15);
    assert!(neighborhood_weights(&x, &points, 0.0).is_err());
}

#[test]
fn neighborhood_radius_is_farthest_point() {
    let d = data(50, PsiSpec::Linear(vec![1.0, 0.0]), 1);
    let nb = Neighborhood::sample(&[0.1, 0.2], &d.dataset, 40, 0.1, 9).unwrap();
    assert_eq!(nb.points.len(), 40);
    assert!(nb.weights.iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(nb.weights.iter().copied().fold(1.0, f64::min), 0.0);
}

#[test]
fn perturbations_are_seeded_and_keep_indicators() {
    let samples: Vec<Sample> = (0..20)
        .map(|i| {
            Sample::new(
                vec![i as f64 / 10.0, (i % 2) as f64],
                1.0 + i as f64,
                i % 3 != 0,
            )
        })
        .collect();
    let ds = SurvivalDataset::new(
        samples,
        vec!["age".into(), "flag".into()],
        vec![FeatureKind::Numeric, FeatureKind::Indicator],
    )
    .unwrap();
    let a = generate_perturbations(&[0.5, 1.0], &ds, 30, 4).unwrap();
    let b = generate_perturbations(&[0.5, 1.0], &ds, 30, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, generate_perturbations(&[0.5, 1.0], &ds, 30, 5).unwrap());
    assert!(a.iter().all(|p| p[1] == 1.0));
    assert!(a.iter().any(|p| p[0] != 0.5));
}

#[test]
fn perturbation_mean_matches_center() {
    let d = data(80, PsiSpec::Linear(vec![1.0, 1.0, 1.0]), 2);
    let x = [0.3, -0.4, 0.9];
    let n = 10_000;
    let points = generate_perturbations(&x, &d.dataset, n, 11).unwrap();
    let std = 0.10 * dataset_diameter(&d.dataset).unwrap();
    for k in 0..3 {
        let mean = points.iter().map(|p| p[k]).sum::<f64>() / n as f64;
        assert!((mean - x[k]).abs() < 3.0 * std / (n as f64).sqrt());
        let var = points.iter().map(|p| (p[k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var.sqrt() / std - 1.0).abs() < 0.05);
    }
}

#[test]
fn zero_diameter_is_rejected() {
    let samples = (0..4)
        .map(|i| Sample::new(vec![1.0], 1.0 + i as f64, true))
        .collect();
    let ds = SurvivalDataset::from_samples(samples).unwrap();
    assert!(generate_perturbations(&[1.0], &ds, 5, 0).is_err());
}

#[test]
fn targets_hand_cases() {
    let grid = tiny_grid();
    let base = PiecewiseChf::new(Arc::clone(&grid), vec![0.1, 0.4, 0.9]).unwrap();
    let same = ConstantBlackBox::new(base.clone(), 1);
    let t = build_targets(&same, &base, &[vec![0.0], vec![2.0]], &[1.0, 0.5], 1e-5).unwrap();
    assert!(t.phi.iter().flatten().all(|&p| p == 0.0));
    assert_eq!(t.tau, vec![1.0, 2.0, 0.5]);
    assert_eq!(t.weights, vec![1.0, 0.5]);

    let e2 = 2f64.exp();
    let scaled = PiecewiseChf::new(
        Arc::clone(&grid),
        base.values().iter().map(|h| h * e2).collect(),
    )
    .unwrap();
    let t = build_targets(
        &ConstantBlackBox::new(scaled, 1),
        &base,
        &[vec![0.0]],
        &[1.0],
        1e-5,
    )
    .unwrap();
    assert!(t.phi[0].iter().all(|p| (p - 2.0).abs() < 1e-12));

    let floor_base = PiecewiseChf::new(Arc::clone(&grid), vec![1e-5, 1e-5, 1e-5]).unwrap();
    let zero = PiecewiseChf::new(Arc::clone(&grid), vec![0.0, 0.0, 0.0]).unwrap();
    let t = build_targets(
        &ConstantBlackBox::new(zero, 1),
        &floor_base,
        &[vec![0.0]],
        &[1.0],
        1e-5,
    )
    .unwrap();
    assert_eq!(t.phi[0], vec![0.0; 3]);
}

#[test]
fn targets_reject_grid_mismatch() {
    let base = PiecewiseChf::new(tiny_grid(), vec![0.1, 0.4, 0.9]).unwrap();
    let other = Arc::new(TimeGrid::new(vec![1.0, 3.0, 4.0], 0.5).unwrap());
    let bb = ConstantBlackBox::new(PiecewiseChf::new(other, vec![0.1, 0.2, 0.3]).unwrap(), 1);
    assert!(matches!(
        build_targets(&bb, &base, &[vec![0.0]], &[1.0], 1e-5),
        Err(Error::GridMismatch(_))
    ));
}

fn constant_box(ds: &SurvivalDataset) -> ConstantBlackBox {
    let grid = Arc::new(build_time_grid(ds, 0.01).unwrap());
    ConstantBlackBox::new(nelson_aalen(ds, &grid).unwrap(), ds.m())
}

#[test]
fn constant_black_box_gives_flat_curves() {
    let d = data(60, PsiSpec::Linear(vec![1.0, 0.5]), 3);
    let bb = constant_box(&d.dataset);
    let cfg = config(Variant::Base, 500);
    let global = explain_global(&bb, &d.dataset, &cfg, 0.0, 0.0, 1).unwrap();
    let local = explain_local(&bb, &d.dataset, &[0.2, -0.1], &cfg, 0.0, 0.0, 1).unwrap();
    for e in [&global, &local] {
        assert_eq!(e.curves.len(), 2);
        for c in &e.curves {
            assert!(c.max_abs() < 0.05, "{}", c.max_abs());
        }
    }
}

#[test]
fn local_surrogate_tracks_linear_cox() {
    let b = vec![1.0, 0.5, 0.0];
    let d = data(200, PsiSpec::Linear(b.clone()), 4);
    let bb = cox(&d, PsiSpec::Linear(b.clone()));
    let e = explain_local(
        &bb,
        &d.dataset,
        &[0.1, -0.2, 0.3],
        &config(Variant::Base, 1000),
        0.0,
        0.0,
        2,
    )
    .unwrap();
    let nb = Neighborhood::sample(&[0.1, -0.2, 0.3], &d.dataset, 100, 0.10, 2).unwrap();
    let fitted: Vec<f64> = nb
        .points
        .iter()
        .map(|x| e.surrogate_psi(x).unwrap())
        .collect();
    let truth: Vec<f64> = nb
        .points
        .iter()
        .map(|x| x.iter().zip(&b).map(|(a, c)| a * c).sum())
        .collect();
    let r = pearson(&fitted, &truth);
    assert!(r >= 0.95, "pearson {r}");
    assert_eq!(e.mode, Mode::Local);
    assert_eq!(e.center.as_deref(), Some(&[0.1, -0.2, 0.3][..]));
}

#[test]
fn permuting_points_leaves_explanation_unchanged() {
    let psi = PsiSpec::Linear(vec![1.0, -0.5]);
    let d = data(80, psi.clone(), 5);
    let bb = cox(&d, psi);
    let baseline = baseline_chf(&bb, &d.dataset).unwrap();
    let nb = Neighborhood::sample(&[0.0, 0.0], &d.dataset, 30, 0.1, 3).unwrap();
    let mut order: Vec<usize> = (0..30).collect();
    order.reverse();
    order.rotate_left(7);
    let shuffled = Neighborhood {
        points: order.iter().map(|&i| nb.points[i].clone()).collect(),
        weights: order.iter().map(|&i| nb.weights[i]).collect(),
        ..nb.clone()
    };
    let cfg = config(Variant::Base, 300);
    let a = explain_region(
        &bb,
        &baseline,
        &d.dataset,
        &Region::Local(nb),
        &cfg,
        0.0,
        0.0,
        7,
    )
    .unwrap();
    let b = explain_region(
        &bb,
        &baseline,
        &d.dataset,
        &Region::Local(shuffled),
        &cfg,
        0.0,
        0.0,
        7,
    )
    .unwrap();
    for (ca, cb) in a.curves.iter().zip(&b.curves) {
        for (pa, pb) in ca.points.iter().zip(&cb.points) {
            assert_eq!(pa.0, pb.0);
            assert!((pa.1 - pb.1).abs() < 1e-8);
        }
    }
}

#[test]
fn duplicated_dataset_with_doubled_lambda_matches() {
    let psi = PsiSpec::Linear(vec![1.0, 0.5]);
    let d = data(40, psi.clone(), 6);
    let bb = cox(&d, psi);
    let twice: Vec<usize> = (0..40).chain(0..40).collect();
    let doubled = d.dataset.select(&twice).unwrap();
    let cfg = config(Variant::Lasso, 400);
    let a = explain_global(&bb, &d.dataset, &cfg, 0.5, 0.0, 4).unwrap();
    let b = explain_global(&bb, &doubled, &cfg, 1.0, 0.0, 4).unwrap();
    for x in d.dataset.feature_rows() {
        assert!((a.surrogate_psi(&x).unwrap() - b.surrogate_psi(&x).unwrap()).abs() < 0.01);
    }
    for (ca, cb) in a.curves.iter().zip(&b.curves) {
        for (pa, pb) in ca.points.iter().zip(&cb.points) {
            assert!((pa.1 - pb.1).abs() < 0.01);
        }
    }
}

#[test]
fn scaling_the_baseline_shifts_only_the_bias() {
    let psi = PsiSpec::Additive(vec![
        crate::synthetic::ShapeFn::Linear(1.0),
        crate::synthetic::ShapeFn::Sine(2.0),
    ]);
    let d = data(60, psi.clone(), 7);
    let bb = cox(&d, psi);
    let baseline = baseline_chf(&bb, &d.dataset).unwrap();
    let c: f64 = 3.0;
    let scaled = PiecewiseChf::new(
        Arc::clone(baseline.grid()),
        baseline.values().iter().map(|h| h * c).collect(),
    )
    .unwrap();
    let region = Region::Global(d.dataset.feature_rows());
    let cfg = ExplainConfig {
        // keep every floored value away from the floor so the shift is exact
        epsilon: 1e-300,
        ..config(Variant::Base, 600)
    };
    let a = explain_region(&bb, &baseline, &d.dataset, &region, &cfg, 0.0, 0.0, 5).unwrap();
    let b = explain_region(&bb, &scaled, &d.dataset, &region, &cfg, 0.0, 0.0, 5).unwrap();

    let ta = build_targets(&bb, &baseline, region.points(), &region.weights(), 1e-300).unwrap();
    let tb = build_targets(&bb, &scaled, region.points(), &region.weights(), 1e-300).unwrap();
    for (ra, rb) in ta.phi.iter().zip(&tb.phi) {
        for (pa, pb) in ra.iter().zip(rb) {
            assert!((pb - (pa - c.ln())).abs() < 1e-9);
        }
    }
    assert!((b.model.bias() - a.model.bias() + c.ln()).abs() < 0.02);
    for (ca, cb) in a.curves.iter().zip(&b.curves) {
        for (pa, pb) in ca.points.iter().zip(&cb.points) {
            assert!((pa.1 - pb.1).abs() < 0.02, "{} vs {}", pa.1, pb.1);
        }
    }
}

#[test]
fn explanations_are_deterministic() {
    let psi = PsiSpec::Linear(vec![0.8, 0.0]);
    let d = data(50, psi.clone(), 8);
    let bb = cox(&d, psi);
    let cfg = config(Variant::Shortcut, 100);
    let run = || explain_local(&bb, &d.dataset, &[0.0, 0.5], &cfg, 1.0, 0.01, 3).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert_eq!(explanation_csv(&a).unwrap(), explanation_csv(&b).unwrap());
    assert_eq!(explanation_svg(&a), explanation_svg(&b));
}

#[test]
fn small_neighborhood_reaches_per_example_minimizer() {
    let psi = PsiSpec::Additive(vec![
        crate::synthetic::ShapeFn::Sine(3.0),
        crate::synthetic::ShapeFn::Quadratic(1.0),
    ]);
    let d = data(100, psi.clone(), 9);
    let bb = cox(&d, psi);
    let baseline = baseline_chf(&bb, &d.dataset).unwrap();
    let nb = Neighborhood::sample(&[0.2, -0.3], &d.dataset, 20, 0.1, 1).unwrap();
    let region = Region::Local(nb);
    let cfg = ExplainConfig {
        nam: NamConfig {
            hidden_sizes: vec![32, 16],
            learning_rate: 1e-2,
            epochs: 3000,
            ..NamConfig::default()
        },
        ..ExplainConfig::default()
    };
    let e = explain_region(&bb, &baseline, &d.dataset, &region, &cfg, 0.0, 0.0, 2).unwrap();
    let t = build_targets(
        &bb,
        &baseline,
        region.points(),
        &region.weights(),
        cfg.epsilon,
    )
    .unwrap();
    let star = oracle_psi_star(&t.phi, &t.tau).unwrap();
    let mse = region
        .points()
        .iter()
        .zip(&star)
        .map(|(x, s)| (e.surrogate_psi(x).unwrap() - s).powi(2))
        .sum::<f64>()
        / star.len() as f64;
    assert!(mse.sqrt() < 0.05, "rmse {}", mse.sqrt());
}

#[test]
fn surrogate_and_black_box_rank_alike() {
    let psi = PsiSpec::Linear(vec![1.0, 0.5, 0.0]);
    let d = data(300, psi.clone(), 10);
    let train_idx: Vec<usize> = (0..200).collect();
    let test_idx: Vec<usize> = (200..300).collect();
    let (train, test) = (
        d.dataset.select(&train_idx).unwrap(),
        d.dataset.select(&test_idx).unwrap(),
    );
    let bb = cox(&d, psi);
    let mut e = explain_global(&bb, &train, &config(Variant::Base, 800), 0.0, 0.0, 6).unwrap();
    let (cb, cs) = surrogate_c_index(&e, &bb, &test).unwrap();
    assert!((cb - cs).abs() < 0.05, "{cb} vs {cs}");
    e.diagnostics.c_blackbox = Some(cb);
    e.diagnostics.c_surrogate = Some(cs);
    let csv = explanation_csv(&e).unwrap();
    assert!(csv.contains(&format!("c_surrogate,,{cs}")));
}

#[test]
fn perfect_ranking_gives_unit_c_index() {
    let psi = PsiSpec::Linear(vec![1.0]);
    let samples: Vec<Sample> = (0..30)
        .map(|i| {
            let x = i as f64 / 10.0;
            Sample::new(vec![x], 10.0 - x, true)
        })
        .collect();
    let ds = SurvivalDataset::from_samples(samples).unwrap();
    let bb = CoxBlackBox::new(Arc::new(build_time_grid(&ds, 0.01).unwrap()), WEIBULL, psi);
    let e = explain_global(&bb, &ds, &config(Variant::Base, 50), 0.0, 0.0, 0).unwrap();
    let (cb, _) = surrogate_c_index(&e, &bb, &ds).unwrap();
    assert_eq!(cb, 1.0);
}

#[test]
fn csv_and_svg_layout() {
    let d = data(40, PsiSpec::Linear(vec![1.0, 0.0]), 11);
    let bb = constant_box(&d.dataset);
    let e = explain_global(&bb, &d.dataset, &config(Variant::Lasso, 20), 2.5, 0.0, 0).unwrap();
    let csv = explanation_csv(&e).unwrap();
    let (curves, summary) = csv.split_once("\n\n").unwrap();
    assert!(curves.starts_with("feature,x,contribution\n"));
    assert_eq!(curves.lines().count(), 1 + 2 * 50);
    assert!(summary.starts_with("key,feature,value\n"));
    for needle in [
        "variant,,lasso",
        "lambda,,2.5",
        "mu,,0",
        "final_loss,,",
        "beta,x1,",
        "beta,x2,",
    ] {
        assert!(summary.contains(needle), "missing {needle}");
    }
    let svg = explanation_svg(&e);
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains(">x1</text>"));
}
