//! End to end through the public API: CSV in, forest and explanation out,
//! with every serialized artifact read back.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use survshape::data::{split_indices, DatasetSchema, Encoder, RawDataset};
use survshape::explain::{
    explain_global, explain_local, explanation_csv, surrogate_c_index, ExplainConfig, Mode,
};
use survshape::forest::{decode_forest, encode_forest, fit_forest, ForestConfig};
use survshape::nam::{decode_checkpoint, encode_checkpoint, NamCheckpoint, NamConfig, Variant};
use survshape::survival::{concordance_index, ChfPredictor, FeatureKind};

const SCHEMA: &str = "\
# clinical-style table
time = days
event = status
event_values = died
censored_values = alive
numeric = age, marker
categorical = stage
binary = treated
";

/// Hazard rises with `marker` and stage III, falls with treatment; age is noise.
fn table(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::from("id,age,marker,stage,treated,days,status\n");
    for i in 0..n {
        let age: f64 = rng.random_range(30.0..80.0);
        let marker: f64 = rng.random_range(-2.0..2.0);
        let stage = ["I", "II", "III"][rng.random_range(0..3)];
        let treated = if rng.random_bool(0.5) { "yes" } else { "no" };
        let psi = 0.9 * marker + if stage == "III" { 1.0 } else { 0.0 }
            - if treated == "yes" { 0.5 } else { 0.0 };
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        let t = (-u.ln() / psi.exp()).sqrt() * 100.0;
        let c: f64 = rng.random_range(0.0..400.0);
        let status = if t <= c { "died" } else { "alive" };
        let _ = writeln!(
            csv,
            "p{i},{age:.1},{marker:.3},{stage},{treated},{:.2},{status}",
            t.min(c)
        );
    }
    csv
}

fn small_nam(variant: Variant) -> ExplainConfig {
    ExplainConfig {
        n_points: 60,
        nam: NamConfig {
            hidden_sizes: vec![16, 8],
            learning_rate: 5e-3,
            epochs: 300,
            variant,
            ..NamConfig::default()
        },
        ..ExplainConfig::default()
    }
}

#[test]
fn csv_to_forest_to_explanation() {
    let schema: DatasetSchema = SCHEMA.parse().unwrap();
    let raw = RawDataset::from_reader(table(300, 1).as_bytes(), &schema).unwrap();
    let (train_rows, test_rows) = split_indices(&raw.events, 0.25, 0).unwrap();
    let encoder = Encoder::fit(&raw.select(&train_rows)).unwrap();
    let train = encoder.transform(&raw.select(&train_rows)).unwrap();
    let test = encoder.transform(&raw.select(&test_rows)).unwrap();
    assert_eq!(
        train.feature_names(),
        [
            "age",
            "marker",
            "stage=I",
            "stage=II",
            "stage=III",
            "treated"
        ]
    );
    assert_eq!(train.feature_kinds()[1], FeatureKind::Numeric);
    assert_eq!(train.feature_kinds()[5], FeatureKind::Indicator);

    let forest = fit_forest(
        &train,
        &ForestConfig {
            n_trees: 60,
            ..ForestConfig::default()
        },
    )
    .unwrap();
    let c = concordance_index(&forest.risk_scores(&test.feature_rows()).unwrap(), &test).unwrap();
    assert!(c > 0.65, "forest test C-index {c}");

    let bytes = encode_forest(&forest);
    let back = decode_forest(&bytes).unwrap();
    assert_eq!(back, forest);
    let x = &test.samples()[0].features;
    assert_eq!(back.predict_chf(x).unwrap(), forest.predict_chf(x).unwrap());

    let global =
        explain_global(&forest, &train, &small_nam(Variant::Shortcut), 1.0, 0.1, 3).unwrap();
    assert_eq!(global.mode, Mode::Global);
    let (cb, cs) = surrogate_c_index(&global, &forest, &test).unwrap();
    assert!(
        cs > 0.6 && (cb - cs).abs() < 0.1,
        "black box {cb}, surrogate {cs}"
    );
    let names = &global.feature_names;
    let top = &names[global.ranking()[0]];
    assert!(top == "marker" || top == "stage=III", "top feature {top}");
    let marker = &global.curves[1];
    assert!(
        marker.points.last().unwrap().1 > marker.points[0].1,
        "marker curve should rise"
    );
    let treated = &global.curves[5];
    assert_eq!(treated.points.len(), 2);

    let local = explain_local(&forest, &train, x, &small_nam(Variant::Lasso), 0.5, 0.0, 3).unwrap();
    assert_eq!(local.center.as_deref(), Some(x.as_slice()));
    let indicators_fixed = local.reference[5].iter().all(|&v| v == x[5]);
    assert!(
        indicators_fixed,
        "indicator coordinates must not be perturbed"
    );
    assert!(explanation_csv(&local).unwrap().contains("variant,,lasso"));

    let checkpoint = NamCheckpoint {
        config: small_nam(Variant::Lasso).nam,
        model: local.model.clone(),
        feature_names: local.feature_names.clone(),
        feature_kinds: local.feature_kinds.clone(),
        lambda: 0.5,
        mu: 0.0,
    };
    let restored = decode_checkpoint(&encode_checkpoint(&checkpoint).unwrap()).unwrap();
    assert_eq!(restored, checkpoint);
    for s in test.samples().iter().take(10) {
        assert_eq!(
            restored.model.psi(&s.features).unwrap(),
            local.surrogate_psi(&s.features).unwrap()
        );
    }
}

#[test]
fn encoder_state_survives_json() {
    let schema: DatasetSchema = SCHEMA.parse().unwrap();
    let raw = RawDataset::from_reader(table(40, 2).as_bytes(), &schema).unwrap();
    let encoder = Encoder::fit(&raw).unwrap();
    let back: Encoder = serde_json::from_str(&serde_json::to_string(&encoder).unwrap()).unwrap();
    assert_eq!(back, encoder);
    assert_eq!(
        back.transform(&raw).unwrap(),
        encoder.transform(&raw).unwrap()
    );
    let reparsed: DatasetSchema = schema.to_string().parse().unwrap();
    assert_eq!(reparsed, schema);
}
