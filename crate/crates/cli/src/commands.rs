use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use survshape::data::{
    export_schema, split_indices, write_csv, DatasetSchema, Encoder, RawDataset,
};
use survshape::explain::{
    c_index_pair, explain_global, explain_local, explanation_csv, explanation_svg, ExplainConfig,
    Explanation, Mode,
};
use survshape::forest::{
    decode_forest, encode_forest, fit_forest, permutation_importance, ForestConfig, SurvivalForest,
};
use survshape::nam::{
    decode_checkpoint, encode_checkpoint, Activation, NamCheckpoint, NamConfig, Variant,
};
use survshape::survival::{concordance_index, ChfPredictor, SurvivalDataset};
use survshape::synthetic::{
    generate_cox_data, FeatureDistribution, PsiSpec, SyntheticSpec, Weibull,
};
use survshape::Error;

use crate::config::{
    pick, ExplainSection, FileConfig, ForestSection, NamSection, SplitSection, SynthSection,
};
use crate::{CliError, EvalArgs, ExplainArgs, FitArgs, SynthArgs};

type CliResult<T> = std::result::Result<T, CliError>;

const ATTACH_ENCODER: &str = "encoder";
const ATTACH_SCHEMA: &str = "schema";
const ATTACH_TEST_FRACTION: &str = "test_fraction";
const ATTACH_SPLIT_SEED: &str = "split_seed";

const DEFAULT_TEST_FRACTION: f64 = 0.25;
const DEFAULT_IMPORTANCE_REPEATS: usize = 5;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse<T: std::str::FromStr<Err = Error>>(value: &str) -> CliResult<T> {
    value.parse().map_err(|e: Error| usage(e.to_string()))
}

fn banner(command: &str, resolved: &FileConfig) -> String {
    let mut text = format!("# survshape {command}\n");
    let toml = resolved.to_toml();
    if !toml.is_empty() {
        text.push_str(&toml);
        if !toml.ends_with('\n') {
            text.push('\n');
        }
    }
    text
}

fn read_schema(path: &Path) -> CliResult<DatasetSchema> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read schema '{}': {e}", path.display())))?;
    Ok(text.parse()?)
}

/// Refuses to write an output over one of the inputs.
fn check_outputs(out: &Path, names: &[&str], inputs: &[&Path]) -> CliResult<()> {
    let inputs: Vec<PathBuf> = inputs
        .iter()
        .filter_map(|p| p.canonicalize().ok())
        .collect();
    for name in names {
        if let Ok(target) = out.join(name).canonicalize() {
            if inputs.contains(&target) {
                return Err(usage(format!(
                    "output '{}' would overwrite an input file",
                    target.display()
                )));
            }
        }
    }
    Ok(())
}

fn create_out(out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out).map_err(|e| {
        Error::Data(format!(
            "cannot create output directory '{}': {e}",
            out.display()
        ))
    })?;
    Ok(())
}

fn write(out: &Path, name: &str, contents: impl AsRef<[u8]>) -> CliResult<()> {
    let path = out.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| Error::Data(format!("cannot write '{}': {e}", path.display())))?;
    Ok(())
}

fn finish_report(out: &Path, head: &str, body: &str) -> CliResult<()> {
    print!("{head}");
    print!("{body}");
    write(out, "report.txt", format!("{head}{body}"))
}

/// Encoded train and test parts of a data file, reproducing a stored split.
struct Prepared {
    full: SurvivalDataset,
    train: SurvivalDataset,
    test: SurvivalDataset,
    train_rows: Vec<usize>,
    test_rows: Vec<usize>,
    dropped: usize,
}

fn split_raw(raw: &RawDataset, encoder: &Encoder, fraction: f64, seed: u64) -> CliResult<Prepared> {
    let (train_rows, test_rows) = split_indices(&raw.events, fraction, seed)?;
    let full = encoder.transform(raw)?;
    Ok(Prepared {
        train: full.select(&train_rows)?,
        test: full.select(&test_rows)?,
        full,
        train_rows,
        test_rows,
        dropped: raw.dropped,
    })
}

fn fmt_f(v: f64) -> String {
    format!("{v:.6}")
}

pub fn fit(args: FitArgs, file: &FileConfig) -> CliResult<()> {
    let fs = file.forest.clone().unwrap_or_default();
    let ss = file.split.clone().unwrap_or_default();
    let defaults = ForestConfig::default();
    let config = ForestConfig {
        n_trees: pick(args.forest.trees, fs.trees.as_ref(), defaults.n_trees),
        min_leaf_events: pick(
            args.forest.min_leaf_events,
            fs.min_leaf_events.as_ref(),
            defaults.min_leaf_events,
        ),
        max_depth: args.forest.max_depth.or(fs.max_depth),
        features_per_split: args.forest.features_per_split.or(fs.features_per_split),
        seed: pick(args.forest.seed, fs.seed.as_ref(), defaults.seed),
        gamma_fraction: pick(
            args.forest.gamma_fraction,
            fs.gamma_fraction.as_ref(),
            defaults.gamma_fraction,
        ),
        bootstrap: pick(
            args.forest.bootstrap,
            fs.bootstrap.as_ref(),
            defaults.bootstrap,
        ),
    };
    let repeats = pick(
        args.forest.importance_repeats,
        fs.importance_repeats.as_ref(),
        DEFAULT_IMPORTANCE_REPEATS,
    );
    let fraction = pick(
        args.split.test_fraction,
        ss.test_fraction.as_ref(),
        DEFAULT_TEST_FRACTION,
    );
    let split_seed = pick(args.split.split_seed, ss.seed.as_ref(), 0);
    config.validate().map_err(|e| usage(e.to_string()))?;

    let resolved = FileConfig {
        forest: Some(ForestSection {
            trees: Some(config.n_trees),
            min_leaf_events: Some(config.min_leaf_events),
            max_depth: config.max_depth,
            features_per_split: config.features_per_split,
            gamma_fraction: Some(config.gamma_fraction),
            bootstrap: Some(config.bootstrap),
            seed: Some(config.seed),
            importance_repeats: Some(repeats),
        }),
        split: Some(SplitSection {
            test_fraction: Some(fraction),
            seed: Some(split_seed),
        }),
        ..Default::default()
    };
    let head = banner("fit", &resolved);

    let schema = read_schema(&args.schema)?;
    check_outputs(
        &args.out,
        &["forest.bin", "report.txt"],
        &[&args.data, &args.schema],
    )?;
    let raw = RawDataset::from_path(&args.data, &schema)?;
    let (train_rows, _) = split_indices(&raw.events, fraction, split_seed)?;
    let encoder = Encoder::fit(&raw.select(&train_rows))?;
    let data = split_raw(&raw, &encoder, fraction, split_seed)?;

    log::info!(
        "fitting {} trees on {} rows",
        config.n_trees,
        data.train.n()
    );
    let mut forest = fit_forest(&data.train, &config)?;
    forest.attachments.insert(
        ATTACH_ENCODER.into(),
        serde_json::to_string(&encoder).map_err(Error::from)?,
    );
    forest
        .attachments
        .insert(ATTACH_SCHEMA.into(), schema.to_string());
    forest
        .attachments
        .insert(ATTACH_TEST_FRACTION.into(), fraction.to_string());
    forest
        .attachments
        .insert(ATTACH_SPLIT_SEED.into(), split_seed.to_string());

    let c_train = concordance_index(
        &forest.risk_scores(&data.train.feature_rows())?,
        &data.train,
    )?;
    let c_test = concordance_index(&forest.risk_scores(&data.test.feature_rows())?, &data.test)?;

    let mut body = String::new();
    let _ = writeln!(body, "rows {} (dropped {})", data.full.n(), data.dropped);
    let _ = writeln!(
        body,
        "train {} test {}",
        data.train_rows.len(),
        data.test_rows.len()
    );
    let _ = writeln!(body, "features {}", forest.feature_names().join(","));
    let _ = writeln!(body, "time grid {} points", forest.grid().len());
    let _ = writeln!(body, "c_index_train {}", fmt_f(c_train));
    let _ = writeln!(body, "c_index_test {}", fmt_f(c_test));
    if repeats > 0 {
        let importance = permutation_importance(&forest, &data.test, repeats, config.seed)?;
        let mut order: Vec<usize> = (0..importance.len()).collect();
        order.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]));
        let _ = writeln!(
            body,
            "permutation importance (test C-index drop, {repeats} shuffles)"
        );
        for k in order {
            let _ = writeln!(
                body,
                "  {} {}",
                forest.feature_names()[k],
                fmt_f(importance[k])
            );
        }
    }

    create_out(&args.out)?;
    write(&args.out, "forest.bin", encode_forest(&forest))?;
    finish_report(&args.out, &head, &body)
}

/// Forest plus the data it was fit on, re-encoded and re-split.
struct Loaded {
    forest: SurvivalForest,
    encoder: Encoder,
    raw: RawDataset,
    data: Prepared,
}

fn load_with_forest(
    forest_path: &Path,
    data_path: &Path,
    schema_path: Option<&Path>,
) -> CliResult<Loaded> {
    let bytes = std::fs::read(forest_path).map_err(|e| {
        Error::Data(format!(
            "cannot read forest '{}': {e}",
            forest_path.display()
        ))
    })?;
    let forest = decode_forest(&bytes)?;
    let attachment = |key: &str| -> CliResult<&String> {
        forest.attachments.get(key).ok_or_else(|| {
            CliError::Core(Error::Data(format!(
                "forest '{}' carries no '{key}' entry; refit it with `survshape fit`",
                forest_path.display()
            )))
        })
    };
    let encoder: Encoder =
        serde_json::from_str(attachment(ATTACH_ENCODER)?).map_err(Error::from)?;
    let schema: DatasetSchema = match schema_path {
        Some(p) => read_schema(p)?,
        None => attachment(ATTACH_SCHEMA)?.parse()?,
    };
    let fraction: f64 = attachment(ATTACH_TEST_FRACTION)?
        .parse()
        .map_err(|_| Error::Data("forest has a malformed test fraction".into()))?;
    let seed: u64 = attachment(ATTACH_SPLIT_SEED)?
        .parse()
        .map_err(|_| Error::Data("forest has a malformed split seed".into()))?;
    if encoder.feature_names() != forest.feature_names() {
        return Err(Error::Data("forest encoder does not match its feature names".into()).into());
    }
    let raw = RawDataset::from_path(data_path, &schema)?;
    if raw.schema.features.len() != encoder.columns.len() {
        return Err(Error::Data(format!(
            "schema lists {} feature columns but the forest was fit on {}",
            raw.schema.features.len(),
            encoder.columns.len()
        ))
        .into());
    }
    let data = split_raw(&raw, &encoder, fraction, seed)?;
    Ok(Loaded {
        forest,
        encoder,
        raw,
        data,
    })
}

pub fn explain(args: ExplainArgs, file: &FileConfig) -> CliResult<()> {
    let es = file.explain.clone().unwrap_or_default();
    let ns = file.nam.clone().unwrap_or_default();
    let mode: Mode = parse(&pick(args.mode, es.mode.as_ref(), "global".to_string()))?;
    let variant: Variant = parse(&pick(args.variant, es.variant.as_ref(), "base".to_string()))?;
    let (default_lambda, default_mu) = match variant {
        Variant::Base => (0.0, 0.0),
        Variant::Lasso => (10.0, 0.0),
        Variant::Shortcut => (10.0, 1.0),
    };
    let lambda = pick(args.lambda, es.lambda.as_ref(), default_lambda);
    let mu = pick(args.mu, es.mu.as_ref(), default_mu);
    let seed = pick(args.seed, es.seed.as_ref(), 0);
    let svg = pick(args.svg, es.svg.as_ref(), true);
    let row = args.row.or(es.row);
    let center = args.center.or(es.center);

    let nam_default = NamConfig::default();
    let activation_name = pick(
        args.nam.activation,
        ns.activation.as_ref(),
        "relu".to_string(),
    );
    let nam = NamConfig {
        hidden_sizes: pick(
            args.nam.hidden,
            ns.hidden.as_ref(),
            nam_default.hidden_sizes,
        ),
        activation: parse::<Activation>(&activation_name)?,
        learning_rate: pick(
            args.nam.learning_rate,
            ns.learning_rate.as_ref(),
            nam_default.learning_rate,
        ),
        epochs: pick(args.nam.epochs, ns.epochs.as_ref(), nam_default.epochs),
        batch: args.nam.batch.or(ns.batch),
        seed,
        variant,
    };
    let defaults = ExplainConfig::default();
    let config = ExplainConfig {
        n_points: pick(args.points, es.points.as_ref(), defaults.n_points),
        spread: pick(args.spread, es.spread.as_ref(), defaults.spread),
        epsilon: pick(args.epsilon, es.epsilon.as_ref(), defaults.epsilon),
        curve_points: pick(
            args.curve_points,
            es.curve_points.as_ref(),
            defaults.curve_points,
        ),
        nam,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    if !(lambda >= 0.0 && mu >= 0.0 && lambda.is_finite() && mu.is_finite()) {
        return Err(usage("lambda and mu must be finite and non-negative"));
    }
    match mode {
        Mode::Local if row.is_none() && center.is_none() => {
            return Err(usage("local mode needs --row or --center"));
        }
        Mode::Local if row.is_some() && center.is_some() => {
            return Err(usage("give only one of --row and --center"));
        }
        _ => {}
    }

    let resolved = FileConfig {
        explain: Some(ExplainSection {
            mode: Some(mode.to_string()),
            variant: Some(variant.to_string()),
            lambda: Some(lambda),
            mu: Some(mu),
            epsilon: Some(config.epsilon),
            points: (mode == Mode::Local).then_some(config.n_points),
            spread: (mode == Mode::Local).then_some(config.spread),
            curve_points: Some(config.curve_points),
            row: row.filter(|_| mode == Mode::Local),
            center: center.clone().filter(|_| mode == Mode::Local),
            seed: Some(seed),
            svg: Some(svg),
        }),
        nam: Some(NamSection {
            hidden: Some(config.nam.hidden_sizes.clone()),
            activation: Some(activation_name),
            learning_rate: Some(config.nam.learning_rate),
            epochs: Some(config.nam.epochs),
            batch: config.nam.batch,
        }),
        ..Default::default()
    };
    let head = banner("explain", &resolved);

    let mut inputs: Vec<&Path> = vec![&args.forest, &args.data];
    if let Some(s) = &args.schema {
        inputs.push(s);
    }
    check_outputs(
        &args.out,
        &["explanation.csv", "shapes.svg", "model.json", "report.txt"],
        &inputs,
    )?;
    let loaded = load_with_forest(&args.forest, &args.data, args.schema.as_deref())?;
    let forest = &loaded.forest;
    let train = &loaded.data.train;

    log::info!(
        "training {variant} surrogate ({mode}) for {} epochs",
        config.nam.epochs
    );
    let mut explanation: Explanation = match mode {
        Mode::Global => explain_global(forest, train, &config, lambda, mu, seed)?,
        Mode::Local => {
            let x = match (row, &center) {
                (Some(r), _) => {
                    if r >= loaded.raw.len() {
                        return Err(usage(format!(
                            "row {r} is out of range ({} rows)",
                            loaded.raw.len()
                        )));
                    }
                    loaded.data.full.samples()[r].features.clone()
                }
                (None, Some(cells)) => {
                    let cells: Vec<&str> = cells.iter().map(|c| c.trim()).collect();
                    loaded.encoder.encode_row(&cells)?
                }
                (None, None) => unreachable!("checked above"),
            };
            explain_local(forest, train, &x, &config, lambda, mu, seed)?
        }
    };
    let (c_black, c_surrogate) = c_index_pair(&explanation.model, forest, &loaded.data.test)?;
    explanation.diagnostics.c_blackbox = Some(c_black);
    explanation.diagnostics.c_surrogate = Some(c_surrogate);

    let checkpoint = NamCheckpoint {
        config: config.nam.clone(),
        model: explanation.model.clone(),
        feature_names: explanation.feature_names.clone(),
        feature_kinds: explanation.feature_kinds.clone(),
        lambda,
        mu,
    };

    let d = &explanation.diagnostics;
    let mut body = String::new();
    let _ = writeln!(body, "explained rows {} (train part)", train.n());
    if mode == Mode::Local {
        let _ = writeln!(body, "generated points {}", config.n_points);
    }
    let _ = writeln!(
        body,
        "loss initial {} final {} min {}",
        fmt_f(d.initial_loss),
        fmt_f(d.final_loss),
        fmt_f(d.min_loss)
    );
    let _ = writeln!(body, "epochs {}", d.epochs);
    let _ = writeln!(body, "c_index_blackbox_test {}", fmt_f(c_black));
    let _ = writeln!(body, "c_index_surrogate_test {}", fmt_f(c_surrogate));
    let _ = writeln!(body, "bias {}", fmt_f(explanation.model.bias()));
    let _ = writeln!(body, "features by shape range");
    for k in explanation.ranking() {
        let c = &explanation.coefficients[k];
        let mut line = format!(
            "  {} range {}",
            explanation.feature_names[k],
            fmt_f(explanation.curves[k].range())
        );
        if let Some(b) = c.beta {
            let _ = write!(line, " beta {}", fmt_f(b));
        }
        if let (Some(a), Some(o)) = (c.alpha, c.omega) {
            let _ = write!(line, " alpha {} omega {}", fmt_f(a), fmt_f(o));
        }
        let _ = writeln!(body, "{line}");
    }

    create_out(&args.out)?;
    write(&args.out, "explanation.csv", explanation_csv(&explanation)?)?;
    if svg {
        write(&args.out, "shapes.svg", explanation_svg(&explanation))?;
    }
    write(&args.out, "model.json", encode_checkpoint(&checkpoint)?)?;
    finish_report(&args.out, &head, &body)
}

pub fn synth(args: SynthArgs, file: &FileConfig) -> CliResult<()> {
    let s = file.synth.clone().unwrap_or_default();
    let n = pick(args.n, s.n.as_ref(), 500);
    let psi_text = pick(args.psi, s.psi.as_ref(), "linear:1,0.5,0".to_string());
    let scale = pick(args.scale, s.scale.as_ref(), 1.0);
    let shape = pick(args.shape, s.shape.as_ref(), 1.5);
    let censoring = pick(args.censoring, s.censoring.as_ref(), 0.2);
    let features_text = pick(args.features, s.features.as_ref(), "uniform".to_string());
    let seed = pick(args.seed, s.seed.as_ref(), 0);
    let spec = SyntheticSpec {
        n,
        psi: parse::<PsiSpec>(&psi_text)?,
        baseline: Weibull { scale, shape },
        censoring_rate: censoring,
        features: parse::<FeatureDistribution>(&features_text)?,
        seed,
    };
    let resolved = FileConfig {
        synth: Some(SynthSection {
            n: Some(n),
            psi: Some(spec.psi.to_string()),
            scale: Some(scale),
            shape: Some(shape),
            censoring: Some(censoring),
            features: Some(features_text),
            seed: Some(seed),
        }),
        ..Default::default()
    };
    let head = banner("synth", &resolved);

    let generated = generate_cox_data(&spec).map_err(|e| match e {
        Error::InvalidInput(m) => usage(m),
        other => CliError::Core(other),
    })?;
    let ds = &generated.dataset;
    let mut csv = Vec::new();
    write_csv(ds, &mut csv)?;
    let mut psi = String::from("row,psi,event_time\n");
    for (i, (p, t)) in generated.psi.iter().zip(&generated.event_times).enumerate() {
        let _ = writeln!(psi, "{i},{p},{t}");
    }
    let censored = ds.samples().iter().filter(|s| !s.event).count();
    let mut body = String::new();
    let _ = writeln!(body, "rows {n} features {}", ds.m());
    let _ = writeln!(
        body,
        "censored {censored} ({})",
        fmt_f(censored as f64 / n as f64)
    );
    let _ = writeln!(body, "censoring bound {}", fmt_f(generated.censoring_bound));

    create_out(&args.out)?;
    write(&args.out, "dataset.csv", csv)?;
    write(&args.out, "schema.cfg", export_schema(ds)?.to_string())?;
    write(&args.out, "psi.csv", psi)?;
    finish_report(&args.out, &head, &body)
}

pub fn eval(args: EvalArgs, _file: &FileConfig) -> CliResult<()> {
    let head = banner("eval", &FileConfig::default());
    let mut inputs: Vec<&Path> = vec![&args.forest, &args.model, &args.data];
    if let Some(s) = &args.schema {
        inputs.push(s);
    }
    check_outputs(&args.out, &["report.txt"], &inputs)?;
    let loaded = load_with_forest(&args.forest, &args.data, args.schema.as_deref())?;
    let text = std::fs::read_to_string(&args.model)
        .map_err(|e| Error::Data(format!("cannot read model '{}': {e}", args.model.display())))?;
    let checkpoint = decode_checkpoint(&text)?;
    if checkpoint.feature_names != loaded.forest.feature_names() {
        return Err(
            Error::Data("model and forest were trained on different features".into()).into(),
        );
    }
    let (part, data) = if args.test_only {
        ("test", &loaded.data.test)
    } else {
        ("all", &loaded.data.full)
    };
    let (c_black, c_surrogate) = c_index_pair(&checkpoint.model, &loaded.forest, data)?;
    let mut body = String::new();
    let _ = writeln!(body, "rows {} ({part})", data.n());
    let _ = writeln!(
        body,
        "variant {} lambda {} mu {}",
        checkpoint.config.variant, checkpoint.lambda, checkpoint.mu
    );
    let _ = writeln!(body, "c_index_blackbox {}", fmt_f(c_black));
    let _ = writeln!(body, "c_index_surrogate {}", fmt_f(c_surrogate));
    create_out(&args.out)?;
    finish_report(&args.out, &head, &body)
}
