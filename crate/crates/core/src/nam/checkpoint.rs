//! JSON checkpoint holding a trained model, its training config and the
//! feature schema it was trained on.

use serde::{Deserialize, Serialize};

use super::{NamConfig, NamModel};
use crate::error::{Error, Result};
use crate::survival::FeatureKind;

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "nam-checkpoint";

/// Upper bound on parameters accepted from a file.
const MAX_PARAMS: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq)]
pub struct NamCheckpoint {
    pub config: NamConfig,
    pub model: NamModel,
    pub feature_names: Vec<String>,
    pub feature_kinds: Vec<FeatureKind>,
    pub lambda: f64,
    pub mu: f64,
}

#[derive(Serialize, Deserialize)]
struct Wire {
    format: String,
    version: u32,
    config: NamConfig,
    lambda: f64,
    mu: f64,
    feature_names: Vec<String>,
    feature_kinds: Vec<FeatureKind>,
    model: NamModel,
}

pub fn encode_checkpoint(checkpoint: &NamCheckpoint) -> Result<String> {
    let wire = Wire {
        format: FORMAT_TAG.into(),
        version: CHECKPOINT_VERSION,
        config: checkpoint.config.clone(),
        lambda: checkpoint.lambda,
        mu: checkpoint.mu,
        feature_names: checkpoint.feature_names.clone(),
        feature_kinds: checkpoint.feature_kinds.clone(),
        model: checkpoint.model.clone(),
    };
    Ok(serde_json::to_string_pretty(&wire)?)
}

pub fn decode_checkpoint(text: &str) -> Result<NamCheckpoint> {
    let wire: Wire = serde_json::from_str(text)?;
    let bad = |msg: String| Error::format("checkpoint", msg);
    if wire.format != FORMAT_TAG {
        return Err(bad(format!("unexpected format tag '{}'", wire.format)));
    }
    if wire.version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {}", wire.version)));
    }
    wire.config.validate().map_err(|e| bad(e.to_string()))?;
    let arch = wire.model.architecture().clone();
    if arch.m == 0 || arch.hidden_sizes.is_empty() || arch.hidden_sizes.contains(&0) {
        return Err(bad("invalid architecture".into()));
    }
    match arch.param_len() {
        Some(len) if len <= MAX_PARAMS => {}
        _ => return Err(bad("architecture too large".into())),
    }
    if wire.feature_names.len() != arch.m || wire.feature_kinds.len() != arch.m {
        return Err(bad(format!(
            "schema has {} names / {} kinds for {} features",
            wire.feature_names.len(),
            wire.feature_kinds.len(),
            arch.m
        )));
    }
    if !(wire.lambda.is_finite() && wire.lambda >= 0.0 && wire.mu.is_finite() && wire.mu >= 0.0) {
        return Err(bad("penalties must be finite and nonnegative".into()));
    }
    let params = wire.model.params().to_vec();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(bad("non-finite parameter".into()));
    }
    let model = NamModel::from_parts(arch, params).map_err(|e| bad(e.to_string()))?;
    Ok(NamCheckpoint {
        config: wire.config,
        model,
        feature_names: wire.feature_names,
        feature_kinds: wire.feature_kinds,
        lambda: wire.lambda,
        mu: wire.mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nam::{init_model, Variant};

    fn checkpoint() -> NamCheckpoint {
        let config = NamConfig {
            hidden_sizes: vec![4, 3],
            variant: Variant::Shortcut,
            seed: 8,
            ..NamConfig::default()
        };
        NamCheckpoint {
            model: init_model(2, &config).unwrap(),
            config,
            feature_names: vec!["age".into(), "grade=2".into()],
            feature_kinds: vec![FeatureKind::Numeric, FeatureKind::Indicator],
            lambda: 10.0,
            mu: 1.0,
        }
    }

    #[test]
    fn roundtrip() {
        let c = checkpoint();
        let text = encode_checkpoint(&c).unwrap();
        let back = decode_checkpoint(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(encode_checkpoint(&back).unwrap(), text);
    }

    #[test]
    fn rejects_wrong_param_count() {
        let text = encode_checkpoint(&checkpoint()).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["model"]["params"].as_array_mut().unwrap().pop();
        assert!(decode_checkpoint(&v.to_string()).is_err());
    }

    #[test]
    fn rejects_oversized_architecture() {
        let text = encode_checkpoint(&checkpoint()).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["model"]["arch"]["hidden_sizes"] = serde_json::json!([usize::MAX, 2]);
        assert!(decode_checkpoint(&v.to_string()).is_err());
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode_checkpoint("").is_err());
        assert!(decode_checkpoint("{\"format\": 3}").is_err());
    }
}
