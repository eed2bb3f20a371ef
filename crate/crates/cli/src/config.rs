//! Optional TOML parameter file. Every field is optional; a command resolves
//! each parameter as flag, then file, then built-in default, and echoes the
//! fully resolved result in the same format.

use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forest: Option<ForestSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explain: Option<ExplainSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nam: Option<NamSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestSection {
    pub trees: Option<usize>,
    pub min_leaf_events: Option<usize>,
    pub max_depth: Option<usize>,
    pub features_per_split: Option<usize>,
    pub gamma_fraction: Option<f64>,
    pub bootstrap: Option<bool>,
    pub seed: Option<u64>,
    pub importance_repeats: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub test_fraction: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainSection {
    pub mode: Option<String>,
    pub variant: Option<String>,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub epsilon: Option<f64>,
    pub points: Option<usize>,
    pub spread: Option<f64>,
    pub curve_points: Option<usize>,
    pub row: Option<usize>,
    pub center: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub svg: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamSection {
    pub hidden: Option<Vec<usize>>,
    pub activation: Option<String>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub n: Option<usize>,
    pub psi: Option<String>,
    pub scale: Option<f64>,
    pub shape: Option<f64>,
    pub censoring: Option<f64>,
    pub features: Option<String>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config '{}': {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| {
            let msg = e.to_string().replace('\n', " ");
            format!("invalid config '{}': {}", path.display(), msg.trim())
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

/// `flag`, else the file value, else `default`.
pub fn pick<T: Clone>(flag: Option<T>, file: Option<&T>, default: T) -> T {
    flag.or_else(|| file.cloned()).unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        assert_eq!(pick(Some(1), Some(&2), 3), 1);
        assert_eq!(pick(None, Some(&2), 3), 2);
        assert_eq!(pick(None::<i32>, None, 3), 3);
    }

    #[test]
    fn parses_sections_and_rejects_unknown_keys() {
        let cfg: FileConfig =
            toml::from_str("[forest]\ntrees = 50\n[nam]\nhidden = [8, 4]\n").unwrap();
        assert_eq!(cfg.forest.unwrap().trees, Some(50));
        assert_eq!(cfg.nam.unwrap().hidden, Some(vec![8, 4]));
        assert!(toml::from_str::<FileConfig>("[forest]\ntres = 50\n").is_err());
        assert!(toml::from_str::<FileConfig>("[other]\n").is_err());
    }

    #[test]
    fn banner_roundtrips() {
        let cfg = FileConfig {
            forest: Some(ForestSection {
                trees: Some(10),
                gamma_fraction: Some(0.01),
                ..Default::default()
            }),
            explain: Some(ExplainSection {
                center: Some(vec!["1.5".into(), "A".into()]),
                ..Default::default()
            }),
            ..Default::default()
        };
        let back: FileConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }
}
