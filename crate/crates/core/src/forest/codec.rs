//! Binary forest file format, little-endian throughout.
//!
//! ```text
//! magic        "SVRF"
//! version      u32
//! features     u32 count, then per feature: string name, u8 kind (0 numeric, 1 indicator)
//! grid         u32 count, f64 times..., f64 gamma
//! trees        u32 count, then per tree: u32 node count, nodes in preorder
//!   leaf       u8 0, f64 x grid-count CHF values
//!   split      u8 1, u32 feature, f64 threshold, u32 left, u32 right
//! attachments  u32 count, then per entry: string key, string value
//! ```
//!
//! Strings are a u32 byte length followed by UTF-8 bytes.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::tree::{Node, Tree};
use super::SurvivalForest;
use crate::error::{Error, Result};
use crate::survival::{validate_chf_values, FeatureKind, TimeGrid};

const MAGIC: &[u8; 4] = b"SVRF";
pub const FOREST_FORMAT_VERSION: u32 = 1;

pub fn encode_forest(forest: &SurvivalForest) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FOREST_FORMAT_VERSION);

    put_u32(&mut out, forest.feature_names.len() as u32);
    for (name, kind) in forest.feature_names.iter().zip(&forest.feature_kinds) {
        put_str(&mut out, name);
        out.push(match kind {
            FeatureKind::Numeric => 0,
            FeatureKind::Indicator => 1,
        });
    }

    put_u32(&mut out, forest.grid.len() as u32);
    for &t in forest.grid.times() {
        put_f64(&mut out, t);
    }
    put_f64(&mut out, forest.grid.gamma());

    put_u32(&mut out, forest.trees.len() as u32);
    for tree in &forest.trees {
        put_u32(&mut out, tree.nodes.len() as u32);
        for node in &tree.nodes {
            match node {
                Node::Leaf { chf } => {
                    out.push(0);
                    for &v in chf {
                        put_f64(&mut out, v);
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    out.push(1);
                    put_u32(&mut out, *feature as u32);
                    put_f64(&mut out, *threshold);
                    put_u32(&mut out, *left as u32);
                    put_u32(&mut out, *right as u32);
                }
            }
        }
    }

    put_u32(&mut out, forest.attachments.len() as u32);
    for (k, v) in &forest.attachments {
        put_str(&mut out, k);
        put_str(&mut out, v);
    }
    out
}

pub fn decode_forest(bytes: &[u8]) -> Result<SurvivalForest> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = r.u32()?;
    if version != FOREST_FORMAT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }

    let m = r.count(5)?;
    let mut feature_names = Vec::with_capacity(m);
    let mut feature_kinds = Vec::with_capacity(m);
    for _ in 0..m {
        feature_names.push(r.string()?);
        feature_kinds.push(match r.u8()? {
            0 => FeatureKind::Numeric,
            1 => FeatureKind::Indicator,
            k => return Err(bad(format!("unknown feature kind {k}"))),
        });
    }

    let s = r.count(8)?;
    let times = (0..s).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let gamma = r.f64()?;
    let grid = Arc::new(TimeGrid::new(times, gamma).map_err(|e| bad(e.to_string()))?);

    let n_trees = r.count(5)?;
    if n_trees == 0 {
        return Err(bad("forest has no trees"));
    }
    let mut trees = Vec::with_capacity(n_trees);
    for t in 0..n_trees {
        let n_nodes = r.count(1)?;
        if n_nodes == 0 {
            return Err(bad(format!("tree {t} has no nodes")));
        }
        let mut nodes = Vec::with_capacity(n_nodes);
        for id in 0..n_nodes {
            let node = match r.u8()? {
                0 => {
                    r.ensure(s.saturating_mul(8))?;
                    let chf = (0..s).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                    validate_chf_values(&chf, s)
                        .map_err(|e| bad(format!("tree {t} node {id}: {e}")))?;
                    Node::Leaf { chf }
                }
                1 => {
                    let feature = r.u32()? as usize;
                    let threshold = r.f64()?;
                    let left = r.u32()? as usize;
                    let right = r.u32()? as usize;
                    if feature >= m {
                        return Err(bad(format!(
                            "tree {t} node {id}: feature {feature} out of range"
                        )));
                    }
                    if threshold.is_nan() {
                        return Err(bad(format!("tree {t} node {id}: NaN threshold")));
                    }
                    // preorder: children strictly after the parent, so routing terminates
                    if left <= id || right <= id || left >= n_nodes || right >= n_nodes {
                        return Err(bad(format!("tree {t} node {id}: invalid child index")));
                    }
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    }
                }
                tag => return Err(bad(format!("tree {t} node {id}: unknown tag {tag}"))),
            };
            nodes.push(node);
        }
        trees.push(Tree::from_nodes(nodes));
    }

    let n_attach = r.count(8)?;
    let mut attachments = BTreeMap::new();
    for _ in 0..n_attach {
        let key = r.string()?;
        let value = r.string()?;
        attachments.insert(key, value);
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }

    Ok(SurvivalForest {
        trees,
        grid,
        feature_names,
        feature_kinds,
        attachments,
    })
}

fn bad(message: impl Into<String>) -> Error {
    Error::format("forest file", message)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn ensure(&self, n: usize) -> Result<()> {
        if self.bytes.len() - self.pos < n {
            return Err(bad(format!("unexpected end of data at byte {}", self.pos)));
        }
        Ok(())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        self.ensure(n)?;
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A u32 element count, rejected if the remaining input cannot hold
    /// that many elements of at least `min_size` bytes each.
    fn count(&mut self, min_size: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        self.ensure(n.saturating_mul(min_size))?;
        Ok(n)
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| bad("string is not UTF-8"))
    }
}
