use rand::seq::index;
use rand::Rng;

use super::logrank::RiskTable;
use super::ForestConfig;
use crate::survival::{nelson_aalen_values, TimeGrid};

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        chf: Vec<f64>,
    },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Binary survival tree stored in preorder; children always follow their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub(crate) nodes: Vec<Node>,
}

impl Tree {
    pub(crate) fn from_nodes(nodes: Vec<Node>) -> Self {
        Self { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes.first()? {
            Node::Split {
                feature, threshold, ..
            } => Some((*feature, *threshold)),
            Node::Leaf { .. } => None,
        }
    }

    pub fn is_leaf_only(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn leaf_chf(&self, x: &[f64]) -> &[f64] {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { chf } => chf,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Features used by at least one split.
    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }
}

pub(crate) struct TreeBuilder<'a> {
    pub rows: &'a [Vec<f64>],
    pub times: &'a [f64],
    pub events: &'a [bool],
    pub grid: &'a TimeGrid,
    pub config: &'a ForestConfig,
    pub features_per_split: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    statistic: f64,
}

impl TreeBuilder<'_> {
    pub fn build<R: Rng>(&self, indices: Vec<usize>, rng: &mut R) -> Tree {
        let mut nodes = Vec::new();
        self.grow(indices, 0, rng, &mut nodes);
        Tree { nodes }
    }

    fn grow<R: Rng>(
        &self,
        indices: Vec<usize>,
        depth: usize,
        rng: &mut R,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let id = nodes.len();
        let n_events = indices.iter().filter(|&&i| self.events[i]).count();
        let depth_ok = self.config.max_depth.is_none_or(|d| depth < d);
        let split = if depth_ok && n_events >= 2 * self.config.min_leaf_events {
            self.best_split(&indices, rng)
        } else {
            None
        };
        let Some(split) = split else {
            nodes.push(self.leaf(&indices));
            return id;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.rows[i][split.feature] <= split.threshold);
        nodes.push(Node::Leaf { chf: Vec::new() });
        let left = self.grow(left_idx, depth + 1, rng, nodes);
        let right = self.grow(right_idx, depth + 1, rng, nodes);
        nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }

    fn leaf(&self, indices: &[usize]) -> Node {
        let times: Vec<f64> = indices.iter().map(|&i| self.times[i]).collect();
        let events: Vec<bool> = indices.iter().map(|&i| self.events[i]).collect();
        // lengths always match, so this cannot fail
        let chf =
            nelson_aalen_values(&times, &events, self.grid).expect("matching time/event lengths");
        Node::Leaf { chf }
    }

    fn best_split<R: Rng>(&self, indices: &[usize], rng: &mut R) -> Option<BestSplit> {
        let m = self.rows[indices[0]].len();
        let times: Vec<f64> = indices.iter().map(|&i| self.times[i]).collect();
        let events: Vec<bool> = indices.iter().map(|&i| self.events[i]).collect();
        let table = RiskTable::new(&times, &events);
        let total_events = events.iter().filter(|&&e| e).count();
        let k = table.event_times.len();

        let mut best: Option<BestSplit> = None;
        for feature in index::sample(rng, m, self.features_per_split.min(m)) {
            let mut order: Vec<usize> = (0..indices.len()).collect();
            order.sort_by(|&a, &b| {
                self.rows[indices[a]][feature].total_cmp(&self.rows[indices[b]][feature])
            });
            let mut at_risk = vec![0.0; k];
            let mut deaths = vec![0.0; k];
            let mut left_events = 0;
            for p in 0..order.len() - 1 {
                let here = order[p];
                table.add(&mut at_risk, &mut deaths, times[here], events[here]);
                left_events += usize::from(events[here]);
                let lo = self.rows[indices[here]][feature];
                let hi = self.rows[indices[order[p + 1]]][feature];
                if lo == hi
                    || left_events < self.config.min_leaf_events
                    || total_events - left_events < self.config.min_leaf_events
                {
                    continue;
                }
                let statistic = table.statistic(&at_risk, &deaths);
                if statistic > best.as_ref().map_or(0.0, |b| b.statistic) {
                    let mid = 0.5 * (lo + hi);
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        statistic,
                    });
                }
            }
        }
        best
    }
}
