//! From-scratch random forest over context windows.
//!
//! Ten binary trees by default, each grown on a bootstrap sample of the
//! training set with greedy Gini splits over a random feature subset per
//! node. Prediction is a plurality vote of the per-tree leaf majorities.
//! Training is reproducible given the master seed and the dataset order:
//! tree `t` draws from a stream seeded with `seed + t`.

use std::fs;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{ContextLayout, ContextWindow};
use crate::error::{Error, Result};
use crate::events::EventLabel;

/// Classes the forest distinguishes, in vote tie-break order.
pub const CLASS_COUNT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventClass {
    Click = 0,
    Echo = 1,
    Other = 2,
}

impl EventClass {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(EventClass::Click),
            1 => Some(EventClass::Echo),
            2 => Some(EventClass::Other),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventClass::Click => "click",
            EventClass::Echo => "echo",
            EventClass::Other => "other",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "click" => Some(EventClass::Click),
            "echo" => Some(EventClass::Echo),
            "other" => Some(EventClass::Other),
            _ => None,
        }
    }

    pub fn to_label(self) -> EventLabel {
        match self {
            EventClass::Click => EventLabel::Click,
            EventClass::Echo => EventLabel::Echo,
            EventClass::Other => EventLabel::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: [u32; CLASS_COUNT],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf_counts(&self, features: &[f64]) -> &[u32; CLASS_COUNT] {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if features[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Majority class of the reached leaf; ties break to the lower index.
    pub fn vote(&self, features: &[f64]) -> EventClass {
        let counts = self.leaf_counts(features);
        let mut best = 0usize;
        for c in 1..CLASS_COUNT {
            if counts[c] > counts[best] {
                best = c;
            }
        }
        EventClass::from_index(best).unwrap()
    }
}

pub const MODEL_MAGIC: &[u8] = b"CLICKFOREST\n";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format_version: u32,
    pub rng_seed: u64,
    pub n_trees: usize,
    pub feature_count: usize,
    pub context_size: usize,
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub seed: u64,
    pub layout: ContextLayout,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_trees: 10,
            seed: 42,
            layout: ContextLayout::default(),
        }
    }
}

fn gini(counts: &[u32; CLASS_COUNT], total: u32) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for &c in counts {
        let p = c as f64 / total as f64;
        sum += p * p;
    }
    1.0 - sum
}

struct TreeBuilder<'a> {
    features: &'a [Vec<f64>],
    labels: &'a [EventClass],
    mtry: usize,
    feature_count: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn class_counts(&self, rows: &[usize]) -> [u32; CLASS_COUNT] {
        let mut counts = [0u32; CLASS_COUNT];
        for &r in rows {
            counts[self.labels[r].index()] += 1;
        }
        counts
    }

    fn build(&mut self, rows: Vec<usize>, rng: &mut ChaCha12Rng) -> usize {
        let counts = self.class_counts(&rows);
        let total = rows.len() as u32;
        let parent_gini = gini(&counts, total);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || rows.len() < 2 {
            self.nodes.push(Node::Leaf { counts });
            return self.nodes.len() - 1;
        }

        // Walk a random permutation of the features, scoring candidates
        // until `mtry` non-constant ones have been evaluated. Features that
        // are constant within the node don't use up the budget.
        let order = rand::seq::index::sample(rng, self.feature_count, self.feature_count);
        let mut evaluated = 0usize;
        let mut best: Option<(f64, usize, f64)> = None; // (weighted gini, feature, threshold)
        for feature in order {
            if evaluated >= self.mtry {
                break;
            }
            let mut values: Vec<(f64, usize)> =
                rows.iter().map(|&r| (self.features[r][feature], r)).collect();
            values.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            if values.first().map(|v| v.0) == values.last().map(|v| v.0) {
                continue; // constant within the node
            }
            evaluated += 1;
            let mut left = [0u32; CLASS_COUNT];
            let mut right = self.class_counts(&rows);
            for i in 0..values.len() - 1 {
                let class = self.labels[values[i].1].index();
                left[class] += 1;
                right[class] -= 1;
                if values[i].0 == values[i + 1].0 {
                    continue; // can't split between equal values
                }
                let n_left = (i + 1) as u32;
                let n_right = total - n_left;
                let weighted = (n_left as f64 * gini(&left, n_left)
                    + n_right as f64 * gini(&right, n_right))
                    / total as f64;
                let improves = match best {
                    None => true,
                    Some((bw, _, _)) => weighted < bw - 1e-15,
                };
                if improves {
                    let threshold = (values[i].0 + values[i + 1].0) / 2.0;
                    best = Some((weighted, feature, threshold));
                }
            }
        }

        match best {
            // require an actual impurity reduction
            Some((weighted, feature, threshold)) if parent_gini - weighted > 1e-12 => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
                    .iter()
                    .partition(|&&r| self.features[r][feature] <= threshold);
                let slot = self.nodes.len();
                self.nodes.push(Node::Leaf { counts }); // placeholder
                let left = self.build(left_rows, rng);
                let right = self.build(right_rows, rng);
                self.nodes[slot] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                slot
            }
            _ => {
                self.nodes.push(Node::Leaf { counts });
                self.nodes.len() - 1
            }
        }
    }
}

/// Grow a forest from labeled context windows.
pub fn train_forest(
    dataset: &[(ContextWindow, EventClass)],
    config: &TrainConfig,
) -> Result<ForestModel> {
    if dataset.is_empty() {
        return Err(Error::DegenerateModel("empty dataset".into()));
    }
    if config.n_trees == 0 {
        return Err(Error::Config("n_trees must be >= 1".into()));
    }
    let mut seen = [false; CLASS_COUNT];
    for (_, class) in dataset {
        seen[class.index()] = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::DegenerateModel(
            "training needs at least two distinct classes".into(),
        ));
    }
    let feature_count = config.layout.feature_count();
    let features: Vec<Vec<f64>> = dataset.iter().map(|(w, _)| w.to_features()).collect();
    for f in &features {
        if f.len() != feature_count {
            return Err(Error::InvalidInput(format!(
                "context window has {} features, layout expects {feature_count}",
                f.len()
            )));
        }
    }
    let labels: Vec<EventClass> = dataset.iter().map(|(_, c)| *c).collect();
    // feature subset size follows ceil(sqrt(stacked features)) without the
    // presence flags
    let mtry = ((config.layout.slots() * crate::classifier::FEATURES_PER_EVENT) as f64)
        .sqrt()
        .ceil() as usize;
    let n = dataset.len();
    let mut trees = Vec::with_capacity(config.n_trees);
    for t in 0..config.n_trees {
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed.wrapping_add(t as u64));
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut builder = TreeBuilder {
            features: &features,
            labels: &labels,
            mtry: mtry.min(feature_count),
            feature_count,
            nodes: Vec::new(),
        };
        builder.build(rows, &mut rng);
        trees.push(Tree {
            nodes: builder.nodes,
        });
    }
    Ok(ForestModel {
        format_version: MODEL_FORMAT_VERSION,
        rng_seed: config.seed,
        n_trees: config.n_trees,
        feature_count,
        context_size: config.layout.slots(),
        trees,
    })
}

/// Plurality vote over all trees; ties break to the lower class index
/// (click < echo < other). The score is the winning vote share.
pub fn predict(model: &ForestModel, window: &ContextWindow) -> Result<(EventClass, f64)> {
    let features = window.to_features();
    if features.len() != model.feature_count {
        return Err(Error::InvalidInput(format!(
            "window has {} features, model expects {}",
            features.len(),
            model.feature_count
        )));
    }
    let mut votes = [0usize; CLASS_COUNT];
    for tree in &model.trees {
        votes[tree.vote(&features).index()] += 1;
    }
    let mut best = 0usize;
    for c in 1..CLASS_COUNT {
        if votes[c] > votes[best] {
            best = c;
        }
    }
    Ok((
        EventClass::from_index(best).unwrap(),
        votes[best] as f64 / model.n_trees as f64,
    ))
}

/// Peak-frequency band labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrequencyBand {
    /// Low frequency, below 5 kHz.
    Lf,
    /// High frequency, 5 kHz to 40 kHz inclusive.
    Hf,
    /// Ultrasonic, above 40 kHz.
    Us,
}

impl FrequencyBand {
    pub fn as_str(self) -> &'static str {
        match self {
            FrequencyBand::Lf => "LF",
            FrequencyBand::Hf => "HF",
            FrequencyBand::Us => "US",
        }
    }
}

/// Band of a peak frequency: LF below 5 kHz, HF from 5 kHz through 40 kHz,
/// US above.
pub fn classify_frequency_band(strongest_frequency: f64) -> FrequencyBand {
    if strongest_frequency < 5_000.0 {
        FrequencyBand::Lf
    } else if strongest_frequency <= 40_000.0 {
        FrequencyBand::Hf
    } else {
        FrequencyBand::Us
    }
}

pub fn save_model(model: &ForestModel, path: &Path) -> Result<()> {
    let mut bytes = MODEL_MAGIC.to_vec();
    let json = serde_json::to_vec(model)
        .map_err(|e| Error::ModelLoad(format!("serialize: {e}")))?;
    bytes.extend_from_slice(&json);
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ForestModel> {
    let bytes = fs::read(path)?;
    if bytes.len() < MODEL_MAGIC.len() || &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
        return Err(Error::ModelLoad(format!(
            "{}: missing model magic",
            path.display()
        )));
    }
    let model: ForestModel = serde_json::from_slice(&bytes[MODEL_MAGIC.len()..])
        .map_err(|e| Error::ModelLoad(format!("{}: {e}", path.display())))?;
    if model.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::ModelLoad(format!(
            "{}: format version {} (supported: {MODEL_FORMAT_VERSION})",
            path.display(),
            model.format_version
        )));
    }
    if model.trees.len() != model.n_trees {
        return Err(Error::ModelLoad(format!(
            "{}: tree count mismatch",
            path.display()
        )));
    }
    Ok(model)
}
