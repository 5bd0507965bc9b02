//! Layer-count sweep: the breadth baseline at each depth against a single
//! depth-wise model trained on the same data.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::baseline::{smoothing_metric, BaselineModel};
use crate::engine::{AggregatorKind, EngineConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::model::ModelParams;
use crate::taskgen::StoryInstance;
use crate::train::{train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub d: usize,
    pub layers: Vec<usize>,
    pub aggregator: AggregatorKind,
    pub model_seed: u64,
    pub train: TrainConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            d: 32,
            layers: (1..=5).collect(),
            aggregator: AggregatorKind::RecurrentGated,
            model_seed: 0,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// `breadth` or `depwignn`.
    pub model: &'static str,
    /// Absent for the depth-wise model, which has no layer count.
    pub layers: Option<usize>,
    pub k: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerPoint {
    pub layers: usize,
    pub report: EvalReport,
    /// Mean pairwise cosine of final node embeddings, averaged over test
    /// stories at the largest hop count.
    pub smoothing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub baseline: Vec<LayerPoint>,
    pub depwignn: EvalReport,
}

impl SweepResult {
    pub fn max_k(&self) -> Option<usize> {
        self.depwignn.per_k.keys().next_back().copied()
    }

    pub fn rows(&self) -> Vec<SweepRow> {
        let mut rows = Vec::new();
        for p in &self.baseline {
            for (&k, b) in &p.report.per_k {
                rows.push(SweepRow {
                    model: "breadth",
                    layers: Some(p.layers),
                    k,
                    accuracy: b.accuracy(),
                });
            }
        }
        for (&k, b) in &self.depwignn.per_k {
            rows.push(SweepRow {
                model: "depwignn",
                layers: None,
                k,
                accuracy: b.accuracy(),
            });
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,layers,k,accuracy\n");
        for r in self.rows() {
            let layers = r.layers.map(|l| l.to_string()).unwrap_or_default();
            writeln!(out, "{},{layers},{},{}", r.model, r.k, r.accuracy).expect("writing to a String");
        }
        out
    }

    /// Baseline accuracy at hop count `k` for each layer count, in sweep order.
    pub fn baseline_curve(&self, k: usize) -> Vec<(usize, f64)> {
        self.baseline
            .iter()
            .map(|p| (p.layers, p.report.per_k.get(&k).map_or(0.0, |b| b.accuracy())))
            .collect()
    }
}

/// True when the curve peaks before its last point and never climbs back
/// above that peak, i.e. adding layers past the peak does not help.
pub fn drops_after_peak(curve: &[(usize, f64)]) -> bool {
    let Some(&(_, last)) = curve.last() else {
        return false;
    };
    let (peak_at, peak) = curve.iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |(bi, bv), (i, &(_, v))| if v > bv { (i, v) } else { (bi, bv) },
    );
    peak_at + 1 < curve.len() && last <= peak
}

pub fn oversmoothing_sweep(
    train_set: &[StoryInstance],
    val_set: &[StoryInstance],
    test_set: &[StoryInstance],
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    if cfg.layers.is_empty() {
        return Err(Error::Config("the sweep needs at least one layer count".into()));
    }
    let max_k = test_set
        .iter()
        .map(|s| s.k)
        .max()
        .ok_or_else(|| Error::Input("the test set is empty".into()))?;
    let deepest: Vec<&StoryInstance> = test_set.iter().filter(|s| s.k == max_k).collect();

    let mut baseline = Vec::with_capacity(cfg.layers.len());
    for &layers in &cfg.layers {
        let model = BaselineModel::init(cfg.d, layers, cfg.model_seed)?;
        let trained = train(model, train_set, val_set, &cfg.train)?.best;
        let report = evaluate(&trained, test_set)?;
        let mut total = 0.0;
        for inst in &deepest {
            total += smoothing_metric(&trained.node_embeddings(inst)?)?;
        }
        baseline.push(LayerPoint {
            layers,
            report,
            smoothing: total / deepest.len() as f64,
        });
    }

    let model = ModelParams::init(EngineConfig::new(cfg.d, cfg.aggregator), cfg.model_seed)?;
    let trained = train(model, train_set, val_set, &cfg.train)?.best;
    let depwignn = evaluate(&trained, test_set)?;
    Ok(SweepResult { baseline, depwignn })
}
