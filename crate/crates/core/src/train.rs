//! Mini-batch training: Adam with separate embedding and network learning
//! rates, reduce-on-plateau scheduling and early stopping on validation
//! cross-entropy.

use std::fmt::Write as _;

use depwise_autodiff::{Parameters, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{loss, loss_and_grads, Model, ParamGroup};
use crate::taskgen::StoryInstance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_engine: f64,
    pub lr_embed: f64,
    pub batch_size: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub early_stop_patience: usize,
    pub min_delta: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Stop once this many seconds have elapsed at an epoch boundary.
    pub time_budget_secs: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_engine: 1e-4,
            lr_embed: 1e-4,
            batch_size: 32,
            plateau_factor: 0.1,
            plateau_patience: 2,
            early_stop_patience: 3,
            min_delta: 1e-3,
            max_epochs: 30,
            seed: 0,
            time_budget_secs: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr_engine >= 0.0 && self.lr_engine.is_finite())
            || !(self.lr_embed >= 0.0 && self.lr_embed.is_finite())
        {
            return bad("learning rates must be finite and non-negative".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return bad(format!("plateau factor {} is outside (0, 1]", self.plateau_factor));
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return bad("patience values must be positive".into());
        }
        if self.min_delta < 0.0 {
            return bad("min_delta must be non-negative".into());
        }
        Ok(())
    }
}

/// Adam with bias correction and one learning rate per tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(shapes: &[usize]) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_model(model: &impl Parameters) -> Self {
        let mut sizes = Vec::new();
        model.visit(&mut |t| sizes.push(t.numel()));
        Adam::new(&sizes)
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Reads each tensor's `grad` slot and updates the tensor data.
    pub fn step(&mut self, params: &mut impl Parameters, lrs: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let mut i = 0;
        params.visit_mut(&mut |t: &mut Tensor| {
            let lr = lrs[i];
            let g = t.grad.take().unwrap_or_else(|| vec![0.0; t.numel()]);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, p) in t.data_mut().iter_mut().enumerate() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                if lr != 0.0 {
                    let mh = m[k] / bc1;
                    let vh = v[k] / bc2;
                    *p -= lr * mh / (vh.sqrt() + eps);
                }
            }
            i += 1;
        });
    }
}

/// Reduce-on-plateau: after `patience` consecutive epochs without an
/// improvement larger than `min_delta`, multiply the rate by `factor`.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    pub min_delta: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize, min_delta: f64) -> Self {
        PlateauScheduler {
            factor,
            patience,
            min_delta,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Returns the multiplier to apply to the current rate (1 or `factor`).
    pub fn observe(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best - self.min_delta {
            self.best = val_loss;
            self.bad_epochs = 0;
            return 1.0;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.bad_epochs = 0;
            self.factor
        } else {
            1.0
        }
    }
}

/// Fires once `patience` consecutive epochs bring no improvement larger
/// than `min_delta`; learning-rate reductions do not reset the count.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_delta: f64,
    best: f64,
    bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        EarlyStopping {
            patience,
            min_delta,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// True when training should stop after this epoch.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        if val_loss < self.best - self.min_delta {
            self.best = val_loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        self.bad_epochs >= self.patience
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,lr\n");
    for r in history {
        writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.lr).expect("writing to a String");
    }
    out
}

/// Where a (possibly resumed) run starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResumeState {
    /// Epochs already completed; the next epoch is numbered `completed + 1`.
    pub completed: usize,
    /// Network learning rate to continue from.
    pub lr_engine: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    /// Parameters with the lowest validation loss seen.
    pub best: M,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Parameters after the last epoch.
    pub last: M,
    pub history: Vec<EpochRecord>,
    /// Network learning rate after the last epoch.
    pub final_lr: f64,
    pub stopped_early: bool,
}

/// Mean loss over `data`, evaluated in parallel and summed in order.
pub fn mean_loss<M: Model>(model: &M, data: &[StoryInstance]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Input("cannot average a loss over an empty set".into()));
    }
    let losses = data
        .par_iter()
        .map(|inst| loss(model, inst))
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / data.len() as f64)
}

/// Mean gradient over a batch, written into the tensors' grad slots.
/// Per-instance work runs in parallel; the reduction follows batch order.
pub fn accumulate_batch<M: Model>(model: &mut M, batch: &[&StoryInstance]) -> Result<f64> {
    let results = batch
        .par_iter()
        .map(|inst| loss_and_grads(&*model, inst))
        .collect::<Result<Vec<_>>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut sums: Vec<Vec<f64>> = Vec::new();
    let mut total = 0.0;
    for (l, grads) in results {
        total += l;
        if sums.is_empty() {
            sums = grads
                .into_iter()
                .map(|g| g.into_iter().map(|x| x * scale).collect())
                .collect();
        } else {
            for (s, g) in sums.iter_mut().zip(grads) {
                for (a, b) in s.iter_mut().zip(g) {
                    *a += b * scale;
                }
            }
        }
    }
    let mut it = sums.into_iter();
    model.visit_mut(&mut |t| t.grad = it.next());
    Ok(total * scale)
}

pub fn train<M: Model>(
    model: M,
    train_set: &[StoryInstance],
    val_set: &[StoryInstance],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<M>> {
    train_from(
        model,
        train_set,
        val_set,
        cfg,
        ResumeState {
            completed: 0,
            lr_engine: cfg.lr_engine,
        },
    )
}

/// Continues a run: epoch numbers start after `resume.completed` and both
/// learning rates are scaled by `resume.lr_engine / cfg.lr_engine`.
/// Optimizer moments start from zero.
pub fn train_from<M: Model>(
    mut model: M,
    train_set: &[StoryInstance],
    val_set: &[StoryInstance],
    cfg: &TrainConfig,
    resume: ResumeState,
) -> Result<TrainOutcome<M>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Input("the training set is empty".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Input("the validation set is empty".into()));
    }
    let started = std::time::Instant::now();
    let groups = model.param_groups();
    let mut scale = if cfg.lr_engine > 0.0 {
        resume.lr_engine / cfg.lr_engine
    } else {
        1.0
    };
    let mut adam = Adam::for_model(&model);
    let mut plateau = PlateauScheduler::new(cfg.plateau_factor, cfg.plateau_patience, cfg.min_delta);
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience, cfg.min_delta);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ resume.completed as u64);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = resume.completed;
    let mut history = Vec::new();
    let mut stopped_early = false;

    for epoch in resume.completed + 1..=resume.completed + cfg.max_epochs {
        order.shuffle(&mut rng);
        let lrs: Vec<f64> = groups
            .iter()
            .map(|g| match g {
                ParamGroup::Embedding => cfg.lr_embed * scale,
                ParamGroup::Network => cfg.lr_engine * scale,
            })
            .collect();
        let mut train_total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&StoryInstance> = chunk.iter().map(|&i| &train_set[i]).collect();
            let l = accumulate_batch(&mut model, &batch)?;
            if !l.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    msg: format!("batch loss is {l}"),
                });
            }
            train_total += l * batch.len() as f64;
            adam.step(&mut model, &lrs);
            model.post_step();
        }
        let train_loss = train_total / train_set.len() as f64;
        let val_loss = mean_loss(&model, val_set)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                msg: format!("validation loss is {val_loss}"),
            });
        }
        if val_loss < best_val {
            best_val = val_loss;
            best = model.clone();
            best_epoch = epoch;
        }
        scale *= plateau.observe(val_loss);
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr: cfg.lr_engine * scale,
        });
        if stopper.observe(val_loss) {
            stopped_early = true;
            break;
        }
        if let Some(budget) = cfg.time_budget_secs {
            if started.elapsed().as_secs_f64() >= budget {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val_loss: best_val,
        last: model,
        history,
        final_lr: cfg.lr_engine * scale,
        stopped_early,
    })
}

/// Deterministic split: the last `fraction` of a seeded shuffle is held out.
pub fn split_validation(data: &[StoryInstance], fraction: f64, seed: u64) -> (Vec<StoryInstance>, Vec<StoryInstance>) {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((data.len() as f64) * fraction).round() as usize;
    let n_val = n_val.clamp(usize::from(data.len() > 1), data.len().saturating_sub(1).max(1));
    let (tr, va) = idx.split_at(data.len() - n_val.min(data.len()));
    (
        tr.iter().map(|&i| data[i].clone()).collect(),
        va.iter().map(|&i| data[i].clone()).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_reduces_after_patience() {
        let mut p = PlateauScheduler::new(0.1, 2, 1e-3);
        assert_eq!(p.observe(1.0), 1.0);
        assert_eq!(p.observe(1.0), 1.0);
        assert_eq!(p.observe(0.9995), 0.1);
        assert_eq!(p.observe(1.0), 1.0);
        assert_eq!(p.observe(1.0), 0.1);
        assert_eq!(p.observe(0.5), 1.0);
    }

    #[test]
    fn early_stop_counts_stagnant_epochs() {
        let mut s = EarlyStopping::new(3, 1e-3);
        let curve = [1.0, 0.9, 0.8995, 0.8991, 0.85, 0.8499, 0.8498, 0.8497];
        let fired: Vec<bool> = curve.iter().map(|&v| s.observe(v)).collect();
        assert_eq!(fired, [false, false, false, false, false, false, false, true]);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let data = crate::taskgen::generate(0, 2, crate::taskgen::NoiseKind::None, 50).unwrap();
        let (a, b) = split_validation(&data, 0.1, 7);
        assert_eq!((a.len(), b.len()), (45, 5));
        let (a2, b2) = split_validation(&data, 0.1, 7);
        assert_eq!((a, b), (a2, b2));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let c = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c: TrainConfig = serde_json::from_str(r#"{"lr_engine": 0.0, "max_epochs": 2}"#).unwrap();
        assert_eq!((c.lr_engine, c.max_epochs, c.batch_size), (0.0, 2, 32));
        assert!(serde_json::from_str::<TrainConfig>(r#"{"lr": 1}"#).is_err());
    }
}
