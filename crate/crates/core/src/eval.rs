//! Accuracy reports broken down by hop count and noise kind.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::model::Predictor;
use crate::taskgen::{NoiseKind, StoryInstance};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Bucket {
    pub n: usize,
    pub correct: usize,
}

impl Bucket {
    pub fn accuracy(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.correct as f64 / self.n as f64
        }
    }

    fn add(&mut self, ok: bool) {
        self.n += 1;
        self.correct += usize::from(ok);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub overall: Bucket,
    /// Only hop counts that occur in the data.
    pub per_k: BTreeMap<usize, Bucket>,
    pub per_noise: BTreeMap<NoiseKind, Bucket>,
    pub per_cell: BTreeMap<(usize, NoiseKind), Bucket>,
    pub runtime_secs: f64,
}

fn mean_over(per_k: &BTreeMap<usize, Bucket>, lo: usize, hi: usize) -> Option<f64> {
    let accs: Vec<f64> = per_k.range(lo..=hi).map(|(_, b)| b.accuracy()).collect();
    (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        self.overall.accuracy()
    }

    pub fn per_k_accuracy(&self) -> BTreeMap<usize, f64> {
        self.per_k.iter().map(|(&k, b)| (k, b.accuracy())).collect()
    }

    /// Unweighted mean of the per-k accuracies for k in 1..=5.
    pub fn mean_low(&self) -> Option<f64> {
        mean_over(&self.per_k, 1, 5)
    }

    /// Unweighted mean of the per-k accuracies for k in 6..=10.
    pub fn mean_high(&self) -> Option<f64> {
        mean_over(&self.per_k, 6, 10)
    }

    /// One row per `(k, noise)` cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,noise,n,accuracy\n");
        for (&(k, noise), b) in &self.per_cell {
            writeln!(out, "{k},{noise},{},{}", b.n, b.accuracy()).expect("writing to a String");
        }
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "overall: {:.4} ({}/{})",
            self.accuracy(),
            self.overall.correct,
            self.overall.n
        )?;
        for (k, b) in &self.per_k {
            writeln!(f, "  k={k:<2} {:.4} (n={})", b.accuracy(), b.n)?;
        }
        for (noise, b) in &self.per_noise {
            writeln!(f, "  noise={noise:<12} {:.4} (n={})", b.accuracy(), b.n)?;
        }
        if let Some(m) = self.mean_low() {
            writeln!(f, "  mean k=1-5:  {m:.4}")?;
        }
        if let Some(m) = self.mean_high() {
            writeln!(f, "  mean k=6-10: {m:.4}")?;
        }
        write!(f, "  runtime: {:.2}s", self.runtime_secs)
    }
}

pub fn evaluate<P: Predictor + ?Sized>(model: &P, data: &[StoryInstance]) -> Result<EvalReport> {
    let started = Instant::now();
    let hits = data
        .par_iter()
        .map(|inst| Ok(model.predict(inst)? == inst.gold))
        .collect::<Result<Vec<bool>>>()?;
    let mut report = EvalReport {
        overall: Bucket::default(),
        per_k: BTreeMap::new(),
        per_noise: BTreeMap::new(),
        per_cell: BTreeMap::new(),
        runtime_secs: 0.0,
    };
    for (inst, ok) in data.iter().zip(hits) {
        report.overall.add(ok);
        report.per_k.entry(inst.k).or_default().add(ok);
        report.per_noise.entry(inst.noise).or_default().add(ok);
        report.per_cell.entry((inst.k, inst.noise)).or_default().add(ok);
    }
    report.runtime_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::RelationLabel;
    use crate::taskgen::generate_mixed;

    struct Always(RelationLabel);

    impl Predictor for Always {
        fn predict(&self, _: &StoryInstance) -> Result<RelationLabel> {
            Ok(self.0)
        }
    }

    #[test]
    fn constant_model_scores_one_ninth() {
        let data = generate_mixed(1, &[1, 2], NoiseKind::None, 900).unwrap();
        let r = evaluate(&Always(RelationLabel::Left), &data).unwrap();
        assert!((r.accuracy() - 1.0 / 9.0).abs() < 0.02);
        assert_eq!(r.per_k.keys().copied().collect::<Vec<_>>(), [1, 2]);
        assert!(r.mean_high().is_none());
        let low = r.mean_low().unwrap();
        let expect = (r.per_k[&1].accuracy() + r.per_k[&2].accuracy()) / 2.0;
        assert_eq!(low, expect);
    }

    #[test]
    fn csv_has_contract_columns() {
        let data = generate_mixed(1, &[3], NoiseKind::Irrelevant, 9).unwrap();
        let csv = evaluate(&Always(RelationLabel::Above), &data).unwrap().to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("k,noise,n,accuracy"));
        assert!(lines.next().unwrap().starts_with("3,irrelevant,9,"));
    }
}
