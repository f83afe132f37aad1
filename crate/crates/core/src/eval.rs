//! Correlation of metric outputs with subjective judgements.
//!
//! DMOS-style (lower is better) subjective scores are negated before any
//! correlation, so a metric that tracks quality yields positive PLCC/SRCC on
//! every dataset. When records carry a `group_id`, KRCC is computed within
//! each group (metric ranking vs subjective ranking) and summarized by its
//! mean and population standard deviation; otherwise a single global KRCC is
//! reported with a standard deviation of zero.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::{fit_logistic_then_pearson, kendall, pearson, spearman};
use crate::dataset::{EvalRecord, Polarity};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    /// `None` when undefined (fewer than 3 records or a constant vector).
    pub plcc_raw: Option<f64>,
    pub plcc_fitted: Option<f64>,
    /// False when the logistic fit failed and `plcc_fitted` repeats `plcc_raw`.
    pub fit_converged: bool,
    pub srcc: Option<f64>,
    pub per_group_krcc: Option<Vec<f64>>,
    pub krcc_mean: f64,
    pub krcc_std: f64,
    /// True when subjective scores were negated (lower-is-better data).
    pub subjective_negated: bool,
    pub runtime_s: f64,
}

pub const REPORT_CSV_HEADER: &str =
    "n,plcc_raw,plcc_fitted,fit_converged,srcc,krcc_mean,krcc_std,n_groups,subjective_negated,runtime_s";

impl EvalReport {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{:.6},{:.6},{},{},{:.3}",
            self.n,
            opt(self.plcc_raw),
            opt(self.plcc_fitted),
            self.fit_converged,
            opt(self.srcc),
            self.krcc_mean,
            self.krcc_std,
            self.per_group_krcc.as_ref().map_or(0, Vec::len),
            self.subjective_negated,
            self.runtime_s
        )
    }

    pub fn plain(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        let mut s = format!(
            "records      {}\nPLCC (raw)   {}\nPLCC (fit)   {}{}\nSRCC         {}\nKRCC mean    {:.4}\nKRCC std     {:.4}\n",
            self.n,
            opt(self.plcc_raw),
            opt(self.plcc_fitted),
            if self.fit_converged { "" } else { "  (logistic fit failed; raw value)" },
            opt(self.srcc),
            self.krcc_mean,
            self.krcc_std,
        );
        if let Some(groups) = &self.per_group_krcc {
            s += &format!("KRCC groups  {}\n", groups.len());
        }
        if self.subjective_negated {
            s += "subjective   negated (lower-is-better scale)\n";
        }
        s += &format!("runtime      {:.2}s\n", self.runtime_s);
        s
    }
}

/// Subjective values oriented so larger means better.
fn oriented(records: &[EvalRecord]) -> Result<(Vec<f64>, bool)> {
    let polarity = records[0].polarity;
    if records.iter().any(|r| r.polarity != polarity) {
        return Err(Error::Config("records mix higher- and lower-is-better scales".into()));
    }
    let negate = polarity == Polarity::LowerBetter;
    let values = records
        .iter()
        .map(|r| if negate { -r.subjective } else { r.subjective })
        .collect();
    Ok((values, negate))
}

/// Builds the report from already computed metric scores (same order as `records`).
pub fn report_from_scores(records: &[EvalRecord], scores: &[f64], runtime_s: f64) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    if records.len() != scores.len() {
        return Err(Error::LengthMismatch(records.len(), scores.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let (subjective, negated) = oriented(records)?;

    let plcc_raw = pearson(scores, &subjective).ok();
    let fitted = fit_logistic_then_pearson(scores, &subjective).ok();
    let srcc = spearman(scores, &subjective).ok();

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if let Some(g) = &r.group_id {
            groups.entry(g).or_default().push(i);
        }
    }
    let (per_group_krcc, krcc_mean, krcc_std) = if groups.is_empty() {
        let k = kendall(scores, &subjective).unwrap_or(f64::NAN);
        (None, k, 0.0)
    } else {
        let mut values = Vec::with_capacity(groups.len());
        for (g, idx) in &groups {
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let y: Vec<f64> = idx.iter().map(|&i| subjective[i]).collect();
            match kendall(&s, &y) {
                Ok(k) => values.push(k),
                Err(e) => log::warn!("group {g}: KRCC undefined ({e}); excluded"),
            }
        }
        if values.is_empty() {
            (Some(values), f64::NAN, f64::NAN)
        } else {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let var = values.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / values.len() as f64;
            (Some(values), mean, var.sqrt())
        }
    };

    Ok(EvalReport {
        n: records.len(),
        plcc_raw,
        plcc_fitted: fitted.map(|f| f.plcc),
        fit_converged: fitted.is_some_and(|f| f.fit_converged),
        srcc,
        per_group_krcc,
        krcc_mean,
        krcc_std,
        subjective_negated: negated,
        runtime_s,
    })
}

/// Scores every record with `metric` (in parallel, results kept in input
/// order) and returns the scores with the report.
pub fn evaluate_with_scores<F>(metric: F, records: &[EvalRecord]) -> Result<(EvalReport, Vec<f64>)>
where
    F: Fn(&EvalRecord) -> Result<f64> + Sync,
{
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    let start = Instant::now();
    let scores: Vec<f64> = records.par_iter().map(&metric).collect::<Result<_>>()?;
    let report = report_from_scores(records, &scores, start.elapsed().as_secs_f64())?;
    Ok((report, scores))
}

pub fn evaluate<F>(metric: F, records: &[EvalRecord]) -> Result<EvalReport>
where
    F: Fn(&EvalRecord) -> Result<f64> + Sync,
{
    evaluate_with_scores(metric, records).map(|(report, _)| report)
}

/// Reports over `repeats` random subsets of `size` records each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledReport {
    pub seed: u64,
    pub size: usize,
    pub samples: Vec<EvalReport>,
    pub plcc_fitted_mean: Option<f64>,
    pub srcc_mean: Option<f64>,
    pub srcc_std: Option<f64>,
}

/// Draws `repeats` subsets of `size` distinct record indices with a seeded RNG.
pub fn sample_subsets(n: usize, size: usize, repeats: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if size == 0 || size > n {
        return Err(Error::Config(format!("cannot draw {size} of {n} records")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..repeats)
        .map(|_| {
            let mut idx = sample(&mut rng, n, size).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect())
}

/// Evaluates on random subsets; each record in the union is scored once.
pub fn evaluate_sampled<F>(metric: F, records: &[EvalRecord], size: usize, repeats: usize, seed: u64) -> Result<SampledReport>
where
    F: Fn(&EvalRecord) -> Result<f64> + Sync,
{
    let subsets = sample_subsets(records.len(), size, repeats, seed)?;
    let mut union: Vec<usize> = subsets.iter().flatten().copied().collect();
    union.sort_unstable();
    union.dedup();
    let start = Instant::now();
    let union_scores: Vec<f64> = union
        .par_iter()
        .map(|&i| metric(&records[i]))
        .collect::<Result<_>>()?;
    let elapsed = start.elapsed().as_secs_f64();
    let score_of: BTreeMap<usize, f64> = union.into_iter().zip(union_scores).collect();

    let samples = subsets
        .iter()
        .map(|idx| {
            let recs: Vec<EvalRecord> = idx.iter().map(|&i| records[i].clone()).collect();
            let scores: Vec<f64> = idx.iter().map(|i| score_of[i]).collect();
            report_from_scores(&recs, &scores, elapsed / repeats as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_of = |get: fn(&EvalReport) -> Option<f64>| -> Option<f64> {
        let v: Option<Vec<f64>> = samples.iter().map(get).collect();
        v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    };
    let srcc_mean = mean_of(|r| r.srcc);
    let srcc_std = srcc_mean.map(|m| {
        let var = samples.iter().map(|r| (r.srcc.unwrap_or(m) - m).powi(2)).sum::<f64>() / samples.len() as f64;
        var.sqrt()
    });
    Ok(SampledReport {
        seed,
        size,
        plcc_fitted_mean: mean_of(|r| r.plcc_fitted),
        srcc_mean,
        srcc_std,
        samples,
    })
}
