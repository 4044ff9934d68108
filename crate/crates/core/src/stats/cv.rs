//! Stratified k-fold cross-validation of the OLS classifier.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use super::linalg::Matrix;
use super::ols::{fit_linear_model, LinearModel};
use super::roc::{roc_curve, RocCurve};
use super::{build_feature_set, CohortTable, Diagnosis, FeatureKind, StatsError};
use crate::rng::seeded;

/// Significance level of the coefficient screen.
pub const ALPHA: f64 = 0.05;

/// Stratified folds. Each class is shuffled with a ChaCha8 stream seeded by
/// `seed`, then the negatives followed by the positives are dealt
/// round-robin, the positives continuing at the fold after the last
/// negative. Fold sizes therefore differ by at most one. Indices inside a
/// fold are sorted.
pub fn kfold_indices(n: usize, k: usize, labels: &[bool], seed: u64) -> Result<Vec<Vec<usize>>, StatsError> {
    if labels.len() != n {
        return Err(StatsError::Input(format!("{} labels for n = {n}", labels.len())));
    }
    if k < 2 {
        return Err(StatsError::Input(format!("k must be at least 2, got {k}")));
    }
    let mut rng = seeded(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [false, true] {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(StatsError::Stratification(format!(
                "class {} has {} members, fewer than k = {k}",
                class as u8,
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Task {
    #[serde(rename = "ad_cn")]
    AdVsCn,
    #[serde(rename = "ad_mci")]
    AdVsMci,
    #[serde(rename = "mci_cn")]
    MciVsCn,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::AdVsCn, Task::AdVsMci, Task::MciVsCn];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::AdVsCn => "ad_cn",
            Task::AdVsMci => "ad_mci",
            Task::MciVsCn => "mci_cn",
        }
    }

    pub fn parse(s: &str) -> Result<Self, StatsError> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| StatsError::Input(format!("unknown task `{s}` (expected ad_cn, ad_mci or mci_cn)")))
    }

    /// `(positive, negative)`: the positive class is the more impaired one.
    pub fn classes(self) -> (Diagnosis, Diagnosis) {
        match self {
            Task::AdVsCn => (Diagnosis::Ad, Diagnosis::Cn),
            Task::AdVsMci => (Diagnosis::Ad, Diagnosis::Mci),
            Task::MciVsCn => (Diagnosis::Mci, Diagnosis::Cn),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TaskReport {
    pub task: Task,
    pub feature_kind: FeatureKind,
    pub k: usize,
    pub seed: u64,
    /// Subject ids of the task rows, in cohort order.
    pub subject_ids: Vec<String>,
    pub labels: Vec<bool>,
    /// Cross-validated score of every task row.
    pub pooled_scores: Vec<f64>,
    pub per_fold_auc: Vec<f64>,
    pub pooled_auc: f64,
    pub pooled_roc: RocCurve,
    pub in_sample_auc: f64,
    pub feature_names: Vec<String>,
    /// Fit on all task rows; drives the significance screen.
    pub model: LinearModel,
    /// Features with p < 0.05 in the in-sample fit.
    pub significant_regions: Vec<String>,
}

pub fn evaluate_task(cohort: &CohortTable, task: Task, kind: FeatureKind, k: usize, seed: u64) -> Result<TaskReport, StatsError> {
    let (pos, neg) = task.classes();
    let features = build_feature_set(cohort, kind)?;
    let keep: Vec<usize> =
        cohort.rows().iter().enumerate().filter(|(_, r)| r.diagnosis == pos || r.diagnosis == neg).map(|(i, _)| i).collect();
    let x = features.matrix.select_rows(&keep);
    let labels: Vec<bool> = keep.iter().map(|&i| cohort.rows()[i].diagnosis == pos).collect();
    let y: Vec<f64> = labels.iter().map(|&l| l as u8 as f64).collect();
    let n = keep.len();

    let folds = kfold_indices(n, k, &labels, seed)?;
    let fold_results = folds.par_iter().map(|test| fold_scores(&x, &y, &labels, test)).collect::<Result<Vec<_>, _>>()?;

    let mut pooled_scores = vec![f64::NAN; n];
    let mut per_fold_auc = Vec::with_capacity(k);
    for (test, (scores, auc)) in folds.iter().zip(fold_results) {
        for (&i, s) in test.iter().zip(scores) {
            pooled_scores[i] = s;
        }
        per_fold_auc.push(auc);
    }
    let pooled_roc = roc_curve(&pooled_scores, &labels)?;

    let model = fit_linear_model(&x, &y)?;
    let in_sample_auc = roc_curve(&model.predict_rows(&x), &labels)?.auc;
    let significant_regions = features
        .feature_names
        .iter()
        .zip(model.feature_p_values())
        .filter(|(_, &p)| p < ALPHA)
        .map(|(name, _)| name.clone())
        .collect();

    Ok(TaskReport {
        task,
        feature_kind: kind,
        k,
        seed,
        subject_ids: keep.iter().map(|&i| cohort.rows()[i].subject_id.clone()).collect(),
        labels,
        pooled_scores,
        per_fold_auc,
        pooled_auc: pooled_roc.auc,
        pooled_roc,
        in_sample_auc,
        feature_names: features.feature_names,
        model,
        significant_regions,
    })
}

/// Train on the complement of `test`, score `test`, and report the fold AUC.
fn fold_scores(x: &Matrix, y: &[f64], labels: &[bool], test: &[usize]) -> Result<(Vec<f64>, f64), StatsError> {
    let mut in_test = vec![false; y.len()];
    for &i in test {
        in_test[i] = true;
    }
    let train: Vec<usize> = (0..y.len()).filter(|&i| !in_test[i]).collect();
    let train_y: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let model = fit_linear_model(&x.select_rows(&train), &train_y)?;
    let scores: Vec<f64> = test.iter().map(|&i| model.predict(x.row(i))).collect();
    let test_labels: Vec<bool> = test.iter().map(|&i| labels[i]).collect();
    let auc = roc_curve(&scores, &test_labels)?.auc;
    Ok((scores, auc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::CohortRow;

    #[test]
    fn balanced_folds() {
        let labels: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        let folds = kfold_indices(10, 5, &labels, 3).unwrap();
        assert_eq!(folds.len(), 5);
        for f in &folds {
            assert_eq!(f.len(), 2);
            assert_eq!(f.iter().filter(|&&i| labels[i]).count(), 1);
        }
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(folds, kfold_indices(10, 5, &labels, 3).unwrap());
    }

    #[test]
    fn sizes_differ_by_at_most_one() {
        // every layout of 11 labels with at least 5 per class
        for mask in 0u32..(1 << 11) {
            let labels: Vec<bool> = (0..11).map(|i| mask >> i & 1 == 1).collect();
            let pos = labels.iter().filter(|&&l| l).count();
            if pos < 5 || 11 - pos < 5 {
                assert!(matches!(kfold_indices(11, 5, &labels, 0), Err(StatsError::Stratification(_))));
                continue;
            }
            let folds = kfold_indices(11, 5, &labels, mask as u64).unwrap();
            let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            assert_eq!(sizes.iter().sum::<usize>(), 11);
        }
    }

    #[test]
    fn task_names() {
        for t in Task::ALL {
            assert_eq!(Task::parse(t.as_str()).unwrap(), t);
        }
        assert!(Task::parse("ad_xx").is_err());
        assert_eq!(Task::MciVsCn.classes(), (Diagnosis::Mci, Diagnosis::Cn));
    }

    fn row(i: usize, d: Diagnosis, global: f64) -> CohortRow {
        CohortRow {
            subject_id: format!("s{i}"),
            diagnosis: d,
            regional_wmh: [0.0; crate::NUM_REGIONS],
            global_wmh: global,
            brain_volumes: None,
            reference_wmh: None,
        }
    }

    #[test]
    fn separable_global_load() {
        let mut rows = Vec::new();
        for i in 0..20 {
            rows.push(row(i, Diagnosis::Cn, i as f64));
            rows.push(row(100 + i, Diagnosis::Ad, 50.0 + i as f64));
            rows.push(row(200 + i, Diagnosis::Mci, 25.0 + i as f64));
        }
        let table = CohortTable::new(rows).unwrap();
        let r = evaluate_task(&table, Task::AdVsCn, FeatureKind::Global, 5, 1).unwrap();
        assert_eq!(r.pooled_auc, 1.0);
        assert_eq!(r.labels.len(), 40);
        assert!(r.per_fold_auc.iter().all(|&a| a == 1.0));
        assert_eq!(r.significant_regions, vec!["global_wmh".to_string()]);
        // brain volumes are absent
        assert!(evaluate_task(&table, Task::AdVsCn, FeatureKind::Brain, 5, 1).is_err());
    }
}
