use serde::Serialize;

use super::StatsError;

/// Empirical ROC curve with tied scores entering together.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    /// Score cutoff of each point (`score >= threshold` is positive);
    /// the first entry is `+inf`.
    pub thresholds: Vec<f64>,
    /// Trapezoidal area under `points`.
    pub auc: f64,
}

/// Sweep the distinct scores in descending order. A block of tied scores
/// moves both rates at once, giving a diagonal segment, so the trapezoidal
/// area equals the Mann–Whitney statistic with ties counted one half.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve, StatsError> {
    if scores.len() != labels.len() {
        return Err(StatsError::Input(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(StatsError::Numeric(format!("score {s} is not a number")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(StatsError::DegenerateLabels("ROC needs both classes".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (fpr, tpr) = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        let (x0, y0) = *points.last().unwrap();
        auc += (fpr - x0) * (tpr + y0) / 2.0;
        points.push((fpr, tpr));
        thresholds.push(s);
    }
    Ok(RocCurve { points, thresholds, auc })
}
