//! Cohort statistics: agreement, feature sets, OLS classifiers and
//! cross-validated ROC analysis.

use std::collections::HashSet;

use serde::Serialize;
use thiserror::Error;

use crate::NUM_REGIONS;

pub mod agreement;
pub mod cv;
pub mod dist;
pub mod linalg;
pub mod ols;
pub mod roc;

pub use agreement::{bland_altman, BlandAltman};
pub use cv::{evaluate_task, kfold_indices, Task, TaskReport, ALPHA};
pub use dist::student_t_sf;
pub use linalg::Matrix;
pub use ols::{fit_linear_model, LinearModel};
pub use roc::{roc_curve, RocCurve};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("underdetermined fit: {n} rows for {p} features (need at least p + 2)")]
    Underdetermined { n: usize, p: usize },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("sample too small: {0}")]
    SampleSize(String),
    #[error("cannot stratify: {0}")]
    Stratification(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Diagnosis {
    #[serde(rename = "CN")]
    Cn,
    #[serde(rename = "MCI")]
    Mci,
    #[serde(rename = "AD")]
    Ad,
}

impl Diagnosis {
    pub const ALL: [Diagnosis; 3] = [Diagnosis::Cn, Diagnosis::Mci, Diagnosis::Ad];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Diagnosis::Cn => "CN",
            Diagnosis::Mci => "MCI",
            Diagnosis::Ad => "AD",
        }
    }

    pub fn parse(s: &str) -> Result<Self, StatsError> {
        Diagnosis::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| StatsError::Input(format!("unknown diagnosis `{s}`")))
    }
}

/// Order of the brain structure volumes everywhere in the toolkit.
pub const BRAIN_VOLUME_NAMES: [&str; 4] = ["hippocampus", "csf", "white_matter", "gray_matter"];

#[derive(Clone, Debug, PartialEq)]
pub struct CohortRow {
    pub subject_id: String,
    pub diagnosis: Diagnosis,
    pub regional_wmh: [f64; NUM_REGIONS],
    pub global_wmh: f64,
    pub brain_volumes: Option<[f64; 4]>,
    pub reference_wmh: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CohortTable {
    rows: Vec<CohortRow>,
}

impl CohortTable {
    pub fn new(rows: Vec<CohortRow>) -> Result<Self, StatsError> {
        let mut seen = HashSet::new();
        for r in &rows {
            if !seen.insert(r.subject_id.as_str()) {
                return Err(StatsError::Input(format!("duplicate subject id `{}`", r.subject_id)));
            }
            let volumes = r
                .regional_wmh
                .iter()
                .chain(std::iter::once(&r.global_wmh))
                .chain(r.brain_volumes.iter().flatten())
                .chain(r.reference_wmh.iter());
            for v in volumes {
                if !(v.is_finite() && *v >= 0.0) {
                    return Err(StatsError::Input(format!("subject `{}` has invalid volume {v}", r.subject_id)));
                }
            }
        }
        Ok(CohortTable { rows })
    }

    pub fn rows(&self) -> &[CohortRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn count(&self, d: Diagnosis) -> usize {
        self.rows.iter().filter(|r| r.diagnosis == d).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Global,
    Regional,
    Brain,
    Combined,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [FeatureKind::Global, FeatureKind::Regional, FeatureKind::Brain, FeatureKind::Combined];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Global => "global",
            FeatureKind::Regional => "regional",
            FeatureKind::Brain => "brain",
            FeatureKind::Combined => "combined",
        }
    }

    pub fn parse(s: &str) -> Result<Self, StatsError> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| StatsError::Input(format!("unknown feature kind `{s}`")))
    }

    pub fn num_features(self) -> usize {
        match self {
            FeatureKind::Global => 1,
            FeatureKind::Regional => NUM_REGIONS,
            FeatureKind::Brain => 4,
            FeatureKind::Combined => NUM_REGIONS + 4,
        }
    }

    pub fn feature_names(self) -> Vec<String> {
        let regional = || (1..=NUM_REGIONS).map(region_feature_name);
        let brain = || BRAIN_VOLUME_NAMES.iter().map(|s| s.to_string());
        match self {
            FeatureKind::Global => vec!["global_wmh".into()],
            FeatureKind::Regional => regional().collect(),
            FeatureKind::Brain => brain().collect(),
            FeatureKind::Combined => regional().chain(brain()).collect(),
        }
    }
}

pub fn region_feature_name(region: usize) -> String {
    format!("region_{region:02}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub kind: FeatureKind,
    pub matrix: Matrix,
    pub feature_names: Vec<String>,
}

pub fn build_feature_set(cohort: &CohortTable, kind: FeatureKind) -> Result<FeatureSet, StatsError> {
    let mut data = Vec::with_capacity(cohort.len() * kind.num_features());
    for r in cohort.rows() {
        let brain =
            || r.brain_volumes.ok_or_else(|| StatsError::Input(format!("subject `{}` has no brain volumes", r.subject_id)));
        match kind {
            FeatureKind::Global => data.push(r.global_wmh),
            FeatureKind::Regional => data.extend_from_slice(&r.regional_wmh),
            FeatureKind::Brain => data.extend_from_slice(&brain()?),
            FeatureKind::Combined => {
                data.extend_from_slice(&r.regional_wmh);
                data.extend_from_slice(&brain()?);
            }
        }
    }
    Ok(FeatureSet {
        kind,
        matrix: Matrix::from_vec(cohort.len(), kind.num_features(), data)?,
        feature_names: kind.feature_names(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, d: Diagnosis, g: f64) -> CohortRow {
        let mut regional = [0.0; NUM_REGIONS];
        for (i, v) in regional.iter_mut().enumerate() {
            *v = g + i as f64;
        }
        CohortRow {
            subject_id: id.into(),
            diagnosis: d,
            regional_wmh: regional,
            global_wmh: g,
            brain_volumes: Some([1.0, 2.0, 3.0, 4.0 + g]),
            reference_wmh: None,
        }
    }

    #[test]
    fn table_invariants() {
        let a = row("a", Diagnosis::Cn, 1.0);
        assert!(CohortTable::new(vec![a.clone(), a.clone()]).is_err());
        let mut neg = row("b", Diagnosis::Ad, 1.0);
        neg.regional_wmh[3] = -1.0;
        assert!(CohortTable::new(vec![a, neg]).is_err());
    }

    #[test]
    fn feature_sets() {
        let t = CohortTable::new(vec![row("a", Diagnosis::Cn, 1.0), row("b", Diagnosis::Mci, 2.0), row("c", Diagnosis::Ad, 3.0)])
            .unwrap();
        let g = build_feature_set(&t, FeatureKind::Global).unwrap();
        assert_eq!((g.matrix.rows(), g.matrix.cols()), (3, 1));
        assert_eq!(g.matrix.column(0).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);

        let r = build_feature_set(&t, FeatureKind::Regional).unwrap();
        let c = build_feature_set(&t, FeatureKind::Combined).unwrap();
        assert_eq!(c.matrix.cols(), 38);
        for i in 0..3 {
            assert_eq!(&c.matrix.row(i)[..34], r.matrix.row(i));
            assert_eq!(c.matrix.row(i)[37], 4.0 + (i + 1) as f64);
        }
        assert_eq!(r.feature_names[0], "region_01");
        assert_eq!(r.feature_names[33], "region_34");
        assert_eq!(&c.feature_names[34..], &BRAIN_VOLUME_NAMES.map(String::from));

        let mut missing = row("d", Diagnosis::Cn, 0.0);
        missing.brain_volumes = None;
        let t = CohortTable::new(vec![missing]).unwrap();
        assert!(matches!(build_feature_set(&t, FeatureKind::Brain), Err(StatsError::Input(_))));
        assert!(build_feature_set(&t, FeatureKind::Regional).is_ok());
    }

    #[test]
    fn names_parse() {
        for d in Diagnosis::ALL {
            assert_eq!(Diagnosis::parse(d.as_str()).unwrap(), d);
        }
        assert_eq!(Diagnosis::parse("ad").unwrap(), Diagnosis::Ad);
        for k in FeatureKind::ALL {
            assert_eq!(FeatureKind::parse(k.as_str()).unwrap(), k);
        }
    }
}
