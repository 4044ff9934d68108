use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Result};
use regionwise_core::stats::{evaluate_task, CohortRow, CohortTable, FeatureKind, Task, TaskReport};
use serde::Serialize;

use crate::svg::{Plot, PALETTE};
use crate::tables::{read_manifest, read_report, write_bytes, ManifestRow, ReportRow};
use crate::{CohortArgs, EXIT_OK};

#[derive(Serialize)]
struct Coefficient<'a> {
    feature: &'a str,
    estimate: f64,
    standard_error: f64,
    t_statistic: f64,
    p_value: f64,
}

#[derive(Serialize)]
struct TaskJson<'a> {
    task: Task,
    feature_kind: FeatureKind,
    positive_class: &'static str,
    negative_class: &'static str,
    n_subjects: usize,
    n_positive: usize,
    folds: usize,
    seed: u64,
    per_fold_auc: &'a [f64],
    pooled_auc: f64,
    in_sample_auc: f64,
    degrees_of_freedom: usize,
    residual_variance: f64,
    regularized: bool,
    /// Intercept first; estimates refer to z-scored features.
    coefficients: Vec<Coefficient<'a>>,
    significant_regions: &'a [String],
}

fn parse_list<T: Copy>(
    s: &str,
    all: &[T],
    parse: impl Fn(&str) -> Result<T, regionwise_core::stats::StatsError>,
) -> Result<Vec<T>> {
    if s.eq_ignore_ascii_case("all") {
        Ok(all.to_vec())
    } else {
        s.split(',').map(|p| Ok(parse(p.trim())?)).collect()
    }
}

/// Join manifest and report rows by subject id, in manifest order.
pub fn build_table(manifest: &[ManifestRow], report: &[ReportRow]) -> Result<CohortTable> {
    let by_id: HashMap<&str, &ReportRow> = report.iter().map(|r| (r.subject_id.as_str(), r)).collect();
    if manifest.len() != report.len() {
        bail!("report has {} subjects but manifest has {}", report.len(), manifest.len());
    }
    let mut rows = Vec::with_capacity(manifest.len());
    for m in manifest {
        let Some(r) = by_id.get(m.subject_id.as_str()) else {
            bail!("subject `{}` is in the manifest but not in the report", m.subject_id);
        };
        rows.push(CohortRow {
            subject_id: m.subject_id.clone(),
            diagnosis: m.diagnosis,
            regional_wmh: r.regional_mm3,
            global_wmh: r.global_mm3,
            brain_volumes: m.brain_volumes,
            reference_wmh: m.reference_wmh,
        });
    }
    Ok(CohortTable::new(rows)?)
}

pub fn run(args: &CohortArgs) -> Result<i32> {
    let tasks = parse_list(&args.task, &Task::ALL, Task::parse)?;
    let kinds = parse_list(&args.features, &FeatureKind::ALL, FeatureKind::parse)?;
    let table = build_table(&read_manifest(&args.manifest)?, &read_report(&args.report)?)?;

    let mut summary = String::from("task,features,n_subjects,pooled_auc,in_sample_auc,significant_features\n");
    for &task in &tasks {
        let mut reports = Vec::with_capacity(kinds.len());
        for &kind in &kinds {
            let r = evaluate_task(&table, task, kind, args.folds, args.seed)?;
            let stem = format!("{}_{}", task.as_str(), kind.as_str());
            write_bytes(&args.out_dir.join(format!("{stem}.json")), task_json(&r)?.as_bytes())?;
            write_bytes(&args.out_dir.join(format!("{stem}_roc.csv")), roc_csv(&r).as_bytes())?;
            writeln!(
                summary,
                "{},{},{},{},{},{}",
                task.as_str(),
                kind.as_str(),
                r.labels.len(),
                r.pooled_auc,
                r.in_sample_auc,
                r.significant_regions.join(";")
            )?;
            println!(
                "{} {:<8} pooled_auc={:.4} in_sample_auc={:.4}",
                task.as_str(),
                kind.as_str(),
                r.pooled_auc,
                r.in_sample_auc
            );
            reports.push(r);
        }
        write_roc_svg(&args.out_dir.join(format!("{}_roc.svg", task.as_str())), task, &reports)?;
    }
    write_bytes(&args.out_dir.join("summary.csv"), summary.as_bytes())?;
    Ok(EXIT_OK)
}

fn task_json(r: &TaskReport) -> Result<String> {
    let m = &r.model;
    let names = std::iter::once("intercept").chain(r.feature_names.iter().map(String::as_str));
    let estimates = std::iter::once(m.intercept).chain(m.coefficients.iter().copied());
    let coefficients = names
        .zip(estimates)
        .enumerate()
        .map(|(j, (feature, estimate))| Coefficient {
            feature,
            estimate,
            standard_error: m.standard_errors[j],
            t_statistic: m.t_statistics[j],
            p_value: m.p_values[j],
        })
        .collect();
    let (pos, neg) = r.task.classes();
    let doc = TaskJson {
        task: r.task,
        feature_kind: r.feature_kind,
        positive_class: pos.as_str(),
        negative_class: neg.as_str(),
        n_subjects: r.labels.len(),
        n_positive: r.labels.iter().filter(|&&l| l).count(),
        folds: r.k,
        seed: r.seed,
        per_fold_auc: &r.per_fold_auc,
        pooled_auc: r.pooled_auc,
        in_sample_auc: r.in_sample_auc,
        degrees_of_freedom: m.degrees_of_freedom,
        residual_variance: m.residual_variance,
        regularized: m.regularized,
        coefficients,
        significant_regions: &r.significant_regions,
    };
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

fn roc_csv(r: &TaskReport) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for (t, (fpr, tpr)) in r.pooled_roc.thresholds.iter().zip(&r.pooled_roc.points) {
        writeln!(s, "{t},{fpr},{tpr}").unwrap();
    }
    s
}

fn write_roc_svg(path: &Path, task: Task, reports: &[TaskReport]) -> Result<()> {
    let (pos, neg) = task.classes();
    let title = format!("ROC: {} vs {} (pooled {}-fold CV)", pos.as_str(), neg.as_str(), reports.first().map_or(0, |r| r.k));
    let mut plot = Plot::new(&title, "False positive rate", "True positive rate", (0.0, 1.0), (0.0, 1.0));
    plot.polyline(&[(0.0, 0.0), (1.0, 1.0)], "#999999", true);
    for (i, r) in reports.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        plot.polyline(&r.pooled_roc.points, color, false);
        plot.legend_entry(&format!("{} (AUC {:.3})", r.feature_kind.as_str(), r.pooled_auc), color);
    }
    write_bytes(path, plot.finish().as_bytes())
}
