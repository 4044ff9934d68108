use std::collections::HashMap;
use std::fmt::Write as _;

use anyhow::{bail, Result};
use regionwise_core::stats::{bland_altman, Diagnosis};

use crate::svg::{Plot, DIAGNOSIS_COLORS};
use crate::tables::{read_manifest, read_report, write_bytes};
use crate::{BlandAltmanArgs, EXIT_OK};

pub fn run(args: &BlandAltmanArgs) -> Result<i32> {
    let manifest = read_manifest(&args.manifest)?;
    let report = read_report(&args.report)?;
    let predicted: HashMap<&str, f64> = report.iter().map(|r| (r.subject_id.as_str(), r.global_mm3)).collect();

    let mut subjects = Vec::new();
    for m in &manifest {
        let Some(reference) = m.reference_wmh else { continue };
        let Some(&pred) = predicted.get(m.subject_id.as_str()) else {
            bail!("subject `{}` has a reference volume but no report row", m.subject_id);
        };
        subjects.push((m.subject_id.as_str(), m.diagnosis, pred, reference));
    }
    if subjects.len() < 2 {
        bail!("need reference_wmh_mm3 for at least 2 subjects, found {}", subjects.len());
    }
    let pred: Vec<f64> = subjects.iter().map(|s| s.2).collect();
    let refs: Vec<f64> = subjects.iter().map(|s| s.3).collect();
    let ba = bland_altman(&pred, &refs)?;

    let mut csv = String::from(
        "subject_id,diagnosis,predicted_mm3,reference_mm3,mean_mm3,difference_mm3,bias_mm3,loa_low_mm3,loa_high_mm3\n",
    );
    let mut points = Vec::with_capacity(subjects.len());
    for &(id, d, p, r) in &subjects {
        let (mean, diff) = ((p + r) / 2.0, p - r);
        writeln!(csv, "{id},{},{p},{r},{mean},{diff},{},{},{}", d.as_str(), ba.bias, ba.loa_low, ba.loa_high)?;
        points.push((mean, diff, d));
    }
    write_bytes(&args.out_csv, csv.as_bytes())?;

    let (xmin, xmax) = range(points.iter().map(|p| p.0));
    let (ymin, ymax) = range(points.iter().map(|p| p.1).chain([ba.loa_low, ba.loa_high, 0.0]));
    let pad = 0.1 * (ymax - ymin).max(1.0);
    let mut plot = Plot::new(
        "Bland–Altman: predicted vs reference lesion volume",
        "Mean of predicted and reference (mm³)",
        "Predicted − reference (mm³)",
        (xmin, xmax),
        (ymin - pad, ymax + pad),
    );
    for &(x, y, d) in &points {
        plot.point(x, y, DIAGNOSIS_COLORS[d.index()]);
    }
    plot.hline(ba.bias, "#000000", &format!("bias {:.2}", ba.bias));
    plot.hline(ba.loa_low, "#555555", &format!("−1.96 SD {:.2}", ba.loa_low));
    plot.hline(ba.loa_high, "#555555", &format!("+1.96 SD {:.2}", ba.loa_high));
    for d in Diagnosis::ALL {
        plot.legend_entry(d.as_str(), DIAGNOSIS_COLORS[d.index()]);
    }
    write_bytes(&args.out_svg, plot.finish().as_bytes())?;

    println!(
        "n={} bias={} sd={} loa=[{}, {}] within_loa={}",
        ba.n, ba.bias, ba.sd_diff, ba.loa_low, ba.loa_high, ba.fraction_within_loa
    );
    Ok(EXIT_OK)
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}
