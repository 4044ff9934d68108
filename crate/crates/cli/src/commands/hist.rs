use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Result};
use regionwise_core::quantify::load_histogram_with_bins;

use crate::svg::{Plot, PALETTE};
use crate::tables::{read_report, write_bytes};
use crate::{HistArgs, EXIT_OK};

fn series_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn run(args: &HistArgs) -> Result<i32> {
    let w = args.bin_width;
    if !(w > 0.0 && w.is_finite()) {
        bail!("--bin-width must be positive, got {w}");
    }
    let mut series = Vec::with_capacity(args.reports.len());
    for path in &args.reports {
        let values: Vec<f64> = read_report(path)?.iter().map(|r| r.global_mm3).collect();
        if values.is_empty() {
            bail!("{} has no subjects", path.display());
        }
        let mut name = series_name(path);
        if series.iter().any(|(n, _): &(String, _)| *n == name) {
            name = path.display().to_string();
        }
        series.push((name, values));
    }

    let max = series.iter().flat_map(|(_, v)| v).fold(0.0, |m: f64, &v| m.max(v));
    let bins = (max / w).floor() as usize + 1;
    let mut csv = String::from("series,bin_low_mm3,bin_high_mm3,count\n");
    let mut hists = Vec::with_capacity(series.len());
    for (name, values) in &series {
        let h = load_histogram_with_bins(values, w, bins)?;
        for (i, c) in h.counts.iter().enumerate() {
            writeln!(csv, "{name},{},{},{c}", h.edges[i], h.edges[i + 1])?;
        }
        hists.push(h);
    }
    let csv_path = args.out_csv.clone().unwrap_or_else(|| args.out_svg.with_extension("csv"));
    write_bytes(&csv_path, csv.as_bytes())?;

    let top = hists.iter().flat_map(|h| &h.counts).copied().max().unwrap_or(0) as f64;
    let mut plot = Plot::new(
        "Distribution of global lesion load",
        "Global lesion volume (mm³)",
        "Subjects",
        (0.0, bins as f64 * w),
        (0.0, top.max(1.0) * 1.1),
    );
    for (i, ((name, values), h)) in series.iter().zip(&hists).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for (b, &c) in h.counts.iter().enumerate() {
            if c > 0 {
                plot.bar(h.edges[b], h.edges[b + 1], c as f64, color);
            }
        }
        plot.legend_entry(&format!("{name} (n = {})", values.len()), color);
    }
    write_bytes(&args.out_svg, plot.finish().as_bytes())?;
    println!("{} series, {bins} bins of {w} mm³", series.len());
    Ok(EXIT_OK)
}
