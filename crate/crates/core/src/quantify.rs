//! Probability fusion, lesion binarization and regional lesion load.

use std::fmt::Write as _;

use thiserror::Error;

use crate::volio::{validate_geometry, Intent, LabelVolume, ProbabilityStack, Volume, VolumeError, GEOMETRY_TOL};
use crate::NUM_REGIONS;

#[derive(Debug, Error)]
pub enum QuantifyError {
    #[error("input: {0}")]
    Input(String),
    #[error("geometry mismatch: {0}")]
    Geometry(String),
    #[error("parameter: {0}")]
    Parameter(String),
    #[error("label {0} exceeds the {NUM_REGIONS} atlas regions")]
    Label(u32),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionResult {
    /// Per-voxel argmax class index.
    pub label_map: LabelVolume,
    pub fused_probs: ProbabilityStack,
}

/// Average two modality stacks channel-wise and take the per-voxel argmax.
/// Ties go to the lowest class index.
pub fn fuse_probability_maps(flair: &ProbabilityStack, t1: &ProbabilityStack) -> Result<FusionResult, QuantifyError> {
    if flair.class_names() != t1.class_names() {
        return Err(QuantifyError::Input(format!("class lists differ: {:?} vs {:?}", flair.class_names(), t1.class_names())));
    }
    if !t1.channels().iter().all(|c| validate_geometry(flair.channel(0), c, GEOMETRY_TOL)) {
        return Err(QuantifyError::Geometry("FLAIR and T1 probability maps are not co-registered".into()));
    }

    let geometry = flair.geometry().clone();
    let fused: Vec<Volume> = flair
        .channels()
        .iter()
        .zip(t1.channels())
        .map(|(a, b)| {
            let data = a.data().iter().zip(b.data()).map(|(x, y)| (x + y) / 2.0).collect();
            Volume::new(geometry.clone(), data, Intent::Probability)
        })
        .collect::<Result<_, _>>()?;

    let labels: Vec<u32> = (0..geometry.num_voxels())
        .map(|i| {
            let mut best = 0;
            for c in 1..fused.len() {
                if fused[c].data()[i] > fused[best].data()[i] {
                    best = c;
                }
            }
            best as u32
        })
        .collect();

    let num_classes = fused.len() as u32;
    let fused_probs = ProbabilityStack::new(fused, flair.class_names().to_vec())?;
    let label_map = LabelVolume::from_labels(geometry, &labels, num_classes - 1)?;
    Ok(FusionResult { label_map, fused_probs })
}

/// Lesion mask: 1 where `prob >= threshold`.
pub fn binarize_lesions(prob: &Volume, threshold: f64) -> Result<Volume, QuantifyError> {
    if prob.intent() != Intent::Probability {
        return Err(QuantifyError::Input(format!("expected a probability map, got intent {}", prob.intent().as_str())));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(QuantifyError::Parameter(format!("threshold {threshold} is outside (0, 1)")));
    }
    let data = prob.data().iter().map(|&p| if p >= threshold { 1.0 } else { 0.0 }).collect();
    Ok(Volume::new(prob.geometry().clone(), data, Intent::Mask)?)
}

/// Lesion volume of one subject, in total and per atlas region.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionReport {
    pub subject_id: String,
    /// Index `r - 1` holds region `r`.
    pub per_region_mm3: [f64; NUM_REGIONS],
    /// Lesion volume at atlas label 0.
    pub outside_mm3: f64,
    /// Sum of the regional volumes plus `outside_mm3`.
    pub global_mm3: f64,
    pub voxel_volume_mm3: f64,
    pub per_region_voxels: [u64; NUM_REGIONS],
    pub outside_voxels: u64,
}

impl RegionReport {
    /// Volume of region `r` (1-based).
    pub fn region_mm3(&self, r: usize) -> f64 {
        self.per_region_mm3[r - 1]
    }

    pub fn total_voxels(&self) -> u64 {
        self.per_region_voxels.iter().sum::<u64>() + self.outside_voxels
    }

    pub fn csv_header() -> String {
        let mut s = String::from("subject_id,global_mm3,outside_mm3");
        for r in 1..=NUM_REGIONS {
            write!(s, ",region_{r:02}_mm3").unwrap();
        }
        s
    }

    /// One CSV row; volumes printed with 6 significant digits.
    pub fn csv_row(&self) -> String {
        let mut s = format!("{},{},{}", self.subject_id, format_g6(self.global_mm3), format_g6(self.outside_mm3));
        for v in &self.per_region_mm3 {
            s.push(',');
            s.push_str(&format_g6(*v));
        }
        s
    }
}

/// Sum `buckets` then `outside` in a fixed order; shared by the report
/// builder and anyone re-deriving the global volume.
pub fn global_volume(per_region_mm3: &[f64; NUM_REGIONS], outside_mm3: f64) -> f64 {
    let mut total = 0.0;
    for v in per_region_mm3 {
        total += v;
    }
    total + outside_mm3
}

/// Count lesion voxels per atlas region and convert to mm³ using the voxel
/// size of `spacing_source`.
pub fn regional_lesion_load(
    subject_id: &str,
    mask: &Volume,
    regions: &LabelVolume,
    spacing_source: &Volume,
) -> Result<RegionReport, QuantifyError> {
    if mask.intent() != Intent::Mask {
        return Err(QuantifyError::Input(format!("expected a mask, got intent {}", mask.intent().as_str())));
    }
    if !validate_geometry(mask, regions.volume(), GEOMETRY_TOL) {
        return Err(QuantifyError::Geometry("lesion mask and region map are not co-registered".into()));
    }
    let mut per_region_voxels = [0u64; NUM_REGIONS];
    let mut outside_voxels = 0u64;
    for (&m, label) in mask.data().iter().zip(regions.labels()) {
        if label as usize > NUM_REGIONS {
            return Err(QuantifyError::Label(label));
        }
        if m != 1.0 {
            continue;
        }
        match label {
            0 => outside_voxels += 1,
            r => per_region_voxels[r as usize - 1] += 1,
        }
    }
    let voxel_volume_mm3 = spacing_source.voxel_volume();
    let per_region_mm3 = per_region_voxels.map(|n| n as f64 * voxel_volume_mm3);
    let outside_mm3 = outside_voxels as f64 * voxel_volume_mm3;
    Ok(RegionReport {
        subject_id: subject_id.to_string(),
        global_mm3: global_volume(&per_region_mm3, outside_mm3),
        per_region_mm3,
        outside_mm3,
        voxel_volume_mm3,
        per_region_voxels,
        outside_voxels,
    })
}

/// Sørensen–Dice overlap `2|A∩B| / (|A| + |B|)`; 1 when both masks are empty.
pub fn dice_coefficient(a: &Volume, b: &Volume) -> Result<f64, QuantifyError> {
    if !validate_geometry(a, b, GEOMETRY_TOL) {
        return Err(QuantifyError::Geometry("masks are not co-registered".into()));
    }
    let (mut na, mut nb, mut both) = (0u64, 0u64, 0u64);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x == 1.0, y == 1.0);
        na += x as u64;
        nb += y as u64;
        both += (x && y) as u64;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    /// `counts.len() + 1` edges starting at 0, or empty.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Left-closed bins of width `bin_width` starting at 0, just wide enough
/// to hold the largest value.
pub fn load_histogram(values: &[f64], bin_width: f64) -> Result<Histogram, QuantifyError> {
    check_histogram_input(values, bin_width)?;
    let max = values.iter().cloned().fold(0.0, f64::max);
    let bins = if values.is_empty() { 0 } else { (max / bin_width).floor() as usize + 1 };
    load_histogram_with_bins(values, bin_width, bins)
}

fn check_histogram_input(values: &[f64], bin_width: f64) -> Result<(), QuantifyError> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(QuantifyError::Parameter(format!("bin width {bin_width} must be positive")));
    }
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(QuantifyError::Input(format!("lesion load {v} is not a non-negative number")));
    }
    Ok(())
}

/// As [`load_histogram`] with a fixed bin count, so several series can
/// share edges. Values beyond the last bin are an input error.
pub fn load_histogram_with_bins(values: &[f64], bin_width: f64, bins: usize) -> Result<Histogram, QuantifyError> {
    check_histogram_input(values, bin_width)?;
    let mut counts = vec![0u64; bins];
    for &v in values {
        let b = (v / bin_width).floor() as usize;
        match counts.get_mut(b) {
            Some(c) => *c += 1,
            None => return Err(QuantifyError::Input(format!("value {v} beyond the last of {bins} bins"))),
        }
    }
    let edges = if bins == 0 { Vec::new() } else { (0..=bins).map(|i| i as f64 * bin_width).collect() };
    Ok(Histogram { edges, counts })
}

/// `printf("%.6g")`-style formatting.
pub fn format_g6(x: f64) -> String {
    const P: i32 = 6;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-4..P).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (P - 1 - exp) as usize, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
