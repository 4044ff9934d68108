//! Cohort manifest and region-report CSV files.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use regionwise_core::quantify::{format_g6, RegionReport};
use regionwise_core::stats::Diagnosis;
use regionwise_core::NUM_REGIONS;
use serde::Deserialize;

pub const MANIFEST_COLUMNS: [&str; 11] = [
    "subject_id",
    "diagnosis",
    "lesion_prob_flair_path",
    "lesion_prob_t1_path",
    "atlas_labels_path",
    "affine_path",
    "hippocampus_mm3",
    "csf_mm3",
    "wm_mm3",
    "gm_mm3",
    "reference_wmh_mm3",
];

#[derive(Deserialize)]
struct RawManifestRow {
    subject_id: String,
    diagnosis: String,
    lesion_prob_flair_path: String,
    #[serde(default)]
    lesion_prob_t1_path: Option<String>,
    atlas_labels_path: String,
    #[serde(default)]
    affine_path: Option<String>,
    #[serde(default)]
    hippocampus_mm3: Option<f64>,
    #[serde(default)]
    csf_mm3: Option<f64>,
    #[serde(default)]
    wm_mm3: Option<f64>,
    #[serde(default)]
    gm_mm3: Option<f64>,
    #[serde(default)]
    reference_wmh_mm3: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub subject_id: String,
    pub diagnosis: Diagnosis,
    pub flair: PathBuf,
    pub t1: Option<PathBuf>,
    pub atlas: PathBuf,
    pub affine: Option<PathBuf>,
    /// Hippocampus, CSF, white matter, gray matter.
    pub brain_volumes: Option<[f64; 4]>,
    pub reference_wmh: Option<f64>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn non_empty(s: Option<String>) -> Option<String> {
    s.map(|s| s.trim().to_string()).filter(|s| !s.is_empty())
}

/// Relative paths in a manifest are taken relative to the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text = read_text(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let resolve = |p: String| if Path::new(&p).is_absolute() { PathBuf::from(p) } else { base.join(p) };

    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in reader.deserialize::<RawManifestRow>().enumerate() {
        let line = i + 2;
        let raw = rec.with_context(|| format!("{}: bad manifest row at line {line}", path.display()))?;
        if raw.subject_id.is_empty() {
            bail!("{}: empty subject_id at line {line}", path.display());
        }
        if !seen.insert(raw.subject_id.clone()) {
            bail!("{}: duplicate subject_id `{}`", path.display(), raw.subject_id);
        }
        let diagnosis =
            Diagnosis::parse(&raw.diagnosis).with_context(|| format!("{}: subject `{}`", path.display(), raw.subject_id))?;
        let brain = [raw.hippocampus_mm3, raw.csf_mm3, raw.wm_mm3, raw.gm_mm3];
        let brain_volumes = match brain.iter().filter(|v| v.is_some()).count() {
            0 => None,
            4 => Some(brain.map(|v| v.unwrap())),
            _ => bail!(
                "{}: subject `{}` has only some of hippocampus_mm3, csf_mm3, wm_mm3, gm_mm3",
                path.display(),
                raw.subject_id
            ),
        };
        let volumes = brain_volumes.iter().flatten().chain(raw.reference_wmh_mm3.iter());
        if let Some(v) = volumes.into_iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            bail!("{}: subject `{}` has invalid volume {v}", path.display(), raw.subject_id);
        }
        if raw.lesion_prob_flair_path.is_empty() || raw.atlas_labels_path.is_empty() {
            bail!("{}: subject `{}` lacks a FLAIR map or atlas path", path.display(), raw.subject_id);
        }
        rows.push(ManifestRow {
            subject_id: raw.subject_id,
            diagnosis,
            flair: resolve(raw.lesion_prob_flair_path),
            t1: non_empty(raw.lesion_prob_t1_path).map(resolve),
            atlas: resolve(raw.atlas_labels_path),
            affine: non_empty(raw.affine_path).map(resolve),
            brain_volumes,
            reference_wmh: raw.reference_wmh_mm3,
        });
    }
    if rows.is_empty() {
        bail!("{}: manifest has no subjects", path.display());
    }
    Ok(rows)
}

/// One row of a region-report CSV as read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub subject_id: String,
    pub global_mm3: f64,
    pub outside_mm3: f64,
    pub regional_mm3: [f64; NUM_REGIONS],
}

pub fn report_header() -> Vec<String> {
    RegionReport::csv_header().split(',').map(String::from).collect()
}

pub fn write_report(path: &Path, reports: &[RegionReport]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(report_header())?;
    for r in reports {
        let mut rec = vec![r.subject_id.clone(), format_g6(r.global_mm3), format_g6(r.outside_mm3)];
        rec.extend(r.per_region_mm3.iter().map(|v| format_g6(*v)));
        w.write_record(rec)?;
    }
    write_bytes(path, &w.into_inner()?)
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> =
        reader.headers().with_context(|| format!("{}: unreadable header", path.display()))?.iter().map(String::from).collect();
    if header != report_header() {
        bail!("{}: not a region report (expected columns {})", path.display(), RegionReport::csv_header());
    }
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: bad row at line {}", path.display(), i + 2))?;
        let num = |j: usize| -> Result<f64> {
            let v: f64 = rec[j]
                .parse()
                .with_context(|| format!("{}: `{}` in column {} is not a number", path.display(), &rec[j], header[j]))?;
            if !(v.is_finite() && v >= 0.0) {
                bail!("{}: invalid volume {v} in column {}", path.display(), header[j]);
            }
            Ok(v)
        };
        let mut regional_mm3 = [0.0; NUM_REGIONS];
        for (r, slot) in regional_mm3.iter_mut().enumerate() {
            *slot = num(3 + r)?;
        }
        let row = ReportRow { subject_id: rec[0].to_string(), global_mm3: num(1)?, outside_mm3: num(2)?, regional_mm3 };
        if !seen.insert(row.subject_id.clone()) {
            bail!("{}: duplicate subject_id `{}`", path.display(), row.subject_id);
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAD: &str = "subject_id,diagnosis,lesion_prob_flair_path,atlas_labels_path";

    fn manifest(body: &str) -> Result<Vec<ManifestRow>> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, body).unwrap();
        read_manifest(&p)
    }

    #[test]
    fn optional_columns() {
        let rows = manifest(&format!("{HEAD}\ns1,AD,f.nii,/abs/a.nii\n")).unwrap();
        assert_eq!(rows[0].diagnosis, Diagnosis::Ad);
        assert!(rows[0].flair.ends_with("f.nii") && rows[0].flair.is_absolute());
        assert_eq!(rows[0].atlas, PathBuf::from("/abs/a.nii"));
        assert_eq!((rows[0].t1.clone(), rows[0].brain_volumes, rows[0].reference_wmh), (None, None, None));

        let full = "subject_id,diagnosis,lesion_prob_flair_path,lesion_prob_t1_path,atlas_labels_path,affine_path,\
                    hippocampus_mm3,csf_mm3,wm_mm3,gm_mm3,reference_wmh_mm3\n\
                    s1,cn,f,,a,,1,2,3,4,\ns2,MCI,f,t,a,x.txt,1,2,3,4,7.5\n";
        let rows = manifest(full).unwrap();
        assert_eq!(rows[0].t1, None);
        assert_eq!(rows[0].reference_wmh, None);
        assert_eq!(rows[1].brain_volumes, Some([1.0, 2.0, 3.0, 4.0]));
        assert_eq!(rows[1].reference_wmh, Some(7.5));
        assert!(rows[1].affine.as_ref().unwrap().ends_with("x.txt"));
    }

    #[test]
    fn manifest_errors() {
        assert!(manifest(&format!("{HEAD}\ns1,AD,f,a\ns1,CN,f,a\n")).is_err());
        assert!(manifest(&format!("{HEAD}\ns1,XX,f,a\n")).is_err());
        assert!(manifest(&format!("{HEAD}\n")).is_err());
        assert!(manifest("subject_id,diagnosis\ns1,AD\n").is_err());
        assert!(manifest(&format!("{HEAD},hippocampus_mm3\ns1,AD,f,a,5\n")).is_err());
    }

    #[test]
    fn report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let mut per_region_mm3 = [0.0; NUM_REGIONS];
        per_region_mm3[0] = 2.4;
        per_region_mm3[21] = 1.2;
        let rep = RegionReport {
            subject_id: "sub-1".into(),
            per_region_mm3,
            outside_mm3: 0.0,
            global_mm3: 3.6,
            voxel_volume_mm3: 1.2,
            per_region_voxels: [0; NUM_REGIONS],
            outside_voxels: 0,
        };
        write_report(&p, &[rep]).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("subject_id,global_mm3,outside_mm3,region_01_mm3,"));
        assert!(text.contains("\nsub-1,3.6,0,2.4,"));
        let rows = read_report(&p).unwrap();
        assert_eq!(rows[0].regional_mm3[21], 1.2);
        assert_eq!(rows[0].global_mm3, 3.6);

        fs::write(&p, "subject_id,global_mm3\ns,1\n").unwrap();
        assert!(read_report(&p).is_err());
    }
}
