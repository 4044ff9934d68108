use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use regionwise_core::geometry::AffineTransform;
use regionwise_core::quantify::format_g6;
use regionwise_core::synth::{make_cohort, CohortSpec, SynthCohort};
use regionwise_core::volio::write_nifti;
use serde::Serialize;

use crate::tables::{write_bytes, MANIFEST_COLUMNS};
use crate::{SynthArgs, EXIT_OK};

pub const ATLAS_FILE: &str = "atlas_labels.nii.gz";
pub const AFFINE_FILE: &str = "identity_affine.txt";
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const TRUTH_FILE: &str = "ground_truth.json";
pub const SPEC_FILE: &str = "spec.json";

#[derive(Serialize)]
struct TruthSubject<'a> {
    subject_id: &'a str,
    diagnosis: &'static str,
    /// Lesion voxels planted per region, region 1 first.
    planted_voxels: Vec<u64>,
    outside_voxels: u64,
    global_mm3: f64,
    /// Hippocampus, CSF, white matter, gray matter.
    brain_volumes_mm3: [f64; 4],
    reference_wmh_mm3: f64,
}

#[derive(Serialize)]
struct Truth<'a> {
    seed: u64,
    dims: [usize; 3],
    voxel_volume_mm3: f64,
    subjects: Vec<TruthSubject<'a>>,
}

pub fn run(args: &SynthArgs) -> Result<i32> {
    let mut spec: CohortSpec = match &args.spec {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("{}: invalid cohort spec", p.display()))?
        }
        None => CohortSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let cohort = make_cohort(&spec)?;
    write_cohort(&cohort, &args.out_dir)?;
    println!("wrote {} subjects to {}", cohort.subjects.len(), args.out_dir.display());
    Ok(EXIT_OK)
}

fn subject_files(id: &str) -> (String, String) {
    (format!("subjects/{id}_flair_prob.nii.gz"), format!("subjects/{id}_t1_prob.nii.gz"))
}

/// Volumes, identity transform, manifest, ground truth and the resolved spec.
pub fn write_cohort(cohort: &SynthCohort, out: &Path) -> Result<()> {
    fs::create_dir_all(out.join("subjects")).with_context(|| format!("cannot create {}", out.display()))?;
    write_nifti(cohort.parcellation.volume(), out.join(ATLAS_FILE))?;
    AffineTransform::identity().write(out.join(AFFINE_FILE))?;

    (0..cohort.subjects.len()).into_par_iter().try_for_each(|i| -> Result<()> {
        let (flair, t1) = cohort.probability_maps(i)?;
        let (fp, tp) = subject_files(&cohort.subjects[i].subject_id);
        write_nifti(&flair, out.join(fp))?;
        write_nifti(&t1, out.join(tp))?;
        Ok(())
    })?;

    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(MANIFEST_COLUMNS)?;
    for s in &cohort.subjects {
        let (fp, tp) = subject_files(&s.subject_id);
        let mut rec = vec![s.subject_id.clone(), s.diagnosis.as_str().to_string(), fp, tp, ATLAS_FILE.into(), AFFINE_FILE.into()];
        rec.extend(s.brain_volumes.iter().map(|v| format_g6(*v)));
        rec.push(format_g6(s.reference_wmh));
        w.write_record(rec)?;
    }
    write_bytes(&out.join(MANIFEST_FILE), &w.into_inner()?)?;

    let truth = Truth {
        seed: cohort.spec.seed,
        dims: cohort.spec.dims,
        voxel_volume_mm3: cohort.parcellation.volume().voxel_volume(),
        subjects: cohort
            .subjects
            .iter()
            .map(|s| TruthSubject {
                subject_id: &s.subject_id,
                diagnosis: s.diagnosis.as_str(),
                planted_voxels: s.lesions.counts.to_vec(),
                outside_voxels: s.report.outside_voxels,
                global_mm3: s.report.global_mm3,
                brain_volumes_mm3: s.brain_volumes,
                reference_wmh_mm3: s.reference_wmh,
            })
            .collect(),
    };
    write_bytes(&out.join(TRUTH_FILE), (serde_json::to_string_pretty(&truth)? + "\n").as_bytes())?;
    write_bytes(&out.join(SPEC_FILE), (serde_json::to_string_pretty(&cohort.spec)? + "\n").as_bytes())?;
    Ok(())
}
