use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use regionwise_core::geometry::{propagate_atlas, AffineTransform};
use regionwise_core::quantify::{binarize_lesions, fuse_probability_maps, regional_lesion_load, RegionReport};
use regionwise_core::volio::{read_nifti, Intent, LabelVolume, ProbabilityStack, Volume};
use regionwise_core::NUM_REGIONS;

use crate::tables::{read_manifest, write_report, ManifestRow};
use crate::{QuantifyArgs, EXIT_INPUT, EXIT_OK, EXIT_PARTIAL};

pub fn run(args: &QuantifyArgs) -> Result<i32> {
    let rows = read_manifest(&args.manifest)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = args.jobs {
        pool = pool.num_threads(jobs.max(1));
    }
    let pool = pool.build()?;
    let results: Vec<Result<RegionReport>> =
        pool.install(|| rows.par_iter().map(|row| quantify_subject(row, args.threshold)).collect());

    let mut reports = Vec::with_capacity(rows.len());
    let mut failed = 0;
    for (row, res) in rows.iter().zip(results) {
        match res {
            Ok(r) => reports.push(r),
            Err(e) if args.keep_going => {
                failed += 1;
                eprintln!("error: subject {}: {e:#}", row.subject_id);
            }
            Err(e) => {
                eprintln!("error: subject {}: {e:#}", row.subject_id);
                return Ok(EXIT_INPUT);
            }
        }
    }
    write_report(&args.out_report, &reports)?;
    println!("quantified {} of {} subjects", reports.len(), rows.len());
    Ok(if failed == 0 { EXIT_OK } else { EXIT_PARTIAL })
}

fn load(path: &Path) -> Result<Volume> {
    read_nifti(path).with_context(|| format!("cannot load {}", path.display()))
}

fn as_probability(v: Volume, path: &Path) -> Result<Volume> {
    if v.intent() == Intent::Probability {
        return Ok(v);
    }
    v.with_intent(Intent::Probability).with_context(|| format!("{} is not a probability map", path.display()))
}

/// Fuse (when a T1 map is given), binarize, carry the atlas into the
/// subject's space and count lesion volume per region.
pub fn quantify_subject(row: &ManifestRow, threshold: f64) -> Result<RegionReport> {
    let flair = as_probability(load(&row.flair)?, &row.flair)?;
    let lesion_prob = match &row.t1 {
        None => flair,
        Some(t1_path) => {
            let t1 = as_probability(load(t1_path)?, t1_path)?;
            let f = ProbabilityStack::binary(flair, "background", "lesion")?;
            let t = ProbabilityStack::binary(t1, "background", "lesion")?;
            fuse_probability_maps(&f, &t)?.fused_probs.channel(1).clone()
        }
    };
    let mask = binarize_lesions(&lesion_prob, threshold)?;

    let atlas = LabelVolume::new(load(&row.atlas)?, NUM_REGIONS as u32)
        .with_context(|| format!("{} is not a {NUM_REGIONS}-region atlas", row.atlas.display()))?;
    let transform = match &row.affine {
        Some(p) => AffineTransform::read(p).with_context(|| format!("cannot load transform {}", p.display()))?,
        None => AffineTransform::identity(),
    };
    let regions = propagate_atlas(&atlas, &transform, mask.geometry())?;
    Ok(regional_lesion_load(&row.subject_id, &mask, &regions, &mask)?)
}
