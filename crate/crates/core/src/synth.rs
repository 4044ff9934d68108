//! Deterministic synthetic data: phantoms, block parcellations, planted
//! lesions and whole cohorts with known per-class effects.
//!
//! Subject `i` of a cohort draws from sub-streams
//! `derive_seed(spec.seed, stream, i)` (see [`crate::rng`]), one stream per
//! purpose, so subjects can be generated in any order or in parallel.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantify::{regional_lesion_load, QuantifyError, RegionReport};
use crate::rng::{derive_seed, seeded};
use crate::stats::{CohortRow, CohortTable, Diagnosis, StatsError};
use crate::volio::{Geometry, Intent, LabelVolume, Volume, VolumeError};
use crate::NUM_REGIONS;

const MIN_DIM: usize = 16;
/// Ellipsoid semi-axes as a fraction of the grid extent.
const PARCEL_SEMI_AXIS: f64 = 0.45;
/// z-slab counts for the three y-bands of each hemisphere (6 + 6 + 5 = 17).
const SLABS_PER_BAND: [usize; 3] = [6, 6, 5];

const STREAM_LESIONS: u64 = 1;
const STREAM_BRAIN: u64 = 2;
const STREAM_REFERENCE: u64 = 3;
const STREAM_PROBABILITY: u64 = 4;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Quantify(#[from] QuantifyError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

fn check_dims(dims: [usize; 3]) -> Result<(), SynthError> {
    if dims.iter().any(|&d| d < MIN_DIM) {
        return Err(SynthError::Parameter(format!("every dim must be at least {MIN_DIM}, got {dims:?}")));
    }
    Ok(())
}

fn ellipsoid_radius2(p: [usize; 3], dims: [usize; 3], axes: [f64; 3]) -> f64 {
    (0..3)
        .map(|k| {
            let c = (dims[k] as f64 - 1.0) / 2.0;
            let u = (p[k] as f64 - c) / axes[k];
            u * u
        })
        .sum()
}

/// Smooth intensity phantom with values in [0, 1].
///
/// A centered ellipsoid whose intensity falls off as `(1 - r²)²` from the
/// center, modulated by a handful of seeded Gaussian bumps so the image has
/// no symmetry for registration to get stuck on. Background is exactly 0.
pub fn make_phantom(dims: [usize; 3], spacing: [f64; 3], seed: u64) -> Result<Volume, SynthError> {
    check_dims(dims)?;
    let geometry = Geometry::axis_aligned(dims, spacing)?;
    let axes = [0.36, 0.32, 0.28].map(|f| f * dims[0].min(dims[1]).min(dims[2]) as f64);

    let mut rng = seeded(seed);
    let bumps: Vec<([f64; 3], f64, f64)> = (0..8)
        .map(|_| {
            let center = [0, 1, 2].map(|k| (dims[k] as f64 - 1.0) / 2.0 + rng.gen_range(-0.6..0.6) * axes[k]);
            let width = rng.gen_range(0.15..0.3) * dims[0] as f64;
            let amp = rng.gen_range(-1.0..1.0);
            (center, width, amp)
        })
        .collect();

    let data = (0..geometry.num_voxels())
        .map(|i| {
            let p = geometry.coords(i);
            let r2 = ellipsoid_radius2(p, dims, axes);
            if r2 >= 1.0 {
                return 0.0;
            }
            let envelope = (1.0 - r2) * (1.0 - r2);
            let texture: f64 = bumps
                .iter()
                .map(|(c, w, a)| {
                    let d2: f64 = (0..3).map(|k| (p[k] as f64 - c[k]).powi(2)).sum();
                    a * (-d2 / (2.0 * w * w)).exp()
                })
                .sum();
            (envelope * (0.8 + 0.2 * texture.tanh())).clamp(0.0, 1.0)
        })
        .collect();
    Ok(Volume::new(geometry, data, Intent::Intensity)?)
}

/// Split the sorted distinct values of `keys` into `groups` contiguous runs
/// of near-equal length; returns the run index of each key.
fn split_runs(keys: &[usize], groups: usize) -> Option<Vec<usize>> {
    let mut distinct: Vec<usize> = keys.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < groups {
        return None;
    }
    let n = distinct.len();
    Some(
        keys.iter()
            .map(|k| {
                let pos = distinct.binary_search(k).unwrap();
                pos * groups / n
            })
            .collect(),
    )
}

/// 34-region block parcellation of the interior ellipsoid.
///
/// The ellipsoid is cut into two hemispheres along x; each hemisphere into
/// three bands of y-slices; the bands into 6, 6 and 5 slabs of z-slices.
/// Labels run 1..=17 in the low-x hemisphere and 18..=34 in the other.
pub fn make_parcellation(dims: [usize; 3], spacing: [f64; 3]) -> Result<LabelVolume, SynthError> {
    check_dims(dims)?;
    let geometry = Geometry::axis_aligned(dims, spacing)?;
    let axes = dims.map(|d| PARCEL_SEMI_AXIS * d as f64);
    let cx = (dims[0] as f64 - 1.0) / 2.0;

    let inside: Vec<usize> =
        (0..geometry.num_voxels()).filter(|&i| ellipsoid_radius2(geometry.coords(i), dims, axes) <= 1.0).collect();
    let mut labels = vec![0u32; geometry.num_voxels()];
    let too_small = || SynthError::Parameter(format!("dims {dims:?} are too small for {NUM_REGIONS} regions"));

    for hemi in 0..2 {
        let voxels: Vec<usize> = inside.iter().copied().filter(|&i| (geometry.coords(i)[0] as f64 > cx) == (hemi == 1)).collect();
        let ys: Vec<usize> = voxels.iter().map(|&i| geometry.coords(i)[1]).collect();
        let bands = split_runs(&ys, SLABS_PER_BAND.len()).ok_or_else(too_small)?;
        let mut offset = 0;
        for (band, &slabs) in SLABS_PER_BAND.iter().enumerate() {
            let members: Vec<usize> = voxels.iter().zip(&bands).filter(|(_, &b)| b == band).map(|(&i, _)| i).collect();
            let zs: Vec<usize> = members.iter().map(|&i| geometry.coords(i)[2]).collect();
            let runs = split_runs(&zs, slabs).ok_or_else(too_small)?;
            for (&i, &s) in members.iter().zip(&runs) {
                labels[i] = (hemi * 17 + offset + s + 1) as u32;
            }
            offset += slabs;
        }
    }

    let lv = LabelVolume::from_labels(geometry, &labels, NUM_REGIONS as u32)?;
    if lv.region_ids().len() != NUM_REGIONS {
        return Err(too_small());
    }
    Ok(lv)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedLesions {
    pub mask: Volume,
    /// Planted voxel count per region (index `r - 1`).
    pub counts: [u64; NUM_REGIONS],
}

/// For each region draw a Poisson count with the given mean and mark that
/// many distinct voxels of the region, chosen uniformly (capped at the
/// region size).
pub fn plant_lesions(
    regions: &LabelVolume,
    per_region_mean: &[f64; NUM_REGIONS],
    seed: u64,
) -> Result<PlantedLesions, SynthError> {
    if let Some(m) = per_region_mean.iter().find(|m| !(**m >= 0.0 && m.is_finite())) {
        return Err(SynthError::Parameter(format!("lesion mean {m} must be non-negative")));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); NUM_REGIONS];
    for (i, l) in regions.labels().enumerate() {
        if (1..=NUM_REGIONS as u32).contains(&l) {
            members[l as usize - 1].push(i);
        }
    }
    let mut rng = seeded(seed);
    let mut data = vec![0.0; regions.geometry().num_voxels()];
    let mut counts = [0u64; NUM_REGIONS];
    for (r, &mean) in per_region_mean.iter().enumerate() {
        if mean == 0.0 {
            continue;
        }
        let draw = Poisson::new(mean).map_err(|e| SynthError::Parameter(e.to_string()))?.sample(&mut rng) as usize;
        let k = draw.min(members[r].len());
        for j in sample(&mut rng, members[r].len(), k) {
            data[members[r][j]] = 1.0;
        }
        counts[r] = k as u64;
    }
    Ok(PlantedLesions { mask: Volume::new(regions.geometry().clone(), data, Intent::Mask)?, counts })
}

/// Per-class mean lesion-voxel counts (CN, MCI, AD) in one region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectRegion {
    pub region: u32,
    pub mean_counts: [f64; 3],
}

/// Per-class Gaussian (CN, MCI, AD) for one brain-structure volume, mm³.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrainVolumeEffect {
    pub mean: [f64; 3],
    pub sd: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    /// Subjects per class: CN, MCI, AD.
    pub n_per_class: [usize; 3],
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub effect_regions: Vec<EffectRegion>,
    /// Mean lesion-voxel count in every region not listed in `effect_regions`.
    pub background_rate: f64,
    /// Hippocampus, CSF, white matter, gray matter.
    pub brain_volume_effects: [BrainVolumeEffect; 4],
    /// SD (mm³) of the additive Gaussian noise on reference volumes.
    pub reference_noise_sd: f64,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        let eff = |mean: [f64; 3], sd: f64| BrainVolumeEffect { mean, sd: [sd; 3] };
        CohortSpec {
            n_per_class: [60, 60, 60],
            dims: [32, 32, 32],
            spacing: [1.0, 1.0, 1.2],
            effect_regions: vec![
                EffectRegion { region: 1, mean_counts: [2.0, 5.0, 10.0] },
                EffectRegion { region: 22, mean_counts: [2.0, 5.0, 10.0] },
            ],
            background_rate: 4.0,
            brain_volume_effects: [
                eff([7200.0, 6700.0, 6000.0], 600.0),
                eff([350_000.0, 375_000.0, 410_000.0], 40_000.0),
                eff([480_000.0, 468_000.0, 450_000.0], 40_000.0),
                eff([620_000.0, 603_000.0, 575_000.0], 45_000.0),
            ],
            reference_noise_sd: 5.0,
            seed: 0,
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Parameter(m));
        check_dims(self.dims)?;
        if self.spacing.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad(format!("spacing must be positive, got {:?}", self.spacing));
        }
        if self.n_per_class.iter().sum::<usize>() == 0 {
            return bad("cohort has no subjects".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.effect_regions {
            if !(1..=NUM_REGIONS as u32).contains(&e.region) {
                return bad(format!("effect region {} is outside 1..={NUM_REGIONS}", e.region));
            }
            if !seen.insert(e.region) {
                return bad(format!("effect region {} listed twice", e.region));
            }
            if e.mean_counts.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
                return bad(format!("region {} has a negative mean count", e.region));
            }
        }
        if !(self.background_rate >= 0.0 && self.background_rate.is_finite()) {
            return bad(format!("background rate {} must be non-negative", self.background_rate));
        }
        for b in &self.brain_volume_effects {
            if b.mean.iter().chain(&b.sd).any(|v| !(*v >= 0.0 && v.is_finite())) {
                return bad("brain volume means and SDs must be non-negative".into());
            }
        }
        if !(self.reference_noise_sd >= 0.0 && self.reference_noise_sd.is_finite()) {
            return bad("reference noise SD must be non-negative".into());
        }
        Ok(())
    }

    /// Spacing rounded to `f32`, so volumes written to NIfTI read back with
    /// the same voxel size.
    pub fn storage_spacing(&self) -> [f64; 3] {
        self.spacing.map(|s| s as f32 as f64)
    }

    fn region_means(&self, class: usize) -> [f64; NUM_REGIONS] {
        let mut m = [self.background_rate; NUM_REGIONS];
        for e in &self.effect_regions {
            m[e.region as usize - 1] = e.mean_counts[class];
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSubject {
    pub index: usize,
    pub subject_id: String,
    pub diagnosis: Diagnosis,
    pub lesions: PlantedLesions,
    pub report: RegionReport,
    pub brain_volumes: [f64; 4],
    pub reference_wmh: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCohort {
    pub spec: CohortSpec,
    pub parcellation: LabelVolume,
    pub subjects: Vec<SynthSubject>,
    pub table: CohortTable,
}

/// Generate the full cohort described by `spec`.
pub fn make_cohort(spec: &CohortSpec) -> Result<SynthCohort, SynthError> {
    spec.validate()?;
    let parcellation = make_parcellation(spec.dims, spec.storage_spacing())?;
    let classes: Vec<Diagnosis> =
        Diagnosis::ALL.iter().zip(spec.n_per_class).flat_map(|(&d, n)| std::iter::repeat_n(d, n)).collect();

    let subjects = classes
        .par_iter()
        .enumerate()
        .map(|(i, &diagnosis)| make_subject(spec, &parcellation, i, diagnosis))
        .collect::<Result<Vec<_>, _>>()?;

    let rows = subjects
        .iter()
        .map(|s| CohortRow {
            subject_id: s.subject_id.clone(),
            diagnosis: s.diagnosis,
            regional_wmh: s.report.per_region_mm3,
            global_wmh: s.report.global_mm3,
            brain_volumes: Some(s.brain_volumes),
            reference_wmh: Some(s.reference_wmh),
        })
        .collect();
    let table = CohortTable::new(rows)?;
    Ok(SynthCohort { spec: spec.clone(), parcellation, subjects, table })
}

fn make_subject(
    spec: &CohortSpec,
    parcellation: &LabelVolume,
    index: usize,
    diagnosis: Diagnosis,
) -> Result<SynthSubject, SynthError> {
    let i = index as u64;
    let subject_id = format!("sub-{:04}", index + 1);
    let class = diagnosis.index();

    let lesions = plant_lesions(parcellation, &spec.region_means(class), derive_seed(spec.seed, STREAM_LESIONS, i))?;
    let report = regional_lesion_load(&subject_id, &lesions.mask, parcellation, &lesions.mask)?;

    let mut rng = seeded(derive_seed(spec.seed, STREAM_BRAIN, i));
    let mut brain_volumes = [0.0; 4];
    for (b, eff) in brain_volumes.iter_mut().zip(&spec.brain_volume_effects) {
        *b = gaussian(&mut rng, eff.mean[class], eff.sd[class]).max(0.0);
    }

    let reference_wmh = if spec.reference_noise_sd == 0.0 {
        report.global_mm3
    } else {
        let mut rng = seeded(derive_seed(spec.seed, STREAM_REFERENCE, i));
        (report.global_mm3 + gaussian(&mut rng, 0.0, spec.reference_noise_sd)).max(0.0)
    };

    Ok(SynthSubject { index, subject_id, diagnosis, lesions, report, brain_volumes, reference_wmh })
}

fn gaussian(rng: &mut impl Rng, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return mean;
    }
    Normal::new(mean, sd).expect("validated SD").sample(rng)
}

impl SynthCohort {
    /// Per-modality lesion probability maps for subject `index`: lesion
    /// voxels get probabilities in [0.55, 0.95] in both modalities, others
    /// stay below 0.5, so fusion followed by a 0.5 threshold recovers the
    /// planted mask exactly. Values are `f32`-exact.
    pub fn probability_maps(&self, index: usize) -> Result<(Volume, Volume), SynthError> {
        let subject = &self.subjects[index];
        let mask = &subject.lesions.mask;
        let mut rng = seeded(derive_seed(self.spec.seed, STREAM_PROBABILITY, index as u64));
        let mut flair = Vec::with_capacity(mask.len());
        let mut t1 = Vec::with_capacity(mask.len());
        for (&m, label) in mask.data().iter().zip(self.parcellation.labels()) {
            let (f, t) = if m == 1.0 {
                (rng.gen_range(0.55f32..0.95), rng.gen_range(0.55f32..0.95))
            } else if label > 0 {
                (0.05f32, 0.1f32)
            } else {
                (0.0, 0.0)
            };
            flair.push(f as f64);
            t1.push(t as f64);
        }
        let g = mask.geometry().clone();
        Ok((Volume::new(g.clone(), flair, Intent::Probability)?, Volume::new(g, t1, Intent::Probability)?))
    }
}
