//! Volumetric data model and NIfTI-1 I/O.
//!
//! A [`Volume`] is a dense 3D scalar grid stored in x-fastest order together
//! with its voxel spacing and voxel-index to world (mm) affine. Voxel values
//! are always held as `f64`, whatever the on-disk datatype.

mod nifti;

use std::collections::BTreeSet;
use std::path::PathBuf;

use thiserror::Error;

pub use nifti::{read_nifti, write_nifti, write_nifti_as, DataType};

pub type Mat4 = [[f64; 4]; 4];

/// Default tolerance (mm) for [`validate_geometry`].
pub const GEOMETRY_TOL: f64 = 1e-3;

/// Allowed deviation of a per-voxel channel sum from 1 in a [`ProbabilityStack`].
pub const PROB_SUM_TOL: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid NIfTI file: {0}")]
    Format(String),
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("unsupported dimensionality: {0}")]
    Dimensionality(String),
    #[error("value out of range for output datatype: {0}")]
    Range(String),
    #[error("invalid volume: {0}")]
    Invalid(String),
    #[error("geometry mismatch: {0}")]
    Geometry(String),
    #[error("channel sum {sum} at voxel {voxel} is outside 1 ± {PROB_SUM_TOL}")]
    Normalization { voxel: usize, sum: f64 },
}

/// How the voxel values of a volume are to be interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Intent {
    Intensity,
    Probability,
    Mask,
    Labels,
}

impl Intent {
    pub fn as_str(self) -> &'static str {
        match self {
            Intent::Intensity => "intensity",
            Intent::Probability => "probability",
            Intent::Mask => "mask",
            Intent::Labels => "labels",
        }
    }

    pub fn parse(s: &str) -> Option<Intent> {
        match s {
            "intensity" => Some(Intent::Intensity),
            "probability" => Some(Intent::Probability),
            "mask" => Some(Intent::Mask),
            "labels" => Some(Intent::Labels),
            _ => None,
        }
    }

    fn check(self, v: f64) -> bool {
        if !v.is_finite() {
            return false;
        }
        match self {
            Intent::Intensity => true,
            Intent::Probability => (0.0..=1.0).contains(&v),
            Intent::Mask => v == 0.0 || v == 1.0,
            Intent::Labels => v >= 0.0 && v.fract() == 0.0,
        }
    }
}

/// Grid shape and placement of a volume, without its voxel data.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Voxel index to world (mm).
    pub affine: Mat4,
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], affine: Mat4) -> Result<Self, VolumeError> {
        if dims.contains(&0) {
            return Err(VolumeError::Invalid(format!("dims must be positive, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(VolumeError::Invalid(format!("spacing must be positive, got {spacing:?}")));
        }
        if affine.iter().flatten().any(|v| !v.is_finite()) {
            return Err(VolumeError::Invalid("affine has non-finite entries".into()));
        }
        Ok(Geometry { dims, spacing, affine })
    }

    /// Axis-aligned geometry with the affine `diag(spacing)` and zero origin.
    pub fn axis_aligned(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self, VolumeError> {
        Geometry::new(dims, spacing, diagonal_affine(spacing))
    }

    pub fn num_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// Linear index of voxel `(x, y, z)`, x fastest.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    /// Inverse of [`Geometry::index`].
    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let x = i % self.dims[0];
        let yz = i / self.dims[0];
        [x, yz % self.dims[1], yz / self.dims[1]]
    }

    /// World coordinate (mm) of a voxel index.
    pub fn voxel_to_world(&self, p: [f64; 3]) -> [f64; 3] {
        let a = &self.affine;
        let mut out = [0.0; 3];
        for (r, o) in out.iter_mut().enumerate() {
            *o = a[r][0] * p[0] + a[r][1] * p[1] + a[r][2] * p[2] + a[r][3];
        }
        out
    }

    /// World coordinate of the grid center.
    pub fn world_center(&self) -> [f64; 3] {
        let c = [(self.dims[0] as f64 - 1.0) / 2.0, (self.dims[1] as f64 - 1.0) / 2.0, (self.dims[2] as f64 - 1.0) / 2.0];
        self.voxel_to_world(c)
    }

    /// Dims equal exactly, spacing and affine entries within `tol`.
    pub fn matches(&self, other: &Geometry, tol: f64) -> bool {
        self.dims == other.dims
            && self.spacing.iter().zip(&other.spacing).all(|(a, b)| (a - b).abs() <= tol)
            && self.affine.iter().flatten().zip(other.affine.iter().flatten()).all(|(a, b)| (a - b).abs() <= tol)
    }
}

pub fn diagonal_affine(spacing: [f64; 3]) -> Mat4 {
    [[spacing[0], 0.0, 0.0, 0.0], [0.0, spacing[1], 0.0, 0.0], [0.0, 0.0, spacing[2], 0.0], [0.0, 0.0, 0.0, 1.0]]
}

/// A 3D scalar image. Immutable once constructed.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    geometry: Geometry,
    data: Vec<f64>,
    intent: Intent,
}

impl Volume {
    pub fn new(geometry: Geometry, data: Vec<f64>, intent: Intent) -> Result<Self, VolumeError> {
        if data.len() != geometry.num_voxels() {
            return Err(VolumeError::Invalid(format!("data length {} does not match dims {:?}", data.len(), geometry.dims)));
        }
        if let Some((i, v)) = data.iter().enumerate().find(|(_, v)| !intent.check(**v)) {
            return Err(VolumeError::Invalid(format!("voxel {i} has value {v}, not allowed for intent {}", intent.as_str())));
        }
        Ok(Volume { geometry, data, intent })
    }

    pub fn filled(geometry: Geometry, value: f64, intent: Intent) -> Result<Self, VolumeError> {
        let n = geometry.num_voxels();
        Volume::new(geometry, vec![value; n], intent)
    }

    /// Re-tag the volume with another intent, validating its values.
    pub fn with_intent(self, intent: Intent) -> Result<Self, VolumeError> {
        Volume::new(self.geometry, self.data, intent)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geometry.spacing
    }

    pub fn affine(&self) -> &Mat4 {
        &self.geometry.affine
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn intent(&self) -> Intent {
        self.intent
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.geometry.index(x, y, z)]
    }

    pub fn voxel_volume(&self) -> f64 {
        self.geometry.voxel_volume()
    }

    /// Population variance of the voxel values.
    pub fn variance(&self) -> f64 {
        let n = self.data.len() as f64;
        let mean = self.data.iter().sum::<f64>() / n;
        self.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
    }
}

/// True iff dims agree exactly and every spacing and affine entry differs by
/// at most `tol`.
pub fn validate_geometry(a: &Volume, b: &Volume, tol: f64) -> bool {
    a.geometry.matches(&b.geometry, tol)
}

/// An integer parcellation: 0 is background, `1..=num_regions` are regions.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVolume {
    volume: Volume,
    num_regions: u32,
    region_ids: BTreeSet<u32>,
}

impl LabelVolume {
    pub fn new(volume: Volume, num_regions: u32) -> Result<Self, VolumeError> {
        let volume = if volume.intent() == Intent::Labels { volume } else { volume.with_intent(Intent::Labels)? };
        let mut region_ids = BTreeSet::new();
        for &v in volume.data() {
            if v > num_regions as f64 {
                return Err(VolumeError::Invalid(format!("label {v} exceeds the maximum region id {num_regions}")));
            }
            if v > 0.0 {
                region_ids.insert(v as u32);
            }
        }
        Ok(LabelVolume { volume, num_regions, region_ids })
    }

    pub fn from_labels(geometry: Geometry, labels: &[u32], num_regions: u32) -> Result<Self, VolumeError> {
        let data = labels.iter().map(|&l| l as f64).collect();
        LabelVolume::new(Volume::new(geometry, data, Intent::Labels)?, num_regions)
    }

    pub fn volume(&self) -> &Volume {
        &self.volume
    }

    pub fn into_volume(self) -> Volume {
        self.volume
    }

    pub fn geometry(&self) -> &Geometry {
        self.volume.geometry()
    }

    pub fn num_regions(&self) -> u32 {
        self.num_regions
    }

    /// Non-zero labels present in the volume.
    pub fn region_ids(&self) -> &BTreeSet<u32> {
        &self.region_ids
    }

    pub fn label(&self, i: usize) -> u32 {
        self.volume.data()[i] as u32
    }

    pub fn labels(&self) -> impl Iterator<Item = u32> + '_ {
        self.volume.data().iter().map(|&v| v as u32)
    }
}

/// Per-class probability channels sharing one geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityStack {
    channels: Vec<Volume>,
    class_names: Vec<String>,
}

impl ProbabilityStack {
    pub fn new(channels: Vec<Volume>, class_names: Vec<String>) -> Result<Self, VolumeError> {
        if channels.is_empty() {
            return Err(VolumeError::Invalid("probability stack needs at least one channel".into()));
        }
        if channels.len() != class_names.len() {
            return Err(VolumeError::Invalid(format!("{} channels but {} class names", channels.len(), class_names.len())));
        }
        for (c, ch) in channels.iter().enumerate() {
            if ch.intent() != Intent::Probability {
                return Err(VolumeError::Invalid(format!(
                    "channel {c} has intent {}, expected probability",
                    ch.intent().as_str()
                )));
            }
            if !validate_geometry(&channels[0], ch, GEOMETRY_TOL) {
                return Err(VolumeError::Geometry(format!("channel {c} does not match the geometry of channel 0")));
            }
        }
        for i in 0..channels[0].len() {
            let sum: f64 = channels.iter().map(|ch| ch.data()[i]).sum();
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(VolumeError::Normalization { voxel: i, sum });
            }
        }
        Ok(ProbabilityStack { channels, class_names })
    }

    /// Two-class stack `[1 - p, p]` built from a single foreground probability map.
    pub fn binary(foreground: Volume, background_name: &str, foreground_name: &str) -> Result<Self, VolumeError> {
        let bg: Vec<f64> = foreground.data().iter().map(|p| 1.0 - p).collect();
        let bg = Volume::new(foreground.geometry().clone(), bg, Intent::Probability)?;
        ProbabilityStack::new(vec![bg, foreground], vec![background_name.to_string(), foreground_name.to_string()])
    }

    pub fn channels(&self) -> &[Volume] {
        &self.channels
    }

    pub fn channel(&self, c: usize) -> &Volume {
        &self.channels[c]
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.channels.len()
    }

    pub fn geometry(&self) -> &Geometry {
        self.channels[0].geometry()
    }
}
