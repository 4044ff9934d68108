//! Affine transforms, resampling, affine registration and atlas propagation.

mod register;
mod resample;

use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::volio::{Geometry, LabelVolume, Mat4, VolumeError};

pub use register::{register_affine, LevelTrace, RegistrationConfig, RegistrationResult};
pub use resample::{resample, Interpolation};

/// Matrices with `|det|` of the linear block at or below this are singular.
pub const SINGULAR_DET: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("transform is singular (|det| = {0:e})")]
    Singular(f64),
    #[error("transform matrix is not affine: {0}")]
    NotAffine(String),
    #[error("interpolation mode: {0}")]
    Mode(String),
    #[error("registration input: {0}")]
    RegistrationInput(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("cannot parse transform: {0}")]
    Parse(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// A world (mm) to world (mm) affine map with fixed bottom row `(0, 0, 0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineTransform {
    m: Mat4,
}

impl AffineTransform {
    pub fn identity() -> Self {
        AffineTransform { m: identity4() }
    }

    /// Validates the bottom row and invertibility.
    pub fn from_matrix(m: Mat4) -> Result<Self, GeometryError> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::NotAffine("non-finite entry".into()));
        }
        if m[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(GeometryError::NotAffine(format!("bottom row is {:?}", m[3])));
        }
        let det = det3(&m);
        if det.abs() <= SINGULAR_DET {
            return Err(GeometryError::Singular(det.abs()));
        }
        Ok(AffineTransform { m })
    }

    pub fn translation(t: [f64; 3]) -> Self {
        let mut m = identity4();
        for i in 0..3 {
            m[i][3] = t[i];
        }
        AffineTransform { m }
    }

    pub fn scale(s: [f64; 3]) -> Result<Self, GeometryError> {
        let mut m = identity4();
        for i in 0..3 {
            m[i][i] = s[i];
        }
        AffineTransform::from_matrix(m)
    }

    /// Map `p ↦ A (p - center) + center + t`.
    pub fn about_center(linear: [[f64; 3]; 3], translation: [f64; 3], center: [f64; 3]) -> Result<Self, GeometryError> {
        let mut m = identity4();
        for i in 0..3 {
            let mut shift = center[i] + translation[i];
            for j in 0..3 {
                m[i][j] = linear[i][j];
                shift -= linear[i][j] * center[j];
            }
            m[i][3] = shift;
        }
        AffineTransform::from_matrix(m)
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.m
    }

    pub fn apply_point(&self, p: [f64; 3]) -> [f64; 3] {
        apply_mat(&self.m, p)
    }

    /// `a ∘ b`: the map `p ↦ a(b(p))`.
    pub fn compose(a: &AffineTransform, b: &AffineTransform) -> AffineTransform {
        AffineTransform { m: mat_mul(&a.m, &b.m) }
    }

    pub fn invert(&self) -> Result<AffineTransform, GeometryError> {
        invert_affine(&self.m).map(|m| AffineTransform { m })
    }

    /// Parse the 4-line, 4-numbers-per-line row-major text format.
    pub fn parse(text: &str) -> Result<Self, GeometryError> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if rows.len() != 4 {
            return Err(GeometryError::Parse(format!("expected 4 rows, found {}", rows.len())));
        }
        let mut m = [[0.0; 4]; 4];
        for (r, line) in rows.iter().enumerate() {
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() != 4 {
                return Err(GeometryError::Parse(format!("row {} has {} values, expected 4", r + 1, vals.len())));
            }
            for (c, v) in vals.iter().enumerate() {
                m[r][c] = v.parse().map_err(|_| GeometryError::Parse(format!("bad number {v:?} in row {}", r + 1)))?;
            }
        }
        AffineTransform::from_matrix(m)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, GeometryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| GeometryError::Io { path: path.to_path_buf(), source })?;
        AffineTransform::parse(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), GeometryError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_string()).map_err(|source| GeometryError::Io { path: path.to_path_buf(), source })
    }
}

impl Default for AffineTransform {
    fn default() -> Self {
        AffineTransform::identity()
    }
}

/// Row-major text, one row per line. `f64` `Display` is shortest round-trip,
/// so `parse(to_string())` is exact.
impl fmt::Display for AffineTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.m {
            writeln!(f, "{} {} {} {}", row[0], row[1], row[2], row[3])?;
        }
        Ok(())
    }
}

pub(crate) fn identity4() -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub(crate) fn apply_mat(m: &Mat4, p: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (r, o) in out.iter_mut().enumerate() {
        *o = m[r][0] * p[0] + m[r][1] * p[1] + m[r][2] * p[2] + m[r][3];
    }
    out
}

pub(crate) fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn det3(m: &Mat4) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Inverse of an affine matrix via the adjugate of its linear block.
/// The bottom row of the result is exactly `(0, 0, 0, 1)`.
pub(crate) fn invert_affine(m: &Mat4) -> Result<Mat4, GeometryError> {
    let det = det3(m);
    if !(det.abs() > SINGULAR_DET) {
        return Err(GeometryError::Singular(det.abs()));
    }
    let mut inv = [[0.0; 4]; 4];
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    inv[0][0] = cof(1, 2, 1, 2) / det;
    inv[0][1] = -cof(0, 2, 1, 2) / det;
    inv[0][2] = cof(0, 1, 1, 2) / det;
    inv[1][0] = -cof(1, 2, 0, 2) / det;
    inv[1][1] = cof(0, 2, 0, 2) / det;
    inv[1][2] = -cof(0, 1, 0, 2) / det;
    inv[2][0] = cof(1, 2, 0, 1) / det;
    inv[2][1] = -cof(0, 2, 0, 1) / det;
    inv[2][2] = cof(0, 1, 0, 1) / det;
    for i in 0..3 {
        inv[i][3] = -(inv[i][0] * m[0][3] + inv[i][1] * m[1][3] + inv[i][2] * m[2][3]);
    }
    inv[3][3] = 1.0;
    Ok(inv)
}

/// Carry atlas labels into subject space: nearest-neighbour resampling of
/// `atlas` through `t` (atlas world to subject world) onto `subject`.
pub fn propagate_atlas(atlas: &LabelVolume, t: &AffineTransform, subject: &Geometry) -> Result<LabelVolume, GeometryError> {
    let out = resample(atlas.volume(), t, subject, Interpolation::Nearest)?;
    Ok(LabelVolume::new(out, atlas.num_regions())?)
}
