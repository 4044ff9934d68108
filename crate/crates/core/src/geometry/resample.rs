use crate::volio::{Geometry, Intent, Mat4, Volume};

use super::{invert_affine, mat_mul, AffineTransform, GeometryError};

/// Coordinates within this distance of an integer are snapped to it, so
/// that identity resampling reproduces the source exactly despite rounding
/// in the composed voxel-to-voxel matrix.
const SNAP: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolation {
    Linear,
    Nearest,
}

/// Matrix taking target voxel indices to source voxel coordinates:
/// `inv(src.affine) · inv(t) · target.affine`.
pub(crate) fn voxel_map(src: &Geometry, t: &AffineTransform, target: &Geometry) -> Result<Mat4, GeometryError> {
    let src_inv = invert_affine(&src.affine)?;
    let t_inv = t.invert()?;
    Ok(mat_mul(&src_inv, &mat_mul(t_inv.matrix(), &target.affine)))
}

#[inline]
fn snap(c: f64) -> f64 {
    let r = c.round();
    if (c - r).abs() <= SNAP {
        r
    } else {
        c
    }
}

/// Sampler over a source grid, shared by [`resample`] and the registration
/// cost so both follow the same out-of-field convention.
pub(crate) struct Sampler<'a> {
    data: &'a [f64],
    dims: [usize; 3],
}

impl<'a> Sampler<'a> {
    pub(crate) fn new(data: &'a [f64], dims: [usize; 3]) -> Self {
        Sampler { data, dims }
    }

    #[inline]
    fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[x + self.dims[0] * (y + self.dims[1] * z)]
    }

    /// Trilinear interpolation; 0 outside `[0, dim - 1]` on any axis.
    #[inline]
    pub(crate) fn linear(&self, c: [f64; 3]) -> f64 {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for k in 0..3 {
            let ck = snap(c[k]);
            let max = (self.dims[k] - 1) as f64;
            if !(ck >= 0.0 && ck <= max) {
                return 0.0;
            }
            let f = ck.floor();
            // On the upper face the lower corner is dim - 2 with weight 1 on dim - 1.
            let b = if f >= max && self.dims[k] > 1 { max - 1.0 } else { f };
            base[k] = b as usize;
            frac[k] = ck - b;
        }
        let [x0, y0, z0] = base;
        let step = |k: usize| usize::from(self.dims[k] > 1);
        let (x1, y1, z1) = (x0 + step(0), y0 + step(1), z0 + step(2));
        let [fx, fy, fz] = frac;

        let c00 = self.at(x0, y0, z0) * (1.0 - fx) + self.at(x1, y0, z0) * fx;
        let c10 = self.at(x0, y1, z0) * (1.0 - fx) + self.at(x1, y1, z0) * fx;
        let c01 = self.at(x0, y0, z1) * (1.0 - fx) + self.at(x1, y0, z1) * fx;
        let c11 = self.at(x0, y1, z1) * (1.0 - fx) + self.at(x1, y1, z1) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        c0 * (1.0 - fz) + c1 * fz
    }

    /// Nearest voxel with ties rounded half-up per axis; 0 outside the grid.
    #[inline]
    pub(crate) fn nearest(&self, c: [f64; 3]) -> f64 {
        let mut idx = [0usize; 3];
        for k in 0..3 {
            let r = (snap(c[k]) + 0.5).floor();
            if !(r >= 0.0 && r < self.dims[k] as f64) {
                return 0.0;
            }
            idx[k] = r as usize;
        }
        self.at(idx[0], idx[1], idx[2])
    }
}

/// Resample `src` onto `target`. `t` maps source world coordinates to
/// target world coordinates; each target voxel pulls its value from
/// `inv(t)` of its world position. Out-of-field voxels are 0.
///
/// Labels and masks must use [`Interpolation::Nearest`].
pub fn resample(src: &Volume, t: &AffineTransform, target: &Geometry, mode: Interpolation) -> Result<Volume, GeometryError> {
    if mode == Interpolation::Linear && matches!(src.intent(), Intent::Labels | Intent::Mask) {
        return Err(GeometryError::Mode(format!("linear interpolation is not allowed on a {} volume", src.intent().as_str())));
    }
    let m = voxel_map(src.geometry(), t, target)?;
    let sampler = Sampler::new(src.data(), src.dims());
    let data = (0..target.num_voxels())
        .map(|i| {
            let [x, y, z] = target.coords(i);
            let c = super::apply_mat(&m, [x as f64, y as f64, z as f64]);
            match mode {
                Interpolation::Linear => sampler.linear(c),
                Interpolation::Nearest => sampler.nearest(c),
            }
        })
        .collect();
    Ok(Volume::new(target.clone(), data, src.intent())?)
}
