//! Intensity-based 12-parameter affine registration.
//!
//! The cost is the mean squared intensity difference between the fixed
//! image and the moving image sampled (trilinear, zero outside) through the
//! current mapping. The mapping is parameterised as the fixed-to-moving
//! sampling map
//!
//! ```text
//! s = A (w - c) + c + d
//! ```
//!
//! with `c` the world center of the fixed image, `A` the 3×3 linear block
//! and `d` the translation. Optimisation is finite-difference gradient
//! descent with backtracking, coarse to fine over a mean-pooled pyramid.
//! The returned transform is the inverse of that map, i.e. it takes moving
//! world coordinates to fixed world coordinates and can be handed straight
//! to [`resample`](super::resample).

use rayon::prelude::*;

use crate::volio::{Geometry, Intent, Mat4, Volume};

use super::resample::Sampler;
use super::{apply_mat, invert_affine, mat_mul, AffineTransform, GeometryError};

const NUM_PARAMS: usize = 12;
const MAX_HALVINGS: usize = 20;
const MIN_COARSE_DIM: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct RegistrationConfig {
    /// Degrees of freedom; only the full affine (12) is supported.
    pub dof: usize,
    /// Number of pyramid levels, each halving the resolution of the next.
    pub pyramid_levels: usize,
    pub max_iters_per_level: usize,
    /// Initial step length, in units of the finite-difference steps.
    pub step_init: f64,
    /// Backtracking factor in (0, 1). Accepted steps grow by its inverse.
    pub step_shrink: f64,
    /// A level stops once an accepted step lowers the cost by less than
    /// this fraction.
    pub converge_tol: f64,
    pub fd_translation_mm: f64,
    pub fd_linear: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig {
            dof: 12,
            pyramid_levels: 3,
            max_iters_per_level: 200,
            step_init: 0.1,
            step_shrink: 0.5,
            converge_tol: 1e-6,
            fd_translation_mm: 0.5,
            fd_linear: 0.01,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::RegistrationInput(m.to_string()));
        if self.dof != NUM_PARAMS {
            return bad("only 12-dof affine registration is supported");
        }
        if self.pyramid_levels == 0 || self.max_iters_per_level == 0 {
            return bad("pyramid_levels and max_iters_per_level must be positive");
        }
        if !(self.step_init > 0.0) || !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return bad("step_init must be positive and step_shrink in (0, 1)");
        }
        if !(self.converge_tol > 0.0 && self.converge_tol < 1.0) {
            return bad("converge_tol must be in (0, 1)");
        }
        if !(self.fd_translation_mm > 0.0 && self.fd_linear > 0.0) {
            return bad("finite-difference steps must be positive");
        }
        Ok(())
    }

    fn fd_steps(&self) -> [f64; NUM_PARAMS] {
        let mut e = [self.fd_linear; NUM_PARAMS];
        for v in &mut e[9..] {
            *v = self.fd_translation_mm;
        }
        e
    }
}

/// Cost history of one pyramid level: the starting cost followed by the cost
/// after every accepted step.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelTrace {
    pub dims: [usize; 3],
    pub costs: Vec<f64>,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegistrationResult {
    /// Moving world to fixed world.
    pub transform: AffineTransform,
    /// Mean squared intensity difference at full resolution.
    pub final_cost: f64,
    pub iterations_used: usize,
    pub converged: bool,
    /// Coarsest level first.
    pub levels: Vec<LevelTrace>,
}

struct Level {
    fixed: Volume,
    moving: Volume,
}

/// Factor-2 mean pooling. Odd trailing slices are dropped; the pooled voxel
/// center sits at the midpoint of its 2×2×2 block.
fn downsample(v: &Volume) -> Volume {
    let d = v.dims();
    let nd = [d[0] / 2, d[1] / 2, d[2] / 2];
    let mut data = Vec::with_capacity(nd[0] * nd[1] * nd[2]);
    for z in 0..nd[2] {
        for y in 0..nd[1] {
            for x in 0..nd[0] {
                let mut s = 0.0;
                for dz in 0..2 {
                    for dy in 0..2 {
                        for dx in 0..2 {
                            s += v.get(2 * x + dx, 2 * y + dy, 2 * z + dz);
                        }
                    }
                }
                data.push(s / 8.0);
            }
        }
    }
    let pool: Mat4 = [[2.0, 0.0, 0.0, 0.5], [0.0, 2.0, 0.0, 0.5], [0.0, 0.0, 2.0, 0.5], [0.0, 0.0, 0.0, 1.0]];
    let sp = v.spacing();
    let g = Geometry { dims: nd, spacing: [2.0 * sp[0], 2.0 * sp[1], 2.0 * sp[2]], affine: mat_mul(v.affine(), &pool) };
    Volume::new(g, data, v.intent()).expect("pooled intensities stay finite")
}

/// Sampling map `s = A (w - c) + c + d` as a matrix.
fn sampling_matrix(p: &[f64; NUM_PARAMS], center: [f64; 3]) -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for i in 0..3 {
        let mut shift = center[i] + p[9 + i];
        for j in 0..3 {
            m[i][j] = p[3 * i + j];
            shift -= p[3 * i + j] * center[j];
        }
        m[i][3] = shift;
    }
    m[3][3] = 1.0;
    m
}

struct CostFn<'a> {
    fixed: &'a Volume,
    moving: &'a Volume,
    moving_inv: Mat4,
    center: [f64; 3],
}

impl<'a> CostFn<'a> {
    fn new(level: &'a Level, center: [f64; 3]) -> Result<Self, GeometryError> {
        Ok(CostFn { fixed: &level.fixed, moving: &level.moving, moving_inv: invert_affine(level.moving.affine())?, center })
    }

    /// Sequential sum over voxels in index order: the value does not depend
    /// on how many evaluations run concurrently.
    fn eval(&self, p: &[f64; NUM_PARAMS]) -> f64 {
        let m = mat_mul(&self.moving_inv, &mat_mul(&sampling_matrix(p, self.center), self.fixed.affine()));
        let sampler = Sampler::new(self.moving.data(), self.moving.dims());
        let g = self.fixed.geometry();
        let mut sum = 0.0;
        for (i, &f) in self.fixed.data().iter().enumerate() {
            let [x, y, z] = g.coords(i);
            let c = apply_mat(&m, [x as f64, y as f64, z as f64]);
            let d = sampler.linear(c) - f;
            sum += d * d;
        }
        sum / self.fixed.len() as f64
    }
}

fn check_cost(c: f64) -> Result<f64, GeometryError> {
    if c.is_finite() {
        Ok(c)
    } else {
        Err(GeometryError::Numeric(format!("registration cost became {c}")))
    }
}

/// Estimate the affine transform aligning `moving` to `fixed`. Deterministic.
pub fn register_affine(moving: &Volume, fixed: &Volume, cfg: &RegistrationConfig) -> Result<RegistrationResult, GeometryError> {
    cfg.validate()?;
    for (name, v) in [("moving", moving), ("fixed", fixed)] {
        if v.intent() != Intent::Intensity {
            return Err(GeometryError::RegistrationInput(format!(
                "{name} image has intent {}, expected intensity",
                v.intent().as_str()
            )));
        }
        let shrink = 1usize << (cfg.pyramid_levels - 1);
        if v.dims().iter().any(|&d| d / shrink < MIN_COARSE_DIM) {
            return Err(GeometryError::RegistrationInput(format!(
                "{name} image dims {:?} are too small for {} pyramid levels (need {} voxels per axis at the coarsest level)",
                v.dims(),
                cfg.pyramid_levels,
                MIN_COARSE_DIM
            )));
        }
    }
    if !(fixed.variance() > 0.0) {
        return Err(GeometryError::RegistrationInput("fixed image has zero intensity variance".into()));
    }
    invert_affine(moving.affine())?;
    invert_affine(fixed.affine())?;

    let mut pyramid = vec![Level { fixed: fixed.clone(), moving: moving.clone() }];
    for _ in 1..cfg.pyramid_levels {
        let last = pyramid.last().unwrap();
        let next = Level { fixed: downsample(&last.fixed), moving: downsample(&last.moving) };
        pyramid.push(next);
    }

    let center = fixed.geometry().world_center();
    let eps = cfg.fd_steps();
    let mut params = [0.0; NUM_PARAMS];
    params[0] = 1.0;
    params[4] = 1.0;
    params[8] = 1.0;

    let mut traces = Vec::with_capacity(pyramid.len());
    let mut iterations_used = 0;
    for level in pyramid.iter().rev() {
        let cost_fn = CostFn::new(level, center)?;
        let (trace, iters) = optimise_level(&cost_fn, &mut params, &eps, cfg)?;
        iterations_used += iters;
        traces.push(LevelTrace { dims: level.fixed.dims(), ..trace });
    }

    let final_cost = *traces.last().unwrap().costs.last().unwrap();
    let converged = traces.last().unwrap().converged;
    let transform = AffineTransform::from_matrix(invert_affine(&sampling_matrix(&params, center))?)?;
    Ok(RegistrationResult { transform, final_cost, iterations_used, converged, levels: traces })
}

fn optimise_level(
    cost_fn: &CostFn<'_>,
    params: &mut [f64; NUM_PARAMS],
    eps: &[f64; NUM_PARAMS],
    cfg: &RegistrationConfig,
) -> Result<(LevelTrace, usize), GeometryError> {
    let mut cost = check_cost(cost_fn.eval(params))?;
    let mut costs = vec![cost];
    let mut step = cfg.step_init;
    let mut converged = false;
    let mut iters = 0;

    while iters < cfg.max_iters_per_level {
        if cost == 0.0 {
            converged = true;
            break;
        }
        // Central differences in units of the per-parameter steps; the 24
        // evaluations are independent and reduced in parameter order.
        let probes: Vec<f64> = (0..2 * NUM_PARAMS)
            .into_par_iter()
            .map(|k| {
                let mut p = *params;
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                p[k / 2] += sign * eps[k / 2];
                cost_fn.eval(&p)
            })
            .collect();
        let mut grad = [0.0; NUM_PARAMS];
        for i in 0..NUM_PARAMS {
            grad[i] = check_cost(probes[2 * i])? * 0.5 - check_cost(probes[2 * i + 1])? * 0.5;
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm == 0.0 {
            converged = true;
            break;
        }

        let mut trial = step;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut p = *params;
            for i in 0..NUM_PARAMS {
                p[i] -= trial * grad[i] / norm * eps[i];
            }
            let c = check_cost(cost_fn.eval(&p))?;
            if c < cost {
                accepted = Some((p, c));
                break;
            }
            trial *= cfg.step_shrink;
        }
        let Some((p, c)) = accepted else {
            converged = true;
            break;
        };
        iters += 1;
        let rel = (cost - c) / cost;
        *params = p;
        cost = c;
        costs.push(cost);
        step = trial / cfg.step_shrink;
        if rel < cfg.converge_tol {
            converged = true;
            break;
        }
    }
    Ok((LevelTrace { dims: [0; 3], costs, converged }, iters))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{resample, Interpolation};
    use crate::synth::make_phantom;

    #[test]
    fn downsample_preserves_world_position() {
        let g = Geometry::axis_aligned([4, 4, 4], [1.0, 1.0, 1.5]).unwrap();
        let data: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let v = Volume::new(g, data, Intent::Intensity).unwrap();
        let d = downsample(&v);
        assert_eq!(d.dims(), [2, 2, 2]);
        assert_eq!(d.spacing(), [2.0, 2.0, 3.0]);
        // block (0,0,0) averages voxels whose mean index is (0.5,0.5,0.5)
        assert_eq!(d.geometry().voxel_to_world([0.0; 3]), [0.5, 0.5, 0.75]);
        let expected = [0, 1, 4, 5, 16, 17, 20, 21].iter().sum::<usize>() as f64 / 8.0;
        assert_eq!(d.data()[0], expected);
    }

    #[test]
    fn self_registration_is_identity() {
        let v = make_phantom([32, 32, 32], [1.0; 3], 5).unwrap();
        let r = register_affine(&v, &v, &RegistrationConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.final_cost <= 1e-8 * v.variance());
        let m = r.transform.matrix();
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((m[i][j] - e).abs() <= 1e-3);
            }
            assert!(m[i][3].abs() <= 0.01);
        }
    }

    #[test]
    fn recovers_translation() {
        let moving = make_phantom([32, 32, 32], [1.0; 3], 11).unwrap();
        let planted = AffineTransform::translation([4.0, -2.0, 1.0]);
        let fixed = resample(&moving, &planted, moving.geometry(), Interpolation::Linear).unwrap();
        let r = register_affine(&moving, &fixed, &RegistrationConfig::default()).unwrap();
        let m = r.transform.matrix();
        for (k, want) in [4.0, -2.0, 1.0].iter().enumerate() {
            assert!((m[k][3] - want).abs() < 0.5, "axis {k}: {} vs {want}", m[k][3]);
        }
    }

    #[test]
    fn recovers_scale_and_translation() {
        let moving = make_phantom([32, 32, 32], [1.0; 3], 12).unwrap();
        let c = moving.geometry().world_center();
        let planted =
            AffineTransform::about_center([[1.05, 0.0, 0.0], [0.0, 1.05, 0.0], [0.0, 0.0, 1.05]], [1.5, 0.0, -1.0], c).unwrap();
        let fixed = resample(&moving, &planted, moving.geometry(), Interpolation::Linear).unwrap();
        let r = register_affine(&moving, &fixed, &RegistrationConfig::default()).unwrap();
        let (got, want) = (r.transform.matrix(), planted.matrix());
        for i in 0..3 {
            for j in 0..3 {
                assert!((got[i][j] - want[i][j]).abs() < 0.02, "({i},{j}) {} vs {}", got[i][j], want[i][j]);
            }
        }
    }

    #[test]
    fn cost_is_monotone_within_levels() {
        let moving = make_phantom([32, 32, 32], [1.0; 3], 3).unwrap();
        let planted = AffineTransform::translation([-3.0, 2.5, 2.0]);
        let fixed = resample(&moving, &planted, moving.geometry(), Interpolation::Linear).unwrap();
        let r = register_affine(&moving, &fixed, &RegistrationConfig::default()).unwrap();
        assert_eq!(r.levels.len(), 3);
        assert_eq!(r.levels[0].dims, [8, 8, 8]);
        for lvl in &r.levels {
            for w in lvl.costs.windows(2) {
                assert!(w[1] <= w[0]);
            }
        }
    }

    #[test]
    fn input_errors() {
        let g = Geometry::axis_aligned([32, 32, 32], [1.0; 3]).unwrap();
        let flat = Volume::filled(g, 0.5, Intent::Intensity).unwrap();
        let p = make_phantom([32, 32, 32], [1.0; 3], 1).unwrap();
        assert!(matches!(register_affine(&p, &flat, &RegistrationConfig::default()), Err(GeometryError::RegistrationInput(_))));
        let small = make_phantom([16, 16, 16], [1.0; 3], 1).unwrap();
        assert!(matches!(
            register_affine(&small, &small, &RegistrationConfig::default()),
            Err(GeometryError::RegistrationInput(_))
        ));
        let cfg = RegistrationConfig { pyramid_levels: 1, ..Default::default() };
        assert!(register_affine(&small, &small, &cfg).is_ok());
        let cfg = RegistrationConfig { step_shrink: 1.5, ..Default::default() };
        assert!(register_affine(&p, &p, &cfg).is_err());
    }
}
