//! 6-DoF Gauss-Newton refinement against the refined probability map.
//!
//! The objective is `Σ f_i²` with `f_i = F[Π(R P_i + t)]`, maximized with
//! ascent steps `Δξ = (Σ JᵀJ + λI)⁻¹ Σ Jᵀf` and a halving line search.
//! Perturbations are applied on the right: `p_cam = R (exp(ω) P + Δt) + t`.

use nalgebra::{Matrix6, Vector6};

use crate::camera::{skew, so3_exp, Intrinsics, PoseSE3, Vec3};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::geometry::WireframePoints;
use crate::oracle::{cell, ProbabilityMap};

const MIN_DEPTH: f64 = 1e-6;
const MIN_POINTS: usize = 6;
/// Damping multiplier for the single retry after a failed factorization.
const RETRY_DAMPING: f64 = 1e-3;

/// Per-cell finite differences of a probability map.
///
/// `gx(x, y) = F(x+1, y) - F(x, y)` (last column repeats its neighbor), and
/// likewise for `gy`. [`GradientMaps::sample`] combines them into the exact
/// derivative of [`ProbabilityMap::lookup`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMaps {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl GradientMaps {
    /// `(∂F/∂u, ∂F/∂v)` at a sub-pixel location; zero outside the map.
    #[inline]
    pub fn sample(&self, u: f64, v: f64) -> (f64, f64) {
        match cell(u, v, self.width, self.height) {
            Some(c) => {
                let w = self.width;
                let i = c.y0 * w + c.x0;
                let du = self.gx[i] + (self.gx[i + c.dy * w] - self.gx[i]) * c.fy;
                let dv = self.gy[i] + (self.gy[i + c.dx] - self.gy[i]) * c.fx;
                (du, dv)
            }
            None => (0.0, 0.0),
        }
    }
}

pub fn image_gradients(map: &ProbabilityMap) -> Result<GradientMaps> {
    let (w, h) = (map.width, map.height);
    if w < 2 || h < 2 {
        return Err(Error::MapTooSmall { width: w, height: h });
    }
    let f = |x: usize, y: usize| map.at(x, y) as f64;
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let xa = x.min(w - 2);
            let ya = y.min(h - 2);
            gx[y * w + x] = f(xa + 1, y) - f(xa, y);
            gy[y * w + x] = f(x, ya + 1) - f(x, ya);
        }
    }
    Ok(GradientMaps {
        width: w,
        height: h,
        gx,
        gy,
    })
}

/// Residual and its 1x6 Jacobian, ordered (rotation xyz, translation xyz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub value: f64,
    pub jacobian: [f64; 6],
}

/// Returns `None` when the point is not in front of the camera.
pub fn residual_jacobian(
    map: &ProbabilityMap,
    grads: &GradientMaps,
    k: &Intrinsics,
    pose: &PoseSE3,
    p: &Vec3,
) -> Option<Residual> {
    let pc = pose.transform(p);
    if !(pc.z > MIN_DEPTH) {
        return None;
    }
    let (u, v) = k.pixel(&pc);
    let value = map.lookup(u, v);
    let (du, dv) = grads.sample(u, v);
    if du == 0.0 && dv == 0.0 {
        return Some(Residual {
            value,
            jacobian: [0.0; 6],
        });
    }
    let inv_z = 1.0 / pc.z;
    // (∂F/∂p)(∂p/∂P_cam)
    let gc = Vec3::new(
        du * k.fx * inv_z,
        dv * k.fy * inv_z,
        -(du * k.fx * pc.x + dv * k.fy * pc.y) * inv_z * inv_z,
    );
    // ∂P_cam/∂Δt = R, ∂P_cam/∂ω = -R [P]x
    let jt = pose.rotation.transpose() * gc;
    let jr = -(skew(p).transpose() * jt);
    Some(Residual {
        value,
        jacobian: [jr.x, jr.y, jr.z, jt.x, jt.y, jt.z],
    })
}

/// Applies a right-perturbation `(ω, Δt)`.
pub fn apply_update(pose: &PoseSE3, delta: &[f64; 6]) -> PoseSE3 {
    let w = Vec3::new(delta[0], delta[1], delta[2]);
    let dt = Vec3::new(delta[3], delta[4], delta[5]);
    PoseSE3 {
        rotation: pose.rotation * so3_exp(&w),
        translation: pose.rotation * dt + pose.translation,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    pub max_iters: usize,
    pub step_tol: f64,
    /// Levenberg damping, relative to `trace(H) / 6`.
    pub damping: f64,
    pub max_backtracks: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            max_iters: 10,
            step_tol: 1e-6,
            damping: 1e-6,
            max_backtracks: 8,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("refine max_iters must be >= 1"));
        }
        if !(self.damping >= 0.0) || !(self.step_tol >= 0.0) {
            return Err(Error::invalid("refine damping and step_tol must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefineFlag {
    Singular,
    Underconstrained,
}

impl RefineFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            RefineFlag::Singular => "refine singular",
            RefineFlag::Underconstrained => "underconstrained",
        }
    }
}

impl std::fmt::Display for RefineFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub pose: PoseSE3,
    /// `Σ f²` at the initial pose and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub flag: Option<RefineFlag>,
    /// Points behind the camera at the final pose.
    pub skipped_points: usize,
}

fn residuals(
    map: &ProbabilityMap,
    grads: &GradientMaps,
    points: &WireframePoints,
    k: &Intrinsics,
    pose: &PoseSE3,
    exec: Execution,
) -> Vec<Option<Residual>> {
    exec::map_indexed(exec, points.len(), |i| residual_jacobian(map, grads, k, pose, &points.points[i]))
}

/// `Σ f²` over points in front of the camera.
pub fn objective(map: &ProbabilityMap, points: &WireframePoints, k: &Intrinsics, pose: &PoseSE3) -> f64 {
    points
        .points
        .iter()
        .map(|p| {
            let pc = pose.transform(p);
            if pc.z > MIN_DEPTH {
                let (u, v) = k.pixel(&pc);
                let f = map.lookup(u, v);
                f * f
            } else {
                0.0
            }
        })
        .sum()
}

fn solve(h: &Matrix6<f64>, g: &Vector6<f64>, damping: f64) -> Option<Vector6<f64>> {
    let scale = h.trace() / 6.0;
    let attempt = |lambda: f64| {
        let damped = h + Matrix6::identity() * lambda;
        damped.cholesky().map(|c| c.solve(g)).filter(|x| x.iter().all(|v| v.is_finite()))
    };
    attempt(damping * scale).or_else(|| attempt((damping * scale).max(RETRY_DAMPING * scale)))
}

pub fn gauss_newton_refine(
    map: &ProbabilityMap,
    points: &WireframePoints,
    k: &Intrinsics,
    init: &PoseSE3,
    cfg: &RefineConfig,
    exec: Execution,
) -> Result<RefineOutcome> {
    cfg.validate()?;
    let grads = image_gradients(map)?;
    let mut pose = *init;
    let mut current = objective(map, points, k, &pose);
    let mut trace = vec![current];
    let mut iterations = 0;
    let finish = |pose, trace, iterations, flag, skipped| RefineOutcome {
        pose,
        objective_trace: trace,
        iterations,
        flag,
        skipped_points: skipped,
    };

    for _ in 0..cfg.max_iters {
        let res = residuals(map, &grads, points, k, &pose, exec);
        let skipped = res.iter().filter(|r| r.is_none()).count();
        if points.len() - skipped < MIN_POINTS {
            return Ok(finish(*init, vec![trace[0]], 0, Some(RefineFlag::Underconstrained), skipped));
        }
        iterations += 1;
        let mut h = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        for r in res.iter().flatten() {
            let j = Vector6::from_column_slice(&r.jacobian);
            h += j * j.transpose();
            g += j * r.value;
        }
        if g.iter().all(|&x| x == 0.0) {
            return Ok(finish(pose, trace, iterations, None, skipped));
        }
        let Some(step) = solve(&h, &g, cfg.damping) else {
            return Ok(finish(*init, vec![trace[0]], iterations, Some(RefineFlag::Singular), skipped));
        };
        if step.norm() < cfg.step_tol {
            return Ok(finish(pose, trace, iterations, None, skipped));
        }
        let mut delta: [f64; 6] = step.into();
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            let candidate = apply_update(&pose, &delta);
            let obj = objective(map, points, k, &candidate);
            if obj >= current {
                accepted = Some((candidate, obj));
                break;
            }
            delta.iter_mut().for_each(|d| *d *= 0.5);
        }
        match accepted {
            Some((p, obj)) => {
                pose = p;
                current = obj;
                trace.push(obj);
            }
            None => return Ok(finish(pose, trace, iterations, None, skipped)),
        }
    }
    let skipped = points.points.iter().filter(|p| !(pose.transform(p).z > MIN_DEPTH)).count();
    Ok(finish(pose, trace, iterations, None, skipped))
}
