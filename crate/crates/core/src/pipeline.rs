//! Three-level coarse-to-fine localization followed by refinement.

use std::time::Instant;

use crate::camera::{euler_to_pose, EulerPose, Intrinsics, PoseSE3};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{subsample_points, Mesh, WireframePoints, DEFAULT_POINT_LIMIT};
use crate::oracle::{ProbabilityMapPyramid, LEVEL_SCALES};
use crate::refine::{gauss_newton_refine, RefineConfig};
use crate::visibility::{cull_points, DEFAULT_VISIBILITY_EPS};
use crate::volume::{
    build_cost_volume, build_grid, next_range, pose_variance, select_index, softmax_volume, SamplingSpec,
    DEFAULT_COUNTS, DEFAULT_LAMBDA, DEFAULT_LEVEL1_RANGES, DEFAULT_TEMPERATURE,
};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub level1_ranges: [f64; 4],
    pub counts: [[usize; 4]; 3],
    pub lambda: f64,
    pub temperature: f64,
    pub refine: RefineConfig,
    pub visibility_eps: f64,
    pub point_limit: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            level1_ranges: DEFAULT_LEVEL1_RANGES,
            counts: [DEFAULT_COUNTS; 3],
            lambda: DEFAULT_LAMBDA,
            temperature: DEFAULT_TEMPERATURE,
            refine: RefineConfig::default(),
            visibility_eps: DEFAULT_VISIBILITY_EPS,
            point_limit: DEFAULT_POINT_LIMIT,
            seed: 0,
            exec: Execution::Parallel,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        for counts in &self.counts {
            SamplingSpec::new(self.level1_ranges, *counts)?;
        }
        if !(self.lambda > 0.0) {
            return Err(Error::invalid("lambda must be positive"));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::invalid("temperature must be positive"));
        }
        if !(self.visibility_eps >= 0.0) {
            return Err(Error::invalid("visibility eps must be >= 0"));
        }
        if self.point_limit == 0 {
            return Err(Error::invalid("point limit must be positive"));
        }
        self.refine.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord {
    /// Grid center (the previous level's selection, or the prior).
    pub center: EulerPose,
    pub spec: SamplingSpec,
    pub selected: EulerPose,
    pub sigma: [f64; 4],
    pub best_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTiming {
    pub visibility_ms: f64,
    pub level_ms: [f64; 3],
    pub refine_ms: f64,
}

impl StageTiming {
    pub fn total_ms(&self) -> f64 {
        self.visibility_ms + self.level_ms.iter().sum::<f64>() + self.refine_ms
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationRecord {
    pub query_name: String,
    pub prior: EulerPose,
    pub points_used: usize,
    pub per_level: Vec<LevelRecord>,
    /// `None` when refinement was flagged.
    pub refined: Option<PoseSE3>,
    pub refine_trace: Vec<f64>,
    pub flags: Vec<String>,
    pub timing: StageTiming,
}

impl LocalizationRecord {
    /// Refined pose, or the last level's selection if refinement was flagged.
    pub fn final_pose(&self) -> PoseSE3 {
        match self.refined {
            Some(p) => p,
            None => euler_to_pose(&self.per_level[self.per_level.len() - 1].selected),
        }
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Localizes one query.
///
/// Visibility is decided once at the prior. Each level samples a grid
/// around the previous selection (the prior for level 1) with pitch and
/// roll held at the prior's; the next level's extents come from the
/// spread of the probability volume, floored at the current grid step.
/// The last selection seeds a 6-DoF refinement on the refined map.
#[allow(clippy::too_many_arguments)]
pub fn localize(
    query_name: &str,
    wireframe: &WireframePoints,
    mesh: &Mesh,
    k: &Intrinsics,
    prior: &EulerPose,
    pyramid: &ProbabilityMapPyramid,
    cfg: &PipelineConfig,
) -> Result<LocalizationRecord> {
    localize_inner(query_name, wireframe, mesh, k, prior, pyramid, cfg).map_err(|e| Error::Query {
        name: query_name.to_string(),
        source: Box::new(e),
    })
}

fn localize_inner(
    query_name: &str,
    wireframe: &WireframePoints,
    mesh: &Mesh,
    k: &Intrinsics,
    prior: &EulerPose,
    pyramid: &ProbabilityMapPyramid,
    cfg: &PipelineConfig,
) -> Result<LocalizationRecord> {
    cfg.validate()?;
    k.validate()?;
    pyramid.validate(k)?;
    if !prior.is_finite() {
        return Err(Error::invalid("prior pose is not finite"));
    }
    let mut timing = StageTiming::default();

    let t0 = Instant::now();
    let prior_pose = euler_to_pose(prior);
    let visible = cull_points(wireframe, mesh, k, &prior_pose, cfg.visibility_eps, cfg.exec)?;
    let points = subsample_points(&visible, cfg.point_limit, cfg.seed)?;
    timing.visibility_ms = ms_since(t0);
    if points.is_empty() {
        return Err(Error::NoWireframePoints);
    }

    let mut per_level = Vec::with_capacity(3);
    let mut center = *prior;
    let mut ranges = cfg.level1_ranges;
    for level in 0..3 {
        let t = Instant::now();
        let spec = SamplingSpec::new(ranges, cfg.counts[level])?;
        let grid = build_grid(&center, &spec)?;
        let kl = k.scaled(LEVEL_SCALES[level]);
        let volume = build_cost_volume(&pyramid.levels[level], &points, &kl, &grid, cfg.exec)?;
        let volume = softmax_volume(volume, cfg.temperature)?;
        let best = select_index(&volume)?;
        let selected = grid.pose_at(grid.unravel(best));
        let sigma = pose_variance(&volume, &selected)?;
        let floor: [f64; 4] = std::array::from_fn(|d| spec.spacing(d));
        ranges = next_range(&sigma, cfg.lambda, &floor)?;
        per_level.push(LevelRecord {
            center,
            spec,
            selected,
            sigma,
            best_cost: volume.cost[best],
        });
        center = selected;
        timing.level_ms[level] = ms_since(t);
    }

    let t = Instant::now();
    let init = euler_to_pose(&center);
    let outcome = gauss_newton_refine(&pyramid.refined, &points, k, &init, &cfg.refine, cfg.exec)?;
    timing.refine_ms = ms_since(t);
    let mut flags = Vec::new();
    let refined = match outcome.flag {
        Some(f) => {
            flags.push(f.to_string());
            None
        }
        None => Some(outcome.pose),
    };
    Ok(LocalizationRecord {
        query_name: query_name.to_string(),
        prior: *prior,
        points_used: points.len(),
        per_level,
        refined,
        refine_trace: outcome.objective_trace,
        flags,
        timing,
    })
}
