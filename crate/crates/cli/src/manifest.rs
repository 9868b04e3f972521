//! Flat `key = value` run manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lodloc_core::eval::DEFAULT_THRESHOLDS;
use lodloc_core::geometry::{DEFAULT_DELTA_M, DEFAULT_MU_DEG, DEFAULT_POINT_LIMIT};
use lodloc_core::io::read_text;
use lodloc_core::oracle::{NoiseSpec, DEFAULT_SIGMA_PX};
use lodloc_core::pipeline::PipelineConfig;
use lodloc_core::refine::RefineConfig;

use crate::CliError;

pub const KEYS: &[&str] = &[
    "mesh",
    "wireframe",
    "intrinsics",
    "priors",
    "gt",
    "maps",
    "out",
    "overlay",
    "mu",
    "delta",
    "point_limit",
    "seed",
    "sigma_px",
    "noise_amplitude",
    "false_positives",
    "visibility_eps",
    "level1_ranges",
    "counts_l1",
    "counts_l2",
    "counts_l3",
    "lambda",
    "temperature",
    "refine_max_iters",
    "refine_step_tol",
    "refine_damping",
    "refine_max_backtracks",
    "thresholds",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub mesh: PathBuf,
    pub wireframe: PathBuf,
    pub intrinsics: PathBuf,
    pub priors: PathBuf,
    pub gt: Option<PathBuf>,
    pub maps: PathBuf,
    pub out: PathBuf,
    pub overlay: Option<PathBuf>,
    pub mu: f64,
    pub delta: f64,
    pub sigma_px: f64,
    pub noise: NoiseSpec,
    pub pipeline: PipelineConfig,
    pub thresholds: Vec<(f64, f64)>,
}

/// Parses `key = value` lines; `#` starts a comment. Later keys win.
pub fn parse_pairs(text: &str, src: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::validation(format!("{src}:{}: expected key = value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_override(s: &str) -> Result<(String, String), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::validation(format!("override '{s}' is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn bad(key: &str, value: &str) -> CliError {
    CliError::validation(format!("manifest key '{key}': bad value '{value}'"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| bad(key, value))
}

fn list<const N: usize, T: std::str::FromStr + Copy + Default>(key: &str, value: &str) -> Result<[T; N], CliError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(bad(key, value));
    }
    let mut out = [T::default(); N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = num(key, p)?;
    }
    Ok(out)
}

/// Parses `2:2,3:3,5:5` into (meters, degrees) pairs.
pub fn parse_thresholds(value: &str) -> Result<Vec<(f64, f64)>, CliError> {
    let err = || CliError::validation(format!("bad thresholds '{value}', expected e.g. 2:2,3:3,5:5"));
    let mut out = Vec::new();
    for item in value.split(',') {
        let (m, d) = item.trim().split_once(':').ok_or_else(err)?;
        let m: f64 = m.trim().parse().map_err(|_| err())?;
        let d: f64 = d.trim().parse().map_err(|_| err())?;
        if !(m >= 0.0 && d >= 0.0) {
            return Err(err());
        }
        out.push((m, d));
    }
    Ok(out)
}

impl RunManifest {
    /// Builds a manifest from `pairs`; relative paths resolve against `base`.
    pub fn from_pairs(pairs: &[(String, String)], base: &Path) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for (k, v) in pairs {
            if !KEYS.contains(&k.as_str()) {
                return Err(CliError::validation(format!("unknown manifest key '{k}'")));
            }
            map.insert(k.as_str(), v.as_str());
        }
        let path = |key: &str| map.get(key).map(|v| base.join(v));
        let required = |key: &str| {
            path(key).ok_or_else(|| CliError::validation(format!("manifest key '{key}' is required")))
        };

        let mut pipeline = PipelineConfig::default();
        let mut refine = RefineConfig::default();
        let mut noise = NoiseSpec::none();
        let mut m = RunManifest {
            mesh: required("mesh")?,
            wireframe: required("wireframe")?,
            intrinsics: required("intrinsics")?,
            priors: required("priors")?,
            gt: path("gt"),
            maps: required("maps")?,
            out: path("out").unwrap_or_else(|| base.join("results.csv")),
            overlay: path("overlay"),
            mu: DEFAULT_MU_DEG,
            delta: DEFAULT_DELTA_M,
            sigma_px: DEFAULT_SIGMA_PX,
            noise,
            pipeline: PipelineConfig::default(),
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
        };
        for (&k, &v) in &map {
            match k {
                "mu" => m.mu = num(k, v)?,
                "delta" => m.delta = num(k, v)?,
                "point_limit" => pipeline.point_limit = num(k, v)?,
                "seed" => {
                    pipeline.seed = num(k, v)?;
                    noise.seed = pipeline.seed;
                }
                "sigma_px" => m.sigma_px = num(k, v)?,
                "noise_amplitude" => noise.amplitude = num(k, v)?,
                "false_positives" => noise.false_positives = num(k, v)?,
                "visibility_eps" => pipeline.visibility_eps = num(k, v)?,
                "level1_ranges" => pipeline.level1_ranges = list(k, v)?,
                "counts_l1" => pipeline.counts[0] = list(k, v)?,
                "counts_l2" => pipeline.counts[1] = list(k, v)?,
                "counts_l3" => pipeline.counts[2] = list(k, v)?,
                "lambda" => pipeline.lambda = num(k, v)?,
                "temperature" => pipeline.temperature = num(k, v)?,
                "refine_max_iters" => refine.max_iters = num(k, v)?,
                "refine_step_tol" => refine.step_tol = num(k, v)?,
                "refine_damping" => refine.damping = num(k, v)?,
                "refine_max_backtracks" => refine.max_backtracks = num(k, v)?,
                "thresholds" => m.thresholds = parse_thresholds(v)?,
                _ => {}
            }
        }
        pipeline.refine = refine;
        pipeline.validate().map_err(CliError::from)?;
        if !(m.delta > 0.0) {
            return Err(bad("delta", &m.delta.to_string()));
        }
        if !(m.sigma_px > 0.0) {
            return Err(bad("sigma_px", &m.sigma_px.to_string()));
        }
        m.noise = noise;
        m.pipeline = pipeline;
        Ok(m)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let text = read_text(path)?;
        let mut pairs = parse_pairs(&text, &path.display().to_string())?;
        pairs.extend(overrides.iter().cloned());
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_pairs(&pairs, base)
    }
}

/// Manifest text referencing the files written by `synth-scene`.
pub fn template(thresholds: &str) -> String {
    format!(
        "# lodloc run manifest\n\
         mesh = mesh.obj\n\
         wireframe = wireframe.lodwf\n\
         intrinsics = intrinsics.csv\n\
         priors = priors.csv\n\
         gt = gt.csv\n\
         maps = maps\n\
         out = results.csv\n\
         delta = {DEFAULT_DELTA_M}\n\
         point_limit = {DEFAULT_POINT_LIMIT}\n\
         seed = 0\n\
         thresholds = {thresholds}\n"
    )
}
