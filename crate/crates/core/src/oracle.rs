//! Wireframe-probability maps: the synthetic stand-in for a learned
//! extractor, plus sub-pixel lookup.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{Intrinsics, PoseSE3};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::geometry::WireframePoints;

/// Scales of the three cost-volume levels relative to full resolution.
pub const LEVEL_SCALES: [f64; 3] = [0.25, 0.5, 1.0];
pub const DEFAULT_SIGMA_PX: f64 = 2.0;
/// Splat kernels are truncated at this many standard deviations.
const KERNEL_RADIUS_SIGMAS: f64 = 4.0;
const BAND_ROWS: usize = 8;

/// Single-channel map with values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
    pub level_scale: f64,
}

impl ProbabilityMap {
    pub fn zeros(width: usize, height: usize, level_scale: f64) -> Self {
        ProbabilityMap {
            width,
            height,
            values: vec![0.0; width * height],
            level_scale,
        }
    }

    pub fn filled(width: usize, height: usize, level_scale: f64, value: f32) -> Self {
        ProbabilityMap {
            values: vec![value; width * height],
            ..Self::zeros(width, height, level_scale)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.width * self.height {
            return Err(Error::LengthMismatch {
                expected: self.width * self.height,
                actual: self.values.len(),
            });
        }
        if let Some(i) = self.values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!("map value {} at index {i} outside [0, 1]", self.values[i])));
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Sub-pixel bilinear lookup; integer coordinates are pixel centers and
    /// anything outside `[0, W-1] x [0, H-1]` reads 0.
    #[inline]
    pub fn lookup(&self, u: f64, v: f64) -> f64 {
        match cell(u, v, self.width, self.height) {
            Some(c) => {
                let w = self.width;
                let i = c.y0 * w + c.x0;
                let p00 = self.values[i] as f64;
                let p10 = self.values[i + c.dx] as f64;
                let p01 = self.values[i + c.dy * w] as f64;
                let p11 = self.values[i + c.dy * w + c.dx] as f64;
                let top = p00 + (p10 - p00) * c.fx;
                let bottom = p01 + (p11 - p01) * c.fx;
                top + (bottom - top) * c.fy
            }
            None => 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len().max(1) as f64
    }
}

/// Bilinear cell containing `(u, v)`: top-left corner, fractional offsets and
/// neighbor steps (0 for one-pixel-wide maps).
#[derive(Debug, Clone, Copy)]
pub(crate) struct Cell {
    pub x0: usize,
    pub y0: usize,
    pub fx: f64,
    pub fy: f64,
    pub dx: usize,
    pub dy: usize,
}

#[inline]
pub(crate) fn cell(u: f64, v: f64, width: usize, height: usize) -> Option<Cell> {
    let max_u = width as f64 - 1.0;
    let max_v = height as f64 - 1.0;
    // written so NaN falls through to None
    if !(u >= 0.0 && v >= 0.0 && u <= max_u && v <= max_v) {
        return None;
    }
    let (x0, fx, dx) = corner(u, width);
    let (y0, fy, dy) = corner(v, height);
    Some(Cell { x0, y0, fx, fy, dx, dy })
}

#[inline]
fn corner(u: f64, n: usize) -> (usize, f64, usize) {
    if n < 2 {
        return (0, 0.0, 0);
    }
    let x0 = (u.floor() as usize).min(n - 2);
    (x0, u - x0 as f64, 1)
}

/// Free-function form of [`ProbabilityMap::lookup`].
pub fn bilinear_lookup(map: &ProbabilityMap, u: f64, v: f64) -> f64 {
    map.lookup(u, v)
}

/// The three cost-volume maps (scales 1/4, 1/2, 1) and the refinement map.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMapPyramid {
    pub levels: [ProbabilityMap; 3],
    pub refined: ProbabilityMap,
}

impl ProbabilityMapPyramid {
    /// Checks the per-level scales and dimensions against full-resolution intrinsics.
    pub fn validate(&self, full: &Intrinsics) -> Result<()> {
        let check = |m: &ProbabilityMap, scale: f64, name: &str| -> Result<()> {
            m.validate()?;
            let want = full.scaled(scale);
            if m.width != want.width || m.height != want.height {
                return Err(Error::invalid(format!(
                    "{name} map is {}x{}, expected {}x{}",
                    m.width, m.height, want.width, want.height
                )));
            }
            Ok(())
        };
        for (l, m) in self.levels.iter().enumerate() {
            check(m, LEVEL_SCALES[l], &format!("level {}", l + 1))?;
        }
        check(&self.refined, 1.0, "refined")
    }
}

/// Corruption applied to synthesized maps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseSpec {
    /// Per-pixel i.i.d. noise is drawn from `U[0, amplitude]` and added.
    pub amplitude: f64,
    /// Number of spurious Gaussian splats at random image positions.
    pub false_positives: usize,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self::default()
    }
}

/// Renders max-accumulated Gaussian splats of the given pixel positions.
fn splat_map(
    centers: &[(f64, f64)],
    width: usize,
    height: usize,
    sigma: f64,
    level_scale: f64,
    exec: Execution,
) -> ProbabilityMap {
    let mut map = ProbabilityMap::zeros(width, height, level_scale);
    if width == 0 || height == 0 {
        return map;
    }
    let radius = KERNEL_RADIUS_SIGMAS * sigma;
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);
    let bands = height.div_ceil(BAND_ROWS);
    let mut per_band: Vec<Vec<usize>> = vec![Vec::new(); bands];
    for (i, &(u, v)) in centers.iter().enumerate() {
        if !(u + radius >= 0.0 && u - radius <= width as f64 - 1.0) {
            continue;
        }
        let lo = (v - radius).ceil().max(0.0);
        let hi = (v + radius).floor().min(height as f64 - 1.0);
        if lo > hi {
            continue;
        }
        for b in (lo as usize / BAND_ROWS)..=(hi as usize / BAND_ROWS) {
            per_band[b].push(i);
        }
    }
    exec::for_each_chunk_mut(exec, &mut map.values, BAND_ROWS * width, |b, band| {
        let row0 = b * BAND_ROWS;
        let rows = band.len() / width;
        for &i in &per_band[b] {
            let (u, v) = centers[i];
            let y_lo = ((v - radius).ceil().max(row0 as f64)) as usize;
            let y_hi = (v + radius).floor().min((row0 + rows - 1) as f64);
            let x_lo = (u - radius).ceil().max(0.0) as usize;
            let x_hi = (u + radius).floor().min(width as f64 - 1.0);
            if y_hi < y_lo as f64 || x_hi < x_lo as f64 {
                continue;
            }
            for y in y_lo..=y_hi as usize {
                let dy = y as f64 - v;
                let row = &mut band[(y - row0) * width..(y - row0 + 1) * width];
                for (x, px) in row.iter_mut().enumerate().take(x_hi as usize + 1).skip(x_lo) {
                    let dx = x as f64 - u;
                    let r2 = dx * dx + dy * dy;
                    if r2 > radius * radius {
                        continue;
                    }
                    let val = (-r2 * inv_two_var).exp() as f32;
                    if val > *px {
                        *px = val;
                    }
                }
            }
        }
    });
    map
}

fn add_uniform_noise(map: &mut ProbabilityMap, amplitude: f64, rng: &mut ChaCha8Rng) {
    if amplitude <= 0.0 {
        return;
    }
    for v in map.values.iter_mut() {
        let n: f64 = rng.gen_range(0.0..=amplitude);
        *v = ((*v as f64 + n).min(1.0)) as f32;
    }
}

/// Synthesizes a map pyramid as seen from `ref_pose`.
///
/// Each point is projected with level-scaled intrinsics and splatted as a
/// peak-normalized Gaussian of std `sigma_px * level_scale`; overlapping
/// splats combine by max. Noise, if any, is seeded by `noise.seed`.
pub fn synth_pyramid(
    points: &WireframePoints,
    k: &Intrinsics,
    ref_pose: &PoseSE3,
    sigma_px: f64,
    noise: &NoiseSpec,
    exec: Execution,
) -> Result<ProbabilityMapPyramid> {
    if !(sigma_px > 0.0 && sigma_px.is_finite()) {
        return Err(Error::invalid(format!("sigma_px must be positive, got {sigma_px}")));
    }
    if !(noise.amplitude >= 0.0 && noise.amplitude <= 1.0) {
        return Err(Error::invalid(format!("noise amplitude must lie in [0, 1], got {}", noise.amplitude)));
    }
    k.validate()?;
    let cam: Vec<_> = points
        .points
        .iter()
        .map(|p| ref_pose.transform(p))
        .filter(|pc| pc.z > 0.0)
        .collect();

    let mut fp_rng = ChaCha8Rng::seed_from_u64(noise.seed);
    fp_rng.set_stream(0);
    // full-resolution positions, shared by every level
    let false_pos: Vec<(f64, f64)> = (0..noise.false_positives)
        .map(|_| {
            (
                fp_rng.gen_range(0.0..k.width as f64),
                fp_rng.gen_range(0.0..k.height as f64),
            )
        })
        .collect();

    let make = |scale: f64, stream: u64| {
        let kl = k.scaled(scale);
        let mut centers: Vec<(f64, f64)> = cam.iter().map(|pc| kl.pixel(pc)).collect();
        centers.extend(false_pos.iter().map(|&(u, v)| (u * scale, v * scale)));
        let mut map = splat_map(&centers, kl.width, kl.height, sigma_px * scale, scale, exec);
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        rng.set_stream(stream);
        add_uniform_noise(&mut map, noise.amplitude, &mut rng);
        map
    };
    Ok(ProbabilityMapPyramid {
        levels: [make(LEVEL_SCALES[0], 1), make(LEVEL_SCALES[1], 2), make(LEVEL_SCALES[2], 3)],
        refined: make(1.0, 4),
    })
}
