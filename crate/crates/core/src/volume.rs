//! 4-DoF pose hypothesis grids, line-alignment cost volumes and
//! uncertainty-driven range propagation.

use crate::camera::{euler_rotation, pose_from_rotation_center, wrap_degrees, EulerPose, Intrinsics, PoseSE3, Vec3};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::geometry::WireframePoints;
use crate::oracle::ProbabilityMap;

/// Sampled dimensions, in storage order.
pub const DIMS: [&str; 4] = ["x", "y", "z", "yaw"];
pub const DEFAULT_LEVEL1_RANGES: [f64; 4] = [10.0, 10.0, 30.0, 7.5];
pub const DEFAULT_COUNTS: [usize; 4] = [10, 10, 30, 8];
pub const DEFAULT_LAMBDA: f64 = 0.8;
pub const DEFAULT_TEMPERATURE: f64 = 1.0;

/// Sampling extent `r` (meters, meters, meters, degrees) and count `m` per dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingSpec {
    pub ranges: [f64; 4],
    pub counts: [usize; 4],
}

impl SamplingSpec {
    pub fn new(ranges: [f64; 4], counts: [usize; 4]) -> Result<Self> {
        let s = SamplingSpec { ranges, counts };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for d in 0..4 {
            if !(self.ranges[d] >= 0.0 && self.ranges[d].is_finite()) {
                return Err(Error::invalid(format!("range for {} must be finite and >= 0", DIMS[d])));
            }
            if self.counts[d] == 0 {
                return Err(Error::invalid(format!("count for {} must be >= 1", DIMS[d])));
            }
        }
        Ok(())
    }

    /// Grid step along dimension `d`; 0 for single-sample dimensions.
    pub fn spacing(&self, d: usize) -> f64 {
        if self.counts[d] < 2 {
            0.0
        } else {
            self.ranges[d] / (self.counts[d] - 1) as f64
        }
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Uniform hypothesis grid around a center pose. Pitch and roll are held at
/// the center's values.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisGrid {
    pub center: EulerPose,
    pub spec: SamplingSpec,
    /// Sorted offsets per dimension.
    pub axes: [Vec<f64>; 4],
}

impl HypothesisGrid {
    pub fn len(&self) -> usize {
        self.spec.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> [usize; 4] {
        self.spec.counts
    }

    /// Row-major `(x, y, z, yaw)` flattening.
    pub fn flat_index(&self, idx: [usize; 4]) -> usize {
        let m = self.spec.counts;
        ((idx[0] * m[1] + idx[1]) * m[2] + idx[2]) * m[3] + idx[3]
    }

    pub fn unravel(&self, mut flat: usize) -> [usize; 4] {
        let m = self.spec.counts;
        let mut idx = [0; 4];
        for d in (0..4).rev() {
            idx[d] = flat % m[d];
            flat /= m[d];
        }
        idx
    }

    fn yaw_at(&self, q: usize) -> f64 {
        wrap_degrees(self.center.yaw + self.axes[3][q])
    }

    pub fn pose_at(&self, idx: [usize; 4]) -> EulerPose {
        let c = &self.center;
        EulerPose::new(
            c.x + self.axes[0][idx[0]],
            c.y + self.axes[1][idx[1]],
            c.z + self.axes[2][idx[2]],
            self.yaw_at(idx[3]),
            c.pitch,
            c.roll,
        )
    }

    /// Rigid pose of a hypothesis; identical bits to `euler_to_pose(pose_at(idx))`.
    pub fn se3_at(&self, idx: [usize; 4]) -> PoseSE3 {
        let e = self.pose_at(idx);
        pose_from_rotation_center(euler_rotation(e.yaw, e.pitch, e.roll), &e.center())
    }

    /// Index of the grid node nearest `target` in each dimension (yaw wrapped).
    pub fn nearest_index(&self, target: &EulerPose) -> [usize; 4] {
        let rel = [
            target.x - self.center.x,
            target.y - self.center.y,
            target.z - self.center.z,
            wrap_degrees(target.yaw - self.center.yaw),
        ];
        let mut idx = [0; 4];
        for d in 0..4 {
            let mut best = f64::INFINITY;
            for (k, &o) in self.axes[d].iter().enumerate() {
                let dist = if d == 3 { wrap_degrees(rel[d] - o).abs() } else { (rel[d] - o).abs() };
                if dist < best {
                    best = dist;
                    idx[d] = k;
                }
            }
        }
        idx
    }
}

/// Inclusive uniform offsets over `[-r/2, r/2]`; `{0}` for a single sample.
fn linspace_centered(range: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.0];
    }
    let half = range / 2.0;
    (0..count)
        .map(|k| -half + range * k as f64 / (count - 1) as f64)
        .collect()
}

pub fn build_grid(center: &EulerPose, spec: &SamplingSpec) -> Result<HypothesisGrid> {
    spec.validate()?;
    if !center.is_finite() {
        return Err(Error::invalid("grid center is not finite"));
    }
    let axes = std::array::from_fn(|d| linspace_centered(spec.ranges[d], spec.counts[d]));
    Ok(HypothesisGrid {
        center: *center,
        spec: *spec,
        axes,
    })
}

/// Cost and (after [`softmax_volume`]) probability over a hypothesis grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseVolume {
    pub grid: HypothesisGrid,
    pub cost: Vec<f64>,
    /// Empty until [`softmax_volume`] has run.
    pub prob: Vec<f64>,
}

impl PoseVolume {
    pub fn has_prob(&self) -> bool {
        !self.prob.is_empty() && self.prob.len() == self.cost.len()
    }

    fn require_prob(&self) -> Result<()> {
        if self.has_prob() {
            Ok(())
        } else {
            Err(Error::invalid("probability volume not computed"))
        }
    }
}

#[inline]
fn point_score(map: &ProbabilityMap, k: &Intrinsics, pc: &Vec3) -> f64 {
    if pc.z > 0.0 {
        let (u, v) = k.pixel(pc);
        map.lookup(u, v)
    } else {
        0.0
    }
}

/// Mean map probability at the projections of `points` (line-alignment cost).
///
/// `k` must be the intrinsics of `map`'s level. Points behind the camera
/// contribute 0.
pub fn score_hypothesis(map: &ProbabilityMap, points: &WireframePoints, k: &Intrinsics, hyp: &PoseSE3) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::NoWireframePoints);
    }
    let sum: f64 = points
        .points
        .iter()
        .map(|p| point_score(map, k, &hyp.transform(p)))
        .sum();
    Ok(sum / points.len() as f64)
}

/// Scores every grid hypothesis. Points are rotated once per yaw sample, and
/// each entry is computed with the same arithmetic as [`score_hypothesis`],
/// so sequential and parallel evaluation agree bit-for-bit.
pub fn build_cost_volume(
    map: &ProbabilityMap,
    points: &WireframePoints,
    k: &Intrinsics,
    grid: &HypothesisGrid,
    exec: Execution,
) -> Result<PoseVolume> {
    if points.is_empty() {
        return Err(Error::NoWireframePoints);
    }
    if grid.is_empty() {
        return Err(Error::invalid("empty hypothesis grid"));
    }
    let c = &grid.center;
    let rotations: Vec<_> = (0..grid.spec.counts[3])
        .map(|q| euler_rotation(grid.yaw_at(q), c.pitch, c.roll))
        .collect();
    let rotated: Vec<Vec<Vec3>> = exec::map_indexed(exec, rotations.len(), |q| {
        points.points.iter().map(|p| rotations[q] * p).collect()
    });
    let n = points.len() as f64;
    let cost = exec::map_indexed(exec, grid.len(), |flat| {
        let idx = grid.unravel(flat);
        let e = grid.pose_at(idx);
        let t = pose_from_rotation_center(rotations[idx[3]], &e.center()).translation;
        let sum: f64 = rotated[idx[3]].iter().map(|q| point_score(map, k, &(q + t))).sum();
        sum / n
    });
    Ok(PoseVolume {
        grid: grid.clone(),
        cost,
        prob: Vec::new(),
    })
}

/// Joint softmax of `cost / temperature` over all entries.
pub fn softmax_volume(mut volume: PoseVolume, temperature: f64) -> Result<PoseVolume> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    let max = volume.cost.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut prob: Vec<f64> = volume.cost.iter().map(|c| ((c - max) / temperature).exp()).collect();
    let total: f64 = prob.iter().sum();
    prob.iter_mut().for_each(|p| *p /= total);
    volume.prob = prob;
    Ok(volume)
}

/// Flat index of the most probable hypothesis; the lowest index wins ties.
pub fn select_index(volume: &PoseVolume) -> Result<usize> {
    volume.require_prob()?;
    let mut best = 0;
    for (i, &p) in volume.prob.iter().enumerate() {
        if p > volume.prob[best] {
            best = i;
        }
    }
    Ok(best)
}

pub fn select_pose(volume: &PoseVolume) -> Result<EulerPose> {
    let flat = select_index(volume)?;
    Ok(volume.grid.pose_at(volume.grid.unravel(flat)))
}

/// Per-dimension standard deviation of the hypotheses around `selected`
/// under the probability volume (yaw deviations wrapped).
pub fn pose_variance(volume: &PoseVolume, selected: &EulerPose) -> Result<[f64; 4]> {
    volume.require_prob()?;
    let g = &volume.grid;
    let sel = [
        selected.x - g.center.x,
        selected.y - g.center.y,
        selected.z - g.center.z,
        wrap_degrees(selected.yaw - g.center.yaw),
    ];
    let mut var = [0.0; 4];
    for (flat, &p) in volume.prob.iter().enumerate() {
        let idx = g.unravel(flat);
        for d in 0..4 {
            let mut dev = g.axes[d][idx[d]] - sel[d];
            if d == 3 {
                dev = wrap_degrees(dev);
            }
            var[d] += p * dev * dev;
        }
    }
    Ok(var.map(f64::sqrt))
}

/// Next-level extents `max(2 λ σ, floor)`.
pub fn next_range(sigma: &[f64; 4], lambda: f64, floor: &[f64; 4]) -> Result<[f64; 4]> {
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    Ok(std::array::from_fn(|d| (2.0 * lambda * sigma[d]).max(floor[d])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::euler_to_pose;
    use proptest::prelude::*;

    fn center() -> EulerPose {
        EulerPose::new(10.0, -20.0, 150.0, 170.0, 3.0, -1.0)
    }

    fn volume_with_prob(grid: HypothesisGrid, prob: Vec<f64>) -> PoseVolume {
        PoseVolume {
            cost: vec![0.0; grid.len()],
            grid,
            prob,
        }
    }

    #[test]
    fn grid_examples() {
        let g = build_grid(&center(), &SamplingSpec::new([10.0, 4.0, 4.0, 4.0], [1, 1, 1, 1]).unwrap()).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.pose_at([0; 4]), center());

        let g = build_grid(&center(), &SamplingSpec::new([10.0, 0.0, 0.0, 7.5], [3, 1, 1, 8]).unwrap()).unwrap();
        assert_eq!(g.axes[0], vec![-5.0, 0.0, 5.0]);
        assert_eq!(g.axes[3].len(), 8);
        assert_eq!(g.axes[3][0], -3.75);
        assert_eq!(g.axes[3][7], 3.75);
        for w in g.axes[3].windows(2) {
            assert!((w[1] - w[0] - 7.5 / 7.0).abs() < 1e-12);
        }
        // yaw wraps across the +-180 seam, pitch and roll are kept
        let p = g.pose_at([2, 0, 0, 7]);
        assert!((p.yaw - wrap_degrees(173.75)).abs() < 1e-12);
        assert!((p.x - 15.0).abs() < 1e-12);
        assert_eq!((p.pitch, p.roll), (3.0, -1.0));
        assert!(SamplingSpec::new([1.0; 4], [0, 1, 1, 1]).is_err());
        assert!(SamplingSpec::new([-1.0, 1.0, 1.0, 1.0], [1; 4]).is_err());
    }

    #[test]
    fn flat_index_round_trip() {
        let g = build_grid(&center(), &SamplingSpec::new([1.0; 4], [3, 4, 5, 2]).unwrap()).unwrap();
        for flat in 0..g.len() {
            assert_eq!(g.flat_index(g.unravel(flat)), flat);
        }
        assert_eq!(g.flat_index([0, 0, 0, 1]), 1);
        assert_eq!(g.flat_index([1, 0, 0, 0]), 40);
    }

    #[test]
    fn se3_matches_euler_to_pose() {
        let g = build_grid(&center(), &SamplingSpec::new([4.0, 4.0, 4.0, 20.0], [2, 2, 2, 3]).unwrap()).unwrap();
        for flat in 0..g.len() {
            let idx = g.unravel(flat);
            assert_eq!(g.se3_at(idx), euler_to_pose(&g.pose_at(idx)));
        }
    }

    fn flat_map(w: usize, h: usize, v: f32) -> ProbabilityMap {
        ProbabilityMap::filled(w, h, 1.0, v)
    }

    #[test]
    fn score_examples() {
        let k = Intrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap();
        let pose = euler_to_pose(&EulerPose::new(0.0, 0.0, 100.0, 0.0, 0.0, 0.0));
        let pts = WireframePoints::from_points(vec![Vec3::new(1.0, 2.0, 0.0), Vec3::new(-3.0, 4.0, 10.0)]);
        assert_eq!(score_hypothesis(&flat_map(100, 100, 1.0), &pts, &k, &pose).unwrap(), 1.0);
        assert_eq!(score_hypothesis(&flat_map(100, 100, 0.0), &pts, &k, &pose).unwrap(), 0.0);
        assert!(matches!(
            score_hypothesis(&flat_map(100, 100, 0.0), &WireframePoints::default(), &k, &pose),
            Err(Error::NoWireframePoints)
        ));

        // one point reads 0.8, the other lands off-image: mean 0.4
        let mut m = flat_map(100, 100, 0.0);
        m.values[50 * 100 + 50] = 0.8;
        let pts = WireframePoints::from_points(vec![Vec3::zeros(), Vec3::new(500.0, 0.0, 0.0)]);
        let s = score_hypothesis(&m, &pts, &k, &pose).unwrap();
        assert!((s - 0.4).abs() < 1e-7);
        // behind the camera contributes zero
        let pts = WireframePoints::from_points(vec![Vec3::zeros(), Vec3::new(0.0, 0.0, 200.0)]);
        assert!((score_hypothesis(&m, &pts, &k, &pose).unwrap() - 0.4).abs() < 1e-7);
    }

    #[test]
    fn single_cell_volume_equals_score() {
        let k = Intrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap();
        let mut m = flat_map(100, 100, 0.0);
        for (i, v) in m.values.iter_mut().enumerate() {
            *v = ((i * 37) % 101) as f32 / 100.0;
        }
        let pts = WireframePoints::from_points((0..50).map(|i| Vec3::new(i as f64 * 0.7 - 15.0, (i % 7) as f64, (i % 3) as f64)).collect());
        let c = EulerPose::new(0.5, -0.5, 90.0, 12.0, 4.0, -2.0);
        let g = build_grid(&c, &SamplingSpec::new([5.0; 4], [1; 4]).unwrap()).unwrap();
        let vol = build_cost_volume(&m, &pts, &k, &g, Execution::Sequential).unwrap();
        assert_eq!(vol.cost, vec![score_hypothesis(&m, &pts, &k, &euler_to_pose(&c)).unwrap()]);
    }

    #[test]
    fn softmax_examples() {
        let g = build_grid(&center(), &SamplingSpec::new([1.0, 0.0, 0.0, 0.0], [2, 1, 1, 1]).unwrap()).unwrap();
        let v = softmax_volume(PoseVolume { grid: g.clone(), cost: vec![0.0, 1.0], prob: vec![] }, 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((v.prob[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((v.prob[1] - e / (1.0 + e)).abs() < 1e-15);
        assert!((v.prob[0] - 0.2689).abs() < 1e-4);

        let g = build_grid(&center(), &SamplingSpec::new([1.0; 4], [3, 2, 2, 2]).unwrap()).unwrap();
        let v = softmax_volume(PoseVolume { cost: vec![0.3; g.len()], grid: g, prob: vec![] }, 0.5).unwrap();
        assert!(v.prob.iter().all(|&p| (p - 1.0 / 24.0).abs() < 1e-15));
        assert!(softmax_volume(v, 0.0).is_err());
    }

    #[test]
    fn selection_examples() {
        let g = build_grid(&center(), &SamplingSpec::new([2.0, 4.0, 2.0, 6.0], [2, 3, 2, 4]).unwrap()).unwrap();
        let mut prob = vec![0.0; g.len()];
        let idx = [1, 2, 0, 3];
        prob[g.flat_index(idx)] = 1.0;
        let v = volume_with_prob(g.clone(), prob);
        assert_eq!(select_pose(&v).unwrap(), g.pose_at(idx));
        let v = volume_with_prob(g.clone(), vec![1.0 / g.len() as f64; g.len()]);
        assert_eq!(select_pose(&v).unwrap(), g.pose_at([0; 4]));
        assert!(select_pose(&PoseVolume { grid: g.clone(), cost: vec![0.0; g.len()], prob: vec![] }).is_err());
    }

    #[test]
    fn variance_examples() {
        // delta at the selected pose
        let g = build_grid(&center(), &SamplingSpec::new([10.0, 4.0, 2.0, 6.0], [3, 3, 2, 4]).unwrap()).unwrap();
        let mut prob = vec![0.0; g.len()];
        let idx = [2, 1, 0, 3];
        prob[g.flat_index(idx)] = 1.0;
        let v = volume_with_prob(g.clone(), prob);
        assert_eq!(pose_variance(&v, &g.pose_at(idx)).unwrap(), [0.0; 4]);

        // two equiprobable hypotheses at x = -5, +5, selected at +5
        let g = build_grid(&center(), &SamplingSpec::new([10.0, 0.0, 0.0, 0.0], [2, 1, 1, 1]).unwrap()).unwrap();
        let v = volume_with_prob(g.clone(), vec![0.5, 0.5]);
        let s = pose_variance(&v, &g.pose_at([1, 0, 0, 0])).unwrap();
        assert!((s[0] - 50f64.sqrt()).abs() < 1e-9);
        assert_eq!(&s[1..], &[0.0, 0.0, 0.0]);

        // uniform over a symmetric grid, selected at the center: RMS of the axis
        let g = build_grid(&center(), &SamplingSpec::new([10.0, 6.0, 30.0, 7.5], [5, 3, 7, 9]).unwrap()).unwrap();
        let n = g.len();
        let v = volume_with_prob(g.clone(), vec![1.0 / n as f64; n]);
        let s = pose_variance(&v, &g.pose_at([2, 1, 3, 4])).unwrap();
        for d in 0..4 {
            let rms = (g.axes[d].iter().map(|o| o * o).sum::<f64>() / g.axes[d].len() as f64).sqrt();
            assert!((s[d] - rms).abs() < 1e-9, "{d}");
        }
    }

    #[test]
    fn variance_wraps_yaw() {
        let c = EulerPose::new(0.0, 0.0, 100.0, 179.0, 0.0, 0.0);
        let g = build_grid(&c, &SamplingSpec::new([0.0, 0.0, 0.0, 4.0], [1, 1, 1, 2]).unwrap()).unwrap();
        let v = volume_with_prob(g.clone(), vec![0.5, 0.5]);
        let sel = g.pose_at([0, 0, 0, 1]);
        assert!((sel.yaw - -179.0).abs() < 1e-12);
        let s = pose_variance(&v, &sel).unwrap();
        assert!((s[3] - 8f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn next_range_examples() {
        assert_eq!(next_range(&[5.0, 5.0, 5.0, 2.0], 0.8, &[0.0; 4]).unwrap(), [8.0, 8.0, 8.0, 3.2]);
        assert_eq!(next_range(&[0.0; 4], 0.8, &[1.0, 2.0, 3.0, 4.0]).unwrap(), [1.0, 2.0, 3.0, 4.0]);
        let a = next_range(&[3.0, 1.0, 2.0, 0.5], 1.0, &[0.0; 4]).unwrap();
        let b = next_range(&[3.0, 1.0, 2.0, 0.5], 0.5, &[0.0; 4]).unwrap();
        for d in 0..4 {
            assert_eq!(b[d] * 2.0, a[d]);
        }
        assert!(next_range(&[1.0; 4], 0.0, &[0.0; 4]).is_err());
    }

    #[test]
    fn nearest_index_wraps_yaw() {
        let c = EulerPose::new(0.0, 0.0, 100.0, 178.0, 0.0, 0.0);
        let g = build_grid(&c, &SamplingSpec::new([10.0, 10.0, 10.0, 6.0], [3, 3, 3, 3]).unwrap()).unwrap();
        let t = EulerPose::new(4.0, -1.0, 96.0, -179.5, 0.0, 0.0);
        assert_eq!(g.nearest_index(&t), [2, 1, 0, 2]);
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant_and_normalized(costs in proptest::collection::vec(0.0f64..1.0, 24), shift in -5.0f64..5.0, tau in 0.01f64..2.0) {
            let g = build_grid(&center(), &SamplingSpec::new([1.0; 4], [2, 3, 2, 2]).unwrap()).unwrap();
            let a = softmax_volume(PoseVolume { grid: g.clone(), cost: costs.clone(), prob: vec![] }, tau).unwrap();
            let b = softmax_volume(PoseVolume { grid: g, cost: costs.iter().map(|c| c + shift).collect(), prob: vec![] }, tau).unwrap();
            prop_assert!((a.prob.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for (x, y) in a.prob.iter().zip(&b.prob) {
                prop_assert!((x - y).abs() < 1e-12);
                prop_assert!(*x >= 0.0);
            }
        }

        #[test]
        fn argmax_affine_invariant(costs in proptest::collection::vec(0.0f64..1.0, 24), scale in 0.01f64..100.0, offset in -10.0f64..10.0) {
            let g = build_grid(&center(), &SamplingSpec::new([1.0; 4], [2, 3, 2, 2]).unwrap()).unwrap();
            let a = softmax_volume(PoseVolume { grid: g.clone(), cost: costs.clone(), prob: vec![] }, 1.0).unwrap();
            let b = softmax_volume(PoseVolume { grid: g, cost: costs.iter().map(|c| scale * c + offset).collect(), prob: vec![] }, 1.0).unwrap();
            let best = costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let ties = costs.iter().filter(|&&c| c == best).count();
            prop_assume!(ties == 1);
            prop_assert_eq!(select_index(&a).unwrap(), select_index(&b).unwrap());
        }
    }
}
