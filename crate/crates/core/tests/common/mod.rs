#![allow(dead_code)]

use lodloc_core::camera::{euler_to_pose, EulerPose, Intrinsics};
use lodloc_core::exec::Execution;
use lodloc_core::geometry::{extract_wireframe, sample_points, Mesh, WireframePoints};
use lodloc_core::oracle::{synth_pyramid, NoiseSpec, ProbabilityMapPyramid, DEFAULT_SIGMA_PX};
use lodloc_core::scene::{box_city, default_intrinsics, CityConfig};
use lodloc_core::visibility::{cull_points, DEFAULT_VISIBILITY_EPS};

pub struct Scene {
    pub mesh: Mesh,
    pub k: Intrinsics,
    /// Localization points, 1 m spacing.
    pub points: WireframePoints,
    /// Oracle rendering points, 0.25 m spacing.
    pub dense: WireframePoints,
}

pub fn city(seed: u64) -> Scene {
    let mesh = box_city(&CityConfig { seed, half_extent: 200.0, ..Default::default() }).unwrap();
    let edges = extract_wireframe(&mesh, 10.0).unwrap();
    Scene {
        k: default_intrinsics(),
        points: sample_points(&edges, 1.0).unwrap(),
        dense: sample_points(&edges, 0.25).unwrap(),
        mesh,
    }
}

impl Scene {
    pub fn pyramid(&self, at: &EulerPose, noise: &NoiseSpec) -> ProbabilityMapPyramid {
        let pose = euler_to_pose(at);
        let vis = cull_points(&self.dense, &self.mesh, &self.k, &pose, DEFAULT_VISIBILITY_EPS, Execution::Parallel).unwrap();
        synth_pyramid(&vis, &self.k, &pose, DEFAULT_SIGMA_PX, noise, Execution::Parallel).unwrap()
    }

    pub fn visible(&self, at: &EulerPose) -> WireframePoints {
        let pose = euler_to_pose(at);
        cull_points(&self.points, &self.mesh, &self.k, &pose, DEFAULT_VISIBILITY_EPS, Execution::Parallel).unwrap()
    }
}

pub fn gt_pose() -> EulerPose {
    EulerPose::new(12.0, -25.0, 150.0, 33.0, 8.0, -2.0)
}
