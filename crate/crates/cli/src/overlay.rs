//! Wireframe overlays rendered as binary PPM.

use lodloc_core::camera::{Intrinsics, PoseSE3};
use lodloc_core::geometry::WireframeEdge;
use lodloc_core::oracle::ProbabilityMap;

const NEAR: f64 = 0.1;

pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Canvas {
    /// Grayscale copy of a probability map.
    pub fn from_map(map: &ProbabilityMap) -> Self {
        let rgb = map
            .values
            .iter()
            .flat_map(|&v| {
                let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                [g, g, g]
            })
            .collect();
        Canvas {
            width: map.width,
            height: map.height,
            rgb,
        }
    }

    fn put(&mut self, x: f64, y: f64, color: [u8; 3]) {
        let (xi, yi) = (x.round(), y.round());
        if xi >= 0.0 && yi >= 0.0 && (xi as usize) < self.width && (yi as usize) < self.height {
            let i = 3 * (yi as usize * self.width + xi as usize);
            self.rgb[i..i + 3].copy_from_slice(&color);
        }
    }

    /// Draws each edge projected through `pose`, clipped at a near plane.
    pub fn draw_edges(&mut self, edges: &[WireframeEdge], k: &Intrinsics, pose: &PoseSE3, color: [u8; 3]) {
        for e in edges {
            let mut a = pose.transform(&e.endpoints[0]);
            let mut b = pose.transform(&e.endpoints[1]);
            if a.z < NEAR && b.z < NEAR {
                continue;
            }
            if a.z < NEAR || b.z < NEAR {
                let s = (NEAR - a.z) / (b.z - a.z);
                let c = a + (b - a) * s;
                if a.z < NEAR {
                    a = c;
                } else {
                    b = c;
                }
            }
            let (u0, v0) = k.pixel(&a);
            let (u1, v1) = k.pixel(&b);
            let steps = (u1 - u0).abs().max((v1 - v0).abs()).ceil().min(4096.0) as usize + 1;
            for i in 0..=steps {
                let t = i as f64 / steps as f64;
                self.put(u0 + (u1 - u0) * t, v0 + (v1 - v0) * t, color);
            }
        }
    }
}
