//! Pinhole camera model, rigid poses and the Euler-angle convention.
//!
//! World frame is a local metric ENU frame (x east, y north, z up). The
//! camera frame is x right, y down, z forward. At zero Euler angles the
//! camera looks straight down (world -Z) with image x along world +X and
//! image y along world -Y.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Pitch magnitude (degrees) at which Euler extraction is refused.
pub const GIMBAL_LIMIT_DEG: f64 = 89.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::invalid("focal lengths must be finite and positive"));
        }
        if !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(Error::invalid("principal point outside the image"));
        }
        Ok(())
    }

    /// Intrinsics for a map at `scale` times the full resolution.
    pub fn scaled(&self, scale: f64) -> Intrinsics {
        Intrinsics {
            fx: self.fx * scale,
            fy: self.fy * scale,
            cx: self.cx * scale,
            cy: self.cy * scale,
            width: scaled_dim(self.width, scale),
            height: scaled_dim(self.height, scale),
        }
    }

    /// Pixel coordinates of a camera-frame point. The caller checks depth.
    #[inline]
    pub fn pixel(&self, p_cam: &Vec3) -> (f64, f64) {
        (
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        )
    }
}

pub fn scaled_dim(full: usize, scale: f64) -> usize {
    (full as f64 * scale).round() as usize
}

/// World-to-camera rigid transform: `p_cam = R * p_world + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl PoseSE3 {
    pub fn identity() -> Self {
        PoseSE3 {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    #[inline]
    pub fn transform(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Max deviation of `RᵀR` from identity.
    pub fn orthogonality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Mat3::identity()).amax()
    }
}

/// Camera center plus yaw/pitch/roll in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl EulerPose {
    pub fn new(x: f64, y: f64, z: f64, yaw: f64, pitch: f64, roll: f64) -> Self {
        EulerPose {
            x,
            y,
            z,
            yaw,
            pitch,
            roll,
        }
    }

    pub fn center(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    /// The four sampled dimensions `(x, y, z, yaw)`.
    pub fn dof4(&self) -> [f64; 4] {
        [self.x, self.y, self.z, self.yaw]
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.z, self.yaw, self.pitch, self.roll]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Maps an angle in degrees into `(-180, 180]`.
pub fn wrap_degrees(a: f64) -> f64 {
    let mut w = a % 360.0;
    if w > 180.0 {
        w -= 360.0;
    } else if w <= -180.0 {
        w += 360.0;
    }
    w
}

/// World-to-camera basis of the zero-angle (nadir) camera.
pub fn nadir_basis() -> Mat3 {
    Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0)
}

pub fn rot_x(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// World-to-camera rotation for the given angles (intrinsic Z-Y'-X'').
pub fn euler_rotation(yaw: f64, pitch: f64, roll: f64) -> Mat3 {
    nadir_basis() * rot_x(roll).transpose() * rot_y(pitch).transpose() * rot_z(yaw).transpose()
}

pub fn euler_to_pose(e: &EulerPose) -> PoseSE3 {
    let rotation = euler_rotation(e.yaw, e.pitch, e.roll);
    pose_from_rotation_center(rotation, &e.center())
}

/// `t = -R c`, computed the same way everywhere so hypothesis poses agree
/// bit-for-bit regardless of the path that built them.
#[inline]
pub fn pose_from_rotation_center(rotation: Mat3, center: &Vec3) -> PoseSE3 {
    PoseSE3 {
        rotation,
        translation: -(rotation * center),
    }
}

pub fn pose_to_euler(p: &PoseSE3) -> Result<EulerPose> {
    // R_cw * B = Rz(yaw) Ry(pitch) Rx(roll)
    let m = p.rotation.transpose() * nadir_basis();
    let sp = (-m[(2, 0)]).clamp(-1.0, 1.0);
    let pitch = sp.asin().to_degrees();
    if !(pitch.abs() < GIMBAL_LIMIT_DEG) {
        return Err(Error::EulerSingular);
    }
    let yaw = m[(1, 0)].atan2(m[(0, 0)]).to_degrees();
    let roll = m[(2, 1)].atan2(m[(2, 2)]).to_degrees();
    let c = p.center();
    Ok(EulerPose::new(
        c.x,
        c.y,
        c.z,
        wrap_degrees(yaw),
        pitch,
        wrap_degrees(roll),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

pub fn project(k: &Intrinsics, pose: &PoseSE3, p: &Vec3) -> Result<Projection> {
    let pc = pose.transform(p);
    if pc.z.abs() < 1e-12 {
        return Err(Error::ProjectionSingular);
    }
    let (u, v) = k.pixel(&pc);
    Ok(Projection { u, v, depth: pc.z })
}

pub fn skew(w: &Vec3) -> Mat3 {
    Mat3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Exponential map of so(3) (Rodrigues), angle in radians.
pub fn so3_exp(w: &Vec3) -> Mat3 {
    let theta = w.norm();
    let k = skew(w);
    if theta < 1e-8 {
        return Mat3::identity() + k + k * k * 0.5;
    }
    let (s, c) = theta.sin_cos();
    Mat3::identity() + k * (s / theta) + k * k * ((1.0 - c) / (theta * theta))
}
