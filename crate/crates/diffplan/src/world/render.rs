//! Synthetic pinhole depth cameras: analytic ray-sphere intersection,
//! Euclidean range per pixel, +inf on miss.

use nalgebra::{Isometry3, Point3, Unit, Vector3};

use super::{GridSpec, Scene, WorldError};

#[derive(Clone, Copy, Debug)]
pub struct PinholeIntrinsics {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Clone, Debug)]
pub struct Camera {
    /// Camera-to-world; the camera looks along its local +z.
    pub pose: Isometry3<f64>,
    pub intrinsics: PinholeIntrinsics,
}

impl Camera {
    pub fn look_at(eye: Point3<f64>, target: Point3<f64>, up: Vector3<f64>, intrinsics: PinholeIntrinsics) -> Self {
        Camera { pose: Isometry3::face_towards(&eye, &target, &up), intrinsics }
    }

    pub fn center(&self) -> Point3<f64> {
        Point3::from(self.pose.translation.vector)
    }

    /// World-space ray through the center of pixel (u, v).
    pub fn ray(&self, u: usize, v: usize) -> (Point3<f64>, Unit<Vector3<f64>>) {
        let i = &self.intrinsics;
        let dir_cam = Vector3::new(
            (u as f64 + 0.5 - i.cx) / i.fx,
            (v as f64 + 0.5 - i.cy) / i.fy,
            1.0,
        );
        let dir = Unit::new_normalize(self.pose.rotation * dir_cam);
        (self.center(), dir)
    }
}

#[derive(Clone, Debug)]
pub struct DepthImage {
    pub camera: Camera,
    /// Row-major, width * height entries; +inf where no surface was hit.
    pub depth: Vec<f64>,
}

impl DepthImage {
    pub fn depth_at(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.camera.intrinsics.width + u]
    }
}

/// Nearest positive ray-sphere hit along a unit direction, if any.
fn cast(origin: &Point3<f64>, dir: &Unit<Vector3<f64>>, scene: &Scene) -> f64 {
    let mut best = f64::INFINITY;
    for o in scene.obstacles() {
        let to_center = o.center_point() - origin;
        let b = dir.dot(&to_center);
        let disc = b * b - (to_center.norm_squared() - o.radius * o.radius);
        if disc < 0.0 {
            continue;
        }
        let t = b - disc.sqrt();
        if t > 1e-12 && t < best {
            best = t;
        }
    }
    best
}

/// Render one depth image. The camera center must lie outside every obstacle.
pub fn render_depth(scene: &Scene, camera: &Camera) -> Result<DepthImage, WorldError> {
    let c = camera.center();
    if scene.obstacles().iter().any(|o| o.contains(&c)) {
        return Err(WorldError::CameraInsideObstacle);
    }
    let (w, h) = (camera.intrinsics.width, camera.intrinsics.height);
    let mut depth = vec![f64::INFINITY; w * h];
    for v in 0..h {
        for u in 0..w {
            let (origin, dir) = camera.ray(u, v);
            depth[v * w + u] = cast(&origin, &dir, scene);
        }
    }
    Ok(DepthImage { camera: camera.clone(), depth })
}

/// Six cameras on the faces of an inflated cube around the grid, each
/// covering the whole volume. 64 x 64 pixels.
pub fn default_rig(spec: &GridSpec) -> Vec<Camera> {
    let center = nalgebra::center(&spec.min_corner(), &spec.max_corner());
    let half = (spec.max_corner() - spec.min_corner()).amax() / 2.0;
    let dist = 2.5 * half;
    // Nearest cube face is at dist - half; the view cone must cover the
    // cross-section half-diagonal there, with some margin.
    let tan_half_fov = (std::f64::consts::SQRT_2 * half * 1.15) / (dist - half);
    let (w, h) = (64usize, 64usize);
    let f = w as f64 / (2.0 * tan_half_fov);
    let intrinsics = PinholeIntrinsics {
        width: w,
        height: h,
        fx: f,
        fy: f,
        cx: w as f64 / 2.0,
        cy: h as f64 / 2.0,
    };
    let dirs: [Vector3<f64>; 6] = [
        Vector3::x(),
        -Vector3::x(),
        Vector3::y(),
        -Vector3::y(),
        Vector3::z(),
        -Vector3::z(),
    ];
    dirs.iter()
        .map(|d| {
            let up = if d.x.abs() < 0.5 && d.y.abs() < 0.5 { Vector3::x() } else { Vector3::z() };
            Camera::look_at(center + d.scale(dist), center, up, intrinsics)
        })
        .collect()
}
