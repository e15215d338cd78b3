//! Randomized scene construction. Every scene reserves clearance around the
//! arm's base and around the link points of two anchor configurations, so a
//! start/goal query near the anchors is guaranteed collision-free.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LayoutTag, Scene, Sphere, WorldError};
use crate::kinematics::{JointConfig, KinematicChain};

#[derive(Clone, Debug)]
pub struct SceneGenConfig {
    pub layout: LayoutTag,
    /// Obstacle count bounds for the random-spheres layout, inclusive.
    pub count_range: [usize; 2],
    pub radius_range: [f64; 2],
    /// Workspace cube half-extent, centered on the chain base.
    pub half_extent: f64,
    /// Reserved free radius around each anchor link point.
    pub clearance_radius: f64,
    /// Reserved free radius around the chain base.
    pub base_clearance: f64,
    /// Minimum joint-space distance between the two anchors (radians).
    pub anchor_separation: f64,
    pub max_attempts: usize,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        SceneGenConfig {
            layout: LayoutTag::Spheres,
            count_range: [10, 16],
            radius_range: [0.08, 0.18],
            half_extent: 1.0,
            clearance_radius: 0.12,
            base_clearance: 0.15,
            anchor_separation: 1.0,
            max_attempts: 10_000,
        }
    }
}

/// A scene plus the two anchor configurations its clearance was carved for.
#[derive(Clone, Debug)]
pub struct GeneratedScene {
    pub scene: Scene,
    pub start_anchor: JointConfig,
    pub goal_anchor: JointConfig,
}

impl GeneratedScene {
    /// Draw a collision-free (start, goal) pair by perturbing the anchors;
    /// the anchors themselves are the fallback, so this always succeeds.
    pub fn sample_query(&self, chain: &KinematicChain, rng: &mut impl Rng, perturb: f64) -> (JointConfig, JointConfig) {
        if perturb <= 0.0 {
            return (self.start_anchor.clone(), self.goal_anchor.clone());
        }
        let mut draw = |anchor: &JointConfig| {
            for _ in 0..100 {
                let q = chain.clamp(&JointConfig::new(
                    anchor.angles().iter().map(|a| a + rng.random_range(-perturb..perturb)).collect(),
                ));
                if !chain.in_collision(&q, &self.scene) {
                    return q;
                }
            }
            anchor.clone()
        };
        (draw(&self.start_anchor), draw(&self.goal_anchor))
    }
}

struct ClearanceBalls {
    centers: Vec<Point3<f64>>,
    radius: f64,
    base: Point3<f64>,
    base_radius: f64,
}

impl ClearanceBalls {
    fn blocks(&self, s: &Sphere) -> bool {
        let c = s.center_point();
        if (c - self.base).norm() < s.radius + self.base_radius {
            return true;
        }
        self.centers.iter().any(|b| (c - b).norm() < s.radius + self.radius)
    }
}

/// Deterministic scene synthesis for one seed.
pub fn generate_scene(chain: &KinematicChain, seed: u64, cfg: &SceneGenConfig) -> Result<GeneratedScene, WorldError> {
    assert!(cfg.count_range[0] >= 1 && cfg.count_range[1] <= 64, "count range outside [1, 64]");
    assert!(cfg.count_range[0] <= cfg.count_range[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (start_anchor, goal_anchor) = pick_anchors(chain, &mut rng, cfg)?;
    let mut centers: Vec<Point3<f64>> = Vec::new();
    for q in [&start_anchor, &goal_anchor] {
        centers.extend(chain.fk_points(q).iter().copied());
    }
    let balls = ClearanceBalls {
        centers,
        radius: cfg.clearance_radius,
        base: chain.base_position(),
        base_radius: cfg.base_clearance,
    };

    let base = chain.base_position();
    let min = base - Vector3::repeat(cfg.half_extent);
    let max = base + Vector3::repeat(cfg.half_extent);
    let obstacles = match cfg.layout {
        LayoutTag::Spheres => random_spheres(chain, &mut rng, cfg, &balls)?,
        LayoutTag::BinLike => place_slab_shape(&mut rng, cfg, &balls, bin_spheres)?,
        LayoutTag::ShelfLike => place_slab_shape(&mut rng, cfg, &balls, shelf_spheres)?,
    };

    Ok(GeneratedScene {
        scene: Scene::new(obstacles, min, max, cfg.layout),
        start_anchor,
        goal_anchor,
    })
}

fn pick_anchors(
    chain: &KinematicChain,
    rng: &mut ChaCha8Rng,
    cfg: &SceneGenConfig,
) -> Result<(JointConfig, JointConfig), WorldError> {
    for _ in 0..cfg.max_attempts {
        let a = chain.sample_config(rng);
        let b = chain.sample_config(rng);
        if a.distance(&b) >= cfg.anchor_separation {
            return Ok((a, b));
        }
    }
    Err(WorldError::PlacementFailed(cfg.max_attempts))
}

fn random_spheres(
    chain: &KinematicChain,
    rng: &mut ChaCha8Rng,
    cfg: &SceneGenConfig,
    balls: &ClearanceBalls,
) -> Result<Vec<Sphere>, WorldError> {
    let count = rng.random_range(cfg.count_range[0]..=cfg.count_range[1]);
    let base = chain.base_position();
    let planar = chain.dimensionality() == crate::kinematics::Dimensionality::Planar;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut placed = false;
        for _ in 0..cfg.max_attempts {
            let radius = rng.random_range(cfg.radius_range[0]..cfg.radius_range[1]);
            // Planar chains live at z = 0; keep every obstacle cutting that
            // plane so it actually constrains the arm.
            let z = if planar {
                rng.random_range(-0.8 * radius..0.8 * radius)
            } else {
                rng.random_range(-cfg.half_extent..cfg.half_extent)
            };
            let center = Point3::new(
                base.x + rng.random_range(-cfg.half_extent..cfg.half_extent),
                base.y + rng.random_range(-cfg.half_extent..cfg.half_extent),
                base.z + z,
            );
            let sphere = Sphere::new(center, radius);
            if !balls.blocks(&sphere) {
                out.push(sphere);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(WorldError::PlacementFailed(cfg.max_attempts));
        }
    }
    Ok(out)
}

/// Retry a constructive layout until none of its spheres violates clearance.
fn place_slab_shape(
    rng: &mut ChaCha8Rng,
    cfg: &SceneGenConfig,
    balls: &ClearanceBalls,
    build: fn(&mut ChaCha8Rng, &SceneGenConfig) -> Vec<Sphere>,
) -> Result<Vec<Sphere>, WorldError> {
    for _ in 0..cfg.max_attempts {
        let spheres = build(rng, cfg);
        if spheres.iter().all(|s| !balls.blocks(s)) {
            return Ok(spheres);
        }
    }
    Err(WorldError::PlacementFailed(cfg.max_attempts))
}

/// Five slabs of tangent spheres: a 4 x 4 floor and four 3-row side walls
/// forming closed rings, open top. The y-facing walls skip the corner
/// columns the x-facing walls already fill.
fn bin_spheres(rng: &mut ChaCha8Rng, cfg: &SceneGenConfig) -> Vec<Sphere> {
    let cells = 4usize;
    let side = rng.random_range(0.32..0.44);
    let r = side / (2.0 * cells as f64);
    let height = 3.0 * 2.0 * r;
    let reach = 0.55 * cfg.half_extent;
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let cx = reach * angle.cos();
    let cy = reach * angle.sin();
    let z0 = -height / 2.0;

    let lattice = |i: usize| -side / 2.0 + r + i as f64 * 2.0 * r;
    let mut out = Vec::with_capacity(52);
    for i in 0..cells {
        for j in 0..cells {
            out.push(Sphere::new(Point3::new(cx + lattice(i), cy + lattice(j), z0), r));
        }
    }
    for k in 0..3 {
        let z = z0 + (k as f64 + 1.0) * 2.0 * r;
        for i in 0..cells {
            out.push(Sphere::new(Point3::new(cx + lattice(i), cy - side / 2.0 + r, z), r));
            out.push(Sphere::new(Point3::new(cx + lattice(i), cy + side / 2.0 - r, z), r));
        }
        for i in 1..cells - 1 {
            out.push(Sphere::new(Point3::new(cx - side / 2.0 + r, cy + lattice(i), z), r));
            out.push(Sphere::new(Point3::new(cx + side / 2.0 - r, cy + lattice(i), z), r));
        }
    }
    out
}

/// A back wall and two horizontal boards of tangent spheres.
fn shelf_spheres(rng: &mut ChaCha8Rng, cfg: &SceneGenConfig) -> Vec<Sphere> {
    let r = rng.random_range(0.045..0.06);
    let width_cells = 5usize;
    let depth_cells = 3usize;
    let height_cells = 4usize;
    let reach = 0.6 * cfg.half_extent;
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let (sin, cos) = angle.sin_cos();

    // Local frame: u along the shelf face, v into the shelf, w up.
    let place = |u: f64, v: f64, w: f64| {
        Point3::new(reach * cos + u * -sin + v * cos, reach * sin + u * cos + v * sin, w)
    };
    let mut out = Vec::new();
    let u0 = -(width_cells as f64 - 1.0) * r;
    let w0 = -(height_cells as f64 - 1.0) * r;
    for i in 0..width_cells {
        for k in 0..height_cells {
            out.push(Sphere::new(place(u0 + 2.0 * r * i as f64, depth_cells as f64 * 2.0 * r, w0 + 2.0 * r * k as f64), r));
        }
    }
    for level in 0..2 {
        let w = w0 + level as f64 * (height_cells as f64 - 1.0) * 2.0 * r;
        for i in 0..width_cells {
            for j in 0..depth_cells {
                out.push(Sphere::new(place(u0 + 2.0 * r * i as f64, 2.0 * r * j as f64, w), r));
            }
        }
    }
    out
}
