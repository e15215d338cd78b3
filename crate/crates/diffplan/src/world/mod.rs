//! Scenes, occupancy grids, synthetic depth cameras, and voxel carving.
//!
//! A scene is a set of spherical obstacles inside an axis-aligned workspace
//! box. Perception is simulated end to end: depth images rendered against
//! the spheres are carved into a voxel grid, and occupied-cell coordinates
//! feed the scene encoder. `analytic_occupancy` is the ground-truth oracle
//! the carve is judged against.

mod carve;
mod render;
mod scenegen;

pub use carve::{voxel_carve, voxel_carve_states, CarvedStates};
pub use render::{default_rig, render_depth, Camera, DepthImage, PinholeIntrinsics};
pub use scenegen::{generate_scene, GeneratedScene, SceneGenConfig};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("no valid obstacle placement after {0} attempts")]
    PlacementFailed(usize),
    #[error("camera center is inside an obstacle")]
    CameraInsideObstacle,
    #[error("voxel grid file: {0}")]
    BadGridFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("scene JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
}

impl Sphere {
    pub fn new(center: Point3<f64>, radius: f64) -> Self {
        Sphere { center: [center.x, center.y, center.z], radius }
    }

    pub fn center_point(&self) -> Point3<f64> {
        Point3::from(self.center)
    }

    /// Strict interior test.
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (p - self.center_point()).norm_squared() < self.radius * self.radius
    }

    /// Distance from a point to the sphere surface; negative inside.
    pub fn surface_distance(&self, p: &Point3<f64>) -> f64 {
        (p - self.center_point()).norm() - self.radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutTag {
    /// Independently placed random spheres.
    Spheres,
    /// Four walls plus a floor of tangent spheres, open top.
    BinLike,
    /// Horizontal boards of tangent spheres with a back wall.
    ShelfLike,
}

impl std::fmt::Display for LayoutTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LayoutTag::Spheres => "spheres",
            LayoutTag::BinLike => "bin-like",
            LayoutTag::ShelfLike => "shelf-like",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for LayoutTag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "spheres" => Ok(LayoutTag::Spheres),
            "bin-like" | "bin" => Ok(LayoutTag::BinLike),
            "shelf-like" | "shelf" => Ok(LayoutTag::ShelfLike),
            other => Err(format!("unknown layout '{other}' (spheres | bin-like | shelf-like)")),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scene {
    obstacles: Vec<Sphere>,
    bounds: Bounds,
    layout_tag: LayoutTag,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct Bounds {
    min: [f64; 3],
    max: [f64; 3],
}

impl Scene {
    pub fn new(obstacles: Vec<Sphere>, min: Point3<f64>, max: Point3<f64>, layout_tag: LayoutTag) -> Self {
        Scene {
            obstacles,
            bounds: Bounds { min: [min.x, min.y, min.z], max: [max.x, max.y, max.z] },
            layout_tag,
        }
    }

    pub fn obstacles(&self) -> &[Sphere] {
        &self.obstacles
    }

    pub fn bounds_min(&self) -> Point3<f64> {
        Point3::from(self.bounds.min)
    }

    pub fn bounds_max(&self) -> Point3<f64> {
        Point3::from(self.bounds.max)
    }

    pub fn layout_tag(&self) -> LayoutTag {
        self.layout_tag
    }

    pub fn to_json(&self) -> Result<String, WorldError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self, WorldError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), WorldError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        Scene::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Minimum surface distance from a point to any obstacle; +inf when empty.
    pub fn clearance(&self, p: &Point3<f64>) -> f64 {
        self.obstacles
            .iter()
            .map(|o| o.surface_distance(p))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Geometry of a voxel grid: `origin` is the minimum corner, cells are
/// cubes of edge `resolution`, indexed row-major with x outermost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub origin: Point3<f64>,
    pub resolution: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    /// Cube grid covering `[center - half, center + half]^3` with `cells`
    /// voxels per edge.
    pub fn cube(center: Point3<f64>, half_extent: f64, cells: usize) -> Self {
        GridSpec {
            origin: center - Vector3::repeat(half_extent),
            resolution: 2.0 * half_extent / cells as f64,
            dims: [cells; 3],
        }
    }

    pub fn cell_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn cell_center(&self, c: [usize; 3]) -> Point3<f64> {
        self.origin
            + Vector3::new(
                (c[0] as f64 + 0.5) * self.resolution,
                (c[1] as f64 + 0.5) * self.resolution,
                (c[2] as f64 + 0.5) * self.resolution,
            )
    }

    pub fn linear(&self, c: [usize; 3]) -> usize {
        (c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]
    }

    /// Cell containing a point, or None outside the grid.
    pub fn cell_of(&self, p: &Point3<f64>) -> Option<[usize; 3]> {
        let rel = (p - self.origin) / self.resolution;
        let mut c = [0usize; 3];
        for (i, &x) in [rel.x, rel.y, rel.z].iter().enumerate() {
            if x < 0.0 || x >= self.dims[i] as f64 {
                return None;
            }
            c[i] = x as usize;
        }
        Some(c)
    }

    pub fn min_corner(&self) -> Point3<f64> {
        self.origin
    }

    pub fn max_corner(&self) -> Point3<f64> {
        self.origin
            + Vector3::new(
                self.dims[0] as f64 * self.resolution,
                self.dims[1] as f64 * self.resolution,
                self.dims[2] as f64 * self.resolution,
            )
    }
}

/// Bit-packed binary occupancy over a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    spec: GridSpec,
    bits: Vec<u8>,
}

impl VoxelGrid {
    pub fn empty(spec: GridSpec) -> Self {
        let bytes = spec.cell_count().div_ceil(8);
        VoxelGrid { spec, bits: vec![0; bytes] }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn get(&self, c: [usize; 3]) -> bool {
        let i = self.spec.linear(c);
        self.bits[i / 8] & (1 << (i % 8)) != 0
    }

    pub fn set(&mut self, c: [usize; 3], value: bool) {
        let i = self.spec.linear(c);
        if value {
            self.bits[i / 8] |= 1 << (i % 8);
        } else {
            self.bits[i / 8] &= !(1 << (i % 8));
        }
    }

    pub fn occupied_count(&self) -> usize {
        let full = self.spec.cell_count();
        (0..full).filter(|&i| self.bits[i / 8] & (1 << (i % 8)) != 0).count()
    }

    /// Occupied cell indices in lexicographic (x, y, z) order.
    pub fn occupied_cells(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [nx, ny, nz] = self.spec.dims;
        (0..nx)
            .flat_map(move |i| (0..ny).flat_map(move |j| (0..nz).map(move |k| [i, j, k])))
            .filter(|&c| self.get(c))
    }

    /// Intersection-over-union of occupied sets. Two empty grids give 1.
    pub fn iou(&self, other: &VoxelGrid) -> f64 {
        assert_eq!(self.spec, other.spec, "IoU over mismatched grids");
        let (mut inter, mut union) = (0usize, 0usize);
        for i in 0..self.spec.cell_count() {
            let a = self.bits[i / 8] & (1 << (i % 8)) != 0;
            let b = other.bits[i / 8] & (1 << (i % 8)) != 0;
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Header: origin (3 f64), resolution (f64), dims (3 u32), all little
    /// endian, then bit-packed occupancy (LSB first, row-major).
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), WorldError> {
        for v in [self.spec.origin.x, self.spec.origin.y, self.spec.origin.z, self.spec.resolution] {
            w.write_all(&v.to_le_bytes())?;
        }
        for d in self.spec.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        w.write_all(&self.bits)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, WorldError> {
        let mut f = [0u8; 8];
        let mut floats = [0f64; 4];
        for v in &mut floats {
            r.read_exact(&mut f)?;
            *v = f64::from_le_bytes(f);
        }
        let mut dims = [0usize; 3];
        let mut u = [0u8; 4];
        for d in &mut dims {
            r.read_exact(&mut u)?;
            *d = u32::from_le_bytes(u) as usize;
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(WorldError::BadGridFile(format!("zero dimension in {dims:?}")));
        }
        let spec = GridSpec {
            origin: Point3::new(floats[0], floats[1], floats[2]),
            resolution: floats[3],
            dims,
        };
        if !(spec.resolution > 0.0) || !spec.resolution.is_finite() {
            return Err(WorldError::BadGridFile(format!("bad resolution {}", spec.resolution)));
        }
        let mut bits = vec![0u8; spec.cell_count().div_ceil(8)];
        r.read_exact(&mut bits)?;
        Ok(VoxelGrid { spec, bits })
    }

    pub fn save(&self, path: &Path) -> Result<(), WorldError> {
        let mut f = std::fs::File::create(path)?;
        self.write_to(&mut f)
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let mut f = std::fs::File::open(path)?;
        VoxelGrid::read_from(&mut f)
    }
}

/// Ground truth: a cell is occupied iff its center is inside some obstacle.
pub fn analytic_occupancy(scene: &Scene, spec: GridSpec) -> VoxelGrid {
    let mut grid = VoxelGrid::empty(spec);
    let [nx, ny, nz] = spec.dims;
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let p = spec.cell_center([i, j, k]);
                if scene.obstacles.iter().any(|o| o.contains(&p)) {
                    grid.set([i, j, k], true);
                }
            }
        }
    }
    grid
}

/// Occupied-cell center coordinates, the scene-encoder input.
#[derive(Clone, Debug)]
pub struct OccupiedVoxelSet {
    coords: Vec<Point3<f64>>,
}

impl OccupiedVoxelSet {
    /// Wrap raw coordinates (tools and tests; the pipeline goes through
    /// [`occupied_coords`]).
    pub fn from_coords(coords: Vec<Point3<f64>>) -> Self {
        OccupiedVoxelSet { coords }
    }

    pub fn coords(&self) -> &[Point3<f64>] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Extract occupied-cell centers in lexicographic order. Above `max_voxels`
/// the list is thinned by a stratified subsample seeded from the grid's own
/// content hash, so the same grid always yields the same subset. An empty
/// grid yields one sentinel coordinate far outside the workspace.
pub fn occupied_coords(grid: &VoxelGrid, max_voxels: usize) -> OccupiedVoxelSet {
    assert!(max_voxels >= 1, "max_voxels must be at least 1");
    let all: Vec<[usize; 3]> = grid.occupied_cells().collect();
    if all.is_empty() {
        let center = nalgebra::center(&grid.spec.min_corner(), &grid.spec.max_corner());
        let extent = grid.spec.max_corner() - grid.spec.min_corner();
        return OccupiedVoxelSet { coords: vec![center + 100.0 * extent] };
    }
    let picked: Vec<[usize; 3]> = if all.len() <= max_voxels {
        all
    } else {
        use rand::{Rng, SeedableRng};
        let mut h: u64 = 0xcbf29ce484222325;
        for b in &grid.bits {
            h = (h ^ *b as u64).wrapping_mul(0x100000001b3);
        }
        for d in grid.spec.dims {
            h = (h ^ d as u64).wrapping_mul(0x100000001b3);
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(h);
        // One pick per stratum keeps spatial coverage and the sorted order.
        (0..max_voxels)
            .map(|s| {
                let lo = s * all.len() / max_voxels;
                let hi = (s + 1) * all.len() / max_voxels;
                all[rng.random_range(lo..hi)]
            })
            .collect()
    };
    OccupiedVoxelSet { coords: picked.iter().map(|&c| grid.spec.cell_center(c)).collect() }
}
