//! Space carving: depth images vote cells free along their rays and
//! occupied at back-projected surface points. Occupied beats free; cells
//! no ray ever reaches stay unknown and are resolved by policy.

use nalgebra::{Point3, Unit, Vector3};

use super::{DepthImage, GridSpec, VoxelGrid};

const UNKNOWN: u8 = 0;
const FREE: u8 = 1;
const OCCUPIED: u8 = 2;

/// Three-state carve result before the unknown policy is applied.
#[derive(Clone, Debug)]
pub struct CarvedStates {
    spec: GridSpec,
    states: Vec<u8>,
}

impl CarvedStates {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Unknown cells count as free: the encoder-input policy.
    pub fn optimistic(&self) -> VoxelGrid {
        self.resolve(|s| s == OCCUPIED)
    }

    /// Unknown cells count as occupied: the visual hull, for conservative
    /// planning and for judging carve quality against analytic occupancy.
    pub fn conservative(&self) -> VoxelGrid {
        self.resolve(|s| s != FREE)
    }

    pub fn unknown_count(&self) -> usize {
        self.states.iter().filter(|&&s| s == UNKNOWN).count()
    }

    fn resolve(&self, occupied: impl Fn(u8) -> bool) -> VoxelGrid {
        let mut grid = VoxelGrid::empty(self.spec);
        let [nx, ny, nz] = self.spec.dims;
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    if occupied(self.states[self.spec.linear([i, j, k])]) {
                        grid.set([i, j, k], true);
                    }
                }
            }
        }
        grid
    }
}

/// Entry/exit distances of a ray through the grid box, if it passes through.
fn clip_to_grid(spec: &GridSpec, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<(f64, f64)> {
    let (lo, hi) = (spec.min_corner(), spec.max_corner());
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if dir[a].abs() < 1e-15 {
            if origin[a] < lo[a] || origin[a] > hi[a] {
                return None;
            }
            continue;
        }
        let (mut ta, mut tb) = ((lo[a] - origin[a]) / dir[a], (hi[a] - origin[a]) / dir[a]);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
    }
    (t0 < t1).then_some((t0, t1))
}

/// Walk the cells a ray crosses (Amanatides-Woo), marking each free while
/// its entry range stays below `free_limit`.
fn carve_ray(
    spec: &GridSpec,
    states: &mut [u8],
    origin: &Point3<f64>,
    dir: &Unit<Vector3<f64>>,
    free_limit: f64,
) {
    let Some((t0, t1)) = clip_to_grid(spec, origin, dir) else {
        return;
    };
    let t_start = t0 + 1e-9 * spec.resolution;
    if t_start >= t1 || t_start >= free_limit {
        return;
    }
    let p = origin + dir.into_inner() * t_start;
    let Some(mut cell) = spec.cell_of(&p) else {
        return;
    };

    let mut step = [0isize; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        if dir[a] > 1e-15 {
            step[a] = 1;
            let next_plane = spec.origin[a] + (cell[a] as f64 + 1.0) * spec.resolution;
            t_max[a] = (next_plane - origin[a]) / dir[a];
            t_delta[a] = spec.resolution / dir[a];
        } else if dir[a] < -1e-15 {
            step[a] = -1;
            let plane = spec.origin[a] + cell[a] as f64 * spec.resolution;
            t_max[a] = (plane - origin[a]) / dir[a];
            t_delta[a] = spec.resolution / -dir[a];
        }
    }

    let mut t_entry = t_start;
    loop {
        if t_entry >= free_limit {
            return;
        }
        let idx = spec.linear(cell);
        if states[idx] == UNKNOWN {
            states[idx] = FREE;
        }
        let axis = (0..3).min_by(|&a, &b| t_max[a].total_cmp(&t_max[b])).unwrap();
        t_entry = t_max[axis];
        if t_entry >= t1 {
            return;
        }
        t_max[axis] += t_delta[axis];
        let next = cell[axis] as isize + step[axis];
        if next < 0 || next as usize >= spec.dims[axis] {
            return;
        }
        cell[axis] = next as usize;
    }
}

/// Carve every image into one grid, keeping the three-state result.
pub fn voxel_carve_states(images: &[DepthImage], spec: GridSpec) -> CarvedStates {
    assert!(!images.is_empty(), "carving needs at least one depth image");
    let mut states = vec![UNKNOWN; spec.cell_count()];
    for img in images {
        let (w, h) = (img.camera.intrinsics.width, img.camera.intrinsics.height);
        for v in 0..h {
            for u in 0..w {
                let (origin, dir) = img.camera.ray(u, v);
                let depth = img.depth[v * w + u];
                let free_limit = if depth.is_finite() { depth - spec.resolution / 2.0 } else { f64::INFINITY };
                carve_ray(&spec, &mut states, &origin, &dir, free_limit);
                if depth.is_finite() {
                    let hit = origin + dir.into_inner() * depth;
                    if let Some(cell) = spec.cell_of(&hit) {
                        states[spec.linear(cell)] = OCCUPIED;
                    }
                }
            }
        }
    }
    CarvedStates { spec, states }
}

/// Carved occupancy under the encoder-input policy (unknown = free).
pub fn voxel_carve(images: &[DepthImage], spec: GridSpec) -> VoxelGrid {
    voxel_carve_states(images, spec).optimistic()
}
