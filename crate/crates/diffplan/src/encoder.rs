//! Scene encoder: a shared per-voxel MLP over normalized occupied-voxel
//! coordinates, max-pooled channelwise into one latent vector. Trained
//! jointly with the denoiser, so the forward pass lives on the tape.

use nalgebra::Point3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Tape, Tensor, Var};
use crate::world::OccupiedVoxelSet;

pub const DEFAULT_HIDDEN: usize = 128;
pub const DEFAULT_EMBED: usize = 64;

/// Weights of the per-voxel MLP 3 -> H -> H -> E (ReLU between layers).
#[derive(Clone, Debug)]
pub struct SceneEncoderParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub w3: Tensor,
    pub b3: Tensor,
}

impl SceneEncoderParams {
    pub fn init(hidden: usize, embed: usize, rng: &mut impl Rng) -> Self {
        SceneEncoderParams {
            w1: he_matrix(3, hidden, rng),
            b1: Tensor::zeros(vec![1, hidden]),
            w2: he_matrix(hidden, hidden, rng),
            b2: Tensor::zeros(vec![1, hidden]),
            w3: he_matrix(hidden, embed, rng),
            b3: Tensor::zeros(vec![1, embed]),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.dims2().1
    }

    pub fn embed_dim(&self) -> usize {
        self.w3.dims2().1
    }

    /// Checkpoint order; keep stable.
    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("encoder.w1", &self.w1),
            ("encoder.b1", &self.b1),
            ("encoder.w2", &self.w2),
            ("encoder.b2", &self.b2),
            ("encoder.w3", &self.w3),
            ("encoder.b3", &self.b3),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2, &mut self.w3, &mut self.b3]
    }
}

/// Kaiming-normal init for a fan-in of `rows`.
pub(crate) fn he_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let normal = Normal::new(0.0, (2.0 / rows as f64).sqrt()).unwrap();
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| normal.sample(rng)).collect())
}

/// Tape handles for the encoder parameters.
#[derive(Clone, Copy)]
pub struct EncoderVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub w3: Var,
    pub b3: Var,
}

impl EncoderVars {
    pub fn record(tape: &mut Tape, params: &SceneEncoderParams) -> Self {
        EncoderVars {
            w1: tape.input(params.w1.clone()),
            b1: tape.input(params.b1.clone()),
            w2: tape.input(params.w2.clone()),
            b2: tape.input(params.b2.clone()),
            w3: tape.input(params.w3.clone()),
            b3: tape.input(params.b3.clone()),
        }
    }

    pub fn list(&self) -> Vec<Var> {
        vec![self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]
    }
}

/// Latent scene code.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneEmbedding(pub Vec<f64>);

impl SceneEmbedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Map voxel centers into [-1, 1]^3 using the workspace box.
pub fn normalize_coords(voxels: &OccupiedVoxelSet, min: Point3<f64>, max: Point3<f64>) -> Tensor {
    assert!(!voxels.is_empty(), "encoder input must hold at least the sentinel voxel");
    let mut data = Vec::with_capacity(voxels.len() * 3);
    for p in voxels.coords() {
        for a in 0..3 {
            data.push(2.0 * (p[a] - min[a]) / (max[a] - min[a]) - 1.0);
        }
    }
    Tensor::matrix(voxels.len(), 3, data)
}

/// Forward pass on an existing tape: [V x 3] normalized coords -> [1 x E].
pub fn encode_on_tape(tape: &mut Tape, vars: &EncoderVars, coords: Var) -> Var {
    let h = tape.matmul(coords, vars.w1);
    let h = tape.add_row(h, vars.b1);
    let h = tape.relu(h);
    let h = tape.matmul(h, vars.w2);
    let h = tape.add_row(h, vars.b2);
    let h = tape.relu(h);
    let h = tape.matmul(h, vars.w3);
    let per_voxel = tape.add_row(h, vars.b3);
    tape.max_rows(per_voxel)
}

/// Inference-path encoding of one voxel set.
pub fn encode_scene(
    params: &SceneEncoderParams,
    voxels: &OccupiedVoxelSet,
    bounds_min: Point3<f64>,
    bounds_max: Point3<f64>,
) -> SceneEmbedding {
    let mut tape = Tape::new();
    let vars = EncoderVars::record(&mut tape, params);
    let coords = tape.input(normalize_coords(voxels, bounds_min, bounds_max));
    let z = encode_on_tape(&mut tape, &vars, coords);
    SceneEmbedding(tape.value(z).data().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{analytic_occupancy, occupied_coords, GridSpec, LayoutTag, Scene, Sphere};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_params(rng: &mut impl Rng) -> SceneEncoderParams {
        SceneEncoderParams::init(16, 8, rng)
    }

    fn bounds() -> (Point3<f64>, Point3<f64>) {
        (Point3::new(-1.0, -1.0, -1.0), Point3::new(1.0, 1.0, 1.0))
    }

    fn voxel_set(points: &[[f64; 3]]) -> OccupiedVoxelSet {
        // Occupancy grid with exactly these cells set, read back out.
        let spec = GridSpec::cube(Point3::origin(), 1.0, 16);
        let mut grid = crate::world::VoxelGrid::empty(spec);
        for p in points {
            let cell = spec.cell_of(&Point3::from(*p)).unwrap();
            grid.set(cell, true);
        }
        occupied_coords(&grid, 4096)
    }

    #[test]
    fn single_voxel_embedding_equals_its_mlp_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = small_params(&mut rng);
        let (min, max) = bounds();
        let one = voxel_set(&[[0.3, -0.4, 0.1]]);
        let z = encode_scene(&params, &one, min, max);

        // By hand: relu(x W1 + b1) etc. on the single row.
        let coords = normalize_coords(&one, min, max);
        let row = |w: &Tensor, b: &Tensor, x: &[f64]| -> Vec<f64> {
            let (k, n) = w.dims2();
            (0..n)
                .map(|j| (0..k).map(|i| x[i] * w.data()[i * n + j]).sum::<f64>() + b.data()[j])
                .collect()
        };
        let h1: Vec<f64> = row(&params.w1, &params.b1, coords.data()).iter().map(|v| v.max(0.0)).collect();
        let h2: Vec<f64> = row(&params.w2, &params.b2, &h1).iter().map(|v| v.max(0.0)).collect();
        let out = row(&params.w3, &params.b3, &h2);
        assert_eq!(z.0, out);
    }

    #[test]
    fn permutation_and_duplication_leave_embedding_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = small_params(&mut rng);
        let (min, max) = bounds();
        let scene = Scene::new(
            vec![Sphere::new(Point3::new(0.2, 0.1, -0.3), 0.3), Sphere::new(Point3::new(-0.5, 0.4, 0.2), 0.2)],
            min,
            max,
            LayoutTag::Spheres,
        );
        let grid = analytic_occupancy(&scene, GridSpec::cube(Point3::origin(), 1.0, 16));
        let voxels = occupied_coords(&grid, 4096);
        assert!(voxels.len() > 10);
        let z = encode_scene(&params, &voxels, min, max);

        let encode_raw = |coords: Tensor| {
            let mut tape = Tape::new();
            let vars = EncoderVars::record(&mut tape, &params);
            let c = tape.input(coords);
            let z = encode_on_tape(&mut tape, &vars, c);
            tape.value(z).data().to_vec()
        };

        let base = normalize_coords(&voxels, min, max);
        let (v, _) = base.dims2();
        // Reverse the rows.
        let mut rev = Vec::with_capacity(v * 3);
        for i in (0..v).rev() {
            rev.extend_from_slice(&base.data()[i * 3..(i + 1) * 3]);
        }
        assert_eq!(encode_raw(Tensor::matrix(v, 3, rev)), z.0);

        // Duplicate the first row three times.
        let mut dup = base.data().to_vec();
        for _ in 0..3 {
            dup.extend_from_slice(&base.data()[0..3]);
        }
        assert_eq!(encode_raw(Tensor::matrix(v + 3, 3, dup)), z.0);
    }

    #[test]
    fn embedding_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = SceneEncoderParams::init(6, 4, &mut rng);
        let (min, max) = bounds();
        let voxels = voxel_set(&[[0.3, -0.4, 0.1], [-0.6, 0.2, 0.5], [0.0, 0.7, -0.2]]);
        let coords = normalize_coords(&voxels, min, max);

        // Loss = |z|^2.
        let loss_and_grads = |p: &SceneEncoderParams, want_grads: bool| {
            let mut tape = Tape::new();
            let vars = EncoderVars::record(&mut tape, p);
            let c = tape.input(coords.clone());
            let z = encode_on_tape(&mut tape, &vars, c);
            let sq = tape.mul(z, z);
            let loss = tape.sum(sq);
            let grads = if want_grads { tape.grad(loss, &vars.list()) } else { vec![] };
            (tape.value(loss).item(), grads)
        };

        let (_, grads) = loss_and_grads(&params, true);
        let names = ["w1", "b1", "w2", "b2", "w3", "b3"];
        for (i, name) in names.iter().enumerate() {
            let base = {
                let mut p = params.clone();
                let t = p.tensors_mut().into_iter().nth(i).unwrap();
                t.data().to_vec()
            };
            let fd = crate::autodiff::fd::central_diff(
                |x| {
                    let mut p = params.clone();
                    let t = p.tensors_mut().into_iter().nth(i).unwrap();
                    t.data_mut().copy_from_slice(x);
                    loss_and_grads(&p, false).0
                },
                &base,
                1e-5,
            );
            assert!(
                crate::autodiff::fd::close(grads[i].data(), &fd, 1e-4),
                "{name} gradient mismatch"
            );
        }
    }

    #[test]
    fn zero_weights_give_constant_bias_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = small_params(&mut rng);
        for t in params.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        params.b3.data_mut().copy_from_slice(&(0..8).map(|i| i as f64 * 0.1 - 0.3).collect::<Vec<_>>());
        let (min, max) = bounds();
        let voxels = voxel_set(&[[0.3, -0.4, 0.1], [-0.6, 0.2, 0.5]]);
        let z = encode_scene(&params, &voxels, min, max);
        assert_eq!(z.0, params.b3.data());

        // d|z|^2/db3 = 2 b3 regardless of which row wins the max.
        let mut tape = Tape::new();
        let vars = EncoderVars::record(&mut tape, &params);
        let c = tape.input(normalize_coords(&voxels, min, max));
        let zv = encode_on_tape(&mut tape, &vars, c);
        let sq = tape.mul(zv, zv);
        let loss = tape.sum(sq);
        let g = tape.grad(loss, &[vars.b3]);
        let want: Vec<f64> = params.b3.data().iter().map(|b| 2.0 * b).collect();
        assert_eq!(g[0].data(), &want[..]);
    }

    #[test]
    #[should_panic(expected = "sentinel")]
    fn empty_voxel_set_is_rejected() {
        let empty = OccupiedVoxelSet::from_coords(vec![]);
        let (min, max) = bounds();
        let _ = normalize_coords(&empty, min, max);
    }

    #[test]
    fn empty_grid_encodes_through_the_sentinel() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params = small_params(&mut rng);
        let (min, max) = bounds();
        let grid = crate::world::VoxelGrid::empty(GridSpec::cube(Point3::origin(), 1.0, 8));
        let voxels = occupied_coords(&grid, 512);
        let z = encode_scene(&params, &voxels, min, max);
        assert_eq!(z.dim(), 8);
        assert!(z.0.iter().all(|v| v.is_finite()));
    }
}
