//! Serial-chain forward kinematics, link-point Jacobians, and the
//! point-vs-sphere collision oracle.
//!
//! Chains are revolute-only. A planar chain rotates every joint about the
//! world z axis and lives in the z = 0 plane; a spatial chain alternates
//! z and y axes. Link `j` is the segment from joint `j` to joint `j + 1`,
//! sampled at `samples_per_link` evenly spaced points (endpoints included).

use nalgebra::{Isometry3, Matrix3xX, Point3, Translation3, UnitQuaternion, UnitVector3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::Scene;

/// Joint-space step for validating interpolated edges (radians).
pub const EDGE_CHECK_STEP: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("chain needs at least one joint")]
    NoJoints,
    #[error("link {0} has non-positive length {1}")]
    BadLinkLength(usize, f64),
    #[error("joint {0} limits [{1}, {2}] need lo < hi")]
    BadJointLimits(usize, f64, f64),
    #[error("samples_per_link is {0}, need at least 2")]
    TooFewSamples(usize),
    #[error("n = {n} disagrees with {links} link lengths, {limits} joint limit pairs")]
    CountMismatch { n: usize, links: usize, limits: usize },
    #[error("chain JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimensionality {
    /// All joints rotate about world z; the arm stays in the z = 0 plane.
    Planar,
    /// Alternating z / y joint axes.
    Spatial,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "ChainJson", into = "ChainJson")]
pub struct KinematicChain {
    n: usize,
    link_lengths: Vec<f64>,
    joint_limits: Vec<[f64; 2]>,
    samples_per_link: usize,
    dimensionality: Dimensionality,
    base_position: [f64; 3],
}

/// Wire format: {n, link_lengths, joint_limits, samples_per_link, dimensionality}.
#[derive(Serialize, Deserialize)]
struct ChainJson {
    n: usize,
    link_lengths: Vec<f64>,
    joint_limits: Vec<[f64; 2]>,
    samples_per_link: usize,
    dimensionality: Dimensionality,
    #[serde(default)]
    base_position: [f64; 3],
}

impl TryFrom<ChainJson> for KinematicChain {
    type Error = ChainError;

    fn try_from(j: ChainJson) -> Result<Self, ChainError> {
        if j.link_lengths.len() != j.n || j.joint_limits.len() != j.n {
            return Err(ChainError::CountMismatch {
                n: j.n,
                links: j.link_lengths.len(),
                limits: j.joint_limits.len(),
            });
        }
        let mut chain = KinematicChain::new(
            j.link_lengths,
            j.joint_limits,
            j.samples_per_link,
            j.dimensionality,
        )?;
        chain.base_position = j.base_position;
        Ok(chain)
    }
}

impl From<KinematicChain> for ChainJson {
    fn from(c: KinematicChain) -> Self {
        ChainJson {
            n: c.n,
            link_lengths: c.link_lengths,
            joint_limits: c.joint_limits,
            samples_per_link: c.samples_per_link,
            dimensionality: c.dimensionality,
            base_position: c.base_position,
        }
    }
}

impl KinematicChain {
    pub fn new(
        link_lengths: Vec<f64>,
        joint_limits: Vec<[f64; 2]>,
        samples_per_link: usize,
        dimensionality: Dimensionality,
    ) -> Result<Self, ChainError> {
        if link_lengths.is_empty() {
            return Err(ChainError::NoJoints);
        }
        if link_lengths.len() != joint_limits.len() {
            return Err(ChainError::CountMismatch {
                n: link_lengths.len(),
                links: link_lengths.len(),
                limits: joint_limits.len(),
            });
        }
        for (i, &l) in link_lengths.iter().enumerate() {
            if !(l > 0.0) {
                return Err(ChainError::BadLinkLength(i, l));
            }
        }
        for (i, &[lo, hi]) in joint_limits.iter().enumerate() {
            if !(lo < hi) {
                return Err(ChainError::BadJointLimits(i, lo, hi));
            }
        }
        if samples_per_link < 2 {
            return Err(ChainError::TooFewSamples(samples_per_link));
        }
        Ok(KinematicChain {
            n: link_lengths.len(),
            link_lengths,
            joint_limits,
            samples_per_link,
            dimensionality,
            base_position: [0.0; 3],
        })
    }

    /// Planar chain with symmetric joint limits, base at the origin.
    pub fn planar(link_lengths: Vec<f64>, limit: f64, samples_per_link: usize) -> Result<Self, ChainError> {
        let limits = vec![[-limit, limit]; link_lengths.len()];
        KinematicChain::new(link_lengths, limits, samples_per_link, Dimensionality::Planar)
    }

    pub fn from_json_str(s: &str) -> Result<Self, ChainError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn link_lengths(&self) -> &[f64] {
        &self.link_lengths
    }

    pub fn joint_limits(&self) -> &[[f64; 2]] {
        &self.joint_limits
    }

    pub fn samples_per_link(&self) -> usize {
        self.samples_per_link
    }

    pub fn dimensionality(&self) -> Dimensionality {
        self.dimensionality
    }

    pub fn base_position(&self) -> Point3<f64> {
        Point3::from(self.base_position)
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    /// Same chain with a different collision-sampling density.
    pub fn with_samples_per_link(&self, samples_per_link: usize) -> Result<Self, ChainError> {
        let mut c = self.clone();
        if samples_per_link < 2 {
            return Err(ChainError::TooFewSamples(samples_per_link));
        }
        c.samples_per_link = samples_per_link;
        Ok(c)
    }

    fn joint_axis(&self, j: usize) -> UnitVector3<f64> {
        match self.dimensionality {
            Dimensionality::Planar => Vector3::z_axis(),
            Dimensionality::Spatial => {
                if j % 2 == 0 {
                    Vector3::z_axis()
                } else {
                    Vector3::y_axis()
                }
            }
        }
    }

    /// World frame of every joint: position of joint `j` and its rotation
    /// axis direction, plus the position after the final link (the tip).
    fn frames(&self, q: &JointConfig) -> Frames {
        assert_eq!(q.len(), self.n, "config has {} joints, chain has {}", q.len(), self.n);
        let mut iso = Isometry3::from(Translation3::from(Vector3::from(self.base_position)));
        let mut joints = Vec::with_capacity(self.n);
        for j in 0..self.n {
            let axis = self.joint_axis(j);
            iso *= UnitQuaternion::from_axis_angle(&axis, q[j]);
            joints.push(JointFrame {
                position: Point3::from(iso.translation.vector),
                axis: UnitVector3::new_unchecked(iso.rotation * axis.into_inner()),
            });
            iso *= Translation3::new(self.link_lengths[j], 0.0, 0.0);
        }
        Frames { joints, tip: Point3::from(iso.translation.vector) }
    }

    /// Sampled collision points along every link.
    pub fn fk_points(&self, q: &JointConfig) -> LinkPoints {
        let frames = self.frames(q);
        let s = self.samples_per_link;
        let mut points = Vec::with_capacity(self.n * s);
        for link in 0..self.n {
            let a = frames.joints[link].position;
            let b = frames.link_end(link);
            for k in 0..s {
                let t = k as f64 / (s - 1) as f64;
                points.push(a + (b - a) * t);
            }
        }
        LinkPoints { samples_per_link: s, points }
    }

    /// Tip position (end of the last link).
    pub fn tip(&self, q: &JointConfig) -> Point3<f64> {
        self.frames(q).tip
    }

    /// Geometric Jacobian of the point at fraction `t` along `link`:
    /// column j is axis_j x (x - p_j) for joints at or before the link,
    /// zero for joints past it.
    pub fn fk_jacobian(&self, q: &JointConfig, link: usize, t: f64) -> Matrix3xX<f64> {
        assert!(link < self.n, "link {link} out of range for {}-joint chain", self.n);
        assert!((0.0..=1.0).contains(&t), "point parameter {t} outside [0, 1]");
        let frames = self.frames(q);
        let a = frames.joints[link].position;
        let b = frames.link_end(link);
        let x = a + (b - a) * t;
        let mut jac = Matrix3xX::zeros(self.n);
        for j in 0..=link {
            let col = frames.joints[j].axis.cross(&(x - frames.joints[j].position));
            jac.set_column(j, &col);
        }
        jac
    }

    /// Fraction along a link for collision sample `k`.
    pub fn sample_param(&self, k: usize) -> f64 {
        k as f64 / (self.samples_per_link - 1) as f64
    }

    pub fn within_limits(&self, q: &JointConfig) -> bool {
        q.angles().iter().zip(&self.joint_limits).all(|(&a, &[lo, hi])| a >= lo && a <= hi)
    }

    /// Clamp each joint into its limits.
    pub fn clamp(&self, q: &JointConfig) -> JointConfig {
        JointConfig::new(
            q.angles()
                .iter()
                .zip(&self.joint_limits)
                .map(|(&a, &[lo, hi])| a.clamp(lo, hi))
                .collect(),
        )
    }

    /// True iff any sampled link point lies strictly inside an obstacle,
    /// or the configuration violates joint limits.
    pub fn in_collision(&self, q: &JointConfig, scene: &Scene) -> bool {
        if !self.within_limits(q) {
            return true;
        }
        let points = self.fk_points(q);
        let hit = points.iter().any(|p| scene.obstacles().iter().any(|o| o.contains(p)));
        hit
    }

    /// Walk the straight joint-space segment from `a` to `b` at fixed
    /// `step` (radians, L2) and report whether any sampled configuration
    /// collides. Both endpoints are checked.
    pub fn edge_in_collision(&self, a: &JointConfig, b: &JointConfig, scene: &Scene, step: f64) -> bool {
        let dist = a.distance(b);
        let steps = (dist / step).ceil() as usize;
        for k in 0..=steps {
            let t = if steps == 0 { 0.0 } else { k as f64 / steps as f64 };
            if self.in_collision(&a.lerp(b, t), scene) {
                return true;
            }
        }
        false
    }

    /// Uniform sample within joint limits.
    pub fn sample_config(&self, rng: &mut impl rand::Rng) -> JointConfig {
        JointConfig::new(self.joint_limits.iter().map(|&[lo, hi]| rng.random_range(lo..hi)).collect())
    }
}

struct JointFrame {
    position: Point3<f64>,
    axis: UnitVector3<f64>,
}

struct Frames {
    joints: Vec<JointFrame>,
    tip: Point3<f64>,
}

impl Frames {
    fn link_end(&self, link: usize) -> Point3<f64> {
        if link + 1 < self.joints.len() {
            self.joints[link + 1].position
        } else {
            self.tip
        }
    }
}

/// A point in joint space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointConfig(Vec<f64>);

impl JointConfig {
    pub fn new(angles: Vec<f64>) -> Self {
        JointConfig(angles)
    }

    pub fn zeros(n: usize) -> Self {
        JointConfig(vec![0.0; n])
    }

    pub fn angles(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn distance(&self, other: &JointConfig) -> f64 {
        assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    pub fn lerp(&self, other: &JointConfig, t: f64) -> JointConfig {
        assert_eq!(self.len(), other.len());
        JointConfig(self.0.iter().zip(&other.0).map(|(a, b)| a + (b - a) * t).collect())
    }
}

impl std::ops::Index<usize> for JointConfig {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for JointConfig {
    fn from(v: Vec<f64>) -> Self {
        JointConfig(v)
    }
}

/// Sampled collision points, grouped by link: index = link * samples_per_link + k.
#[derive(Clone, Debug)]
pub struct LinkPoints {
    samples_per_link: usize,
    points: Vec<Point3<f64>>,
}

impl LinkPoints {
    pub fn point(&self, link: usize, k: usize) -> Point3<f64> {
        self.points[link * self.samples_per_link + k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Point3<f64>> + '_ {
        self.points.iter()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn samples_per_link(&self) -> usize {
        self.samples_per_link
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{LayoutTag, Scene, Sphere};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn two_link() -> KinematicChain {
        KinematicChain::planar(vec![1.0, 1.0], std::f64::consts::PI, 4).unwrap()
    }

    fn empty_scene() -> Scene {
        Scene::new(vec![], Point3::new(-3.0, -3.0, -3.0), Point3::new(3.0, 3.0, 3.0), LayoutTag::Spheres)
    }

    #[test]
    fn straight_arm_tip() {
        let q = JointConfig::zeros(2);
        let tip = two_link().tip(&q);
        assert_relative_eq!(tip, Point3::new(2.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn quarter_turn_elbow_and_tip() {
        let chain = two_link();
        let q = JointConfig::new(vec![std::f64::consts::FRAC_PI_2, 0.0]);
        let pts = chain.fk_points(&q);
        let elbow = pts.point(0, chain.samples_per_link() - 1);
        assert_relative_eq!(elbow, Point3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(chain.tip(&q), Point3::new(0.0, 2.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn planar_points_stay_in_plane() {
        let chain = KinematicChain::planar(vec![0.5, 0.4, 0.3], 3.0, 5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let q = chain.sample_config(&mut rng);
            assert!(chain.fk_points(&q).iter().all(|p| p.z.abs() < 1e-12));
        }
    }

    /// Independent oracle: explicit 4x4 homogeneous transform products.
    fn oracle_link_points(chain: &KinematicChain, q: &JointConfig) -> Vec<[f64; 3]> {
        type M4 = [[f64; 4]; 4];
        fn eye() -> M4 {
            let mut m = [[0.0; 4]; 4];
            for (i, row) in m.iter_mut().enumerate() {
                row[i] = 1.0;
            }
            m
        }
        fn mul(a: &M4, b: &M4) -> M4 {
            let mut c = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    for (k, bk) in b.iter().enumerate() {
                        c[i][j] += a[i][k] * bk[j];
                    }
                }
            }
            c
        }
        fn rot_z(a: f64) -> M4 {
            let (s, c) = a.sin_cos();
            let mut m = eye();
            m[0][0] = c;
            m[0][1] = -s;
            m[1][0] = s;
            m[1][1] = c;
            m
        }
        fn rot_y(a: f64) -> M4 {
            let (s, c) = a.sin_cos();
            let mut m = eye();
            m[0][0] = c;
            m[0][2] = s;
            m[2][0] = -s;
            m[2][2] = c;
            m
        }
        fn trans_x(l: f64) -> M4 {
            let mut m = eye();
            m[0][3] = l;
            m
        }
        fn apply(m: &M4, p: [f64; 3]) -> [f64; 3] {
            let h = [p[0], p[1], p[2], 1.0];
            let mut out = [0.0; 3];
            for (i, o) in out.iter_mut().enumerate() {
                *o = m[i].iter().zip(&h).map(|(a, b)| a * b).sum();
            }
            out
        }

        let mut t = eye();
        let mut out = Vec::new();
        for j in 0..chain.n() {
            let rot = match (chain.dimensionality(), j % 2) {
                (Dimensionality::Planar, _) | (Dimensionality::Spatial, 0) => rot_z(q[j]),
                (Dimensionality::Spatial, _) => rot_y(q[j]),
            };
            t = mul(&t, &rot);
            let l = chain.link_lengths()[j];
            for k in 0..chain.samples_per_link() {
                let frac = k as f64 / (chain.samples_per_link() - 1) as f64;
                out.push(apply(&t, [frac * l, 0.0, 0.0]));
            }
            t = mul(&t, &trans_x(l));
        }
        out
    }

    #[test]
    fn fk_matches_transform_chain_oracle() {
        let chains = [
            KinematicChain::planar(vec![0.7, 0.5, 0.4], 3.1, 4).unwrap(),
            KinematicChain::new(
                vec![0.6, 0.5, 0.4, 0.3],
                vec![[-3.0, 3.0]; 4],
                5,
                Dimensionality::Spatial,
            )
            .unwrap(),
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for chain in &chains {
            for _ in 0..50 {
                let q = chain.sample_config(&mut rng);
                let got = chain.fk_points(&q);
                let want = oracle_link_points(chain, &q);
                assert_eq!(got.len(), want.len());
                for (g, w) in got.iter().zip(&want) {
                    assert!((g.x - w[0]).abs() < 1e-10);
                    assert!((g.y - w[1]).abs() < 1e-10);
                    assert!((g.z - w[2]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn single_link_jacobian_analytic() {
        let chain = KinematicChain::planar(vec![1.0], std::f64::consts::PI, 2).unwrap();
        let jac = chain.fk_jacobian(&JointConfig::zeros(1), 0, 1.0);
        // x = (cos q, sin q, 0), dx/dq at q=0 -> (0, 1, 0)
        assert_relative_eq!(jac[(0, 0)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(jac[(1, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(jac[(2, 0)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn distal_joint_columns_are_zero() {
        let chain = KinematicChain::planar(vec![0.5, 0.5, 0.5], 3.0, 4).unwrap();
        let q = JointConfig::new(vec![0.3, -0.9, 1.2]);
        let jac = chain.fk_jacobian(&q, 0, 0.5); // point on the first link
        for j in 1..3 {
            assert_eq!(jac.column(j).norm(), 0.0);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let chains = [
            KinematicChain::planar(vec![0.7, 0.5, 0.4], 3.1, 4).unwrap(),
            KinematicChain::new(
                vec![0.6, 0.5, 0.4, 0.3],
                vec![[-3.0, 3.0]; 4],
                4,
                Dimensionality::Spatial,
            )
            .unwrap(),
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let h = 1e-6;
        for chain in &chains {
            for _ in 0..20 {
                let q = chain.sample_config(&mut rng);
                for link in 0..chain.n() {
                    for &t in &[0.0, 0.33, 1.0] {
                        let jac = chain.fk_jacobian(&q, link, t);
                        for j in 0..chain.n() {
                            let mut hi = q.angles().to_vec();
                            let mut lo = hi.clone();
                            hi[j] += h;
                            lo[j] -= h;
                            let point = |angles: Vec<f64>| {
                                let frames_q = JointConfig::new(angles);
                                let pts = chain.fk_points(&frames_q);
                                let a = pts.point(link, 0);
                                let b = pts.point(link, chain.samples_per_link() - 1);
                                a + (b - a) * t
                            };
                            let fd = (point(hi) - point(lo)) / (2.0 * h);
                            for r in 0..3 {
                                let (a, b) = (jac[(r, j)], fd[r]);
                                assert!(
                                    (a - b).abs() <= 1e-5 * a.abs().max(b.abs()).max(1.0),
                                    "J[{r},{j}] = {a} vs FD {b}"
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn empty_scene_never_collides() {
        let chain = two_link();
        let scene = empty_scene();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let q = chain.sample_config(&mut rng);
            assert!(!chain.in_collision(&q, &scene));
        }
    }

    #[test]
    fn obstacle_on_tip_collides() {
        let chain = two_link();
        let q = JointConfig::zeros(2);
        let scene = Scene::new(
            vec![Sphere::new(Point3::new(2.0, 0.0, 0.0), 0.1)],
            Point3::new(-3.0, -3.0, -3.0),
            Point3::new(3.0, 3.0, 3.0),
            LayoutTag::Spheres,
        );
        assert!(chain.in_collision(&q, &scene));
    }

    #[test]
    fn limit_violation_counts_as_collision() {
        let chain = two_link();
        let q = JointConfig::new(vec![4.0, 0.0]);
        assert!(chain.in_collision(&q, &empty_scene()));
    }

    /// Dense oracle samples 10x between each coarse pair, superset of the
    /// coarse points, so coarse-hit implies dense-hit by construction.
    #[test]
    fn collision_agrees_with_dense_sampling_oracle() {
        let chain = KinematicChain::planar(vec![0.6, 0.5, 0.4], 3.1, 4).unwrap();
        let dense = chain.with_samples_per_link(10 * (4 - 1) + 1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let scene = Scene::new(
            vec![
                Sphere::new(Point3::new(0.8, 0.3, 0.0), 0.25),
                Sphere::new(Point3::new(-0.4, -0.7, 0.0), 0.3),
                Sphere::new(Point3::new(0.1, 0.9, 0.0), 0.2),
            ],
            Point3::new(-2.0, -2.0, -2.0),
            Point3::new(2.0, 2.0, 2.0),
            LayoutTag::Spheres,
        );
        let mut disagreements = 0;
        for _ in 0..1000 {
            let q = chain.sample_config(&mut rng);
            let coarse = chain.in_collision(&q, &scene);
            let fine = dense.in_collision(&q, &scene);
            assert!(!(coarse && !fine), "coarse-positive must be a real collision");
            if coarse != fine {
                disagreements += 1;
            }
        }
        assert!(disagreements < 20, "{disagreements} / 1000 disagreements");
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let text = r#"{
            "n": 2,
            "link_lengths": [0.5, 0.4],
            "joint_limits": [[-3.0, 3.0], [-2.5, 2.5]],
            "samples_per_link": 4,
            "dimensionality": "planar"
        }"#;
        let chain = KinematicChain::from_json_str(text).unwrap();
        assert_eq!(chain.n(), 2);
        assert_eq!(chain.dimensionality(), Dimensionality::Planar);
        let back = serde_json::to_string(&chain).unwrap();
        let again = KinematicChain::from_json_str(&back).unwrap();
        assert_eq!(again.link_lengths(), chain.link_lengths());

        let bad_n = text.replace("\"n\": 2", "\"n\": 3");
        assert!(KinematicChain::from_json_str(&bad_n).is_err());
        let bad_len = text.replace("0.5", "-0.5");
        assert!(KinematicChain::from_json_str(&bad_len).is_err());
        let bad_limits = text.replace("[-3.0, 3.0]", "[3.0, -3.0]");
        assert!(KinematicChain::from_json_str(&bad_limits).is_err());
        let bad_samples = text.replace("\"samples_per_link\": 4", "\"samples_per_link\": 1");
        assert!(KinematicChain::from_json_str(&bad_samples).is_err());
    }

    proptest! {
        /// Small joint-space motion moves every point by at most
        /// 2 * reach * |dq| (loose Lipschitz bound, chains up to 4 joints).
        #[test]
        fn fk_is_continuous(
            raw in proptest::collection::vec(-2.5f64..2.5, 3),
            dir in proptest::collection::vec(-1.0f64..1.0, 3),
        ) {
            let chain = KinematicChain::planar(vec![0.6, 0.5, 0.4], 3.0, 4).unwrap();
            let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
            prop_assume!(norm > 1e-12);
            let eps = 1e-6;
            let q = JointConfig::new(raw.clone());
            let dq: Vec<f64> = dir.iter().map(|d| d / norm * eps).collect();
            let q2 = JointConfig::new(raw.iter().zip(&dq).map(|(a, d)| a + d).collect());
            let (p1, p2) = (chain.fk_points(&q), chain.fk_points(&q2));
            let bound = 2.0 * chain.reach() * eps;
            for (a, b) in p1.iter().zip(p2.iter()) {
                prop_assert!((a - b).norm() <= bound);
            }
        }

        /// Growing an obstacle never un-collides a configuration.
        #[test]
        fn collision_monotone_in_radius(
            raw in proptest::collection::vec(-3.0f64..3.0, 2),
            cx in -1.5f64..1.5, cy in -1.5f64..1.5,
            r in 0.05f64..0.4,
            grow in 0.0f64..0.5,
        ) {
            let chain = two_link();
            let q = JointConfig::new(raw);
            let mk = |radius: f64| Scene::new(
                vec![Sphere::new(Point3::new(cx, cy, 0.0), radius)],
                Point3::new(-3.0, -3.0, -3.0),
                Point3::new(3.0, 3.0, 3.0),
                LayoutTag::Spheres,
            );
            let before = chain.in_collision(&q, &mk(r));
            let after = chain.in_collision(&q, &mk(r + grow));
            prop_assert!(!(before && !after));
        }
    }
}
