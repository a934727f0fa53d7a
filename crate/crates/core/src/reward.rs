//! Unit-norm color rewards and the fixed grid that discretizes them.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

pub const GRID_SIZE: usize = 1000;
pub const DEFAULT_GRID_SEED: u64 = 0;

/// Per-step reward for each of the four tile colors, with unit ℓ2 norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct RewardVector([f64; 4]);

impl RewardVector {
    pub fn new(theta: [f64; 4]) -> Result<Self> {
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidReward("non-finite entry".into()));
        }
        let norm = norm(&theta);
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidReward(format!("norm {norm} is not 1")));
        }
        Ok(Self(theta))
    }

    /// Rescales a nonzero vector onto the unit sphere.
    pub fn normalized(theta: [f64; 4]) -> Result<Self> {
        let n = norm(&theta);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidReward("cannot normalize a zero or non-finite vector".into()));
        }
        Ok(Self(theta.map(|x| x / n)))
    }

    pub fn basis(i: usize) -> Self {
        let mut t = [0.0; 4];
        t[i] = 1.0;
        Self(t)
    }

    pub fn as_array(&self) -> &[f64; 4] {
        &self.0
    }
}

impl TryFrom<[f64; 4]> for RewardVector {
    type Error = Error;
    fn try_from(v: [f64; 4]) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RewardVector> for [f64; 4] {
    fn from(r: RewardVector) -> Self {
        r.0
    }
}

pub fn norm(v: &[f64; 4]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Squared ℓ2 distance between two reward vectors.
pub fn reward_mse(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// An ordered, fixed set of candidate rewards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardGrid {
    seed: u64,
    points: Vec<[f64; 4]>,
}

impl RewardGrid {
    /// The standard 1000-point grid.
    pub fn generate(seed: u64) -> Self {
        Self::with_size(seed, GRID_SIZE)
    }

    /// `n` points: normalized Gaussian draws, each followed by its antipode
    /// (an odd `n` ends with an unpaired draw). Pairing makes the uniform
    /// prior's mean exactly zero, so weak evidence alone sets the direction of
    /// the posterior mean.
    pub fn with_size(seed: u64, n: usize) -> Self {
        let mut rng = rng::stream(seed, &[0x67_72_69_64]);
        let mut points = Vec::with_capacity(n);
        while points.len() < n {
            let v: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let len = norm(&v);
            if len <= 1e-12 {
                continue;
            }
            let u = v.map(|x| x / len);
            points.push(u);
            if points.len() < n {
                points.push(u.map(|x| -x));
            }
        }
        Self { seed, points }
    }

    /// A grid over explicitly given unit vectors.
    pub fn from_points(seed: u64, points: Vec<[f64; 4]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("reward grid"));
        }
        for p in &points {
            RewardVector::new(*p)?;
        }
        Ok(Self { seed, points })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 4]] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64; 4] {
        &self.points[i]
    }
}

/// Shorthand for [`RewardGrid::generate`].
pub fn make_grid(seed: u64) -> RewardGrid {
    RewardGrid::generate(seed)
}
