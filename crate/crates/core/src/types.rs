//! Domain types shared across the crate.
//!
//! An outcome is a reward vector `r` (length `d`) paired with a consumption
//! matrix `V` (`d x m`); decision `w` earns `r'w` and consumes `V'w`. The
//! flat layout used by models and data generation is `vec(r, V)`: the `d`
//! reward entries first, then `V` stacked column by column (column-major,
//! which is also nalgebra's storage order).

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result};

/// Problem dimensions: features `p`, decisions `d`, resources `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub p: usize,
    pub d: usize,
    pub m: usize,
}

/// A reward vector and consumption matrix, realized or predicted.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub reward: DVector<f64>,
    pub consumption: DMatrix<f64>,
}

/// What a model emits for one context.
pub type Prediction = Outcome;

impl Outcome {
    pub fn new(reward: DVector<f64>, consumption: DMatrix<f64>) -> Result<Self> {
        check_dim("outcome rows", reward.len(), consumption.nrows())?;
        Ok(Self {
            reward,
            consumption,
        })
    }

    pub fn zeros(d: usize, m: usize) -> Self {
        Self {
            reward: DVector::zeros(d),
            consumption: DMatrix::zeros(d, m),
        }
    }

    /// Outcome with identity consumption (`V = I_d`).
    pub fn with_identity(reward: DVector<f64>) -> Self {
        let d = reward.len();
        Self {
            reward,
            consumption: DMatrix::identity(d, d),
        }
    }

    pub fn d(&self) -> usize {
        self.reward.len()
    }

    pub fn m(&self) -> usize {
        self.consumption.ncols()
    }

    /// `vec(r, V)`: reward first, then `V` column-stacked.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.d() * (self.m() + 1));
        out.extend_from_slice(self.reward.as_slice());
        out.extend_from_slice(self.consumption.as_slice());
        out
    }

    /// Inverse of [`Outcome::to_flat`].
    pub fn from_flat(flat: &[f64], d: usize, m: usize) -> Result<Self> {
        check_dim("flat outcome", d * (m + 1), flat.len())?;
        Ok(Self {
            reward: DVector::from_column_slice(&flat[..d]),
            consumption: DMatrix::from_column_slice(d, m, &flat[d..]),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.reward.iter().all(|v| v.is_finite()) && self.consumption.iter().all(|v| v.is_finite())
    }

    /// Linear combination `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Outcome, b: f64) -> Outcome {
        Outcome {
            reward: &self.reward * a + &other.reward * b,
            consumption: &self.consumption * a + &other.consumption * b,
        }
    }
}

/// Shape of a model's flat output.
///
/// With identity consumption (every `V` is `I_d`) only the reward part is
/// emitted and learned; `V_hat` is fixed to the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputLayout {
    pub d: usize,
    pub m: usize,
    pub identity_consumption: bool,
}

impl OutputLayout {
    pub fn full(d: usize, m: usize) -> Self {
        Self {
            d,
            m,
            identity_consumption: false,
        }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            d,
            m: d,
            identity_consumption: true,
        }
    }

    pub fn width(&self) -> usize {
        if self.identity_consumption {
            self.d
        } else {
            self.d * (self.m + 1)
        }
    }

    pub fn to_outcome(&self, flat: &[f64]) -> Outcome {
        assert_eq!(flat.len(), self.width(), "flat output width");
        if self.identity_consumption {
            Outcome::with_identity(DVector::from_column_slice(flat))
        } else {
            Outcome::from_flat(flat, self.d, self.m).expect("width checked")
        }
    }

    /// Flat target for an outcome; drops `V` under identity consumption.
    pub fn to_flat(&self, mu: &Outcome) -> Vec<f64> {
        if self.identity_consumption {
            mu.reward.as_slice().to_vec()
        } else {
            mu.to_flat()
        }
    }
}

/// One draw `(x, r, V)`: the simulator's unit of time.
#[derive(Debug, Clone, PartialEq)]
pub struct Arrival {
    pub features: DVector<f64>,
    pub outcome: Outcome,
}

impl Arrival {
    pub fn new(features: DVector<f64>, outcome: Outcome) -> Self {
        Self { features, outcome }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            p: self.features.len(),
            d: self.outcome.d(),
            m: self.outcome.m(),
        }
    }
}

/// Dual variables: `lambda` prices utility of consumption, `theta` prices
/// distance to the consumption set.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPair {
    pub lambda: DVector<f64>,
    pub theta: DVector<f64>,
}

impl DualPair {
    pub fn new(lambda: DVector<f64>, theta: DVector<f64>) -> Self {
        Self { lambda, theta }
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            lambda: DVector::zeros(m),
            theta: DVector::zeros(m),
        }
    }

    pub fn m(&self) -> usize {
        self.lambda.len()
    }

    /// The per-unit resource price `lambda + zeta * theta`.
    pub fn price(&self, zeta: f64) -> DVector<f64> {
        &self.lambda + &self.theta * zeta
    }
}

/// Linear objective `c` handed to the decision oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVector(pub DVector<f64>);

impl CostVector {
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<f64>> for CostVector {
    fn from(v: Vec<f64>) -> Self {
        CostVector(DVector::from_vec(v))
    }
}

/// `c = r - V (lambda + zeta * theta)`.
pub fn decision_cost(mu: &Outcome, omega: &DualPair, zeta: f64) -> Result<CostVector> {
    check_dim("dual lambda", mu.m(), omega.lambda.len())?;
    check_dim("dual theta", mu.m(), omega.theta.len())?;
    if !(zeta > 0.0) {
        return Err(crate::Error::Config(format!(
            "budget penalty must be positive, got {zeta}"
        )));
    }
    let price = omega.price(zeta);
    Ok(CostVector(&mu.reward - &mu.consumption * price))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
