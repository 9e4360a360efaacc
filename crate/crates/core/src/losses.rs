//! Decision-aware losses on dual-parameterized cost vectors.
//!
//! All surrogates act on `c_hat = r_hat - V_hat (lambda + zeta * theta)`
//! against the realized `c`, except [`LossKind::LsPred`] which compares the
//! raw predictions and ignores the duals.
//!
//! SPO+ is implemented in maximization form as
//!
//! ```text
//! l(c_hat, c) = max_w (2 c_hat - c)'w - 2 c_hat' w*(c) + c' w*(c)
//!             = (2 c_hat - c)' (w*(2 c_hat - c) - w*(c))
//! ```
//!
//! which is zero at `c_hat = c` and upper-bounds the SPO loss. Its
//! subgradient in `c_hat` is `2 (w*(2 c_hat - c) - w*(c))`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::oracles::{objective, DecisionOracle};
use crate::types::{decision_cost, CostVector, DualPair, Outcome, OutputLayout, Prediction};

/// Training surrogate. The true SPO loss is evaluation-only and has no
/// variant here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LossKind {
    SpoPlus,
    LsCost,
    LsPred,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::SpoPlus, LossKind::LsCost, LossKind::LsPred];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::SpoPlus => "spo_plus",
            LossKind::LsCost => "ls_cost",
            LossKind::LsPred => "ls_pred",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '+'], "_").as_str() {
            "spo_plus" | "spo_" | "spoplus" => Ok(LossKind::SpoPlus),
            "ls_cost" => Ok(LossKind::LsCost),
            "ls_pred" => Ok(LossKind::LsPred),
            other => Err(Error::Config(format!("unknown loss `{other}`"))),
        }
    }
}

/// Gradient with respect to a prediction; same shape as the prediction.
pub type PredictionGrad = Outcome;

/// `c' (w*(c) - w*(c_hat))` for the costs induced by `omega`.
pub fn spo_loss(
    mu_hat: &Prediction,
    mu: &Outcome,
    omega: &DualPair,
    zeta: f64,
    oracle: &dyn DecisionOracle,
) -> Result<f64> {
    let c = decision_cost(mu, omega, zeta)?;
    let c_hat = decision_cost(mu_hat, omega, zeta)?;
    Ok(spo_loss_costs(c_hat.as_slice(), c.as_slice(), oracle))
}

/// SPO loss on cost vectors directly.
pub fn spo_loss_costs(c_hat: &[f64], c: &[f64], oracle: &dyn DecisionOracle) -> f64 {
    let diff = oracle.solve(c) - oracle.solve(c_hat);
    objective(c, diff.as_slice())
}

pub fn spo_plus_loss(c_hat: &CostVector, c: &CostVector, oracle: &dyn DecisionOracle) -> Result<f64> {
    check_dim("spo+ cost", c.len(), c_hat.len())?;
    let target = oracle.solve(c.as_slice());
    let probe: DVector<f64> = &c_hat.0 * 2.0 - &c.0;
    let diff = oracle.solve(probe.as_slice()) - target;
    Ok(objective(probe.as_slice(), diff.as_slice()))
}

pub fn spo_plus_subgrad_cost(
    c_hat: &CostVector,
    c: &CostVector,
    oracle: &dyn DecisionOracle,
) -> Result<DVector<f64>> {
    check_dim("spo+ cost", c.len(), c_hat.len())?;
    let probe: DVector<f64> = &c_hat.0 * 2.0 - &c.0;
    Ok((oracle.solve(probe.as_slice()) - oracle.solve(c.as_slice())) * 2.0)
}

pub fn ls_cost_loss(c_hat: &CostVector, c: &CostVector) -> Result<f64> {
    check_dim("ls cost", c.len(), c_hat.len())?;
    Ok((&c_hat.0 - &c.0).norm_squared())
}

pub fn ls_cost_grad(c_hat: &CostVector, c: &CostVector) -> Result<DVector<f64>> {
    check_dim("ls cost", c.len(), c_hat.len())?;
    Ok((&c_hat.0 - &c.0) * 2.0)
}

/// `||r_hat - r||^2 + ||V_hat - V||_F^2`.
pub fn ls_pred_loss(mu_hat: &Prediction, mu: &Outcome) -> Result<f64> {
    check_shapes(mu_hat, mu)?;
    Ok((&mu_hat.reward - &mu.reward).norm_squared()
        + (&mu_hat.consumption - &mu.consumption).norm_squared())
}

pub fn ls_pred_grad(mu_hat: &Prediction, mu: &Outcome) -> Result<PredictionGrad> {
    check_shapes(mu_hat, mu)?;
    Ok(Outcome {
        reward: (&mu_hat.reward - &mu.reward) * 2.0,
        consumption: (&mu_hat.consumption - &mu.consumption) * 2.0,
    })
}

fn check_shapes(a: &Outcome, b: &Outcome) -> Result<()> {
    check_dim("prediction d", b.d(), a.d())?;
    check_dim("prediction m", b.m(), a.m())
}

/// Chain rule through `c_hat = r_hat - V_hat (lambda + zeta * theta)`:
/// `d r_hat = g`, `d V_hat = -g (lambda + zeta * theta)'`.
pub fn cost_grad_to_prediction_grad(
    g_c: &DVector<f64>,
    omega: &DualPair,
    zeta: f64,
) -> PredictionGrad {
    let price = omega.price(zeta);
    Outcome {
        reward: g_c.clone(),
        consumption: -(g_c * price.transpose()),
    }
}

/// Loss and gradient of one sample with respect to the prediction.
pub fn surrogate_loss_and_grad(
    kind: LossKind,
    mu_hat: &Prediction,
    mu: &Outcome,
    omega: &DualPair,
    zeta: f64,
    oracle: &dyn DecisionOracle,
) -> Result<(f64, PredictionGrad)> {
    match kind {
        LossKind::LsPred => Ok((ls_pred_loss(mu_hat, mu)?, ls_pred_grad(mu_hat, mu)?)),
        LossKind::LsCost | LossKind::SpoPlus => {
            let c = decision_cost(mu, omega, zeta)?;
            let c_hat = decision_cost(mu_hat, omega, zeta)?;
            let (loss, g_c) = if kind == LossKind::LsCost {
                (ls_cost_loss(&c_hat, &c)?, ls_cost_grad(&c_hat, &c)?)
            } else {
                (
                    spo_plus_loss(&c_hat, &c, oracle)?,
                    spo_plus_subgrad_cost(&c_hat, &c, oracle)?,
                )
            };
            Ok((loss, cost_grad_to_prediction_grad(&g_c, omega, zeta)))
        }
    }
}

/// Per-sample quantities that stay fixed while a model is refit under one
/// dual pair.
#[derive(Debug, Clone)]
pub struct SampleTarget {
    /// Realized cost `c`.
    pub cost: Vec<f64>,
    /// `w*(c)`.
    pub best: Vec<f64>,
    /// Flat realized outcome in the model's output layout.
    pub flat: Vec<f64>,
}

impl SampleTarget {
    pub fn new(
        mu: &Outcome,
        layout: &OutputLayout,
        price: &[f64],
        oracle: &dyn DecisionOracle,
    ) -> Self {
        let d = layout.d;
        let mut cost = mu.reward.as_slice().to_vec();
        for j in 0..mu.m() {
            let col = mu.consumption.column(j);
            for i in 0..d {
                cost[i] -= col[i] * price[j];
            }
        }
        let mut best = vec![0.0; d];
        oracle.solve_into(&cost, &mut best);
        Self {
            cost,
            best,
            flat: layout.to_flat(mu),
        }
    }
}

/// Reusable buffers for [`flat_loss_grad`].
#[derive(Debug, Clone)]
pub struct Scratch {
    c_hat: Vec<f64>,
    probe: Vec<f64>,
    w: Vec<f64>,
    g_c: Vec<f64>,
}

impl Scratch {
    pub fn new(d: usize) -> Self {
        Self {
            c_hat: vec![0.0; d],
            probe: vec![0.0; d],
            w: vec![0.0; d],
            g_c: vec![0.0; d],
        }
    }
}

/// Loss of one flat model output, writing the gradient with respect to that
/// output into `grad`. Agrees with [`surrogate_loss_and_grad`] after
/// flattening.
#[allow(clippy::too_many_arguments)]
pub fn flat_loss_grad(
    kind: LossKind,
    layout: &OutputLayout,
    price: &[f64],
    out: &[f64],
    target: &SampleTarget,
    oracle: &dyn DecisionOracle,
    scratch: &mut Scratch,
    grad: &mut [f64],
) -> f64 {
    let d = layout.d;
    if kind == LossKind::LsPred {
        let mut loss = 0.0;
        for ((g, &o), &t) in grad.iter_mut().zip(out).zip(&target.flat) {
            let r = o - t;
            loss += r * r;
            *g = 2.0 * r;
        }
        return loss;
    }

    let c_hat = &mut scratch.c_hat;
    if layout.identity_consumption {
        for i in 0..d {
            c_hat[i] = out[i] - price[i];
        }
    } else {
        c_hat.copy_from_slice(&out[..d]);
        for (j, &pj) in price.iter().enumerate() {
            let col = &out[d + j * d..d + (j + 1) * d];
            for i in 0..d {
                c_hat[i] -= col[i] * pj;
            }
        }
    }

    let c = &target.cost;
    let loss = match kind {
        LossKind::LsCost => {
            let mut loss = 0.0;
            for i in 0..d {
                let r = c_hat[i] - c[i];
                loss += r * r;
                scratch.g_c[i] = 2.0 * r;
            }
            loss
        }
        LossKind::SpoPlus => {
            for i in 0..d {
                scratch.probe[i] = 2.0 * c_hat[i] - c[i];
            }
            oracle.solve_into(&scratch.probe, &mut scratch.w);
            let mut loss = 0.0;
            for i in 0..d {
                let diff = scratch.w[i] - target.best[i];
                loss += scratch.probe[i] * diff;
                scratch.g_c[i] = 2.0 * diff;
            }
            loss
        }
        LossKind::LsPred => unreachable!(),
    };

    grad[..d].copy_from_slice(&scratch.g_c);
    if !layout.identity_consumption {
        for (j, &pj) in price.iter().enumerate() {
            let col = &mut grad[d + j * d..d + (j + 1) * d];
            for i in 0..d {
                col[i] = -pj * scratch.g_c[i];
            }
        }
    }
    loss
}

/// Convenience: an all-zero prediction gradient.
pub fn zero_prediction_grad(d: usize, m: usize) -> PredictionGrad {
    Outcome {
        reward: DVector::zeros(d),
        consumption: DMatrix::zeros(d, m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{GridPathRegion, KnapsackRegion, Region};
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cv(x: &[f64]) -> CostVector {
        CostVector(DVector::from_column_slice(x))
    }

    fn unit_knapsack() -> KnapsackRegion {
        KnapsackRegion::new(1, 1).unwrap()
    }

    fn random_outcome(rng: &mut ChaCha8Rng, d: usize, m: usize) -> Outcome {
        Outcome {
            reward: DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0)),
            consumption: DMatrix::from_fn(d, m, |_, _| rng.random_range(-1.0..1.0)),
        }
    }

    #[test]
    fn spo_zero_when_prediction_exact() {
        let region = KnapsackRegion::new(3, 2).unwrap();
        let mu = Outcome::new(dvector![1.0, -1.0, 2.0], DMatrix::from_element(3, 1, 0.5)).unwrap();
        let omega = DualPair::new(dvector![0.2], dvector![0.1]);
        assert_eq!(spo_loss(&mu, &mu, &omega, 1.0, &region).unwrap(), 0.0);
    }

    #[test]
    fn spo_one_dimensional() {
        let region = unit_knapsack();
        assert_eq!(spo_loss_costs(&[-1.0], &[1.0], &region), 1.0);
    }

    #[test]
    fn spo_on_grid_matches_path_enumeration() {
        let region = GridPathRegion::new(4).unwrap();
        let paths = region.vertices().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let mu = Outcome::with_identity(DVector::from_fn(24, |_, _| rng.random_range(0.0..2.0)));
            let mu_hat = Outcome::with_identity(DVector::from_fn(24, |_, _| rng.random_range(0.0..2.0)));
            let omega = DualPair::new(
                DVector::from_fn(24, |_, _| rng.random_range(-1.0..1.0)),
                DVector::from_fn(24, |_, _| rng.random_range(0.0..0.2)),
            );
            let c = decision_cost(&mu, &omega, 1.5).unwrap();
            let c_hat = decision_cost(&mu_hat, &omega, 1.5).unwrap();
            let best = paths
                .iter()
                .map(|p| objective(c.as_slice(), p.as_slice()))
                .fold(f64::NEG_INFINITY, f64::max);
            let chosen = paths
                .iter()
                .max_by(|a, b| {
                    objective(c_hat.as_slice(), a.as_slice())
                        .total_cmp(&objective(c_hat.as_slice(), b.as_slice()))
                })
                .unwrap();
            let expected = best - objective(c.as_slice(), chosen.as_slice());
            let got = spo_loss(&mu_hat, &mu, &omega, 1.5, &region).unwrap();
            assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        }
    }

    #[test]
    fn spo_plus_examples() {
        let region = unit_knapsack();
        assert_eq!(spo_plus_loss(&cv(&[1.0]), &cv(&[1.0]), &region).unwrap(), 0.0);
        assert_eq!(spo_plus_loss(&cv(&[-1.0]), &cv(&[1.0]), &region).unwrap(), 3.0);
        let g = spo_plus_subgrad_cost(&cv(&[1.2]), &cv(&[1.0]), &region).unwrap();
        assert_eq!(g.as_slice(), &[0.0]);
        let g = spo_plus_subgrad_cost(&cv(&[0.7]), &cv(&[0.7]), &region).unwrap();
        assert_eq!(g.as_slice(), &[0.0]);
    }

    #[test]
    fn spo_plus_zero_at_truth_and_dominates_spo() {
        let region = KnapsackRegion::new(4, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c_hat: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(spo_plus_loss(&cv(&c), &cv(&c), &region).unwrap(), 0.0);
            let plus = spo_plus_loss(&cv(&c_hat), &cv(&c), &region).unwrap();
            let spo = spo_loss_costs(&c_hat, &c, &region);
            assert!(spo >= 0.0 && plus >= spo, "{plus} < {spo}");
        }
    }

    #[test]
    fn spo_plus_subgradient_matches_finite_difference() {
        let region = KnapsackRegion::new(6, 3).unwrap();
        let verts = region.vertices().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 30 {
            let c: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c_hat: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let probe: Vec<f64> = c_hat.iter().zip(&c).map(|(a, b)| 2.0 * a - b).collect();
            let mut vals: Vec<f64> = verts.iter().map(|v| objective(&probe, v.as_slice())).collect();
            vals.sort_by(|a, b| b.total_cmp(a));
            if vals[0] - vals[1] < 1e-3 {
                continue;
            }
            checked += 1;
            let g = spo_plus_subgrad_cost(&cv(&c_hat), &cv(&c), &region).unwrap();
            let h = 1e-6;
            let fd = DVector::from_fn(6, |i, _| {
                let mut up = c_hat.clone();
                let mut dn = c_hat.clone();
                up[i] += h;
                dn[i] -= h;
                (spo_plus_loss(&cv(&up), &cv(&c), &region).unwrap()
                    - spo_plus_loss(&cv(&dn), &cv(&c), &region).unwrap())
                    / (2.0 * h)
            });
            let denom = g.norm().max(fd.norm()).max(1e-12);
            assert!((&g - &fd).norm() / denom <= 1e-5 || (g.norm() == 0.0 && fd.norm() < 1e-8));
        }
    }

    #[test]
    fn spo_plus_is_convex_in_prediction() {
        let region = KnapsackRegion::new(5, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..5).map(|_| rng.random_range(-1.0..1.0)).collect() };
            let c = draw(&mut rng);
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            let t: f64 = rng.random_range(0.0..1.0);
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
            let lhs = spo_plus_loss(&cv(&mix), &cv(&c), &region).unwrap();
            let rhs = t * spo_plus_loss(&cv(&a), &cv(&c), &region).unwrap()
                + (1.0 - t) * spo_plus_loss(&cv(&b), &cv(&c), &region).unwrap();
            assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn spo_invariant_to_positive_scaling_of_prediction() {
        let region = KnapsackRegion::new(6, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let c: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c_hat: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let alpha = rng.random_range(0.1..10.0);
            let scaled: Vec<f64> = c_hat.iter().map(|x| alpha * x).collect();
            assert_eq!(spo_loss_costs(&c_hat, &c, &region), spo_loss_costs(&scaled, &c, &region));
        }
    }

    #[test]
    fn ls_cost_examples() {
        assert_eq!(ls_cost_loss(&cv(&[1.0, 2.0]), &cv(&[1.0, 2.0])).unwrap(), 0.0);
        assert_eq!(ls_cost_grad(&cv(&[1.0, 2.0]), &cv(&[1.0, 2.0])).unwrap().as_slice(), &[0.0, 0.0]);
        assert_eq!(ls_cost_loss(&cv(&[1.0, 0.0]), &cv(&[0.0, 0.0])).unwrap(), 1.0);
        assert_eq!(ls_cost_grad(&cv(&[1.0, 0.0]), &cv(&[0.0, 0.0])).unwrap().as_slice(), &[2.0, 0.0]);
        assert!(ls_cost_loss(&cv(&[1.0]), &cv(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn ls_cost_grad_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let c: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let c_hat: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let g = ls_cost_grad(&cv(&c_hat), &cv(&c)).unwrap();
        let h = 1e-5;
        let fd = DVector::from_fn(5, |i, _| {
            let mut up = c_hat.clone();
            let mut dn = c_hat.clone();
            up[i] += h;
            dn[i] -= h;
            (ls_cost_loss(&cv(&up), &cv(&c)).unwrap() - ls_cost_loss(&cv(&dn), &cv(&c)).unwrap()) / (2.0 * h)
        });
        assert!((&g - &fd).norm() / g.norm() <= 1e-6);
    }

    #[test]
    fn ls_pred_examples() {
        let mu = Outcome::new(dvector![0.0], DMatrix::from_element(1, 1, 0.0)).unwrap();
        assert_eq!(ls_pred_loss(&mu, &mu).unwrap(), 0.0);
        let hat = Outcome::new(dvector![1.0], DMatrix::from_element(1, 1, 2.0)).unwrap();
        assert_eq!(ls_pred_loss(&hat, &mu).unwrap(), 5.0);
        let g = ls_pred_grad(&hat, &mu).unwrap();
        assert_eq!(g.reward[0], 2.0);
        assert_eq!(g.consumption[(0, 0)], 4.0);
    }

    #[test]
    fn ls_pred_grad_finite_difference_and_ignores_duals() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mu = random_outcome(&mut rng, 3, 2);
        let hat = random_outcome(&mut rng, 3, 2);
        let g = ls_pred_grad(&hat, &mu).unwrap().to_flat();
        let base = hat.to_flat();
        let h = 1e-5;
        let fd: Vec<f64> = (0..base.len())
            .map(|i| {
                let mut up = base.clone();
                let mut dn = base.clone();
                up[i] += h;
                dn[i] -= h;
                let f = |x: &[f64]| ls_pred_loss(&Outcome::from_flat(x, 3, 2).unwrap(), &mu).unwrap();
                (f(&up) - f(&dn)) / (2.0 * h)
            })
            .collect();
        let err: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err / norm <= 1e-6);

        let region = KnapsackRegion::new(3, 1).unwrap();
        let w1 = DualPair::zeros(2);
        let w2 = DualPair::new(dvector![0.5, -0.3], dvector![0.6, 0.8]);
        let (l1, _) = surrogate_loss_and_grad(LossKind::LsPred, &hat, &mu, &w1, 1.0, &region).unwrap();
        let (l2, _) = surrogate_loss_and_grad(LossKind::LsPred, &hat, &mu, &w2, 7.0, &region).unwrap();
        assert_eq!(l1, l2);
    }

    #[test]
    fn cost_grad_chain_rule() {
        let g = cost_grad_to_prediction_grad(&dvector![1.0, -2.0], &DualPair::zeros(3), 4.0);
        assert_eq!(g.reward.as_slice(), &[1.0, -2.0]);
        assert!(g.consumption.iter().all(|&x| x == 0.0));
        let g = cost_grad_to_prediction_grad(&dvector![1.0], &DualPair::new(dvector![2.0], dvector![0.0]), 1.0);
        assert_eq!(g.consumption[(0, 0)], -2.0);
    }

    #[test]
    fn composed_cost_gradient_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let region = KnapsackRegion::new(4, 2).unwrap();
        let mu = random_outcome(&mut rng, 4, 3);
        let hat = random_outcome(&mut rng, 4, 3);
        let omega = DualPair::new(
            DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)),
            DVector::from_fn(3, |_, _| rng.random_range(0.0..0.5)),
        );
        let (_, g) = surrogate_loss_and_grad(LossKind::LsCost, &hat, &mu, &omega, 2.0, &region).unwrap();
        let g = g.to_flat();
        let base = hat.to_flat();
        let f = |x: &[f64]| {
            surrogate_loss_and_grad(LossKind::LsCost, &Outcome::from_flat(x, 4, 3).unwrap(), &mu, &omega, 2.0, &region)
                .unwrap()
                .0
        };
        let h = 1e-5;
        let mut err = 0.0;
        let mut norm = 0.0;
        for i in 0..base.len() {
            let mut up = base.clone();
            let mut dn = base.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            err += (fd - g[i]).powi(2);
            norm += g[i] * g[i];
        }
        assert!(err.sqrt() / norm.sqrt() <= 1e-4);
    }

    #[test]
    fn flat_kernel_agrees_with_structured_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let knapsack = Region::Knapsack(KnapsackRegion::new(5, 2).unwrap());
        let grid = Region::GridPath(GridPathRegion::new(3).unwrap());
        for kind in LossKind::ALL {
            for _ in 0..20 {
                // Full layout on the knapsack.
                let layout = OutputLayout::full(5, 2);
                let mu = random_outcome(&mut rng, 5, 2);
                let hat = random_outcome(&mut rng, 5, 2);
                let omega = DualPair::new(
                    DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)),
                    DVector::from_fn(2, |_, _| rng.random_range(0.0..0.5)),
                );
                let zeta = 1.7;
                check_flat(kind, &layout, &hat, &mu, &omega, zeta, &knapsack);

                // Identity layout on the grid.
                let layout = OutputLayout::identity(12);
                let mu = Outcome::with_identity(DVector::from_fn(12, |_, _| rng.random_range(0.0..2.0)));
                let hat = Outcome::with_identity(DVector::from_fn(12, |_, _| rng.random_range(0.0..2.0)));
                let omega = DualPair::new(
                    DVector::from_fn(12, |_, _| rng.random_range(-1.0..1.0)),
                    DVector::from_fn(12, |_, _| rng.random_range(0.0..0.2)),
                );
                check_flat(kind, &layout, &hat, &mu, &omega, zeta, &grid);
            }
        }
    }

    fn check_flat(
        kind: LossKind,
        layout: &OutputLayout,
        hat: &Outcome,
        mu: &Outcome,
        omega: &DualPair,
        zeta: f64,
        oracle: &Region,
    ) {
        let price = omega.price(zeta);
        let target = SampleTarget::new(mu, layout, price.as_slice(), oracle);
        let out = layout.to_flat(hat);
        let mut grad = vec![0.0; layout.width()];
        let mut scratch = Scratch::new(layout.d);
        let loss = flat_loss_grad(kind, layout, price.as_slice(), &out, &target, oracle, &mut scratch, &mut grad);
        let (want_loss, want_grad) = surrogate_loss_and_grad(kind, hat, mu, omega, zeta, oracle).unwrap();
        assert!((loss - want_loss).abs() <= 1e-9 * (1.0 + want_loss.abs()), "{kind}: {loss} vs {want_loss}");
        let want = layout.to_flat(&want_grad);
        for (a, b) in grad.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-9, "{kind}: {a} vs {b}");
        }
    }

    #[test]
    fn loss_kind_names_round_trip() {
        for kind in LossKind::ALL {
            assert_eq!(kind.name().parse::<LossKind>().unwrap(), kind);
        }
        assert_eq!("SPO+".parse::<LossKind>().unwrap(), LossKind::SpoPlus);
        assert!("hinge".parse::<LossKind>().is_err());
    }
}
