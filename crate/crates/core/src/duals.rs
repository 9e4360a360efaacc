//! Utility models, consumption sets, and the projected mirror-descent
//! updates of the dual pair `(lambda, theta)`.
//!
//! All geometry is Euclidean: the mirror step is a gradient step followed by
//! a Euclidean projection.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::types::DualPair;

const DOMAIN_TOL: f64 = 1e-9;

/// Consumption preference `u(v)` together with the data the dual update
/// needs: the conjugate `(-u)*`, a subgradient of it, and the domain `Lambda`.
#[derive(Debug, Clone, PartialEq)]
pub enum UtilityModel {
    /// `u = 0`; `Lambda = {0}`.
    Zero { m: usize },
    /// Leftover resources sold at price `y`: `u(v) = y'(b - v)`, which is
    /// `y'(b - v)+` on the feasible set `v <= b`. `Lambda = {y}`.
    LeftoverValue { y: DVector<f64>, b: DVector<f64> },
    /// `u(v) = sum_i v_i (1 - v_i)`; `Lambda = [-1, 1]^m`.
    SeparableQuadratic { m: usize },
}

impl UtilityModel {
    pub fn leftover_value(y: DVector<f64>, b: DVector<f64>) -> Result<Self> {
        check_dim("leftover prices", b.len(), y.len())?;
        Ok(UtilityModel::LeftoverValue { y, b })
    }

    pub fn name(&self) -> &'static str {
        match self {
            UtilityModel::Zero { .. } => "zero",
            UtilityModel::LeftoverValue { .. } => "leftover_value",
            UtilityModel::SeparableQuadratic { .. } => "separable_quadratic",
        }
    }

    pub fn m(&self) -> usize {
        match self {
            UtilityModel::Zero { m } | UtilityModel::SeparableQuadratic { m } => *m,
            UtilityModel::LeftoverValue { y, .. } => y.len(),
        }
    }

    pub fn value(&self, v: &DVector<f64>) -> f64 {
        match self {
            UtilityModel::Zero { .. } => 0.0,
            UtilityModel::LeftoverValue { y, b } => y.dot(b) - y.dot(v),
            UtilityModel::SeparableQuadratic { .. } => v.iter().map(|vi| vi * (1.0 - vi)).sum(),
        }
    }

    /// `(-u)*(lambda) = sup_v lambda'v + u(v)` on `Lambda`.
    pub fn conj(&self, lambda: &DVector<f64>) -> f64 {
        self.assert_in_lambda(lambda);
        match self {
            UtilityModel::Zero { .. } => 0.0,
            UtilityModel::LeftoverValue { y, b } => y.dot(b),
            UtilityModel::SeparableQuadratic { .. } => lambda.iter().map(|l| (l + 1.0).powi(2) / 4.0).sum(),
        }
    }

    /// A subgradient of the conjugate; it is the maximizing `v` in its
    /// definition.
    pub fn conj_subgrad(&self, lambda: &DVector<f64>) -> DVector<f64> {
        self.assert_in_lambda(lambda);
        match self {
            UtilityModel::Zero { m } => DVector::zeros(*m),
            UtilityModel::LeftoverValue { b, .. } => b.clone(),
            UtilityModel::SeparableQuadratic { .. } => lambda.map(|l| (l + 1.0) / 2.0),
        }
    }

    /// The `lambda` attaining equality in Fenchel–Young at `v` (that is,
    /// `-grad u(v)`), clipped into `Lambda`.
    pub fn fenchel_dual_point(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            UtilityModel::Zero { m } => DVector::zeros(*m),
            UtilityModel::LeftoverValue { y, .. } => y.clone(),
            UtilityModel::SeparableQuadratic { .. } => v.map(|vi| (2.0 * vi - 1.0).clamp(-1.0, 1.0)),
        }
    }

    pub fn project_lambda(&self, z: &DVector<f64>) -> DVector<f64> {
        match self {
            UtilityModel::Zero { m } => DVector::zeros(*m),
            UtilityModel::LeftoverValue { y, .. } => y.clone(),
            UtilityModel::SeparableQuadratic { .. } => z.map(|zi| zi.clamp(-1.0, 1.0)),
        }
    }

    pub fn contains_lambda(&self, lambda: &DVector<f64>) -> bool {
        if lambda.len() != self.m() {
            return false;
        }
        match self {
            UtilityModel::Zero { .. } => lambda.iter().all(|l| l.abs() <= DOMAIN_TOL),
            UtilityModel::LeftoverValue { y, .. } => (lambda - y).amax() <= DOMAIN_TOL,
            UtilityModel::SeparableQuadratic { .. } => lambda.iter().all(|l| l.abs() <= 1.0 + DOMAIN_TOL),
        }
    }

    fn assert_in_lambda(&self, lambda: &DVector<f64>) {
        assert!(
            self.contains_lambda(lambda),
            "lambda {:?} outside the domain of the {} utility",
            lambda.as_slice(),
            self.name()
        );
    }

    /// Lipschitz constant of `u` over the consumption range it is used on
    /// (`[0, 1]^m` for the quadratic).
    pub fn lipschitz(&self) -> f64 {
        match self {
            UtilityModel::Zero { .. } => 0.0,
            UtilityModel::LeftoverValue { y, .. } => y.norm(),
            UtilityModel::SeparableQuadratic { m } => (*m as f64).sqrt(),
        }
    }

    /// True when `Lambda` is a single point and no update can move it.
    pub fn is_fixed(&self) -> bool {
        !matches!(self, UtilityModel::SeparableQuadratic { .. })
    }

    /// `D_Lambda = diam(Lambda)^2 / 2`.
    pub fn bregman_diameter(&self) -> f64 {
        match self {
            UtilityModel::SeparableQuadratic { m } => 0.5 * 4.0 * *m as f64,
            _ => 0.0,
        }
    }

    /// Bound on `||conj_subgrad||` over `Lambda`.
    pub fn conj_subgrad_bound(&self) -> f64 {
        match self {
            UtilityModel::Zero { .. } => 0.0,
            UtilityModel::LeftoverValue { b, .. } => b.norm(),
            UtilityModel::SeparableQuadratic { m } => (*m as f64).sqrt(),
        }
    }

    /// `0` when it lies in `Lambda`, otherwise its projection.
    pub fn initial_lambda(&self) -> DVector<f64> {
        self.project_lambda(&DVector::zeros(self.m()))
    }

    /// `argmin_{lambda in Lambda} -s'lambda + n conj(lambda)`: the best
    /// fixed dual against `n` observed consumptions summing to `s`.
    pub fn best_fixed_lambda(&self, s: &DVector<f64>, n: usize) -> DVector<f64> {
        match self {
            UtilityModel::SeparableQuadratic { .. } if n > 0 => {
                s.map(|si| (2.0 * si / n as f64 - 1.0).clamp(-1.0, 1.0))
            }
            _ => self.initial_lambda(),
        }
    }
}

/// Feasible region for the average consumption.
#[derive(Debug, Clone, PartialEq)]
pub enum ConsumptionSet {
    /// `V = {v : v <= b}`; `Theta = {theta >= 0, ||theta|| <= 1}`.
    UpperBox { b: DVector<f64> },
}

impl ConsumptionSet {
    pub fn upper_box(b: DVector<f64>) -> Self {
        ConsumptionSet::UpperBox { b }
    }

    pub fn m(&self) -> usize {
        match self {
            ConsumptionSet::UpperBox { b } => b.len(),
        }
    }

    pub fn bound(&self) -> &DVector<f64> {
        match self {
            ConsumptionSet::UpperBox { b } => b,
        }
    }

    pub fn contains(&self, v: &DVector<f64>) -> bool {
        match self {
            ConsumptionSet::UpperBox { b } => v.iter().zip(b.iter()).all(|(vi, bi)| vi <= bi),
        }
    }

    /// Euclidean distance to the set.
    pub fn dist(&self, v: &DVector<f64>) -> f64 {
        match self {
            ConsumptionSet::UpperBox { b } => v
                .iter()
                .zip(b.iter())
                .map(|(vi, bi)| (vi - bi).max(0.0).powi(2))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// `d_V*(theta) = sup_v theta'v - dist(v)` on `Theta`.
    pub fn conj(&self, theta: &DVector<f64>) -> f64 {
        self.assert_in_theta(theta);
        match self {
            ConsumptionSet::UpperBox { b } => theta.dot(b),
        }
    }

    pub fn conj_subgrad(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.assert_in_theta(theta);
        match self {
            ConsumptionSet::UpperBox { b } => b.clone(),
        }
    }

    /// A `theta` attaining equality in Fenchel–Young at `v`.
    pub fn fenchel_dual_point(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            ConsumptionSet::UpperBox { b } => {
                let excess = (v - b).map(|e| e.max(0.0));
                let n = excess.norm();
                if n > 0.0 {
                    excess / n
                } else {
                    DVector::zeros(b.len())
                }
            }
        }
    }

    pub fn project_theta(&self, z: &DVector<f64>) -> DVector<f64> {
        project_theta_box_ball(z)
    }

    pub fn contains_theta(&self, theta: &DVector<f64>) -> bool {
        theta.len() == self.m() && theta.iter().all(|t| *t >= -DOMAIN_TOL) && theta.norm() <= 1.0 + DOMAIN_TOL
    }

    fn assert_in_theta(&self, theta: &DVector<f64>) {
        assert!(
            self.contains_theta(theta),
            "theta {:?} outside the nonnegative unit ball",
            theta.as_slice()
        );
    }

    /// Distance from the origin to the boundary of `V`.
    pub fn boundary_radius(&self) -> f64 {
        match self {
            ConsumptionSet::UpperBox { b } => b.min(),
        }
    }

    /// `D_Theta = diam(Theta)^2 / 2`.
    pub fn bregman_diameter(&self) -> f64 {
        if self.m() >= 2 {
            1.0
        } else {
            0.5
        }
    }

    pub fn conj_subgrad_bound(&self) -> f64 {
        self.bound().norm()
    }

    /// `argmin_{theta in Theta} -s'theta + n conj(theta)`.
    pub fn best_fixed_theta(&self, s: &DVector<f64>, n: usize) -> DVector<f64> {
        let excess = (s - self.bound() * n as f64).map(|a| a.max(0.0));
        let norm = excess.norm();
        if norm > 0.0 {
            excess / norm
        } else {
            DVector::zeros(self.m())
        }
    }
}

/// Euclidean projection onto `{theta >= 0, ||theta|| <= 1}`: clamp to the
/// orthant, then rescale into the ball.
pub fn project_theta_box_ball(z: &DVector<f64>) -> DVector<f64> {
    let pos = z.map(|zi| zi.max(0.0));
    let n = pos.norm();
    // A rescaled point may have norm one plus a few ulps; leave it alone so
    // the projection is idempotent.
    if n > 1.0 + 1e-12 {
        pos / n
    } else {
        pos
    }
}

/// `xi_t(lambda) = -v'lambda + (-u)*(lambda)`.
pub fn xi_value(lambda: &DVector<f64>, v: &DVector<f64>, utility: &UtilityModel) -> f64 {
    -v.dot(lambda) + utility.conj(lambda)
}

/// `phi_t(theta) = -v'theta + d_V*(theta)`.
pub fn phi_value(theta: &DVector<f64>, v: &DVector<f64>, set: &ConsumptionSet) -> f64 {
    -v.dot(theta) + set.conj(theta)
}

/// Subgradient of `xi_t` at `lambda`.
pub fn subgrad_xi(lambda: &DVector<f64>, v: &DVector<f64>, utility: &UtilityModel) -> DVector<f64> {
    utility.conj_subgrad(lambda) - v
}

/// Subgradient of `phi_t` at `theta`.
pub fn subgrad_phi(theta: &DVector<f64>, v: &DVector<f64>, set: &ConsumptionSet) -> DVector<f64> {
    set.conj_subgrad(theta) - v
}

/// `projector(point - eta * grad)`.
pub fn omd_step<P>(point: &DVector<f64>, grad: &DVector<f64>, eta: f64, projector: P) -> DVector<f64>
where
    P: Fn(&DVector<f64>) -> DVector<f64>,
{
    debug_assert!(eta > 0.0, "step size must be positive");
    projector(&(point - grad * eta))
}

/// Constant step size `sqrt(D) / (G sqrt(T))`.
pub fn omd_step_size(d: f64, g: f64, t: f64) -> Result<f64> {
    if !(d > 0.0 && g > 0.0 && t >= 1.0) || !d.is_finite() || !g.is_finite() || !t.is_finite() {
        return Err(Error::Config(format!(
            "step size needs D > 0, G > 0, T >= 1 (got D={d}, G={g}, T={t})"
        )));
    }
    Ok(d.sqrt() / (g * t.sqrt()))
}

/// Diameter and gradient-norm bounds for both dual blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualConstants {
    pub d_lambda: f64,
    pub d_theta: f64,
    pub g_lambda: f64,
    pub g_theta: f64,
}

impl DualConstants {
    /// Defaults from the geometry of `Lambda`, `Theta` and the typical
    /// consumption norm.
    pub fn estimate(utility: &UtilityModel, set: &ConsumptionSet, consumption_scale: f64) -> Self {
        Self {
            d_lambda: utility.bregman_diameter(),
            d_theta: set.bregman_diameter(),
            g_lambda: utility.conj_subgrad_bound() + consumption_scale,
            g_theta: set.conj_subgrad_bound() + consumption_scale,
        }
    }
}

/// Dual iterates, their step sizes, and running regret diagnostics.
///
/// Consumptions are fed one step at a time with [`DualState::observe`];
/// [`DualState::update`] takes one projected step along the subgradients
/// accumulated since the previous update, so the duals stay fixed between
/// scheduled updates.
#[derive(Debug, Clone)]
pub struct DualState {
    pub utility: UtilityModel,
    pub set: ConsumptionSet,
    pub omega: DualPair,
    pub eta_lambda: f64,
    pub eta_theta: f64,
    pub constants: DualConstants,
    pending_lambda: DVector<f64>,
    pending_theta: DVector<f64>,
    pending: usize,
    sum_xi: f64,
    sum_phi: f64,
    sum_v: DVector<f64>,
    count: usize,
}

impl DualState {
    /// Step sizes from [`omd_step_size`] with horizon `t_eff`. A fixed
    /// `Lambda` gets a zero step and is never moved.
    pub fn new(utility: UtilityModel, set: ConsumptionSet, constants: DualConstants, t_eff: f64) -> Result<Self> {
        let eta_lambda = if utility.is_fixed() {
            0.0
        } else {
            omd_step_size(constants.d_lambda, constants.g_lambda, t_eff)?
        };
        let eta_theta = omd_step_size(constants.d_theta, constants.g_theta, t_eff)?;
        Self::with_step_sizes(utility, set, constants, eta_lambda, eta_theta)
    }

    pub fn with_step_sizes(
        utility: UtilityModel,
        set: ConsumptionSet,
        constants: DualConstants,
        eta_lambda: f64,
        eta_theta: f64,
    ) -> Result<Self> {
        let m = set.m();
        check_dim("utility resources", m, utility.m())?;
        if eta_theta <= 0.0 || eta_lambda < 0.0 || (eta_lambda == 0.0 && !utility.is_fixed()) {
            return Err(Error::Config("dual step sizes must be positive".into()));
        }
        let omega = DualPair::new(utility.initial_lambda(), DVector::zeros(m));
        Ok(Self {
            utility,
            set,
            omega,
            eta_lambda,
            eta_theta,
            constants,
            pending_lambda: DVector::zeros(m),
            pending_theta: DVector::zeros(m),
            pending: 0,
            sum_xi: 0.0,
            sum_phi: 0.0,
            sum_v: DVector::zeros(m),
            count: 0,
        })
    }

    pub fn m(&self) -> usize {
        self.set.m()
    }

    /// Records the consumption of one step at the current duals.
    pub fn observe(&mut self, v: &DVector<f64>) {
        let DualPair { lambda, theta } = &self.omega;
        self.sum_xi += xi_value(lambda, v, &self.utility);
        self.sum_phi += phi_value(theta, v, &self.set);
        self.sum_v += v;
        self.count += 1;
        self.pending_lambda += subgrad_xi(lambda, v, &self.utility);
        self.pending_theta += subgrad_phi(theta, v, &self.set);
        self.pending += 1;
    }

    /// One mirror step along the accumulated subgradients.
    pub fn update(&mut self) {
        if self.pending == 0 {
            return;
        }
        if !self.utility.is_fixed() {
            let utility = &self.utility;
            self.omega.lambda = omd_step(&self.omega.lambda, &self.pending_lambda, self.eta_lambda, |z| {
                utility.project_lambda(z)
            });
        }
        self.omega.theta = omd_step(&self.omega.theta, &self.pending_theta, self.eta_theta, project_theta_box_ball);
        debug_assert!(self.utility.contains_lambda(&self.omega.lambda));
        debug_assert!(self.set.contains_theta(&self.omega.theta));
        self.pending_lambda.fill(0.0);
        self.pending_theta.fill(0.0);
        self.pending = 0;
    }

    /// Steps observed so far.
    pub fn observed(&self) -> usize {
        self.count
    }

    /// `sum_t xi_t(lambda_t) - min_{lambda in Lambda} sum_t xi_t(lambda)`.
    pub fn regret_lambda(&self) -> f64 {
        let best = self.utility.best_fixed_lambda(&self.sum_v, self.count);
        let value = -self.sum_v.dot(&best) + self.count as f64 * self.utility.conj(&best);
        self.sum_xi - value
    }

    /// `sum_t phi_t(theta_t) - min_{theta in Theta} sum_t phi_t(theta)`.
    pub fn regret_theta(&self) -> f64 {
        let best = self.set.best_fixed_theta(&self.sum_v, self.count);
        let value = -self.sum_v.dot(&best) + self.count as f64 * self.set.conj(&best);
        self.sum_phi - value
    }
}
