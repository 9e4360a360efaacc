//! A fast self-check suite: oracles against enumeration, loss and gradient
//! checks, conjugates, projections, and the mirror-descent regret bound.
//!
//! Every check is cheap enough that the whole suite runs in seconds. The
//! SPO+ subgradient is taken through [`VerifyHooks`] so a broken
//! implementation can be substituted and shown to fail.

use nalgebra::{dvector, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::duals::{project_theta_box_ball, ConsumptionSet, DualConstants, DualState, UtilityModel};
use crate::error::Result;
use crate::losses::{spo_loss_costs, spo_plus_loss, spo_plus_subgrad_cost, LossKind};
use crate::models::{ErmBatch, HypothesisClass, Model};
use crate::oracles::{brute_force_solve, objective, DecisionOracle, GridPathRegion, KnapsackRegion, Region};
use crate::types::{Arrival, CostVector, DualPair, OutputLayout};

pub type SpoPlusSubgrad = fn(&CostVector, &CostVector, &dyn DecisionOracle) -> Result<DVector<f64>>;

/// Replaceable pieces of the implementation under test.
#[derive(Clone, Copy)]
pub struct VerifyHooks {
    pub spo_plus_subgrad: SpoPlusSubgrad,
}

impl Default for VerifyHooks {
    fn default() -> Self {
        Self {
            spo_plus_subgrad: spo_plus_subgrad_cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

/// Difference between the best and second-best vertex objectives.
pub fn argmax_margin(c: &[f64], vertices: &[DVector<f64>]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for v in vertices {
        let val = objective(c, v.as_slice());
        if val > best {
            second = best;
            best = val;
        } else if val > second {
            second = val;
        }
    }
    best - second
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

fn oracle_exactness(samples: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    let mut regions: Vec<Region> = [1, 3, 10]
        .iter()
        .map(|&k| Region::Knapsack(KnapsackRegion::new(10, k).expect("valid")))
        .collect();
    regions.push(Region::GridPath(GridPathRegion::new(4).expect("valid")));
    let mut mismatches = 0;
    let mut invalid = 0;
    for region in &regions {
        let vertices = region.vertices().expect("small regions enumerate");
        for _ in 0..samples {
            let c = uniform_vec(rng, region.dim(), -1.0, 1.0);
            let w = region.solve(c.as_slice());
            let brute = brute_force_solve(c.as_slice(), &vertices).expect("non-empty");
            if objective(c.as_slice(), w.as_slice()) != objective(c.as_slice(), brute.as_slice()) {
                mismatches += 1;
            }
            if !region.is_vertex(w.as_slice()) {
                invalid += 1;
            }
        }
    }
    CheckResult::new(
        "oracle matches enumeration",
        mismatches == 0 && invalid == 0,
        format!("{} regions x {samples} costs, {mismatches} mismatches, {invalid} invalid", regions.len()),
    )
}

fn spo_plus_consistency(samples: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    let regions = [
        Region::Knapsack(KnapsackRegion::new(10, 3).expect("valid")),
        Region::GridPath(GridPathRegion::new(4).expect("valid")),
    ];
    let mut bad = 0;
    for region in &regions {
        for _ in 0..samples {
            let c = CostVector(uniform_vec(rng, region.dim(), -1.0, 1.0));
            let c_hat = CostVector(uniform_vec(rng, region.dim(), -1.0, 1.0));
            let plus = spo_plus_loss(&c_hat, &c, region).expect("dims");
            let spo = spo_loss_costs(c_hat.as_slice(), c.as_slice(), region);
            let at_truth = spo_plus_loss(&c, &c, region).expect("dims");
            if !(plus >= spo && spo >= 0.0 && at_truth == 0.0) {
                bad += 1;
            }
        }
    }
    CheckResult::new(
        "spo+ >= spo >= 0, zero at truth",
        bad == 0,
        format!("{} pairs, {bad} violations", 2 * samples),
    )
}

fn spo_plus_subgradient(hooks: &VerifyHooks, points: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    let region = Region::Knapsack(KnapsackRegion::new(6, 2).expect("valid"));
    let vertices = region.vertices().expect("small");
    let h = 1e-6;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < points {
        let c = CostVector(uniform_vec(rng, 6, -1.0, 1.0));
        let c_hat = CostVector(uniform_vec(rng, 6, -1.0, 1.0));
        let probe: DVector<f64> = &c_hat.0 * 2.0 - &c.0;
        if argmax_margin(probe.as_slice(), &vertices) <= 1e-3 {
            continue;
        }
        let g = (hooks.spo_plus_subgrad)(&c_hat, &c, &region).expect("dims");
        let mut fd = DVector::zeros(6);
        for i in 0..6 {
            let mut up = c_hat.clone();
            let mut dn = c_hat.clone();
            up.0[i] += h;
            dn.0[i] -= h;
            fd[i] = (spo_plus_loss(&up, &c, &region).expect("dims") - spo_plus_loss(&dn, &c, &region).expect("dims"))
                / (2.0 * h);
        }
        let err = (&g - &fd).norm() / fd.norm().max(1e-12);
        worst = worst.max(if fd.norm() == 0.0 { g.norm() } else { err });
        checked += 1;
    }
    CheckResult::new(
        "spo+ subgradient vs finite differences",
        worst <= 1e-4,
        format!("{points} points, worst relative error {worst:.2e}"),
    )
}

fn history(rng: &mut ChaCha8Rng, n: usize, p: usize, layout: OutputLayout) -> Vec<Arrival> {
    (0..n)
        .map(|_| {
            let x = uniform_vec(rng, p, -1.0, 1.0);
            let flat = uniform_vec(rng, layout.width(), 0.5, 2.0);
            Arrival::new(x, layout.to_outcome(flat.as_slice()))
        })
        .collect()
}

/// Norm-wise relative error between the analytic batch gradient and central
/// differences of the batch loss.
pub fn model_gradient_error(
    model: &Model,
    batch: &ErmBatch,
    kind: LossKind,
    oracle: &dyn DecisionOracle,
    h: f64,
) -> f64 {
    let (_, grad) = batch.loss_and_grad(model, kind, oracle, None);
    let analytic = grad.flat_params();
    let base = model.flat_params();
    let mut probe = model.clone();
    let mut err = 0.0;
    let mut norm = 0.0;
    let mut params = base.clone();
    for i in 0..base.len() {
        params[i] = base[i] + h;
        probe.set_flat_params(&params).expect("same shape");
        let up = batch.loss(&probe, kind, oracle);
        params[i] = base[i] - h;
        probe.set_flat_params(&params).expect("same shape");
        let dn = batch.loss(&probe, kind, oracle);
        params[i] = base[i];
        let fd = (up - dn) / (2.0 * h);
        err += (fd - analytic[i]).powi(2);
        norm += fd.powi(2);
    }
    err.sqrt() / norm.sqrt().max(1e-12)
}

/// True when every sample's SPO+ argmax has a clear margin and no hidden
/// unit sits near its kink, so central differences are valid.
pub fn gradient_point_is_smooth(
    model: &Model,
    batch_history: &[Arrival],
    omega: &DualPair,
    zeta: f64,
    region: &Region,
    h: f64,
) -> bool {
    let vertices = region.vertices().expect("small region");
    for a in batch_history {
        let pred = model.forward(a.features.as_slice()).expect("dims");
        let price = omega.price(zeta);
        let c_hat = &pred.reward - &pred.consumption * &price;
        let c = &a.outcome.reward - &a.outcome.consumption * &price;
        let probe = &c_hat * 2.0 - &c;
        if argmax_margin(probe.as_slice(), &vertices) <= 1e-3 {
            return false;
        }
        if let Model::Mlp(m) = model {
            let pre = &m.w1 * &a.features + &m.b1;
            // A perturbation of size h moves a pre-activation by at most
            // h (1 + ||x||_1).
            let reach = 10.0 * h * (1.0 + a.features.abs().sum());
            if pre.iter().any(|z| z.abs() <= reach) {
                return false;
            }
        }
    }
    true
}

fn model_gradients(points: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    let region = Region::Knapsack(KnapsackRegion::new(4, 2).expect("valid"));
    let layout = OutputLayout::full(4, 2);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for class in [HypothesisClass::Linear, HypothesisClass::Mlp] {
        for kind in LossKind::ALL {
            let mut done = 0;
            let mut attempts = 0;
            while done < points && attempts < 50 * points {
                attempts += 1;
                let model = Model::init(class, 3, layout, rng);
                let hist = history(rng, 4, 3, layout);
                let omega = DualPair::new(uniform_vec(rng, 2, -0.5, 0.5), project_theta_box_ball(&uniform_vec(rng, 2, 0.0, 1.0)));
                if !gradient_point_is_smooth(&model, &hist, &omega, 1.5, &region, h) {
                    continue;
                }
                let batch = ErmBatch::new(&hist, layout, &omega, 1.5, &region).expect("dims");
                worst = worst.max(model_gradient_error(&model, &batch, kind, &region, h));
                done += 1;
            }
            checked += done;
        }
    }
    CheckResult::new(
        "model gradients vs finite differences",
        worst <= 1e-4 && checked == 6 * points,
        format!("{checked} points over 2 classes x 3 losses, worst relative error {worst:.2e}"),
    )
}

fn fenchel_young(samples: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    let m = 3;
    let b = uniform_vec(rng, m, 0.2, 2.0);
    let utilities = [
        UtilityModel::Zero { m },
        UtilityModel::LeftoverValue {
            y: uniform_vec(rng, m, 0.0, 1.0),
            b: b.clone(),
        },
        UtilityModel::SeparableQuadratic { m },
    ];
    let set = ConsumptionSet::upper_box(b);
    let mut ineq = 0;
    let mut worst_gap: f64 = 0.0;
    for _ in 0..samples {
        let v = uniform_vec(rng, m, -1.0, 3.0);
        for u in &utilities {
            let lambda = u.project_lambda(&uniform_vec(rng, m, -1.5, 1.5));
            if -u.value(&v) + u.conj(&lambda) < lambda.dot(&v) - 1e-9 {
                ineq += 1;
            }
            // Equality needs a v where the maximizer is interior.
            let v_in = match u {
                UtilityModel::SeparableQuadratic { .. } => v.map(|x| x.clamp(0.0, 1.0)),
                _ => v.clone(),
            };
            let star = u.fenchel_dual_point(&v_in);
            worst_gap = worst_gap.max((-u.value(&v_in) + u.conj(&star) - star.dot(&v_in)).abs());
        }
        let theta = project_theta_box_ball(&uniform_vec(rng, m, -1.0, 1.0));
        if set.dist(&v) + set.conj(&theta) < theta.dot(&v) - 1e-9 {
            ineq += 1;
        }
        let star = set.fenchel_dual_point(&v);
        worst_gap = worst_gap.max((set.dist(&v) + set.conj(&star) - star.dot(&v)).abs());
    }
    CheckResult::new(
        "fenchel-young inequality and equality",
        ineq == 0 && worst_gap <= 1e-8,
        format!("{samples} samples x 4 variants, {ineq} violations, worst equality gap {worst_gap:.1e}"),
    )
}

fn projections(samples: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    let set = ConsumptionSet::upper_box(dvector![1.0, 1.0]);
    let quad = UtilityModel::SeparableQuadratic { m: 2 };
    let step = 5e-3;
    let grid: Vec<DVector<f64>> = (0..=200)
        .flat_map(|i| (0..=200).map(move |j| dvector![i as f64 * step, j as f64 * step]))
        .filter(|p| p.norm() <= 1.0)
        .collect();
    let mut bad = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let z = uniform_vec(rng, 2, -2.0, 2.0);
        let p = project_theta_box_ball(&z);
        if !set.contains_theta(&p) || project_theta_box_ball(&p) != p {
            bad += 1;
        }
        let l = quad.project_lambda(&z);
        if !quad.contains_lambda(&l) || quad.project_lambda(&l) != l {
            bad += 1;
        }
        let nearest = grid
            .iter()
            .min_by(|a, b| (*a - &z).norm().total_cmp(&(*b - &z).norm()))
            .expect("grid");
        // The projection must be at least as close to z as every grid point.
        worst = worst.max((&p - &z).norm() - (nearest - &z).norm());
    }
    CheckResult::new(
        "projections feasible, idempotent, nearest",
        bad == 0 && worst <= 1e-12,
        format!("{samples} points, {bad} failures, worst excess over grid optimum {worst:.1e}"),
    )
}

/// Runs projected mirror descent on random consumption sequences in
/// `[0, v_max]^m` and returns `(regret_lambda, bound_lambda, regret_theta,
/// bound_theta)` where the bounds are `2 G sqrt(D T)`.
pub fn omd_regret_trial(m: usize, horizon: usize, rng: &mut ChaCha8Rng) -> (f64, f64, f64, f64) {
    let b = uniform_vec(rng, m, 0.3, 0.7);
    let v_max = 1.0;
    let utility = UtilityModel::SeparableQuadratic { m };
    let set = ConsumptionSet::upper_box(b.clone());
    let v_norm = v_max * (m as f64).sqrt();
    // Sup bounds on ||conj_subgrad - v|| over the domains and the sample box.
    let constants = DualConstants {
        d_lambda: utility.bregman_diameter(),
        d_theta: set.bregman_diameter(),
        g_lambda: (m as f64).sqrt().max(v_norm),
        g_theta: b.norm().max(v_norm),
    };
    let mut state = DualState::new(utility, set, constants, horizon as f64).expect("valid");
    let drift = uniform_vec(rng, m, 0.2, 0.8);
    for _ in 0..horizon {
        let v = DVector::from_fn(m, |i, _| (drift[i] + rng.random_range(-0.2..0.2)).clamp(0.0, v_max));
        state.observe(&v);
        state.update();
    }
    let bound = |g: f64, d: f64| 2.0 * g * (d * horizon as f64).sqrt();
    (
        state.regret_lambda(),
        bound(constants.g_lambda, constants.d_lambda),
        state.regret_theta(),
        bound(constants.g_theta, constants.d_theta),
    )
}

fn omd_regret(rng: &mut ChaCha8Rng) -> CheckResult {
    let (rl, bl, rt, bt) = omd_regret_trial(2, 2000, rng);
    CheckResult::new(
        "mirror descent regret within bound",
        rl <= bl && rt <= bt,
        format!("lambda {rl:.3} <= {bl:.3}, theta {rt:.3} <= {bt:.3}"),
    )
}

/// Runs the whole suite with a fixed seed.
pub fn run_verify(hooks: &VerifyHooks) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    vec![
        oracle_exactness(200, &mut rng),
        spo_plus_consistency(500, &mut rng),
        spo_plus_subgradient(hooks, 50, &mut rng),
        model_gradients(5, &mut rng),
        fenchel_young(2000, &mut rng),
        projections(50, &mut rng),
        omd_regret(&mut rng),
    ]
}

/// Plain-text table of results, one line per check.
pub fn format_report(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for r in results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        out.push_str(&format!("{status}  {:<width$}  {}\n", r.name, r.detail));
    }
    out
}
