//! The online episode loop, update schedules, metrics, and multi-trial runs.
//!
//! Each step predicts `(r_hat, V_hat)` from the context, prices consumption
//! with the current duals, and takes the oracle decision. The realized
//! outcome is then revealed. On schedule steps the duals take a mirror step
//! and the model is refit against the updated duals.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::datagen::{
    derive_seed, make_knapsack_instance, make_longest_path_instance, stream_rng, KnapsackOverrides,
    LongestPathOverrides, RngStream, SyntheticInstance, WARMUP_SAMPLES,
};
use crate::duals::{ConsumptionSet, DualConstants, DualState, UtilityModel};
use crate::error::{Error, Result};
use crate::losses::{spo_loss, LossKind};
use crate::models::{
    benchmark_predict, BenchmarkKind, ConditionalMean, ErmTrainer, HypothesisClass, Model, SaaPredictor,
    TrainingConfig,
};
use crate::oracles::{DecisionOracle, Region};
use crate::types::{decision_cost, Arrival, DualPair, OutputLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintMode {
    /// Stop at the first step whose averaged consumption leaves `V`.
    Hard,
    /// Run the full horizon and report the distance to `V`.
    Soft,
}

impl ConstraintMode {
    pub fn name(self) -> &'static str {
        match self {
            ConstraintMode::Hard => "hard",
            ConstraintMode::Soft => "soft",
        }
    }
}

impl std::str::FromStr for ConstraintMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hard" => Ok(ConstraintMode::Hard),
            "soft" => Ok(ConstraintMode::Soft),
            other => Err(Error::Config(format!("unknown constraint mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    /// Steps `p, 2p, ...`.
    Periodic(usize),
    /// Steps `floor(k^beta)` for `k = 1, 2, ...`.
    Power(f64),
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Schedule::Periodic(0) => Err(Error::Config("schedule period must be at least 1".into())),
            Schedule::Power(beta) if !(beta.is_finite() && beta >= 1.0) => {
                Err(Error::Config(format!("schedule exponent must be >= 1, got {beta}")))
            }
            _ => Ok(()),
        }
    }
}

/// Update steps in `[1, T]`, increasing and without repeats.
pub fn update_schedule(schedule: Schedule, horizon: usize) -> Vec<usize> {
    match schedule {
        Schedule::Periodic(p) => (1..=horizon / p.max(1)).map(|k| k * p).collect(),
        Schedule::Power(beta) => {
            let mut steps: Vec<usize> = Vec::new();
            for k in 1.. {
                let t = (k as f64).powf(beta).floor() as usize;
                if t > horizon {
                    break;
                }
                if steps.last() != Some(&t) {
                    steps.push(t);
                }
            }
            steps
        }
    }
}

/// `sum_k (t_k - t_{k-1})^2` with `t_0 = 0`: the horizon that makes the
/// step size account for gradients summed over each update interval.
pub fn effective_horizon(steps: &[usize]) -> f64 {
    let mut prev = 0;
    let mut total = 0.0;
    for &t in steps {
        total += ((t - prev) as f64).powi(2);
        prev = t;
    }
    total.max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Predictor {
    Model(HypothesisClass),
    Benchmark(BenchmarkKind),
}

impl Predictor {
    pub fn name(self) -> &'static str {
        match self {
            Predictor::Model(c) => c.name(),
            Predictor::Benchmark(b) => b.name(),
        }
    }
}

impl std::str::FromStr for Predictor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.parse::<HypothesisClass>()
            .map(Predictor::Model)
            .or_else(|_| s.parse::<BenchmarkKind>().map(Predictor::Benchmark))
            .map_err(|_| Error::Config(format!("unknown predictor `{s}`")))
    }
}

/// Optional replacements for the derived dual constants and step sizes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DualOverrides {
    pub d_lambda: Option<f64>,
    pub d_theta: Option<f64>,
    pub g_lambda: Option<f64>,
    pub g_theta: Option<f64>,
    pub eta_lambda: Option<f64>,
    pub eta_theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub mode: ConstraintMode,
    pub horizon: usize,
    pub zeta: f64,
    pub schedule: Schedule,
    pub loss: LossKind,
    pub predictor: Predictor,
    /// Defaults to [`TrainingConfig::for_class`].
    pub training: Option<TrainingConfig>,
    pub duals: DualOverrides,
    pub seed: u64,
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.zeta.is_finite() && self.zeta > 0.0) {
            return Err(Error::Config(format!("budget penalty must be positive, got {}", self.zeta)));
        }
        self.schedule.validate()
    }
}

/// Everything an episode needs besides the arrivals: oracle, utility,
/// consumption set, and warmup-derived defaults.
#[derive(Debug, Clone)]
pub struct Environment {
    pub region: Region,
    pub utility: UtilityModel,
    pub set: ConsumptionSet,
    pub layout: OutputLayout,
    /// Generator, when synthetic, for the true-model benchmark.
    pub truth: Option<SyntheticInstance>,
    /// Root mean square of `||V'w*(r)||` over the warmup sample, the scale
    /// of the consumption part of the dual gradients.
    pub consumption_scale: f64,
    /// Mean of `max_w r'w` plus utility of the matching consumption over the
    /// warmup sample, an upper estimate of the optimal objective.
    pub warmup_objective: f64,
}

impl Environment {
    pub fn new(
        region: Region,
        utility: UtilityModel,
        set: ConsumptionSet,
        layout: OutputLayout,
        warmup: &[Arrival],
    ) -> Result<Self> {
        if warmup.is_empty() {
            return Err(Error::Config("warmup sample is empty".into()));
        }
        let mut sq_norms = 0.0;
        let mut reward = 0.0;
        let mut consumption = DVector::zeros(set.m());
        for a in warmup {
            let w = region.solve(a.outcome.reward.as_slice());
            let v = a.outcome.consumption.transpose() * &w;
            sq_norms += v.norm_squared();
            reward += a.outcome.reward.dot(&w);
            consumption += v;
        }
        let n = warmup.len() as f64;
        let warmup_objective = reward / n + utility.value(&(consumption / n));
        Ok(Self {
            region,
            utility,
            set,
            layout,
            truth: None,
            consumption_scale: (sq_norms / n).sqrt(),
            warmup_objective,
        })
    }

    /// Environment of a synthetic instance with its warmup sample.
    pub fn from_instance(inst: &SyntheticInstance) -> Result<Self> {
        let warmup = inst.sample_arrivals(WARMUP_SAMPLES, &mut stream_rng(inst.seed, RngStream::Warmup));
        let mut env = Self::new(inst.region(), inst.utility(), inst.consumption_set(), inst.layout(), &warmup)?;
        env.truth = Some(inst.clone());
        Ok(env)
    }

    /// Default budget penalty. Hard constraints use `warmup_objective / B_V`.
    /// Soft constraints use `2 sqrt(D_Lambda / D_Theta)`, falling back to the
    /// hard-mode value when `Lambda` is a single point.
    pub fn default_zeta(&self, mode: ConstraintMode) -> Result<f64> {
        let zeta = match mode {
            ConstraintMode::Soft if !self.utility.is_fixed() => {
                2.0 * (self.utility.bregman_diameter() / self.set.bregman_diameter()).sqrt()
            }
            _ => self.warmup_objective / self.set.boundary_radius(),
        };
        if zeta.is_finite() && zeta > 0.0 {
            Ok(zeta)
        } else {
            Err(Error::Config(
                "cannot derive a default budget penalty; set zeta explicitly".into(),
            ))
        }
    }

    pub fn dual_constants(&self, o: &DualOverrides) -> DualConstants {
        let base = DualConstants::estimate(&self.utility, &self.set, self.consumption_scale);
        DualConstants {
            d_lambda: o.d_lambda.unwrap_or(base.d_lambda),
            d_theta: o.d_theta.unwrap_or(base.d_theta),
            g_lambda: o.g_lambda.unwrap_or(base.g_lambda),
            g_theta: o.g_theta.unwrap_or(base.g_theta),
        }
    }
}

/// One step of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub decision: DVector<f64>,
    pub reward: f64,
    pub consumption: DVector<f64>,
    /// Duals used for the decision.
    pub omega: DualPair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub horizon: usize,
    pub records: Vec<StepRecord>,
    /// Last recorded step; `horizon` when the run never left `V`.
    pub tau: usize,
    /// Whether the hard constraint stopped the run.
    pub stopped: bool,
    pub total_reward: f64,
    pub total_consumption: DVector<f64>,
    /// True decision loss at each schedule step.
    pub spo_losses: Vec<(usize, f64)>,
    pub regret_lambda: f64,
    pub regret_theta: f64,
    pub constants: DualConstants,
    pub eta_lambda: f64,
    pub eta_theta: f64,
    /// Wall time per step, kept apart from the deterministic records.
    pub step_ms: Vec<f64>,
}

impl Trajectory {
    /// `(1/T) sum_t v_t` over the recorded steps.
    pub fn average_consumption(&self) -> DVector<f64> {
        &self.total_consumption / self.horizon as f64
    }

    pub fn max_consumption_norm(&self) -> f64 {
        self.records.iter().map(|r| r.consumption.norm()).fold(0.0, f64::max)
    }

    pub fn wall_ms(&self) -> f64 {
        self.step_ms.iter().sum()
    }
}

/// Runs one episode over the first `T` arrivals.
pub fn run_episode(config: &EpisodeConfig, env: &Environment, arrivals: &[Arrival]) -> Result<Trajectory> {
    config.validate()?;
    let horizon = config.horizon;
    if arrivals.len() < horizon {
        return Err(Error::Usage(format!(
            "episode needs {horizon} arrivals, got {}",
            arrivals.len()
        )));
    }
    let m = env.set.m();
    if config.mode == ConstraintMode::Hard && !env.set.contains(&DVector::zeros(m)) {
        return Err(Error::Config("hard constraints need the zero consumption to be feasible".into()));
    }

    let steps = update_schedule(config.schedule, horizon);
    let mut is_update = vec![false; horizon + 1];
    for &t in &steps {
        is_update[t] = true;
    }
    let constants = env.dual_constants(&config.duals);
    let mut duals = if config.duals.eta_lambda.is_some() || config.duals.eta_theta.is_some() {
        let auto = DualState::new(env.utility.clone(), env.set.clone(), constants, effective_horizon(&steps))?;
        DualState::with_step_sizes(
            env.utility.clone(),
            env.set.clone(),
            constants,
            config.duals.eta_lambda.unwrap_or(auto.eta_lambda),
            config.duals.eta_theta.unwrap_or(auto.eta_theta),
        )?
    } else {
        DualState::new(env.utility.clone(), env.set.clone(), constants, effective_horizon(&steps))?
    };

    let (mut model, mut trainer) = match config.predictor {
        Predictor::Model(class) => {
            let p = arrivals[0].features.len();
            let model = Model::init(class, p, env.layout, &mut stream_rng(config.seed, RngStream::ModelInit));
            let training = config.training.unwrap_or_else(|| TrainingConfig::for_class(class));
            let trainer_seed = derive_seed(config.seed, RngStream::Training as u64);
            (Some(model), Some(ErmTrainer::new(training, trainer_seed)))
        }
        Predictor::Benchmark(_) => (None, None),
    };
    let truth = env.truth.as_ref().map(|t| t as &dyn ConditionalMean);
    let mut saa = SaaPredictor::new(env.layout.d, m);

    let mut records = Vec::with_capacity(horizon);
    let mut step_ms = Vec::with_capacity(horizon);
    let mut total_reward = 0.0;
    let mut total_consumption = DVector::zeros(m);
    let mut spo_losses = Vec::new();
    let mut tau = horizon;
    let mut stopped = false;
    let inv_t = 1.0 / horizon as f64;

    for t in 1..=horizon {
        let started = Instant::now();
        let arrival = &arrivals[t - 1];
        let x = arrival.features.as_slice();
        let prediction = match (&model, config.predictor) {
            (Some(g), _) => g.forward(x)?,
            (None, Predictor::Benchmark(kind)) => benchmark_predict(kind, x, &saa, arrival, truth)?,
            (None, Predictor::Model(_)) => unreachable!("models are always initialized"),
        };
        let omega = duals.omega.clone();
        let cost = decision_cost(&prediction, &omega, config.zeta)?;
        let decision = env.region.solve(cost.as_slice());
        debug_assert!(env.region.is_vertex(decision.as_slice()));
        let reward = arrival.outcome.reward.dot(&decision);
        let consumption = arrival.outcome.consumption.transpose() * &decision;

        total_reward += reward;
        total_consumption += &consumption;
        saa.observe(&arrival.outcome);
        duals.observe(&consumption);
        records.push(StepRecord {
            decision,
            reward,
            consumption,
            omega,
        });

        if config.mode == ConstraintMode::Hard && !env.set.contains(&(&total_consumption * inv_t)) {
            tau = t;
            stopped = true;
            step_ms.push(started.elapsed().as_secs_f64() * 1e3);
            break;
        }

        if is_update[t] {
            let omega = &records[t - 1].omega;
            spo_losses.push((
                t,
                spo_loss(&prediction, &arrival.outcome, omega, config.zeta, &env.region)?,
            ));
            duals.update();
            if let (Some(g), Some(tr)) = (model.as_mut(), trainer.as_mut()) {
                tr.fit(g, &arrivals[..t], &duals.omega, config.zeta, config.loss, &env.region)?;
            }
        }
        step_ms.push(started.elapsed().as_secs_f64() * 1e3);
    }

    Ok(Trajectory {
        horizon,
        tau,
        stopped,
        total_reward,
        total_consumption,
        spo_losses,
        regret_lambda: duals.regret_lambda(),
        regret_theta: duals.regret_theta(),
        constants,
        eta_lambda: duals.eta_lambda,
        eta_theta: duals.eta_theta,
        step_ms,
        records,
    })
}

/// `(1/T) sum r_t'w_t + u((1/T) sum v_t)` over the recorded steps.
pub fn compute_objective(traj: &Trajectory, utility: &UtilityModel) -> f64 {
    traj.total_reward / traj.horizon as f64 + utility.value(&traj.average_consumption())
}

/// `1 - obj / obj_hindsight`; `None` when the hindsight value is not
/// positive.
pub fn relative_regret(obj: f64, obj_hindsight: f64) -> Option<f64> {
    (obj_hindsight > 0.0).then(|| 1.0 - obj / obj_hindsight)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub tau: usize,
    pub obj: f64,
    pub obj_hindsight: f64,
    pub rel_regret: Option<f64>,
    /// `d_V(v_avg)`, soft mode only.
    pub infeasibility: Option<f64>,
    pub dv_measured: f64,
    pub regret_lambda: f64,
    pub regret_theta: f64,
    /// `D_v (zeta sqrt(D_Theta) + sqrt(D_Lambda))`.
    pub kappa_md: f64,
    pub wall_ms: f64,
}

impl Metrics {
    pub fn new(config: &EpisodeConfig, env: &Environment, traj: &Trajectory, obj_hindsight: f64) -> Self {
        let obj = compute_objective(traj, &env.utility);
        let dv = traj.max_consumption_norm();
        let c = traj.constants;
        Self {
            tau: traj.tau,
            obj,
            obj_hindsight,
            rel_regret: relative_regret(obj, obj_hindsight),
            infeasibility: (config.mode == ConstraintMode::Soft).then(|| env.set.dist(&traj.average_consumption())),
            dv_measured: dv,
            regret_lambda: traj.regret_lambda,
            regret_theta: traj.regret_theta,
            kappa_md: dv * (config.zeta * c.d_theta.sqrt() + c.d_lambda.sqrt()),
            wall_ms: traj.wall_ms(),
        }
    }
}

/// Which synthetic family to generate per trial.
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSpec {
    Knapsack(KnapsackOverrides),
    LongestPath(LongestPathOverrides),
}

impl InstanceSpec {
    pub fn name(&self) -> &'static str {
        match self {
            InstanceSpec::Knapsack(_) => "knapsack",
            InstanceSpec::LongestPath(_) => "longest_path",
        }
    }

    pub fn build(&self, seed: u64) -> Result<SyntheticInstance> {
        match self {
            InstanceSpec::Knapsack(o) => make_knapsack_instance(o, seed),
            InstanceSpec::LongestPath(o) => make_longest_path_instance(o, seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arm {
    pub loss: LossKind,
    pub predictor: Predictor,
}

impl Arm {
    pub fn label(&self) -> String {
        match self.predictor {
            Predictor::Model(c) => format!("{}/{}", self.loss.name(), c.name()),
            Predictor::Benchmark(b) => b.name().to_string(),
        }
    }
}

/// A grid of arms and horizons over independent trials.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialPlan {
    pub instance: InstanceSpec,
    pub arms: Vec<Arm>,
    pub horizons: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    /// Defaults to the instance family's natural mode.
    pub mode: Option<ConstraintMode>,
    /// Defaults to [`Environment::default_zeta`].
    pub zeta: Option<f64>,
    pub schedule: Schedule,
    pub training: Option<TrainingConfig>,
    pub duals: DualOverrides,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub arm: usize,
    pub horizon: usize,
    pub trial: usize,
    pub seed: u64,
    pub mode: ConstraintMode,
    pub zeta: f64,
    pub metrics: Metrics,
}

/// Runs trial `trial` of the plan: every arm at every horizon against the
/// same instance and arrival stream, plus one hindsight run per horizon.
pub fn run_trial(plan: &TrialPlan, trial: usize) -> Result<Vec<TrialRow>> {
    let seed = derive_seed(plan.master_seed, trial as u64);
    let inst = plan.instance.build(seed)?;
    let env = Environment::from_instance(&inst)?;
    let mode = plan.mode.unwrap_or(if inst.default_hard_constraints() {
        ConstraintMode::Hard
    } else {
        ConstraintMode::Soft
    });
    let zeta = match plan.zeta {
        Some(z) => z,
        None => env.default_zeta(mode)?,
    };
    let longest = plan.horizons.iter().copied().max().unwrap_or(0);
    let arrivals = inst.arrival_stream(seed, longest);
    let mut rows = Vec::with_capacity(plan.arms.len() * plan.horizons.len());
    for &horizon in &plan.horizons {
        let config = |arm: &Arm| EpisodeConfig {
            mode,
            horizon,
            zeta,
            schedule: plan.schedule,
            loss: arm.loss,
            predictor: arm.predictor,
            training: plan.training,
            duals: plan.duals,
            seed,
        };
        let hindsight_arm = Arm {
            loss: LossKind::SpoPlus,
            predictor: Predictor::Benchmark(BenchmarkKind::Hindsight),
        };
        let hindsight = run_episode(&config(&hindsight_arm), &env, &arrivals)?;
        let obj_hindsight = compute_objective(&hindsight, &env.utility);
        for (index, arm) in plan.arms.iter().enumerate() {
            let cfg = config(arm);
            let traj = run_episode(&cfg, &env, &arrivals)?;
            rows.push(TrialRow {
                arm: index,
                horizon,
                trial,
                seed,
                mode,
                zeta,
                metrics: Metrics::new(&cfg, &env, &traj, obj_hindsight),
            });
        }
    }
    Ok(rows)
}

fn validate_plan(plan: &TrialPlan) -> Result<()> {
    if plan.arms.is_empty() {
        return Err(Error::Config("at least one arm is required".into()));
    }
    if plan.horizons.is_empty() || plan.horizons.contains(&0) {
        return Err(Error::Config("horizons must be a non-empty list of positive values".into()));
    }
    if plan.trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    plan.schedule.validate()
}

/// Runs all trials on `workers` threads (`0` means all cores) and returns
/// rows ordered by arm, horizon, then trial.
pub fn run_trials(plan: &TrialPlan, workers: usize) -> Result<Vec<TrialRow>> {
    validate_plan(plan)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let per_trial: Vec<Result<Vec<TrialRow>>> =
        pool.install(|| (0..plan.trials).into_par_iter().map(|t| run_trial(plan, t)).collect());
    let mut rows = Vec::new();
    for r in per_trial {
        rows.extend(r?);
    }
    rows.sort_by_key(|r| (r.arm, plan.horizons.iter().position(|&h| h == r.horizon), r.trial));
    Ok(rows)
}

/// Mean and spread of one metric over trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (zero for one value).
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { n, mean, std })
    }

    pub fn std_err(&self) -> f64 {
        self.std / (self.n as f64).sqrt()
    }
}

/// Per `(arm, horizon)` summaries of a metric, skipping undefined values.
pub fn summarize<F>(rows: &[TrialRow], metric: F) -> Vec<(usize, usize, Summary)>
where
    F: Fn(&Metrics) -> Option<f64>,
{
    let mut keys: Vec<(usize, usize)> = rows.iter().map(|r| (r.arm, r.horizon)).collect();
    keys.dedup();
    keys.into_iter()
        .filter_map(|(arm, horizon)| {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.arm == arm && r.horizon == horizon)
                .filter_map(|r| metric(&r.metrics))
                .collect();
            Summary::of(&vals).map(|s| (arm, horizon, s))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::KnapsackRegion;
    use crate::types::Outcome;
    use nalgebra::{dvector, DMatrix};

    fn scalar_env(budget: f64) -> Environment {
        let region = Region::Knapsack(KnapsackRegion::new(1, 1).unwrap());
        let warmup = vec![Arrival::new(
            dvector![0.0],
            Outcome::new(dvector![1.0], DMatrix::from_element(1, 1, 2.0)).unwrap(),
        )];
        Environment::new(
            region,
            UtilityModel::Zero { m: 1 },
            ConsumptionSet::upper_box(dvector![budget]),
            OutputLayout::full(1, 1),
            &warmup,
        )
        .unwrap()
    }

    fn constant_arrivals(n: usize, reward: f64, use_: f64) -> Vec<Arrival> {
        (0..n)
            .map(|_| {
                Arrival::new(
                    dvector![0.0],
                    Outcome::new(dvector![reward], DMatrix::from_element(1, 1, use_)).unwrap(),
                )
            })
            .collect()
    }

    fn hindsight(mode: ConstraintMode, horizon: usize) -> EpisodeConfig {
        EpisodeConfig {
            mode,
            horizon,
            zeta: 1e-9,
            schedule: Schedule::Periodic(1),
            loss: LossKind::SpoPlus,
            predictor: Predictor::Benchmark(BenchmarkKind::Hindsight),
            training: None,
            duals: DualOverrides::default(),
            seed: 0,
        }
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(update_schedule(Schedule::Periodic(10), 25), vec![10, 20]);
        assert_eq!(update_schedule(Schedule::Power(1.0), 5), vec![1, 2, 3, 4, 5]);
        assert_eq!(update_schedule(Schedule::Power(1.5), 27), vec![1, 2, 5, 8, 11, 14, 18, 22, 27]);
        let squares = update_schedule(Schedule::Power(2.0), 100);
        assert_eq!(squares, (1..=10).map(|k| k * k).collect::<Vec<_>>());
        assert!(Schedule::Power(0.5).validate().is_err());
        assert!(Schedule::Periodic(0).validate().is_err());
        assert_eq!(effective_horizon(&[10, 20]), 200.0);
    }

    #[test]
    fn power_schedule_count() {
        for beta in [1.0, 1.5, 2.0] {
            for horizon in [100, 1000, 10_000] {
                let count = update_schedule(Schedule::Power(beta), horizon).len() as i64;
                let want = (horizon as f64).powf(1.0 / beta).floor() as i64;
                assert!((count - want).abs() <= 1, "beta {beta} T {horizon}: {count} vs {want}");
            }
        }
    }

    #[test]
    fn one_step_hindsight() {
        let env = scalar_env(1e6);
        let arrivals = constant_arrivals(1, 3.0, 2.0);
        let traj = run_episode(&hindsight(ConstraintMode::Hard, 1), &env, &arrivals).unwrap();
        assert_eq!(traj.records[0].decision, dvector![1.0]);
        assert_eq!(compute_objective(&traj, &env.utility), 3.0);
    }

    #[test]
    fn hard_stop_time() {
        let env = scalar_env(1.0);
        let arrivals = constant_arrivals(10, 1.0, 2.0);
        let traj = run_episode(&hindsight(ConstraintMode::Hard, 10), &env, &arrivals).unwrap();
        assert_eq!(traj.tau, 6);
        assert!(traj.stopped);
        assert_eq!(traj.records.len(), 6);
        // Sums stop at tau but still divide by T.
        assert!((compute_objective(&traj, &env.utility) - 0.6).abs() < 1e-15);

        let soft = run_episode(&hindsight(ConstraintMode::Soft, 10), &env, &arrivals).unwrap();
        assert_eq!(soft.records.len(), 10);
        assert_eq!(env.set.dist(&soft.average_consumption()), 1.0);
    }

    #[test]
    fn hard_mode_needs_zero_feasible() {
        let env = scalar_env(-1.0);
        let arrivals = constant_arrivals(3, 1.0, 1.0);
        let err = run_episode(&hindsight(ConstraintMode::Hard, 3), &env, &arrivals).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(run_episode(&hindsight(ConstraintMode::Hard, 5), &scalar_env(1.0), &arrivals).is_err());
    }

    #[test]
    fn objective_examples() {
        let env = scalar_env(1e6);
        let arrivals = constant_arrivals(4, 1.0, 0.0);
        let soft = run_episode(&hindsight(ConstraintMode::Soft, 4), &env, &arrivals).unwrap();
        let hard = run_episode(&hindsight(ConstraintMode::Hard, 4), &env, &arrivals).unwrap();
        assert_eq!(compute_objective(&soft, &env.utility), 1.0);
        assert_eq!(hard.tau, 4);
        assert_eq!(compute_objective(&hard, &env.utility), compute_objective(&soft, &env.utility));

        let utility = UtilityModel::leftover_value(dvector![1.0], dvector![1.0]).unwrap();
        let mut traj = soft.clone();
        traj.total_reward = 0.0;
        traj.total_consumption = dvector![1.0];
        assert_eq!(compute_objective(&traj, &utility), 0.75);
    }

    #[test]
    fn regret_examples() {
        assert_eq!(relative_regret(10.0, 10.0), Some(0.0));
        assert!((relative_regret(8.0, 10.0).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(relative_regret(0.0, 5.0), Some(1.0));
        assert_eq!(relative_regret(1.0, 0.0), None);
    }

    fn small_plan(arms: Vec<Arm>, trials: usize) -> TrialPlan {
        TrialPlan {
            instance: InstanceSpec::Knapsack(KnapsackOverrides::default()),
            arms,
            horizons: vec![40, 80],
            trials,
            master_seed: 7,
            mode: None,
            zeta: None,
            schedule: Schedule::Periodic(10),
            training: Some(TrainingConfig {
                steps: 5,
                ..TrainingConfig::for_class(HypothesisClass::Linear)
            }),
            duals: DualOverrides::default(),
        }
    }

    #[test]
    fn hindsight_arm_has_zero_regret() {
        let plan = small_plan(
            vec![Arm {
                loss: LossKind::LsPred,
                predictor: Predictor::Benchmark(BenchmarkKind::Hindsight),
            }],
            3,
        );
        let rows = run_trials(&plan, 1).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.metrics.rel_regret == Some(0.0)));
        assert!(rows.iter().all(|r| r.metrics.infeasibility.is_none()));
    }

    #[test]
    fn trials_are_deterministic_across_workers() {
        let arms = vec![
            Arm {
                loss: LossKind::SpoPlus,
                predictor: Predictor::Model(HypothesisClass::Linear),
            },
            Arm {
                loss: LossKind::LsCost,
                predictor: Predictor::Benchmark(BenchmarkKind::Saa),
            },
        ];
        let plan = small_plan(arms, 3);
        let a = run_trials(&plan, 1).unwrap();
        let b = run_trials(&plan, 3).unwrap();
        assert_eq!(a.len(), 12);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!((x.arm, x.horizon, x.trial, x.seed), (y.arm, y.horizon, y.trial, y.seed));
            assert_eq!(x.metrics.obj.to_bits(), y.metrics.obj.to_bits());
            assert_eq!(x.metrics.tau, y.metrics.tau);
        }
        let keys: Vec<_> = a.iter().map(|r| (r.arm, r.horizon, r.trial)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn episodes_are_deterministic() {
        let inst = make_knapsack_instance(&KnapsackOverrides::default(), 3).unwrap();
        let env = Environment::from_instance(&inst).unwrap();
        let arrivals = inst.arrival_stream(3, 60);
        let config = EpisodeConfig {
            mode: ConstraintMode::Soft,
            horizon: 60,
            zeta: env.default_zeta(ConstraintMode::Soft).unwrap(),
            schedule: Schedule::Power(1.5),
            loss: LossKind::SpoPlus,
            predictor: Predictor::Model(HypothesisClass::Mlp),
            training: Some(TrainingConfig {
                steps: 3,
                ..TrainingConfig::for_class(HypothesisClass::Mlp)
            }),
            duals: DualOverrides::default(),
            seed: 3,
        };
        let a = run_episode(&config, &env, &arrivals).unwrap();
        let b = run_episode(&config, &env, &arrivals).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.spo_losses, b.spo_losses);
        assert_eq!(a.spo_losses.len(), update_schedule(Schedule::Power(1.5), 60).len());
        for r in &a.records {
            assert!(env.utility.contains_lambda(&r.omega.lambda));
            assert!(env.set.contains_theta(&r.omega.theta));
        }
    }

    #[test]
    fn default_zeta_by_mode() {
        let inst = make_longest_path_instance(&LongestPathOverrides::default(), 5).unwrap();
        let env = Environment::from_instance(&inst).unwrap();
        let soft = env.default_zeta(ConstraintMode::Soft).unwrap();
        assert!((soft - 2.0 * 48f64.sqrt()).abs() < 1e-12);
        let hard = env.default_zeta(ConstraintMode::Hard).unwrap();
        assert_eq!(hard, env.warmup_objective / 0.6);
        let k = Environment::from_instance(&make_knapsack_instance(&KnapsackOverrides::default(), 5).unwrap()).unwrap();
        assert_eq!(k.default_zeta(ConstraintMode::Soft), k.default_zeta(ConstraintMode::Hard));
        assert!(scalar_env(-1.0).default_zeta(ConstraintMode::Hard).is_err());
    }

    #[test]
    fn summary_of_one_is_itself() {
        let s = Summary::of(&[0.25]).unwrap();
        assert_eq!((s.n, s.mean, s.std), (1, 0.25, 0.0));
        let s = Summary::of(&[1.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn duals_stay_in_domain_on_longest_path() {
        let inst = make_longest_path_instance(&LongestPathOverrides::default(), 4).unwrap();
        let env = Environment::from_instance(&inst).unwrap();
        let arrivals = inst.arrival_stream(4, 100);
        let config = EpisodeConfig {
            mode: ConstraintMode::Soft,
            horizon: 100,
            zeta: env.default_zeta(ConstraintMode::Soft).unwrap(),
            schedule: Schedule::Periodic(10),
            loss: LossKind::LsPred,
            predictor: Predictor::Benchmark(BenchmarkKind::TrueModel),
            training: None,
            duals: DualOverrides::default(),
            seed: 4,
        };
        let traj = run_episode(&config, &env, &arrivals).unwrap();
        assert_eq!(traj.records.len(), 100);
        assert!(traj.records.iter().any(|r| r.omega.lambda.norm() > 0.0));
        for r in &traj.records {
            assert!(env.region.is_vertex(r.decision.as_slice()));
        }
    }
}
