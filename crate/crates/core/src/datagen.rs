//! Synthetic instances: polynomial-kernel outcomes with multiplicative
//! noise, for the multi-dimensional knapsack and the grid longest path.
//!
//! For flat output coordinate `j`,
//! `vec(r, V)_j = (1 + (1 + W_j'x / sqrt(p))^deg) * eps_j` with
//! `x ~ N(0, I_p)` and `eps_j ~ U[1 - noise, 1 + noise]`.
//!
//! All randomness comes from ChaCha8 (`rand_chacha`), seeded per purpose
//! through [`stream_rng`], so streams are identical across platforms.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::duals::{ConsumptionSet, UtilityModel};
use crate::error::{check_dim, Error, Result};
use crate::models::ConditionalMean;
use crate::oracles::{DecisionOracle, GridPathRegion, KnapsackRegion, Region};
use crate::types::{Arrival, OutputLayout, Prediction};

/// Warmup sample size used for calibration.
pub const WARMUP_SAMPLES: usize = 1000;

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngStream {
    Instance = 0,
    Arrivals = 1,
    ModelInit = 2,
    Warmup = 3,
    Training = 4,
}

pub fn stream_rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// SplitMix64 finalizer over `master + index`, used to derive per-trial
/// seeds.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fair-coin 0/1 matrix, filled row by row.
pub fn sample_weight_matrix<R: Rng>(rows: usize, p: usize, rng: &mut R) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(rows, p);
    for i in 0..rows {
        for j in 0..p {
            w[(i, j)] = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
        }
    }
    w
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Knapsack {
        k: usize,
        /// Per-round resource budget `b`.
        budget: DVector<f64>,
        /// Sale price of leftover resources; `None` means no utility.
        leftover_price: Option<DVector<f64>>,
    },
    GridPath {
        n: usize,
        /// Per-edge usage cap: `V = {v <= v_cap e}`.
        v_cap: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInstance {
    /// `d (m + 1) x p` for the knapsack, `d x p` for the grid.
    pub weights: DMatrix<f64>,
    pub p: usize,
    pub d: usize,
    pub m: usize,
    pub deg: u32,
    pub noise: f64,
    pub family: Family,
    pub seed: u64,
}

impl SyntheticInstance {
    fn validate(&self) -> Result<()> {
        if self.p == 0 || self.d == 0 || self.m == 0 {
            return Err(Error::Config("p, d and m must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::Config(format!("noise half-width must lie in [0, 1), got {}", self.noise)));
        }
        check_dim("weight matrix rows", self.layout().width(), self.weights.nrows())?;
        check_dim("weight matrix columns", self.p, self.weights.ncols())?;
        match &self.family {
            Family::Knapsack { k, budget, leftover_price } => {
                KnapsackRegion::new(self.d, *k)?;
                check_dim("budget", self.m, budget.len())?;
                if let Some(y) = leftover_price {
                    check_dim("leftover prices", self.m, y.len())?;
                }
            }
            Family::GridPath { n, v_cap } => {
                let grid = GridPathRegion::new(*n)?;
                check_dim("grid edges", grid.num_edges(), self.d)?;
                check_dim("grid resources", self.d, self.m)?;
                if !(v_cap.is_finite() && *v_cap > 0.0) {
                    return Err(Error::Config(format!("v_cap must be positive, got {v_cap}")));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            Family::Knapsack { .. } => "knapsack",
            Family::GridPath { .. } => "longest_path",
        }
    }

    pub fn layout(&self) -> OutputLayout {
        match self.family {
            Family::Knapsack { .. } => OutputLayout::full(self.d, self.m),
            Family::GridPath { .. } => OutputLayout::identity(self.d),
        }
    }

    pub fn region(&self) -> Region {
        match &self.family {
            Family::Knapsack { k, .. } => Region::Knapsack(KnapsackRegion::new(self.d, *k).expect("validated")),
            Family::GridPath { n, .. } => Region::GridPath(GridPathRegion::new(*n).expect("validated")),
        }
    }

    pub fn utility(&self) -> UtilityModel {
        match &self.family {
            Family::Knapsack {
                leftover_price: Some(y),
                budget,
                ..
            } => UtilityModel::LeftoverValue {
                y: y.clone(),
                b: budget.clone(),
            },
            Family::Knapsack { .. } => UtilityModel::Zero { m: self.m },
            Family::GridPath { .. } => UtilityModel::SeparableQuadratic { m: self.m },
        }
    }

    pub fn consumption_set(&self) -> ConsumptionSet {
        match &self.family {
            Family::Knapsack { budget, .. } => ConsumptionSet::upper_box(budget.clone()),
            Family::GridPath { v_cap, .. } => ConsumptionSet::upper_box(DVector::from_element(self.m, *v_cap)),
        }
    }

    /// Hard budgets for the knapsack, soft caps for the grid.
    pub fn default_hard_constraints(&self) -> bool {
        matches!(self.family, Family::Knapsack { .. })
    }

    /// Noise-free flat outcome `1 + (1 + W x / sqrt(p))^deg`.
    pub fn mean_flat(&self, x: &[f64]) -> DVector<f64> {
        let x = DVector::from_column_slice(x);
        let scale = 1.0 / (self.p as f64).sqrt();
        (&self.weights * x).map(|z| 1.0 + (1.0 + z * scale).powi(self.deg as i32))
    }

    pub fn sample_arrival<R: Rng>(&self, rng: &mut R) -> Arrival {
        let x: Vec<f64> = (0..self.p).map(|_| rng.sample(StandardNormal)).collect();
        let mut flat = self.mean_flat(&x);
        if self.noise > 0.0 {
            let (lo, hi) = (1.0 - self.noise, 1.0 + self.noise);
            for v in flat.iter_mut() {
                *v *= rng.random_range(lo..=hi);
            }
        }
        Arrival::new(DVector::from_vec(x), self.layout().to_outcome(flat.as_slice()))
    }

    pub fn sample_arrivals<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<Arrival> {
        (0..n).map(|_| self.sample_arrival(rng)).collect()
    }

    /// The arrival stream for a seed (its [`RngStream::Arrivals`] stream).
    pub fn arrival_stream(&self, seed: u64, n: usize) -> Vec<Arrival> {
        self.sample_arrivals(n, &mut stream_rng(seed, RngStream::Arrivals))
    }
}

impl ConditionalMean for SyntheticInstance {
    fn conditional_mean(&self, x: &[f64]) -> Prediction {
        self.layout().to_outcome(self.mean_flat(x).as_slice())
    }
}

/// Knapsack settings; `None` fields take defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnapsackOverrides {
    pub p: Option<usize>,
    pub d: Option<usize>,
    pub m: Option<usize>,
    pub deg: Option<u32>,
    pub noise: Option<f64>,
    pub k: Option<usize>,
    /// Explicit scalar budget; otherwise calibrated from a warmup sample.
    pub budget: Option<f64>,
    /// Ratio of unconstrained greedy consumption to budget used by the
    /// calibration.
    pub budget_ratio: Option<f64>,
    pub leftover_price: Option<f64>,
}

pub const KNAPSACK_DEFAULT_NOISE: f64 = 0.5;
pub const KNAPSACK_DEFAULT_K: usize = 3;
pub const KNAPSACK_DEFAULT_BUDGET_RATIO: f64 = 1.5;

/// Knapsack instance with `(p, d, m, deg) = (5, 10, 3, 6)`, noise 0.5 and
/// `k = 3` by default. The scalar budget defaults to the mean per-resource
/// consumption of reward-greedy decisions over a warmup sample divided by
/// the budget ratio (1.5).
pub fn make_knapsack_instance(o: &KnapsackOverrides, seed: u64) -> Result<SyntheticInstance> {
    let p = o.p.unwrap_or(5);
    let d = o.d.unwrap_or(10);
    let m = o.m.unwrap_or(3);
    let k = o.k.unwrap_or(KNAPSACK_DEFAULT_K.min(d));
    let rows = d * (m + 1);
    let weights = sample_weight_matrix(rows, p, &mut stream_rng(seed, RngStream::Instance));
    let mut inst = SyntheticInstance {
        weights,
        p,
        d,
        m,
        deg: o.deg.unwrap_or(6),
        noise: o.noise.unwrap_or(KNAPSACK_DEFAULT_NOISE),
        family: Family::Knapsack {
            k,
            budget: DVector::from_element(m, 1.0),
            leftover_price: None,
        },
        seed,
    };
    inst.validate()?;
    let b = match o.budget {
        Some(b) if b.is_finite() && b > 0.0 => b,
        Some(b) => return Err(Error::Config(format!("budget must be positive, got {b}"))),
        None => {
            let ratio = o.budget_ratio.unwrap_or(KNAPSACK_DEFAULT_BUDGET_RATIO);
            if !(ratio.is_finite() && ratio > 0.0) {
                return Err(Error::Config(format!("budget ratio must be positive, got {ratio}")));
            }
            greedy_consumption(&inst, seed) / ratio
        }
    };
    let leftover_price = match o.leftover_price {
        Some(y) if y.is_finite() => Some(DVector::from_element(m, y)),
        Some(y) => return Err(Error::Config(format!("leftover price must be finite, got {y}"))),
        None => None,
    };
    inst.family = Family::Knapsack {
        k,
        budget: DVector::from_element(m, b),
        leftover_price,
    };
    Ok(inst)
}

/// Mean per-resource consumption of `w*(r)` over a warmup sample.
fn greedy_consumption(inst: &SyntheticInstance, seed: u64) -> f64 {
    let region = inst.region();
    let mut rng = stream_rng(seed, RngStream::Warmup);
    let mut total = 0.0;
    for _ in 0..WARMUP_SAMPLES {
        let a = inst.sample_arrival(&mut rng);
        let w = region.solve(a.outcome.reward.as_slice());
        total += (a.outcome.consumption.transpose() * w).sum();
    }
    total / (WARMUP_SAMPLES * inst.m) as f64
}

/// Longest-path settings; `None` fields take defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LongestPathOverrides {
    pub p: Option<usize>,
    pub n: Option<usize>,
    pub deg: Option<u32>,
    pub noise: Option<f64>,
    pub v_cap: Option<f64>,
}

pub const LONGEST_PATH_DEFAULT_HORIZON: usize = 1000;
pub const LONGEST_PATH_DEFAULT_V_CAP: f64 = 0.6;

/// Grid longest-path instance: `p = 5`, a 4 x 4 grid (`d = m = 24`),
/// identity consumption, cap 0.6 and the separable quadratic utility.
pub fn make_longest_path_instance(o: &LongestPathOverrides, seed: u64) -> Result<SyntheticInstance> {
    let p = o.p.unwrap_or(5);
    let n = o.n.unwrap_or(4);
    let grid = GridPathRegion::new(n)?;
    let d = grid.num_edges();
    let inst = SyntheticInstance {
        weights: sample_weight_matrix(d, p, &mut stream_rng(seed, RngStream::Instance)),
        p,
        d,
        m: d,
        deg: o.deg.unwrap_or(6),
        noise: o.noise.unwrap_or(KNAPSACK_DEFAULT_NOISE),
        family: Family::GridPath {
            n,
            v_cap: o.v_cap.unwrap_or(LONGEST_PATH_DEFAULT_V_CAP),
        },
        seed,
    };
    inst.validate()?;
    Ok(inst)
}

fn fmt_row<'a>(s: &mut String, vals: impl IntoIterator<Item = &'a f64>) {
    let parts: Vec<String> = vals.into_iter().map(|v| format!("{v:?}")).collect();
    let _ = writeln!(s, "{}", parts.join(" "));
}

impl SyntheticInstance {
    /// Plain-text form.
    ///
    /// ```text
    /// online-spo-instance v1
    /// family knapsack <k> | family longest_path <n> <v_cap>
    /// dims <p> <d> <m>
    /// deg <deg>
    /// noise <half-width>
    /// seed <seed>
    /// budget <b_1 .. b_m>            (knapsack only)
    /// leftover_price none | <y_1 .. y_m>   (knapsack only)
    /// weights <rows> <p>
    /// <one row of W per line>
    /// ```
    pub fn to_text(&self) -> String {
        let mut s = String::from("online-spo-instance v1\n");
        match &self.family {
            Family::Knapsack { k, .. } => {
                let _ = writeln!(s, "family knapsack {k}");
            }
            Family::GridPath { n, v_cap } => {
                let _ = writeln!(s, "family longest_path {n} {v_cap:?}");
            }
        }
        let _ = writeln!(s, "dims {} {} {}", self.p, self.d, self.m);
        let _ = writeln!(s, "deg {}", self.deg);
        let _ = writeln!(s, "noise {:?}", self.noise);
        let _ = writeln!(s, "seed {}", self.seed);
        if let Family::Knapsack {
            budget, leftover_price, ..
        } = &self.family
        {
            s.push_str("budget ");
            fmt_row(&mut s, budget.iter());
            match leftover_price {
                None => s.push_str("leftover_price none\n"),
                Some(y) => {
                    s.push_str("leftover_price ");
                    fmt_row(&mut s, y.iter());
                }
            }
        }
        let _ = writeln!(s, "weights {} {}", self.weights.nrows(), self.weights.ncols());
        for row in self.weights.row_iter() {
            fmt_row(&mut s, row.iter());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = Lines::new(text);
        r.expect_exact("online-spo-instance v1")?;
        let fam = r.keyed("family")?;
        let fam_kind = fam.first().copied().unwrap_or_default();
        let dims = r.numbers::<usize>("dims", Some(3))?;
        let (p, d, m) = (dims[0], dims[1], dims[2]);
        let deg = r.numbers::<u32>("deg", Some(1))?[0];
        let noise = r.numbers::<f64>("noise", Some(1))?[0];
        let seed = r.numbers::<u64>("seed", Some(1))?[0];
        let family = match fam_kind {
            "knapsack" => {
                let k = parse_token::<usize>(&fam, 1, r.line)?;
                let budget = DVector::from_vec(r.numbers::<f64>("budget", Some(m))?);
                let y = r.keyed("leftover_price")?;
                let leftover_price = if y == ["none"] {
                    None
                } else {
                    let vals: Vec<f64> = (0..y.len()).map(|i| parse_token(&y, i, r.line)).collect::<Result<_>>()?;
                    Some(DVector::from_vec(vals))
                };
                Family::Knapsack {
                    k,
                    budget,
                    leftover_price,
                }
            }
            "longest_path" => Family::GridPath {
                n: parse_token(&fam, 1, r.line)?,
                v_cap: parse_token(&fam, 2, r.line)?,
            },
            other => return Err(r.error(&format!("unknown family `{other}`"))),
        };
        let shape = r.numbers::<usize>("weights", Some(2))?;
        let mut weights = DMatrix::zeros(shape[0], shape[1]);
        for i in 0..shape[0] {
            let row = r.row(shape[1])?;
            for (j, v) in row.into_iter().enumerate() {
                weights[(i, j)] = v;
            }
        }
        let inst = SyntheticInstance {
            weights,
            p,
            d,
            m,
            deg,
            noise,
            family,
            seed,
        };
        inst.validate()?;
        Ok(inst)
    }
}

/// Plain-text arrival stream.
///
/// ```text
/// online-spo-stream v1
/// dims <p> <d> <m> <identity 0|1>
/// count <N>
/// <x (p values)> <r (d values)> <V column-stacked (d m values, omitted under identity)>
/// ...
/// ```
pub fn stream_to_text(arrivals: &[Arrival], layout: &OutputLayout) -> String {
    let p = arrivals.first().map_or(0, |a| a.features.len());
    let mut s = String::from("online-spo-stream v1\n");
    let _ = writeln!(
        s,
        "dims {p} {} {} {}",
        layout.d,
        layout.m,
        u8::from(layout.identity_consumption)
    );
    let _ = writeln!(s, "count {}", arrivals.len());
    for a in arrivals {
        let flat = layout.to_flat(&a.outcome);
        fmt_row(&mut s, a.features.iter().chain(flat.iter()));
    }
    s
}

pub fn stream_from_text(text: &str) -> Result<(Vec<Arrival>, OutputLayout)> {
    let mut r = Lines::new(text);
    r.expect_exact("online-spo-stream v1")?;
    let dims = r.numbers::<usize>("dims", Some(4))?;
    let layout = OutputLayout {
        d: dims[1],
        m: dims[2],
        identity_consumption: dims[3] == 1,
    };
    let p = dims[0];
    let count = r.numbers::<usize>("count", Some(1))?[0];
    let mut arrivals = Vec::with_capacity(count);
    for _ in 0..count {
        let row = r.row(p + layout.width())?;
        let x = DVector::from_column_slice(&row[..p]);
        arrivals.push(Arrival::new(x, layout.to_outcome(&row[p..])));
    }
    Ok((arrivals, layout))
}

fn parse_token<T: std::str::FromStr>(tokens: &[&str], i: usize, line: usize) -> Result<T> {
    tokens
        .get(i)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse {
            line,
            message: format!("missing or invalid field {}", i + 1),
        })
}

struct Lines<'a> {
    inner: std::str::Lines<'a>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines(),
            line: 0,
        }
    }

    fn error(&self, message: &str) -> Error {
        Error::Parse {
            line: self.line,
            message: message.to_string(),
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        self.line += 1;
        self.inner
            .next()
            .map(str::trim)
            .ok_or_else(|| self.error("unexpected end of input"))
    }

    fn expect_exact(&mut self, want: &str) -> Result<()> {
        if self.next()? == want {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{want}`")))
        }
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.next()?;
        let mut tokens = line.split_whitespace();
        if tokens.next() != Some(key) {
            return Err(self.error(&format!("expected `{key}`")));
        }
        Ok(tokens.collect())
    }

    fn numbers<T: std::str::FromStr>(&mut self, key: &str, count: Option<usize>) -> Result<Vec<T>> {
        let tokens = self.keyed(key)?;
        if count.is_some_and(|c| c != tokens.len()) {
            return Err(self.error(&format!("wrong number of values for `{key}`")));
        }
        (0..tokens.len()).map(|i| parse_token(&tokens, i, self.line)).collect()
    }

    fn row(&mut self, count: usize) -> Result<Vec<f64>> {
        let line = self.next()?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| self.error("bad number")))
            .collect::<Result<_>>()?;
        if vals.len() != count {
            return Err(self.error(&format!("expected {count} values, got {}", vals.len())));
        }
        Ok(vals)
    }
}

/// Mean outcome of `n` arrivals sharing the context `x`.
pub fn monte_carlo_mean<R: Rng>(inst: &SyntheticInstance, x: &[f64], n: usize, rng: &mut R) -> DVector<f64> {
    let base = inst.mean_flat(x);
    let mut acc = DVector::zeros(base.len());
    let (lo, hi) = (1.0 - inst.noise, 1.0 + inst.noise);
    for _ in 0..n {
        for (a, b) in acc.iter_mut().zip(base.iter()) {
            let eps = if inst.noise > 0.0 { rng.random_range(lo..=hi) } else { 1.0 };
            *a += b * eps;
        }
    }
    acc / n as f64
}

/// Largest possible consumption norm for the instance's oracle over a
/// sample of arrivals.
pub fn consumption_bound_estimate(inst: &SyntheticInstance, arrivals: &[Arrival]) -> f64 {
    let region = inst.region();
    arrivals
        .iter()
        .map(|a| region.consumption_bound(&a.outcome.consumption))
        .fold(0.0, f64::max)
}
