//! Softmax attention, utility-based selection and retrieval verification.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::factored::{build_asymmetric_approximator, AsymmetricApproximation, AsymmetricOptions};
use crate::numfmt::f64_sig17;
use crate::relation::{dist2, BoxDomain, Point, RelationSpec};
use crate::sequence::{rng, uniform_point};

type PairFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type FeatFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A query-dependent utility `u(q, x)`; larger means more relevant.
#[derive(Clone)]
pub struct UtilityOracle(Arc<PairFn>);

impl UtilityOracle {
    pub fn new(u: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(u))
    }

    pub fn eval(&self, q: &[f64], x: &[f64]) -> f64 {
        (self.0)(q, x)
    }

    /// The utility as a relation `r(q, x) = u(q, x)`.
    pub fn as_relation(&self) -> RelationSpec {
        let u = self.0.clone();
        RelationSpec::black_box(move |q, x| u(q, x))
    }
}

impl fmt::Debug for UtilityOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("UtilityOracle")
    }
}

#[derive(Clone)]
enum Scorer {
    Features { phi: Arc<FeatFn>, psi: Arc<FeatFn> },
    Direct(Arc<PairFn>),
}

/// Single-head attention scoring a query against context elements.
#[derive(Clone)]
pub struct AttentionModule {
    scorer: Scorer,
    beta: f64,
}

impl fmt::Debug for AttentionModule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.scorer {
            Scorer::Features { .. } => "features",
            Scorer::Direct(_) => "direct",
        };
        f.debug_struct("AttentionModule")
            .field("scorer", &kind)
            .field("beta", &self.beta)
            .finish()
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta >= 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("beta must be finite and nonnegative, got {beta}")))
    }
}

impl AttentionModule {
    /// Scores `<phi(q), psi(x)>`.
    pub fn new(
        phi: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        psi: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        beta: f64,
    ) -> Result<Self> {
        check_beta(beta)?;
        Ok(Self {
            scorer: Scorer::Features {
                phi: Arc::new(phi),
                psi: Arc::new(psi),
            },
            beta,
        })
    }

    /// Scores with the utility itself.
    pub fn exact(u: &UtilityOracle, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(Self {
            scorer: Scorer::Direct(u.0.clone()),
            beta,
        })
    }

    /// Scores with a factored relation's `phi` and `psi`.
    pub fn from_factored(approx: &AsymmetricApproximation, beta: f64) -> Result<Self> {
        let (a, b) = (approx.relation.clone(), approx.relation.clone());
        Self::new(move |q| a.phi(q), move |x| b.psi(x), beta)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        self.beta = beta;
        Ok(self)
    }

    pub fn scores(&self, q: &[f64], context: &[Point]) -> Vec<f64> {
        match &self.scorer {
            Scorer::Features { phi, psi } => {
                let fq = phi(q);
                context
                    .iter()
                    .map(|x| fq.iter().zip(psi(x)).map(|(a, b)| a * b).sum())
                    .collect()
            }
            Scorer::Direct(u) => context.iter().map(|x| u(q, x)).collect(),
        }
    }

    pub fn weights(&self, q: &[f64], context: &[Point]) -> Vec<f64> {
        softmax(&self.scores(q, context), self.beta)
    }
}

/// `softmax(beta * scores)` with the maximum subtracted first.
pub fn softmax(scores: &[f64], beta: f64) -> Vec<f64> {
    if scores.is_empty() {
        return Vec::new();
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if beta == 0.0 {
        return vec![1.0 / scores.len() as f64; scores.len()];
    }
    let e: Vec<f64> = scores.iter().map(|s| (beta * (s - max)).exp()).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|v| v / total).collect()
}

/// `sum_i alpha_i x_i`.
///
/// # Panics
/// If the context is empty.
pub fn attention(module: &AttentionModule, q: &[f64], context: &[Point]) -> Point {
    assert!(!context.is_empty(), "attention needs a nonempty context");
    if context.len() == 1 {
        return context[0].clone();
    }
    let alpha = module.weights(q, context);
    let mut out = vec![0.0; context[0].len()];
    for (a, x) in alpha.iter().zip(context) {
        for (o, c) in out.iter_mut().zip(x) {
            *o += a * c;
        }
    }
    // rounding can push a coordinate a hair outside the context hull
    for (k, o) in out.iter_mut().enumerate() {
        let (lo, hi) = context
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x[k]), hi.max(x[k])));
        *o = o.clamp(lo, hi);
    }
    out
}

fn utilities(u: &UtilityOracle, q: &[f64], context: &[Point]) -> Result<Vec<f64>> {
    if context.is_empty() {
        return Err(invalid("select needs a nonempty context"));
    }
    let vals: Vec<f64> = context.iter().map(|x| u.eval(q, x)).collect();
    if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
        return Err(invalid(format!("utility of context element {i} is {}", vals[i])));
    }
    Ok(vals)
}

fn argmax(vals: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in vals.iter().enumerate() {
        if v > vals[best] {
            best = i;
        }
    }
    best
}

/// Most relevant context element; ties go to the lowest index.
pub fn select(u: &UtilityOracle, q: &[f64], context: &[Point]) -> Result<(usize, Point)> {
    let i = argmax(&utilities(u, q, context)?);
    Ok((i, context[i].clone()))
}

/// Top-1 minus top-2 utility. Infinite for a singleton context.
fn margin_of(vals: &[f64]) -> f64 {
    let i = argmax(vals);
    let runner_up = vals
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    vals[i] - runner_up
}

/// `(2 / eta) ln(2 (n - 1) max_norm / epsilon)`, floored at zero.
pub fn calibrate_beta(eta: f64, n: usize, max_norm: f64, epsilon: f64) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(invalid(format!("margin eta must be positive, got {eta}")));
    }
    if n < 2 {
        return Err(invalid(format!("context size must be at least 2, got {n}")));
    }
    if !(max_norm > 0.0) || !(epsilon > 0.0) {
        return Err(invalid("max_norm and epsilon must be positive"));
    }
    let log = (2.0 * (n - 1) as f64 * max_norm / epsilon).ln();
    Ok((2.0 / eta * log).max(0.0))
}

/// A seeded distribution over `(query, context)` draws. Draw `i` depends only
/// on `seed() + i`, so parallel evaluation is schedule-independent.
pub trait Sampler: Sync {
    fn seed(&self) -> u64;
    fn draw(&self, index: u64) -> (Point, Vec<Point>);
}

/// Query and `n` context points, all uniform on a box.
#[derive(Debug, Clone)]
pub struct UniformContextSampler {
    pub domain: BoxDomain,
    pub n: usize,
    pub seed: u64,
}

impl Sampler for UniformContextSampler {
    fn seed(&self) -> u64 {
        self.seed
    }

    fn draw(&self, index: u64) -> (Point, Vec<Point>) {
        let mut g = rng(self.seed.wrapping_add(index));
        let (lo, hi) = (self.domain.lower(), self.domain.upper());
        let q = uniform_point(&mut g, lo, hi);
        let ctx = (0..self.n).map(|_| uniform_point(&mut g, lo, hi)).collect();
        (q, ctx)
    }
}

/// Per-draw top-1 minus top-2 margins in draw order.
pub fn sample_margins(u: &UtilityOracle, sampler: &dyn Sampler, trials: usize) -> Result<Vec<f64>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let (q, ctx) = sampler.draw(i);
            Ok(margin_of(&utilities(u, &q, &ctx)?))
        })
        .collect()
}

/// Empirical `epsilon`-quantile of the margin: at most `floor(epsilon * trials)`
/// draws fall at or below it.
pub fn estimate_margin(u: &UtilityOracle, sampler: &dyn Sampler, epsilon: f64, trials: usize) -> Result<f64> {
    if trials < 100 {
        return Err(invalid(format!("margin estimation needs at least 100 trials, got {trials}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let mut margins = sample_margins(u, sampler, trials)?;
    if margins.iter().all(|&m| m == 0.0) {
        return Err(Error::ZeroMargin);
    }
    margins.sort_by(f64::total_cmp);
    let k = (epsilon * trials as f64).floor() as usize;
    Ok(if k == 0 { margins[0].next_down() } else { margins[k - 1] })
}

/// Attention scored by a factored approximation of `u` at sup error `eta / 4`.
/// `beta` starts at zero; set it with [`AttentionModule::with_beta`].
pub fn build_attention_from_utility(
    u: &UtilityOracle,
    domain: &BoxDomain,
    eta: f64,
    opts: &AsymmetricOptions,
) -> Result<(AttentionModule, AsymmetricApproximation)> {
    if !(eta > 0.0) {
        return Err(invalid(format!("margin eta must be positive, got {eta}")));
    }
    let approx = build_asymmetric_approximator(&u.as_relation(), domain, eta / 4.0, opts)?;
    Ok((AttentionModule::from_factored(&approx, 0.0)?, approx))
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    /// Failure probability the margin was estimated at. Reported only.
    pub epsilon_prob: f64,
    /// Output tolerance `|attention - select| < epsilon_out`.
    pub epsilon_out: f64,
    pub trials: usize,
    /// Margin used to calibrate beta; a draw meets the hypothesis when its
    /// margin exceeds it.
    pub eta: f64,
}

/// Monte-Carlo retrieval statistics. Tied draws are left out of every rate
/// except `margin_hit_rate` and counted in `tied_draws`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub seed: u64,
    pub trials: usize,
    #[serde(serialize_with = "f64_sig17::serialize")]
    pub epsilon_prob: f64,
    #[serde(serialize_with = "f64_sig17::serialize")]
    pub epsilon_out: f64,
    #[serde(serialize_with = "f64_sig17::serialize")]
    pub beta: f64,
    #[serde(serialize_with = "f64_sig17::serialize")]
    pub eta: f64,
    #[serde(serialize_with = "f64_sig17::serialize")]
    pub success_rate: f64,
    #[serde(serialize_with = "f64_sig17::serialize")]
    pub margin_hit_rate: f64,
    #[serde(serialize_with = "f64_sig17::serialize")]
    pub conditional_success_rate: f64,
    #[serde(serialize_with = "f64_sig17::serialize")]
    pub mean_error: f64,
    #[serde(serialize_with = "f64_sig17::serialize")]
    pub max_error: f64,
    pub tied_draws: usize,
}

struct Draw {
    error: f64,
    margin: f64,
}

pub fn verify_retrieval(
    module: &AttentionModule,
    u: &UtilityOracle,
    sampler: &dyn Sampler,
    opts: &VerifyOptions,
) -> Result<RetrievalReport> {
    if opts.trials < 100 {
        return Err(invalid(format!("verification needs at least 100 trials, got {}", opts.trials)));
    }
    if !(opts.epsilon_out > 0.0) {
        return Err(invalid("epsilon_out must be positive"));
    }
    let draws: Vec<Draw> = (0..opts.trials as u64)
        .into_par_iter()
        .map(|i| {
            let (q, ctx) = sampler.draw(i);
            let vals = utilities(u, &q, &ctx)?;
            let chosen = &ctx[argmax(&vals)];
            let out = attention(module, &q, &ctx);
            Ok(Draw {
                error: dist2(&out, chosen).sqrt(),
                margin: margin_of(&vals),
            })
        })
        .collect::<Result<_>>()?;

    let untied: Vec<&Draw> = draws.iter().filter(|d| d.margin > 0.0).collect();
    let hits: Vec<&&Draw> = untied.iter().filter(|d| d.margin > opts.eta).collect();
    let ok = |d: &Draw| d.error < opts.epsilon_out;
    let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let errors: Vec<f64> = untied.iter().map(|d| d.error).collect();
    Ok(RetrievalReport {
        seed: sampler.seed(),
        trials: opts.trials,
        epsilon_prob: opts.epsilon_prob,
        epsilon_out: opts.epsilon_out,
        beta: module.beta(),
        eta: opts.eta,
        success_rate: rate(untied.iter().filter(|d| ok(d)).count(), untied.len()),
        margin_hit_rate: rate(draws.iter().filter(|d| d.margin > opts.eta).count(), draws.len()),
        conditional_success_rate: rate(hits.iter().filter(|d| ok(d)).count(), hits.len()),
        mean_error: if errors.is_empty() { 0.0 } else { errors.iter().sum::<f64>() / errors.len() as f64 },
        max_error: errors.iter().cloned().fold(0.0, f64::max),
        tied_draws: draws.len() - untied.len(),
    })
}

/// `-|q - x|^2`
pub fn neg_sqdist() -> UtilityOracle {
    UtilityOracle::new(|q, x| -dist2(q, x))
}
