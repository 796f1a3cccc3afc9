//! Memory model and per-step compute accounting.

use std::time::Duration;

use crate::backward::{GeneralStep, LearnerState};
use crate::equivalence::{sample_plain_case, Case, SuiteConfig};
use crate::error::{Error, Result};
use crate::forward_oracle::online_triangle;

/// Storage needed to learn predictions spanning `span` when a new feature
/// vector arrives every `step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryModel {
    pub n: u64,
    pub bytes_per_feature: u64,
    pub step: Duration,
    pub span: Duration,
}

impl MemoryModel {
    /// One million 4-byte features every 10 ms.
    pub fn robot(span: Duration) -> Self {
        MemoryModel { n: 1_000_000, bytes_per_feature: 4, step: Duration::from_millis(10), span }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.bytes_per_feature == 0 || self.step.is_zero() || self.span.is_zero() {
            return Err(Error::InvalidProcess("memory model fields must all be positive".into()));
        }
        Ok(())
    }

    /// Whole steps inside the span.
    pub fn steps_in_span(&self) -> u128 {
        self.span.as_nanos() / self.step.as_nanos()
    }
}

/// `(conventional, span-independent)` bytes. The conventional learner keeps
/// every feature vector inside the span; the span-independent one keeps two
/// vectors.
pub fn memory_required(model: &MemoryModel) -> Result<(u128, u128)> {
    model.validate()?;
    let vector = u128::from(model.n) * u128::from(model.bytes_per_feature);
    Ok((vector * model.steps_in_span(), 2 * vector))
}

pub const STANDARD_SPANS: [(&str, u64); 4] = [("1 second", 1), ("1 minute", 60), ("1 hour", 3600), ("1 day", 86_400)];

/// `span_label,conventional_bytes,span_independent_bytes` rows for the
/// standard spans.
pub fn memory_table() -> Vec<(String, u128, u128)> {
    STANDARD_SPANS
        .iter()
        .map(|&(label, secs)| {
            let (conv, flat) = memory_required(&MemoryModel::robot(Duration::from_secs(secs))).expect("valid model");
            (label.to_string(), conv, flat)
        })
        .collect()
}

/// Backward learners with a per-step flop counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Learner {
    Offline,
    Online,
    OnlineAveraging,
    Lambda,
    LambdaAveraging,
    General,
}

impl Learner {
    pub const ALL: [Learner; 6] = [
        Learner::Offline,
        Learner::Online,
        Learner::OnlineAveraging,
        Learner::Lambda,
        Learner::LambdaAveraging,
        Learner::General,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Learner::Offline => "offline",
            Learner::Online => "online",
            Learner::OnlineAveraging => "online+averaging",
            Learner::Lambda => "lambda",
            Learner::LambdaAveraging => "lambda+averaging",
            Learner::General => "general",
        }
    }
}

fn bench_case(n: usize, horizon: usize, seed: u64) -> Case {
    let cfg = SuiteConfig { n_range: n..=n, horizon_range: horizon..=horizon, seed, ..SuiteConfig::default() };
    let mut case = sample_plain_case(&cfg, 0);
    for s in &mut case.episode.steps {
        s.v = Some(s.v.unwrap_or(s.x));
    }
    case
}

/// Multiply-adds spent on each step of `learner` over a random episode.
pub fn step_costs(learner: Learner, n: usize, horizon: usize, seed: u64) -> Result<Vec<u64>> {
    let case = bench_case(n, horizon, seed);
    let (ep, theta0) = (&case.episode, &case.theta0);
    let z: Vec<f64> = std::iter::once(0.0).chain(case.interim.iter().copied()).collect();
    let v = ep.residuals().ok_or(Error::MissingInterimTargets)?;
    let mut s = if learner == Learner::Offline { LearnerState::offline(theta0) } else { LearnerState::new(theta0) };
    let mut costs = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let before = s.flops;
        let (phi, alpha) = (ep.phi(t), ep.alpha(t));
        match learner {
            Learner::Offline => s.offline_step(phi, alpha)?,
            Learner::Online => s.online_step(phi, alpha, z[t], z[t + 1])?,
            Learner::OnlineAveraging => s.online_trust_step(phi, alpha, z[t], z[t + 1], ep.trust(t + 1))?,
            Learner::Lambda => s.td_lambda_step(phi, alpha, ep.persistence(t), z[t], z[t + 1])?,
            Learner::LambdaAveraging => {
                s.td_lambda_trust_step(phi, alpha, ep.persistence(t), z[t], z[t + 1], ep.trust(t + 1))?
            }
            Learner::General => s.general_step(&GeneralStep {
                phi,
                alpha,
                gamma: ep.discount(t),
                lambda: ep.persistence(t),
                x_next: ep.signal(t + 1),
                gamma_next: ep.discount(t + 1),
                beta_next: ep.trust(t + 1),
                v: v[t],
                v_next: v[t + 1],
            })?,
        }
        costs.push(s.flops - before);
    }
    Ok(costs)
}

/// Multiply-adds the forward oracle spends when horizon `h` arrives, for
/// `h = 1..=T`.
pub fn oracle_step_costs(n: usize, horizon: usize, seed: u64) -> Result<Vec<u64>> {
    let case = bench_case(n, horizon, seed);
    let tri = online_triangle(&case.final_outcome_view(), &case.theta0)?;
    Ok((1..=horizon).map(|h| tri.row_flops(h)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComputeReport {
    pub learner: &'static str,
    pub n: usize,
    /// Per episode length: the per-step cost if it was constant after step 0.
    pub per_length: Vec<(usize, Option<u64>)>,
    pub constant: Option<u64>,
    pub pass: bool,
}

fn constant_after_first(costs: &[u64]) -> Option<u64> {
    let rest = costs.get(1..).filter(|r| !r.is_empty()).unwrap_or(costs);
    let first = *rest.first()?;
    rest.iter().all(|&c| c == first).then_some(first)
}

/// Checks that `learner` costs the same on every step, for every episode
/// length.
pub fn flat_compute_check(learner: Learner, lengths: &[usize], n: usize, seed: u64) -> Result<ComputeReport> {
    let per_length = lengths
        .iter()
        .map(|&len| Ok((len, constant_after_first(&step_costs(learner, n, len, seed)?))))
        .collect::<Result<Vec<_>>>()?;
    let first = per_length.first().and_then(|p| p.1);
    let pass = first.is_some() && per_length.iter().all(|p| p.1 == first);
    Ok(ComputeReport { learner: learner.name(), n, per_length, constant: if pass { first } else { None }, pass })
}

/// Per-step constant of `learner` at each feature dimension in `dims`.
pub fn cost_by_dimension(learner: Learner, dims: &[usize], seed: u64) -> Result<Vec<(usize, u64)>> {
    dims.iter()
        .map(|&n| {
            let costs = step_costs(learner, n, 20, seed)?;
            constant_after_first(&costs)
                .map(|c| (n, c))
                .ok_or_else(|| Error::InvalidProcess(format!("{} cost varies across steps", learner.name())))
        })
        .collect()
}

/// True when the points lie on one line.
pub fn is_affine(points: &[(usize, u64)]) -> bool {
    points.windows(3).all(|w| {
        let (x0, y0) = (w[0].0 as i128, w[0].1 as i128);
        let (x1, y1) = (w[1].0 as i128, w[1].1 as i128);
        let (x2, y2) = (w[2].0 as i128, w[2].1 as i128);
        (y1 - y0) * (x2 - x1) == (y2 - y1) * (x1 - x0)
    })
}
