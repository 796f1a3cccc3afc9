//! Differential testing of forward oracles against backward learners.
//!
//! A [`Case`] is one randomly drawn episode in the general encoding plus a set
//! of interim targets and initial weights. Pairs in the final-outcome setting
//! see the case through [`Case::final_outcome_view`].

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::backward::{
    general_history_with_fault, offline_final_with_fault, online_history, online_trust_history,
    td_lambda_history, td_lambda_trust_history, Fault, History,
};
use crate::episode::{parse_episodes, render_episodes, Episode, Step};
use crate::error::{Error, Result};
use crate::forward_oracle::{general_triangles, lambda_triangle, offline_lms, online_triangle, trust_triangle, WeightTriangle};
use crate::vector::norm_sq;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs_floor: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rel: 1e-9, abs_floor: 1e-12 }
    }
}

impl Tolerance {
    pub fn absolute(abs_floor: f64) -> Self {
        Tolerance { rel: 0.0, abs_floor }
    }

    fn accepts(&self, abs: f64, rel: f64) -> bool {
        rel <= self.rel || abs <= self.abs_floor
    }
}

/// Forward oracle / backward learner pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pair {
    Offline,
    Online,
    Trust,
    Lambda,
    General,
}

impl Pair {
    pub const ALL: [Pair; 5] = [Pair::Offline, Pair::Online, Pair::Trust, Pair::Lambda, Pair::General];

    pub fn name(self) -> &'static str {
        match self {
            Pair::Offline => "offline",
            Pair::Online => "online",
            Pair::Trust => "trust",
            Pair::Lambda => "lambda",
            Pair::General => "general",
        }
    }

    /// Parses `all` or a comma-separated list of pair names.
    pub fn parse_list(text: &str) -> Result<Vec<Pair>> {
        if text.trim() == "all" {
            return Ok(Pair::ALL.to_vec());
        }
        let mut out: Vec<Pair> = text.split(',').map(|p| p.trim().parse()).collect::<Result<_>>()?;
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pair::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Index(format!("unknown pair `{s}` (expected one of offline, online, trust, lambda, general, all)")))
    }
}

/// Location of the largest discrepancy seen.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    pub digest: String,
    pub episode_index: usize,
    pub step: usize,
    pub component: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailedCase {
    pub episode_index: usize,
    pub case: Case,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub pair_name: String,
    pub episodes_tested: usize,
    pub entries_compared: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub worst_case: Option<WorstCase>,
    pub failing_episodes: usize,
    pub pass: bool,
    pub first_failure: Option<FailedCase>,
}

impl EquivalenceReport {
    pub fn empty(pair_name: &str) -> Self {
        EquivalenceReport {
            pair_name: pair_name.to_string(),
            episodes_tested: 0,
            entries_compared: 0,
            max_abs_err: 0.0,
            max_rel_err: 0.0,
            worst_case: None,
            failing_episodes: 0,
            pass: true,
            first_failure: None,
        }
    }

    /// Combines reports over disjoint episode sets. The result does not
    /// depend on the grouping of merges.
    pub fn merge(mut self, other: EquivalenceReport) -> EquivalenceReport {
        let other_worse = match (&self.worst_case, &other.worst_case) {
            (_, None) => false,
            (None, Some(_)) => true,
            (Some(a), Some(b)) => {
                other.max_abs_err > self.max_abs_err
                    || (other.max_abs_err == self.max_abs_err && b.episode_index < a.episode_index)
            }
        };
        if other_worse {
            self.worst_case = other.worst_case;
        }
        self.max_abs_err = self.max_abs_err.max(other.max_abs_err);
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
        self.episodes_tested += other.episodes_tested;
        self.entries_compared += other.entries_compared;
        self.failing_episodes += other.failing_episodes;
        self.pass &= other.pass;
        self.first_failure = match (self.first_failure, other.first_failure) {
            (Some(a), Some(b)) => Some(if b.episode_index < a.episode_index { b } else { a }),
            (a, b) => a.or(b),
        };
        self
    }

    pub fn csv_header() -> &'static str {
        "pair,episodes,max_abs,max_rel,pass"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:e},{:e},{}",
            self.pair_name, self.episodes_tested, self.max_abs_err, self.max_rel_err, self.pass
        )
    }

    fn tag(mut self, digest: &str, episode_index: usize) -> Self {
        if let Some(w) = self.worst_case.as_mut() {
            w.digest = digest.to_string();
            w.episode_index = episode_index;
        }
        self
    }
}

fn relative(a: f64, b: f64) -> (f64, f64) {
    if a == b || (a.is_nan() && b.is_nan()) {
        return (0.0, 0.0);
    }
    let abs = (a - b).abs();
    let scale = a.abs().max(b.abs());
    let abs = if abs.is_nan() { f64::INFINITY } else { abs };
    (abs, if scale > 0.0 { abs / scale } else { f64::INFINITY })
}

/// Component-wise comparison of two weight sequences; `first_step` is the time
/// index of the first entry.
pub fn compare_sequences(
    pair_name: &str,
    forward: &[Vec<f64>],
    backward: &[Vec<f64>],
    first_step: usize,
    tol: &Tolerance,
) -> Result<EquivalenceReport> {
    if forward.len() != backward.len() {
        return Err(Error::Dimension { what: "weight sequence length", expected: forward.len(), actual: backward.len() });
    }
    let mut report = EquivalenceReport::empty(pair_name);
    report.episodes_tested = 1;
    let mut worst_abs = -1.0;
    for (i, (f, b)) in forward.iter().zip(backward).enumerate() {
        if f.len() != b.len() {
            return Err(Error::Dimension { what: "weight vector", expected: f.len(), actual: b.len() });
        }
        for (k, (&x, &y)) in f.iter().zip(b).enumerate() {
            let (abs, rel) = relative(x, y);
            report.entries_compared += 1;
            report.max_abs_err = report.max_abs_err.max(abs);
            report.max_rel_err = report.max_rel_err.max(rel);
            report.pass &= tol.accepts(abs, rel);
            if abs > worst_abs {
                worst_abs = abs;
                report.worst_case = Some(WorstCase {
                    digest: String::new(),
                    episode_index: 0,
                    step: first_step + i,
                    component: k,
                });
            }
        }
    }
    if !report.pass {
        report.failing_episodes = 1;
    }
    Ok(report)
}

/// Compares the diagonal `θ_{t,t}` of an oracle triangle with a learner's
/// weight history `θ_0..θ_T`.
pub fn compare_diagonal(pair_name: &str, forward: &WeightTriangle, backward: &[Vec<f64>], tol: &Tolerance) -> Result<EquivalenceReport> {
    if backward.len() != forward.horizon() + 1 {
        return Err(Error::Dimension {
            what: "weight history length",
            expected: forward.horizon() + 1,
            actual: backward.len(),
        });
    }
    compare_sequences(pair_name, &forward.diagonal(), backward, 0, tol)
}

/// One randomized test input.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    /// General encoding; residual predictions may be absent (bootstrapped).
    pub episode: Episode,
    /// `Z^1..Z^T` for the final-outcome view.
    pub interim: Vec<f64>,
    pub theta0: Vec<f64>,
}

impl Case {
    /// The same features, step sizes, λ and β in the final-outcome setting:
    /// `X = 0` except `X_T = Z^T`, `γ = 1` except `γ_T = 0`.
    pub fn final_outcome_view(&self) -> Episode {
        let horizon = self.episode.horizon();
        let steps = self
            .episode
            .steps
            .iter()
            .zip(&self.interim)
            .enumerate()
            .map(|(t, (s, &z))| {
                let last = t + 1 == horizon;
                Step {
                    phi: s.phi.clone(),
                    alpha: s.alpha,
                    x: if last { z } else { 0.0 },
                    gamma: if last { 0.0 } else { 1.0 },
                    lambda: s.lambda,
                    beta: s.beta,
                    v: None,
                    z: Some(z),
                }
            })
            .collect();
        Episode { n: self.episode.n, steps }
    }

    fn truncated(&self, len: usize) -> Case {
        let mut c = self.clone();
        c.episode.steps.truncate(len);
        c.interim.truncate(len);
        c
    }

    /// Stable 64-bit FNV-1a digest of every number in the case, as hex.
    pub fn digest(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: f64| {
            for byte in v.to_bits().to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for s in &self.episode.steps {
            s.phi.iter().for_each(|&p| eat(p));
            for v in [s.alpha, s.x, s.gamma, s.lambda, s.beta, s.v.unwrap_or(f64::NAN)] {
                eat(v);
            }
        }
        self.interim.iter().for_each(|&z| eat(z));
        self.theta0.iter().for_each(|&w| eat(w));
        format!("{h:016x}")
    }

    /// Episode-file text with the initial weights and interim targets carried
    /// in comment lines.
    pub fn render(&self) -> Result<String> {
        let text = render_episodes(std::slice::from_ref(&self.episode))?;
        let (header, body) = text.split_once('\n').unwrap_or((&text, ""));
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join("\t");
        Ok(format!(
            "{header}\n#theta0\t{}\n#interim\t{}\n{body}",
            join(&self.theta0),
            join(&self.interim)
        ))
    }

    pub fn parse(text: &str) -> Result<Case> {
        let mut episodes = parse_episodes(text)?;
        if episodes.len() != 1 {
            return Err(Error::InvalidEpisode(format!("expected one episode, found {}", episodes.len())));
        }
        let episode = episodes.remove(0);
        let field = |name: &str| -> Result<Vec<f64>> {
            let prefix = format!("#{name}\t");
            let line = text
                .lines()
                .find(|l| l.starts_with(&prefix) || *l == format!("#{name}"))
                .ok_or_else(|| Error::InvalidEpisode(format!("missing #{name} line")))?;
            line.split('\t')
                .skip(1)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|_| Error::InvalidEpisode(format!("bad number `{s}` in #{name}"))))
                .collect()
        };
        let case = Case { theta0: field("theta0")?, interim: field("interim")?, episode };
        if case.theta0.len() != case.episode.n || case.interim.len() != case.episode.horizon() {
            return Err(Error::InvalidEpisode("case comment lines do not match the episode shape".into()));
        }
        Ok(case)
    }
}

fn both(name: &str, fwd: (&WeightTriangle, &WeightTriangle), bwd: &History, tol: &Tolerance) -> Result<EquivalenceReport> {
    let on = compare_diagonal(name, fwd.0, &bwd.online, tol)?;
    let tr = compare_diagonal(name, fwd.1, &bwd.trusted, tol)?;
    let mut merged = on.merge(tr);
    merged.episodes_tested = 1;
    merged.failing_episodes = usize::from(!merged.pass);
    Ok(merged)
}

/// Runs one pair on one case.
pub fn evaluate(pair: Pair, case: &Case, tol: &Tolerance, fault: Option<Fault>) -> Result<EquivalenceReport> {
    let name = pair.name();
    let theta0 = &case.theta0;
    match pair {
        Pair::Offline => {
            let view = case.final_outcome_view();
            let fwd = offline_lms(&view, theta0)?;
            let bwd = offline_final_with_fault(&view, theta0, fault)?;
            compare_sequences(name, &fwd[fwd.len() - 1..], &[bwd], view.horizon(), tol)
        }
        Pair::Online => {
            let view = case.final_outcome_view();
            compare_diagonal(name, &online_triangle(&view, theta0)?, &online_history(&view, theta0)?.online, tol)
        }
        Pair::Trust => {
            let view = case.final_outcome_view();
            let (on, tr) = trust_triangle(&view, theta0)?;
            both(name, (&on, &tr), &online_trust_history(&view, theta0)?, tol)
        }
        Pair::Lambda => {
            let view = case.final_outcome_view();
            compare_diagonal(name, &lambda_triangle(&view, theta0)?, &td_lambda_history(&view, theta0)?.online, tol)
        }
        Pair::General => {
            let fwd = general_triangles(&case.episode, theta0)?;
            let bwd = general_history_with_fault(&case.episode, theta0, fault)?;
            both(name, (&fwd.online, &fwd.trusted), &bwd, tol)
        }
    }
}

fn failing(pair: Pair, case: &Case, tol: &Tolerance, fault: Option<Fault>) -> bool {
    evaluate(pair, case, tol, fault).is_ok_and(|r| !r.pass)
}

/// Degenerate configurations each suite run is forced to include.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degenerate {
    UnitStep,
    LambdaZero,
    LambdaOne,
    GammaZero,
    GammaOne,
    RepeatedFeatures,
    SingleFeature,
    SingleStep,
}

impl Degenerate {
    pub const ALL: [Degenerate; 8] = [
        Degenerate::UnitStep,
        Degenerate::LambdaZero,
        Degenerate::LambdaOne,
        Degenerate::GammaZero,
        Degenerate::GammaOne,
        Degenerate::RepeatedFeatures,
        Degenerate::SingleFeature,
        Degenerate::SingleStep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Degenerate::UnitStep => "alpha=1,|phi|=1",
            Degenerate::LambdaZero => "lambda=0",
            Degenerate::LambdaOne => "lambda=1",
            Degenerate::GammaZero => "gamma=0",
            Degenerate::GammaOne => "gamma=1",
            Degenerate::RepeatedFeatures => "repeated-phi",
            Degenerate::SingleFeature => "n=1",
            Degenerate::SingleStep => "T=1",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub episodes: usize,
    pub n_range: RangeInclusive<usize>,
    pub horizon_range: RangeInclusive<usize>,
    pub seed: u64,
    pub tolerance: Tolerance,
    /// Cap `α_t` at `1.2/‖φ_t‖²`.
    pub clamp_alpha: bool,
    pub fault: Option<Fault>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            episodes: 500,
            n_range: 1..=8,
            horizon_range: 1..=50,
            seed: 0,
            tolerance: Tolerance::default(),
            clamp_alpha: true,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub reports: Vec<EquivalenceReport>,
    /// How many episodes were drawn under each forced configuration.
    pub coverage: Vec<(Degenerate, usize)>,
}

impl SuiteOutcome {
    pub fn pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn unit_draw(rng: &mut ChaCha8Rng) -> f64 {
    // Endpoints get extra mass; they are where index slips show up.
    match rng.random_range(0..10) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.random::<f64>(),
    }
}

fn pick(rng: &mut ChaCha8Rng, range: &RangeInclusive<usize>) -> usize {
    rng.random_range(range.clone())
}

/// Draws case `index` of a suite. Deterministic in `(cfg.seed, index)`.
pub fn sample_case(cfg: &SuiteConfig, index: usize) -> (Case, Option<Degenerate>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let forced = if index < Degenerate::ALL.len() {
        Some(Degenerate::ALL[index])
    } else if rng.random_range(0..4) == 0 {
        Some(Degenerate::ALL[rng.random_range(0..Degenerate::ALL.len())])
    } else {
        None
    };
    (draw_case(&mut rng, cfg, forced), forced)
}

/// Draws a case with no forced degenerate configuration.
pub fn sample_plain_case(cfg: &SuiteConfig, index: usize) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    draw_case(&mut rng, cfg, None)
}

fn draw_case(rng: &mut ChaCha8Rng, cfg: &SuiteConfig, forced: Option<Degenerate>) -> Case {
    let n = if forced == Some(Degenerate::SingleFeature) { 1 } else { pick(rng, &cfg.n_range) };
    let horizon = if forced == Some(Degenerate::SingleStep) { 1 } else { pick(rng, &cfg.horizon_range) };
    let external = rng.random::<bool>();
    let hard_end = rng.random::<bool>();
    let shared: Vec<f64> = (0..n).map(|_| normal(rng)).collect();

    let mut steps = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut phi: Vec<f64> = if forced == Some(Degenerate::RepeatedFeatures) {
            shared.clone()
        } else {
            (0..n).map(|_| normal(rng)).collect()
        };
        let u = 1.0 - rng.random::<f64>();
        let alpha = if forced == Some(Degenerate::UnitStep) {
            let norm = norm_sq(&phi).sqrt();
            phi.iter_mut().for_each(|p| *p /= norm);
            1.0
        } else if cfg.clamp_alpha {
            u * (1.2 / norm_sq(&phi)).min(1.0)
        } else {
            u
        };
        let mut gamma = match forced {
            Some(Degenerate::GammaZero) => 0.0,
            Some(Degenerate::GammaOne) => 1.0,
            _ => unit_draw(rng),
        };
        if hard_end && t + 1 == horizon && forced != Some(Degenerate::GammaOne) {
            gamma = 0.0;
        }
        let lambda = match forced {
            Some(Degenerate::LambdaZero) => 0.0,
            Some(Degenerate::LambdaOne) => 1.0,
            _ => unit_draw(rng),
        };
        let beta = unit_draw(rng);
        let x = normal(rng);
        let v = external.then(|| normal(rng));
        steps.push(Step { phi, alpha, x, gamma, lambda, beta, v, z: None });
    }
    let interim = (0..horizon).map(|_| normal(rng)).collect();
    let theta0 = (0..n).map(|_| normal(rng)).collect();
    Case { episode: Episode { n, steps }, interim, theta0 }
}

fn error_report(pair: Pair, index: usize, case: &Case) -> EquivalenceReport {
    let mut r = EquivalenceReport::empty(pair.name());
    r.episodes_tested = 1;
    r.max_abs_err = f64::INFINITY;
    r.max_rel_err = f64::INFINITY;
    r.pass = false;
    r.failing_episodes = 1;
    r.worst_case = Some(WorstCase { digest: case.digest(), episode_index: index, step: 0, component: 0 });
    r
}

/// Runs every selected pair on `cfg.episodes` random cases, in parallel.
pub fn randomized_suite(pairs: &[Pair], cfg: &SuiteConfig) -> SuiteOutcome {
    let identity = || {
        (
            pairs.iter().map(|p| EquivalenceReport::empty(p.name())).collect::<Vec<_>>(),
            vec![0usize; Degenerate::ALL.len()],
        )
    };
    let (reports, counts) = (0..cfg.episodes)
        .into_par_iter()
        .map(|i| {
            let (case, forced) = sample_case(cfg, i);
            let digest = case.digest();
            let reports: Vec<EquivalenceReport> = pairs
                .iter()
                .map(|&pair| {
                    let mut r = match evaluate(pair, &case, &cfg.tolerance, cfg.fault) {
                        Ok(r) => r.tag(&digest, i),
                        Err(_) => error_report(pair, i, &case),
                    };
                    if !r.pass {
                        r.first_failure = Some(FailedCase { episode_index: i, case: case.clone() });
                    }
                    r
                })
                .collect();
            let mut counts = vec![0usize; Degenerate::ALL.len()];
            if let Some(d) = forced {
                counts[Degenerate::ALL.iter().position(|&x| x == d).expect("listed")] += 1;
            }
            (reports, counts)
        })
        .reduce(identity, |(a, ca), (b, cb)| {
            let merged = a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect();
            let counts = ca.iter().zip(&cb).map(|(x, y)| x + y).collect();
            (merged, counts)
        });
    SuiteOutcome {
        reports,
        coverage: Degenerate::ALL.into_iter().zip(counts).collect(),
    }
}

/// Moves a parameter onto `snap` unless it already sits on a snap point, so
/// shrinking cannot cycle between snap points.
fn snap_to(slot: &mut f64, snap: f64) -> bool {
    if [0.0, 0.5, 1.0].contains(slot) {
        return false;
    }
    *slot = snap;
    true
}

/// Greedily simplifies a failing case while it keeps failing: shorter
/// episodes first, then zeroed numbers, then parameters snapped to
/// `{0, ½, 1}` (step sizes to `{½, 1}`).
pub fn shrink_failure(case: &Case, pair: Pair, tol: &Tolerance, fault: Option<Fault>) -> Result<Case> {
    if !failing(pair, case, tol, fault) {
        return Err(Error::NotFailing(format!("pair {pair} passes on case {}", case.digest())));
    }
    let fails = |c: &Case| failing(pair, c, tol, fault);
    let mut best = case.clone();
    loop {
        let mut changed = false;

        if let Some(len) = (1..best.episode.horizon()).find(|&len| fails(&best.truncated(len))) {
            best = best.truncated(len);
            changed = true;
        }

        let mut try_set = |best: &mut Case, edit: &dyn Fn(&mut Case) -> bool| {
            let mut candidate = best.clone();
            if edit(&mut candidate) && fails(&candidate) {
                *best = candidate;
                changed = true;
            }
        };

        for k in 0..best.theta0.len() {
            try_set(&mut best, &|c| std::mem::replace(&mut c.theta0[k], 0.0) != 0.0);
        }
        for t in 0..best.episode.horizon() {
            for k in 0..best.episode.n {
                try_set(&mut best, &|c| std::mem::replace(&mut c.episode.steps[t].phi[k], 0.0) != 0.0);
            }
            try_set(&mut best, &|c| std::mem::replace(&mut c.episode.steps[t].x, 0.0) != 0.0);
            try_set(&mut best, &|c| std::mem::replace(&mut c.interim[t], 0.0) != 0.0);
            try_set(&mut best, &|c| match c.episode.steps[t].v.as_mut() {
                Some(v) => std::mem::replace(v, 0.0) != 0.0,
                None => false,
            });
            for snap in [0.0, 1.0, 0.5] {
                try_set(&mut best, &|c| snap_to(&mut c.episode.steps[t].gamma, snap));
                try_set(&mut best, &|c| snap_to(&mut c.episode.steps[t].lambda, snap));
                try_set(&mut best, &|c| snap_to(&mut c.episode.steps[t].beta, snap));
                if snap > 0.0 {
                    try_set(&mut best, &|c| snap_to(&mut c.episode.steps[t].alpha, snap));
                }
            }
        }
        if !changed {
            return Ok(best);
        }
    }
}

/// The reductions of the general learner to its special cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    /// Final-outcome encoding with residuals equal to interim targets and
    /// `β ≡ 1` gives the λ-return learner.
    GeneralToLambda,
    /// The same with `λ ≡ 1` gives the online learner.
    GeneralToOnline,
    /// `λ ≡ 1` with arbitrary `β` gives the online learner with averaging.
    GeneralToAveraging,
    /// Arbitrary `λ` and `β` give the λ-return learner with averaging.
    GeneralToLambdaAveraging,
    /// The λ-return learner with `λ ≡ 1` is the online learner.
    LambdaToOnline,
}

impl Reduction {
    pub const ALL: [Reduction; 5] = [
        Reduction::GeneralToLambda,
        Reduction::GeneralToOnline,
        Reduction::GeneralToAveraging,
        Reduction::GeneralToLambdaAveraging,
        Reduction::LambdaToOnline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Reduction::GeneralToLambda => "general->lambda",
            Reduction::GeneralToOnline => "general->online",
            Reduction::GeneralToAveraging => "general->online+averaging",
            Reduction::GeneralToLambdaAveraging => "general->lambda+averaging",
            Reduction::LambdaToOnline => "lambda->online",
        }
    }

    fn forces_unit_lambda(self) -> bool {
        matches!(self, Reduction::GeneralToOnline | Reduction::GeneralToAveraging | Reduction::LambdaToOnline)
    }

    fn forces_unit_beta(self) -> bool {
        matches!(self, Reduction::GeneralToLambda | Reduction::GeneralToOnline | Reduction::LambdaToOnline)
    }
}

/// Checks every reduction on `episodes` random cases each. `lambda_override`
/// replaces the `λ ≡ 1` used by reductions that need it; anything but 1 should
/// make those reductions fail.
pub fn subsumption_suite(episodes: usize, seed: u64, tol: f64, lambda_override: Option<f64>) -> Result<Vec<EquivalenceReport>> {
    let cfg = SuiteConfig { episodes, seed, ..SuiteConfig::default() };
    let tol = Tolerance::absolute(tol);
    Reduction::ALL
        .iter()
        .map(|&red| {
            (0..episodes)
                .into_par_iter()
                .map(|i| {
                    let (case, _) = sample_case(&cfg, i);
                    check_reduction(red, &case, &tol, lambda_override).map(|r| r.tag(&case.digest(), i))
                })
                .try_reduce(|| EquivalenceReport::empty(red.name()), |a, b| Ok(a.merge(b)))
        })
        .collect()
}

fn check_reduction(red: Reduction, case: &Case, tol: &Tolerance, lambda_override: Option<f64>) -> Result<EquivalenceReport> {
    let mut view = case.final_outcome_view();
    let unit_lambda = lambda_override.unwrap_or(1.0);
    for s in &mut view.steps {
        if red.forces_unit_lambda() {
            s.lambda = unit_lambda;
        }
        if red.forces_unit_beta() {
            s.beta = 1.0;
        }
    }
    let theta0 = &case.theta0;
    let (reduced, special) = match red {
        Reduction::LambdaToOnline => {
            let mut exact = view.clone();
            exact.steps.iter_mut().for_each(|s| s.lambda = 1.0);
            (td_lambda_history(&view, theta0)?, online_history(&exact, theta0)?)
        }
        _ => {
            let mut general = view.clone();
            general.steps.iter_mut().for_each(|s| s.v = s.z);
            let mut exact = view.clone();
            if red.forces_unit_lambda() {
                exact.steps.iter_mut().for_each(|s| s.lambda = 1.0);
            }
            let special = match red {
                Reduction::GeneralToLambda => td_lambda_history(&exact, theta0)?,
                Reduction::GeneralToOnline => online_history(&exact, theta0)?,
                Reduction::GeneralToAveraging => online_trust_history(&exact, theta0)?,
                _ => td_lambda_trust_history(&exact, theta0)?,
            };
            (general_history_with_fault(&general, theta0, None)?, special)
        }
    };
    let on = compare_sequences(red.name(), &special.online, &reduced.online, 0, tol)?;
    let tr = compare_sequences(red.name(), &special.trusted, &reduced.trusted, 0, tol)?;
    let mut r = on.merge(tr);
    r.episodes_tested = 1;
    r.failing_episodes = usize::from(!r.pass);
    Ok(r)
}

/// With `λ ≡ 1` and `β_T = 1`, the final weights do not depend on the interim
/// targets or on `β_1..β_{T-1}`. Each of `episodes` random episodes is rerun
/// with `variants` fresh draws of both and compared to offline LMS.
pub fn final_weight_invariance(episodes: usize, variants: usize, seed: u64, tol: &Tolerance) -> Result<EquivalenceReport> {
    let cfg = SuiteConfig { episodes, seed, ..SuiteConfig::default() };
    (0..episodes)
        .into_par_iter()
        .map(|i| {
            let (case, _) = sample_case(&cfg, i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            rng.set_stream(i as u64);
            let mut view = case.final_outcome_view();
            view.steps.iter_mut().for_each(|s| s.lambda = 1.0);
            let horizon = view.horizon();
            let reference = offline_lms(&view, &case.theta0)?.pop().expect("nonempty");
            let mut report = EquivalenceReport::empty("final-weight-invariance");
            for _ in 0..variants {
                let z_final = view.final_outcome();
                for (t, s) in view.steps.iter_mut().enumerate() {
                    let last = t + 1 == horizon;
                    s.z = Some(if last { z_final } else { normal(&mut rng) });
                    s.beta = if last { 1.0 } else { rng.random::<f64>() };
                }
                let h = online_trust_history(&view, &case.theta0)?;
                let finals = [h.online[horizon].clone(), h.trusted[horizon].clone()];
                let r = compare_sequences("final-weight-invariance", &[reference.clone(), reference.clone()], &finals, horizon, tol)?;
                report = report.merge(r);
            }
            report.episodes_tested = 1;
            report.failing_episodes = usize::from(!report.pass);
            Ok(report.tag(&case.digest(), i))
        })
        .try_reduce(|| EquivalenceReport::empty("final-weight-invariance"), |a, b| Ok(a.merge(b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_case() -> Case {
        let s = |beta: f64| Step { phi: vec![1.0], alpha: 0.5, x: 0.0, gamma: 1.0, lambda: 1.0, beta, v: None, z: None };
        let mut last = s(1.0);
        last.x = 1.0;
        last.gamma = 0.0;
        Case { episode: Episode { n: 1, steps: vec![s(1.0), last] }, interim: vec![0.5, 1.0], theta0: vec![0.0] }
    }

    #[test]
    fn self_comparison_is_exact() {
        let view = worked_case().final_outcome_view();
        let tri = online_triangle(&view, &[0.0]).unwrap();
        let r = compare_diagonal("online", &tri, &tri.diagonal(), &Tolerance::absolute(0.0)).unwrap();
        assert_eq!(r.max_abs_err, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn worked_episode_passes_every_pair() {
        for pair in Pair::ALL {
            let r = evaluate(pair, &worked_case(), &Tolerance::default(), None).unwrap();
            assert!(r.pass && r.max_abs_err <= 1e-12, "{pair}: {r:?}");
        }
    }

    #[test]
    fn corrupted_step_is_located() {
        let view = worked_case().final_outcome_view();
        let tri = online_triangle(&view, &[0.0]).unwrap();
        let mut hist = tri.diagonal();
        hist[1][0] += 1e-3;
        let r = compare_diagonal("online", &tri, &hist, &Tolerance::default()).unwrap();
        assert!(!r.pass);
        assert_eq!(r.worst_case.unwrap().step, 1);
        assert!(compare_diagonal("online", &tri, &hist[..2], &Tolerance::default()).is_err());
    }

    #[test]
    fn suite_is_deterministic_and_covers_degenerate_cases() {
        let cfg = SuiteConfig { episodes: 40, seed: 7, ..SuiteConfig::default() };
        let a = randomized_suite(&Pair::ALL, &cfg);
        let b = randomized_suite(&Pair::ALL, &cfg);
        assert_eq!(a, b);
        assert!(a.pass(), "{:?}", a.reports);
        assert!(a.coverage.iter().all(|&(_, c)| c >= 1));
    }

    #[test]
    fn zero_tolerance_failures_are_rounding_sized() {
        let cfg = SuiteConfig { episodes: 60, seed: 3, tolerance: Tolerance::absolute(0.0), ..SuiteConfig::default() };
        for r in randomized_suite(&Pair::ALL, &cfg).reports {
            assert!(r.max_rel_err < 1e-10, "{}: {}", r.pair_name, r.max_rel_err);
        }
    }

    #[test]
    fn case_text_round_trip() {
        let (case, _) = sample_case(&SuiteConfig { seed: 11, ..SuiteConfig::default() }, 20);
        let back = Case::parse(&case.render().unwrap()).unwrap();
        assert_eq!(back, case);
        assert_eq!(back.digest(), case.digest());
    }

    #[test]
    fn shrinking_requires_a_failure() {
        let err = shrink_failure(&worked_case(), Pair::Online, &Tolerance::default(), None).unwrap_err();
        assert!(matches!(err, Error::NotFailing(_)));
    }

    #[test]
    fn shrinks_trace_decay_bug_to_a_discounted_episode() {
        let cfg = SuiteConfig { episodes: 30, seed: 5, fault: Some(Fault::TraceDecayIgnoresDiscount), ..SuiteConfig::default() };
        let out = randomized_suite(&[Pair::General], &cfg);
        let failure = out.reports[0].first_failure.clone().expect("the bug is caught");
        let small = shrink_failure(&failure.case, Pair::General, &cfg.tolerance, cfg.fault).unwrap();
        assert!(failing(Pair::General, &small, &cfg.tolerance, cfg.fault));
        assert!(small.episode.horizon() <= failure.case.episode.horizon());
        assert!(small.episode.steps.iter().any(|s| s.gamma < 1.0));
    }

    #[test]
    fn shrinks_aux_range_bug_to_a_tiny_episode() {
        let cfg = SuiteConfig { episodes: 30, seed: 5, fault: Some(Fault::AuxSkipsFirstFade), ..SuiteConfig::default() };
        let out = randomized_suite(&[Pair::Offline], &cfg);
        let failure = out.reports[0].first_failure.clone().expect("the bug is caught");
        let small = shrink_failure(&failure.case, Pair::Offline, &cfg.tolerance, cfg.fault).unwrap();
        assert!(small.episode.horizon() <= 2);
        assert!(small.theta0.iter().any(|&w| w != 0.0));
    }

    #[test]
    fn reductions_hold_and_negative_control_fails() {
        for r in subsumption_suite(30, 1, 1e-12, None).unwrap() {
            assert!(r.pass, "{}: {}", r.pair_name, r.max_abs_err);
        }
        let control = subsumption_suite(30, 1, 1e-12, Some(0.99)).unwrap();
        for r in control {
            let needs_unit = matches!(r.pair_name.as_str(), "general->online" | "general->online+averaging" | "lambda->online");
            assert_eq!(r.pass, !needs_unit, "{}", r.pair_name);
        }
    }

    #[test]
    fn final_weights_are_invariant() {
        let r = final_weight_invariance(10, 10, 2, &Tolerance::default()).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.episodes_tested, 10);
    }

    #[test]
    fn pair_list_parsing() {
        assert_eq!(Pair::parse_list("all").unwrap().len(), 5);
        assert_eq!(Pair::parse_list("general,online").unwrap(), vec![Pair::Online, Pair::General]);
        assert!(Pair::parse_list("bogus").is_err());
    }
}
