use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Episode, Step};
use crate::error::{Error, Result};
use crate::schedule::StepSchedule;

pub const DEFAULT_STEP_CAP: usize = 1_000_000;

/// A finite Markov reward process with state-dependent features, discounts
/// and persistence, plus a transition-dependent signal.
///
/// Entering a state `s` yields discount `gamma[s]` and persistence
/// `lambda[s]`. Terminal states have `gamma = 0`; after reaching one, a
/// continuing stream restarts from `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovRewardProcess {
    pub transition: Vec<Vec<f64>>,
    pub start: Vec<f64>,
    pub features: Vec<Vec<f64>>,
    pub signal: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub lambda: Vec<f64>,
    pub terminal: Vec<bool>,
}

const ROW_TOL: f64 = 1e-12;

impl MarkovRewardProcess {
    pub fn num_states(&self) -> usize {
        self.transition.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn non_terminal_states(&self) -> Vec<usize> {
        (0..self.num_states()).filter(|&s| !self.terminal[s]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.num_states();
        let bad = |msg: String| Err(Error::InvalidProcess(msg));
        if s == 0 {
            return bad("no states".into());
        }
        for (name, len) in [
            ("start", self.start.len()),
            ("features", self.features.len()),
            ("signal", self.signal.len()),
            ("gamma", self.gamma.len()),
            ("lambda", self.lambda.len()),
            ("terminal", self.terminal.len()),
        ] {
            if len != s {
                return bad(format!("{name} has {len} entries for {s} states"));
            }
        }
        let n = self.feature_dim();
        if n == 0 || self.features.iter().any(|f| f.len() != n) {
            return bad("feature vectors must share a positive dimension".into());
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != s || self.signal[i].len() != s {
                return bad(format!("row {i} has the wrong length"));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return bad(format!("row {i} has an entry outside [0, 1]"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL {
                return bad(format!("row {i} sums to {sum}, not 1"));
            }
        }
        let start_sum: f64 = self.start.iter().sum();
        if self.start.iter().any(|p| *p < 0.0) || (start_sum - 1.0).abs() > ROW_TOL {
            return bad("start distribution is not a probability vector".into());
        }
        if self.start.iter().zip(&self.terminal).any(|(p, t)| *t && *p > 0.0) {
            return bad("start distribution puts mass on a terminal state".into());
        }
        for i in 0..s {
            if !(0.0..=1.0).contains(&self.gamma[i]) || !(0.0..=1.0).contains(&self.lambda[i]) {
                return bad(format!("gamma or lambda of state {i} outside [0, 1]"));
            }
            if self.terminal[i] && self.gamma[i] != 0.0 {
                return bad(format!("terminal state {i} must have gamma = 0"));
            }
        }
        if !self.discount_contracts() {
            return bad("discounted transition matrix has spectral radius >= 1".into());
        }
        Ok(())
    }

    /// Whether `M[s][s'] = P[s][s'] γ(s')` has spectral radius below one.
    ///
    /// `M` is nonnegative, so `ρ(M) < 1` exactly when some power has
    /// infinity-norm below one; repeated squaring finds it.
    pub fn discount_contracts(&self) -> bool {
        let s = self.num_states();
        let mut m: Vec<Vec<f64>> = (0..s)
            .map(|i| (0..s).map(|j| self.transition[i][j] * self.gamma[j]).collect())
            .collect();
        for _ in 0..64 {
            let norm = m.iter().map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max);
            if norm < 1.0 {
                return true;
            }
            if !norm.is_finite() {
                return false;
            }
            let mut sq = vec![vec![0.0; s]; s];
            for i in 0..s {
                for k in 0..s {
                    let a = m[i][k];
                    if a == 0.0 {
                        continue;
                    }
                    for j in 0..s {
                        sq[i][j] += a * m[k][j];
                    }
                }
            }
            m = sq;
        }
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Features {
    /// One indicator per interior state.
    Tabular,
    /// Standard-normal features of the given dimension, reproducible from the seed.
    Random { dim: usize, seed: u64 },
    /// Indicator of which of `groups` contiguous blocks the interior state falls in.
    Aggregated { groups: usize },
}

/// A symmetric random walk over `num_states` interior states between two
/// absorbing terminals. Entering the left terminal yields signal 0, the right
/// one `right_outcome`. Episodes start in the middle state.
///
/// State `0` is the left terminal, `1..=num_states` are interior and
/// `num_states + 1` is the right terminal. Terminal features are zero.
pub fn make_random_walk(num_states: usize, right_outcome: f64, features: Features) -> Result<MarkovRewardProcess> {
    if num_states == 0 {
        return Err(Error::InvalidProcess("random walk needs at least one interior state".into()));
    }
    if num_states.is_multiple_of(2) {
        return Err(Error::InvalidProcess(format!(
            "random walk with {num_states} interior states has no middle state to start from"
        )));
    }
    let total = num_states + 2;
    let right = total - 1;
    let mut transition = vec![vec![0.0; total]; total];
    let mut signal = vec![vec![0.0; total]; total];
    transition[0][0] = 1.0;
    transition[right][right] = 1.0;
    for s in 1..=num_states {
        transition[s][s - 1] = 0.5;
        transition[s][s + 1] = 0.5;
    }
    signal[num_states][right] = right_outcome;

    let mut start = vec![0.0; total];
    start[num_states.div_ceil(2)] = 1.0;

    let dim = match features {
        Features::Tabular => num_states,
        Features::Random { dim, .. } => dim,
        Features::Aggregated { groups } => groups,
    };
    if dim == 0 {
        return Err(Error::InvalidProcess("feature dimension must be positive".into()));
    }
    let mut feats = vec![vec![0.0; dim]; total];
    match features {
        Features::Tabular => {
            for s in 1..=num_states {
                feats[s][s - 1] = 1.0;
            }
        }
        Features::Random { seed, .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for f in feats.iter_mut().take(num_states + 1).skip(1) {
                for v in f.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
        }
        Features::Aggregated { groups } => {
            for s in 1..=num_states {
                feats[s][(s - 1) * groups / num_states] = 1.0;
            }
        }
    }

    let mut gamma = vec![1.0; total];
    gamma[0] = 0.0;
    gamma[right] = 0.0;
    let mut terminal = vec![false; total];
    terminal[0] = true;
    terminal[right] = true;

    let mrp = MarkovRewardProcess {
        transition,
        start,
        features: feats,
        signal,
        gamma,
        lambda: vec![1.0; total],
        terminal,
    };
    mrp.validate()?;
    Ok(mrp)
}

/// A dense continuing process with soft termination everywhere: random
/// transition rows, standard-normal features and signals, `γ ∈ [0.3, 0.95]`,
/// `λ ∈ [0, 1]`. Used for fixed-point property checks.
pub fn random_process(num_states: usize, dim: usize, seed: u64) -> MarkovRewardProcess {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let transition = (0..num_states)
        .map(|_| {
            let raw: Vec<f64> = (0..num_states).map(|_| rng.random_range(0.05..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|p| p / sum).collect()
        })
        .collect();
    let features = (0..num_states)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let signal = (0..num_states)
        .map(|_| (0..num_states).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let gamma = (0..num_states).map(|_| rng.random_range(0.3..0.95)).collect();
    let lambda = (0..num_states).map(|_| rng.random_range(0.0..=1.0)).collect();
    MarkovRewardProcess {
        transition,
        start: vec![1.0 / num_states as f64; num_states],
        features,
        signal,
        gamma,
        lambda,
        terminal: vec![false; num_states],
    }
}

/// Draws an index from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

pub fn sample_episode(mrp: &MarkovRewardProcess, schedule: &StepSchedule, seed: u64) -> Result<Episode> {
    sample_episode_capped(mrp, schedule, seed, DEFAULT_STEP_CAP)
}

/// Samples one episode, ending at the first terminal state reached.
pub fn sample_episode_capped(
    mrp: &MarkovRewardProcess,
    schedule: &StepSchedule,
    seed: u64,
    max_steps: usize,
) -> Result<Episode> {
    mrp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = sample_index(&mrp.start, &mut rng);
    let mut steps = Vec::new();
    loop {
        if steps.len() >= max_steps {
            return Err(Error::NoTermination(max_steps));
        }
        let t = steps.len() as u64;
        let next = sample_index(&mrp.transition[state], &mut rng);
        steps.push(Step {
            phi: mrp.features[state].clone(),
            alpha: schedule.alpha.at(t, state),
            x: mrp.signal[state][next],
            gamma: mrp.gamma[next],
            lambda: mrp.lambda[next],
            beta: schedule.beta.at(t + 1, next),
            v: None,
            z: None,
        });
        if mrp.terminal[next] {
            break;
        }
        state = next;
    }
    Episode::new(mrp.feature_dim(), steps)
}

/// One transition of a continuing stream. When `next` is terminal the stream
/// resumes from a fresh start state, so `resume` is the state at the next
/// prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub t: u64,
    pub state: usize,
    pub next: usize,
    pub resume: usize,
}

/// Endless trajectory of a process, restarted at every termination.
#[derive(Debug, Clone)]
pub struct StateStream<'a> {
    mrp: &'a MarkovRewardProcess,
    rng: ChaCha8Rng,
    state: usize,
    t: u64,
}

impl<'a> StateStream<'a> {
    pub fn new(mrp: &'a MarkovRewardProcess, seed: u64) -> Result<Self> {
        mrp.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = sample_index(&mrp.start, &mut rng);
        Ok(StateStream { mrp, rng, state, t: 0 })
    }

    pub fn state(&self) -> usize {
        self.state
    }
}

impl Iterator for StateStream<'_> {
    type Item = Transition;

    fn next(&mut self) -> Option<Transition> {
        let state = self.state;
        let next = sample_index(&self.mrp.transition[state], &mut self.rng);
        let resume = if self.mrp.terminal[next] {
            sample_index(&self.mrp.start, &mut self.rng)
        } else {
            next
        };
        let tr = Transition { t: self.t, state, next, resume };
        self.state = resume;
        self.t += 1;
        Some(tr)
    }
}

/// A continuing stream of `len` steps as one episode record list. Episode
/// boundaries show up as `γ = 0`.
pub fn sample_stream(mrp: &MarkovRewardProcess, schedule: &StepSchedule, len: usize, seed: u64) -> Result<Episode> {
    let steps = StateStream::new(mrp, seed)?
        .take(len)
        .map(|tr| Step {
            phi: mrp.features[tr.state].clone(),
            alpha: schedule.alpha.at(tr.t, tr.state),
            x: mrp.signal[tr.state][tr.next],
            gamma: mrp.gamma[tr.next],
            lambda: mrp.lambda[tr.next],
            beta: schedule.beta.at(tr.t + 1, tr.next),
            v: None,
            z: None,
        })
        .collect();
    Episode::new(mrp.feature_dim(), steps)
}
