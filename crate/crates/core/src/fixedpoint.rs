//! Exact fixed points over a finite process, and sampled convergence runs.
//!
//! Expectations are taken under the steady-state distribution of the
//! prediction-time chain: the process restarted from `start` whenever it
//! enters a terminal state. Terminal states are never prediction times, so
//! they carry zero mass.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::backward::{GeneralStep, LearnerState};
use crate::episode::{MarkovRewardProcess, StateStream};
use crate::error::{Error, Result};
use crate::schedule::Schedule;
use crate::vector::euclidean_distance;

const STATIONARY_TOL: f64 = 1e-12;
const POWER_ITERATION_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixedPointKind {
    Lms,
    Td,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSolution {
    pub theta_star: Vec<f64>,
    /// Mean squared error of the fitted targets for `Lms`; the MSPBE for `Td`.
    pub residual: f64,
    pub kind: FixedPointKind,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn reach(p: &[Vec<f64>], reverse: bool) -> Vec<bool> {
    let s = p.len();
    let mut seen = vec![false; s];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for v in 0..s {
            let edge = if reverse { p[v][u] } else { p[u][v] };
            if edge > 0.0 && !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

fn period(p: &[Vec<f64>]) -> usize {
    let s = p.len();
    let mut level = vec![usize::MAX; s];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0]);
    let mut g = 0;
    while let Some(u) = queue.pop_front() {
        for v in 0..s {
            if p[u][v] > 0.0 {
                if level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                } else {
                    g = gcd(g, (level[u] + 1).abs_diff(level[v]));
                }
            }
        }
    }
    g
}

fn stationarity_residual(p: &[Vec<f64>], d: &[f64]) -> f64 {
    let s = p.len();
    (0..s)
        .map(|j| ((0..s).map(|i| d[i] * p[i][j]).sum::<f64>() - d[j]).abs())
        .fold(0.0, f64::max)
}

/// Stationary distribution of an irreducible aperiodic row-stochastic matrix.
pub fn stationary_distribution(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let s = p.len();
    if s == 0 || p.iter().any(|r| r.len() != s) {
        return Err(Error::Chain("transition matrix must be square and nonempty".into()));
    }
    for (i, row) in p.iter().enumerate() {
        if row.iter().any(|&x| !(x >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Chain(format!("row {i} is not a probability vector")));
        }
    }
    if !reach(p, false).iter().all(|&b| b) || !reach(p, true).iter().all(|&b| b) {
        return Err(Error::Chain("chain is reducible".into()));
    }
    let per = period(p);
    if per != 1 {
        return Err(Error::Chain(format!("chain is periodic with period {per}")));
    }

    // dᵀ(P - I) = 0 with the last equation replaced by Σd = 1.
    let mut a = DMatrix::from_fn(s, s, |i, j| p[j][i] - if i == j { 1.0 } else { 0.0 });
    a.row_mut(s - 1).fill(1.0);
    let mut b = DVector::zeros(s);
    b[s - 1] = 1.0;
    if let Some(sol) = a.lu().solve(&b) {
        let d = normalize(sol.iter().copied().collect());
        if stationarity_residual(p, &d) <= STATIONARY_TOL {
            return Ok(d);
        }
    }

    let mut d = vec![1.0 / s as f64; s];
    for _ in 0..POWER_ITERATION_CAP {
        let next: Vec<f64> = (0..s).map(|j| (0..s).map(|i| d[i] * p[i][j]).sum()).collect();
        d = normalize(next);
        if stationarity_residual(p, &d) <= STATIONARY_TOL {
            return Ok(d);
        }
    }
    Err(Error::Chain("power iteration did not reach the stationarity tolerance".into()))
}

fn normalize(d: Vec<f64>) -> Vec<f64> {
    let clipped: Vec<f64> = d.into_iter().map(|x| x.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    clipped.into_iter().map(|x| x / total).collect()
}

/// Transition kernel between prediction times, restricted to non-terminal
/// states: entering a terminal state jumps straight to a start state.
pub fn restart_kernel(mrp: &MarkovRewardProcess) -> (Vec<usize>, Vec<Vec<f64>>) {
    let live = mrp.non_terminal_states();
    let kernel = live
        .iter()
        .map(|&s| {
            let to_terminal: f64 = (0..mrp.num_states())
                .filter(|&k| mrp.terminal[k])
                .map(|k| mrp.transition[s][k])
                .sum();
            live.iter()
                .map(|&j| mrp.transition[s][j] + to_terminal * mrp.start[j])
                .collect()
        })
        .collect();
    (live, kernel)
}

/// Steady-state distribution over all states (zero on terminal states).
pub fn steady_state(mrp: &MarkovRewardProcess) -> Result<Vec<f64>> {
    mrp.validate()?;
    let (live, kernel) = restart_kernel(mrp);
    if live.is_empty() {
        return Err(Error::Chain("process has no non-terminal states".into()));
    }
    let sub = stationary_distribution(&kernel)?;
    let mut d = vec![0.0; mrp.num_states()];
    for (&s, &w) in live.iter().zip(&sub) {
        d[s] = w;
    }
    Ok(d)
}

/// The linear objects every fixed point is assembled from.
struct Model {
    d: DVector<f64>,
    phi: DMatrix<f64>,
    /// `I - M Λ` with `M[s][s'] = P[s][s'] γ(s')`.
    bellman: DMatrix<f64>,
    m: DMatrix<f64>,
    r: DVector<f64>,
    lambda: DVector<f64>,
}

impl Model {
    fn new(mrp: &MarkovRewardProcess) -> Result<Model> {
        let d = DVector::from_vec(steady_state(mrp)?);
        let s = mrp.num_states();
        let n = mrp.feature_dim();
        let phi = DMatrix::from_fn(s, n, |i, k| mrp.features[i][k]);
        let m = DMatrix::from_fn(s, s, |i, j| mrp.transition[i][j] * mrp.gamma[j]);
        let r = DVector::from_fn(s, |i, _| (0..s).map(|j| mrp.transition[i][j] * mrp.signal[i][j]).sum());
        let lambda = DVector::from_column_slice(&mrp.lambda);
        let bellman = DMatrix::identity(s, s) - &m * DMatrix::from_diagonal(&lambda);
        Ok(Model { d, phi, bellman, m, r, lambda })
    }

    fn weighted(&self) -> DMatrix<f64> {
        self.phi.transpose() * DMatrix::from_diagonal(&self.d)
    }

    /// `E[φφᵀ]`, rejected unless comfortably positive definite.
    fn covariance(&self) -> Result<DMatrix<f64>> {
        let c = self.weighted() * &self.phi;
        let eig = c.clone().symmetric_eigen().eigenvalues;
        let max = eig.iter().copied().fold(0.0, f64::max);
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        if !(max > 0.0) || min <= 1e-12 * max {
            return Err(Error::Singular("features not full rank under d".into()));
        }
        Ok(c)
    }

    fn solve_bellman(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        self.bellman
            .clone()
            .lu()
            .solve(rhs)
            .ok_or_else(|| Error::Singular("discounted target recursion has no unique solution".into()))
    }

    /// Expected infinite-horizon targets per state with fixed residuals `v`.
    fn expected_targets(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let leak = v.component_mul(&self.lambda.map(|l| 1.0 - l));
        self.solve_bellman(&(&self.r + &self.m * leak))
    }

    /// `(c, K)` with expected targets `c + K θ` under self-bootstrapped
    /// residuals `V = Φθ`.
    fn affine_targets(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let c = self.solve_bellman(&self.r)?;
        let leak = DMatrix::from_diagonal(&self.lambda.map(|l| 1.0 - l));
        let rhs = &self.m * leak * &self.phi;
        let k = self
            .bellman
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("discounted target recursion has no unique solution".into()))?;
        Ok((c, k))
    }
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Expected infinite-horizon targets per state, `E[Z_t^{λγ,∞} | S_t = s]`,
/// with residual predictions `V(s)` held fixed.
pub fn expected_targets(mrp: &MarkovRewardProcess, residuals: &[f64]) -> Result<Vec<f64>> {
    if residuals.len() != mrp.num_states() {
        return Err(Error::Dimension { what: "residual function", expected: mrp.num_states(), actual: residuals.len() });
    }
    let model = Model::new(mrp)?;
    Ok(to_vec(&model.expected_targets(&DVector::from_column_slice(residuals))?))
}

/// Expected targets per state as an affine function of the weights when the
/// residuals bootstrap from them: returns `(c, K)` with `K` stored row-major
/// per state.
pub fn affine_targets(mrp: &MarkovRewardProcess) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let model = Model::new(mrp)?;
    let (c, k) = model.affine_targets()?;
    let rows = (0..k.nrows()).map(|i| k.row(i).iter().copied().collect()).collect();
    Ok((to_vec(&c), rows))
}

/// `θ* = E[φφᵀ]⁻¹ E[φ Z^{λγ,∞}]` with residuals a fixed function of state.
pub fn lms_fixed_point(mrp: &MarkovRewardProcess, residuals: &[f64]) -> Result<FixedPointSolution> {
    if residuals.len() != mrp.num_states() {
        return Err(Error::Dimension { what: "residual function", expected: mrp.num_states(), actual: residuals.len() });
    }
    let model = Model::new(mrp)?;
    let c = model.covariance()?;
    let g = model.expected_targets(&DVector::from_column_slice(residuals))?;
    let theta = c
        .lu()
        .solve(&(model.weighted() * &g))
        .ok_or_else(|| Error::Singular("features not full rank under d".into()))?;
    let err = &g - &model.phi * &theta;
    let residual = err.component_mul(&err).dot(&model.d);
    Ok(FixedPointSolution { theta_star: to_vec(&theta), residual, kind: FixedPointKind::Lms })
}

/// Fixed point with residuals bootstrapped from the weights themselves:
/// solves `Φᵀ D (Φ - K) θ = Φᵀ D c`.
pub fn td_fixed_point(mrp: &MarkovRewardProcess) -> Result<FixedPointSolution> {
    let model = Model::new(mrp)?;
    model.covariance()?;
    let (c, k) = model.affine_targets()?;
    let w = model.weighted();
    let a = &w * (&model.phi - &k);
    let theta = a
        .lu()
        .solve(&(&w * &c))
        .ok_or_else(|| Error::Singular("fixed point not unique under these features".into()))?;
    let theta_star = to_vec(&theta);
    let residual = mspbe_with(&model, &c, &k, &theta)?;
    Ok(FixedPointSolution { theta_star, residual, kind: FixedPointKind::Td })
}

fn mspbe_with(model: &Model, c: &DVector<f64>, k: &DMatrix<f64>, theta: &DVector<f64>) -> Result<f64> {
    let cov = model.covariance()?;
    let g = model.weighted() * (c + k * theta - &model.phi * theta);
    let solved = cov
        .lu()
        .solve(&g)
        .ok_or_else(|| Error::Singular("features not full rank under d".into()))?;
    Ok(g.dot(&solved).max(0.0))
}

/// Mean squared projected Bellman error of `theta`.
pub fn mspbe(mrp: &MarkovRewardProcess, theta: &[f64]) -> Result<f64> {
    if theta.len() != mrp.feature_dim() {
        return Err(Error::Dimension { what: "weights", expected: mrp.feature_dim(), actual: theta.len() });
    }
    let model = Model::new(mrp)?;
    let (c, k) = model.affine_targets()?;
    mspbe_with(&model, &c, &k, &DVector::from_column_slice(theta))
}

/// Where residual predictions come from in a convergence run.
#[derive(Debug, Clone, PartialEq)]
pub enum Residuals {
    /// `V_t = φ_t·θ̄_{t-1}`; the run is measured against the TD fixed point.
    Bootstrapped,
    /// A fixed function of state; measured against the LMS fixed point.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    pub alpha: Schedule,
    pub beta: Schedule,
    pub residuals: Residuals,
    pub steps: usize,
    /// Record the errors every this many steps (the last step is always kept).
    pub record_every: usize,
    pub seed: u64,
    /// Initial weights; zeros when absent.
    pub theta0: Option<Vec<f64>>,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            alpha: Schedule::Decaying { c: 0.5, tau: 1000.0, power: 1.0 },
            beta: Schedule::Constant(1.0),
            residuals: Residuals::Bootstrapped,
            steps: 200_000,
            record_every: 1000,
            seed: 0,
            theta0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub target: FixedPointSolution,
    pub steps: Vec<u64>,
    pub error_online: Vec<f64>,
    pub error_trusted: Vec<f64>,
    pub final_online: Vec<f64>,
    pub final_trusted: Vec<f64>,
}

impl ConvergenceTrace {
    pub fn final_error_trusted(&self) -> f64 {
        *self.error_trusted.last().expect("at least one record")
    }

    pub fn final_error_online(&self) -> f64 {
        *self.error_online.last().expect("at least one record")
    }

    pub fn csv_header() -> &'static str {
        "step,error_online,error_trusted"
    }

    pub fn csv_rows(&self) -> impl Iterator<Item = String> + '_ {
        (0..self.steps.len()).map(|i| format!("{},{:e},{:e}", self.steps[i], self.error_online[i], self.error_trusted[i]))
    }
}

/// Runs the general learner over one continuing stream of the process and
/// records `‖θ̃ - θ*‖` and `‖θ̄ - θ*‖`.
pub fn convergence_run(mrp: &MarkovRewardProcess, cfg: &ConvergenceConfig) -> Result<ConvergenceTrace> {
    let target = match &cfg.residuals {
        Residuals::Bootstrapped => td_fixed_point(mrp)?,
        Residuals::Fixed(v) => lms_fixed_point(mrp, v)?,
    };
    let n = mrp.feature_dim();
    let theta0 = cfg.theta0.clone().unwrap_or_else(|| vec![0.0; n]);
    if theta0.len() != n {
        return Err(Error::Dimension { what: "initial weights", expected: n, actual: theta0.len() });
    }
    let every = cfg.record_every.max(1);
    let mut learner = LearnerState::new(&theta0);
    let mut trace = ConvergenceTrace {
        steps: vec![0],
        error_online: vec![euclidean_distance(&theta0, &target.theta_star)],
        error_trusted: vec![euclidean_distance(&theta0, &target.theta_star)],
        target,
        final_online: Vec::new(),
        final_trusted: Vec::new(),
    };

    let mut stream = StateStream::new(mrp, cfg.seed)?;
    let residual = |learner: &mut LearnerState, s: usize| -> Result<f64> {
        match &cfg.residuals {
            Residuals::Bootstrapped => learner.predict(&mrp.features[s]),
            Residuals::Fixed(v) => Ok(v[s]),
        }
    };
    let mut v = residual(&mut learner, stream.state())?;
    let (mut gamma, mut lambda) = (0.0, 1.0);
    for tr in stream.by_ref().take(cfg.steps) {
        let v_next = residual(&mut learner, tr.resume)?;
        learner.general_step(&GeneralStep {
            phi: &mrp.features[tr.state],
            alpha: cfg.alpha.at(tr.t, tr.state),
            gamma,
            lambda,
            x_next: mrp.signal[tr.state][tr.next],
            gamma_next: mrp.gamma[tr.next],
            beta_next: cfg.beta.at(tr.t + 1, tr.next),
            v,
            v_next,
        })?;
        v = v_next;
        gamma = mrp.gamma[tr.next];
        lambda = mrp.lambda[tr.next];
        let done = tr.t + 1;
        if done % every as u64 == 0 || done == cfg.steps as u64 {
            trace.steps.push(done);
            trace.error_online.push(euclidean_distance(&learner.theta_online, &trace.target.theta_star));
            trace.error_trusted.push(euclidean_distance(&learner.theta_trusted, &trace.target.theta_star));
        }
    }
    trace.final_online = learner.theta_online;
    trace.final_trusted = learner.theta_trusted;
    Ok(trace)
}

/// Single-step episodes: from each of `num_states` start states the process
/// terminates immediately in one of two terminal states with a noisy signal.
pub fn single_step_process(num_states: usize, dim: usize, seed: u64) -> MarkovRewardProcess {
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let total = num_states + 2;
    let mut transition = vec![vec![0.0; total]; total];
    let mut signal = vec![vec![0.0; total]; total];
    for s in 0..num_states {
        let p: f64 = rng.random_range(0.2..0.8);
        transition[s][num_states] = p;
        transition[s][num_states + 1] = 1.0 - p;
        signal[s][num_states] = rng.sample::<f64, _>(StandardNormal) + 1.0;
        signal[s][num_states + 1] = rng.sample::<f64, _>(StandardNormal) - 1.0;
    }
    transition[num_states][num_states] = 1.0;
    transition[num_states + 1][num_states + 1] = 1.0;
    let mut features = vec![vec![0.0; dim]; total];
    for f in features.iter_mut().take(num_states) {
        for v in f.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    }
    let mut start = vec![1.0 / num_states as f64; total];
    start[num_states] = 0.0;
    start[num_states + 1] = 0.0;
    let mut gamma = vec![1.0; total];
    gamma[num_states] = 0.0;
    gamma[num_states + 1] = 0.0;
    let mut terminal = vec![false; total];
    terminal[num_states] = true;
    terminal[num_states + 1] = true;
    MarkovRewardProcess { transition, start, features, signal, gamma, lambda: vec![1.0; total], terminal }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{make_random_walk, random_process, sample_stream, Features};
    use crate::returns::{asymptotic_target, DEFAULT_CUTOFF};
    use crate::schedule::StepSchedule;

    fn walk(features: Features) -> MarkovRewardProcess {
        make_random_walk(5, 1.0, features).unwrap()
    }

    // Value iteration, independent of the linear solves above.
    fn value_iteration(mrp: &MarkovRewardProcess) -> Vec<f64> {
        let s = mrp.num_states();
        let mut v = vec![0.0; s];
        for _ in 0..100_000 {
            let next: Vec<f64> = (0..s)
                .map(|i| (0..s).map(|j| mrp.transition[i][j] * (mrp.signal[i][j] + mrp.gamma[j] * v[j])).sum())
                .collect();
            let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if change < 1e-15 {
                break;
            }
        }
        v
    }

    #[test]
    fn stationary_examples() {
        let d = stationary_distribution(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-15 && (d[1] - 0.5).abs() < 1e-15);
        let d = stationary_distribution(&[vec![0.9, 0.1], vec![0.5, 0.5]]).unwrap();
        assert!((d[0] - 5.0 / 6.0).abs() < 1e-14 && (d[1] - 1.0 / 6.0).abs() < 1e-14);
        let err = stationary_distribution(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap_err();
        assert!(err.to_string().contains("reducible"), "{err}");
        let err = stationary_distribution(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap_err();
        assert!(err.to_string().contains("periodic"), "{err}");
    }

    #[test]
    fn walk_steady_state_matches_expected_visits() {
        // Expected visits per episode from the middle of a 5-state walk are
        // 1, 2, 3, 2, 1.
        let d = steady_state(&walk(Features::Tabular)).unwrap();
        let expect = [0.0, 1.0, 2.0, 3.0, 2.0, 1.0, 0.0].map(|x| x / 9.0);
        for (a, b) in d.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn one_step_chain() {
        let mrp = MarkovRewardProcess {
            transition: vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            start: vec![1.0, 0.0],
            features: vec![vec![1.0], vec![0.0]],
            signal: vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            gamma: vec![1.0, 0.0],
            lambda: vec![1.0, 1.0],
            terminal: vec![false, true],
        };
        let sol = lms_fixed_point(&mrp, &[0.0, 0.0]).unwrap();
        assert!((sol.theta_star[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn walk_values() {
        let mrp = walk(Features::Tabular);
        let sol = lms_fixed_point(&mrp, &[0.0; 7]).unwrap();
        for (k, v) in sol.theta_star.iter().enumerate() {
            assert!((v - (k + 1) as f64 / 6.0).abs() < 1e-12, "{k}: {v}");
        }
        let td = td_fixed_point(&mrp).unwrap();
        assert!(euclidean_distance(&td.theta_star, &sol.theta_star) < 1e-12);
    }

    #[test]
    fn one_step_targets_when_lambda_is_zero() {
        let mut mrp = walk(Features::Tabular);
        mrp.lambda = vec![0.0; 7];
        let v = [0.0, 0.3, -0.2, 0.9, 0.1, 0.4, 0.0];
        let sol = lms_fixed_point(&mrp, &v).unwrap();
        for s in 1..=5 {
            let expect: f64 = (0..7).map(|j| mrp.transition[s][j] * (mrp.signal[s][j] + mrp.gamma[j] * v[j])).sum();
            assert!((sol.theta_star[s - 1] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn tabular_td_fixed_point_is_the_value_function() {
        for seed in 0..5 {
            let mut mrp = random_process(5, 5, seed);
            mrp.features = (0..5).map(|s| (0..5).map(|k| f64::from(u8::from(s == k))).collect()).collect();
            let sol = td_fixed_point(&mrp).unwrap();
            let v = value_iteration(&mrp);
            for (a, b) in sol.theta_star.iter().zip(&v) {
                assert!((a - b).abs() < 1e-10);
            }
            assert!(sol.residual <= 1e-12);
            assert!(mspbe(&mrp, &v).unwrap() <= 1e-20);
        }
    }

    #[test]
    fn random_chains_have_zero_mspbe_at_the_fixed_point() {
        for seed in 0..10 {
            let mrp = random_process(6, 3, 100 + seed);
            let sol = td_fixed_point(&mrp).unwrap();
            assert!(sol.residual <= 1e-12, "{seed}: {}", sol.residual);
        }
    }

    #[test]
    fn unit_lambda_ignores_bootstrapping() {
        let mut mrp = random_process(6, 3, 9);
        mrp.lambda = vec![1.0; 6];
        let td = td_fixed_point(&mrp).unwrap();
        let lms = lms_fixed_point(&mrp, &[5.0, -1.0, 2.0, 0.0, 0.0, 3.0]).unwrap();
        assert!(euclidean_distance(&td.theta_star, &lms.theta_star) < 1e-10);
    }

    #[test]
    fn mspbe_is_quadratic_around_the_fixed_point() {
        let mrp = random_process(6, 3, 4);
        let sol = td_fixed_point(&mrp).unwrap();
        let u = [0.6, -0.8, 0.3];
        let at = |eps: f64| {
            let th: Vec<f64> = sol.theta_star.iter().zip(u).map(|(t, d)| t + eps * d).collect();
            mspbe(&mrp, &th).unwrap()
        };
        let (a, b) = (at(1e-2) / 1e-4, at(1e-3) / 1e-6);
        assert!(a > 0.0 && b > 0.0);
        assert!((a - b).abs() / a < 1e-6, "{a} {b}");
    }

    #[test]
    fn aggregated_walk_fixed_point_minimizes_mspbe() {
        let mut mrp = walk(Features::Aggregated { groups: 2 });
        mrp.lambda = vec![0.5; 7];
        let sol = td_fixed_point(&mrp).unwrap();
        // Zooming grid search on the MSPBE surface.
        let (mut cx, mut cy, mut half) = (0.0, 0.0, 4.0);
        for _ in 0..60 {
            let mut best = (f64::INFINITY, cx, cy);
            for i in -10..=10 {
                for j in -10..=10 {
                    let (x, y) = (cx + half * i as f64 / 10.0, cy + half * j as f64 / 10.0);
                    let m = mspbe(&mrp, &[x, y]).unwrap();
                    if m < best.0 {
                        best = (m, x, y);
                    }
                }
            }
            (cx, cy) = (best.1, best.2);
            half *= 0.5;
        }
        assert!(euclidean_distance(&[cx, cy], &sol.theta_star) < 1e-6, "{cx} {cy} vs {:?}", sol.theta_star);
    }

    #[test]
    fn singular_features_rejected() {
        let mut mrp = walk(Features::Tabular);
        for f in &mut mrp.features {
            f[1] = f[0];
        }
        let err = lms_fixed_point(&mrp, &[0.0; 7]).unwrap_err();
        assert!(err.to_string().contains("features not full rank under d"), "{err}");
    }

    #[test]
    fn analytic_targets_match_sampled_asymptotic_targets() {
        let mut mrp = random_process(4, 2, 21);
        mrp.gamma.iter_mut().for_each(|g| *g *= 0.6);
        let theta = [0.4, -0.7];
        let v: Vec<f64> = mrp.features.iter().map(|f| f[0] * theta[0] + f[1] * theta[1]).collect();
        let expected = expected_targets(&mrp, &v).unwrap();

        let spacing = 80;
        let samples = 12_000;
        let stream = sample_stream(&mrp, &StepSchedule::default(), samples * spacing + spacing, 3).unwrap();
        let mut state_of = Vec::with_capacity(stream.horizon());
        let mut st = StateStream::new(&mrp, 3).unwrap();
        state_of.push(st.state());
        for tr in st.by_ref().take(stream.horizon()) {
            state_of.push(tr.resume);
        }
        let residuals: Vec<f64> = state_of.iter().map(|&s| v[s]).collect();
        let mut sums = vec![(0.0, 0.0, 0usize); 4];
        for k in 0..samples {
            let t = k * spacing;
            let z = asymptotic_target(t, &stream, &residuals, DEFAULT_CUTOFF).unwrap();
            let e = &mut sums[state_of[t]];
            e.0 += z;
            e.1 += z * z;
            e.2 += 1;
        }
        for (s, &(sum, sq, count)) in sums.iter().enumerate() {
            let mean = sum / count as f64;
            let var = sq / count as f64 - mean * mean;
            let se = (var / count as f64).sqrt();
            assert!((mean - expected[s]).abs() <= 3.0 * se, "state {s}: {mean} vs {} (se {se})", expected[s]);
        }
    }

    #[test]
    fn frozen_averaging_keeps_initial_error() {
        let mrp = walk(Features::Tabular);
        let cfg = ConvergenceConfig {
            beta: Schedule::Constant(0.0),
            steps: 2000,
            record_every: 100,
            theta0: Some(vec![0.2; 5]),
            ..ConvergenceConfig::default()
        };
        let run = convergence_run(&mrp, &cfg).unwrap();
        assert!(run.error_trusted.iter().all(|&e| e == run.error_trusted[0]));
        assert_eq!(run.final_trusted, vec![0.2; 5]);
        assert_ne!(run.final_online, vec![0.2; 5]);
    }

    #[test]
    fn convergence_run_is_deterministic() {
        let mrp = walk(Features::Tabular);
        let cfg = ConvergenceConfig { steps: 5000, record_every: 500, seed: 8, ..ConvergenceConfig::default() };
        let a = convergence_run(&mrp, &cfg).unwrap();
        assert_eq!(a, convergence_run(&mrp, &cfg).unwrap());
        assert_eq!(a.steps.len(), 11);
        assert!(a.final_error_trusted() < a.error_trusted[0]);
    }
}
