//! Span-independent learners.
//!
//! Each step costs a fixed number of multiply-adds that depends only on the
//! feature dimension. The fading matrix `F_t = I - α_t φ_t φ_tᵀ` is never
//! formed; [`fading_apply`] applies it in `O(n)`.

use crate::episode::Episode;
use crate::error::{Error, Result};
use crate::vector::{axpy, check_len, dot, scale};

/// Deliberate bugs for exercising the equivalence harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// The general learner decays its trace by `λ_t` instead of `γ_t λ_t`.
    TraceDecayIgnoresDiscount,
    /// The offline learner skips the first fading step of its `a` vector.
    AuxSkipsFirstFade,
}

impl std::str::FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trace-decay" => Ok(Fault::TraceDecayIgnoresDiscount),
            "aux-range" => Ok(Fault::AuxSkipsFirstFade),
            other => Err(Error::Index(format!("unknown fault `{other}` (expected trace-decay or aux-range)"))),
        }
    }
}

fn check_unit(field: &'static str, step: usize, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfRange { field, step, value })
    }
}

/// `w - α φ (φ·w)`.
pub fn fading_apply(w: &[f64], phi: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_len("feature vector", w.len(), phi.len())?;
    let mut out = w.to_vec();
    let mut flops = 0;
    fade(&mut out, phi, alpha, &mut flops);
    Ok(out)
}

fn fade(w: &mut [f64], phi: &[f64], alpha: f64, flops: &mut u64) {
    let p = dot(phi, w, flops);
    axpy(-alpha * p, phi, w, flops);
}

/// Dutch trace update `decay·e + α φ (1 - decay·φ·e)`.
pub fn dutch_trace_step(e: &[f64], phi: &[f64], alpha: f64, decay: f64) -> Result<Vec<f64>> {
    check_len("feature vector", e.len(), phi.len())?;
    let mut out = e.to_vec();
    let mut flops = 0;
    dutch(&mut out, phi, alpha, decay, &mut flops);
    Ok(out)
}

fn dutch(e: &mut [f64], phi: &[f64], alpha: f64, decay: f64, flops: &mut u64) {
    let pe = dot(phi, e, flops);
    scale(decay, e, flops);
    axpy(alpha * (1.0 - decay * pe), phi, e, flops);
}

/// `X_{t+1} + γ_{t+1} V_{t+1} - V_t`.
pub fn td_error(x_next: f64, gamma_next: f64, v_next: f64, v: f64) -> f64 {
    x_next + gamma_next * v_next - v
}

/// `θ̄ + β (θ̃' - θ̄)`; `β = 1` copies and `β = 0` keeps exactly.
pub fn averaging_step(trusted: &[f64], online_next: &[f64], beta_next: f64) -> Result<Vec<f64>> {
    check_len("online weights", trusted.len(), online_next.len())?;
    check_unit("beta", 0, beta_next)?;
    let mut out = trusted.to_vec();
    let mut flops = 0;
    average(&mut out, online_next, beta_next, &mut flops);
    Ok(out)
}

fn average(trusted: &mut [f64], online: &[f64], beta: f64, flops: &mut u64) {
    *flops += trusted.len() as u64;
    if beta == 1.0 {
        trusted.copy_from_slice(online);
    } else if beta != 0.0 {
        for (b, o) in trusted.iter_mut().zip(online) {
            *b += beta * (o - *b);
        }
    }
}

/// Inputs to one step of the general learner, all at their time subscripts:
/// `γ_t`, `λ_t`, `V_t` describe the current step and the `_next` fields are
/// what arrives at `t+1`.
#[derive(Debug, Clone, Copy)]
pub struct GeneralStep<'a> {
    pub phi: &'a [f64],
    pub alpha: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub x_next: f64,
    pub gamma_next: f64,
    pub beta_next: f64,
    pub v: f64,
    pub v_next: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    pub theta_online: Vec<f64>,
    pub theta_trusted: Vec<f64>,
    pub trace: Vec<f64>,
    pub aux_a: Option<Vec<f64>>,
    pub step_count: u64,
    pub flops: u64,
    fault: Option<Fault>,
}

impl LearnerState {
    pub fn new(theta0: &[f64]) -> Self {
        LearnerState {
            theta_online: theta0.to_vec(),
            theta_trusted: theta0.to_vec(),
            trace: vec![0.0; theta0.len()],
            aux_a: None,
            step_count: 0,
            flops: 0,
            fault: None,
        }
    }

    /// A learner for the offline algorithm, with `a_{-1} = θ_0`.
    pub fn offline(theta0: &[f64]) -> Self {
        LearnerState { aux_a: Some(theta0.to_vec()), ..Self::new(theta0) }
    }

    pub fn with_fault(mut self, fault: Option<Fault>) -> Self {
        self.fault = fault;
        self
    }

    pub fn n(&self) -> usize {
        self.theta_online.len()
    }

    /// `φ·θ̄` on the trusted weights, counted.
    pub fn predict(&mut self, phi: &[f64]) -> Result<f64> {
        check_len("feature vector", self.n(), phi.len())?;
        Ok(dot(phi, &self.theta_trusted, &mut self.flops))
    }

    /// One step of the offline algorithm: fades `a` and advances the trace.
    pub fn offline_step(&mut self, phi: &[f64], alpha: f64) -> Result<()> {
        check_len("feature vector", self.n(), phi.len())?;
        let skip = self.fault == Some(Fault::AuxSkipsFirstFade) && self.step_count == 0;
        let a = self
            .aux_a
            .as_mut()
            .ok_or_else(|| Error::InvalidEpisode("learner was not created for the offline algorithm".into()))?;
        if !skip {
            fade(a, phi, alpha, &mut self.flops);
        }
        dutch(&mut self.trace, phi, alpha, 1.0, &mut self.flops);
        self.step_count += 1;
        Ok(())
    }

    /// `a_{T-1} + Z e_{T-1}`.
    pub fn offline_weights(&self, z: f64) -> Result<Vec<f64>> {
        let mut out = self
            .aux_a
            .clone()
            .ok_or_else(|| Error::InvalidEpisode("learner was not created for the offline algorithm".into()))?;
        let mut flops = 0;
        axpy(z, &self.trace, &mut out, &mut flops);
        Ok(out)
    }

    fn advance(&mut self, phi: &[f64], alpha: f64, decay: f64, delta: f64, v: f64) -> Result<()> {
        check_len("feature vector", self.n(), phi.len())?;
        dutch(&mut self.trace, phi, alpha, decay, &mut self.flops);
        let p = dot(phi, &self.theta_online, &mut self.flops);
        axpy(delta, &self.trace, &mut self.theta_online, &mut self.flops);
        axpy(alpha * (v - p), phi, &mut self.theta_online, &mut self.flops);
        self.step_count += 1;
        Ok(())
    }

    fn sync_trusted(&mut self) {
        self.theta_trusted.clone_from(&self.theta_online);
    }

    /// Online learner with interim targets; `z` is `Z^t`, `z_next` is `Z^{t+1}`.
    pub fn online_step(&mut self, phi: &[f64], alpha: f64, z: f64, z_next: f64) -> Result<()> {
        self.advance(phi, alpha, 1.0, td_error(0.0, 1.0, z_next, z), z)?;
        self.sync_trusted();
        Ok(())
    }

    /// Online step followed by averaging into the trusted weights.
    pub fn online_trust_step(&mut self, phi: &[f64], alpha: f64, z: f64, z_next: f64, beta_next: f64) -> Result<()> {
        check_unit("beta", self.step_count as usize + 1, beta_next)?;
        self.advance(phi, alpha, 1.0, td_error(0.0, 1.0, z_next, z), z)?;
        average(&mut self.theta_trusted, &self.theta_online, beta_next, &mut self.flops);
        Ok(())
    }

    /// Learner for truncated λ-returns; the trace decays by `λ_t`.
    pub fn td_lambda_step(&mut self, phi: &[f64], alpha: f64, lambda: f64, z: f64, z_next: f64) -> Result<()> {
        check_unit("lambda", self.step_count as usize, lambda)?;
        self.advance(phi, alpha, lambda, td_error(0.0, 1.0, z_next, z), z)?;
        self.sync_trusted();
        Ok(())
    }

    /// λ-return learner with averaging.
    pub fn td_lambda_trust_step(
        &mut self,
        phi: &[f64],
        alpha: f64,
        lambda: f64,
        z: f64,
        z_next: f64,
        beta_next: f64,
    ) -> Result<()> {
        check_unit("lambda", self.step_count as usize, lambda)?;
        check_unit("beta", self.step_count as usize + 1, beta_next)?;
        self.advance(phi, alpha, lambda, td_error(0.0, 1.0, z_next, z), z)?;
        average(&mut self.theta_trusted, &self.theta_online, beta_next, &mut self.flops);
        Ok(())
    }

    /// The general learner: trace decay `γ_t λ_t`, TD error
    /// `X_{t+1} + γ_{t+1} V_{t+1} - V_t`, then averaging with `β_{t+1}`.
    pub fn general_step(&mut self, s: &GeneralStep<'_>) -> Result<()> {
        let t = self.step_count as usize;
        check_unit("gamma", t, s.gamma)?;
        check_unit("lambda", t, s.lambda)?;
        check_unit("gamma", t + 1, s.gamma_next)?;
        check_unit("beta", t + 1, s.beta_next)?;
        let decay = if self.fault == Some(Fault::TraceDecayIgnoresDiscount) {
            s.lambda
        } else {
            s.gamma * s.lambda
        };
        let delta = td_error(s.x_next, s.gamma_next, s.v_next, s.v);
        self.advance(s.phi, s.alpha, decay, delta, s.v)?;
        average(&mut self.theta_trusted, &self.theta_online, s.beta_next, &mut self.flops);
        Ok(())
    }
}

/// Weight sequences produced by running a learner over one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub online: Vec<Vec<f64>>,
    pub trusted: Vec<Vec<f64>>,
    /// Residual predictions `V_0..V_T` used by the general learner.
    pub residuals: Vec<f64>,
}

impl History {
    fn start(theta0: &[f64], len: usize) -> Self {
        let mut online = Vec::with_capacity(len + 1);
        online.push(theta0.to_vec());
        History { trusted: online.clone(), online, residuals: Vec::new() }
    }

    fn record(&mut self, s: &LearnerState) {
        self.online.push(s.theta_online.clone());
        self.trusted.push(s.theta_trusted.clone());
    }
}

fn interim(ep: &Episode) -> Result<Vec<f64>> {
    ep.check_shape()?;
    ep.interim_targets().ok_or(Error::MissingInterimTargets)
}

/// Final weights of the offline algorithm.
pub fn offline_final(ep: &Episode, theta0: &[f64]) -> Result<Vec<f64>> {
    offline_final_with_fault(ep, theta0, None)
}

pub fn offline_final_with_fault(ep: &Episode, theta0: &[f64], fault: Option<Fault>) -> Result<Vec<f64>> {
    ep.check_final_outcome()?;
    check_len("initial weights", ep.n, theta0.len())?;
    let mut s = LearnerState::offline(theta0).with_fault(fault);
    for t in 0..ep.horizon() {
        s.offline_step(ep.phi(t), ep.alpha(t))?;
    }
    s.offline_weights(ep.final_outcome())
}

pub fn online_history(ep: &Episode, theta0: &[f64]) -> Result<History> {
    let z = interim(ep)?;
    let mut s = LearnerState::new(theta0);
    let mut hist = History::start(theta0, ep.horizon());
    for t in 0..ep.horizon() {
        s.online_step(ep.phi(t), ep.alpha(t), z[t], z[t + 1])?;
        hist.record(&s);
    }
    Ok(hist)
}

pub fn online_trust_history(ep: &Episode, theta0: &[f64]) -> Result<History> {
    let z = interim(ep)?;
    let mut s = LearnerState::new(theta0);
    let mut hist = History::start(theta0, ep.horizon());
    for t in 0..ep.horizon() {
        s.online_trust_step(ep.phi(t), ep.alpha(t), z[t], z[t + 1], ep.trust(t + 1))?;
        hist.record(&s);
    }
    Ok(hist)
}

pub fn td_lambda_history(ep: &Episode, theta0: &[f64]) -> Result<History> {
    let z = interim(ep)?;
    let mut s = LearnerState::new(theta0);
    let mut hist = History::start(theta0, ep.horizon());
    for t in 0..ep.horizon() {
        s.td_lambda_step(ep.phi(t), ep.alpha(t), ep.persistence(t), z[t], z[t + 1])?;
        hist.record(&s);
    }
    Ok(hist)
}

pub fn td_lambda_trust_history(ep: &Episode, theta0: &[f64]) -> Result<History> {
    let z = interim(ep)?;
    let mut s = LearnerState::new(theta0);
    let mut hist = History::start(theta0, ep.horizon());
    for t in 0..ep.horizon() {
        s.td_lambda_trust_step(ep.phi(t), ep.alpha(t), ep.persistence(t), z[t], z[t + 1], ep.trust(t + 1))?;
        hist.record(&s);
    }
    Ok(hist)
}

/// Runs the general learner over one episode. Residuals come from the episode
/// when present; otherwise `V_t = φ_t·θ̄_{t-1}` with `V_0 = φ_0·θ_0` and
/// `V_T = 0`.
pub fn general_history(ep: &Episode, theta0: &[f64]) -> Result<History> {
    general_history_with_fault(ep, theta0, None)
}

pub fn general_history_with_fault(ep: &Episode, theta0: &[f64], fault: Option<Fault>) -> Result<History> {
    ep.check_shape()?;
    check_len("initial weights", ep.n, theta0.len())?;
    let horizon = ep.horizon();
    let external = ep.residuals();
    let mut s = LearnerState::new(theta0).with_fault(fault);
    let mut hist = History::start(theta0, horizon);
    let mut v = match &external {
        Some(r) => r[0],
        None => s.predict(ep.phi(0))?,
    };
    hist.residuals.push(v);
    for t in 0..horizon {
        let v_next = match &external {
            Some(r) => r[t + 1],
            None if t + 1 < horizon => s.predict(ep.phi(t + 1))?,
            None => 0.0,
        };
        s.general_step(&GeneralStep {
            phi: ep.phi(t),
            alpha: ep.alpha(t),
            gamma: ep.discount(t),
            lambda: ep.persistence(t),
            x_next: ep.signal(t + 1),
            gamma_next: ep.discount(t + 1),
            beta_next: ep.trust(t + 1),
            v,
            v_next,
        })?;
        hist.record(&s);
        hist.residuals.push(v_next);
        v = v_next;
    }
    Ok(hist)
}
