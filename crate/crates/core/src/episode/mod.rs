//! Trajectory data model.
//!
//! An [`Episode`] is a list of [`Step`] records. Record `t` holds what is known
//! when the prediction at time `t` is made (`φ_t`, `α_t`) together with what
//! arrives on the transition to `t+1` (`X_{t+1}`, `γ_{t+1}`, `λ_{t+1}`,
//! `β_{t+1}`, and optionally `V_{t+1}` and `Z^{t+1}`). The accessor methods on
//! [`Episode`] take the time subscript directly, so `ep.signal(t)` is `X_t`.

mod format;
mod process;

pub use format::{parse_episodes, read_episodes, render_episodes, write_episodes, HEADER_PREFIX};
pub use process::{
    make_random_walk, random_process, sample_episode, sample_episode_capped, sample_index, sample_stream,
    Features, MarkovRewardProcess, StateStream, Transition, DEFAULT_STEP_CAP,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub phi: Vec<f64>,
    pub alpha: f64,
    pub x: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub beta: f64,
    pub v: Option<f64>,
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub n: usize,
    pub steps: Vec<Step>,
}

fn unit_interval(field: &'static str, step: usize, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfRange { field, step, value })
    }
}

impl Episode {
    pub fn new(n: usize, steps: Vec<Step>) -> Result<Self> {
        let ep = Episode { n, steps };
        ep.validate()?;
        Ok(ep)
    }

    /// The final time step `T`.
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn phi(&self, t: usize) -> &[f64] {
        &self.steps[t].phi
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.steps[t].alpha
    }

    /// `X_t` for `1 <= t <= T`.
    pub fn signal(&self, t: usize) -> f64 {
        self.steps[t - 1].x
    }

    /// `γ_t`; the start of a stream behaves as `γ_0 = 0`.
    pub fn discount(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.steps[t - 1].gamma
        }
    }

    /// `λ_t`; `λ_0 = 1` (it only ever multiplies the empty trace `e_{-1}`).
    pub fn persistence(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.steps[t - 1].lambda
        }
    }

    /// `β_t` for `1 <= t <= T`.
    pub fn trust(&self, t: usize) -> f64 {
        self.steps[t - 1].beta
    }

    /// `Z^h` with `Z^0 = 0`.
    pub fn interim(&self, h: usize) -> Option<f64> {
        if h == 0 {
            self.steps.first().and_then(|s| s.z).map(|_| 0.0)
        } else {
            self.steps[h - 1].z
        }
    }

    /// The final outcome `Z = X_T`.
    pub fn final_outcome(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.x)
    }

    pub fn has_residuals(&self) -> bool {
        self.steps.first().is_some_and(|s| s.v.is_some())
    }

    pub fn has_interim_targets(&self) -> bool {
        self.steps.first().is_some_and(|s| s.z.is_some())
    }

    /// `[X_0 = 0, X_1, …, X_T]`.
    pub fn signals(&self) -> Vec<f64> {
        std::iter::once(0.0).chain(self.steps.iter().map(|s| s.x)).collect()
    }

    /// `[γ_0 = 0, γ_1, …, γ_T]`.
    pub fn discounts(&self) -> Vec<f64> {
        std::iter::once(0.0).chain(self.steps.iter().map(|s| s.gamma)).collect()
    }

    /// `[λ_0 = 1, λ_1, …, λ_T]`.
    pub fn persistences(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.steps.iter().map(|s| s.lambda)).collect()
    }

    /// `[β_0 = 0, β_1, …, β_T]`; `β_0` is never read.
    pub fn trusts(&self) -> Vec<f64> {
        std::iter::once(0.0).chain(self.steps.iter().map(|s| s.beta)).collect()
    }

    /// `[Z^0 = 0, Z^1, …, Z^T]` when interim targets are present.
    pub fn interim_targets(&self) -> Option<Vec<f64>> {
        let tail: Option<Vec<f64>> = self.steps.iter().map(|s| s.z).collect();
        tail.filter(|v| !v.is_empty())
            .map(|v| std::iter::once(0.0).chain(v).collect())
    }

    /// `[V_0 = 0, V_1, …, V_T]` when external residual predictions are present.
    pub fn residuals(&self) -> Option<Vec<f64>> {
        let tail: Option<Vec<f64>> = self.steps.iter().map(|s| s.v).collect();
        tail.filter(|v| !v.is_empty())
            .map(|v| std::iter::once(0.0).chain(v).collect())
    }

    /// Checks lengths and the shape of optional columns only. Oracles accept
    /// anything that passes this, including zero step sizes.
    pub fn check_shape(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidEpisode("feature dimension must be positive".into()));
        }
        if self.steps.is_empty() {
            return Err(Error::InvalidEpisode("episode has no steps".into()));
        }
        let has_v = self.steps[0].v.is_some();
        let has_z = self.steps[0].z.is_some();
        for (t, s) in self.steps.iter().enumerate() {
            if s.phi.len() != self.n {
                return Err(Error::Dimension {
                    what: "feature vector",
                    expected: self.n,
                    actual: s.phi.len(),
                });
            }
            if s.v.is_some() != has_v {
                return Err(Error::InvalidEpisode(format!(
                    "residual prediction present on some steps but not step {t}"
                )));
            }
            if s.z.is_some() != has_z {
                return Err(Error::InvalidEpisode(format!(
                    "interim target present on some steps but not step {t}"
                )));
            }
        }
        Ok(())
    }

    /// Full invariant check.
    pub fn validate(&self) -> Result<()> {
        self.check_values(true)
    }

    /// Like [`validate`](Self::validate) but allows `α_t = 0`, which the
    /// forward oracles accept.
    pub fn check_oracle_input(&self) -> Result<()> {
        self.check_values(false)
    }

    fn check_values(&self, positive_alpha: bool) -> Result<()> {
        self.check_shape()?;
        for (t, s) in self.steps.iter().enumerate() {
            if s.phi.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidEpisode(format!("non-finite feature at step {t}")));
            }
            let alpha_ok = s.alpha.is_finite() && if positive_alpha { s.alpha > 0.0 } else { s.alpha >= 0.0 };
            if !alpha_ok {
                return Err(Error::OutOfRange { field: "alpha", step: t, value: s.alpha });
            }
            unit_interval("gamma", t + 1, s.gamma)?;
            unit_interval("lambda", t + 1, s.lambda)?;
            unit_interval("beta", t + 1, s.beta)?;
            for (field, value) in [("x", Some(s.x)), ("v", s.v), ("z", s.z)] {
                if let Some(v) = value {
                    if !v.is_finite() {
                        return Err(Error::InvalidEpisode(format!(
                            "non-finite {field} at step {}",
                            t + 1
                        )));
                    }
                }
            }
        }
        let last = self.steps.last().expect("nonempty");
        if let Some(z) = last.z {
            if z.to_bits() != last.x.to_bits() {
                return Err(Error::InvalidEpisode(format!(
                    "final interim target {z} differs from final outcome {}",
                    last.x
                )));
            }
        }
        Ok(())
    }

    /// Errors unless every signal before `T` is zero.
    pub fn check_final_outcome(&self) -> Result<()> {
        self.check_shape()?;
        let t_final = self.horizon();
        for t in 1..t_final {
            if self.signal(t) != 0.0 {
                return Err(Error::NotFinalOutcome(format!(
                    "signal X_{t} = {} before the final step",
                    self.signal(t)
                )));
            }
        }
        Ok(())
    }

    /// Joins episodes into one stream with continuous time numbering. Each
    /// constituent should end in `γ_T = 0` for the boundaries to act as hard
    /// terminations.
    pub fn concat(episodes: &[Episode]) -> Result<Episode> {
        let n = episodes
            .first()
            .map(|e| e.n)
            .ok_or_else(|| Error::InvalidEpisode("no episodes to join".into()))?;
        let mut steps = Vec::new();
        for e in episodes {
            if e.n != n {
                return Err(Error::Dimension { what: "episode feature dimension", expected: n, actual: e.n });
            }
            steps.extend(e.steps.iter().cloned());
        }
        let joined = Episode { n, steps };
        joined.check_shape()?;
        Ok(joined)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(phi: Vec<f64>, x: f64) -> Step {
        Step { phi, alpha: 0.5, x, gamma: 1.0, lambda: 1.0, beta: 1.0, v: None, z: None }
    }

    #[test]
    fn subscript_accessors() {
        let mut s0 = step(vec![1.0], 0.0);
        s0.gamma = 0.9;
        s0.z = Some(0.5);
        let mut s1 = step(vec![2.0], 1.0);
        s1.gamma = 0.0;
        s1.z = Some(1.0);
        let ep = Episode::new(1, vec![s0, s1]).unwrap();
        assert_eq!(ep.horizon(), 2);
        assert_eq!(ep.signal(2), 1.0);
        assert_eq!(ep.discount(0), 0.0);
        assert_eq!(ep.discount(1), 0.9);
        assert_eq!(ep.interim(0), Some(0.0));
        assert_eq!(ep.interim_targets().unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(ep.signals(), vec![0.0, 0.0, 1.0]);
        assert!(ep.residuals().is_none());
    }

    #[test]
    fn rejects_bad_ranges() {
        let mut s = step(vec![1.0], 1.0);
        s.gamma = 1.5;
        let err = Episode::new(1, vec![s]).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { field: "gamma", .. }), "{err}");

        let mut s = step(vec![1.0], 1.0);
        s.alpha = 0.0;
        assert!(Episode::new(1, vec![s]).is_err());
    }

    #[test]
    fn final_interim_target_must_match_outcome() {
        let mut s = step(vec![1.0], 1.0);
        s.z = Some(0.9);
        assert!(Episode::new(1, vec![s]).is_err());
    }

    #[test]
    fn mixed_optional_columns_rejected() {
        let mut a = step(vec![1.0], 0.0);
        a.v = Some(0.0);
        let b = step(vec![1.0], 1.0);
        assert!(Episode::new(1, vec![a, b]).is_err());
    }

    #[test]
    fn final_outcome_check() {
        let ep = Episode::new(1, vec![step(vec![1.0], 0.3), step(vec![1.0], 1.0)]).unwrap();
        assert!(matches!(ep.check_final_outcome(), Err(Error::NotFinalOutcome(_))));
    }
}
