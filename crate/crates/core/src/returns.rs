//! Combined update targets.
//!
//! All functions index their inputs by time subscript: `interim[h]` is `Z^h`,
//! `lambda[k]` is `λ_k`, `residuals[k]` is `V_k`, and so on. Slices built by
//! the [`Episode`] helpers (`interim_targets`, `persistences`, …) already have
//! this layout.

use crate::episode::Episode;
use crate::error::{Error, Result};

/// Which combined target a [`TargetTable`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    /// Plain interim targets `Z^h` (independent of `t`).
    Interim,
    /// Trust-blended interim targets.
    Trusted,
    /// Truncated λ-returns.
    Lambda,
    /// Cumulative discounted λ-returns with residual predictions.
    General,
    /// Trust-blended general targets.
    TrustedGeneral,
}

/// Targets on the triangular index set `0 <= t <= h <= T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTable {
    kind: TargetKind,
    horizon: usize,
    values: Vec<f64>,
}

impl TargetTable {
    pub fn new(kind: TargetKind, horizon: usize) -> Self {
        TargetTable {
            kind,
            horizon,
            values: vec![f64::NAN; (horizon + 1) * (horizon + 2) / 2],
        }
    }

    pub fn kind(&self) -> TargetKind {
        self.kind
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn slot(&self, t: usize, h: usize) -> usize {
        assert!(t <= h && h <= self.horizon, "({t}, {h}) outside triangle of size {}", self.horizon);
        h * (h + 1) / 2 + t
    }

    pub fn get(&self, t: usize, h: usize) -> f64 {
        self.values[self.slot(t, h)]
    }

    pub fn set(&mut self, t: usize, h: usize, value: f64) {
        let i = self.slot(t, h);
        self.values[i] = value;
    }
}

fn need(len: usize, index: usize, what: &str) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(Error::Index(format!("{what} has no entry for index {index}")))
    }
}

/// Truncated λ-return `Z^{λ,h}_t` for `t < h`.
///
/// Evaluated from the horizon backwards as
/// `Zl(t,h) = (1-λ_{t+1}) Z^{t+1} + λ_{t+1} Zl(t+1,h)` with `Zl(h-1,h) = Z^h`.
pub fn lambda_return(t: usize, h: usize, interim: &[f64], lambda: &[f64]) -> Result<f64> {
    if t >= h {
        return Err(Error::Index(format!("lambda return needs t < h, got t={t}, h={h}")));
    }
    need(interim.len(), h, "interim targets")?;
    need(lambda.len(), h.saturating_sub(1), "persistence sequence")?;
    let mut acc = interim[h];
    for k in (t + 1..h).rev() {
        acc = (1.0 - lambda[k]) * interim[k] + lambda[k] * acc;
    }
    Ok(acc)
}

/// Trust-blended target: starting from `anchor` at `h = t`, each later horizon
/// `k` mixes in `base[k]` with weight `beta[k]`.
pub fn trust_combined(t: usize, h: usize, base: &[f64], beta: &[f64], anchor: f64) -> Result<f64> {
    if t > h {
        return Err(Error::Index(format!("trust blend needs t <= h, got t={t}, h={h}")));
    }
    if h > t {
        need(base.len(), h, "base targets")?;
        need(beta.len(), h, "trust sequence")?;
    }
    let mut acc = anchor;
    for k in t + 1..=h {
        acc = trust_blend(acc, base[k], beta[k]);
    }
    Ok(acc)
}

#[inline]
pub(crate) fn trust_blend(previous: f64, newest: f64, beta: f64) -> f64 {
    beta * newest + (1.0 - beta) * previous
}

fn check_horizon(ep: &Episode, t: usize, h: usize, residuals: &[f64]) -> Result<()> {
    if t > h {
        return Err(Error::Index(format!("target needs t <= h, got t={t}, h={h}")));
    }
    if h > ep.horizon() {
        return Err(Error::Index(format!("horizon {h} beyond episode end {}", ep.horizon())));
    }
    need(residuals.len(), h, "residual predictions")
}

/// General interim target for cumulative discounted signals:
/// `Zlg(t,h) = X_{t+1} + γ_{t+1}((1-λ_{t+1}) V_{t+1} + λ_{t+1} Zlg(t+1,h))`,
/// `Zlg(t,t) = V_t`.
pub fn general_interim_target(t: usize, h: usize, ep: &Episode, residuals: &[f64]) -> Result<f64> {
    check_horizon(ep, t, h, residuals)?;
    if h == t {
        return Ok(residuals[t]);
    }
    let mut acc = ep.signal(h) + ep.discount(h) * residuals[h];
    for k in (t + 1..h).rev() {
        let lambda = ep.persistence(k);
        acc = ep.signal(k) + ep.discount(k) * ((1.0 - lambda) * residuals[k] + lambda * acc);
    }
    Ok(acc)
}

/// Trust-blended general target, anchored at `anchor` (the prediction
/// `φ_t·θ̄_t`) for `h = t`.
pub fn trust_combined_general(t: usize, h: usize, ep: &Episode, residuals: &[f64], anchor: f64) -> Result<f64> {
    check_horizon(ep, t, h, residuals)?;
    let mut acc = anchor;
    for k in t + 1..=h {
        acc = trust_blend(acc, general_interim_target(t, k, ep, residuals)?, ep.trust(k));
    }
    Ok(acc)
}

/// Default truncation threshold for [`asymptotic_target`].
pub const DEFAULT_CUTOFF: f64 = 1e-14;

/// Infinite-horizon general target, truncated at the first horizon `h` where
/// `γ_{t+1}⋯γ_h λ_{t+1}⋯λ_h < cutoff`. On an episodic stream the product hits
/// zero at the terminal step and the result is exactly `Zlg(t, T)`.
pub fn asymptotic_target(t: usize, stream: &Episode, residuals: &[f64], cutoff: f64) -> Result<f64> {
    let end = stream.horizon();
    if t >= end {
        return Err(Error::Index(format!("prediction time {t} not before stream end {end}")));
    }
    let mut multiplier = 1.0;
    for h in t + 1..=end {
        multiplier *= stream.discount(h) * stream.persistence(h);
        if multiplier < cutoff {
            return general_interim_target(t, h, stream, residuals);
        }
    }
    Err(Error::StreamExhausted { cutoff, remaining: multiplier })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::Step;
    use proptest::prelude::*;

    fn episode(xs: &[f64], gammas: &[f64], lambdas: &[f64], betas: &[f64]) -> Episode {
        let steps = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| Step {
                phi: vec![1.0],
                alpha: 0.1,
                x,
                gamma: gammas[i],
                lambda: lambdas[i],
                beta: betas[i],
                v: None,
                z: None,
            })
            .collect();
        Episode { n: 1, steps }
    }

    // Independent expansions, written out term by term.

    fn lambda_return_expanded(t: usize, h: usize, z: &[f64], lambda: &[f64]) -> (f64, Vec<f64>) {
        let mut mults = Vec::new();
        let mut total = 0.0;
        let mut carry = 1.0;
        for k in t + 1..h {
            let m = carry * (1.0 - lambda[k]);
            mults.push(m);
            total += m * z[k];
            carry *= lambda[k];
        }
        mults.push(carry);
        total += carry * z[h];
        (total, mults)
    }

    fn trust_expanded(t: usize, h: usize, base: &[f64], beta: &[f64], anchor: f64) -> (f64, Vec<f64>) {
        let mut mults = Vec::new();
        let mut total = 0.0;
        let mut carry = 1.0;
        for k in (t + 1..=h).rev() {
            let m = carry * beta[k];
            mults.push(m);
            total += m * base[k];
            carry *= 1.0 - beta[k];
        }
        mults.push(carry);
        total += carry * anchor;
        (total, mults)
    }

    fn general_expanded(t: usize, h: usize, ep: &Episode, v: &[f64]) -> f64 {
        if h == t {
            return v[t];
        }
        let mut total = 0.0;
        let mut g = 1.0;
        for k in t..h - 1 {
            let l = ep.persistence(k + 1);
            total += g * (ep.signal(k + 1) + ep.discount(k + 1) * (1.0 - l) * v[k + 1]);
            g *= ep.discount(k + 1) * l;
        }
        total + g * (ep.signal(h) + ep.discount(h) * v[h])
    }

    #[test]
    fn lambda_return_examples() {
        let z = [0.0, 0.0, 1.0];
        assert_eq!(lambda_return(0, 2, &z, &[1.0, 0.5, 0.5]).unwrap(), 0.5);
        let z = [0.0, 0.3, -1.2, 2.7];
        assert_eq!(lambda_return(0, 3, &z, &[1.0; 4]).unwrap(), 2.7);
        assert_eq!(lambda_return(0, 3, &z, &[0.0; 4]).unwrap(), 0.3);
        assert_eq!(lambda_return(1, 3, &z, &[0.0; 4]).unwrap(), -1.2);
        assert!(matches!(lambda_return(2, 2, &z, &[0.0; 4]), Err(Error::Index(_))));
    }

    #[test]
    fn trust_examples() {
        let base = [0.0, 1.0, 2.0];
        assert_eq!(trust_combined(0, 2, &base, &[0.0, 0.5, 0.5], 0.0).unwrap(), 1.25);
        assert_eq!(trust_combined(1, 1, &base, &[0.0, 0.5, 0.5], 7.0).unwrap(), 7.0);
        assert_eq!(trust_combined(0, 2, &base, &[0.0, 0.3, 1.0], 9.0).unwrap(), 2.0);
    }

    #[test]
    fn general_examples() {
        let ep = episode(&[1.0], &[0.5], &[0.3], &[0.5]);
        let v = [0.0, 2.0];
        assert_eq!(general_interim_target(0, 1, &ep, &v).unwrap(), 2.0);
        assert_eq!(general_interim_target(1, 1, &ep, &v).unwrap(), 2.0);
        assert_eq!(trust_combined_general(0, 1, &ep, &v, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn general_reduces_to_interim_targets_in_final_outcome_setting() {
        // γ ≡ 1 except γ_T = 0, λ ≡ 1, X = 0 except X_T = Z, V_h = Z^h.
        let z = [0.0, 0.4, -0.7, 1.3];
        let ep = episode(&[0.0, 0.0, 1.3], &[1.0, 1.0, 0.0], &[1.0; 3], &[1.0; 3]);
        for t in 0..3 {
            for h in t + 1..=3 {
                assert_eq!(general_interim_target(t, h, &ep, &z).unwrap(), z[h]);
            }
        }
    }

    #[test]
    fn asymptotic_examples() {
        let ep = episode(&[0.5, -1.0, 2.0], &[0.9, 0.8, 0.0], &[0.7, 0.6, 0.5], &[1.0; 3]);
        let v = [0.0, 0.2, 0.3, 9.0];
        for t in 0..3 {
            let a = asymptotic_target(t, &ep, &v, DEFAULT_CUTOFF).unwrap();
            assert_eq!(a, general_interim_target(t, 3, &ep, &v).unwrap());
        }

        let ep = episode(&[0.5, -1.0, 2.0], &[0.9, 0.8, 0.7], &[0.0; 3], &[1.0; 3]);
        assert_eq!(asymptotic_target(0, &ep, &v, DEFAULT_CUTOFF).unwrap(), 0.5 + 0.9 * 0.2);

        let len = 400;
        let ep = episode(&vec![1.0; len], &vec![0.9; len], &vec![1.0; len], &vec![1.0; len]);
        let a = asymptotic_target(0, &ep, &vec![0.0; len + 1], DEFAULT_CUTOFF).unwrap();
        assert!((a - 10.0).abs() < 1e-12, "{a}");

        let short = episode(&[1.0; 10], &[0.9; 10], &[1.0; 10], &[1.0; 10]);
        assert!(matches!(
            asymptotic_target(0, &short, &[0.0; 11], DEFAULT_CUTOFF),
            Err(Error::StreamExhausted { .. })
        ));
    }

    fn unit() -> impl Strategy<Value = f64> {
        prop_oneof![Just(0.0), Just(1.0), 0.0..=1.0f64]
    }

    proptest! {
        #[test]
        fn multipliers_sum_to_one(
            lam in prop::collection::vec(unit(), 12),
            beta in prop::collection::vec(unit(), 12),
            z in prop::collection::vec(-3.0..3.0f64, 12),
            t in 0usize..10,
            span in 1usize..3,
        ) {
            let h = (t + span).min(11);
            let (value, mults) = lambda_return_expanded(t, h, &z, &lam);
            prop_assert!((mults.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!((lambda_return(t, h, &z, &lam).unwrap() - value).abs() <= 1e-12);

            let (value, mults) = trust_expanded(t, h, &z, &beta, 0.7);
            prop_assert!((mults.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!((trust_combined(t, h, &z, &beta, 0.7).unwrap() - value).abs() <= 1e-12);
        }

        #[test]
        fn lambda_return_telescopes(
            lam in prop::collection::vec(unit(), 10),
            z in prop::collection::vec(-3.0..3.0f64, 10),
            k in 0usize..8,
            extra in 1usize..8,
        ) {
            let h = (k + extra).min(8);
            let diff = lambda_return(k, h + 1, &z, &lam).unwrap() - lambda_return(k, h, &z, &lam).unwrap();
            let prod: f64 = (k + 1..=h).map(|i| lam[i]).product();
            prop_assert!((diff - prod * (z[h + 1] - z[h])).abs() <= 1e-12);
        }

        #[test]
        fn general_target_forms_agree_and_telescope(
            xs in prop::collection::vec(-2.0..2.0f64, 10),
            gs in prop::collection::vec(unit(), 10),
            ls in prop::collection::vec(unit(), 10),
            v in prop::collection::vec(-2.0..2.0f64, 11),
            k in 0usize..9,
            extra in 0usize..9,
        ) {
            let ep = episode(&xs, &gs, &ls, &vec![1.0; 10]);
            let h = (k + extra).min(9);
            let rec = general_interim_target(k, h, &ep, &v).unwrap();
            prop_assert!((rec - general_expanded(k, h, &ep, &v)).abs() <= 1e-12);

            let diff = general_interim_target(k, h + 1, &ep, &v).unwrap() - rec;
            let prod: f64 = (k + 1..=h).map(|i| ep.discount(i) * ep.persistence(i)).product();
            let delta = ep.signal(h + 1) + ep.discount(h + 1) * v[h + 1] - v[h];
            prop_assert!((diff - prod * delta).abs() <= 1e-12);
        }

        #[test]
        fn trusted_general_blend_matches_expansion(
            xs in prop::collection::vec(-2.0..2.0f64, 8),
            gs in prop::collection::vec(unit(), 8),
            ls in prop::collection::vec(unit(), 8),
            bs in prop::collection::vec(unit(), 8),
            v in prop::collection::vec(-2.0..2.0f64, 9),
            t in 0usize..8,
            extra in 0usize..8,
        ) {
            let ep = episode(&xs, &gs, &ls, &bs);
            let h = (t + extra).min(8);
            let base: Vec<f64> = (0..=8)
                .map(|k| if k > t && k <= h { general_expanded(t, k, &ep, &v) } else { 0.0 })
                .collect();
            let (value, _) = trust_expanded(t, h, &base, &ep.trusts(), -0.4);
            let got = trust_combined_general(t, h, &ep, &v, -0.4).unwrap();
            prop_assert!((got - value).abs() <= 1e-12);
        }
    }
}
