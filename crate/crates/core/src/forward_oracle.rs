//! Forward views computed the slow way: every row `h` of the weight triangle
//! `θ_{t,h}` is rebuilt from `θ_0` against the targets available at horizon
//! `h`. Work is quadratic in the episode length; these are reference oracles.

use crate::episode::Episode;
use crate::error::{Error, Result};
use crate::returns::{general_interim_target, lambda_return, trust_blend, trust_combined, TargetKind, TargetTable};
use crate::vector::{axpy, check_len, dot};

/// Dense storage for `θ_{t,h}`, `0 <= t <= h <= T`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTriangle {
    n: usize,
    horizon: usize,
    data: Vec<f64>,
    row_flops: Vec<u64>,
}

impl WeightTriangle {
    fn new(n: usize, horizon: usize, theta0: &[f64]) -> Self {
        let slots = (horizon + 1) * (horizon + 2) / 2;
        let mut tri = WeightTriangle {
            n,
            horizon,
            data: vec![f64::NAN; slots * n],
            row_flops: vec![0; horizon + 1],
        };
        for h in 0..=horizon {
            tri.set(0, h, theta0);
        }
        tri
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn offset(&self, t: usize, h: usize) -> usize {
        assert!(t <= h && h <= self.horizon, "({t}, {h}) outside triangle of size {}", self.horizon);
        (h * (h + 1) / 2 + t) * self.n
    }

    pub fn get(&self, t: usize, h: usize) -> &[f64] {
        let o = self.offset(t, h);
        &self.data[o..o + self.n]
    }

    fn set(&mut self, t: usize, h: usize, w: &[f64]) {
        let o = self.offset(t, h);
        self.data[o..o + self.n].copy_from_slice(w);
    }

    /// `θ_{t,t}` for `t = 0..=T`.
    pub fn diagonal(&self) -> Vec<Vec<f64>> {
        (0..=self.horizon).map(|t| self.get(t, t).to_vec()).collect()
    }

    /// `θ_{0,h}, …, θ_{h,h}`.
    pub fn row(&self, h: usize) -> Vec<Vec<f64>> {
        (0..=h).map(|t| self.get(t, h).to_vec()).collect()
    }

    /// Multiply-adds spent on the weight updates of row `h`.
    pub fn row_flops(&self, h: usize) -> u64 {
        self.row_flops[h]
    }

    pub fn total_flops(&self) -> u64 {
        self.row_flops.iter().sum()
    }
}

/// Online and trusted triangles of the general forward view, with the
/// residual predictions `V_0..V_T` that were used.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralTriangles {
    pub online: WeightTriangle,
    pub trusted: WeightTriangle,
    pub residuals: Vec<f64>,
}

fn check_input(ep: &Episode, theta0: &[f64]) -> Result<()> {
    ep.check_oracle_input()?;
    check_len("initial weights", ep.n, theta0.len())
}

fn interim_targets(ep: &Episode) -> Result<Vec<f64>> {
    ep.interim_targets().ok_or(Error::MissingInterimTargets)
}

/// Runs row `h`: `θ_{t+1,h} = θ_{t,h} + α_t φ_t (targets[t] - φ_t·θ_{t,h})`.
fn lms_row(tri: &mut WeightTriangle, ep: &Episode, h: usize, targets: &[f64]) {
    let mut w = tri.get(0, h).to_vec();
    let mut flops = 0;
    for (t, &target) in targets.iter().enumerate().take(h) {
        let phi = ep.phi(t);
        let error = target - dot(phi, &w, &mut flops);
        axpy(ep.alpha(t) * error, phi, &mut w, &mut flops);
        tri.set(t + 1, h, &w);
    }
    tri.row_flops[h] = flops;
}

/// Classical LMS toward the final outcome: `θ_0, …, θ_T`.
pub fn offline_lms(ep: &Episode, theta0: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_input(ep, theta0)?;
    ep.check_final_outcome()?;
    let z = ep.final_outcome();
    let mut flops = 0;
    let mut w = theta0.to_vec();
    let mut out = Vec::with_capacity(ep.horizon() + 1);
    out.push(w.clone());
    for t in 0..ep.horizon() {
        let phi = ep.phi(t);
        let error = z - dot(phi, &w, &mut flops);
        axpy(ep.alpha(t) * error, phi, &mut w, &mut flops);
        out.push(w.clone());
    }
    Ok(out)
}

/// Online forward view with interim targets `Z^h`.
pub fn online_triangle(ep: &Episode, theta0: &[f64]) -> Result<WeightTriangle> {
    check_input(ep, theta0)?;
    let z = interim_targets(ep)?;
    let mut tri = WeightTriangle::new(ep.n, ep.horizon(), theta0);
    for h in 1..=ep.horizon() {
        lms_row(&mut tri, ep, h, &vec![z[h]; h]);
    }
    Ok(tri)
}

/// Online triangle plus the trusted triangle whose targets blend the interim
/// targets with the trusted prediction at the time of the update.
pub fn trust_triangle(ep: &Episode, theta0: &[f64]) -> Result<(WeightTriangle, WeightTriangle)> {
    let online = online_triangle(ep, theta0)?;
    let z = interim_targets(ep)?;
    let beta = ep.trusts();
    let mut trusted = WeightTriangle::new(ep.n, ep.horizon(), theta0);
    let mut anchors = Vec::with_capacity(ep.horizon());
    let mut scratch = 0;
    for h in 1..=ep.horizon() {
        anchors.push(dot(ep.phi(h - 1), trusted.get(h - 1, h - 1), &mut scratch));
        let targets = (0..h)
            .map(|t| trust_combined(t, h, &z, &beta, anchors[t]))
            .collect::<Result<Vec<_>>>()?;
        lms_row(&mut trusted, ep, h, &targets);
    }
    Ok((online, trusted))
}

/// Forward view with truncated λ-return targets.
pub fn lambda_triangle(ep: &Episode, theta0: &[f64]) -> Result<WeightTriangle> {
    check_input(ep, theta0)?;
    let z = interim_targets(ep)?;
    let lambda = ep.persistences();
    let mut tri = WeightTriangle::new(ep.n, ep.horizon(), theta0);
    for h in 1..=ep.horizon() {
        let targets = (0..h)
            .map(|t| lambda_return(t, h, &z, &lambda))
            .collect::<Result<Vec<_>>>()?;
        lms_row(&mut tri, ep, h, &targets);
    }
    Ok(tri)
}

/// General forward view for discounted cumulative signals.
///
/// Residual predictions come from the episode when present. Otherwise they
/// are bootstrapped from the trusted diagonal, `V_h = φ_h·θ̄_{h-1,h-1}`, with
/// `V_0 = φ_0·θ_0` and `V_T = 0` (no `φ_T` exists inside a single episode).
pub fn general_triangles(ep: &Episode, theta0: &[f64]) -> Result<GeneralTriangles> {
    check_input(ep, theta0)?;
    let horizon = ep.horizon();
    let mut scratch = 0;
    let external = ep.residuals();
    let bootstrapped = external.is_none();
    let mut residuals = external.unwrap_or_else(|| vec![0.0; horizon + 1]);
    if bootstrapped {
        residuals[0] = dot(ep.phi(0), theta0, &mut scratch);
    }

    let mut online = WeightTriangle::new(ep.n, horizon, theta0);
    let mut trusted = WeightTriangle::new(ep.n, horizon, theta0);
    let mut blended = TargetTable::new(TargetKind::TrustedGeneral, horizon);
    for h in 1..=horizon {
        let prev = trusted.get(h - 1, h - 1).to_vec();
        blended.set(h - 1, h - 1, dot(ep.phi(h - 1), &prev, &mut scratch));
        if bootstrapped && h < horizon {
            residuals[h] = dot(ep.phi(h), &prev, &mut scratch);
        }
        let plain = (0..h)
            .map(|t| general_interim_target(t, h, ep, &residuals))
            .collect::<Result<Vec<_>>>()?;
        for (t, &target) in plain.iter().enumerate() {
            blended.set(t, h, trust_blend(blended.get(t, h - 1), target, ep.trust(h)));
        }
        let mixed: Vec<f64> = (0..h).map(|t| blended.get(t, h)).collect();
        lms_row(&mut online, ep, h, &plain);
        lms_row(&mut trusted, ep, h, &mixed);
    }
    Ok(GeneralTriangles { online, trusted, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::Step;

    fn step(phi: f64, alpha: f64, x: f64, z: Option<f64>) -> Step {
        Step { phi: vec![phi], alpha, x, gamma: 1.0, lambda: 1.0, beta: 1.0, v: None, z }
    }

    fn worked() -> Episode {
        let mut last = step(1.0, 0.5, 1.0, Some(1.0));
        last.gamma = 0.0;
        Episode::new(1, vec![step(1.0, 0.5, 0.0, Some(0.5)), last]).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn lms_examples() {
        let mut s = step(1.0, 0.5, 1.0, None);
        s.gamma = 0.0;
        let one = Episode::new(1, vec![s]).unwrap();
        assert_eq!(offline_lms(&one, &[0.0]).unwrap()[1], vec![0.5]);
        assert_eq!(offline_lms(&worked(), &[0.0]).unwrap()[2], vec![0.75]);

        // Already-correct prediction with constant features.
        let steps = vec![
            Step { phi: vec![0.5, 2.0], ..step(0.0, 0.3, 0.0, None) },
            Step { phi: vec![0.5, 2.0], ..step(0.0, 0.3, 4.5, None) },
        ];
        let ep = Episode::new(2, steps).unwrap();
        let out = offline_lms(&ep, &[1.0, 2.0]).unwrap();
        assert_eq!(out[2], vec![1.0, 2.0]);

        let not_final = Episode::new(1, vec![step(1.0, 0.5, 0.3, None), step(1.0, 0.5, 1.0, None)]).unwrap();
        assert!(matches!(offline_lms(&not_final, &[0.0]), Err(Error::NotFinalOutcome(_))));
    }

    #[test]
    fn online_triangle_examples() {
        let tri = online_triangle(&worked(), &[0.0]).unwrap();
        assert_eq!(tri.get(1, 1), &[0.25]);
        assert_eq!(tri.get(2, 2), &[0.75]);
        for h in 0..=2 {
            assert_eq!(tri.get(0, h), &[0.0]);
        }
        assert_eq!(tri.row(2), offline_lms(&worked(), &[0.0]).unwrap());

        let mut ep = worked();
        ep.steps[0].z = None;
        ep.steps[1].z = None;
        assert!(matches!(online_triangle(&ep, &[0.0]), Err(Error::MissingInterimTargets)));
    }

    #[test]
    fn constant_interim_targets_reproduce_lms_prefixes() {
        let ep = Episode::new(
            2,
            vec![
                Step { phi: vec![1.0, 0.5], ..step(0.0, 0.3, 0.0, Some(2.0)) },
                Step { phi: vec![-0.2, 1.0], ..step(0.0, 0.4, 0.0, Some(2.0)) },
                Step { phi: vec![0.7, 0.7], gamma: 0.0, ..step(0.0, 0.2, 2.0, Some(2.0)) },
            ],
        )
        .unwrap();
        let tri = online_triangle(&ep, &[0.1, -0.1]).unwrap();
        let lms = offline_lms(&ep, &[0.1, -0.1]).unwrap();
        for h in 0..=3 {
            for t in 0..=h {
                assert_eq!(tri.get(t, h), lms[t].as_slice());
            }
        }
    }

    #[test]
    fn zero_step_size_leaves_everything_at_theta0() {
        let mut ep = worked();
        ep.steps.iter_mut().for_each(|s| s.alpha = 0.0);
        let tri = online_triangle(&ep, &[0.3]).unwrap();
        for h in 0..=2 {
            for t in 0..=h {
                assert_eq!(tri.get(t, h), &[0.3]);
            }
        }
    }

    #[test]
    fn trust_triangle_examples() {
        let (online, trusted) = trust_triangle(&worked(), &[0.0]).unwrap();
        assert_eq!(online, trusted);

        let mut ep = worked();
        ep.steps.iter_mut().for_each(|s| s.beta = 0.5);
        let (_, trusted) = trust_triangle(&ep, &[0.0]).unwrap();
        assert_eq!(trusted.get(1, 1), &[0.125]);

        let mut ep = worked();
        ep.steps[0].beta = 0.0;
        let (_, trusted) = trust_triangle(&ep, &[0.0]).unwrap();
        assert_eq!(trusted.get(1, 1), &[0.0]);
        assert_eq!(trusted.get(2, 2), &[0.75]);

        let mut ep = worked();
        ep.steps[0].beta = 1.5;
        assert!(trust_triangle(&ep, &[0.0]).is_err());
    }

    #[test]
    fn trusted_diagonal_is_running_blend_of_online_diagonal() {
        let ep = Episode::new(
            2,
            vec![
                Step { phi: vec![1.0, 0.5], beta: 0.3, ..step(0.0, 0.3, 0.0, Some(0.4)) },
                Step { phi: vec![-0.2, 1.0], beta: 0.8, ..step(0.0, 0.4, 0.0, Some(-1.0)) },
                Step { phi: vec![0.7, 0.7], beta: 0.6, gamma: 0.0, ..step(0.0, 0.2, 2.0, Some(2.0)) },
            ],
        )
        .unwrap();
        let (online, trusted) = trust_triangle(&ep, &[0.1, -0.1]).unwrap();
        for h in 0..3 {
            let b = ep.trust(h + 1);
            let expect: Vec<f64> = trusted
                .get(h, h)
                .iter()
                .zip(online.get(h + 1, h + 1))
                .map(|(bar, on)| (1.0 - b) * bar + b * on)
                .collect();
            assert!(close(trusted.get(h + 1, h + 1), &expect, 1e-12));
        }
    }

    #[test]
    fn lambda_triangle_reductions() {
        let ep = worked();
        assert_eq!(lambda_triangle(&ep, &[0.0]).unwrap(), online_triangle(&ep, &[0.0]).unwrap());

        let mut ep = Episode::new(
            2,
            vec![
                Step { phi: vec![1.0, 0.5], ..step(0.0, 0.3, 0.0, Some(0.4)) },
                Step { phi: vec![-0.2, 1.0], ..step(0.0, 0.4, 0.0, Some(-1.0)) },
                Step { phi: vec![0.7, 0.7], gamma: 0.0, ..step(0.0, 0.2, 2.0, Some(2.0)) },
            ],
        )
        .unwrap();
        ep.steps.iter_mut().for_each(|s| s.lambda = 0.0);
        let tri = lambda_triangle(&ep, &[0.1, -0.1]).unwrap();
        let z = ep.interim_targets().unwrap();
        let mut w = vec![0.1, -0.1];
        for t in 0..3 {
            let phi = ep.phi(t);
            let err = z[t + 1] - (phi[0] * w[0] + phi[1] * w[1]);
            w[0] += ep.alpha(t) * phi[0] * err;
            w[1] += ep.alpha(t) * phi[1] * err;
            assert!(close(tri.get(t + 1, t + 1), &w, 1e-15));
        }
    }

    #[test]
    fn general_examples() {
        // Final-outcome encoding with residuals equal to the interim targets.
        let mut ep = worked();
        ep.steps[0].v = Some(0.5);
        ep.steps[1].v = Some(1.0);
        let g = general_triangles(&ep, &[0.0]).unwrap();
        let online = online_triangle(&ep, &[0.0]).unwrap();
        assert_eq!(g.online.diagonal(), online.diagonal());
        assert_eq!(g.trusted.diagonal(), online.diagonal());

        // V_2 is multiplied by γ_2 = 0.
        ep.steps[1].v = Some(123.0);
        let g = general_triangles(&ep, &[0.0]).unwrap();
        assert_eq!(g.online.get(1, 1), &[0.25]);
        assert_eq!(g.online.get(2, 2), &[0.75]);
    }

    #[test]
    fn zero_discount_gives_one_step_supervised_updates() {
        let ep = Episode::new(
            2,
            vec![
                Step { phi: vec![1.0, 0.5], gamma: 0.0, lambda: 0.6, ..step(0.0, 0.3, 0.7, None) },
                Step { phi: vec![-0.2, 1.0], gamma: 0.0, lambda: 0.2, ..step(0.0, 0.4, -0.3, None) },
                Step { phi: vec![0.7, 0.7], gamma: 0.0, ..step(0.0, 0.2, 2.0, None) },
            ],
        )
        .unwrap();
        let g = general_triangles(&ep, &[0.1, -0.1]).unwrap();
        let mut w = vec![0.1, -0.1];
        for t in 0..3 {
            let phi = ep.phi(t);
            let err = ep.signal(t + 1) - (phi[0] * w[0] + phi[1] * w[1]);
            w[0] += ep.alpha(t) * phi[0] * err;
            w[1] += ep.alpha(t) * phi[1] * err;
            assert!(close(g.online.get(t + 1, t + 1), &w, 1e-15));
        }
    }

    #[test]
    fn oracle_work_grows_quadratically() {
        let steps: Vec<Step> = (0..40).map(|i| step(1.0 + i as f64 * 0.01, 0.1, 0.0, Some(0.5))).collect();
        let mut ep = Episode { n: 1, steps };
        let last = ep.steps.last_mut().unwrap();
        last.x = 0.5;
        last.gamma = 0.0;
        let tri = online_triangle(&ep, &[0.0]).unwrap();
        for h in 1..=40 {
            assert_eq!(tri.row_flops(h), 2 * h as u64);
        }
        assert_eq!(tri.total_flops(), 40 * 41);
    }
}
