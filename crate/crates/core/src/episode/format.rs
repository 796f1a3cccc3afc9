//! Line-oriented episode files.
//!
//! ```text
//! #spanless-episode v1 n=<int>
//! t  phi[0] … phi[n-1]  x  gamma  lambda  alpha  beta  v  z
//! ```
//!
//! Fields are tab-separated. Line `t` carries `φ_t`, `α_t` and the quantities
//! arriving at `t+1`. `v` and `z` may be `_`. A blank line ends an episode.
//! Time keeps counting across episodes. Other lines starting with `#` are
//! comments.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Episode, Step};
use crate::error::{Error, Result};

pub const HEADER_PREFIX: &str = "#spanless-episode v1";

fn fmt_f64(out: &mut String, v: f64) {
    // `{:?}` is the shortest decimal that parses back to the same bits.
    let _ = write!(out, "{v:?}");
}

/// Renders episodes to the text format. An empty list renders as an empty string.
pub fn render_episodes(episodes: &[Episode]) -> Result<String> {
    let mut out = String::new();
    let Some(first) = episodes.first() else {
        return Ok(out);
    };
    let n = first.n;
    let _ = writeln!(out, "{HEADER_PREFIX} n={n}");
    let mut t_global = 0usize;
    for (i, ep) in episodes.iter().enumerate() {
        if ep.n != n {
            return Err(Error::Dimension { what: "episode feature dimension", expected: n, actual: ep.n });
        }
        ep.validate()?;
        if i > 0 {
            out.push('\n');
        }
        for s in &ep.steps {
            let _ = write!(out, "{t_global}");
            for &p in &s.phi {
                out.push('\t');
                fmt_f64(&mut out, p);
            }
            for v in [s.x, s.gamma, s.lambda, s.alpha, s.beta] {
                out.push('\t');
                fmt_f64(&mut out, v);
            }
            for opt in [s.v, s.z] {
                out.push('\t');
                match opt {
                    Some(v) => fmt_f64(&mut out, v),
                    None => out.push('_'),
                }
            }
            out.push('\n');
            t_global += 1;
        }
    }
    Ok(out)
}

pub fn write_episodes(path: impl AsRef<Path>, episodes: &[Episode]) -> Result<()> {
    fs::write(path, render_episodes(episodes)?)?;
    Ok(())
}

pub fn read_episodes(path: impl AsRef<Path>) -> Result<Vec<Episode>> {
    parse_episodes(&fs::read_to_string(path)?)
}

struct LineCtx {
    line: usize,
}

impl LineCtx {
    fn err(&self, field: impl Into<String>, reason: impl Into<String>) -> Error {
        Error::Parse { line: self.line, field: field.into(), reason: reason.into() }
    }

    fn float(&self, field: &str, text: &str) -> Result<f64> {
        let v: f64 = text
            .parse()
            .map_err(|_| self.err(field, format!("not a number: `{text}`")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(field, format!("non-finite value `{text}`")))
        }
    }

    fn unit(&self, field: &str, text: &str) -> Result<f64> {
        let v = self.float(field, text)?;
        if (0.0..=1.0).contains(&v) {
            Ok(v)
        } else {
            Err(self.err(field, format!("{field} out of range: {v}")))
        }
    }

    fn optional(&self, field: &str, text: &str) -> Result<Option<f64>> {
        if text == "_" {
            Ok(None)
        } else {
            self.float(field, text).map(Some)
        }
    }
}

fn parse_header(ctx: &LineCtx, line: &str) -> Result<usize> {
    let rest = line
        .strip_prefix(HEADER_PREFIX)
        .ok_or_else(|| ctx.err("header", format!("expected `{HEADER_PREFIX} n=<int>`")))?;
    let n_text = rest
        .trim()
        .strip_prefix("n=")
        .ok_or_else(|| ctx.err("n", "missing `n=`"))?;
    let n: usize = n_text
        .parse()
        .map_err(|_| ctx.err("n", format!("not a positive integer: `{n_text}`")))?;
    if n == 0 {
        return Err(ctx.err("n", "feature dimension must be positive"));
    }
    Ok(n)
}

fn finish(ctx: &LineCtx, n: usize, steps: &mut Vec<Step>, out: &mut Vec<Episode>) -> Result<()> {
    if steps.is_empty() {
        return Ok(());
    }
    let ep = Episode { n, steps: std::mem::take(steps) };
    ep.validate().map_err(|e| ctx.err("episode", e.to_string()))?;
    out.push(ep);
    Ok(())
}

/// Parses the text format. Empty input yields an empty list.
pub fn parse_episodes(text: &str) -> Result<Vec<Episode>> {
    let mut episodes = Vec::new();
    let mut n: Option<usize> = None;
    let mut steps: Vec<Step> = Vec::new();
    let mut expected_t = 0usize;
    let mut ctx = LineCtx { line: 0 };

    for (i, raw) in text.lines().enumerate() {
        ctx.line = i + 1;
        let line = raw.trim_end_matches('\r');
        let Some(dim) = n else {
            if line.trim().is_empty() {
                continue;
            }
            n = Some(parse_header(&ctx, line)?);
            continue;
        };
        if line.trim().is_empty() {
            finish(&ctx, dim, &mut steps, &mut episodes)?;
            continue;
        }
        if line.starts_with('#') {
            if line.starts_with(HEADER_PREFIX) {
                let other = parse_header(&ctx, line)?;
                if other != dim {
                    return Err(ctx.err("n", format!("dimension mismatch: header says {other}, file started with {dim}")));
                }
            }
            continue;
        }

        let fields: Vec<&str> = line.split('\t').collect();
        let expected_fields = 1 + dim + 7;
        if fields.len() != expected_fields {
            return Err(ctx.err(
                "record",
                format!("dimension mismatch: expected {expected_fields} fields for n={dim}, found {}", fields.len()),
            ));
        }
        let t: usize = fields[0]
            .parse()
            .map_err(|_| ctx.err("t", format!("not an integer: `{}`", fields[0])))?;
        if t != expected_t {
            return Err(ctx.err("t", format!("expected time {expected_t}, found {t}")));
        }
        expected_t += 1;
        let phi = (0..dim)
            .map(|k| ctx.float(&format!("phi[{k}]"), fields[1 + k]))
            .collect::<Result<Vec<_>>>()?;
        let rest = &fields[1 + dim..];
        let x = ctx.float("x", rest[0])?;
        let gamma = ctx.unit("gamma", rest[1])?;
        let lambda = ctx.unit("lambda", rest[2])?;
        let alpha = ctx.float("alpha", rest[3])?;
        if alpha <= 0.0 {
            return Err(ctx.err("alpha", format!("alpha must be positive: {alpha}")));
        }
        let beta = ctx.unit("beta", rest[4])?;
        let v = ctx.optional("v", rest[5])?;
        let z = ctx.optional("z", rest[6])?;
        steps.push(Step { phi, alpha, x, gamma, lambda, beta, v, z });
    }
    if let Some(dim) = n {
        ctx.line += 1;
        finish(&ctx, dim, &mut steps, &mut episodes)?;
    }
    Ok(episodes)
}
