//! Draw dumps: tab-separated, one record per retained iteration.
//!
//! ```text
//! # bayes-cfa draws seed=42 burn_in=10000 chains=1
//! #spec factors 2
//! #spec variables 8
//! #spec L[3,1] = 0
//! ...
//! mu[1] ... mu[p]  L[1,1] ... L[p,1] L[1,2] ... L[p,m]  psi[1] ... psi[p]  phi[2,1] phi[3,1] phi[3,2] ...
//! ```
//!
//! Loadings are stacked column by column; factor correlations are the strict
//! lower triangle, row by row (the diagonal is always 1). Values are written
//! in shortest round-trip form, so reading a dump reproduces it bit-exactly.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::types::{FactorParams, PosteriorDraws, UcfmSpec};

fn header(p: usize, m: usize) -> Vec<String> {
    let mut cols: Vec<String> = (1..=p).map(|j| format!("mu[{j}]")).collect();
    for k in 1..=m {
        cols.extend((1..=p).map(|j| format!("L[{j},{k}]")));
    }
    cols.extend((1..=p).map(|j| format!("psi[{j}]")));
    for k in 2..=m {
        cols.extend((1..k).map(|l| format!("phi[{k},{l}]")));
    }
    cols
}

pub fn write_draws(draws: &PosteriorDraws) -> String {
    let (p, m) = (draws.spec.p(), draws.spec.m());
    let mut out = format!(
        "# bayes-cfa draws seed={} burn_in={} chains={}\n",
        draws.seed, draws.burn_in, draws.chains
    );
    for line in draws.spec.to_text().lines() {
        let _ = writeln!(out, "#spec {line}");
    }
    out.push_str(&header(p, m).join("\t"));
    out.push('\n');
    let mut fields: Vec<String> = Vec::new();
    for d in &draws.draws {
        fields.clear();
        fields.extend(d.mu.iter().map(f64::to_string));
        fields.extend(d.lambda.iter().map(f64::to_string));
        fields.extend(d.psi.iter().map(f64::to_string));
        for k in 1..m {
            fields.extend((0..k).map(|l| d.phi[(k, l)].to_string()));
        }
        out.push_str(&fields.join("\t"));
        out.push('\n');
    }
    out
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::Data(format!("draw dump line {line}: {}", msg.into()))
}

pub fn read_draws(text: &str) -> Result<PosteriorDraws> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let meta = first
        .strip_prefix("# bayes-cfa draws")
        .ok_or_else(|| bad(1, "missing `# bayes-cfa draws` header"))?;
    let mut seed = None;
    let mut burn_in = None;
    let mut chains = None;
    for kv in meta.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| bad(1, format!("malformed `{kv}`")))?;
        let parsed = v.parse::<u64>().map_err(|_| bad(1, format!("malformed `{kv}`")))?;
        match k {
            "seed" => seed = Some(parsed),
            "burn_in" => burn_in = Some(parsed as usize),
            "chains" => chains = Some(parsed as usize),
            _ => return Err(bad(1, format!("unknown key `{k}`"))),
        }
    }
    let mut spec_text = String::new();
    let mut columns = None;
    for (no, line) in lines.by_ref() {
        if let Some(rest) = line.strip_prefix("#spec ") {
            spec_text.push_str(rest);
            spec_text.push('\n');
        } else {
            columns = Some((no, line));
            break;
        }
    }
    let spec = UcfmSpec::from_text(&spec_text).map_err(|e| bad(2, format!("spec: {e}")))?;
    let (p, m) = (spec.p(), spec.m());
    let (no, cols) = columns.ok_or_else(|| bad(2, "missing column header"))?;
    let expected = header(p, m);
    if cols.split('\t').ne(expected.iter().map(String::as_str)) {
        return Err(bad(no, "column header does not match the spec dimensions"));
    }
    let mut draws = Vec::new();
    for (no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split('\t')
            .map(|f| f.parse::<f64>().map_err(|_| bad(no, format!("`{f}` is not a number"))))
            .collect::<Result<_>>()?;
        if vals.len() != expected.len() {
            return Err(bad(no, format!("{} fields, expected {}", vals.len(), expected.len())));
        }
        let (mu, rest) = vals.split_at(p);
        let (lam, rest) = rest.split_at(p * m);
        let (psi, lower) = rest.split_at(p);
        let mut phi = DMatrix::identity(m, m);
        let mut idx = 0;
        for k in 1..m {
            for l in 0..k {
                phi[(k, l)] = lower[idx];
                phi[(l, k)] = lower[idx];
                idx += 1;
            }
        }
        draws.push(FactorParams {
            mu: DVector::from_column_slice(mu),
            lambda: DMatrix::from_column_slice(p, m, lam),
            psi: DVector::from_column_slice(psi),
            phi,
        });
    }
    Ok(PosteriorDraws {
        spec,
        draws,
        factor_scores: None,
        seed: seed.ok_or_else(|| bad(1, "missing seed"))?,
        burn_in: burn_in.ok_or_else(|| bad(1, "missing burn_in"))?,
        chains: chains.ok_or_else(|| bad(1, "missing chains"))?,
    })
}
