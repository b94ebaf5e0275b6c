//! Equal-size score bins with normal-approximation confidence intervals.

use std::io::Write;
use std::path::Path;

use super::Frame;
use crate::corpus::io_create;
use crate::{Error, Result};

const Z95: f64 = 1.96;

/// One score bin: `p̂ = d/n`, `σ̂ = sqrt(p̂(1−p̂)/n)`, CI `p̂ ± 1.96 σ̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinRow {
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
    pub mean_score: f64,
    pub n: usize,
    pub successes: usize,
    pub p_hat: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Sorts observations by score (ties by input position) and cuts them into
/// `bins` consecutive groups whose sizes differ by at most one.
pub fn equal_size_bins(scores: &[f64], outcomes: &[bool], bins: usize) -> Result<Vec<BinRow>> {
    let n = scores.len();
    if outcomes.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: outcomes.len(),
        });
    }
    if bins == 0 || n < bins {
        return Err(Error::InvalidParameter(format!("{n} observations for {bins} bins")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidParameter("non-finite score".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    Ok((0..bins)
        .map(|b| {
            let members = &order[b * n / bins..(b + 1) * n / bins];
            let m = members.len();
            let d = members.iter().filter(|&&i| outcomes[i]).count();
            let p = d as f64 / m as f64;
            let se = (p * (1.0 - p) / m as f64).sqrt();
            BinRow {
                bin: b,
                lo: scores[members[0]],
                hi: scores[members[m - 1]],
                mean_score: members.iter().map(|&i| scores[i]).sum::<f64>() / m as f64,
                n: m,
                successes: d,
                p_hat: p,
                se,
                ci_lo: p - Z95 * se,
                ci_hi: p + Z95 * se,
            }
        })
        .collect())
}

/// Bins rows of `frame` by a numeric score column; the outcome column is
/// read as binary (nonzero = success). A constant score is an error.
pub fn binned_probability(frame: &Frame, score: &str, outcome: &str, bins: usize) -> Result<Vec<BinRow>> {
    let s = frame.numeric(score)?;
    let y: Vec<bool> = frame.numeric(outcome)?.iter().map(|&v| v != 0.0).collect();
    if s.len() < bins {
        return Err(Error::InvalidParameter(format!("{} rows for {bins} bins", s.len())));
    }
    if s.iter().all(|&v| v == s[0]) {
        return Err(Error::InvalidParameter(format!("score column `{score}` is constant")));
    }
    equal_size_bins(s, &y, bins)
}

/// `bin,lo,hi,n,p_hat,ci_lo,ci_hi`.
pub fn write_bins_csv(path: &Path, bins: &[BinRow]) -> Result<()> {
    let mut w = io_create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "bin,lo,hi,n,p_hat,ci_lo,ci_hi").map_err(io)?;
    for b in bins {
        writeln!(w, "{},{},{},{},{},{},{}", b.bin, b.lo, b.hi, b.n, b.p_hat, b.ci_lo, b.ci_hi).map_err(io)?;
    }
    w.flush().map_err(io)
}
