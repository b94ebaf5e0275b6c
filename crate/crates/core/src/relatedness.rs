//! Task co-occurrence, clipped PMI relatedness with Dirichlet credible
//! intervals, and relatedness densities.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::activity::UserTaskMatrix;
use crate::corpus::{io_create, io_open};
use crate::{Error, Result};

/// Symmetric task × task counts `C = B Bᵀ` with `B = (T > 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceCounts {
    pub counts: DMatrix<u64>,
}

impl CooccurrenceCounts {
    pub fn from_matrix(counts: DMatrix<u64>) -> Result<Self> {
        if counts.nrows() != counts.ncols() {
            return Err(Error::DimensionMismatch {
                expected: counts.nrows(),
                got: counts.ncols(),
            });
        }
        if counts != counts.transpose() {
            return Err(Error::InvalidParameter("co-occurrence counts must be symmetric".into()));
        }
        Ok(CooccurrenceCounts { counts })
    }

    pub fn n_tasks(&self) -> usize {
        self.counts.nrows()
    }

    /// Sum over all cells, diagonal included.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Counts from any collection of active-task sets (one per user or job).
pub fn cooccurrence_from_sets<'a>(n_tasks: usize, sets: impl IntoIterator<Item = &'a [u32]>) -> CooccurrenceCounts {
    let mut c = DMatrix::<u64>::zeros(n_tasks, n_tasks);
    for set in sets {
        for (a, &i) in set.iter().enumerate() {
            c[(i as usize, i as usize)] += 1;
            for &j in &set[a + 1..] {
                c[(i as usize, j as usize)] += 1;
                c[(j as usize, i as usize)] += 1;
            }
        }
    }
    CooccurrenceCounts { counts: c }
}

pub fn cooccurrence_counts(t: &UserTaskMatrix) -> Result<CooccurrenceCounts> {
    if t.n_users() == 0 || t.n_tasks() == 0 {
        return Err(Error::EmptyInput("empty user-task matrix".into()));
    }
    let sets: Vec<Vec<u32>> = (0..t.n_users())
        .map(|j| t.column(j).iter().map(|&(task, _)| task).collect())
        .collect();
    Ok(cooccurrence_from_sets(t.n_tasks(), sets.iter().map(Vec::as_slice)))
}

/// Where a relatedness matrix came from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub sample: String,
    pub window: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CredibleIntervals {
    pub lo: DMatrix<f64>,
    pub hi: DMatrix<f64>,
}

/// Clipped PMI relatedness.
#[derive(Debug, Clone, PartialEq)]
pub struct RelatednessMatrix {
    pub values: DMatrix<f64>,
    /// Intervals on the unclipped PMI.
    pub intervals: Option<CredibleIntervals>,
    pub provenance: Provenance,
}

impl RelatednessMatrix {
    pub fn from_values(values: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::DimensionMismatch {
                expected: values.nrows(),
                got: values.ncols(),
            });
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || values != values.transpose() {
            return Err(Error::InvalidParameter("relatedness must be symmetric, finite and nonnegative".into()));
        }
        Ok(RelatednessMatrix {
            values,
            intervals: None,
            provenance,
        })
    }

    pub fn n_tasks(&self) -> usize {
        self.values.nrows()
    }

    /// Row sums `Σ_τ R_θτ`.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_tasks()).map(|i| self.values.row(i).sum()).collect()
    }

    /// Checks that the matrix was built from `sample`.
    pub fn require_sample(&self, sample: &str) -> Result<()> {
        if self.provenance.sample != sample {
            return Err(Error::Provenance(format!(
                "relatedness built from `{}`, expected `{sample}`",
                self.provenance.sample
            )));
        }
        Ok(())
    }
}

fn pmi_cell(p_ij: f64, p_i: f64, p_j: f64) -> f64 {
    if p_ij > 0.0 {
        (p_ij / (p_i * p_j)).ln()
    } else {
        0.0
    }
}

/// `R_θκ = max(0, ln(p_θκ / (p_θ p_κ)))` with `p = C / ΣC` and marginals
/// summed over full rows, diagonal included. Zero cells give 0.
pub fn pmi_matrix(c: &CooccurrenceCounts) -> Result<RelatednessMatrix> {
    let total = c.total();
    if total == 0 {
        return Err(Error::EmptyInput("co-occurrence total is zero".into()));
    }
    let n = c.n_tasks();
    let total = total as f64;
    let marg: Vec<f64> = (0..n)
        .map(|i| c.counts.row(i).iter().sum::<u64>() as f64 / total)
        .collect();
    let mut values = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = pmi_cell(c.counts[(i, j)] as f64 / total, marg[i], marg[j]).max(0.0);
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    Ok(RelatednessMatrix {
        values,
        intervals: None,
        provenance: Provenance::default(),
    })
}

/// Upper-triangle cells processed per pass over the posterior draws.
const CELL_CHUNK: usize = 8192;

fn quantile_sorted(xs: &[f64], q: f64) -> f64 {
    let h = (xs.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
}

/// 95% equal-tailed credible intervals of unclipped PMI.
///
/// The upper-triangle cells (diagonal included) get a joint
/// `Dirichlet(prior_alpha + C)` posterior, sampled through independent
/// gamma variates; each draw is mirrored into a symmetric probability
/// matrix before computing PMI. Draw `d` uses ChaCha stream `d` of `seed`,
/// so results do not depend on chunking.
pub fn pmi_credible_intervals(
    c: &CooccurrenceCounts,
    draws: usize,
    prior_alpha: f64,
    seed: u64,
) -> Result<CredibleIntervals> {
    if draws < 100 {
        return Err(Error::InvalidParameter(format!("draws must be at least 100, got {draws}")));
    }
    if !(prior_alpha > 0.0 && prior_alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("prior_alpha must be positive, got {prior_alpha}")));
    }
    let n = c.n_tasks();
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let gammas: Vec<Gamma<f64>> = cells
        .iter()
        .map(|&(i, j)| Gamma::new(prior_alpha + c.counts[(i, j)] as f64, 1.0).expect("positive shape"))
        .collect();
    let mut lo = DMatrix::<f64>::zeros(n, n);
    let mut hi = DMatrix::<f64>::zeros(n, n);
    let mut g = vec![0.0f64; cells.len()];
    let mut marg = vec![0.0f64; n];
    for chunk_start in (0..cells.len()).step_by(CELL_CHUNK) {
        let chunk_end = (chunk_start + CELL_CHUNK).min(cells.len());
        let width = chunk_end - chunk_start;
        let mut samples = vec![0.0f64; width * draws];
        for d in 0..draws {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(d as u64);
            for (x, dist) in g.iter_mut().zip(&gammas) {
                *x = dist.sample(&mut rng);
            }
            marg.iter_mut().for_each(|m| *m = 0.0);
            let mut total = 0.0;
            for (&(i, j), &x) in cells.iter().zip(&g) {
                if i == j {
                    marg[i] += x;
                    total += x;
                } else {
                    marg[i] += x;
                    marg[j] += x;
                    total += 2.0 * x;
                }
            }
            for k in 0..width {
                let (i, j) = cells[chunk_start + k];
                let p = g[chunk_start + k] / total;
                samples[k * draws + d] = pmi_cell(p, marg[i] / total, marg[j] / total);
            }
        }
        for k in 0..width {
            let s = &mut samples[k * draws..(k + 1) * draws];
            s.sort_by(f64::total_cmp);
            let (i, j) = cells[chunk_start + k];
            let (l, h) = (quantile_sorted(s, 0.025), quantile_sorted(s, 0.975));
            lo[(i, j)] = l;
            lo[(j, i)] = l;
            hi[(i, j)] = h;
            hi[(j, i)] = h;
        }
    }
    Ok(CredibleIntervals { lo, hi })
}

/// Row-normalized relatedness weights `R_θκ / Σ_τ R_θτ`; isolated rows stay zero.
pub fn row_normalized(r: &RelatednessMatrix) -> DMatrix<f64> {
    let mut w = r.values.clone();
    for (i, s) in r.row_sums().into_iter().enumerate() {
        if s > 0.0 {
            w.row_mut(i).iter_mut().for_each(|v| *v /= s);
        }
    }
    w
}

/// `D_θ = Σ_κ (R_θκ / Σ_τ R_θτ) x_κ`.
pub fn density(r: &RelatednessMatrix, x: &[f64], theta: u32) -> Result<f64> {
    let n = r.n_tasks();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    let row = r.values.row(theta as usize);
    let s: f64 = row.iter().sum();
    if s <= 0.0 {
        return Err(Error::IsolatedTask(theta));
    }
    Ok(row.iter().zip(x).map(|(w, v)| (w / s) * v).sum())
}

/// Densities for all tasks from precomputed row-normalized weights;
/// `None` for isolated tasks.
pub fn densities(weights: &DMatrix<f64>, row_sums: &[f64], x: &[f64]) -> Vec<Option<f64>> {
    (0..weights.nrows())
        .map(|i| {
            (row_sums[i] > 0.0).then(|| weights.row(i).iter().zip(x).map(|(w, v)| w * v).sum())
        })
        .collect()
}

/// `relatedness.csv`: one row per unordered pair `a ≤ b`. The PMI column is
/// clipped; intervals (when present) are unclipped.
pub fn write_relatedness_csv(path: &Path, r: &RelatednessMatrix) -> Result<()> {
    let mut w = io_create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "task_a,task_b,pmi,ci_lo,ci_hi").map_err(io)?;
    let n = r.n_tasks();
    for i in 0..n {
        for j in i..n {
            let v = r.values[(i, j)];
            match &r.intervals {
                Some(ci) => writeln!(w, "{i},{j},{v},{},{}", ci.lo[(i, j)], ci.hi[(i, j)]),
                None => writeln!(w, "{i},{j},{v},,"),
            }
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

#[derive(Deserialize)]
struct RelRow {
    task_a: usize,
    task_b: usize,
    pmi: f64,
    ci_lo: Option<f64>,
    ci_hi: Option<f64>,
}

/// Reads `relatedness.csv` back into a matrix of `n_tasks` tasks.
pub fn read_relatedness_csv(path: &Path, n_tasks: usize, provenance: Provenance) -> Result<RelatednessMatrix> {
    let mut rdr = csv::Reader::from_reader(io_open(path)?);
    let mut values = DMatrix::<f64>::zeros(n_tasks, n_tasks);
    let mut lo = DMatrix::<f64>::zeros(n_tasks, n_tasks);
    let mut hi = DMatrix::<f64>::zeros(n_tasks, n_tasks);
    let mut has_ci = true;
    for row in rdr.deserialize::<RelRow>() {
        let row = row?;
        if row.task_a >= n_tasks || row.task_b >= n_tasks {
            return Err(Error::DimensionMismatch {
                expected: n_tasks,
                got: row.task_a.max(row.task_b) + 1,
            });
        }
        for (a, b) in [(row.task_a, row.task_b), (row.task_b, row.task_a)] {
            values[(a, b)] = row.pmi;
            match (row.ci_lo, row.ci_hi) {
                (Some(l), Some(h)) => {
                    lo[(a, b)] = l;
                    hi[(a, b)] = h;
                }
                _ => has_ci = false,
            }
        }
    }
    let mut r = RelatednessMatrix::from_values(values, provenance)?;
    if has_ci {
        r.intervals = Some(CredibleIntervals { lo, hi });
    }
    Ok(r)
}

/// Edge list of positive off-diagonal relatedness for external layout tools.
pub fn write_network_csv(path: &Path, r: &RelatednessMatrix) -> Result<()> {
    let mut w = io_create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "source,target,weight").map_err(io)?;
    let n = r.n_tasks();
    for i in 0..n {
        for j in i + 1..n {
            if r.values[(i, j)] > 0.0 {
                writeln!(w, "{i},{j},{}", r.values[(i, j)]).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}
