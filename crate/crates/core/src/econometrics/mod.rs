//! Fixed-effects OLS and 2SLS with robust or clustered covariance, plus the
//! builders for the voting, entry and salary datasets.

mod binning;
mod datasets;
mod estimate;

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::io_create;
use crate::{Error, Result};

pub use binning::{binned_probability, equal_size_bins, write_bins_csv, BinRow};
pub use datasets::{
    build_entry_rows, build_salary_rows, build_voting_rows, circular_mean_minute, minute_task_counts,
    placebo_split, user_mean_minutes, EntryRows, EntryYear, MinuteTaskCount, SalaryRows, VotingPanel,
    PLACEBO_GAP_SECONDS,
};
pub use estimate::{fit_2sls, fit_ols_fe};

/// Name of the implicit constant column when no fixed effect is absorbed.
pub const INTERCEPT: &str = "(intercept)";

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    /// Categorical codes for fixed effects and clusters.
    Factor(Vec<u64>),
}

impl Column {
    fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Factor(v) => v.len(),
        }
    }
}

/// Column-oriented table of equal-length named columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Frame {
    n_rows: usize,
    names: Vec<String>,
    columns: Vec<Column>,
}

impl Frame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.n_rows
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn push(&mut self, name: &str, col: Column) -> Result<()> {
        if self.names.iter().any(|n| n == name) {
            return Err(Error::InvalidParameter(format!("duplicate column `{name}`")));
        }
        if !self.names.is_empty() && col.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows,
                got: col.len(),
            });
        }
        self.n_rows = col.len();
        self.names.push(name.to_string());
        self.columns.push(col);
        Ok(())
    }

    pub fn with_numeric(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        self.push(name, Column::Numeric(values))?;
        Ok(self)
    }

    pub fn with_factor(mut self, name: &str, codes: Vec<u64>) -> Result<Self> {
        self.push(name, Column::Factor(codes))?;
        Ok(self)
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        match self.column(name)? {
            Column::Numeric(v) => Ok(v),
            Column::Factor(_) => Err(Error::InvalidParameter(format!("column `{name}` is a factor"))),
        }
    }

    pub fn factor(&self, name: &str) -> Result<&[u64]> {
        match self.column(name)? {
            Column::Factor(v) => Ok(v),
            Column::Numeric(_) => Err(Error::InvalidParameter(format!("column `{name}` is numeric"))),
        }
    }

    /// Rows at the given positions, in that order.
    pub fn take(&self, rows: &[usize]) -> Frame {
        Frame {
            n_rows: rows.len(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| match c {
                    Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
                    Column::Factor(v) => Column::Factor(rows.iter().map(|&i| v[i]).collect()),
                })
                .collect(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = io_create(path)?;
        let io = |e| Error::io(path, e);
        writeln!(w, "{}", self.names.join(",")).map_err(io)?;
        let mut line = String::new();
        for i in 0..self.n_rows {
            line.clear();
            for (k, c) in self.columns.iter().enumerate() {
                if k > 0 {
                    line.push(',');
                }
                match c {
                    Column::Numeric(v) => line.push_str(&v[i].to_string()),
                    Column::Factor(v) => line.push_str(&v[i].to_string()),
                }
            }
            writeln!(w, "{line}").map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// A linear model: outcome, regressors, up to two absorbed fixed effects,
/// optional cluster factor and optional instruments for 2SLS.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegressionSpec {
    pub outcome: String,
    /// All right-hand-side variables, endogenous ones included.
    pub regressors: Vec<String>,
    pub fixed_effects: Vec<String>,
    pub cluster: Option<String>,
    /// Subset of `regressors` instrumented in 2SLS.
    pub endogenous: Vec<String>,
    /// Excluded instruments.
    pub instruments: Vec<String>,
}

impl RegressionSpec {
    pub fn new(outcome: &str, regressors: &[&str]) -> Self {
        RegressionSpec {
            outcome: outcome.into(),
            regressors: regressors.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn fixed_effects(mut self, fe: &[&str]) -> Self {
        self.fixed_effects = fe.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn cluster(mut self, factor: &str) -> Self {
        self.cluster = Some(factor.into());
        self
    }

    pub fn instrument(mut self, endogenous: &[&str], instruments: &[&str]) -> Self {
        self.endogenous = endogenous.iter().map(|s| s.to_string()).collect();
        self.instruments = instruments.iter().map(|s| s.to_string()).collect();
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.fixed_effects.len() > 2 {
            return Err(Error::InvalidParameter("at most two fixed-effect factors".into()));
        }
        for e in &self.endogenous {
            if !self.regressors.contains(e) {
                return Err(Error::InvalidParameter(format!("endogenous `{e}` is not a regressor")));
            }
        }
        for z in &self.instruments {
            if self.regressors.contains(z) {
                return Err(Error::InvalidParameter(format!("instrument `{z}` is also a regressor")));
            }
        }
        Ok(())
    }
}

/// Coefficients, covariance and fit statistics of one estimated model.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub names: Vec<String>,
    pub coefficients: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub n_obs: usize,
    pub r2: f64,
    /// R² of the demeaned model; present when fixed effects are absorbed.
    pub within_r2: Option<f64>,
    /// Smallest first-stage F over endogenous regressors (2SLS only).
    pub first_stage_f: Option<f64>,
    pub n_clusters: Option<usize>,
    /// Degrees of freedom for t-based inference.
    pub df: usize,
    /// Absorbed fixed-effect parameters.
    pub fe_dof: usize,
    pub residuals: Vec<f64>,
    pub warnings: Vec<String>,
}

impl EstimationResult {
    pub fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn coef(&self, name: &str) -> Result<f64> {
        Ok(self.coefficients[self.index(name)?])
    }

    pub fn se(&self, name: &str) -> Result<f64> {
        let i = self.index(name)?;
        Ok(self.covariance[(i, i)].max(0.0).sqrt())
    }

    pub fn t_stat(&self, name: &str) -> Result<f64> {
        Ok(self.coef(name)? / self.se(name)?)
    }

    fn t_dist(&self) -> StudentsT {
        StudentsT::new(0.0, 1.0, self.df.max(1) as f64).expect("positive degrees of freedom")
    }

    /// Two-sided p-value of the t statistic.
    pub fn p_value(&self, name: &str) -> Result<f64> {
        let t = self.t_stat(name)?;
        if !t.is_finite() {
            return Ok(if t.is_nan() { 1.0 } else { 0.0 });
        }
        Ok(2.0 * (1.0 - self.t_dist().cdf(t.abs())))
    }

    /// Equal-tailed confidence interval at `level` (e.g. 0.95).
    pub fn conf_int(&self, name: &str, level: f64) -> Result<(f64, f64)> {
        let q = self.t_dist().inverse_cdf(0.5 + level / 2.0);
        let (b, s) = (self.coef(name)?, self.se(name)?);
        Ok((b - q * s, b + q * s))
    }

    pub fn report(&self, name: &str) -> ModelReport {
        ModelReport {
            name: name.to_string(),
            coefficients: self
                .names
                .iter()
                .map(|n| {
                    let p = self.p_value(n).unwrap_or(1.0);
                    CoefficientReport {
                        name: n.clone(),
                        estimate: self.coef(n).unwrap_or(f64::NAN),
                        se: self.se(n).unwrap_or(f64::NAN),
                        p_value: p,
                        stars: stars(p).to_string(),
                    }
                })
                .collect(),
            n: self.n_obs,
            r2: self.r2,
            within_r2: self.within_r2,
            first_stage_f: self.first_stage_f,
            warnings: self.warnings.clone(),
        }
    }
}

/// Significance stars at the 1%, 5% and 10% levels.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub p_value: f64,
    pub stars: String,
}

/// One column of a regression table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub name: String,
    pub coefficients: Vec<CoefficientReport>,
    pub n: usize,
    pub r2: f64,
    pub within_r2: Option<f64>,
    pub first_stage_f: Option<f64>,
    pub warnings: Vec<String>,
}

pub fn write_results_json(path: &Path, models: &[ModelReport]) -> Result<()> {
    let mut w = io_create(path)?;
    serde_json::to_writer_pretty(&mut w, &serde_json::json!({ "models": models }))?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
