//! Fixed-effect absorption, least squares and the covariance estimators.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::{DMatrix, DVector};

use super::{EstimationResult, Frame, RegressionSpec, INTERCEPT};
use crate::{Error, Result};

const FE_TOL: f64 = 1e-10;
const FE_MAX_ITER: usize = 10_000;
const COLLINEAR_TOL: f64 = 1e-10;

/// Dense group codes `0..G` for a factor column, by first appearance.
fn encode(codes: &[u64]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    let mut out = Vec::with_capacity(codes.len());
    for &c in codes {
        let next = map.len();
        out.push(*map.entry(c).or_insert(next));
    }
    (out, map.len())
}

/// Within-transformation for up to two factors.
struct Absorber {
    factors: Vec<(Vec<usize>, Vec<f64>)>,
}

impl Absorber {
    fn new(frame: &Frame, names: &[String]) -> Result<Self> {
        let mut factors = Vec::new();
        for name in names {
            let (g, n_groups) = encode(frame.factor(name)?);
            let mut counts = vec![0.0; n_groups];
            for &k in &g {
                counts[k] += 1.0;
            }
            factors.push((g, counts));
        }
        Ok(Absorber { factors })
    }

    /// Parameters absorbed, assuming the two factors form one connected set.
    fn dof(&self) -> usize {
        match self.factors.len() {
            0 => 0,
            1 => self.factors[0].1.len(),
            _ => self.factors.iter().map(|f| f.1.len()).sum::<usize>() - 1,
        }
    }

    fn demean_once(v: &mut [f64], groups: &[usize], counts: &[f64]) -> f64 {
        let mut sums = vec![0.0; counts.len()];
        for (x, &g) in v.iter().zip(groups) {
            sums[g] += x;
        }
        let mut change = 0.0f64;
        for (x, &g) in v.iter_mut().zip(groups) {
            let m = sums[g] / counts[g];
            *x -= m;
            change = change.max(m.abs());
        }
        change
    }

    fn demean(&self, v: &mut [f64]) -> Result<()> {
        match self.factors.as_slice() {
            [] => Ok(()),
            [(g, c)] => {
                Self::demean_once(v, g, c);
                Ok(())
            }
            _ => {
                for _ in 0..FE_MAX_ITER {
                    let mut change = 0.0f64;
                    for (g, c) in &self.factors {
                        change = change.max(Self::demean_once(v, g, c));
                    }
                    if change < FE_TOL {
                        return Ok(());
                    }
                }
                warn!("fixed-effect absorption did not converge in {FE_MAX_ITER} iterations");
                Ok(())
            }
        }
    }
}

/// Names of columns that are (numerically) linear combinations of earlier
/// columns, by modified Gram–Schmidt against each column's raw norm.
fn collinear_columns(x: &DMatrix<f64>, raw_norms: &[f64], names: &[String]) -> Vec<String> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..x.ncols() {
        let mut v = x.column(j).into_owned();
        for q in &basis {
            let p = q.dot(&v);
            v.axpy(-p, q, 1.0);
        }
        let norm = v.norm();
        if norm <= COLLINEAR_TOL.sqrt() * raw_norms[j].max(f64::MIN_POSITIVE) || norm == 0.0 {
            bad.push(names[j].clone());
        } else {
            basis.push(v / norm);
        }
    }
    bad
}

struct Design {
    y: DVector<f64>,
    y_raw: Vec<f64>,
    x: DMatrix<f64>,
    names: Vec<String>,
    absorber: Absorber,
}

fn column_vec(frame: &Frame, name: &str) -> Result<Vec<f64>> {
    if name == INTERCEPT {
        return Ok(vec![1.0; frame.len()]);
    }
    Ok(frame.numeric(name)?.to_vec())
}

/// Demeaned matrix of the named columns plus their raw norms.
fn absorbed(frame: &Frame, names: &[String], absorber: &Absorber) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = frame.len();
    let mut x = DMatrix::<f64>::zeros(n, names.len());
    let mut norms = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let mut v = column_vec(frame, name)?;
        norms.push(v.iter().map(|a| a * a).sum::<f64>().sqrt());
        absorber.demean(&mut v)?;
        x.set_column(j, &DVector::from_vec(v));
    }
    Ok((x, norms))
}

fn design(frame: &Frame, spec: &RegressionSpec, names: Vec<String>) -> Result<Design> {
    spec.validate()?;
    if frame.is_empty() {
        return Err(Error::EmptyInput("regression frame has no rows".into()));
    }
    let absorber = Absorber::new(frame, &spec.fixed_effects)?;
    let y_raw = frame.numeric(&spec.outcome)?.to_vec();
    let mut y = y_raw.clone();
    absorber.demean(&mut y)?;
    let (x, norms) = absorbed(frame, &names, &absorber)?;
    let bad = collinear_columns(&x, &norms, &names);
    if !bad.is_empty() {
        return Err(Error::RankDeficient(bad));
    }
    Ok(Design {
        y: DVector::from_vec(y),
        y_raw,
        x,
        names,
        absorber,
    })
}

fn rhs_names(spec: &RegressionSpec) -> Vec<String> {
    let mut names = Vec::new();
    if spec.fixed_effects.is_empty() {
        names.push(INTERCEPT.to_string());
    }
    names.extend(spec.regressors.iter().cloned());
    names
}

fn inverse_gram(x: &DMatrix<f64>, names: &[String]) -> Result<DMatrix<f64>> {
    let xtx = x.tr_mul(x);
    xtx.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::RankDeficient(names.to_vec()))
}

/// Sandwich covariance `c · B M B` with HC1 or cluster-robust meat.
fn covariance(
    xs: &DMatrix<f64>,
    e: &DVector<f64>,
    bread: &DMatrix<f64>,
    frame: &Frame,
    spec: &RegressionSpec,
    n_params: usize,
) -> Result<(DMatrix<f64>, Option<usize>, usize)> {
    let (n, k) = (xs.nrows(), xs.ncols());
    if n <= n_params {
        return Err(Error::InvalidParameter(format!(
            "{n} observations for {n_params} parameters"
        )));
    }
    let mut meat = DMatrix::<f64>::zeros(k, k);
    match &spec.cluster {
        None => {
            for i in 0..n {
                let xi = xs.row(i);
                meat.ger(e[i] * e[i], &xi.transpose(), &xi.transpose(), 1.0);
            }
            let c = n as f64 / (n - n_params) as f64;
            Ok((bread * meat * bread * c, None, n - n_params))
        }
        Some(name) => {
            let (groups, g) = encode(frame.factor(name)?);
            if g < 2 {
                return Err(Error::InvalidParameter("clustering needs at least two clusters".into()));
            }
            let mut scores = DMatrix::<f64>::zeros(g, k);
            for i in 0..n {
                for c in 0..k {
                    scores[(groups[i], c)] += e[i] * xs[(i, c)];
                }
            }
            meat = scores.tr_mul(&scores);
            let c = (g as f64 / (g - 1) as f64) * ((n - 1) as f64 / (n - n_params) as f64);
            Ok((bread * meat * bread * c, Some(g), g - 1))
        }
    }
}

fn r_squared(y_raw: &[f64], y_within: &DVector<f64>, e: &DVector<f64>, has_fe: bool) -> (f64, Option<f64>) {
    let mean = y_raw.iter().sum::<f64>() / y_raw.len() as f64;
    let tss: f64 = y_raw.iter().map(|v| (v - mean).powi(2)).sum();
    let ssr = e.norm_squared();
    let r2 = if tss > 0.0 { 1.0 - ssr / tss } else { f64::NAN };
    let within = has_fe.then(|| {
        let t = y_within.norm_squared();
        if t > 0.0 {
            1.0 - ssr / t
        } else {
            f64::NAN
        }
    });
    (r2, within)
}

/// Least squares after absorbing the spec's fixed effects.
///
/// Without fixed effects an intercept named [`INTERCEPT`] is added. The
/// covariance is HC1, or cluster-robust with the small-sample factor
/// `G/(G−1) · (n−1)/(n−K)` when a cluster factor is set; `K` counts
/// regressors plus absorbed fixed-effect levels.
pub fn fit_ols_fe(frame: &Frame, spec: &RegressionSpec) -> Result<EstimationResult> {
    let d = design(frame, spec, rhs_names(spec))?;
    let bread = inverse_gram(&d.x, &d.names)?;
    let beta = &bread * d.x.tr_mul(&d.y);
    let e = &d.y - &d.x * &beta;
    let fe_dof = d.absorber.dof();
    let (cov, n_clusters, df) = covariance(&d.x, &e, &bread, frame, spec, d.names.len() + fe_dof)?;
    let (r2, within_r2) = r_squared(&d.y_raw, &d.y, &e, fe_dof > 0);
    Ok(EstimationResult {
        names: d.names,
        coefficients: beta,
        covariance: cov,
        n_obs: frame.len(),
        r2,
        within_r2,
        first_stage_f: None,
        n_clusters,
        df,
        fe_dof,
        residuals: e.iter().copied().collect(),
        warnings: Vec::new(),
    })
}

fn ssr_on(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<(f64, DVector<f64>)> {
    if x.ncols() == 0 {
        return Ok((y.norm_squared(), DVector::zeros(y.len())));
    }
    let b = inverse_gram(x, names)? * x.tr_mul(y);
    let fitted = x * b;
    Ok(((y - &fitted).norm_squared(), fitted))
}

/// Two-stage least squares: endogenous regressors are replaced by their
/// projections on exogenous regressors and excluded instruments, all after
/// fixed-effect absorption. Reports the smallest first-stage F over the
/// excluded instruments and warns when it is below one.
pub fn fit_2sls(frame: &Frame, spec: &RegressionSpec) -> Result<EstimationResult> {
    spec.validate()?;
    if spec.endogenous.is_empty() {
        return Err(Error::InvalidParameter("2SLS needs at least one endogenous regressor".into()));
    }
    if spec.instruments.len() < spec.endogenous.len() {
        return Err(Error::InvalidParameter(format!(
            "{} instruments for {} endogenous regressors",
            spec.instruments.len(),
            spec.endogenous.len()
        )));
    }
    let names = rhs_names(spec);
    let d = design(frame, spec, names.clone())?;
    let exog: Vec<String> = names.iter().filter(|n| !spec.endogenous.contains(n)).cloned().collect();
    let mut z_names = exog.clone();
    z_names.extend(spec.instruments.iter().cloned());
    let (z, z_norms) = absorbed(frame, &z_names, &d.absorber)?;
    let bad = collinear_columns(&z, &z_norms, &z_names);
    if !bad.is_empty() {
        return Err(Error::RankDeficient(bad));
    }
    let (x_exog, _) = absorbed(frame, &exog, &d.absorber)?;
    let n = frame.len();
    let fe_dof = d.absorber.dof();
    let q = spec.instruments.len();
    let mut x_hat = d.x.clone();
    let mut min_f = f64::INFINITY;
    for endog in &spec.endogenous {
        let j = d.names.iter().position(|n| n == endog).expect("endogenous is a regressor");
        let target = d.x.column(j).into_owned();
        let (ssr_u, fitted) = ssr_on(&z, &target, &z_names)?;
        let (ssr_r, _) = ssr_on(&x_exog, &target, &exog)?;
        let df_u = n.saturating_sub(z.ncols() + fe_dof).max(1);
        let f = ((ssr_r - ssr_u) / q as f64) / (ssr_u / df_u as f64);
        min_f = min_f.min(if f.is_nan() { f64::INFINITY } else { f });
        x_hat.set_column(j, &fitted);
    }
    let bread = inverse_gram(&x_hat, &d.names)?;
    let beta = &bread * x_hat.tr_mul(&d.y);
    let e = &d.y - &d.x * &beta;
    let (cov, n_clusters, df) = covariance(&x_hat, &e, &bread, frame, spec, d.names.len() + fe_dof)?;
    let (r2, within_r2) = r_squared(&d.y_raw, &d.y, &e, fe_dof > 0);
    let mut warnings = Vec::new();
    if min_f < 1.0 {
        let msg = format!("weak identification: first-stage F = {min_f:.4} < 1");
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(EstimationResult {
        names: d.names,
        coefficients: beta,
        covariance: cov,
        n_obs: n,
        r2,
        within_r2,
        first_stage_f: Some(min_f),
        n_clusters,
        df,
        fe_dof,
        residuals: e.iter().copied().collect(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 + 2.0 * v).collect();
        let f = Frame::new().with_numeric("x", x).unwrap().with_numeric("y", y).unwrap();
        let r = fit_ols_fe(&f, &RegressionSpec::new("y", &["x"])).unwrap();
        assert!((r.coef("x").unwrap() - 2.0).abs() < 1e-12);
        assert!((r.coef(INTERCEPT).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_columns_are_named() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let y: Vec<f64> = (0..10).map(|i| (i * i) as f64).collect();
        let f = Frame::new()
            .with_numeric("x", x)
            .unwrap()
            .with_numeric("x2", x2)
            .unwrap()
            .with_numeric("y", y)
            .unwrap();
        match fit_ols_fe(&f, &RegressionSpec::new("y", &["x", "x2"])) {
            Err(Error::RankDeficient(cols)) => assert_eq!(cols, vec!["x2".to_string()]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn regressor_constant_within_groups_is_absorbed() {
        let g: Vec<u64> = (0..12).map(|i| i % 3).collect();
        let z: Vec<f64> = g.iter().map(|&v| v as f64 * 2.0).collect();
        let x: Vec<f64> = (0..12).map(|i| (i * 7 % 5) as f64).collect();
        let f = Frame::new()
            .with_factor("g", g)
            .unwrap()
            .with_numeric("z", z)
            .unwrap()
            .with_numeric("x", x.clone())
            .unwrap()
            .with_numeric("y", x)
            .unwrap();
        let spec = RegressionSpec::new("y", &["x", "z"]).fixed_effects(&["g"]);
        assert!(matches!(fit_ols_fe(&f, &spec), Err(Error::RankDeficient(c)) if c == vec!["z".to_string()]));
    }

    #[test]
    fn hc1_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 200;
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 1.0 + 0.5 * v + (1.0 + v.abs()) * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let f = Frame::new().with_numeric("x", x.clone()).unwrap().with_numeric("y", y).unwrap();
        let r = fit_ols_fe(&f, &RegressionSpec::new("y", &["x"])).unwrap();
        let xm = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
        let b = (xm.transpose() * &xm).try_inverse().unwrap();
        let mut meat = DMatrix::zeros(2, 2);
        for i in 0..n {
            let xi = xm.row(i).transpose();
            meat += &xi * xi.transpose() * r.residuals[i].powi(2);
        }
        let v = &b * meat * &b * (n as f64 / (n - 2) as f64);
        assert!((v - &r.covariance).abs().max() < 1e-12);
    }

    #[test]
    fn two_way_fe_matches_dummies() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 120;
        let a: Vec<u64> = (0..n).map(|_| rng.random_range(0..6)).collect();
        let b: Vec<u64> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 0.7 * x[i] + a[i] as f64 - 0.5 * b[i] as f64 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let f = Frame::new()
            .with_factor("a", a.clone())
            .unwrap()
            .with_factor("b", b.clone())
            .unwrap()
            .with_numeric("x", x.clone())
            .unwrap()
            .with_numeric("y", y.clone())
            .unwrap();
        let r = fit_ols_fe(&f, &RegressionSpec::new("y", &["x"]).fixed_effects(&["a", "b"])).unwrap();
        // Dummy expansion: intercept, x, a=1..5, b=1..3.
        let k = 2 + 5 + 3;
        let xm = DMatrix::from_fn(n, k, |i, j| match j {
            0 => 1.0,
            1 => x[i],
            j if j < 7 => (a[i] == (j - 1) as u64) as u8 as f64,
            j => (b[i] == (j - 6) as u64) as u8 as f64,
        });
        let beta = (xm.transpose() * &xm).try_inverse().unwrap() * xm.transpose() * DVector::from_vec(y);
        assert!((r.coef("x").unwrap() - beta[1]).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn residuals_orthogonal_to_regressors(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 60;
            let g: Vec<u64> = (0..n).map(|_| rng.random_range(0..5)).collect();
            let x1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let x2: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..n).map(|i| x1[i] - x2[i] + g[i] as f64 + rng.sample::<f64, _>(StandardNormal)).collect();
            let f = Frame::new().with_factor("g", g).unwrap()
                .with_numeric("x1", x1.clone()).unwrap()
                .with_numeric("x2", x2.clone()).unwrap()
                .with_numeric("y", y).unwrap();
            let spec = RegressionSpec::new("y", &["x1", "x2"]).fixed_effects(&["g"]);
            let r = fit_ols_fe(&f, &spec).unwrap();
            for x in [&x1, &x2] {
                let dot: f64 = x.iter().zip(&r.residuals).map(|(a, b)| a * b).sum();
                prop_assert!(dot.abs() < 1e-8 * n as f64);
            }
            for i in 0..2 {
                for j in 0..2 {
                    prop_assert!((r.covariance[(i, j)] - r.covariance[(j, i)]).abs() < 1e-12);
                }
                prop_assert!(r.covariance[(i, i)] >= 0.0);
            }
        }

        #[test]
        fn instrument_equal_to_regressor_reproduces_ols(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 80;
            let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let y: Vec<f64> = x.iter().map(|v| 2.0 * v + rng.sample::<f64, _>(StandardNormal)).collect();
            let f = Frame::new().with_numeric("x", x.clone()).unwrap()
                .with_numeric("z", x).unwrap()
                .with_numeric("y", y).unwrap();
            let ols = fit_ols_fe(&f, &RegressionSpec::new("y", &["x"])).unwrap();
            let iv = fit_2sls(&f, &RegressionSpec::new("y", &["x"]).instrument(&["x"], &["z"])).unwrap();
            prop_assert!((ols.coefficients - iv.coefficients).abs().max() < 1e-10);
        }
    }
}
