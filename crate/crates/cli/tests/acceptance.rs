//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use taskspace_core::activity::{TimeWindow, UserTaskMatrix};
use taskspace_core::blockmodel::{description_length, infer_partition, oracle_enumerate, BipartiteGraph, Partition, SbmConfig};
use taskspace_core::econometrics::{binned_probability, build_entry_rows, fit_2sls, fit_ols_fe, Frame, INTERCEPT};
use taskspace_core::jobmatch::{masked_prediction_table, MaskConfig};
use taskspace_core::relatedness::{cooccurrence_from_sets, pmi_matrix, CooccurrenceCounts};
use taskspace_core::structure::nodf;
use taskspace_core::synth::{
    confounded_iv, planted_bipartite, planted_entry, planted_jobs, planted_task_sets, write_mini_corpus, MiniSpec,
};
use taskspace_core::valuation::{impute_user_value, match_respondents, task_values, SurveyRespondent};
use taskspace_core::RegressionSpec;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn sbm_recovery() -> Outcome {
    let start = Instant::now();
    let mut exact = BTreeMap::new();
    for (label, tags, questions) in [("2-block", vec![25; 2], vec![250; 2]), ("4-block", vec![12; 4], vec![125; 4])] {
        let mut hits = 0;
        for seed in 0..20 {
            let planted = planted_bipartite(&tags, &questions, 0.5, 0.02, 100 + seed);
            let p = infer_partition(&planted.graph, &SbmConfig { seed, ..Default::default() });
            if p.tag_blocks() == Partition::new(&planted.tag_blocks, &[]).tag_blocks() {
                hits += 1;
            }
        }
        exact.insert(label, hits);
    }
    let mut optimal = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nt = rng.random_range(3..=8);
        let nq = rng.random_range(3..=6);
        let p = rng.random_range(0.3..0.7);
        let edges: Vec<(u32, u32)> = (0..nt as u32)
            .flat_map(|t| (0..nq as u32).map(move |q| (t, q)))
            .filter(|_| rng.random_bool(p))
            .collect();
        let g = BipartiteGraph::from_edges(nt, nq, &edges).unwrap();
        let inferred = infer_partition(&g, &SbmConfig { seed, ..Default::default() });
        let best = oracle_enumerate(&g, 8).unwrap();
        let dl = |p: &Partition| description_length(&g, p, false).unwrap().total;
        if (dl(&inferred) - dl(&best)).abs() <= 1e-9 {
            optimal += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        exact.values().all(|&h| h >= 18) && optimal == 50 && elapsed < Duration::from_secs(60),
        format!(
            "exact 2-block {}/20, 4-block {}/20; oracle-optimal {optimal}/50; {:.1}s",
            exact["2-block"],
            exact["4-block"],
            elapsed.as_secs_f64()
        ),
    )
}

fn direct_pmi(c: &DMatrix<u64>) -> DMatrix<f64> {
    let n = c.nrows();
    let total: f64 = c.iter().map(|&v| v as f64).sum();
    let rows: Vec<f64> = (0..n).map(|i| (0..n).map(|j| c[(i, j)] as f64).sum()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        if c[(i, j)] == 0 {
            0.0
        } else {
            (c[(i, j)] as f64 * total / (rows[i] * rows[j])).ln().max(0.0)
        }
    })
}

fn pmi_correctness() -> Outcome {
    let mut worst = 0.0f64;
    let mut props = true;
    let mut scaling = true;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=15);
        let mut c = DMatrix::<u64>::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = if rng.random_bool(0.3) { 0 } else { rng.random_range(1..500) };
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        if c.iter().all(|&v| v == 0) {
            c[(0, 0)] = 1;
        }
        let r = pmi_matrix(&CooccurrenceCounts::from_matrix(c.clone()).unwrap()).unwrap();
        worst = worst.max((&r.values - direct_pmi(&c)).abs().max());
        props &= r.values == r.values.transpose() && r.values.iter().all(|&v| v >= 0.0);
        let k = rng.random_range(2..50u64);
        let scaled = pmi_matrix(&CooccurrenceCounts::from_matrix(c.map(|v| v * k)).unwrap()).unwrap();
        scaling &= scaled.values == r.values;
    }
    outcome(
        worst <= 1e-12 && props && scaling,
        format!("max |Δ| {worst:.2e}; symmetric & nonnegative {props}; scaling exact {scaling}"),
    )
}

fn nodf_oracle(a: &DMatrix<u8>) -> f64 {
    let pair_sum = |n: usize, deg: &dyn Fn(usize) -> usize, both: &dyn Fn(usize, usize) -> usize| {
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let (di, dj) = (deg(i), deg(j));
                let low = di.min(dj);
                if di != dj && low > 0 {
                    s += 100.0 * both(i, j) as f64 / low as f64;
                }
            }
        }
        s
    };
    let (r, c) = a.shape();
    let rows = pair_sum(
        r,
        &|i| (0..c).filter(|&k| a[(i, k)] == 1).count(),
        &|i, j| (0..c).filter(|&k| a[(i, k)] == 1 && a[(j, k)] == 1).count(),
    );
    let cols = pair_sum(
        c,
        &|i| (0..r).filter(|&k| a[(k, i)] == 1).count(),
        &|i, j| (0..r).filter(|&k| a[(k, i)] == 1 && a[(k, j)] == 1).count(),
    );
    let pairs = (r * r.saturating_sub(1) / 2 + c * c.saturating_sub(1) / 2) as f64;
    if pairs == 0.0 {
        0.0
    } else {
        (rows + cols) / pairs
    }
}

fn nodf_checks() -> Outcome {
    let n = 8;
    let staircase = DMatrix::from_fn(n, n, |i, j| u8::from(j < n - i));
    let identity = DMatrix::<u8>::identity(n, n);
    let (s, i) = (nodf(&staircase).total, nodf(&identity).total);
    let mut worst = 0.0f64;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, c) = (rng.random_range(2..20), rng.random_range(2..20));
        let p = rng.random_range(0.1..0.9);
        let a = DMatrix::from_fn(r, c, |_, _| u8::from(rng.random_bool(p)));
        worst = worst.max((nodf(&a).total - nodf_oracle(&a)).abs());
    }
    outcome(
        s == 100.0 && i == 0.0 && worst <= 1e-12,
        format!("staircase {s}; identity {i}; max |Δ| vs pairwise oracle {worst:.2e}"),
    )
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn econometrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);

    let n = 200;
    let x1: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let y: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| 1.0 + 2.0 * a - 3.0 * b).collect();
    let f = Frame::new().with_numeric("y", y).unwrap().with_numeric("x1", x1).unwrap().with_numeric("x2", x2).unwrap();
    let fit = fit_ols_fe(&f, &RegressionSpec::new("y", &["x1", "x2"])).unwrap();
    let noiseless = [(INTERCEPT, 1.0), ("x1", 2.0), ("x2", -3.0)]
        .iter()
        .map(|&(k, v)| (fit.coef(k).unwrap() - v).abs())
        .fold(0.0, f64::max);

    let n = 300;
    let groups: Vec<u64> = (0..n).map(|_| rng.random_range(0..6)).collect();
    let x: Vec<f64> = groups.iter().map(|&g| g as f64 * 0.3 + normal(&mut rng)).collect();
    let y: Vec<f64> = x.iter().zip(&groups).map(|(x, &g)| 0.5 * x + g as f64 - 2.0 + normal(&mut rng)).collect();
    let mut dummies = Frame::new().with_numeric("y", y.clone()).unwrap().with_numeric("x", x.clone()).unwrap();
    let mut names = vec!["x".to_string()];
    for g in 1..6 {
        let name = format!("d{g}");
        dummies = dummies.with_numeric(&name, groups.iter().map(|&h| f64::from(h == g)).collect()).unwrap();
        names.push(name);
    }
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let dummy_fit = fit_ols_fe(&dummies, &RegressionSpec::new("y", &refs)).unwrap();
    let fe_frame =
        Frame::new().with_numeric("y", y).unwrap().with_numeric("x", x).unwrap().with_factor("g", groups).unwrap();
    let fe_fit = fit_ols_fe(&fe_frame, &RegressionSpec::new("y", &["x"]).fixed_effects(&["g"])).unwrap();
    let fe_gap = (fe_fit.coef("x").unwrap() - dummy_fit.coef("x").unwrap())
        .abs()
        .max((fe_fit.se("x").unwrap() - dummy_fit.se("x").unwrap()).abs());

    let iv = fit_2sls(&confounded_iv(10_000, 1.5, 3), &RegressionSpec::new("y", &["x"]).instrument(&["x"], &["z"]))
        .unwrap()
        .coef("x")
        .unwrap();

    let mut covered = 0;
    for _ in 0..100 {
        let n = 400;
        let x: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let y: Vec<f64> = x.iter().map(|x| 1.0 + 2.0 * x + (1.0 + x.abs()) * normal(&mut rng)).collect();
        let f = Frame::new().with_numeric("y", y).unwrap().with_numeric("x", x).unwrap();
        let (lo, hi) = fit_ols_fe(&f, &RegressionSpec::new("y", &["x"])).unwrap().conf_int("x", 0.95).unwrap();
        if lo <= 2.0 && 2.0 <= hi {
            covered += 1;
        }
    }

    let (n, g) = (400usize, 20usize);
    let cluster: Vec<u64> = (0..n).map(|i| (i % g) as u64).collect();
    let shocks: Vec<f64> = (0..g).map(|_| normal(&mut rng)).collect();
    let x: Vec<f64> = (0..n).map(|i| normal(&mut rng) + 0.5 * shocks[i % g]).collect();
    let y: Vec<f64> = (0..n).map(|i| 1.0 + x[i] + shocks[i % g] + normal(&mut rng)).collect();
    let f = Frame::new()
        .with_numeric("y", y.clone())
        .unwrap()
        .with_numeric("x", x.clone())
        .unwrap()
        .with_factor("c", cluster.clone())
        .unwrap();
    let fit = fit_ols_fe(&f, &RegressionSpec::new("y", &["x"]).cluster("c")).unwrap();
    let xm = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    let yv = DVector::from_vec(y);
    let bread = (xm.transpose() * &xm).try_inverse().unwrap();
    let beta = &bread * xm.transpose() * &yv;
    let e = &yv - &xm * &beta;
    let mut meat = DMatrix::<f64>::zeros(2, 2);
    for c in 0..g as u64 {
        let mut s = DVector::<f64>::zeros(2);
        for i in (0..n).filter(|&i| cluster[i] == c) {
            s += xm.row(i).transpose() * e[i];
        }
        meat += &s * s.transpose();
    }
    let factor = (g as f64 / (g - 1) as f64) * ((n - 1) as f64 / (n - 2) as f64);
    let v = &bread * meat * &bread * factor;
    let cluster_gap = (fit.se(INTERCEPT).unwrap() - v[(0, 0)].sqrt())
        .abs()
        .max((fit.se("x").unwrap() - v[(1, 1)].sqrt()).abs());

    outcome(
        noiseless <= 1e-10 && fe_gap <= 1e-8 && (iv - 1.5).abs() <= 0.05 && covered >= 90 && cluster_gap <= 1e-10,
        format!(
            "noiseless {noiseless:.1e}; FE vs dummies {fe_gap:.1e}; 2SLS {iv:.4}; coverage {covered}/100; clustered SE {cluster_gap:.1e}"
        ),
    )
}

fn masked_validation() -> Outcome {
    let r = pmi_matrix(&cooccurrence_from_sets(24, planted_task_sets(5000, 24, 4, 0.5, 0.02, 11).iter().map(Vec::as_slice)))
        .unwrap();
    let jobs = planted_jobs(5000, 24, 4, 0.5, 0.02, 12);
    let config = MaskConfig::default();
    let t = masked_prediction_table(&jobs, &r, &config).unwrap();
    let (lo, hi) = (t.bins[0].p_hat, t.bins[t.bins.len() - 1].p_hat);
    let eligible: Vec<_> = jobs.iter().filter(|j| j.tasks.len() >= config.min_tasks).collect();
    let required: usize = eligible.iter().map(|j| j.tasks.len()).sum();
    let sizes: Vec<usize> = t.bins.iter().map(|b| b.n).collect();
    let binned: usize = sizes.iter().sum();
    let successes: usize = t.bins.iter().map(|b| b.successes).sum();
    let identities = t.n_jobs == eligible.len()
        && t.n_cells == eligible.len() * 24
        && t.n_masked == (config.mask_frac * t.n_cells as f64).round() as usize
        && binned + t.n_isolated == t.n_masked
        && sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1
        && successes <= required
        && t.bins.iter().all(|b| b.p_hat == b.successes as f64 / b.n as f64);
    outcome(
        hi >= 5.0 * lo && identities,
        format!("bottom decile {lo:.4}, top decile {hi:.4} ({:.1}×); identities {identities}", hi / lo),
    )
}

fn entry_harness() -> Outcome {
    let mut monotone = 0;
    let mut positive = 0;
    for seed in 0..100 {
        let dgp = planted_entry(6000, 12, -4.0, 2.5, seed);
        let rows = build_entry_rows(&dgp.years, &dgp.relatedness, &dgp.values, "S2").unwrap();
        let bins = binned_probability(&rows.frame, "density", "entered", 10).unwrap();
        if bins.windows(2).all(|w| w[1].p_hat >= w[0].p_hat) {
            monotone += 1;
        }
        let spec = RegressionSpec::new("entered", &["log_value", "density"]).fixed_effects(&["user"]).cluster("user");
        if fit_ols_fe(&rows.frame, &spec).unwrap().coef("density").unwrap() > 0.0 {
            positive += 1;
        }
    }
    outcome(
        monotone >= 95 && positive == 100,
        format!("monotone {monotone}/100; positive density coefficient {positive}/100"),
    )
}

fn hash_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn pipeline_determinism() -> Outcome {
    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mini");
    let generated = tempfile::tempdir().unwrap();
    let data = if bundled.join("pipeline.conf").is_file() {
        bundled
    } else {
        write_mini_corpus(generated.path(), &MiniSpec::default()).unwrap();
        generated.path().to_path_buf()
    };
    let mut trees = Vec::new();
    let mut times = Vec::new();
    let mut ok = true;
    for _ in 0..2 {
        let out = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let status = Command::new(env!("CARGO_BIN_EXE_taskspace"))
            .args(["all", "--config"])
            .arg(data.join("pipeline.conf"))
            .arg("--out")
            .arg(out.path())
            .env("RUST_LOG", "error")
            .status()
            .unwrap();
        times.push(start.elapsed());
        ok &= status.success();
        trees.push(hash_tree(out.path()));
    }
    let identical = trees[0] == trees[1] && !trees[0].is_empty();
    let slowest = times.iter().max().unwrap().as_secs_f64();
    outcome(
        ok && identical && slowest < 120.0,
        format!("{} files, byte-identical {identical}; slowest run {slowest:.2}s", trees[0].len()),
    )
}

fn valuation() -> Outcome {
    let mut bounded = true;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_tasks = rng.random_range(2..10);
        let mut columns = BTreeMap::new();
        let mut values = BTreeMap::new();
        for u in 0..rng.random_range(1..40u64) {
            let col: Vec<u64> =
                (0..n_tasks).map(|_| if rng.random_bool(0.5) { rng.random_range(1..20) } else { 0 }).collect();
            columns.insert(u, col);
            if rng.random_bool(0.8) {
                values.insert(u, rng.random_range(20_000.0..250_000.0));
            }
        }
        let x = UserTaskMatrix::from_columns(TimeWindow::new(0, 1).unwrap(), n_tasks, columns.clone()).unwrap();
        let v = task_values(&values, &x, "fixture");
        for t in 0..n_tasks {
            let active: Vec<f64> =
                columns.iter().filter(|(u, c)| c[t] > 0 && values.contains_key(u)).map(|(u, _)| values[u]).collect();
            bounded &= match v.values[t] {
                None => active.is_empty(),
                Some(val) => {
                    let lo = active.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = active.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    !active.is_empty() && val >= lo * (1.0 - 1e-12) && val <= hi * (1.0 + 1e-12)
                }
            };
        }
    }
    let keys = |ks: &[&str]| ks.iter().map(|s| s.to_string()).collect::<BTreeSet<String>>();
    let survey = vec![
        SurveyRespondent {
            respondent_id: 1,
            salary: 100_000.0,
            keys: keys(&["a", "b", "c"]),
        },
        SurveyRespondent {
            respondent_id: 2,
            salary: 50_000.0,
            keys: keys(&["a"]),
        },
    ];
    let m = match_respondents(7, &keys(&["a", "b", "c"]), &survey, 300).unwrap();
    let example = impute_user_value(&m).unwrap();
    outcome(bounded && example == 87_500.0, format!("bounds hold {bounded}; weighted mean {example}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 SBM recovery", sbm_recovery),
        ("2 PMI correctness", pmi_correctness),
        ("3 NODF", nodf_checks),
        ("4 econometrics", econometrics),
        ("5 masked-task validation", masked_validation),
        ("6 diversification", entry_harness),
        ("7 pipeline determinism", pipeline_determinism),
        ("8 valuation", valuation),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {name}: {} [{:.1}s]", o.detail, start.elapsed().as_secs_f64());
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
