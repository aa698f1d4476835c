//! Acceptance suite: one check per headline criterion, each printing a
//! PASS/FAIL line. Run with `cargo test --test acceptance -- --nocapture`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use rand::Rng;
use retina_vasc::explain::{shapley_exact, shapley_sampled, OutputFn};
use retina_vasc::features::{read_csv, KindSel, Param, Split};
use retina_vasc::ml::{
    evaluate_test, nested_cv, outer_folds, parse_grids, roc_auc_binary, CvOptions, Preprocessor, Task,
};
use retina_vasc::params::{fractal_dimension, quantify_with, vessel_equivalent, QuantifyOptions, FD_BOX_SIZES};
use retina_vasc::raster::BinaryRaster;
use retina_vasc::rng;
use retina_vasc::stats::{stepwise_select, StepwiseOptions};
use retina_vasc::synth::{filled_square, generate_tree_for_zones, koch_raster, make_separable_dataset, DatasetSpec, TreeSpec};
use retina_vasc::vessel::{VesselKind, ZoneId, ZoneSpec};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const BIN: &str = env!("CARGO_BIN_EXE_retina-vasc");

fn cli(args: &[&str], threads: Option<usize>) -> Output {
    let mut c = Command::new(BIN);
    c.args(args).env_remove("RUST_LOG");
    if let Some(t) = threads {
        c.env("RETINA_VASC_THREADS", t.to_string());
    }
    c.output().expect("binary runs")
}

fn cli_ok(args: &[&str], threads: Option<usize>) -> Result<String, String> {
    let o = cli(args, threads);
    if o.status.success() {
        Ok(String::from_utf8_lossy(&o.stdout).into_owned())
    } else {
        Err(format!("{args:?} exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)))
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

// ---------------------------------------------------------------------------
// 1. parameter engine against construction ground truth
// ---------------------------------------------------------------------------

fn c1_parameter_oracles() -> Outcome {
    let start = Instant::now();
    let checked_params = [Param::Je, Param::Bc, Param::Af, Param::Ba, Param::Aa, Param::Mw, Param::Stdw, Param::Tort];
    let mut checks = 0;
    for seed in 0..50u64 {
        let tortuous = seed % 10 >= 7;
        let (spec, zones) = if tortuous {
            let mut spec = TreeSpec::new(2, 2, 2, 1000 + seed);
            spec.tortuosity_amplitude = 0.02 + 0.005 * (seed % 10) as f64;
            spec.asymmetry = 0.8;
            (spec, vec![ZoneSpec::new(ZoneId::C, 0.45, 5.0).unwrap()])
        } else {
            let mut spec = TreeSpec::new(2 + (seed % 3) as usize, 2 + (seed % 2) as usize, 3, seed);
            spec.asymmetry = 0.55 + 0.009 * seed as f64;
            spec.murray_exponent = 2.2 + 0.03 * seed as f64;
            spec.angle_asymmetry = (seed % 7) as f64 * 3.0;
            spec.branch_angle = 55.0 + (seed % 11) as f64 * 3.0;
            (spec, ZoneSpec::default_pair())
        };
        let (g, truth) = generate_tree_for_zones(&spec, &zones).map_err(|e| e.to_string())?;
        let q = quantify_with(&g, &zones, &QuantifyOptions::default()).map_err(|e| e.to_string())?;
        for (name, entry) in &truth.features {
            if !checked_params.contains(&name.param) {
                continue;
            }
            let tol = if matches!(name.param, Param::Je | Param::Bc | Param::Af | Param::Ba | Param::Aa) { 1e-9 } else { 1e-6 };
            let got = q.features.get(*name).ok_or_else(|| format!("seed {seed}: {name} missing"))?;
            ensure((got - entry.value).abs() <= tol * entry.value.abs().max(1.0), || {
                format!("seed {seed}: {name} = {got}, expected {} ({})", entry.value, entry.formula)
            })?;
            checks += 1;
        }
        if tortuous {
            let t = truth.get(retina_vasc::features::FeatureName::kinded(Param::Tort, ZoneId::C, KindSel::All));
            ensure(t.is_some_and(|t| t > 1e-4), || format!("seed {seed}: tortuous tree without tortuosity truth"))?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{checks} values on 50 trees in {secs:.2} s"))
}

// ---------------------------------------------------------------------------
// 2. Knudtson pairing
// ---------------------------------------------------------------------------

/// Hand pairing: sort descending, combine largest with smallest, carry the
/// middle one when odd, repeat until one value is left.
fn pairing_oracle(widths: &[f64], k: f64) -> f64 {
    let mut v = widths.to_vec();
    while v.len() > 1 {
        v.sort_by(|a, b| b.total_cmp(a));
        let n = v.len();
        let mut next: Vec<f64> = (0..n / 2).map(|i| k * (v[i] * v[i] + v[n - 1 - i] * v[n - 1 - i]).sqrt()).collect();
        if n % 2 == 1 {
            next.push(v[n / 2]);
        }
        v = next;
    }
    v[0]
}

fn c2_knudtson() -> Outcome {
    let mut notes = Vec::new();
    for w in [1.0, 7.5, 13.0] {
        let a = vessel_equivalent(&[w; 6], VesselKind::Arteriole).map_err(|e| e.to_string())?;
        let v = vessel_equivalent(&[w; 6], VesselKind::Venule).map_err(|e| e.to_string())?;
        let (oa, ov) = (pairing_oracle(&[w; 6], 0.88), pairing_oracle(&[w; 6], 0.95));
        ensure((a - oa).abs() <= 1e-12 * w && (v - ov).abs() <= 1e-12 * w, || format!("engine ({a}, {v}) vs oracle ({oa}, {ov})"))?;
        ensure((a / w - 1.7485).abs() <= 1e-4, || format!("arteriole ratio {}", a / w))?;
        // the hand-executed pairing with k = 0.95 gives 2.13761, which is
        // frozen here in place of the listed 2.0395
        ensure((v / w - 2.13761).abs() <= 1e-4, || format!("venule ratio {}", v / w))?;
        if w == 1.0 {
            notes.push(format!("arterioles {:.5}·w, venules {:.5}·w (listed venule figure 2.0395 disagrees with the pairing)", a, v));
        }
    }
    Ok(notes.join("; "))
}

// ---------------------------------------------------------------------------
// 3. fractal dimension
// ---------------------------------------------------------------------------

fn brute_box_count(r: &BinaryRaster, s: usize) -> usize {
    let mut n = 0;
    for by in (0..r.height()).step_by(s) {
        for bx in (0..r.width()).step_by(s) {
            n += (by..(by + s).min(r.height())).any(|y| (bx..(bx + s).min(r.width())).any(|x| r.get(x, y))) as usize;
        }
    }
    n
}

fn brute_fd(r: &BinaryRaster) -> f64 {
    let pts: Vec<(f64, f64)> =
        FD_BOX_SIZES.iter().map(|&s| ((1.0 / s as f64).ln(), (brute_box_count(r, s) as f64).ln())).collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>()
}

fn c3_fractal() -> Outcome {
    let mut out = Vec::new();
    for (label, r, ok) in [
        ("line", koch_raster(0, 1024).unwrap(), (|d: f64| (d - 1.0).abs() <= 0.05) as fn(f64) -> bool),
        ("square", filled_square(1024, 1024), |d: f64| d >= 1.9),
        ("koch-5", koch_raster(5, 1024).unwrap(), |d: f64| (d - 1.26).abs() <= 0.08),
    ] {
        let fd = fractal_dimension(&r, &FD_BOX_SIZES).map_err(|e| e.to_string())?;
        let brute = brute_fd(&r);
        ensure((fd - brute).abs() <= 1e-9, || format!("{label}: engine {fd} vs brute force {brute}"))?;
        ensure(ok(fd), || format!("{label}: {fd}"))?;
        out.push(format!("{label} {fd:.4}"));
    }
    Ok(out.join(", "))
}

// ---------------------------------------------------------------------------
// 4. ROC-AUC
// ---------------------------------------------------------------------------

fn pairwise_auc(labels: &[bool], scores: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                den += 1.0;
                num += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
            }
        }
    }
    num / den
}

fn c4_auc() -> Outcome {
    let mut r = rng::stream(4, 0);
    let mut worst = 0.0f64;
    for inst in 0..1000 {
        let n = r.random_range(2..=200);
        let levels = if inst % 2 == 0 { 1_000_000 } else { r.random_range(2..8) };
        let mut labels: Vec<bool> = (0..n).map(|_| r.random::<bool>()).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(0..levels) as f64 / levels as f64).collect();
        let got = roc_auc_binary(&labels, &scores).map_err(|e| e.to_string())?;
        let want = pairwise_auc(&labels, &scores);
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-12, || format!("instance {inst}: {got} vs {want}"))?;
    }
    let fixed = roc_auc_binary(&[false, false, true, true], &[0.1, 0.4, 0.35, 0.8]).map_err(|e| e.to_string())?;
    ensure(fixed == 0.75, || format!("reference case gave {fixed}"))?;
    Ok(format!("1000 instances, max deviation {worst:e}; reference case = {fixed}"))
}

// ---------------------------------------------------------------------------
// 5. Shapley values
// ---------------------------------------------------------------------------

struct Poly {
    a: Vec<f64>,
    b: Vec<Vec<f64>>,
}

impl Poly {
    fn random(p: usize, seed: u64, ignored: &[usize]) -> Self {
        let mut r = rng::stream(seed, 0);
        let keep = |j: usize| !ignored.contains(&j);
        let a = (0..p).map(|j| if keep(j) { r.random_range(-1.0..1.0) } else { 0.0 }).collect();
        let b = (0..p)
            .map(|j| (0..p).map(|k| if k > j && keep(j) && keep(k) { r.random_range(-0.5..0.5) } else { 0.0 }).collect())
            .collect();
        Poly { a, b }
    }
}

impl OutputFn for Poly {
    fn outputs(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter()
            .map(|x| {
                let mut v = 0.0;
                for j in 0..x.len() {
                    v += self.a[j] * x[j];
                    for k in j + 1..x.len() {
                        v += self.b[j][k] * x[j] * x[k];
                    }
                }
                (0.7 * v).tanh()
            })
            .collect()
    }
}

fn uniform_rows(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, 1);
    (0..n).map(|_| (0..p).map(|_| r.random_range(-1.0..1.0)).collect()).collect()
}

fn c5_shapley() -> Outcome {
    let mut max_z = 0.0f64;
    for fx in 0..20u64 {
        let p = 3 + (fx % 8) as usize; // 3..=10 features
        let names: Vec<String> = (1..=p).map(|i| format!("x{i}")).collect();
        let dummy = (fx as usize) % p;
        let mut f = Poly::random(p, 500 + fx, &[dummy]);
        // two symmetric features, distinct from the dummy
        let (s1, s2) = ((dummy + 1) % p, (dummy + 2) % p);
        f.a[s2] = f.a[s1];
        for k in 0..p {
            if k != s1 && k != s2 {
                let v = if k > s1 { f.b[s1][k] } else { f.b[k][s1] };
                if k > s2 { f.b[s2][k] = v } else { f.b[k][s2] = v }
            }
        }
        let mut bg = uniform_rows(20, p, 500 + fx);
        bg.iter_mut().for_each(|r| r[s2] = r[s1]);
        let mut x = uniform_rows(1, p, 900 + fx).remove(0);
        x[s2] = x[s1];

        let exact = shapley_exact(&f, &bg, &x, &names).map_err(|e| e.to_string())?;
        ensure(exact.efficiency_gap().abs() <= 1e-12, || format!("fixture {fx}: efficiency gap {}", exact.efficiency_gap()))?;
        ensure(exact.phi[dummy] == 0.0, || format!("fixture {fx}: dummy got {}", exact.phi[dummy]))?;
        ensure((exact.phi[s1] - exact.phi[s2]).abs() <= 1e-12, || format!("fixture {fx}: symmetric pair differs"))?;

        let est = shapley_sampled(&f, &bg, &x, &names, 400, fx).map_err(|e| e.to_string())?;
        for j in 0..p {
            let d = (est.phi[j] - exact.phi[j]).abs();
            if est.se[j] > 0.0 {
                max_z = max_z.max(d / est.se[j]);
            }
            ensure(d <= 3.0 * est.se[j] + 1e-12, || format!("fixture {fx} feature {j}: |Δ| {d:e} > 3·se {:e}", est.se[j]))?;
        }
    }
    Ok(format!("20 fixtures (3-10 features), largest |Δ|/se = {max_z:.2}"))
}

// ---------------------------------------------------------------------------
// 6. stepwise regression
// ---------------------------------------------------------------------------

fn noise(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, 0);
    (0..n).map(|_| (0..p).map(|_| r.sample::<f64, _>(rand_distr::StandardNormal)).collect()).collect()
}

/// SSE of intercept + `subset` by Gauss-Jordan on the normal equations.
fn sse(x: &[Vec<f64>], y: &[f64], subset: &[usize]) -> f64 {
    let k = subset.len() + 1;
    let row = |i: usize| -> Vec<f64> { std::iter::once(1.0).chain(subset.iter().map(|&c| x[i][c])).collect() };
    let mut a = vec![vec![0.0; k + 1]; k];
    for i in 0..x.len() {
        let r = row(i);
        for p in 0..k {
            for q in 0..k {
                a[p][q] += r[p] * r[q];
            }
            a[p][k] += r[p] * y[i];
        }
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for i in 0..k {
            if i != col {
                let f = a[i][col] / a[col][col];
                for j in col..=k {
                    a[i][j] -= f * a[col][j];
                }
            }
        }
    }
    let beta: Vec<f64> = (0..k).map(|i| a[i][k] / a[i][i]).collect();
    (0..x.len()).map(|i| (y[i] - row(i).iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>()).powi(2)).sum()
}

/// The enter/remove rule replayed over a precomputed table of all subset SSEs.
fn exhaustive_stepwise(x: &[Vec<f64>], y: &[f64], o: &StepwiseOptions) -> Vec<usize> {
    let (n, p) = (x.len(), x[0].len());
    let table: Vec<f64> = (0..1usize << p)
        .map(|m| sse(x, y, &(0..p).filter(|j| m >> j & 1 == 1).collect::<Vec<_>>()))
        .collect();
    let pval = |with: usize, without: usize, k: usize| {
        let df2 = (n - k - 1) as f64;
        let f = (table[without] - table[with]) / (table[with] / df2);
        FisherSnedecor::new(1.0, df2).unwrap().sf(f.max(0.0))
    };
    let (mut mask, mut order) = (0usize, Vec::<usize>::new());
    loop {
        let mut changed = false;
        let k = order.len() + 1;
        let mut best: Option<(f64, usize)> = None;
        for j in (0..p).filter(|j| mask >> j & 1 == 0) {
            let pv = pval(mask | 1 << j, mask, k);
            if pv < o.p_enter && best.is_none_or(|b| pv < b.0) {
                best = Some((pv, j));
            }
        }
        if let Some((_, j)) = best {
            mask |= 1 << j;
            order.push(j);
            changed = true;
        }
        loop {
            let k = order.len();
            let mut worst: Option<(usize, f64)> = None;
            for (i, &j) in order.iter().enumerate() {
                let pv = pval(mask, mask & !(1 << j), k);
                if pv > o.p_remove && worst.is_none_or(|w| pv > w.1) {
                    worst = Some((i, pv));
                }
            }
            let Some((i, _)) = worst else { break };
            mask &= !(1 << order.remove(i));
            changed = true;
        }
        if !changed {
            return order;
        }
    }
}

fn c6_stepwise() -> Outcome {
    let names = |p: usize| (1..=p).map(|i| format!("x{i}")).collect::<Vec<_>>();
    let o = StepwiseOptions::default();
    // noise-free: exactly the informative columns
    for seed in 0..5u64 {
        let x = noise(50, 7, seed);
        let y: Vec<f64> = x.iter().map(|r| 1.5 * r[1] - 0.7 * r[4] + 0.2 * r[6] + 3.0).collect();
        let rep = stepwise_select(&x, &y, &names(7), &o).map_err(|e| e.to_string())?;
        let mut sel = rep.selected.clone();
        sel.sort();
        ensure(sel == ["x2", "x5", "x7"], || format!("noise-free seed {seed} selected {sel:?}"))?;
    }
    // exhaustive oracle
    let mut cases = 0;
    for seed in 0..30u64 {
        let p = 2 + (seed % 7) as usize;
        let x = noise(35 + seed as usize, p, 60 + seed);
        let mut r = rng::stream(160 + seed, 0);
        let w: Vec<f64> = (0..p).map(|_| if r.random::<f64>() < 0.5 { r.random_range(-0.8..0.8) } else { 0.0 }).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|row| row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + r.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        for opts in [o, StepwiseOptions { p_enter: 0.15, p_remove: 0.2, max_steps: 100 }] {
            let rep = stepwise_select(&x, &y, &names(p), &opts).map_err(|e| e.to_string())?;
            let want: Vec<String> = exhaustive_stepwise(&x, &y, &opts).iter().map(|j| format!("x{}", j + 1)).collect();
            ensure(rep.selected == want, || format!("seed {seed}: {:?} vs oracle {want:?}", rep.selected))?;
            cases += 1;
        }
    }
    // rescaling invariance
    for seed in 0..10u64 {
        let x = noise(45, 5, 300 + seed);
        let mut r = rng::stream(400 + seed, 0);
        let y: Vec<f64> = x.iter().map(|row| 0.6 * row[0] - 0.4 * row[3] + r.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let scale: Vec<(f64, f64)> = (0..5).map(|_| (10f64.powf(r.random_range(-2.0..2.0)), r.random_range(-40.0..40.0))).collect();
        let xs: Vec<Vec<f64>> = x.iter().map(|row| row.iter().zip(&scale).map(|(v, (a, b))| a * v + b).collect()).collect();
        let a = stepwise_select(&x, &y, &names(5), &o).map_err(|e| e.to_string())?;
        let b = stepwise_select(&xs, &y, &names(5), &o).map_err(|e| e.to_string())?;
        ensure(a.selected == b.selected, || format!("rescaling seed {seed}: {:?} vs {:?}", a.selected, b.selected))?;
    }
    Ok(format!("noise-free 5/5, exhaustive oracle {cases}/{cases}, rescaling 10/10"))
}

// ---------------------------------------------------------------------------
// 7. end-to-end pipeline through the CLI
// ---------------------------------------------------------------------------

fn pipeline(dir: &Path, separation: &str) -> Result<(serde_json::Value, serde_json::Value), String> {
    std::fs::create_dir_all(dir).unwrap();
    let out = s(dir);
    // Table-1-like imbalance; the training split matches the DR class sizes
    cli_ok(&["--out", out, "synth", "dataset", "--counts", "65,25,64,50,40", "--separation", separation, "--test-fraction", "0.2"], None)?;
    let table = dir.join("dataset.csv");
    cli_ok(&["--out", out, "--deterministic", "train", s(&table), "--models", "RFC,XGB"], None)?;
    cli_ok(&["--out", out, "--deterministic", "evaluate", s(&table), "--train-report", s(&dir.join("train.json"))], None)?;
    Ok((json(&dir.join("train.json")), json(&dir.join("evaluate.json"))))
}

fn c7_pipeline() -> Outcome {
    let d = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let mut lines = Vec::new();
    for (sep, lo, hi) in [("6", 0.90, 1.0), ("0", 0.40, 0.60)] {
        let (train, eval) = pipeline(&d.path().join(format!("sep{sep}")), sep)?;
        let counts = &train["class_counts"];
        ensure(counts.as_object().unwrap().values().map(|v| v.as_u64().unwrap()).collect::<Vec<_>>() == [52, 20, 51, 40, 32], || {
            format!("training class counts {counts}")
        })?;
        for model in ["RFC", "XGB"] {
            let cv = train["ranking"].as_array().unwrap().iter().find(|r| r["model"] == model).unwrap();
            let test = eval["results"].as_array().unwrap().iter().find(|r| r["model_id"] == model).unwrap();
            let (m, t) = (cv["mean"].as_f64().unwrap(), test["test_score"].as_f64().unwrap());
            ensure((lo..=hi).contains(&m) && (lo..=hi).contains(&t), || {
                format!("separation {sep}, {model}: nested CV {m:.3}, test {t:.3} outside [{lo}, {hi}]")
            })?;
            lines.push(format!("sep {sep} {model} cv {m:.3} test {t:.3}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 300.0, || format!("took {secs:.0} s"))?;
    Ok(format!("{} ({secs:.0} s)", lines.join("; ")))
}

// ---------------------------------------------------------------------------
// 8. leakage guards
// ---------------------------------------------------------------------------

fn c8_leakage() -> Outcome {
    let table = make_separable_dataset(&DatasetSpec { class_counts: vec![30, 24, 30], n_features: 6, separation: 2.0, seed: 8 })
        .map_err(|e| e.to_string())?;
    let spec = parse_grids(r#"{"DTC": {"max_depth": [1, 2, 4, null], "criterion": ["gini", "entropy"]}}"#)
        .map_err(|e| e.to_string())?
        .remove(0);
    let (rows, y) = table.rows();
    let opts = CvOptions { seed: 8, ..Default::default() };
    let base = nested_cv(&spec, &rows, &y, &opts).map_err(|e| e.to_string())?;
    let folds = outer_folds(&y, &opts).map_err(|e| e.to_string())?;
    let mut r = rng::stream(88, 0);
    for (f, test) in folds.iter().enumerate() {
        let mut mutated = rows.clone();
        for &i in test {
            for v in &mut mutated[i] {
                *v = if r.random::<f64>() < 0.2 { None } else { Some(1e4 * r.random_range(-1.0..1.0)) };
            }
        }
        let train: Vec<usize> = (0..y.len()).filter(|i| !test.contains(i)).collect();
        let pick = |rs: &[Vec<Option<f64>>]| train.iter().map(|&i| rs[i].clone()).collect::<Vec<_>>();
        ensure(
            Preprocessor::fit(&pick(&rows)).unwrap() == Preprocessor::fit(&pick(&mutated)).unwrap(),
            || format!("fold {f}: scaler moved"),
        )?;
        let after = nested_cv(&spec, &mutated, &y, &opts).map_err(|e| e.to_string())?;
        ensure(after.folds[f].params == base.folds[f].params && after.folds[f].inner_score == base.folds[f].inner_score, || {
            format!("fold {f}: selection changed")
        })?;
    }

    // held-out test split: refits pick the same hyperparameters however the test rows look
    let mut split = retina_vasc::features::stratified_split(&table, 0.25, 3).map_err(|e| e.to_string())?;
    let train = split.filtered(|r| r.split != Split::Test);
    let test = split.subset(Split::Test);
    let specs = vec![spec.clone()];
    let a = evaluate_test(&specs, &train, &test, Task::Grading, &opts).map_err(|e| e.to_string())?;
    for rec in split.records.iter_mut().filter(|r| r.split == Split::Test) {
        rec.features.iter_mut().for_each(|v| *v = v.map(|x| -x * 50.0));
    }
    let b = evaluate_test(&specs, &train, &split.subset(Split::Test), Task::Grading, &opts).map_err(|e| e.to_string())?;
    ensure(a[0].params == b[0].params, || "test mutation changed the refit hyperparameters".into())?;

    // overlapping ids abort with exit code 2
    let d = tempfile::tempdir().unwrap();
    let out = s(d.path());
    cli_ok(&["--out", out, "synth", "dataset", "--counts", "20,20", "--features", "4"], None)?;
    let t = d.path().join("dataset.csv");
    cli_ok(&["--out", out, "train", s(&t), "--models", "GNB"], None)?;
    let o = cli(&["--out", out, "evaluate", s(&t), "--test-table", s(&t), "--train-report", s(&d.path().join("train.json"))], None);
    ensure(o.status.code() == Some(2), || format!("overlap exited {:?}", o.status.code()))?;
    Ok(format!("{} outer folds unchanged by test mutation; overlap exit code 2", folds.len()))
}

// ---------------------------------------------------------------------------
// 9. report shapes
// ---------------------------------------------------------------------------

fn small_config(dir: &Path) -> PathBuf {
    std::fs::write(
        dir.join("grids.json"),
        r#"{"KNC": {"n_neighbors": [3, 7]}, "DTC": {"max_depth": [2, null]}, "GNB": {}, "LR": {"C": [1.0, 10.0]}, "RFC": {"n_estimators": [10], "max_depth": [3, null]}, "XGB": {"n_estimators": [20], "learning_rate": [0.1]}}"#,
    )
    .unwrap();
    let cfg = dir.join("config.json");
    std::fs::write(
        &cfg,
        r#"{"grid_file": "grids.json", "top_k": 3, "explain_samples": 4, "background_size": 24, "perplexity": 10, "tsne_iterations": 300}"#,
    )
    .unwrap();
    cfg
}

const TRAIN_GOLDEN: &str = "\
Task | Best Model | Train Perf. ROCAUC | Test Perf. ROCAUC | Train Time in min
-----|------------|--------------------|-------------------|------------------
Disease Grading
DR   | GNB        | .867±.071          | -                 | .000

Rank | Model | ROCAUC (mean±std) | Train Time in min
-----|-------|-------------------|------------------
1    | GNB   | .867±.071         | .000
2    | LR    | .864±.073         | .000
3    | KNC   | .794±.036         | .000
4    | DTC   | .668±.083         | .000
";

fn is_score(s: &str) -> bool {
    s.len() == 4 && s.starts_with('.') && s[1..].bytes().all(|b| b.is_ascii_digit())
}

fn c9_reports() -> Outcome {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let (out, c) = (s(d.path()), s(&cfg));
    cli_ok(&["--out", out, "--config", c, "synth", "dataset", "--counts", "40,30,40", "--features", "8", "--separation", "2"], None)?;
    let table = d.path().join("dataset.csv");
    cli_ok(&["--out", out, "--config", c, "--deterministic", "train", s(&table), "--models", "KNC,DTC,GNB,LR"], None)?;
    let txt = std::fs::read_to_string(d.path().join("train.txt")).unwrap();
    let body: String = txt.lines().filter(|l| !l.starts_with("# ")).map(|l| format!("{l}\n")).collect();
    ensure(body == TRAIN_GOLDEN, || format!("train.txt body differs:\n{body}"))?;
    // column structure of the published results table
    let header: Vec<&str> = body.lines().next().unwrap().split(" | ").map(str::trim).collect();
    ensure(header == ["Task", "Best Model", "Train Perf. ROCAUC", "Test Perf. ROCAUC", "Train Time in min"], || format!("{header:?}"))?;
    let row: Vec<&str> = body.lines().nth(3).unwrap().split(" | ").map(str::trim).collect();
    let (m, sd) = row[2].split_once('±').ok_or("no ±")?;
    ensure(is_score(m) && is_score(sd), || format!("m±s cell {:?}", row[2]))?;

    let sentence = cli_ok(&["--out", out, "regress", s(&table)], None)?;
    let sentence = sentence.trim();
    let (head, rest) = sentence.split_once(" = ").ok_or("no F value")?;
    let dfs: Vec<&str> = head.strip_prefix("F(").and_then(|h| h.strip_suffix(')')).ok_or("no F(df1, df2)")?.split(", ").collect();
    ensure(dfs.len() == 2 && dfs.iter().all(|v| v.parse::<usize>().is_ok()), || sentence.to_string())?;
    let parts: Vec<&str> = rest.split(", ").collect();
    ensure(parts.len() == 3, || sentence.to_string())?;
    let f_ok = parts[0].split_once('.').is_some_and(|(i, f)| i.parse::<u64>().is_ok() && f.len() == 3);
    let p_ok = parts[1] == "p<.0005" || parts[1].strip_prefix("p=").is_some_and(is_score);
    let r_ok = parts[2].strip_prefix("R² = ").is_some_and(|r| is_score(r) || r == "1.000");
    ensure(f_ok && p_ok && r_ok, || format!("sentence {sentence:?}"))?;
    Ok(format!("train.txt matches golden; regress: {sentence}"))
}

// ---------------------------------------------------------------------------
// 10. determinism across thread counts
// ---------------------------------------------------------------------------

fn full_pipeline(root: &Path, cfg: &Path, threads: usize) -> Result<PathBuf, String> {
    let dir = root.join(format!("t{threads}"));
    std::fs::create_dir_all(&dir).unwrap();
    let base = ["--out", s(&dir), "--config", s(cfg), "--deterministic"];
    let run = |rest: &[&str]| cli_ok(&[&base[..], rest].concat(), Some(threads));
    let trees = dir.join("trees");
    let tbase = ["--out", s(&trees), "--config", s(cfg), "--deterministic"];
    cli_ok(&[&tbase[..], &["synth", "tree", "--depth", "3", "--asymmetry", "0.7"]].concat(), Some(threads))?;
    std::fs::rename(trees.join("tree.json"), dir.join("img_a.json")).map_err(|e| e.to_string())?;
    cli_ok(&[&tbase[..], &["--force", "synth", "tree", "--depth", "2", "--tortuosity", "0.04"]].concat(), Some(threads))?;
    std::fs::rename(trees.join("tree.json"), dir.join("img_b.json")).map_err(|e| e.to_string())?;
    run(&["quantify", s(&dir.join("img_a.json")), s(&dir.join("img_b.json")), "--grade", "2"])?;
    run(&["synth", "dataset", "--test-fraction", "0.2", "--separation", "3"])?;
    let table = dir.join("dataset.csv");
    run(&["regress", s(&table)])?;
    run(&["train", s(&table)])?;
    let report = dir.join("train.json");
    run(&["evaluate", s(&table), "--train-report", s(&report)])?;
    run(&["explain", s(&table), "--train-report", s(&report)])?;
    run(&["tsne", s(&table)])?;
    Ok(dir)
}

fn c10_determinism() -> Outcome {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let one = full_pipeline(d.path(), &cfg, 1)?;
    let eight = full_pipeline(d.path(), &cfg, 8)?;
    let mut names: Vec<String> = std::fs::read_dir(&one)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json") || n.ends_with(".csv"))
        .collect();
    names.sort();
    let expected = [
        "dataset.csv", "evaluate.json", "explain.json", "features.csv", "features.diagnostics.json", "img_a.json",
        "img_b.json", "importance.csv", "regress.json", "train.json", "tsne.json",
    ];
    ensure(names == expected, || format!("artifacts {names:?}"))?;
    names.push("trees/tree_truth.json".into());
    for n in &names {
        let a = std::fs::read(one.join(n)).unwrap();
        let b = std::fs::read(eight.join(n)).map_err(|e| format!("{n}: {e}"))?;
        ensure(a == b, || format!("{n} differs between 1 and 8 threads"))?;
    }
    // the training ran all runnable models, so the forests and boosting were exercised
    let train = json(&one.join("train.json"));
    ensure(train["ranking"].as_array().unwrap().len() == 6, || "expected 6 ranked models".into())?;
    ensure(read_csv(&one.join("features.csv"), None).map_err(|e| e.to_string())?.len() == 2, || "features.csv rows".into())?;
    Ok(format!("{} JSON/CSV artifacts byte-identical", names.len()))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("parameter-engine oracle suite", c1_parameter_oracles),
        ("Knudtson pairing", c2_knudtson),
        ("fractal dimension", c3_fractal),
        ("ROC-AUC exactness", c4_auc),
        ("Shapley correctness", c5_shapley),
        ("stepwise regression", c6_stepwise),
        ("end-to-end pipeline", c7_pipeline),
        ("leakage guards", c8_leakage),
        ("report fidelity", c9_reports),
        ("determinism across thread counts", c10_determinism),
    ];
    let mut failed = Vec::new();
    println!();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                println!("FAIL {:>2} {name}: {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
