//! One function per subcommand. Each claims its outputs first, so a refused
//! overwrite leaves the directory untouched.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context as _};
use retina_vasc::explain::{
    aggregate_importance, background_sample, shapley_exact, shapley_sampled, ClassProbability, Explanation,
    MAX_EXACT_FEATURES,
};
use retina_vasc::features::{
    filter_gradable, parse_csv, registry, stratified_split, to_csv_string, FeatureTable, GradeSchema, MedianImputer,
    Split,
};
use retina_vasc::ml::{
    fit_final, format_mean_std, format_minutes, mean_std, nested_cv, top_k, tsne_embed, CvOptions, EvalReport,
    ModelId, ModelSpec, Preprocessor, Task, TsneOptions,
};
use retina_vasc::numfmt::score3;
use retina_vasc::params::{fractal_dimension, quantify_with, QuantifyOptions, FD_BOX_SIZES};
use retina_vasc::rng::derive;
use retina_vasc::stats::{stepwise_select, vif, StepwiseOptions};
use retina_vasc::synth::{generate_tree_for_zones, koch_raster, make_separable_dataset, DatasetSpec, TreeSpec};
use retina_vasc::vessel::{VesselGraph, ZoneId};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::output::{Ctx, Internal};
use crate::{svg, DatasetArgs, EvaluateArgs, ExplainArgs, KochArgs, QuantifyArgs, RegressArgs, TableArg, TrainArgs, TreeArgs};

fn timestamp(ctx: &Ctx) -> Option<u64> {
    if ctx.deterministic {
        None
    } else {
        SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
    }
}

fn provenance_string(ctx: &Ctx) -> String {
    serde_json::to_string(&ctx.provenance()).expect("provenance serializes")
}

fn read_table(ctx: &mut Ctx, path: &Path) -> anyhow::Result<FeatureTable> {
    let text = ctx.read_input(path)?;
    parse_csv(&text, Some(ctx.cfg.disease)).with_context(|| format!("reading table {}", path.display()))
}

/// Gradable, comorbidity-free records, with the filter report.
fn eligible(table: &FeatureTable) -> (FeatureTable, Value) {
    let (kept, report) = filter_gradable(table);
    if report.kept < report.input {
        log::info!("dropped {} ungradable and {} comorbid records", report.dropped_ungradable, report.dropped_comorbidity);
    }
    (kept, serde_json::to_value(&report).expect("filter report serializes"))
}

fn cv_options(ctx: &Ctx) -> CvOptions {
    CvOptions { k_outer: ctx.cfg.k_outer, k_inner: ctx.cfg.k_inner, seed: ctx.seed() }
}

fn task_label(disease: impl std::fmt::Display, task: Task) -> String {
    format!("{disease} {}", section(task))
}

fn section(task: Task) -> &'static str {
    match task {
        Task::Detection => "Detection",
        Task::Grading => "Grading",
    }
}

fn class_counts(y: &[usize]) -> BTreeMap<usize, usize> {
    let mut m = BTreeMap::new();
    for &c in y {
        *m.entry(c).or_insert(0) += 1;
    }
    m
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

pub fn synth_tree(ctx: &mut Ctx, a: &TreeArgs) -> anyhow::Result<()> {
    ctx.claim(&["tree.json", "tree_truth.json"])?;
    // a spec file keeps its own seed; otherwise the run seed is used
    let spec = match &a.spec {
        Some(p) => {
            let text = ctx.read_input(p)?;
            serde_json::from_str::<TreeSpec>(&text).with_context(|| format!("parsing tree spec {}", p.display()))?
        }
        None => TreeSpec {
            tortuosity_amplitude: a.tortuosity,
            asymmetry: a.asymmetry,
            ..TreeSpec::new(a.arterioles, a.venules, a.depth, ctx.seed())
        },
    };
    ctx.add_seed("tree", spec.seed);
    let zones = ctx.cfg.zone_specs()?;
    let (graph, truth) = generate_tree_for_zones(&spec, &zones)?;
    if !graph.is_valid() {
        return Err(Internal(format!("generated graph fails validation: {:?}", graph.validate())).into());
    }
    // provenance first, then the graph's own fixed field order
    let body = graph.to_json();
    let doc = format!("{{\"provenance\":{},{}\n", provenance_string(ctx), &body[1..]);
    ctx.write_raw("tree.json", &doc)?;
    ctx.write_json("tree_truth.json", &json!({ "spec": spec, "truth": truth }))?;
    println!("{} segments, {} junctions", graph.segments.len(), graph.junctions.len());
    Ok(())
}

pub fn synth_koch(ctx: &mut Ctx, a: &KochArgs) -> anyhow::Result<()> {
    ctx.claim(&["koch.pbm", "koch_truth.json"])?;
    let r = koch_raster(a.level, a.size)?;
    let theory = 4f64.ln() / 3f64.ln();
    let measured = fractal_dimension(&r, &FD_BOX_SIZES)?;
    // plain PBM, wrapped at 70 characters
    let mut pbm = String::from("P1\n");
    for (k, v) in ctx.header_lines() {
        let _ = writeln!(pbm, "# {k}: {v}");
    }
    let _ = writeln!(pbm, "{} {}", r.width(), r.height());
    for y in 0..r.height() {
        let bits: Vec<&str> = (0..r.width()).map(|x| if r.get(x, y) { "1" } else { "0" }).collect();
        for chunk in bits.chunks(35) {
            let _ = writeln!(pbm, "{}", chunk.join(" "));
        }
    }
    ctx.write_raw("koch.pbm", &pbm)?;
    ctx.write_json(
        "koch_truth.json",
        &json!({
            "level": a.level,
            "size": a.size,
            "foreground_pixels": r.count(),
            "box_sizes": FD_BOX_SIZES,
            "similarity_dimension": theory,
            "box_counting_dimension": measured,
        }),
    )?;
    println!("similarity dimension {theory:.4}, box-counting {measured:.4}");
    Ok(())
}

pub fn synth_dataset(ctx: &mut Ctx, a: &DatasetArgs) -> anyhow::Result<()> {
    ctx.claim(&["dataset.csv"])?;
    let spec = DatasetSpec {
        class_counts: a.counts.clone(),
        n_features: a.features,
        separation: a.separation,
        seed: ctx.seed(),
    };
    let mut table = make_separable_dataset(&spec)?;
    if let Some(f) = a.test_fraction {
        let split_seed = derive(ctx.seed(), 1);
        ctx.add_seed("split", split_seed);
        table = stratified_split(&table, f, split_seed)?;
    }
    let csv = to_csv_string(&table, &ctx.header_lines())?;
    ctx.write_raw("dataset.csv", &csv)?;
    println!("{} records, {} features", table.len(), table.feature_names.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// quantify
// ---------------------------------------------------------------------------

/// Appends to (or creates) the feature table. Re-quantifying an image id
/// already in the table is refused unless `--force`, which replaces the row.
pub fn quantify(ctx: &mut Ctx, a: &QuantifyArgs) -> anyhow::Result<()> {
    let zones = ctx.cfg.zone_specs()?;
    let ids: Vec<ZoneId> = zones.iter().map(|z| z.zone_id).collect();
    let names = registry(&ids);
    let schema = GradeSchema::new(ctx.cfg.disease);
    if !schema.is_valid(a.grade) {
        bail!("grade {} is not valid for {}", a.grade, ctx.cfg.disease);
    }
    std::fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))?;
    let table_path = ctx.path(&a.table);
    let mut table = if table_path.exists() {
        let t = read_table(ctx, &table_path)?;
        if t.feature_names != names {
            bail!("{} has different feature columns than zones {:?}", table_path.display(), ctx.cfg.zones);
        }
        t
    } else {
        FeatureTable::new(schema, names)
    };

    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    for path in &a.graphs {
        let text = ctx.read_input(path)?;
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).ok_or_else(|| anyhow!("bad path"))?;
        let graph = VesselGraph::from_json(&text).with_context(|| format!("parsing graph {}", path.display()))?;
        let q = quantify_with(&graph, &zones, &QuantifyOptions::default())
            .with_context(|| format!("quantifying {}", path.display()))?;
        for d in &q.diagnostics {
            log::warn!("{id}: {}: {}", d.subject, d.message);
        }
        diagnostics.push(json!({ "image_id": id, "diagnostics": q.diagnostics }));
        rows.push(table.record_from_vector(&id, a.grade, &q.features));
    }
    for r in rows {
        if let Some(i) = table.records.iter().position(|x| x.image_id == r.image_id) {
            if !ctx.force {
                bail!("image {:?} is already in {}; pass --force to replace it", r.image_id, table_path.display());
            }
            table.records.remove(i);
        }
        table.push(r)?;
    }

    // diagnostics accumulate alongside the table
    let diag_name = format!("{}.diagnostics.json", Path::new(&a.table).file_stem().unwrap_or_default().to_string_lossy());
    let diag_path = ctx.path(&diag_name);
    let mut images: Vec<Value> = Vec::new();
    if diag_path.exists() {
        let old: Value = serde_json::from_str(&std::fs::read_to_string(&diag_path)?)
            .with_context(|| format!("parsing {}", diag_path.display()))?;
        let fresh: Vec<&Value> = diagnostics.iter().map(|d| &d["image_id"]).collect();
        images.extend(
            old["images"].as_array().into_iter().flatten().filter(|d| !fresh.contains(&&d["image_id"])).cloned(),
        );
    }
    images.extend(diagnostics);

    let csv = to_csv_string(&table, &ctx.header_lines())?;
    ctx.write_raw(&a.table, &csv)?;
    ctx.write_json(&diag_name, &json!({ "images": images }))?;
    println!("{} now holds {} records", table_path.display(), table.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// regress
// ---------------------------------------------------------------------------

pub fn regress(ctx: &mut Ctx, a: &RegressArgs) -> anyhow::Result<()> {
    ctx.claim(&["regress.json", "regress.txt"])?;
    let table = read_table(ctx, &a.table)?;
    let (table, filter) = eligible(&table);
    let (rows, grades) = table.rows();
    if rows.is_empty() {
        bail!("no eligible records in {}", a.table.display());
    }
    // columns without a single observation cannot be imputed
    let keep: Vec<usize> = (0..table.feature_names.len()).filter(|&j| rows.iter().any(|r| r[j].is_some())).collect();
    let dropped: Vec<String> = (0..table.feature_names.len())
        .filter(|j| !keep.contains(j))
        .map(|j| table.feature_names[j].to_string())
        .collect();
    let rows: Vec<Vec<Option<f64>>> = rows.iter().map(|r| keep.iter().map(|&j| r[j]).collect()).collect();
    let names: Vec<String> = keep.iter().map(|&j| table.feature_names[j].to_string()).collect();
    let x = MedianImputer::fit(&rows)?.transform(&rows)?;
    let y: Vec<f64> = grades.iter().map(|&g| g as f64).collect();

    let opts = StepwiseOptions { p_enter: a.p_enter, p_remove: a.p_remove, ..Default::default() };
    let report = stepwise_select(&x, &y, &names, &opts)?;
    let idx: Vec<usize> = report.selected.iter().map(|s| names.iter().position(|n| n == s).expect("selected name")).collect();
    let vifs = if idx.len() >= 2 && x.len() > idx.len() {
        let xs: Vec<Vec<f64>> = x.iter().map(|r| idx.iter().map(|&j| r[j]).collect()).collect();
        Some(vif(&xs, &report.selected)?)
    } else {
        None
    };

    let sentence = report.sentence();
    let mut txt = format!("{sentence}\n\n");
    let _ = writeln!(txt, "n = {}, selected {} of {} features", report.n, report.selected.len(), names.len());
    let _ = writeln!(txt, "{:<14} {:>12} {:>12} {:>10} {:>10}", "feature", "estimate", "std_error", "t", "p");
    let _ = writeln!(txt, "{:<14} {:>12.5}", "(intercept)", report.intercept);
    for c in &report.coefficients {
        let _ = writeln!(txt, "{:<14} {:>12.5} {:>12.5} {:>10.3} {:>10.4}", c.feature, c.estimate, c.std_error, c.t, c.p_value);
    }
    if let Some(v) = &vifs {
        let _ = writeln!(txt, "\nVIF");
        for e in &v.entries {
            let _ = writeln!(txt, "{:<14} {:>10.3}", e.feature, e.vif);
        }
    }
    ctx.write_json(
        "regress.json",
        &json!({
            "sentence": sentence,
            "filter": filter,
            "dropped_columns": dropped,
            "options": opts,
            "report": report,
            "vif": vifs,
        }),
    )?;
    ctx.write_text("regress.txt", &txt)?;
    println!("{sentence}");
    Ok(())
}

// ---------------------------------------------------------------------------
// train / evaluate
// ---------------------------------------------------------------------------

/// Records used for model selection: eligible and not held out for test.
fn training_table(table: &FeatureTable) -> (FeatureTable, Value) {
    let (t, filter) = eligible(table);
    (t.filtered(|r| r.split != Split::Test), filter)
}

const TABLE_HEADER: [&str; 5] = ["Task", "Best Model", "Train Perf. ROCAUC", "Test Perf. ROCAUC", "Train Time in min"];

/// Pipe-separated table with padded columns and an optional section line
/// above the rows.
fn render_table(header: &[&str], section: Option<&str>, rows: &[Vec<String>]) -> String {
    let mut w: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (i, c) in r.iter().enumerate() {
            w[i] = w[i].max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let padded: Vec<String> =
            cells.iter().enumerate().map(|(i, c)| format!("{c}{}", " ".repeat(w[i] - c.chars().count()))).collect();
        format!("{}\n", padded.join(" | ").trim_end())
    };
    let mut s = line(header.to_vec());
    s.push_str(&format!("{}\n", w.iter().map(|&n| "-".repeat(n)).collect::<Vec<_>>().join("-|-")));
    if let Some(sec) = section {
        s.push_str(&format!("Disease {sec}\n"));
    }
    for r in rows {
        s.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    s
}

pub fn train(ctx: &mut Ctx, a: &TrainArgs) -> anyhow::Result<()> {
    ctx.claim(&["train.json", "train.txt"])?;
    let task = ctx.cfg.task;
    let specs = ctx.cfg.training_grids()?;
    let table = read_table(ctx, &a.table)?;
    let (table, filter) = training_table(&table);
    let (rows, _) = table.rows();
    let y = task.labels(&table);
    if rows.is_empty() {
        bail!("no eligible training records in {}", a.table.display());
    }
    let opts = cv_options(ctx);

    let mut reports: Vec<EvalReport> = Vec::with_capacity(specs.len());
    for spec in &specs {
        log::info!("nested CV for {} ({} grid points)", spec.model_id, spec.n_points());
        let mut r = nested_cv(spec, &rows, &y, &opts)?;
        let (m, s) = mean_std(&r.fold_scores());
        if (m - r.mean).abs() > 1e-12 || (s - r.std).abs() > 1e-12 {
            return Err(Internal(format!("{} summary disagrees with its fold scores", r.model_id)).into());
        }
        if let Some(note) = &r.fold_reduction {
            log::warn!("{}: {note}", r.model_id);
        }
        r.train_minutes = ctx.minutes(r.train_minutes);
        reports.push(r);
    }
    let ranked = top_k(&reports, reports.len());
    let best = ranked[0];
    let summary = vec![ctx.cfg.disease.to_string(), best.model_id.to_string(), best.mean_std(), "-".into(), format_minutes(best.train_minutes)];
    let ranking: Vec<Value> = ranked
        .iter()
        .enumerate()
        .map(|(i, r)| {
            json!({
                "rank": i + 1,
                "model": r.model_id,
                "mean": r.mean,
                "std": r.std,
                "rocauc": r.mean_std(),
                "train_minutes": r.train_minutes,
                "top_k": i < ctx.cfg.top_k,
            })
        })
        .collect();

    let mut txt = render_table(&TABLE_HEADER, Some(section(task)), &[summary]);
    txt.push('\n');
    let rank_rows: Vec<Vec<String>> = ranked
        .iter()
        .enumerate()
        .map(|(i, r)| vec![(i + 1).to_string(), r.model_id.to_string(), r.mean_std(), format_minutes(r.train_minutes)])
        .collect();
    txt.push_str(&render_table(&["Rank", "Model", "ROCAUC (mean±std)", "Train Time in min"], None, &rank_rows));

    ctx.write_json(
        "train.json",
        &json!({
            "task": task,
            "disease": ctx.cfg.disease,
            "filter": filter,
            "n_train": rows.len(),
            "class_counts": class_counts(&y),
            "best_model": best.model_id,
            "ranking": ranking,
            "reports": reports,
        }),
    )?;
    ctx.write_text("train.txt", &txt)?;
    print!("{txt}");
    Ok(())
}

#[derive(Deserialize)]
struct RankEntry {
    model: ModelId,
    mean: f64,
    std: f64,
    train_minutes: f64,
}

#[derive(Deserialize)]
struct TrainSummary {
    task: Task,
    ranking: Vec<RankEntry>,
}

fn read_train_report(ctx: &mut Ctx, path: &Path) -> anyhow::Result<TrainSummary> {
    let text = ctx.read_input(path)?;
    let s: TrainSummary =
        serde_json::from_str(&text).with_context(|| format!("parsing train report {}", path.display()))?;
    if s.ranking.is_empty() {
        bail!("train report {} ranks no models", path.display());
    }
    Ok(s)
}

fn spec_for(ctx: &Ctx, id: ModelId) -> anyhow::Result<ModelSpec> {
    if !id.is_runnable() {
        bail!("{id} is parsed but not implemented");
    }
    ctx.cfg.all_grids()?.into_iter().find(|s| s.model_id == id).with_context(|| format!("no grid for {id}"))
}

pub fn evaluate(ctx: &mut Ctx, a: &EvaluateArgs) -> anyhow::Result<()> {
    ctx.claim(&["evaluate.json", "evaluate.txt"])?;
    let summary = read_train_report(ctx, &a.train_report)?;
    let table = read_table(ctx, &a.table)?;
    let (train, test) = match &a.test_table {
        Some(p) => {
            let t = read_table(ctx, p)?;
            (eligible(&table).0, eligible(&t).0)
        }
        None => {
            table.check_disjoint_splits()?;
            let e = eligible(&table).0;
            (e.filtered(|r| r.split != Split::Test), e.subset(Split::Test))
        }
    };
    if test.is_empty() {
        bail!("no test records: pass --test-table or mark rows with split=test");
    }
    let chosen: Vec<&RankEntry> = summary.ranking.iter().take(ctx.cfg.top_k).collect();
    let specs: Vec<ModelSpec> = chosen.iter().map(|e| spec_for(ctx, e.model)).collect::<anyhow::Result<_>>()?;
    let mut results = retina_vasc::ml::evaluate_test(&specs, &train, &test, summary.task, &cv_options(ctx))?;
    for r in &mut results {
        r.train_minutes = ctx.minutes(r.train_minutes);
    }
    let best = &results[0];
    let cv = chosen.iter().find(|e| e.model == best.model_id).expect("best model was ranked");
    let row = vec![
        ctx.cfg.disease.to_string(),
        best.model_id.to_string(),
        format_mean_std(cv.mean, cv.std),
        score3(best.test_score),
        format_minutes(cv.train_minutes),
    ];
    let mut txt = render_table(&TABLE_HEADER, Some(section(summary.task)), &[row]);
    txt.push('\n');
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            let e = chosen.iter().find(|e| e.model == r.model_id).expect("ranked");
            vec![r.rank.to_string(), r.model_id.to_string(), format_mean_std(e.mean, e.std), score3(r.test_score)]
        })
        .collect();
    txt.push_str(&render_table(&["Rank", "Model", "Train Perf. ROCAUC", "Test Perf. ROCAUC"], None, &rows));
    ctx.write_json(
        "evaluate.json",
        &json!({
            "task": summary.task,
            "n_train": train.len(),
            "n_test": test.len(),
            "best_model": best.model_id,
            "results": results,
        }),
    )?;
    ctx.write_text("evaluate.txt", &txt)?;
    print!("{txt}");
    Ok(())
}

// ---------------------------------------------------------------------------
// explain / tsne
// ---------------------------------------------------------------------------

pub fn explain(ctx: &mut Ctx, a: &ExplainArgs) -> anyhow::Result<()> {
    ctx.claim(&["explain.json", "importance.csv", "importance.svg"])?;
    let (model_id, task) = match (&a.model, &a.train_report) {
        (Some(m), r) => {
            let task = match r {
                Some(p) => read_train_report(ctx, p)?.task,
                None => ctx.cfg.task,
            };
            (*m, task)
        }
        (None, Some(p)) => {
            let s = read_train_report(ctx, p)?;
            (s.ranking[0].model, s.task)
        }
        (None, None) => bail!("pass --model or --train-report"),
    };
    let spec = spec_for(ctx, model_id)?;
    let table = read_table(ctx, &a.table)?;
    let (table, _) = training_table(&table);
    let (rows, _) = table.rows();
    if rows.is_empty() {
        bail!("no eligible training records in {}", a.table.display());
    }
    let y = task.labels(&table);
    let (pipe, grid) = fit_final(&spec, &rows, &y, &cv_options(ctx))?;
    let x = pipe.preprocessor.transform(&rows)?;
    let features: Vec<String> = table.feature_names.iter().map(ToString::to_string).collect();
    let p = features.len();

    let bg_seed = derive(ctx.seed(), 11);
    let pick_seed = derive(ctx.seed(), 12);
    ctx.add_seed("background", bg_seed);
    ctx.add_seed("samples", pick_seed);
    let background = background_sample(&x, ctx.cfg.background_size, bg_seed);
    // the same without-replacement draw, applied to row indices
    let index_rows: Vec<Vec<f64>> = (0..x.len()).map(|i| vec![i as f64]).collect();
    let picked: Vec<usize> =
        background_sample(&index_rows, ctx.cfg.explain_samples, pick_seed).iter().map(|r| r[0] as usize).collect();
    let exact = p <= MAX_EXACT_FEATURES;

    let mut explanations: Vec<Explanation> = Vec::with_capacity(picked.len());
    let mut entries = Vec::with_capacity(picked.len());
    for &i in &picked {
        let f = ClassProbability::predicted(&pipe.model, &x[i])?;
        let e = if exact {
            shapley_exact(&f, &background, &x[i], &features)?
        } else {
            shapley_sampled(&f, &background, &x[i], &features, ctx.cfg.permutations, derive(ctx.seed(), 1000 + i as u64))?
        };
        if e.efficiency_gap().abs() > 1e-9 {
            return Err(Internal(format!("attributions for {} miss efficiency by {:e}", table.records[i].image_id, e.efficiency_gap())).into());
        }
        entries.push(json!({
            "image_id": table.records[i].image_id,
            "grade": table.records[i].grade,
            "target_class": pipe.model.classes[f.index()],
            "explanation": e,
        }));
        explanations.push(e);
    }
    let importance = aggregate_importance(&explanations)?;

    let mut csv = String::new();
    for (k, v) in ctx.header_lines() {
        let _ = writeln!(csv, "# {k}: {v}");
    }
    csv.push_str("rank,feature,mean_abs_phi\n");
    for (r, imp) in importance.iter().enumerate() {
        let _ = writeln!(csv, "{},{},{:?}", r + 1, imp.feature, imp.mean_abs_phi);
    }
    let bars: Vec<(String, f64)> =
        importance.iter().take(ctx.cfg.top_features).map(|i| (i.feature.clone(), i.mean_abs_phi)).collect();
    let title = format!("{model_id} feature importance ({})", task_label(ctx.cfg.disease, task));
    let chart = svg::bar_chart(&title, &bars, "mean |SHAP value|", &provenance_string(ctx), timestamp(ctx));

    ctx.write_json(
        "explain.json",
        &json!({
            "model": model_id,
            "task": task,
            "params": grid.best,
            "method": if exact { "exact" } else { "permutation" },
            "permutations": if exact { None } else { Some(ctx.cfg.permutations) },
            "background_size": background.len(),
            "explanations": entries,
            "importance": importance,
        }),
    )?;
    ctx.write_raw("importance.csv", &csv)?;
    ctx.write_raw("importance.svg", &chart)?;
    for imp in importance.iter().take(5) {
        println!("{:<12} {:.4}", imp.feature, imp.mean_abs_phi);
    }
    Ok(())
}

pub fn tsne(ctx: &mut Ctx, a: &TableArg) -> anyhow::Result<()> {
    ctx.claim(&["tsne.json", "tsne.svg"])?;
    let table = read_table(ctx, &a.table)?;
    let (table, _) = eligible(&table);
    let (rows, grades) = table.rows();
    let x = Preprocessor::fit(&rows)?.transform(&rows)?;
    let opts = TsneOptions {
        perplexity: ctx.cfg.perplexity,
        iterations: ctx.cfg.tsne_iterations,
        seed: ctx.seed(),
        ..Default::default()
    };
    let res = tsne_embed(&x, &opts)?;
    let points: Vec<Value> = table
        .records
        .iter()
        .zip(&res.embedding)
        .map(|(r, e)| json!({ "image_id": r.image_id, "grade": r.grade, "x": e[0], "y": e[1] }))
        .collect();
    let scatter: Vec<(f64, f64, usize)> = res.embedding.iter().zip(&grades).map(|(e, &g)| (e[0], e[1], g)).collect();
    let title = format!("t-SNE of {} records (perplexity {})", x.len(), opts.perplexity);
    let chart = svg::scatter(&title, &scatter, "grade", &provenance_string(ctx), timestamp(ctx));
    ctx.write_json(
        "tsne.json",
        &json!({
            "options": opts,
            "kl_initial": res.kl_initial,
            "kl_final": res.kl_final,
            "kl_history": res.kl_history,
            "points": points,
        }),
    )?;
    ctx.write_raw("tsne.svg", &chart)?;
    println!("KL {:.4} -> {:.4}", res.kl_initial, res.kl_final);
    Ok(())
}
