use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use monoalign::align::{
    derive_constraints, load_survey_csv, margin_scan_violations, pdp, unique_values, violations, write_pdp_csv,
    write_survey_csv, ConstraintVector, PdpCurve, SurveyAnswer, SurveyResponse, Violation,
};
use monoalign::data::{
    generate_synthetic, load_dataset, stratified_split, Dataset, Encoding, FeatureSchema, SplitSpec, SyntheticSpec,
};
use monoalign::distance::compare;
use monoalign::eval::{auc_roc, average_precision, read_curve_csv, CurvePoint};
use monoalign::experiment::store::read_choices;
use monoalign::experiment::{fit_choice_model, prepare, summary_stats, ExperimentBundle, ExperimentDesign, ResponseStore};
use monoalign::explain::tree_shap;
use monoalign::gbt::{train, MonotoneDirection, TreeEnsemble};
use monoalign::seed;
use monoalign::sweep::{run_sweep, SweepConfig};
use serde::Serialize;
use serde_json::{json, Value};

use crate::manifest::Manifest;
use crate::plot::{Chart, Series};
use crate::*;

pub fn dispatch(cmd: Command) -> Result<()> {
    let (out, name, resolved) = match &cmd {
        Command::Synth(a) => (a.out.clone(), "synth", synth(a)?),
        Command::Train(a) => (a.out.clone(), "train", train_cmd(a)?),
        Command::Pdp(a) => (a.out.clone(), "pdp", pdp_cmd(a)?),
        Command::Audit(a) => (a.out.clone(), "audit", audit(a)?),
        Command::Distance(a) => (a.out.clone(), "distance", distance(a)?),
        Command::Sweep(a) => (a.out.clone(), "sweep", sweep(a)?),
        Command::Curves(a) => (a.out.clone(), "curves", curves(a)?),
        Command::ExpPrepare(a) => (a.out.clone(), "exp-prepare", exp_prepare(a)?),
        Command::ExpAnalyze(a) => (a.out.clone(), "exp-analyze", exp_analyze(a)?),
        Command::ExpServe(a) => return exp_serve(&cmd, a),
        Command::Replay(a) => return replay(a),
    };
    let path = Manifest::new(&cmd, resolved).write(&out, name)?;
    log::info!("manifest written to {}", path.display());
    Ok(())
}

fn replay(a: &ReplayArgs) -> Result<()> {
    let mut cmd = Manifest::load(&a.manifest)?.command;
    if let Some(out) = &a.out {
        match &mut cmd {
            Command::Synth(c) => c.out = out.clone(),
            Command::Train(c) => c.out = out.clone(),
            Command::Pdp(c) => c.out = out.clone(),
            Command::Audit(c) => c.out = out.clone(),
            Command::Distance(c) => c.out = out.clone(),
            Command::Sweep(c) => c.out = out.clone(),
            Command::Curves(c) => c.out = out.clone(),
            Command::ExpPrepare(c) => c.out = out.clone(),
            Command::ExpAnalyze(c) => c.out = out.clone(),
            Command::ExpServe(_) => bail!("exp-serve has no output directory; edit --log in the manifest instead"),
            Command::Replay(_) => bail!("a manifest cannot record a replay"),
        }
    }
    dispatch(cmd)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_schema(path: &Path) -> Result<FeatureSchema> {
    FeatureSchema::load(path).with_context(|| format!("loading schema {}", path.display()))
}

fn load_data(path: &Path, schema: &FeatureSchema) -> Result<Dataset> {
    load_dataset(path, schema).with_context(|| format!("loading dataset {}", path.display()))
}

fn load_model(path: &Path) -> Result<TreeEnsemble> {
    TreeEnsemble::load(path).with_context(|| format!("loading model {}", path.display()))
}

/// `none`, a survey CSV, or a constraint-vector JSON.
fn load_constraints(source: &str, schema: &FeatureSchema) -> Result<ConstraintVector> {
    if source == "none" {
        return Ok(ConstraintVector::unconstrained(schema));
    }
    let path = Path::new(source);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let survey = load_survey_csv(path).with_context(|| format!("loading survey {source}"))?;
        let d = derive_constraints(&survey, schema)?;
        for f in &d.flagged {
            log::warn!("no strict survey majority for `{f}`; left unconstrained, review manually");
        }
        return Ok(d.constraints);
    }
    let c = ConstraintVector::load(path).with_context(|| format!("loading constraints {source}"))?;
    c.validate(schema).with_context(|| format!("constraints {source} do not match the schema"))?;
    Ok(c)
}

fn synth(a: &SynthArgs) -> Result<Value> {
    let mut spec = SyntheticSpec::desk(a.n, a.seed, a.label_noise);
    spec.missing_rate = a.missing_rate;
    let data = generate_synthetic(&spec)?;
    let schema = data.schema().clone();
    let split = SplitSpec {
        test_fraction: a.test_fraction,
        seed: seed::derive(a.seed, &[1]),
        stratify: true,
    };
    let (train, test) = stratified_split(&data, &split)?;

    create_dir(&a.out)?;
    schema.save(&a.out.join("schema.json"))?;
    data.write_csv(&a.out.join("data.csv"))?;
    train.write_csv(&a.out.join("train.csv"))?;
    test.write_csv(&a.out.join("test.csv"))?;

    let truth: Vec<(&str, MonotoneDirection)> = spec
        .monotone_features
        .iter()
        .map(|m| Ok((m.name.as_str(), MonotoneDirection::try_from(m.direction).map_err(|e| anyhow!(e))?)))
        .collect::<Result<_>>()?;
    ConstraintVector::manual(&schema, &truth)?.save(&a.out.join("truth.json"))?;

    // Each respondent dissents ("neither") on one true-monotone feature in
    // rotation; everyone answers "neither" for the noise features.
    let mut survey = Vec::with_capacity(a.respondents);
    for r in 0..a.respondents {
        let mut answers = BTreeMap::new();
        for f in schema.features.iter().filter(|f| f.monotone_eligible && f.is_ordinal()) {
            let answer = match truth.iter().position(|(n, _)| *n == f.name) {
                Some(k) if a.respondents < 3 || k % a.respondents != r => match truth[k].1 {
                    MonotoneDirection::Increasing => SurveyAnswer::AlwaysIncrease,
                    _ => SurveyAnswer::AlwaysDecrease,
                },
                _ => SurveyAnswer::Neither,
            };
            answers.insert(f.name.clone(), answer);
        }
        survey.push(SurveyResponse {
            respondent_id: format!("respondent{}", r + 1),
            answers,
        });
    }
    write_survey_csv(&a.out.join("survey.csv"), &survey)?;
    write_json(&a.out.join("synth.json"), &spec)?;

    println!("{} rows ({} train, {} test) written to {}", data.len(), train.len(), test.len(), a.out.display());
    Ok(json!({ "spec": spec, "split": split }))
}

fn train_cmd(a: &TrainArgs) -> Result<Value> {
    let schema = load_schema(&a.input.schema)?;
    let data = load_data(&a.input.data, &schema)?;
    let constraints = load_constraints(&a.constraints, &schema)?;
    let grid = a.grid.resolve()?;
    let outcome = train(&data, &constraints, &grid, a.seed)?;

    create_dir(&a.out)?;
    outcome.model.save(&a.out.join("model.json"))?;
    constraints.save(&a.out.join("constraints.json"))?;
    write_json(&a.out.join("params.json"), &outcome.params)?;
    if let Some(cv) = &outcome.cv {
        write_json(&a.out.join("cv.json"), cv)?;
        let p = &outcome.params;
        println!(
            "selected lr {} rounds {} depth {} (mean CV AUC {:.4})",
            p.learning_rate,
            p.num_rounds,
            p.max_depth,
            cv.best_cell().mean_auc
        );
    }
    if let Some(test_path) = &a.test {
        let test = load_data(test_path, &schema)?;
        let p = outcome.model.predict_proba(&test)?;
        let (auc, ap) = (auc_roc(&p, test.labels())?, average_precision(&p, test.labels())?);
        println!("test AUC {auc:.4}, average precision {ap:.4}");
        let metrics = json!({ "n_test": test.len(), "auc_roc": auc, "avg_precision": ap });
        write_json(&a.out.join("metrics.json"), &metrics)?;
    }
    Ok(json!({ "grid": grid, "constraints": constraints, "params": outcome.params }))
}

fn pdp_chart(curve: &PdpCurve) -> Chart {
    Chart {
        title: format!("Partial dependence: {}", curve.feature),
        x_label: curve.feature.clone(),
        y_label: "mean predicted probability".into(),
        log_x: false,
        series: vec![Series {
            name: "mean ± 2 SE".into(),
            points: curve
                .grid
                .iter()
                .zip(&curve.mean)
                .zip(&curve.se)
                .map(|((&x, &m), &s)| (x, m, m - 2.0 * s, m + 2.0 * s))
                .collect(),
        }],
    }
}

fn write_curves(out: &Path, curves: &[PdpCurve]) -> Result<()> {
    write_pdp_csv(&out.join("pdp.csv"), curves)?;
    write_json(&out.join("pdp.json"), &curves)?;
    for c in curves {
        write_text(&out.join(format!("pdp_{}.svg", c.feature)), &pdp_chart(c).to_svg())?;
    }
    Ok(())
}

fn pdp_cmd(a: &PdpArgs) -> Result<Value> {
    let schema = load_schema(&a.input.schema)?;
    let model = load_model(&a.model)?;
    let data = load_data(&a.input.data, &schema)?;
    let full = match &a.full {
        Some(p) => load_data(p, &schema)?,
        None => data.clone(),
    };
    let features: Vec<String> = if a.features.is_empty() {
        schema.features.iter().filter(|f| f.is_ordinal()).map(|f| f.name.clone()).collect()
    } else {
        a.features.clone()
    };
    let curves = features
        .iter()
        .map(|f| pdp(&model, &data, &full, f).with_context(|| format!("partial dependence of `{f}`")))
        .collect::<Result<Vec<_>>>()?;
    create_dir(&a.out)?;
    write_curves(&a.out, &curves)?;
    println!("{} curves written to {}", curves.len(), a.out.display());
    Ok(json!({ "features": features }))
}

#[derive(Serialize)]
struct AuditEntry {
    feature: String,
    direction: MonotoneDirection,
    constrained_in_model: bool,
    pdp_violations: Vec<Violation>,
    margin_scan_violations: usize,
}

fn audit(a: &AuditArgs) -> Result<Value> {
    let schema = load_schema(&a.input.schema)?;
    let model = load_model(&a.model)?;
    let data = load_data(&a.input.data, &schema)?;
    let full = match &a.full {
        Some(p) => load_data(p, &schema)?,
        None => data.clone(),
    };
    let enc = Encoding::new(&schema);
    let model_dir = |j: usize| {
        enc.ordinal_column(j)
            .and_then(|c| model.constraints.get(c).copied())
            .unwrap_or_default()
    };
    let expected: Vec<MonotoneDirection> = match &a.constraints {
        Some(src) => load_constraints(src, &schema)?.directions,
        None => (0..schema.len()).map(model_dir).collect(),
    };
    let features: Vec<String> = if a.features.is_empty() {
        schema
            .features
            .iter()
            .zip(&expected)
            .filter(|(_, d)| d.is_constrained())
            .map(|(f, _)| f.name.clone())
            .collect()
    } else {
        a.features.clone()
    };
    if features.is_empty() {
        bail!("nothing to audit: the model has no constrained features; pass --feature and --constraints");
    }

    let mut entries = Vec::new();
    let mut curves = Vec::new();
    for f in &features {
        let j = schema.index_of(f).ok_or_else(|| anyhow!("unknown feature `{f}`"))?;
        let direction = expected[j];
        if !direction.is_constrained() {
            bail!("no expected direction for `{f}`; pass --constraints with a direction for it");
        }
        let curve = pdp(&model, &data, &full, f).with_context(|| format!("partial dependence of `{f}`"))?;
        let grid = unique_values(&full, j);
        let entry = AuditEntry {
            feature: f.clone(),
            direction,
            constrained_in_model: model_dir(j).is_constrained(),
            pdp_violations: violations(&curve, direction, a.tolerance),
            margin_scan_violations: margin_scan_violations(&model, &data, j, &grid, direction, a.tolerance)?,
        };
        println!(
            "{f}: {} PDP violation(s), {} margin-scan violation(s)",
            entry.pdp_violations.len(),
            entry.margin_scan_violations
        );
        entries.push(entry);
        curves.push(curve);
    }
    create_dir(&a.out)?;
    write_curves(&a.out, &curves)?;
    write_json(&a.out.join("audit.json"), &entries)?;
    Ok(json!({ "features": features, "expected": expected, "tolerance": a.tolerance }))
}

fn distance(a: &DistanceArgs) -> Result<Value> {
    let schema = load_schema(&a.input.schema)?;
    let ma = load_model(&a.a)?;
    let mb = load_model(&a.b)?;
    let data = load_data(&a.input.data, &schema)?;
    let report = compare(&ma, &mb, &data)?;
    create_dir(&a.out)?;
    report.save(&a.out.join("distance.json"))?;
    if a.shap_csv {
        tree_shap(&ma, &data)?.write_csv(&a.out.join("shap_a.csv"))?;
        tree_shap(&mb, &data)?.write_csv(&a.out.join("shap_b.csv"))?;
    }
    println!("d_pred {:.6}  d_rank {:.6}  d_shap {:.6}", report.d_pred, report.d_rank, report.d_shap);
    Ok(json!({ "n": data.len() }))
}

/// One chart per curve CSV. A single metric gives one series per model
/// kind; several metrics give one series per metric.
fn curve_chart(points: &[CurvePoint], log_x: bool) -> Chart {
    let metrics: BTreeSet<&str> = points.iter().map(|p| p.metric.as_str()).collect();
    let kinds: BTreeSet<&str> = points.iter().map(|p| p.kind.as_str()).collect();
    let mut series: BTreeMap<String, Vec<(f64, f64, f64, f64)>> = BTreeMap::new();
    for p in points {
        let name = match (metrics.len(), kinds.len()) {
            (1, _) => p.kind.clone(),
            (_, 1) => p.metric.clone(),
            _ => format!("{} {}", p.kind, p.metric),
        };
        series
            .entry(name)
            .or_default()
            .push((p.train_size as f64, p.mean, p.ci_low, p.ci_high));
    }
    let title = metrics.iter().copied().collect::<Vec<_>>().join(", ");
    Chart {
        title: title.clone(),
        x_label: "training rows".into(),
        y_label: if metrics.len() == 1 { title } else { "distance".into() },
        log_x,
        series: series
            .into_iter()
            .map(|(name, mut points)| {
                points.sort_by(|a, b| a.0.total_cmp(&b.0));
                Series { name, points }
            })
            .collect(),
    }
}

fn render_curve_csv(csv: &Path, out: &Path, log_x: bool) -> Result<PathBuf> {
    let points = read_curve_csv(csv).with_context(|| format!("reading curve CSV {}", csv.display()))?;
    let stem = csv
        .file_stem()
        .ok_or_else(|| anyhow!("{} has no file name", csv.display()))?;
    let svg = out.join(Path::new(stem).with_extension("svg"));
    write_text(&svg, &curve_chart(&points, log_x).to_svg())?;
    Ok(svg)
}

fn sweep(a: &SweepArgs) -> Result<Value> {
    let schema = load_schema(&a.schema)?;
    let train = load_data(&a.train, &schema)?;
    let test = load_data(&a.test, &schema)?;
    let cfg = SweepConfig {
        sizes: a.sizes.clone(),
        seeds_per_size: a.seeds,
        grid: a.grid.resolve()?,
        constraints: load_constraints(&a.constraints, &schema)?,
        modes: a.modes.clone(),
        out_dir: a.out.clone(),
        base_seed: a.seed,
        workers: a.workers,
    };
    let outcome = run_sweep(&cfg, &train, &test)?;
    for r in outcome.failures() {
        log::warn!(
            "size {} replicate {} ({}) failed: {}",
            r.size,
            r.replicate,
            r.mode,
            r.error.as_deref().unwrap_or("")
        );
    }
    for name in ["curve_auc_roc", "curve_avg_precision", "curve_distance"] {
        let csv = a.out.join(format!("{name}.csv"));
        if csv.exists() {
            render_curve_csv(&csv, &a.out, true)?;
        }
    }
    println!(
        "{} models ({} trained now, {} failed), {} pairs in {}",
        outcome.records.len(),
        outcome.computed,
        outcome.failures().count(),
        outcome.pairs.len(),
        a.out.display()
    );
    Ok(serde_json::to_value(&cfg)?)
}

fn curves(a: &CurvesArgs) -> Result<Value> {
    create_dir(&a.out)?;
    for csv in &a.inputs {
        let svg = render_curve_csv(csv, &a.out, !a.linear_x)?;
        println!("{}", svg.display());
    }
    Ok(json!({ "log_x": !a.linear_x }))
}

fn exp_prepare(a: &ExpPrepareArgs) -> Result<Value> {
    let mut design = match &a.design {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<ExperimentDesign>(&text).with_context(|| format!("parsing design {}", p.display()))?
        }
        None => ExperimentDesign::default(),
    };
    if let Some(v) = a.n_runs {
        design.n_runs = v;
    }
    if let Some(v) = a.n_pairs {
        design.n_pairs = v;
    }
    if let Some(v) = a.patients_per_pair {
        design.patients_per_pair = v;
    }
    if !a.raters.is_empty() {
        design.raters = a.raters.clone();
    }
    if let Some(v) = a.patients_per_rater {
        design.patients_per_rater = v;
    }
    if let Some(v) = a.train_size {
        design.train_size = v;
    }
    design.seed = a.seed;

    let schema = load_schema(&a.schema)?;
    let test = load_data(&a.test, &schema)?;
    let bundle = prepare(&design, &a.sweep, &test)?;
    create_dir(&a.out)?;
    bundle.save(&a.out)?;
    println!(
        "{} tasks over {} pairs for {} raters; tokens in {}",
        bundle.tasks.len(),
        bundle.pairs.len(),
        bundle.tokens.len(),
        a.out.join("tokens.json").display()
    );
    Ok(serde_json::to_value(&design)?)
}

fn exp_serve(cmd: &Command, a: &ExpServeArgs) -> Result<()> {
    let bundle = ExperimentBundle::load(&a.bundle).with_context(|| format!("loading bundle {}", a.bundle.display()))?;
    let log_path = a.log.clone().unwrap_or_else(|| a.bundle.join("responses.jsonl"));
    let state = monoalign_server::AppState::open(&bundle, &log_path)
        .with_context(|| format!("opening response log {}", log_path.display()))?;
    Manifest::new(cmd, json!({ "log": log_path })).write(&a.bundle, "exp-serve")?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(monoalign_server::serve(a.addr, state, a.static_dir.clone()))?;
    Ok(())
}

fn exp_analyze(a: &ExpAnalyzeArgs) -> Result<Value> {
    let bundle = a
        .bundle
        .as_ref()
        .map(|p| ExperimentBundle::load(p).with_context(|| format!("loading bundle {}", p.display())))
        .transpose()?;
    let records = match (&a.responses, &a.log, &bundle) {
        (Some(p), _, _) => read_choices(p).with_context(|| format!("reading responses {}", p.display()))?,
        (None, Some(log), Some(b)) => ResponseStore::open(log, b.tasks.clone())
            .with_context(|| format!("replaying {}", log.display()))?
            .choices(),
        _ => bail!("pass --responses, or --log together with --bundle"),
    };
    let pair_order = match &bundle {
        Some(b) => b.pair_order(),
        None => records
            .iter()
            .map(|r| r.pair_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };

    create_dir(&a.out)?;
    let summary = summary_stats(&records)?;
    write_json(&a.out.join("summary.json"), &summary)?;
    let mut report = summary.to_text();
    let fit = fit_choice_model(&records, &pair_order);
    match &fit {
        Ok(reg) => {
            write_json(&a.out.join("regression.json"), reg)?;
            report.push('\n');
            report.push_str(&reg.to_text());
        }
        Err(e) => report.push_str(&format!("\nregression failed: {e}\n")),
    }
    write_text(&a.out.join("report.txt"), &report)?;
    print!("{report}");
    fit?;
    Ok(json!({ "n": records.len(), "pair_order": pair_order }))
}
