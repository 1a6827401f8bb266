//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

mod common;

#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};
use trajql_core::engine::{evaluate, DirectSource, SplitScope};
use trajql_core::model::{auroc, build_design_matrix, train_model, Alert, LearnerParams, ModelSpec};
use trajql_core::query::{format_canonical, parse};
use trajql_core::store::{toy_clinic, SplitConfig, StoreBuilder, TrajectoryStore};
use trajql_core::subgroup::{discretize_inputs, Half, Metric, MineParams, RankingCriteria, SubgroupContext};
use trajql_core::value::{Scalar, TimeUnit};
use trajql_workbench::api::{spawn, RunningServer};
use trajql_workbench::fixtures;
use trajql_workbench::jobs::JobManager;
use trajql_workbench::workspace::no_progress;
use trajql_workbench::Workspace;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

const QUERY_A: &str = r#"exists [{Diagnosis} contains "heart failure"] from #now - 30 days to #now at every 30 days"#;
const QUERY_B: &str = r#"exists [{Diagnosis} contains "heart failure"] before #now at every start({Admission})"#;
const PLANTED_RULE: &str = "f3 ∈ {1} AND f7 ∈ {1}";

fn corpus() -> Outcome {
    let text = include_str!("../../core/tests/data/queries.tql");
    let queries: Vec<String> = text
        .split("\n\n")
        .map(|b| b.lines().filter(|l| !l.trim_start().starts_with("//")).collect::<Vec<_>>().join("\n"))
        .filter(|q| !q.trim().is_empty())
        .collect();
    ensure!(queries.len() >= 14, "only {} queries in the corpus", queries.len());
    let started = Instant::now();
    for q in &queries {
        let ast = parse(q).map_err(|e| format!("{q}: {e}"))?;
        let canonical = format_canonical(&ast);
        let again = parse(&canonical).map_err(|e| format!("{canonical}: {e}"))?;
        ensure!(again == ast, "re-parse differs: {canonical}");
        ensure!(format_canonical(&again) == canonical, "canonical text is not stable: {canonical}");
    }
    let took = started.elapsed();
    ensure!(took < Duration::from_secs(1), "took {took:?}");
    Ok(format!("{} queries", queries.len()))
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let cases = 1200;
    let rows = oracle::check_cases(0xacce, cases)?;
    let took = started.elapsed();
    ensure!(took < Duration::from_secs(120), "took {took:?}");
    Ok(format!("{cases} cases, {rows} rows"))
}

/// `(trajectory, time, value)` for every row of a boolean time series.
fn truth_table(query: &str, store: &TrajectoryStore) -> Result<Vec<(String, f64, bool)>, String> {
    let v = evaluate(&parse(query).map_err(|e| e.to_string())?, store, None, SplitScope::ALL).map_err(|e| e.to_string())?;
    let ts = v.as_time_series().ok_or("not a time series")?;
    (0..ts.index.len())
        .map(|i| {
            let b = match &ts.column.values[i] {
                Some(Scalar::Boolean(b)) => *b,
                other => return Err(format!("row {i}: {other:?}")),
            };
            Ok((store.trajectory_id(ts.index.traj[i]).to_string(), ts.index.times[i], b))
        })
        .collect()
}

fn expect_table(query: &str, store: &TrajectoryStore, expected: &[(&str, f64, bool)]) -> Result<(), String> {
    let got = truth_table(query, store)?;
    let want: Vec<(String, f64, bool)> = expected.iter().map(|(t, x, b)| (t.to_string(), *x, *b)).collect();
    ensure!(got == want, "{}: {query}\n  got  {got:?}\n  want {want:?}", store.name());
    Ok(())
}

fn window_truth_tables() -> Outcome {
    // Windows are (now - 30 days, now]; `before` includes the anchor.
    let toy = toy_clinic();
    expect_table(QUERY_A, &toy, &[("P1", 0.0, false), ("P2", 4.0, false)])?;
    expect_table(QUERY_B, &toy, &[("P1", 0.0, false), ("P2", 4.0, false), ("P2", 20.0, false)])?;
    let day = fixtures::day_clinic();
    expect_table(
        QUERY_A,
        &day,
        &[("A", 0.0, false), ("A", 30.0, false), ("A", 60.0, true), ("A", 90.0, false), ("B", 10.0, true), ("B", 40.0, false), ("B", 70.0, false)],
    )?;
    expect_table(QUERY_B, &day, &[("A", 0.0, false), ("A", 40.0, true), ("A", 100.0, true), ("B", 10.0, true), ("B", 70.0, true)])?;
    Ok("toy-clinic and day-clinic tables match".into())
}

fn amount_conservation() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xa40);
    let q = parse("sum amount {Fluid} from (last {Cut} before #now) to #now at every {Cut}").unwrap();
    let mut worst = 0.0f64;
    for trial in 0..500 {
        let n = rng.random_range(1..12);
        let ivs: Vec<(f64, f64, f64)> = (0..n)
            .map(|_| {
                let s = rng.random_range(1.0..100.0);
                let len = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..30.0) };
                (s, s + len, rng.random_range(0.0..50.0))
            })
            .collect();
        let (lo, hi) = (0.5, ivs.iter().map(|iv| iv.1).fold(0.0, f64::max) + 1.0);
        let mut points: Vec<f64> = (0..rng.random_range(0..10)).map(|_| lo + rng.random::<f64>() * (hi - lo)).collect();
        points.extend([lo, hi]);
        points.sort_by(f64::total_cmp);
        points.dedup();
        let mut b = StoreBuilder::new("amounts", TimeUnit::Hours);
        for (s, e, x) in &ivs {
            b.add_interval_number("p", "Fluid", *s, *e, *x);
        }
        for w in points.windows(2) {
            b.add_event_number("p", "Cut", w[1], w[0]);
        }
        let store = b.build(SplitConfig::default()).map_err(|e| e.to_string())?;
        let v = evaluate(&q, &store, None, SplitScope::ALL).map_err(|e| format!("trial {trial}: {e}"))?;
        ensure!(v.len() == points.len() - 1, "trial {trial}: {} windows", v.len());
        let parts: f64 = v.column().values.iter().map(|x| x.as_ref().and_then(Scalar::as_f64).unwrap_or(f64::NAN)).sum();
        let total: f64 = ivs.iter().map(|iv| iv.2).sum();
        ensure!((parts - total).abs() <= 1e-9, "trial {trial}: parts {parts} total {total}");
        worst = worst.max((parts - total).abs());
    }
    Ok(format!("500 trials, max error {worst:.1e}"))
}

fn pairwise_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                num += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
            }
        }
    }
    num / pairs
}

fn auroc_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xa0c);
    let mut checked = 0;
    while checked < 200 {
        let n = rng.random_range(2..150);
        let levels = rng.random_range(2..40);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.35)).collect();
        if !labels.iter().any(|&l| l) || labels.iter().all(|&l| l) {
            ensure!(auroc(&scores, &labels).is_none(), "single-class vector should have no AUROC");
            continue;
        }
        let fast = auroc(&scores, &labels).ok_or("missing AUROC")?;
        let slow = pairwise_auroc(&scores, &labels);
        ensure!((fast - slow).abs() <= 1e-12, "{fast} vs {slow}");
        checked += 1;
    }
    let fixed = auroc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]);
    ensure!(fixed == Some(0.75), "fixed example gave {fixed:?}");
    Ok("200 vectors, fixed example 0.75".into())
}

fn train(spec: &ModelSpec, store: &TrajectoryStore) -> Result<trajql_core::model::TrainedModel, String> {
    let m = build_design_matrix(spec, store, &mut DirectSource::default()).map_err(|e| e.to_string())?;
    train_model(&m, &spec.learner, spec.threshold).map_err(|e| e.to_string())
}

fn trivial_variables(alerts: &[Alert]) -> Option<&[String]> {
    alerts.iter().find_map(|a| match a {
        Alert::TrivialApproximation { variables, .. } => Some(variables.as_slice()),
        _ => None,
    })
}

fn planted_signal() -> Outcome {
    let started = Instant::now();
    let f = fixtures::planted_signal(1);
    let model = train(&f.spec, &f.store)?;
    let val = model.metrics.val.primary().ok_or("no validation AUROC")?;
    ensure!(val >= 0.95, "validation AUROC {val:.3}");
    let named = trivial_variables(&model.alerts).ok_or("no trivial-approximation alert")?;
    ensure!(named.iter().any(|v| v == "x1"), "alert names {named:?}");

    let d = fixtures::distributed_signal(1);
    let spread = train(&d.spec, &d.store)?;
    ensure!(trivial_variables(&spread.alerts).is_none(), "distributed signal raised {:?}", spread.alerts);
    let took = started.elapsed();
    ensure!(took < Duration::from_secs(30), "took {took:?}");
    Ok(format!("val AUROC {val:.3}, alert names x1, distributed fixture silent"))
}

fn rare_class() -> Outcome {
    let f = fixtures::rare_class(3);
    let model = train(&f.spec, &f.store)?;
    let rare: Vec<String> = model
        .alerts
        .iter()
        .filter_map(|a| match a {
            Alert::RareClass { classes } => Some(classes.iter().map(|c| c.class.clone()).collect::<Vec<_>>()),
            _ => None,
        })
        .flatten()
        .collect();
    ensure!(rare == ["rare"], "alert names {rare:?}");
    Ok("alert names exactly `rare`".into())
}

fn subgroup_recovery() -> Outcome {
    let started = Instant::now();
    let mut hits = 0;
    let mut misses = Vec::new();
    for seed in 0..20 {
        let f = fixtures::planted_rule(seed);
        let m = build_design_matrix(&f.spec, &f.store, &mut DirectSource::default()).map_err(|e| e.to_string())?;
        let features = discretize_inputs(&m, &f.spec.inputs);
        let rows: Vec<usize> = (0..m.rows()).collect();
        let criteria = RankingCriteria::new(Metric::TrueLabel { model: None, class: None });
        let ctx = SubgroupContext::new(features, m.target.clone(), &m.index.traj, &rows, criteria, seed)
            .map_err(|e| e.to_string())?;
        let top = ctx.mine(&MineParams::default()).map_err(|e| e.to_string())?;
        // Recount every displayed report from the raw inputs and target.
        let eval: Vec<usize> = rows.iter().copied().filter(|&r| ctx.half(r) == Some(Half::Evaluation)).collect();
        for report in &top {
            let matches = |r: usize| {
                report.rule.predicates.iter().all(|p| {
                    let i = m.variables.iter().position(|v| *v == p.feature).unwrap();
                    let raw = m.inputs[i].values[r].as_ref().and_then(Scalar::as_f64);
                    raw.is_some_and(|x| p.values.iter().any(|v| v.parse::<f64>().ok() == Some(x)))
                })
            };
            let extent: Vec<usize> = eval.iter().copied().filter(|&r| matches(r)).collect();
            let rate = extent.iter().map(|&r| m.target[r]).sum::<f64>() / extent.len() as f64;
            let overall = eval.iter().map(|&r| m.target[r]).sum::<f64>() / eval.len() as f64;
            let e = &report.evaluation;
            ensure!(e.rows == eval.len() && e.extent == extent.len(), "seed {seed}: {} counts differ", report.label);
            ensure!(e.rate == Some(rate), "seed {seed}: {} rate {:?} vs {rate}", report.label, e.rate);
            ensure!(e.overall_rate == Some(overall), "seed {seed}: overall rate differs");
            ensure!(e.coverage == extent.len() as f64 / eval.len() as f64, "seed {seed}: coverage differs");
        }
        match top.iter().take(5).find(|r| r.label == PLANTED_RULE) {
            Some(r) if (r.evaluation.rate.unwrap_or(0.0) - 0.9).abs() <= 0.05 => hits += 1,
            Some(r) => misses.push(format!("seed {seed}: rate {:?}", r.evaluation.rate)),
            None => misses.push(format!("seed {seed}: not in top 5")),
        }
    }
    let took = started.elapsed();
    ensure!(hits >= 19, "{hits}/20 ({})", misses.join("; "));
    ensure!(took < Duration::from_secs(60), "took {took:?}");
    Ok(format!("{hits}/20 seeds, recounts exact"))
}

fn quick(mut spec: ModelSpec) -> ModelSpec {
    spec.learner = LearnerParams { max_trees: 60, patience: 10, ..Default::default() };
    spec
}

fn cache_effectiveness() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ws = Workspace::open(dir.path().join("ws")).map_err(|e| e.to_string())?;
    let f = fixtures::planted_signal(5);
    common::ingest(&ws, &f.store, dir.path());
    let first = ws.create_spec("planted-signal", quick(f.spec.clone())).map_err(|e| e.to_string())?;
    let m1 = ws.train_spec(&first.id, &no_progress).map_err(|e| e.to_string())?;
    let dup = ws.duplicate_spec(&first.id, None).map_err(|e| e.to_string())?;
    let mut spec = dup.spec.clone();
    spec.target = "{x2} > 0".into();
    let dup = ws.update_spec(&dup.id, Some(dup.version), spec).map_err(|e| e.to_string())?;
    let before = ws.cache_stats("planted-signal").map_err(|e| e.to_string())?;
    let m2 = ws.train_spec(&dup.id, &no_progress).map_err(|e| e.to_string())?;
    let after = ws.cache_stats("planted-signal").map_err(|e| e.to_string())?;
    let inputs = f.spec.inputs.len();
    ensure!(m2.sources.computed == ["target"], "recomputed {:?}", m2.sources.computed);
    ensure!(m2.sources.hits.len() == inputs, "{} hits", m2.sources.hits.len());
    ensure!(after.computed - before.computed == 1, "counter moved by {}", after.computed - before.computed);
    for (i, (a, b)) in m1.matrix.inputs.iter().zip(&m2.matrix.inputs).enumerate() {
        ensure!(a.dtype == b.dtype && a.values.len() == b.values.len(), "input {i} shape differs");
        for (x, y) in a.values.iter().zip(&b.values) {
            let same = match (x.as_ref().and_then(Scalar::as_f64), y.as_ref().and_then(Scalar::as_f64)) {
                (Some(x), Some(y)) => x.to_bits() == y.to_bits(),
                _ => x == y,
            };
            ensure!(same, "input {i}: {x:?} vs {y:?}");
        }
    }
    Ok(format!("{inputs} inputs served from cache, only the target computed"))
}

struct Api<'a> {
    server: &'a RunningServer,
    client: Client,
}

impl Api<'_> {
    fn get(&self, path: &str) -> Result<(StatusCode, Value), String> {
        let r = self.client.get(self.server.url(path)).send().map_err(|e| e.to_string())?;
        Ok((r.status(), r.json().unwrap_or(Value::Null)))
    }

    fn post(&self, path: &str, body: Value) -> Result<(StatusCode, Value), String> {
        let r = self.client.post(self.server.url(path)).json(&body).send().map_err(|e| e.to_string())?;
        Ok((r.status(), r.json().unwrap_or(Value::Null)))
    }

    fn wait_job(&self, id: &str) -> Result<Value, String> {
        let deadline = Instant::now() + Duration::from_secs(300);
        loop {
            let (_, job) = self.get(&format!("/api/jobs/{id}"))?;
            if ["done", "failed", "cancelled"].contains(&job["state"].as_str().unwrap_or("")) {
                return Ok(job);
            }
            ensure!(Instant::now() < deadline, "job {id} did not finish");
            std::thread::sleep(Duration::from_millis(25));
        }
    }

    /// Creates and trains a spec; returns the model metrics.
    fn train(&self, dataset: &str, spec: Value) -> Result<Value, String> {
        let (status, created) = self.post("/api/specs", json!({ "dataset": dataset, "spec": spec }))?;
        ensure!(status == StatusCode::CREATED, "{dataset}: spec create {status}: {created}");
        let (status, job) = self.post(&format!("/api/specs/{}/train", created["id"].as_str().unwrap_or("")), json!({}))?;
        ensure!(status == StatusCode::ACCEPTED, "{dataset}: train {status}: {job}");
        let job = self.wait_job(job["id"].as_str().unwrap_or(""))?;
        ensure!(job["state"] == "done", "{dataset}: {job}");
        let (_, metrics) = self.get(&format!("/api/models/{}/metrics", job["result"].as_str().unwrap_or("")))?;
        Ok(metrics)
    }
}

fn start(root: &std::path::Path) -> Result<RunningServer, String> {
    let ws = Workspace::open(root).map_err(|e| e.to_string())?;
    spawn(Arc::new(JobManager::start(Arc::new(ws), 2)), "127.0.0.1:0".parse().unwrap()).map_err(|e| e.to_string())
}

fn alert_variables(metrics: &Value, kind: &str) -> Vec<String> {
    let mut out = Vec::new();
    for a in metrics["alerts"].as_array().into_iter().flatten().filter(|a| a["type"] == kind) {
        for v in a["variables"].as_array().into_iter().flatten() {
            out.extend(v.as_str().map(String::from));
        }
        for c in a["classes"].as_array().into_iter().flatten() {
            out.extend(c["class"].as_str().map(String::from));
        }
    }
    out
}

fn service_end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path().join("ws");
    let server = start(&root)?;
    let api = Api { server: &server, client: Client::new() };

    let names = ["planted-signal", "distributed-signal", "rare-class", "planted-rule", "toy-clinic"];
    let mut specs = Vec::new();
    for name in names {
        let f = fixtures::by_name(name, 7).ok_or(name)?;
        let config = common::write_tables(&f.store, dir.path());
        let (status, summary) = api.post("/api/datasets", json!({ "path": config }))?;
        ensure!(status == StatusCode::CREATED, "ingest {name}: {status} {summary}");
        ensure!(summary["trajectories"] == f.store.trajectory_count(), "{name}: {summary}");
        specs.push(f.spec);
    }

    let (status, preview) = api.post("/api/query/preview", json!({ "dataset": "toy-clinic", "query": QUERY_B }))?;
    ensure!(status == StatusCode::OK, "preview {status}: {preview}");
    let values: Vec<Value> = preview["sample"].as_array().into_iter().flatten().map(|r| r["value"].clone()).collect();
    ensure!(values == [json!(false), json!(false), json!(false)], "toy-clinic query B preview {values:?}");

    let metrics = api.train("planted-signal", serde_json::to_value(&specs[0]).unwrap())?;
    let auc = metrics["metrics"]["val"]["auroc"].as_f64().unwrap_or(0.0);
    ensure!(auc >= 0.95, "planted signal val AUROC {auc}");
    ensure!(alert_variables(&metrics, "trivial_approximation").contains(&"x1".into()), "planted alerts {}", metrics["alerts"]);
    let metrics = api.train("distributed-signal", serde_json::to_value(&specs[1]).unwrap())?;
    ensure!(alert_variables(&metrics, "trivial_approximation").is_empty(), "distributed alerts {}", metrics["alerts"]);
    let metrics = api.train("rare-class", serde_json::to_value(&specs[2]).unwrap())?;
    ensure!(alert_variables(&metrics, "rare_class") == ["rare"], "rare alerts {}", metrics["alerts"]);
    let metrics = api.train("planted-rule", serde_json::to_value(quick(specs[3].clone())).unwrap())?;
    let model = metrics["id"].as_str().unwrap_or("").to_string();

    let mine = json!({ "model": model, "criteria": { "metric": { "type": "true_label" } }, "scope": "all", "seed": 2 });
    let (status, job) = api.post("/api/subgroups/mine", mine)?;
    ensure!(status == StatusCode::ACCEPTED, "mine {status}: {job}");
    let job = api.wait_job(job["id"].as_str().unwrap_or(""))?;
    ensure!(job["state"] == "done", "mine: {job}");
    let run_id = job["result"].as_str().unwrap_or("").to_string();
    let (_, run) = api.get(&format!("/api/subgroups/{run_id}"))?;
    let labels: Vec<&str> = run["reports"].as_array().into_iter().flatten().take(5).filter_map(|r| r["label"].as_str()).collect();
    ensure!(labels.contains(&PLANTED_RULE), "planted rule not in top 5: {labels:?}");

    let (_, specs_before) = api.get("/api/specs")?;
    let (_, models_before) = api.get("/api/models")?;
    let (_, jobs_before) = api.get("/api/jobs")?;
    let (_, metrics_before) = api.get(&format!("/api/models/{model}/metrics"))?;
    server.stop();

    let server = start(&root)?;
    let api = Api { server: &server, client: Client::new() };
    ensure!(api.get("/api/datasets")?.1.as_array().map(Vec::len) == Some(names.len()), "datasets lost on restart");
    ensure!(api.get("/api/specs")?.1 == specs_before, "specs changed on restart");
    ensure!(api.get("/api/models")?.1 == models_before, "models changed on restart");
    ensure!(api.get("/api/jobs")?.1 == jobs_before, "jobs changed on restart");
    ensure!(api.get(&format!("/api/models/{model}/metrics"))?.1 == metrics_before, "metrics changed on restart");
    ensure!(api.get(&format!("/api/subgroups/{run_id}"))?.1 == run, "subgroup run changed on restart");
    server.stop();
    Ok(format!("{} fixtures over HTTP, artifacts survive restart", names.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("query corpus round trip", corpus),
        ("oracle equivalence", oracle_equivalence),
        ("window semantics truth tables", window_truth_tables),
        ("amount conservation", amount_conservation),
        ("AUROC oracle", auroc_oracle),
        ("planted-signal training", planted_signal),
        ("rare-class alert", rare_class),
        ("planted-rule subgroup recovery", subgroup_recovery),
        ("cache effectiveness", cache_effectiveness),
        ("service end to end", service_end_to_end),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or("panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.2}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2}s): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
