mod common;

use std::sync::Arc;

use trajql_core::engine::{QueryValue, SplitScope, VariableSource};
use trajql_core::model::{LearnerParams, ModelSpec};
use trajql_core::query::parse;
use trajql_core::store::toy_clinic;
use trajql_core::subgroup::{Metric, MineParams, Predicate, RankingCriteria, SubgroupRule};
use trajql_workbench::cache::{CachedSource, ResultCache};
use trajql_workbench::fixtures;
use trajql_workbench::workspace::{
    no_progress, CompleteRequest, DistinguishingRequest, EditAction, EditRequest, EvaluateRequest, MineRequest,
    PreviewRequest,
};
use trajql_workbench::{WorkbenchError, Workspace};

fn quick(mut spec: ModelSpec) -> ModelSpec {
    spec.learner = LearnerParams { max_trees: 60, patience: 10, ..Default::default() };
    spec
}

#[test]
fn preview_and_complete_on_toy_clinic() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path().join("ws")).unwrap();
    common::ingest(&ws, &toy_clinic(), dir.path());

    let req = PreviewRequest {
        dataset: "toy-clinic".into(),
        query: "mean {HeartRate}   from #now-4 hours to #now".into(),
        timesteps: Some("every 4 hours".into()),
        head: Some(3),
    };
    let out = ws.preview(&req).unwrap();
    assert_eq!(out.canonical, "mean {HeartRate} from #now - 4 hours to #now");
    assert_eq!(out.kind.name(), "timeseries");
    assert_eq!(out.sample.len(), 3);
    assert_eq!(out.profile.rows, out.rows);
    // P1 at t=4: heart rates at 1 and 3.
    assert_eq!(out.sample[1].trajectory_id, "P1");
    assert_eq!(out.sample[1].time, Some(4.0));
    assert_eq!(out.sample[1].value.as_ref().and_then(|v| v.as_f64()), Some(70.0));

    let err = ws.preview(&PreviewRequest { query: "count {".into(), timesteps: None, ..req.clone() }).unwrap_err();
    assert_eq!(err.code(), "parse_error");
    assert_eq!(err.offset(), Some(6));

    let many = ws.preview(&PreviewRequest { query: "{HeartRate}".into(), timesteps: None, head: Some(500), ..req }).unwrap();
    assert_eq!(many.sample.len(), 4);

    let s = ws.complete(&CompleteRequest { dataset: "toy-clinic".into(), source: "mean {Hea".into(), cursor: 9 }).unwrap();
    assert_eq!(s.iter().map(|x| x.label.as_str()).collect::<Vec<_>>(), ["HeartRate"]);
    assert!(ws.complete(&CompleteRequest { dataset: "nope".into(), source: String::new(), cursor: 0 }).is_err());
}

#[test]
fn spec_versions_and_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("ws");
    let ws = Workspace::open(&root).unwrap();
    common::ingest(&ws, &toy_clinic(), dir.path());

    let a = ws.create_spec("toy-clinic", fixtures::toy_spec()).unwrap();
    assert_eq!(a.version, 1);
    let mut changed = a.spec.clone();
    changed.target = "exists {Diagnosis} from #now to #now + 8 hours".into();
    let a2 = ws.update_spec(&a.id, Some(1), changed.clone()).unwrap();
    assert_eq!(a2.version, 2);
    let stale = ws.update_spec(&a.id, Some(1), changed.clone()).unwrap_err();
    assert!(matches!(stale, WorkbenchError::Conflict(_)));

    let dup = ws.duplicate_spec(&a.id, Some("toy 8h".into())).unwrap();
    assert_ne!(dup.id, a.id);
    assert_eq!(dup.spec.name, "toy 8h");
    assert_eq!(dup.spec.target, changed.target);

    let mut broken = changed.clone();
    broken.target = "exists {Diagnosis from".into();
    assert_eq!(ws.update_spec(&a.id, None, broken).unwrap_err().code(), "parse_error");
    assert!(ws.create_spec("missing", changed).is_err());

    let other = ws.create_spec("toy-clinic", fixtures::toy_spec()).unwrap();
    ws.delete_spec(&other.id).unwrap();
    drop(ws);

    let ws = Workspace::open(&root).unwrap();
    let specs = ws.specs(Some("toy-clinic"));
    assert_eq!(specs, vec![a2, dup.clone()]);
    let next = ws.create_spec("toy-clinic", fixtures::toy_spec()).unwrap();
    assert_ne!(next.id, dup.id);
}

#[test]
fn changing_only_the_target_reuses_every_input() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path().join("ws")).unwrap();
    let f = fixtures::planted_signal(3);
    common::ingest(&ws, &f.store, dir.path());

    let first = ws.create_spec("planted-signal", quick(f.spec.clone())).unwrap();
    let m1 = ws.train_spec(&first.id, &no_progress).unwrap();
    assert_eq!(m1.sources.computed.len(), 11);
    assert!(m1.sources.hits.is_empty());

    let dup = ws.duplicate_spec(&first.id, None).unwrap();
    let mut spec = dup.spec.clone();
    spec.target = "{x2} > 0".into();
    let dup = ws.update_spec(&dup.id, Some(dup.version), spec).unwrap();
    let stats_before = ws.cache_stats("planted-signal").unwrap();
    let m2 = ws.train_spec(&dup.id, &no_progress).unwrap();
    assert_eq!(m2.sources.computed, vec!["target".to_string()]);
    assert_eq!(m2.sources.hits.len(), 10);
    let stats_after = ws.cache_stats("planted-signal").unwrap();
    assert_eq!(stats_after.computed - stats_before.computed, 1);
    assert_eq!(stats_after.hits - stats_before.hits, 10);
    assert_ne!(m1.id, m2.id);

    // Inputs the two matrices share are identical.
    for (a, b) in m1.matrix.columns.iter().zip(&m2.matrix.columns) {
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn training_is_idempotent_by_content() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("ws");
    let ws = Workspace::open(&root).unwrap();
    let f = fixtures::planted_signal(5);
    common::ingest(&ws, &f.store, dir.path());
    let spec = quick(f.spec.clone());
    let a = ws.train("planted-signal", &spec, None, &no_progress).unwrap();
    let mut renamed = spec.clone();
    renamed.name = "another name".into();
    renamed.inputs[0].query = "{ x1 }".into();
    let b = ws.train("planted-signal", &renamed, None, &no_progress).unwrap();
    assert!(Arc::ptr_eq(&a, &b));
    assert_eq!(ws.model_id("planted-signal", &renamed).unwrap(), a.id);

    let cancelled = ws.train("planted-signal", &f.spec, None, &|_, _| false).unwrap_err();
    assert!(matches!(cancelled, WorkbenchError::Cancelled));
    drop(ws);

    let ws = Workspace::open(&root).unwrap();
    let back = ws.model(&a.id).unwrap();
    assert_eq!(*back, *a);
    assert_eq!(ws.models(None).len(), 1);
}

#[test]
fn all_missing_target_fails_with_the_builder_error() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path().join("ws")).unwrap();
    common::ingest(&ws, &toy_clinic(), dir.path());
    let mut spec = fixtures::toy_spec();
    spec.target = "mean {HeartRate} from #now + 100 hours to #now + 200 hours".into();
    let err = ws.train("toy-clinic", &spec, None, &no_progress).unwrap_err();
    assert_eq!(err.code(), "target_all_missing");
    assert!(err.to_string().contains("missing at every timestep"));
}

#[test]
fn cache_hits_are_bit_identical_and_damage_is_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let store = fixtures::planted_signal(1).store;
    let ix = trajql_core::engine::resolve_timesteps(&trajql_core::query::parse_timestep_def("every {Visit}").unwrap(), &store).unwrap();
    let expr = parse("{x3} * 2").unwrap();
    let fresh = |dir: &std::path::Path| ResultCache::open(dir).unwrap();

    let cache = fresh(dir.path());
    let first = CachedSource::new(&cache).variable("x", &expr, &store, &ix).unwrap();
    let mut again = CachedSource::new(&cache);
    let second = again.variable("x", &expr, &store, &ix).unwrap();
    assert_eq!(again.report.hits, ["x"]);
    assert_eq!(again.report.aggregations, 0);
    bit_identical(&first, &second);
    // The cached value also survives reopening.
    let reopened = fresh(dir.path());
    let third = CachedSource::new(&reopened).variable("x", &expr, &store, &ix).unwrap();
    assert_eq!(reopened.stats().hits, 1);
    bit_identical(&first, &third);
    let direct = trajql_core::evaluate(&expr, &store, Some(&ix), SplitScope::ALL).unwrap();
    bit_identical(&first, &direct);

    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "tqlc") {
            let mut bytes = std::fs::read(&path).unwrap();
            let mid = bytes.len() / 2;
            bytes[mid] ^= 0x40;
            std::fs::write(&path, bytes).unwrap();
        }
    }
    let damaged = fresh(dir.path());
    let mut source = CachedSource::new(&damaged);
    let fourth = source.variable("x", &expr, &store, &ix).unwrap();
    assert_eq!(source.report.computed, ["x"]);
    assert_eq!(damaged.stats().corrupt, 1);
    bit_identical(&first, &fourth);
    let mut healed = CachedSource::new(&damaged);
    healed.variable("x", &expr, &store, &ix).unwrap();
    assert_eq!(healed.report.hits, ["x"]);
}

fn bit_identical(a: &QueryValue, b: &QueryValue) {
    assert_eq!(a.kind(), b.kind());
    let (ca, cb) = (a.column(), b.column());
    assert_eq!(ca.dtype, cb.dtype);
    assert_eq!(ca.values.len(), cb.values.len());
    for (x, y) in ca.values.iter().zip(&cb.values) {
        match (x.as_ref().and_then(|v| v.as_f64()), y.as_ref().and_then(|v| v.as_f64())) {
            (Some(x), Some(y)) => assert_eq!(x.to_bits(), y.to_bits()),
            _ => assert_eq!(x, y),
        }
    }
}

#[test]
fn export_writes_every_split() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path().join("ws")).unwrap();
    let f = fixtures::rare_class(2);
    common::ingest(&ws, &f.store, dir.path());
    let model = ws.train("rare-class", &quick(f.spec.clone()), None, &no_progress).unwrap();
    let files = ws.export_model(&model.id, &dir.path().join("out")).unwrap();
    assert_eq!(files.len(), 3);
    let mut total = 0;
    for file in &files {
        let mut r = csv::Reader::from_path(file).unwrap();
        let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(header.first().map(String::as_str), Some("trajectory_id"));
        assert_eq!(header.last().map(String::as_str), Some("target"));
        assert_eq!(header.len(), 3 + model.matrix.features.len());
        for rec in r.records() {
            let rec = rec.unwrap();
            assert!(["a", "b", "rare"].contains(&&rec[rec.len() - 1]));
            total += 1;
        }
    }
    assert_eq!(total, model.matrix.rows());
    let val = String::from_utf8(ws.export_split(&model.id, trajql_core::Split::Val).unwrap()).unwrap();
    assert_eq!(val, std::fs::read_to_string(&files[1]).unwrap());
}

fn planted_rule_workspace(dir: &std::path::Path) -> (Workspace, String) {
    let ws = Workspace::open(dir.join("ws")).unwrap();
    let f = fixtures::planted_rule(4);
    common::ingest(&ws, &f.store, dir);
    let model = ws.train("planted-rule", &quick(f.spec.clone()), None, &no_progress).unwrap();
    (ws, model.id.clone())
}

fn label_request(model: &str) -> MineRequest {
    MineRequest {
        model: model.into(),
        models: Vec::new(),
        criteria: RankingCriteria::new(Metric::TrueLabel { model: None, class: None }),
        params: MineParams::default(),
        scope: Default::default(),
        seed: 1,
        features: Vec::new(),
    }
}

fn planted() -> SubgroupRule {
    SubgroupRule::new(vec![
        Predicate { feature: "f3".into(), values: vec!["1".into()] },
        Predicate { feature: "f7".into(), values: vec!["1".into()] },
    ])
}

#[test]
fn mining_edits_and_persistence() {
    let dir = tempfile::tempdir().unwrap();
    let (ws, model) = planted_rule_workspace(dir.path());
    let mut req = label_request(&model);
    req.scope = trajql_workbench::workspace::MineScope::All;
    let run = ws.mine(&req, &no_progress).unwrap();
    assert!(run.reports.iter().take(5).any(|r| r.rule == planted()), "{:#?}", run.reports.iter().map(|r| &r.label).collect::<Vec<_>>());
    assert!(Arc::ptr_eq(&run, &ws.mine(&req, &no_progress).unwrap()));

    let report = ws.evaluate_rule(&EvaluateRequest { run: run.id.clone(), rule: planted(), features: vec![] }).unwrap();
    let listed = run.reports.iter().find(|r| r.rule == planted()).unwrap();
    assert_eq!(report.evaluation, listed.evaluation);

    let dropped = ws
        .edit_rule(&EditRequest {
            run: run.id.clone(),
            rule: planted(),
            edit: EditAction::DropPredicate { index: 1 },
            features: vec![],
        })
        .unwrap();
    assert_eq!(dropped.report.rule.len(), 1);
    assert!(dropped.report.evaluation.extent > report.evaluation.extent);

    let swapped = ws
        .edit_rule(&EditRequest {
            run: run.id.clone(),
            rule: planted(),
            edit: EditAction::ReplaceQuery {
                index: 1,
                name: "f7 earlier".into(),
                query: "last {f7} before #now - 1 hours".into(),
                values: Some(vec!["1".into()]),
            },
            features: vec![],
        })
        .unwrap();
    let feature = swapped.feature.unwrap();
    assert_eq!(feature.query.as_deref(), Some("last {f7} before #now - 1 hour"));
    assert!(swapped.report.rule.uses("f7 earlier"));
    // The new feature is not the planted one, so the rate drops.
    assert!(swapped.report.evaluation.rate.unwrap() < report.evaluation.rate.unwrap());

    let table = ws
        .distinguishing(&DistinguishingRequest { run: run.id.clone(), rule: planted(), offset: -1, features: vec![] })
        .unwrap();
    assert_eq!(table.offset, -1);
    assert!(ws.distinguishing(&DistinguishingRequest { run: run.id.clone(), rule: planted(), offset: 9, features: vec![] }).is_err());

    let bad = ws.edit_rule(&EditRequest {
        run: run.id.clone(),
        rule: planted(),
        edit: EditAction::ReplaceQuery { index: 0, name: "oops".into(), query: "{f1".into(), values: None },
        features: vec![],
    });
    assert_eq!(bad.unwrap_err().code(), "parse_error");

    let root = ws.root().to_path_buf();
    drop(ws);
    let ws = Workspace::open(&root).unwrap();
    let back = ws.subgroup_run(&run.id).unwrap();
    assert_eq!(*back, *run);
    // Contexts rebuild from the stored request after a restart.
    let again = ws.evaluate_rule(&EvaluateRequest { run: run.id.clone(), rule: planted(), features: vec![] }).unwrap();
    assert_eq!(again, report);
}

#[test]
fn comparing_models_requires_shared_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (ws, model) = planted_rule_workspace(dir.path());
    let mut other_spec = quick(fixtures::planted_rule(4).spec);
    other_spec.inputs.truncate(6);
    let other = ws.train("planted-rule", &other_spec, None, &no_progress).unwrap();
    let mut req = label_request(&model);
    req.models = vec![other.id.clone()];
    req.criteria = RankingCriteria::new(Metric::Disagreement { model: model.clone(), other: other.id.clone() });
    let run = ws.mine(&req, &no_progress).unwrap();
    assert!(!run.reports.is_empty());

    let mut shifted = other_spec.clone();
    shifted.timestep_definition = "every 2 hours".into();
    let shifted = ws.train("planted-rule", &shifted, None, &no_progress).unwrap();
    req.models = vec![shifted.id.clone()];
    req.criteria = RankingCriteria::new(Metric::Disagreement { model: model.clone(), other: shifted.id.clone() });
    assert_eq!(ws.mine(&req, &no_progress).unwrap_err().code(), "index_mismatch");
}
