//! Every query in `data/queries.tql` parses, formats canonically, and
//! evaluates against a small hospital fixture.

use std::time::Instant;

use trajql_core::engine::{evaluate, resolve_timesteps, SplitScope};
use trajql_core::query::{format_canonical, parse, parse_timestep_def};
use trajql_core::store::{SplitConfig, StoreBuilder, TrajectoryStore};
use trajql_core::value::TimeUnit;

fn corpus() -> Vec<String> {
    let text = include_str!("data/queries.tql");
    text.split("\n\n")
        .map(|block| block.lines().filter(|l| !l.trim_start().starts_with("//")).collect::<Vec<_>>().join("\n"))
        .filter(|q| !q.trim().is_empty())
        .collect()
}

fn hospital() -> TrajectoryStore {
    let day = 24.0;
    let mut b = StoreBuilder::new("hospital", TimeUnit::Hours);
    for p in 0..40 {
        let id = format!("P{p}");
        let offset = (p % 7) as f64 * 3.0;
        b.add_attribute_number(&id, "Birth Time", -8766.0 * (30.0 + p as f64));
        b.add_interval(&id, "Admission", offset, offset + 5.0 * day, None);
        b.add_interval(&id, "Admission", offset + 40.0 * day, offset + 44.0 * day, None);
        b.add_event(&id, "Visit", offset + day, None).add_event(&id, "Visit", offset + 41.0 * day, None);
        let dx = if p % 2 == 0 { "acute heart failure" } else { "pneumonia" };
        b.add_event(&id, "Diagnosis", offset + 2.0, Some(dx));
        b.add_event(&id, "Diagnosis", offset + 30.0 * day, Some("sepsis"));
        b.add_event_number(&id, "Weight", offset + 1.0, 60.0 + 5.0 * p as f64);
        b.add_event_number(&id, "Height", offset + 1.0, 1.6 + 0.005 * p as f64);
        for h in 0..20 {
            b.add_event_number(&id, "Heart Rate", offset + 3.0 * h as f64, 70.0 + ((h * 7 + p) % 41) as f64);
        }
        b.add_event(&id, "Procedure", offset + 10.0, Some(if p % 10 == 0 { "mechanical ventilation" } else { "x-ray" }));
        b.add_interval(&id, "Vasopressor", offset + 12.0, offset + 20.0, None);
        b.add_interval_number(&id, "IV Fluid", offset + 2.0, offset + 10.0, 800.0);
    }
    b.build(SplitConfig::default()).unwrap()
}

#[test]
fn corpus_round_trips() {
    let queries = corpus();
    assert_eq!(queries.len(), 14);
    for q in &queries {
        let ast = parse(q).unwrap_or_else(|e| panic!("{q}: {e}"));
        let canonical = format_canonical(&ast);
        assert_eq!(parse(&canonical).unwrap(), ast, "{canonical}");
        assert_eq!(format_canonical(&parse(&canonical).unwrap()), canonical);
    }
}

#[test]
fn corpus_evaluates() {
    let store = hospital();
    let daily = resolve_timesteps(&parse_timestep_def("every 1 day").unwrap(), &store).unwrap();
    let started = Instant::now();
    for q in corpus() {
        let ast = parse(&q).unwrap();
        let ctx = ast.needs_timesteps().then_some(&daily);
        let value = evaluate(&ast, &store, ctx, SplitScope::ALL).unwrap_or_else(|e| panic!("{q}: {e}"));
        assert!(!value.is_empty(), "{q}");
    }
    assert!(started.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn ventilation_filter_keeps_matching_events() {
    let store = hospital();
    let v = evaluate(&parse("[{Procedure} contains \"ventilation\"]").unwrap(), &store, None, SplitScope::ALL).unwrap();
    assert_eq!(v.len(), 4);
}

#[test]
fn bmi_bins_use_given_names() {
    let store = hospital();
    let q = corpus().into_iter().find(|q| q.contains("Weight")).unwrap();
    let v = evaluate(&parse(&q).unwrap(), &store, None, SplitScope::ALL).unwrap();
    let labels: Vec<_> = v.column().values.iter().flatten().map(|s| s.label()).collect();
    assert_eq!(labels.len(), v.len());
    assert!(labels.iter().all(|l| ["Low", "Average", "High"].contains(&l.as_str())));
}
