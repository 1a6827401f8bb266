//! Random aggregation queries on random small stores, checked against a
//! naive interpreter that loops over every observation for every timestep.
//! Shared by the core oracle test and the workbench acceptance run.

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use trajql_core::engine::{evaluate, SplitScope};
use trajql_core::query::parse;
use trajql_core::store::{SplitConfig, StoreBuilder, TrajectoryStore};
use trajql_core::value::{Scalar, TimeUnit};

#[derive(Clone, Debug, PartialEq)]
enum V {
    Num(f64),
    Bool(bool),
    Text(String),
}

impl V {
    fn truthy(&self) -> bool {
        match self {
            V::Num(x) => *x != 0.0,
            V::Bool(b) => *b,
            V::Text(s) => !s.is_empty(),
        }
    }
}

#[derive(Clone)]
struct Obs {
    traj: usize,
    start: f64,
    end: f64,
    value: Option<V>,
}

/// Raw generated data, in insertion order.
#[derive(Default)]
struct Raw {
    fields: BTreeMap<&'static str, (bool, Vec<Obs>)>,
}

impl Raw {
    fn rows(&self, field: &str, traj: usize) -> Vec<Obs> {
        let mut rows: Vec<Obs> = self.fields[field].1.iter().filter(|o| o.traj == traj).cloned().collect();
        rows.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
        rows
    }

    fn span(&self, traj: usize) -> Option<(f64, f64)> {
        let times: Vec<f64> = self
            .fields
            .values()
            .flat_map(|(_, rows)| rows.iter().filter(|o| o.traj == traj).flat_map(|o| [o.start, o.end]))
            .collect();
        if times.is_empty() {
            return None;
        }
        Some((times.iter().copied().fold(f64::INFINITY, f64::min), times.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
    }
}

fn time(rng: &mut StdRng) -> f64 {
    rng.random_range(0..80) as f64 / 2.0
}

fn random_store(rng: &mut StdRng) -> (Raw, TrajectoryStore) {
    let n_traj = rng.random_range(1..=20);
    let mut raw = Raw::default();
    let mut b = StoreBuilder::new("fuzz", TimeUnit::Hours);
    let missing = |rng: &mut StdRng| rng.random_bool(0.1);
    let push = |raw: &mut Raw, field: &'static str, interval: bool, o: Obs| {
        raw.fields.entry(field).or_insert_with(|| (interval, Vec::new())).1.push(o);
    };
    for t in 0..n_traj {
        let id = format!("t{t}");
        for _ in 0..rng.random_range(0..=15) {
            let at = time(rng);
            let value = (!missing(rng)).then(|| rng.random_range(-5..10) as f64);
            b.add_event(&id, "X", at, value.map(|v| v.to_string()).as_deref());
            push(&mut raw, "X", false, Obs { traj: t, start: at, end: at, value: value.map(V::Num) });
        }
        for _ in 0..rng.random_range(0..=10) {
            let at = time(rng);
            let value = (!missing(rng)).then(|| ["a", "b", "c"].choose(rng).unwrap().to_string());
            b.add_event(&id, "C", at, value.as_deref());
            push(&mut raw, "C", false, Obs { traj: t, start: at, end: at, value: value.map(V::Text) });
        }
        for _ in 0..rng.random_range(0..=10) {
            let at = time(rng);
            let value = (!missing(rng)).then(|| rng.random_bool(0.5));
            b.add_event(&id, "B", at, value.map(|v| v.to_string()).as_deref());
            push(&mut raw, "B", false, Obs { traj: t, start: at, end: at, value: value.map(V::Bool) });
        }
        for _ in 0..rng.random_range(0..=5) {
            let at = time(rng);
            b.add_event(&id, "A", at, None);
            push(&mut raw, "A", false, Obs { traj: t, start: at, end: at, value: None });
        }
        for _ in 0..rng.random_range(0..=8) {
            let s = time(rng);
            let e = s + rng.random_range(0..12) as f64 / 2.0;
            let value = (!missing(rng)).then(|| rng.random_range(1..20) as f64);
            b.add_interval(&id, "I", s, e, value.map(|v| v.to_string()).as_deref());
            push(&mut raw, "I", true, Obs { traj: t, start: s, end: e, value: value.map(V::Num) });
        }
    }
    // Keep column types fixed even when a field happens to be tiny.
    for (name, value) in [("X", "1.5"), ("C", "a"), ("B", "true"), ("I", "1")] {
        let id = "zz";
        if name == "I" {
            b.add_interval(id, name, 0.0, 1.0, Some(value));
            push(&mut raw, name, true, Obs { traj: n_traj, start: 0.0, end: 1.0, value: Some(V::Num(1.0)) });
        } else {
            b.add_event(id, name, 0.0, Some(value));
            let v = match name {
                "X" => V::Num(1.5),
                "C" => V::Text("a".into()),
                _ => V::Bool(true),
            };
            push(&mut raw, name, false, Obs { traj: n_traj, start: 0.0, end: 0.0, value: Some(v) });
        }
    }
    b.add_event("zz", "A", 0.5, None);
    push(&mut raw, "A", false, Obs { traj: n_traj, start: 0.5, end: 0.5, value: None });
    (raw, b.build(SplitConfig::default()).unwrap())
}

#[derive(Clone, Copy)]
enum Window {
    Between(f64, f64),
    Before(f64),
    After(f64),
}

#[derive(Clone)]
enum Filter {
    Gt(f64),
    Eq(String),
}

#[derive(Clone, Copy, PartialEq)]
enum Post {
    None,
    ImputeZero,
    Double,
    Above(f64),
}

#[derive(Clone, Copy, Debug)]
enum Steps {
    Every(f64),
    Events(&'static str),
    Start,
    End,
}

struct Case {
    func: &'static str,
    field: &'static str,
    filter: Option<Filter>,
    window: Window,
    steps: Steps,
    post: Post,
}

fn offset(x: f64) -> String {
    if x >= 0.0 {
        format!("#now + {} hours", x)
    } else {
        format!("#now - {} hours", -x)
    }
}

impl Case {
    fn query(&self) -> String {
        let operand = match &self.filter {
            None => format!("{{{}}}", self.field),
            Some(Filter::Gt(c)) => format!("[{{{}}} > {}]", self.field, c),
            Some(Filter::Eq(s)) => format!("[{{{}}} = \"{}\"]", self.field, s),
        };
        let window = match self.window {
            Window::Between(a, b) => format!("from {} to {}", offset(a), offset(b)),
            Window::Before(c) => format!("before {}", offset(c)),
            Window::After(c) => format!("after {}", offset(c)),
        };
        let mut q = format!("({} {} {})", self.func, operand, window);
        match self.post {
            Post::None => {}
            Post::ImputeZero => q.push_str(" impute 0"),
            Post::Double => q.push_str(" * 2"),
            Post::Above(c) => q.push_str(&format!(" > {}", c)),
        }
        let steps = match self.steps {
            Steps::Every(k) => format!("{} hours", k),
            Steps::Events(f) => format!("{{{}}}", f),
            Steps::Start => "start({I})".to_string(),
            Steps::End => "end({I})".to_string(),
        };
        format!("{} at every {}", q, steps)
    }
}

fn random_case(rng: &mut StdRng) -> Case {
    let field = *["X", "C", "B", "I"].choose(rng).unwrap();
    let funcs: &[&str] = match field {
        "X" => &["mean", "min", "max", "sum", "count", "exists", "first", "last", "count distinct", "any", "all"],
        "C" => &["count", "exists", "first", "last", "count distinct"],
        "B" => &["any", "all", "count", "exists", "first", "last", "count distinct"],
        _ => &["sum amount", "sum rate", "mean rate", "count", "exists", "mean", "min", "max", "first", "last"],
    };
    let func = *funcs.choose(rng).unwrap();
    let filter = match (field, rng.random_bool(0.25)) {
        ("X", true) | ("I", true) => Some(Filter::Gt(rng.random_range(0..6) as f64)),
        ("C", true) => Some(Filter::Eq(["a", "b"].choose(rng).unwrap().to_string())),
        _ => None,
    };
    let half = |rng: &mut StdRng, lo: i32, hi: i32| rng.random_range(lo..hi) as f64 / 2.0;
    let window = match rng.random_range(0..4) {
        0 | 1 => Window::Between(half(rng, -20, 2), half(rng, -6, 6)),
        2 => Window::Before(half(rng, -6, 6)),
        _ => Window::After(half(rng, -6, 6)),
    };
    let steps = match rng.random_range(0..6) {
        0 | 1 => Steps::Every(*[1.0, 2.0, 3.0, 5.0, 7.5].choose(rng).unwrap()),
        2 => Steps::Events("A"),
        3 => Steps::Events("X"),
        4 => Steps::Start,
        _ => Steps::End,
    };
    let numeric_out = !matches!(func, "exists" | "any" | "all")
        && !(matches!(func, "first" | "last") && field != "X" && field != "I");
    let post = match rng.random_range(0..5) {
        0 => Post::ImputeZero,
        1 if numeric_out => Post::Double,
        2 if numeric_out => Post::Above(half(rng, 0, 12)),
        _ => Post::None,
    };
    Case { func, field, filter, window, steps, post }
}

fn anchors(raw: &Raw, steps: Steps, traj: usize) -> Vec<f64> {
    let mut out: Vec<f64> = match steps {
        Steps::Every(k) => match raw.span(traj) {
            None => vec![],
            Some((first, last)) => (0..).map(|i| first + i as f64 * k).take_while(|&t| t <= last).collect(),
        },
        Steps::Events(f) => raw.rows(f, traj).iter().map(|o| o.start).collect(),
        Steps::Start => raw.rows("I", traj).iter().map(|o| o.start).collect(),
        Steps::End => raw.rows("I", traj).iter().map(|o| o.end).collect(),
    };
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

fn keep(filter: &Option<Filter>, v: &Option<V>) -> bool {
    match (filter, v) {
        (None, _) => true,
        (Some(Filter::Gt(c)), Some(V::Num(x))) => x > c,
        (Some(Filter::Eq(s)), Some(V::Text(t))) => s == t,
        _ => false,
    }
}

fn reference(case: &Case, raw: &Raw, traj: usize, now: f64) -> Option<V> {
    let (a, b) = match case.window {
        Window::Between(x, y) => (now + x, now + y),
        Window::Before(c) => (f64::NEG_INFINITY, now + c),
        Window::After(c) => (now + c, f64::INFINITY),
    };
    let interval = raw.fields[case.field].0;
    let mut hits: Vec<(Option<V>, f64, f64)> = Vec::new();
    if a < b {
        for o in raw.rows(case.field, traj) {
            if !keep(&case.filter, &o.value) {
                continue;
            }
            let inside = if interval { o.start <= b && o.end > a } else { o.start > a && o.start <= b };
            if inside {
                let overlap = (o.end.min(b) - o.start.max(a)).max(0.0);
                hits.push((o.value.clone(), overlap, o.end - o.start));
            }
        }
    }
    let present: Vec<&V> = hits.iter().filter_map(|h| h.0.as_ref()).collect();
    let nums: Vec<f64> = present
        .iter()
        .filter_map(|v| match v {
            V::Num(x) => Some(*x),
            V::Bool(b) => Some(*b as u8 as f64),
            _ => None,
        })
        .collect();
    let finite = |x: f64| x.is_finite().then_some(V::Num(x));
    let raw_value = match case.func {
        "count" => Some(V::Num(hits.len() as f64)),
        "exists" => Some(V::Bool(!hits.is_empty())),
        "count distinct" => {
            let mut seen: Vec<&V> = Vec::new();
            for v in &present {
                if !seen.contains(v) {
                    seen.push(v);
                }
            }
            Some(V::Num(seen.len() as f64))
        }
        "any" => (!present.is_empty()).then(|| V::Bool(present.iter().any(|v| v.truthy()))),
        "all" => (!present.is_empty()).then(|| V::Bool(present.iter().all(|v| v.truthy()))),
        "first" => present.first().map(|v| (*v).clone()),
        "last" => present.last().map(|v| (*v).clone()),
        "sum" => (!nums.is_empty()).then(|| nums.iter().sum::<f64>()).and_then(finite),
        "mean" => (!nums.is_empty()).then(|| nums.iter().sum::<f64>() / nums.len() as f64).and_then(finite),
        "min" => nums.iter().copied().reduce(f64::min).map(V::Num),
        "max" => nums.iter().copied().reduce(f64::max).map(V::Num),
        "sum amount" => {
            let mut total = 0.0;
            for (v, overlap, length) in &hits {
                if let Some(V::Num(x)) = v {
                    total += if *length > 0.0 { x * overlap / length } else { *x };
                }
            }
            finite(total)
        }
        "sum rate" => finite(hits.iter().filter_map(|(v, o, _)| match v {
            Some(V::Num(x)) => Some(x * o),
            _ => None,
        }).sum()),
        "mean rate" => {
            let (mut s, mut w) = (0.0, 0.0);
            for (v, o, _) in &hits {
                if let Some(V::Num(x)) = v {
                    s += x * o;
                    w += o;
                }
            }
            (w > 0.0).then(|| s / w).and_then(finite)
        }
        other => panic!("unhandled {other}"),
    };
    match case.post {
        Post::None => raw_value,
        Post::ImputeZero => Some(raw_value.unwrap_or(match case.func {
            "exists" | "any" | "all" => V::Bool(false),
            "first" | "last" if case.field == "C" => V::Text("0".into()),
            "first" | "last" if case.field == "B" => V::Bool(false),
            _ => V::Num(0.0),
        })),
        Post::Double => match raw_value {
            Some(V::Num(x)) => Some(V::Num(x * 2.0)),
            _ => None,
        },
        Post::Above(c) => match raw_value {
            Some(V::Num(x)) => Some(V::Bool(x > c)),
            _ => None,
        },
    }
}

fn same(expected: &Option<V>, got: &Option<Scalar>) -> bool {
    match (expected, got) {
        (None, None) => true,
        (Some(V::Num(a)), Some(Scalar::Number(b))) => a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs()),
        (Some(V::Bool(a)), Some(Scalar::Boolean(b))) => a == b,
        (Some(V::Text(a)), Some(Scalar::Text(b))) => a == b,
        _ => false,
    }
}

/// Runs `cases` random cases and returns the number of rows compared.
pub fn check_cases(seed: u64, cases: usize) -> Result<usize, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut rows_checked = 0usize;
    for case_no in 0..cases {
        let (raw, store) = random_store(&mut rng);
        let case = random_case(&mut rng);
        let q = case.query();
        let value = evaluate(&parse(&q).unwrap(), &store, None, SplitScope::ALL)
            .map_err(|e| format!("case {case_no}: {q}: {e}"))?;
        let ts = value.as_time_series().ok_or_else(|| format!("case {case_no}: {q}: not a time series"))?;

        let mut expected_rows = BTreeSet::new();
        let n_traj = store.trajectory_count();
        for t in 0..n_traj {
            let id = store.trajectory_id(t as u32);
            let raw_traj = if id == "zz" { raw.fields["X"].1.iter().map(|o| o.traj).max().unwrap() } else { id[1..].parse().unwrap() };
            for now in anchors(&raw, case.steps, raw_traj) {
                expected_rows.insert((id.to_string(), now.to_bits()));
            }
        }
        if ts.index.len() != expected_rows.len() {
            return Err(format!("case {case_no}: {q}: {} rows, expected {}", ts.index.len(), expected_rows.len()));
        }
        for i in 0..ts.index.len() {
            let id = store.trajectory_id(ts.index.traj[i]);
            let now = ts.index.times[i];
            if !expected_rows.contains(&(id.to_string(), now.to_bits())) {
                return Err(format!("case {case_no}: {q}: unexpected row ({id}, {now})"));
            }
            let raw_traj = if id == "zz" { raw.fields["X"].1.iter().map(|o| o.traj).max().unwrap() } else { id[1..].parse().unwrap() };
            let expected = reference(&case, &raw, raw_traj, now);
            let got = &ts.column.values[i];
            if !same(&expected, got) {
                return Err(format!("case {case_no}: {q}\nrow ({id}, {now}): expected {expected:?}, got {got:?}"));
            }
            rows_checked += 1;
        }
    }
    Ok(rows_checked)
}
