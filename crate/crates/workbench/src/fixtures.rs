//! Synthetic datasets with known structure, paired with a model spec.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use trajql_core::model::{InputVariable, ModelSpec};
use trajql_core::store::{SplitConfig, StoreBuilder, TrajectoryStore};
use trajql_core::value::TimeUnit;

pub struct Fixture {
    pub store: TrajectoryStore,
    pub spec: ModelSpec,
}

pub const FIXTURES: [&str; 5] = ["planted-signal", "distributed-signal", "rare-class", "planted-rule", "toy-clinic"];

pub fn by_name(name: &str, seed: u64) -> Option<Fixture> {
    Some(match name {
        "planted-signal" => planted_signal(seed),
        "distributed-signal" => distributed_signal(seed),
        "rare-class" => rare_class(seed),
        "planted-rule" => planted_rule(seed),
        "toy-clinic" => Fixture { store: trajql_core::store::toy_clinic(), spec: toy_spec() },
        _ => return None,
    })
}

fn spec(name: &str, timesteps: &str, inputs: Vec<(String, String)>, target: &str) -> ModelSpec {
    ModelSpec {
        name: name.into(),
        timestep_definition: timesteps.into(),
        timestep_filter: None,
        inputs: inputs.into_iter().map(|(name, query)| InputVariable { name, query }).collect(),
        target: target.into(),
        threshold: 0.5,
        learner: Default::default(),
    }
}

fn attribute_inputs(k: usize) -> Vec<(String, String)> {
    (1..=k).map(|i| (format!("x{}", i), format!("{{x{}}}", i))).collect()
}

/// One row per trajectory: a `Visit` event at time 0 and attributes
/// `x1..xk` drawn from N(0, 1); the target attribute `y` comes from `label`.
fn gaussian_rows(
    name: &str,
    n: usize,
    k: usize,
    seed: u64,
    mut label: impl FnMut(&[f64], &mut ChaCha8Rng) -> String,
) -> TrajectoryStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut b = StoreBuilder::new(name, TimeUnit::Hours);
    for t in 0..n {
        let id = t.to_string();
        let x: Vec<f64> = (0..k).map(|_| normal.sample(&mut rng)).collect();
        b.add_event(&id, "Visit", 0.0, None);
        for (i, v) in x.iter().enumerate() {
            b.add_attribute_number(&id, &format!("x{}", i + 1), *v);
        }
        let y = label(&x, &mut rng);
        b.add_attribute(&id, "y", Some(&y));
    }
    b.build(SplitConfig { seed, ..Default::default() }).expect("fixture is valid")
}

/// 2000 rows, ten inputs, target `x1 > 0`.
pub fn planted_signal(seed: u64) -> Fixture {
    let store = gaussian_rows("planted-signal", 2000, 10, seed, |x, _| (x[0] > 0.0).to_string());
    Fixture { store, spec: spec("planted signal", "every {Visit}", attribute_inputs(10), "{y}") }
}

/// 2000 rows, ten inputs, target `x1 + ... + x10 > 0`.
pub fn distributed_signal(seed: u64) -> Fixture {
    let store =
        gaussian_rows("distributed-signal", 2000, 10, seed, |x, _| (x.iter().sum::<f64>() > 0.0).to_string());
    Fixture { store, spec: spec("distributed signal", "every {Visit}", attribute_inputs(10), "{y}") }
}

/// 3000 rows, six inputs, classes `a`/`b` split on `x1` and a 2% class
/// `rare` assigned at random.
pub fn rare_class(seed: u64) -> Fixture {
    let store = gaussian_rows("rare-class", 3000, 6, seed, |x, rng| {
        if rng.random_bool(0.02) {
            "rare".into()
        } else if x[0] > 0.0 {
            "b".into()
        } else {
            "a".into()
        }
    });
    Fixture { store, spec: spec("rare class", "every {Visit}", attribute_inputs(6), "{y}") }
}

/// 1000 trajectories with five visits each (5000 rows) and twelve binary
/// event fields `f1..f12`. `f3` and `f7` are 1 with probability √0.1, so
/// both hold on about 10% of rows; `label` is true there with probability
/// 0.9 and elsewhere with probability 0.2.
pub fn planted_rule(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p_planted = 0.1f64.sqrt();
    let mut b = StoreBuilder::new("planted-rule", TimeUnit::Hours);
    for t in 0..1000 {
        let id = t.to_string();
        for visit in 0..5 {
            let time = visit as f64;
            b.add_event(&id, "Visit", time, None);
            let mut f = [false; 12];
            for (i, v) in f.iter_mut().enumerate() {
                let p = if i == 2 || i == 6 { p_planted } else { 0.5 };
                *v = rng.random_bool(p);
                b.add_event_number(&id, &format!("f{}", i + 1), time, *v as u8 as f64);
            }
            let p = if f[2] && f[6] { 0.9 } else { 0.2 };
            b.add_event(&id, "label", time, Some(if rng.random_bool(p) { "true" } else { "false" }));
        }
    }
    let store = b.build(SplitConfig { seed, ..Default::default() }).expect("fixture is valid");
    let inputs = (1..=12).map(|i| (format!("f{}", i), format!("last {{f{}}} before #now", i))).collect();
    Fixture { store, spec: spec("planted rule", "every {Visit}", inputs, "last {label} before #now") }
}

pub fn toy_spec() -> ModelSpec {
    spec(
        "toy",
        "every 4 hours",
        vec![("hr".into(), "mean {HeartRate} from #now - 4 hours to #now impute mean".into())],
        "exists {Diagnosis} from #now to #now + 4 hours",
    )
}

/// A day-scale clinic (times in days) on which the 30-day queries have
/// non-trivial answers.
///
/// - `A`: admissions `[0, 5]`, `[40, 45]`, `[100, 103]`; diagnoses
///   "heart failure" at 35 and "pneumonia" at 90.
/// - `B`: admissions `[10, 12]`, `[70, 75]`; "chronic heart failure" at 10.
pub fn day_clinic() -> TrajectoryStore {
    let mut b = StoreBuilder::new("day-clinic", TimeUnit::Days);
    b.add_interval("A", "Admission", 0.0, 5.0, None)
        .add_interval("A", "Admission", 40.0, 45.0, None)
        .add_interval("A", "Admission", 100.0, 103.0, None)
        .add_event("A", "Diagnosis", 35.0, Some("heart failure"))
        .add_event("A", "Diagnosis", 90.0, Some("pneumonia"))
        .add_interval("B", "Admission", 10.0, 12.0, None)
        .add_interval("B", "Admission", 70.0, 75.0, None)
        .add_event("B", "Diagnosis", 10.0, Some("chronic heart failure"));
    b.build(SplitConfig::default()).expect("fixture is valid")
}
