use alloc::sync::Arc;
use alloc::vec::Vec;

use super::eval::Evaluator;
use super::{EvalError, QueryValue, TimestepIndex};
use crate::query::ast::{AnchorEdge, TimestepDef};
use crate::query::format_timestep_def;
use crate::store::TrajectoryStore;

/// Upper bound on the rows of one index, to fail fast on `every 1 second`
/// over a multi-year dataset.
pub const MAX_TIMESTEPS: usize = 20_000_000;

/// Build the index for a timestep definition.
///
/// Periodic definitions anchor at `t0 + k * step` for every `k` with the
/// anchor no later than the trajectory's last observation, where `t0` is its
/// first observation. Anchored definitions take event times, or interval
/// ends unless `start(...)` is requested.
pub fn resolve_timesteps(def: &TimestepDef, store: &TrajectoryStore) -> Result<Arc<TimestepIndex>, EvalError> {
    Evaluator::new(store).resolve_timesteps(def)
}

pub(crate) fn resolve_with(ev: &mut Evaluator<'_>, def: &TimestepDef) -> Result<Arc<TimestepIndex>, EvalError> {
    let store = ev.store();
    let definition = format_timestep_def(def);
    let mut rows: Vec<(u32, f64)> = Vec::new();
    match def {
        TimestepDef::Periodic(d) => {
            let step = d.value * d.unit.in_time_unit(store.time_unit());
            if !(step > 0.0 && step.is_finite()) {
                return Err(EvalError::InvalidTimesteps(alloc::format!("period of `{}` is not positive", definition)));
            }
            for t in 0..store.trajectory_count() as u32 {
                let Some((first, last)) = store.span(t) else { continue };
                let mut k = 0u64;
                loop {
                    let anchor = first + k as f64 * step;
                    if anchor > last {
                        break;
                    }
                    rows.push((t, anchor));
                    if rows.len() > MAX_TIMESTEPS {
                        return Err(too_many(&definition));
                    }
                    k += 1;
                }
            }
        }
        TimestepDef::Anchored { source, edge } => {
            let value = ev.evaluate_unscoped(source, None)?;
            match (value, edge) {
                (QueryValue::Events { traj, times, .. }, _) => rows.extend(traj.into_iter().zip(times)),
                (QueryValue::Intervals { traj, starts, .. }, AnchorEdge::Start) => {
                    rows.extend(traj.into_iter().zip(starts))
                }
                (QueryValue::Intervals { traj, ends, .. }, _) => rows.extend(traj.into_iter().zip(ends)),
                (other, _) => {
                    return Err(EvalError::InvalidTimesteps(alloc::format!(
                        "timesteps must come from events or intervals, got a {} series",
                        other.kind().name()
                    )))
                }
            }
            if rows.len() > MAX_TIMESTEPS {
                return Err(too_many(&definition));
            }
        }
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    rows.dedup();
    let (traj, times) = rows.into_iter().unzip();
    Ok(Arc::new(TimestepIndex::new(traj, times, definition)))
}

fn too_many(definition: &str) -> EvalError {
    EvalError::InvalidTimesteps(alloc::format!("`{}` produces more than {} timesteps", definition, MAX_TIMESTEPS))
}
