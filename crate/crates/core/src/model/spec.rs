use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::query::ast::{Expr, TimestepDef};
use crate::query::{format_canonical, format_timestep_def, parse, parse_timestep_def};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputVariable {
    pub name: String,
    pub query: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub depths: Vec<usize>,
    pub learning_rates: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid { depths: vec![3, 6], learning_rates: vec![0.1, 0.3] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerParams {
    pub seed: u64,
    pub grid: Grid,
    pub max_trees: usize,
    pub patience: usize,
    pub subsample: f64,
}

impl Default for LearnerParams {
    fn default() -> Self {
        LearnerParams { seed: 0, grid: Grid::default(), max_trees: 200, patience: 20, subsample: 0.8 }
    }
}

fn default_threshold() -> f64 {
    0.5
}

/// A model specification: where to predict, which rows to keep, the inputs
/// and the target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub timestep_definition: String,
    #[serde(default)]
    pub timestep_filter: Option<String>,
    pub inputs: Vec<InputVariable>,
    pub target: String,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub learner: LearnerParams,
}

/// A spec with every query parsed.
#[derive(Clone, Debug)]
pub struct ParsedSpec {
    pub timesteps: TimestepDef,
    pub filter: Option<Expr>,
    pub inputs: Vec<(String, Expr)>,
    pub target: Expr,
}

impl ModelSpec {
    pub fn parse(&self) -> Result<ParsedSpec, ModelError> {
        let timesteps = parse_timestep_def(&self.timestep_definition).map_err(|error| ModelError::Parse { what: "timestep definition".into(), error })?;
        let filter = match &self.timestep_filter {
            Some(f) if !f.trim().is_empty() => {
                Some(parse(f).map_err(|error| ModelError::Parse { what: "timestep filter".into(), error })?)
            }
            _ => None,
        };
        let mut inputs = Vec::with_capacity(self.inputs.len());
        for input in &self.inputs {
            if input.name.trim().is_empty() {
                return Err(ModelError::InvalidSpec("input names must not be empty".into()));
            }
            if inputs.iter().any(|(n, _): &(String, Expr)| *n == input.name) {
                return Err(ModelError::InvalidSpec(alloc::format!("duplicate input name `{}`", input.name)));
            }
            let expr = parse(&input.query)
                .map_err(|error| ModelError::Parse { what: alloc::format!("input `{}`", input.name), error })?;
            inputs.push((input.name.clone(), expr));
        }
        let target = parse(&self.target).map_err(|error| ModelError::Parse { what: "target".into(), error })?;
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ModelError::InvalidSpec("threshold must lie strictly between 0 and 1".into()));
        }
        let g = &self.learner.grid;
        if g.depths.is_empty() || g.learning_rates.is_empty() || self.learner.max_trees == 0 {
            return Err(ModelError::InvalidSpec("learner grid must not be empty".into()));
        }
        if !(self.learner.subsample > 0.0 && self.learner.subsample <= 1.0) {
            return Err(ModelError::InvalidSpec("subsample must lie in (0, 1]".into()));
        }
        Ok(ParsedSpec { timesteps, filter, inputs, target })
    }

    /// The same spec with every query in canonical form.
    pub fn canonical(&self) -> Result<ModelSpec, ModelError> {
        let p = self.parse()?;
        let mut out = self.clone();
        out.timestep_definition = format_timestep_def(&p.timesteps);
        out.timestep_filter = p.filter.as_ref().map(format_canonical);
        for (input, (_, e)) in out.inputs.iter_mut().zip(&p.inputs) {
            input.query = format_canonical(e);
        }
        out.target = format_canonical(&p.target);
        Ok(out)
    }
}
