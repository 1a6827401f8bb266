use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::bits::Bits;
use super::search::{Half, SubgroupContext};
use super::{SubgroupError, SubgroupRule};

/// Largest timestep offset accepted by [`SubgroupContext::distinguishing_features`].
pub const MAX_OFFSET: i64 = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueDifference {
    pub value: String,
    /// Share of shifted extent rows with this value.
    pub extent_prevalence: f64,
    /// Share of all evaluation rows with this value.
    pub overall_prevalence: f64,
    pub difference: f64,
    /// `difference` over the standard deviation of the overall indicator.
    pub standardized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureDifference {
    pub feature: String,
    /// Largest absolute standardized difference over the values.
    pub score: f64,
    pub values: Vec<ValueDifference>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DistinguishingTable {
    pub offset: i64,
    pub extent_rows: usize,
    pub shifted_rows: usize,
    pub features: Vec<FeatureDifference>,
    pub notice: Option<String>,
}

impl SubgroupContext {
    /// Compare features outside the rule between the evaluation extent,
    /// shifted `offset` timesteps within each trajectory, and all
    /// evaluation rows.
    pub fn distinguishing_features(&self, rule: &SubgroupRule, offset: i64) -> Result<DistinguishingTable, SubgroupError> {
        if offset.abs() > MAX_OFFSET {
            return Err(SubgroupError::Offset { offset, max: MAX_OFFSET });
        }
        let report = self.evaluate_rule(rule)?;
        let extent = self.extent(&report.rule);
        Ok(self.distinguishing_table(&report.rule, &extent, offset))
    }

    pub(crate) fn distinguishing_table(&self, rule: &SubgroupRule, extent: &Bits, offset: i64) -> DistinguishingTable {
        let eval = &self.masks[Half::Evaluation as usize];
        let inside = extent.and(eval);
        let n = self.traj.len() as i64;
        let shifted: Vec<usize> = inside
            .iter()
            .filter_map(|r| {
                let s = r as i64 + offset;
                (0..n).contains(&s).then_some(s as usize).filter(|&s| self.traj[s] == self.traj[r])
            })
            .collect();
        let mut table = DistinguishingTable {
            offset,
            extent_rows: inside.count(),
            shifted_rows: shifted.len(),
            features: Vec::new(),
            notice: None,
        };
        if shifted.is_empty() {
            table.notice = Some(if inside.count() == 0 {
                "the rule matches no evaluation rows".into()
            } else {
                alloc::format!("no extent row has a timestep {} positions away in its trajectory", offset)
            });
            return table;
        }
        let base: Vec<usize> = eval.iter().collect();
        for f in self.features.iter().filter(|f| !rule.uses(&f.name)) {
            let share = |rows: &[usize], v: usize| {
                rows.iter().filter(|&&r| f.codes[r] == Some(v as u8)).count() as f64 / rows.len() as f64
            };
            let values: Vec<ValueDifference> = f
                .values
                .iter()
                .enumerate()
                .map(|(v, value)| {
                    let p1 = share(&shifted, v);
                    let p0 = share(&base, v);
                    let sd = libm::sqrt(p0 * (1.0 - p0));
                    ValueDifference {
                        value: value.clone(),
                        extent_prevalence: p1,
                        overall_prevalence: p0,
                        difference: p1 - p0,
                        standardized: if sd > 0.0 { (p1 - p0) / sd } else { 0.0 },
                    }
                })
                .collect();
            let score = values.iter().map(|v| libm::fabs(v.standardized)).fold(0.0, f64::max);
            table.features.push(FeatureDifference { feature: f.name.clone(), score, values });
        }
        table.features.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.feature.cmp(&b.feature)));
        table
    }
}
