use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::bits::Bits;
use super::distinguish::DistinguishingTable;
use super::{GroupingFeature, Predicate, RankingCriteria, RuleEdit, SubgroupError, SubgroupRule};
use crate::hash::unit_interval;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Half {
    Discovery,
    Evaluation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MineParams {
    pub beam_width: usize,
    /// 1 means single predicates only, with no expansion.
    pub max_predicates: usize,
    /// Smallest discovery extent a candidate may have.
    pub min_support: usize,
    /// Candidates re-scored on the evaluation half.
    pub rescore: usize,
    pub top_k: usize,
}

impl Default for MineParams {
    fn default() -> Self {
        MineParams { beam_width: 50, max_predicates: 3, min_support: 20, rescore: 100, top_k: 20 }
    }
}

/// Extent statistics on one half.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtentStats {
    /// Rows in the half.
    pub rows: usize,
    /// Rows in the half matching the rule.
    pub extent: usize,
    pub coverage: f64,
    /// Mean metric over the extent.
    pub rate: Option<f64>,
    /// Mean metric over the half.
    pub overall_rate: Option<f64>,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub rule: SubgroupRule,
    pub label: String,
    pub discovery: ExtentStats,
    pub evaluation: ExtentStats,
    /// Evaluation-half score.
    pub score: f64,
    /// The evaluation extent is smaller than the minimum support.
    pub insufficient_support: bool,
    pub distinguishing: DistinguishingTable,
}

/// Grouping features, per-row metric values and the discovery/evaluation
/// split over one model's rows.
#[derive(Clone, Debug)]
pub struct SubgroupContext {
    pub(crate) features: Vec<GroupingFeature>,
    pub(crate) metric: Vec<f64>,
    pub(crate) traj: Vec<u32>,
    pub(crate) criteria: RankingCriteria,
    pub(crate) min_support: usize,
    half: Vec<Option<Half>>,
    pub(crate) masks: [Bits; 2],
    value_bits: Vec<Vec<Bits>>,
}

fn mean_over(bits: &Bits, metric: &[f64]) -> Option<f64> {
    let n = bits.count();
    (n > 0).then(|| bits.iter().map(|r| metric[r]).sum::<f64>() / n as f64)
}

impl SubgroupContext {
    /// `traj` holds the trajectory of every row and `rows` the rows in
    /// scope. Halves are assigned per trajectory from `seed`.
    pub fn new(
        features: Vec<GroupingFeature>,
        metric: Vec<f64>,
        traj: &[u32],
        rows: &[usize],
        criteria: RankingCriteria,
        seed: u64,
    ) -> Result<Self, SubgroupError> {
        if features.is_empty() {
            return Err(SubgroupError::NoFeatures);
        }
        let n = metric.len();
        if traj.len() != n || features.iter().any(|f| f.codes.len() != n) {
            return Err(SubgroupError::Criteria("feature, metric and row lengths differ".into()));
        }
        let mut seen = BTreeSet::new();
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(SubgroupError::DuplicateFeature(f.name.clone()));
            }
        }
        let mut half = alloc::vec![None; n];
        let mut masks = [Bits::zeros(n), Bits::zeros(n)];
        for &r in rows {
            if metric[r].is_nan() {
                continue;
            }
            let h = if unit_interval("subgroup half", seed, &traj[r].to_string()) < 0.5 {
                Half::Discovery
            } else {
                Half::Evaluation
            };
            half[r] = Some(h);
            masks[h as usize].set(r);
        }
        let value_bits = features
            .iter()
            .map(|f| {
                let mut bits: Vec<Bits> = f.values.iter().map(|_| Bits::zeros(n)).collect();
                for (r, c) in f.codes.iter().enumerate() {
                    if let Some(c) = c {
                        bits[*c as usize].set(r);
                    }
                }
                bits
            })
            .collect();
        Ok(SubgroupContext {
            features,
            metric,
            traj: traj.to_vec(),
            criteria,
            min_support: MineParams::default().min_support,
            half,
            masks,
            value_bits,
        })
    }

    pub fn with_min_support(mut self, min_support: usize) -> Self {
        self.min_support = min_support;
        self
    }

    pub fn features(&self) -> &[GroupingFeature] {
        &self.features
    }

    pub fn criteria(&self) -> &RankingCriteria {
        &self.criteria
    }

    pub fn metric(&self) -> &[f64] {
        &self.metric
    }

    /// The half a row belongs to, or `None` when out of scope.
    pub fn half(&self, row: usize) -> Option<Half> {
        self.half[row]
    }

    /// Add or replace a feature, e.g. one built from edited query text.
    pub fn with_feature(&self, feature: GroupingFeature) -> Result<SubgroupContext, SubgroupError> {
        let mut features = self.features.clone();
        match features.iter().position(|f| f.name == feature.name) {
            Some(i) => features[i] = feature,
            None => features.push(feature),
        }
        let rows: Vec<usize> = (0..self.metric.len()).filter(|&r| self.half[r].is_some()).collect();
        let mut out = SubgroupContext::new(features, self.metric.clone(), &self.traj, &rows, self.criteria.clone(), 0)?;
        out.half = self.half.clone();
        out.masks = self.masks.clone();
        out.min_support = self.min_support;
        Ok(out)
    }

    fn feature_index(&self, name: &str) -> Result<usize, SubgroupError> {
        self.features.iter().position(|f| f.name == name).ok_or_else(|| SubgroupError::UnknownFeature(name.into()))
    }

    fn validate(&self, rule: &SubgroupRule) -> Result<(), SubgroupError> {
        let mut seen = BTreeSet::new();
        for p in &rule.predicates {
            let f = &self.features[self.feature_index(&p.feature)?];
            if !seen.insert(p.feature.as_str()) {
                return Err(SubgroupError::DuplicateFeature(p.feature.clone()));
            }
            if p.values.is_empty() {
                return Err(SubgroupError::EmptyValues(p.feature.clone()));
            }
            if let Some(v) = p.values.iter().find(|v| f.value_index(v).is_none()) {
                return Err(SubgroupError::UnknownValue { feature: p.feature.clone(), value: v.clone() });
            }
        }
        Ok(())
    }

    /// Rows matching the rule, in or out of scope.
    pub(crate) fn extent(&self, rule: &SubgroupRule) -> Bits {
        let mut out = Bits::ones(self.metric.len());
        for p in &rule.predicates {
            let fi = self.features.iter().position(|f| f.name == p.feature).expect("validated");
            let mut any = Bits::zeros(self.metric.len());
            for v in &p.values {
                any.or_assign(&self.value_bits[fi][self.features[fi].value_index(v).expect("validated")]);
            }
            out = out.and(&any);
        }
        out
    }

    /// Matching rows in one half.
    pub fn extent_rows(&self, rule: &SubgroupRule, half: Half) -> Result<Vec<usize>, SubgroupError> {
        self.validate(rule)?;
        Ok(self.extent(rule).and(&self.masks[half as usize]).iter().collect())
    }

    fn stats(&self, extent: &Bits, half: Half, predicates: usize) -> ExtentStats {
        let mask = &self.masks[half as usize];
        let inside = extent.and(mask);
        let rows = mask.count();
        let count = inside.count();
        let coverage = if rows == 0 { 0.0 } else { count as f64 / rows as f64 };
        let rate = mean_over(&inside, &self.metric);
        let overall_rate = mean_over(mask, &self.metric);
        let score = self.criteria.score(rate, overall_rate, coverage, predicates);
        ExtentStats { rows, extent: count, coverage, rate, overall_rate, score }
    }

    fn report(&self, rule: SubgroupRule, extent: &Bits) -> SubgroupReport {
        let discovery = self.stats(extent, Half::Discovery, rule.len());
        let evaluation = self.stats(extent, Half::Evaluation, rule.len());
        let distinguishing = self.distinguishing_table(&rule, extent, 0);
        SubgroupReport {
            label: rule.to_string(),
            score: evaluation.score,
            insufficient_support: evaluation.extent < self.min_support,
            discovery,
            evaluation,
            rule,
            distinguishing,
        }
    }

    /// Exact statistics for a rule on both halves.
    pub fn evaluate_rule(&self, rule: &SubgroupRule) -> Result<SubgroupReport, SubgroupError> {
        self.validate(rule)?;
        let rule = self.canonical(rule);
        let extent = self.extent(&rule);
        Ok(self.report(rule, &extent))
    }

    /// Apply an edit and evaluate the result.
    pub fn edit_rule(&self, rule: &SubgroupRule, edit: &RuleEdit) -> Result<SubgroupReport, SubgroupError> {
        let mut out = rule.clone();
        let check = |index: usize| {
            if index < rule.len() {
                Ok(index)
            } else {
                Err(SubgroupError::BadEdit(format!("the rule has no predicate {}", index)))
            }
        };
        match edit {
            RuleEdit::DropPredicate { index } => {
                out.predicates.remove(check(*index)?);
            }
            RuleEdit::SetValues { index, values } => {
                out.predicates[check(*index)?].values = values.clone();
            }
            RuleEdit::AddPredicate { feature, values } => {
                out.predicates.push(Predicate { feature: feature.clone(), values: values.clone() });
            }
            RuleEdit::ReplacePredicate { index, feature, values } => {
                out.predicates[check(*index)?] = Predicate { feature: feature.clone(), values: values.clone() };
            }
        }
        self.evaluate_rule(&out)
    }

    /// Predicates in feature order, values in feature value order.
    fn canonical(&self, rule: &SubgroupRule) -> SubgroupRule {
        let mut preds: Vec<(usize, Predicate)> = rule
            .predicates
            .iter()
            .map(|p| {
                let fi = self.feature_index(&p.feature).expect("validated");
                let f = &self.features[fi];
                let values = f.values.iter().filter(|v| p.values.contains(v)).cloned().collect();
                (fi, Predicate { feature: p.feature.clone(), values })
            })
            .collect();
        preds.sort_by_key(|(i, _)| *i);
        SubgroupRule::new(preds.into_iter().map(|(_, p)| p).collect())
    }

    /// Beam search on the discovery half, re-scored on the evaluation half.
    pub fn mine(&self, params: &MineParams) -> Result<Vec<SubgroupReport>, SubgroupError> {
        self.mine_with(params, &mut || false)
    }

    /// As [`mine`](Self::mine), checking `cancelled` between beam levels.
    pub fn mine_with(
        &self,
        params: &MineParams,
        cancelled: &mut dyn FnMut() -> bool,
    ) -> Result<Vec<SubgroupReport>, SubgroupError> {
        let n = self.metric.len();
        let disc = &self.masks[Half::Discovery as usize];
        let disc_rows = disc.count();
        let disc_overall = mean_over(disc, &self.metric);

        // Single-value predicates, plus their complements for features with
        // three or more values.
        let mut base: Vec<(usize, Vec<usize>, Bits)> = Vec::new();
        for (fi, f) in self.features.iter().enumerate() {
            for v in 0..f.values.len() {
                base.push((fi, alloc::vec![v], self.value_bits[fi][v].clone()));
                if f.values.len() >= 3 {
                    let rest: Vec<usize> = (0..f.values.len()).filter(|&w| w != v).collect();
                    let mut bits = Bits::zeros(n);
                    for &w in &rest {
                        bits.or_assign(&self.value_bits[fi][w]);
                    }
                    base.push((fi, rest, bits));
                }
            }
        }

        struct Candidate {
            preds: Vec<usize>,
            extent: Bits,
            score: f64,
        }
        let score_of = |extent: &Bits, k: usize| {
            let inside = extent.and(disc);
            let count = inside.count();
            if count < params.min_support.max(1) {
                return None;
            }
            let coverage = count as f64 / disc_rows as f64;
            Some(self.criteria.score(mean_over(&inside, &self.metric), disc_overall, coverage, k))
        };
        let by_score = |a: &Candidate, b: &Candidate| {
            b.score.total_cmp(&a.score).then(a.preds.len().cmp(&b.preds.len())).then_with(|| a.preds.cmp(&b.preds))
        };

        let mut pool: Vec<Candidate> = Vec::new();
        let mut level: Vec<Candidate> = base
            .iter()
            .enumerate()
            .filter_map(|(i, (_, _, bits))| {
                score_of(bits, 1).map(|score| Candidate { preds: alloc::vec![i], extent: bits.clone(), score })
            })
            .collect();
        level.sort_by(by_score);
        for depth in 2..=params.max_predicates {
            if cancelled() {
                return Err(SubgroupError::Cancelled);
            }
            let beam: Vec<&Candidate> = level.iter().take(params.beam_width).collect();
            let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
            let mut next = Vec::new();
            for c in beam {
                for (i, (fi, _, bits)) in base.iter().enumerate() {
                    if c.preds.iter().any(|&p| base[p].0 == *fi) {
                        continue;
                    }
                    let mut preds = c.preds.clone();
                    preds.push(i);
                    preds.sort_unstable();
                    if !seen.insert(preds.clone()) {
                        continue;
                    }
                    let extent = c.extent.and(bits);
                    if let Some(score) = score_of(&extent, depth) {
                        next.push(Candidate { preds, extent, score });
                    }
                }
            }
            next.sort_by(by_score);
            pool.append(&mut level);
            level = next;
        }
        pool.append(&mut level);
        pool.sort_by(by_score);
        pool.truncate(params.rescore);

        let to_rule = |preds: &[usize]| {
            let mut ps: Vec<&(usize, Vec<usize>, Bits)> = preds.iter().map(|&i| &base[i]).collect();
            ps.sort_by_key(|p| p.0);
            SubgroupRule::new(
                ps.into_iter()
                    .map(|(fi, vs, _)| {
                        let f = &self.features[*fi];
                        Predicate { feature: f.name.clone(), values: vs.iter().map(|&v| f.values[v].clone()).collect() }
                    })
                    .collect(),
            )
        };
        let mut reports: Vec<(SubgroupReport, Bits)> = pool
            .iter()
            .map(|c| {
                let rule = to_rule(&c.preds);
                let eval_extent = c.extent.and(&self.masks[Half::Evaluation as usize]);
                (self.report(rule, &c.extent), eval_extent)
            })
            .collect();
        reports.sort_by(|(a, _), (b, _)| {
            b.score
                .total_cmp(&a.score)
                .then(a.rule.len().cmp(&b.rule.len()))
                .then_with(|| b.discovery.score.total_cmp(&a.discovery.score))
                .then_with(|| a.label.cmp(&b.label))
        });
        let mut extents: BTreeSet<Bits> = BTreeSet::new();
        let mut out = Vec::new();
        for (report, eval_extent) in reports {
            if extents.insert(eval_extent) {
                out.push(report);
                if out.len() == params.top_k {
                    break;
                }
            }
        }
        Ok(out)
    }
}
