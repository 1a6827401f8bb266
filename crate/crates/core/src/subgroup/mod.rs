//! Subgroup discovery over design-matrix rows.
//!
//! Inputs are discretized into [`GroupingFeature`]s, a [`RankingCriteria`]
//! turns model outputs into a per-row metric, and [`SubgroupContext`] mines
//! conjunctive rules with a beam search on the discovery half of the
//! trajectories, reporting statistics from the evaluation half.

use alloc::string::String;

use thiserror::Error;

mod bits;
mod criteria;
mod distinguish;
mod features;
mod rule;
mod search;

pub use criteria::{metric_values, Direction, Metric, ModelRows, RankingCriteria, Weights, EPSILON};
pub use distinguish::{DistinguishingTable, FeatureDifference, ValueDifference, MAX_OFFSET};
pub use features::{discretize_column, discretize_inputs, GroupingFeature, MAX_VALUES, OTHER};
pub use rule::{Predicate, RuleEdit, SubgroupRule};
pub use search::{ExtentStats, Half, MineParams, SubgroupContext, SubgroupReport};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SubgroupError {
    #[error("no grouping features; every input is constant or missing")]
    NoFeatures,
    #[error("models `{a}` and `{b}` were trained on different timesteps")]
    IndexMismatch { a: String, b: String },
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("{0}")]
    Criteria(String),
    #[error("unknown grouping feature `{0}`")]
    UnknownFeature(String),
    #[error("`{feature}` has no value `{value}`")]
    UnknownValue { feature: String, value: String },
    #[error("`{0}` must allow at least one value")]
    EmptyValues(String),
    #[error("`{0}` appears twice")]
    DuplicateFeature(String),
    #[error("{0}")]
    BadEdit(String),
    #[error("offset {offset} is outside -{max}..={max}")]
    Offset { offset: i64, max: i64 },
    #[error("cancelled")]
    Cancelled,
}

impl SubgroupError {
    pub fn code(&self) -> &'static str {
        match self {
            SubgroupError::NoFeatures => "no_features",
            SubgroupError::IndexMismatch { .. } => "index_mismatch",
            SubgroupError::UnknownModel(_) => "unknown_model",
            SubgroupError::Criteria(_) => "invalid_criteria",
            SubgroupError::UnknownFeature(_) => "unknown_feature",
            SubgroupError::UnknownValue { .. } => "unknown_value",
            SubgroupError::EmptyValues(_) => "empty_values",
            SubgroupError::DuplicateFeature(_) => "duplicate_feature",
            SubgroupError::BadEdit(_) => "invalid_edit",
            SubgroupError::Offset { .. } => "invalid_offset",
            SubgroupError::Cancelled => "cancelled",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;
    use alloc::vec;
    use alloc::vec::Vec;

    fn binary_feature(name: &str, codes: Vec<u8>) -> GroupingFeature {
        GroupingFeature {
            name: name.into(),
            query: None,
            values: vec!["0".into(), "1".into()],
            codes: codes.into_iter().map(Some).collect(),
        }
    }

    /// 400 trajectories of 3 rows; metric 1 where a = 1 and b = 1.
    fn context() -> SubgroupContext {
        let n = 1200;
        let traj: Vec<u32> = (0..n as u32).map(|r| r / 3).collect();
        let a: Vec<u8> = (0..n).map(|r| (r % 2) as u8).collect();
        let b: Vec<u8> = (0..n).map(|r| (r / 2 % 2) as u8).collect();
        let c: Vec<u8> = (0..n).map(|r| (r / 7 % 2) as u8).collect();
        let metric = (0..n).map(|r| (a[r] == 1 && b[r] == 1) as u8 as f64).collect();
        let features = vec![binary_feature("a", a), binary_feature("b", b), binary_feature("c", c)];
        let rows: Vec<usize> = (0..n).collect();
        let criteria = RankingCriteria::new(Metric::TrueLabel { model: None, class: None });
        SubgroupContext::new(features, metric, &traj, &rows, criteria, 1).unwrap()
    }

    fn rule(preds: &[(&str, &[&str])]) -> SubgroupRule {
        SubgroupRule::new(
            preds
                .iter()
                .map(|(f, vs)| Predicate { feature: f.to_string(), values: vs.iter().map(|v| v.to_string()).collect() })
                .collect(),
        )
    }

    #[test]
    fn halves_split_by_trajectory() {
        let ctx = context();
        for r in 0..1200 {
            assert_eq!(ctx.half(r), ctx.half(r / 3 * 3));
        }
        let disc = (0..1200).filter(|&r| ctx.half(r) == Some(Half::Discovery)).count();
        assert!((450..750).contains(&disc), "{disc}");
    }

    #[test]
    fn the_planted_pair_wins() {
        let ctx = context();
        let top = ctx.mine(&MineParams::default()).unwrap();
        assert_eq!(top[0].label, "a ∈ {1} AND b ∈ {1}");
        assert_eq!(top[0].evaluation.rate, Some(1.0));
        let ex = ctx.extent_rows(&top[0].rule, Half::Evaluation).unwrap();
        assert_eq!(ex.len(), top[0].evaluation.extent);
    }

    #[test]
    fn no_expansion_gives_single_predicates() {
        let ctx = context();
        let top = ctx.mine(&MineParams { max_predicates: 1, ..Default::default() }).unwrap();
        assert!(!top.is_empty());
        assert!(top.iter().all(|r| r.rule.len() == 1));
    }

    #[test]
    fn evaluation_extents_are_unique() {
        let ctx = context();
        let top = ctx.mine(&MineParams::default()).unwrap();
        let mut extents: Vec<Vec<usize>> =
            top.iter().map(|r| ctx.extent_rows(&r.rule, Half::Evaluation).unwrap()).collect();
        let n = extents.len();
        extents.sort();
        extents.dedup();
        assert_eq!(extents.len(), n);
    }

    #[test]
    fn empty_rule_covers_everything() {
        let ctx = context();
        let r = ctx.evaluate_rule(&SubgroupRule::default()).unwrap();
        assert_eq!(r.evaluation.extent, r.evaluation.rows);
        assert_eq!(r.evaluation.rate, r.evaluation.overall_rate);
        assert_eq!(r.label, "all rows");
    }

    #[test]
    fn edits_widen_and_validate() {
        let ctx = context();
        let base = rule(&[("a", &["1"]), ("b", &["1"])]);
        let before = ctx.evaluate_rule(&base).unwrap();
        let dropped = ctx.edit_rule(&base, &RuleEdit::DropPredicate { index: 1 }).unwrap();
        assert!(dropped.evaluation.extent >= before.evaluation.extent);
        let widened =
            ctx.edit_rule(&base, &RuleEdit::SetValues { index: 0, values: vec!["0".into(), "1".into()] }).unwrap();
        assert!(widened.evaluation.extent >= before.evaluation.extent);
        assert_eq!(base, rule(&[("a", &["1"]), ("b", &["1"])]));
        assert!(matches!(
            ctx.edit_rule(&base, &RuleEdit::SetValues { index: 0, values: vec![] }),
            Err(SubgroupError::EmptyValues(_))
        ));
        assert!(matches!(ctx.edit_rule(&base, &RuleEdit::DropPredicate { index: 5 }), Err(SubgroupError::BadEdit(_))));
        assert!(matches!(
            ctx.edit_rule(&base, &RuleEdit::AddPredicate { feature: "a".into(), values: vec!["0".into()] }),
            Err(SubgroupError::DuplicateFeature(_))
        ));
        assert!(matches!(ctx.evaluate_rule(&rule(&[("zz", &["1"])])), Err(SubgroupError::UnknownFeature(_))));
    }

    #[test]
    fn empty_evaluation_extent_is_flagged() {
        let ctx = context();
        let mut features = ctx.features().to_vec();
        features.push(binary_feature("never", vec![0; 1200]));
        features.last_mut().unwrap().codes[0] = Some(1);
        let ctx = ctx.with_feature(features.pop().unwrap()).unwrap();
        let r = ctx.evaluate_rule(&rule(&[("never", &["1"]), ("a", &["1"])])).unwrap();
        assert_eq!(r.evaluation.extent, 0);
        assert!(r.insufficient_support);
        assert_eq!(r.evaluation.rate, None);
    }

    #[test]
    fn shadow_feature_distinguishes_at_offset_zero() {
        let ctx = context();
        let shadow: Vec<u8> = (0..1200).map(|r| ((r % 2 == 1) && (r / 2 % 2 == 1)) as u8).collect();
        let ctx = ctx.with_feature(binary_feature("shadow", shadow)).unwrap();
        let t = ctx.distinguishing_features(&rule(&[("a", &["1"]), ("b", &["1"])]), 0).unwrap();
        assert_eq!(t.features[0].feature, "shadow");
        let one = &t.features[0].values[1];
        assert_eq!(one.extent_prevalence, 1.0);
        assert!((one.difference - 0.75).abs() < 0.05, "{}", one.difference);
        assert!(t.notice.is_none());
    }

    #[test]
    fn offsets_past_the_trajectory_end_leave_a_notice() {
        let ctx = context();
        let t = ctx.distinguishing_features(&rule(&[("a", &["1"])]), 4).unwrap();
        assert_eq!(t.shifted_rows, 0);
        assert!(t.features.is_empty());
        assert!(t.notice.is_some());
        assert!(matches!(ctx.distinguishing_features(&SubgroupRule::default(), 6), Err(SubgroupError::Offset { .. })));
    }

    #[test]
    fn mismatched_model_rows_are_rejected() {
        use crate::engine::TimestepIndex;
        use crate::model::Task;
        use alloc::sync::Arc;
        let a = Arc::new(TimestepIndex::new(vec![0, 1], vec![0.0, 0.0], "every 1 hour".into()));
        let b = Arc::new(TimestepIndex::new(vec![0, 1], vec![0.0, 1.0], "every 2 hours".into()));
        let classes = vec!["false".to_string(), "true".to_string()];
        let outputs = vec![vec![0.2], vec![0.9]];
        let mk = |id, index| ModelRows {
            id,
            index,
            task: Task::Binary,
            classes: &classes,
            target: &[0.0, 1.0],
            outputs: &outputs,
            threshold: 0.5,
            splits: &[],
        };
        let err = metric_values(&Metric::Error { model: None }, &[mk("m1", &a), mk("m2", &b)]).unwrap_err();
        assert_eq!(err.code(), "index_mismatch");
        let ok = metric_values(
            &Metric::Disagreement { model: "m1".into(), other: "m2".into() },
            &[mk("m1", &a), mk("m2", &a)],
        )
        .unwrap();
        assert_eq!(ok, [0.0, 0.0]);
        let score = metric_values(&Metric::PredictedScore { model: None, class: Some("false".into()) }, &[mk("m1", &a)]);
        assert_eq!(score.unwrap(), [0.8, 0.09999999999999998]);
        assert!(format!("{}", err).contains("different timesteps"));
    }

    #[test]
    fn higher_rate_never_scores_lower() {
        let c = RankingCriteria::new(Metric::Error { model: None });
        for i in 0..100 {
            let lo = i as f64 / 100.0;
            assert!(c.score(Some(lo + 0.01), Some(0.3), 0.2, 2) >= c.score(Some(lo), Some(0.3), 0.2, 2));
        }
    }
}
