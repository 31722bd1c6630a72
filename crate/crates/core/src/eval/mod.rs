//! Row ratings, summary metrics and rater agreement.

mod bench;
mod ratings;

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

use crate::gateway::grammar::StageOutput;
use crate::gateway::payload::{RowInput, ValueEntry};
use crate::gateway::{Gateway, GatewayError, StageTag};
use crate::model::{ComparisonRow, ComparisonSummary, Side};
use crate::rules;
use crate::scalar::Scalar;

pub use bench::{throughput_bench, BenchConfig, BenchReport, LatencyStats, StageLatency};
pub use ratings::{read_ratings, write_ratings, RatingRecord, RatingsTable};

/// Above this many values the consistency search is greedy.
pub const EXACT_SUBSET_LIMIT: usize = 20;

/// The closed row-rating taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RowLabel {
    Yes,
    NoBadExtraction,
    NoInconsistentValues,
    NoUndermergedValues,
    NoOrthogonalValues,
    Ok,
}

impl RowLabel {
    pub const ALL: [RowLabel; 6] = [
        RowLabel::Yes,
        RowLabel::NoBadExtraction,
        RowLabel::NoInconsistentValues,
        RowLabel::NoUndermergedValues,
        RowLabel::NoOrthogonalValues,
        RowLabel::Ok,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RowLabel::Yes => "YES",
            RowLabel::NoBadExtraction => "NO_BAD_EXTRACTION",
            RowLabel::NoInconsistentValues => "NO_INCONSISTENT_VALUES",
            RowLabel::NoUndermergedValues => "NO_UNDERMERGED_VALUES",
            RowLabel::NoOrthogonalValues => "NO_ORTHOGONAL_VALUES",
            RowLabel::Ok => "OK",
        }
    }

    pub fn parse(s: &str) -> Option<RowLabel> {
        Self::ALL.into_iter().find(|l| l.as_str() == s)
    }

    pub fn is_no(self) -> bool {
        self.as_str().starts_with("NO_")
    }
}

impl fmt::Display for RowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which labels count as useful. By default only YES does; OK rows are
/// correct but unhelpful.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UsefulnessPolicy {
    pub ok_is_useful: bool,
}

impl UsefulnessPolicy {
    pub fn is_useful(self, label: RowLabel) -> bool {
        label == RowLabel::Yes || (self.ok_is_useful && label == RowLabel::Ok)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowRating {
    pub label: RowLabel,
    pub rater_id: String,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no ratings to take a majority of")]
    NoRatings,
    #[error("rated row sets differ: {0}")]
    IndexMismatch(String),
    #[error("agreement needs at least {needed} raters, found {found}")]
    TooFewRaters { needed: usize, found: usize },
    #[error("malformed ratings file: {0}")]
    MalformedRatings(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("benchmark measured no successful queries")]
    NothingMeasured,
}

/// Groups the attributes of a summary into clusters of equivalent names.
pub trait ClusterOracle {
    /// A cluster index for each attribute.
    fn assign(&self, attributes: &[String]) -> Result<Vec<usize>, GatewayError>;
}

/// Normalization plus the bundled synonym table.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleClusterOracle;

impl ClusterOracle for RuleClusterOracle {
    fn assign(&self, attributes: &[String]) -> Result<Vec<usize>, GatewayError> {
        let mut keys: Vec<String> = Vec::new();
        Ok(attributes
            .iter()
            .map(|a| {
                let k = rules::attribute_key(a);
                match keys.iter().position(|x| *x == k) {
                    Some(i) => i,
                    None => {
                        keys.push(k);
                        keys.len() - 1
                    }
                }
            })
            .collect())
    }
}

/// Clusters via an ATTRIBUTE_MERGE call. Attributes the answer leaves out
/// count as their own cluster.
pub struct GatewayClusterOracle<'a>(pub &'a Gateway);

impl ClusterOracle for GatewayClusterOracle<'_> {
    fn assign(&self, attributes: &[String]) -> Result<Vec<usize>, GatewayError> {
        let payload = crate::gateway::payload::AttributeMergeInput {
            attributes: attributes.to_vec(),
        }
        .render();
        let call = self.0.run_stage(StageTag::AttributeMerge, &payload)?;
        let StageOutput::AttributeMerge(groups) = call.output else {
            unreachable!("stage output matches its tag")
        };
        let mut next = groups.len();
        Ok(attributes
            .iter()
            .map(|a| {
                groups.iter().position(|g| g.members.contains(a)).unwrap_or_else(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect())
    }
}

/// `1 - clusters / attributes`; zero attributes give zero.
pub fn redundancy_from_counts<S: Scalar>(clusters: usize, attributes: usize) -> S {
    if attributes == 0 {
        S::zero()
    } else {
        S::one() - S::ratio(clusters, attributes)
    }
}

pub fn redundancy<S: Scalar>(attributes: &[String], oracle: &dyn ClusterOracle) -> Result<S, GatewayError> {
    let assignment = oracle.assign(attributes)?;
    let clusters: BTreeSet<usize> = assignment.into_iter().collect();
    Ok(redundancy_from_counts(clusters.len(), attributes.len()))
}

pub fn summary_redundancy<S: Scalar>(
    summary: &ComparisonSummary,
    oracle: &dyn ClusterOracle,
) -> Result<S, GatewayError> {
    let attributes: Vec<String> = summary.rows.iter().map(|r| r.attribute.clone()).collect();
    redundancy(&attributes, oracle)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inconsistency {
    pub count: usize,
    /// False when the list was too long for the exhaustive search.
    pub exact: bool,
}

/// Values outside the largest pairwise-compatible subset.
pub fn inconsistency_count(values: &[String], compatible: impl Fn(&str, &str) -> bool) -> Inconsistency {
    let weights = vec![1u64; values.len()];
    let (best, exact) =
        rules::max_compatible_subset(&weights, |i, j| compatible(&values[i], &values[j]), EXACT_SUBSET_LIMIT);
    if !exact {
        tracing::warn!(n = values.len(), "value list too long for exhaustive search, using greedy");
    }
    Inconsistency {
        count: values.len() - best.len(),
        exact,
    }
}

/// The default compatibility relation: no conflict under the rule book.
pub fn rule_compatible(a: &str, b: &str) -> bool {
    !rules::conflicts(a, b)
}

/// Sum of per-cell inconsistency over a summary.
pub fn summary_inconsistency(summary: &ComparisonSummary) -> usize {
    summary
        .rows
        .iter()
        .flat_map(|r| [Side::A, Side::B].map(|s| r.cell(s)))
        .map(|cell| {
            let values: Vec<String> = cell.iter().map(|c| c.value.clone()).collect();
            inconsistency_count(&values, rule_compatible).count
        })
        .sum()
}

/// Useful rows among the first `min(k, n)`, divided by `min(k, n)`.
pub fn precision_at_k<S: Scalar>(useful: &[bool], k: usize) -> S {
    let n = k.min(useful.len());
    S::ratio(useful[..n].iter().filter(|u| **u).count(), n)
}

/// Most frequent label; ties prefer a NO label, then the alphabetically
/// first name.
pub fn majority_opinion(labels: &[RowLabel]) -> Result<RowLabel, EvalError> {
    let mut counts: BTreeMap<RowLabel, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(*l).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|(la, ca), (lb, cb)| {
            ca.cmp(cb)
                .then(la.is_no().cmp(&lb.is_no()))
                .then_with(|| lb.as_str().cmp(la.as_str()))
        })
        .map(|(l, _)| l)
        .ok_or(EvalError::NoRatings)
}

fn check_same_rows<K: Ord + fmt::Debug, V>(x: &BTreeMap<K, V>, y: &BTreeMap<K, V>) -> Result<(), EvalError> {
    if x.len() != y.len() || x.keys().zip(y.keys()).any(|(a, b)| a != b) {
        let only_x: Vec<_> = x.keys().filter(|k| !y.contains_key(k)).collect();
        let only_y: Vec<_> = y.keys().filter(|k| !x.contains_key(k)).collect();
        return Err(EvalError::IndexMismatch(format!("only left {only_x:?}, only right {only_y:?}")));
    }
    Ok(())
}

/// Fraction of rows whose labels agree on useful vs not useful.
pub fn agreement<S: Scalar, K: Ord + fmt::Debug>(
    x: &BTreeMap<K, RowLabel>,
    y: &BTreeMap<K, RowLabel>,
    policy: UsefulnessPolicy,
) -> Result<S, EvalError> {
    check_same_rows(x, y)?;
    let same = x
        .iter()
        .filter(|(k, l)| policy.is_useful(**l) == policy.is_useful(y[*k]))
        .count();
    Ok(S::ratio(same, x.len()))
}

/// Fraction of rows with identical labels.
pub fn exact_agreement<S: Scalar, K: Ord + fmt::Debug>(
    x: &BTreeMap<K, RowLabel>,
    y: &BTreeMap<K, RowLabel>,
) -> Result<S, EvalError> {
    check_same_rows(x, y)?;
    let same = x.iter().filter(|(k, l)| **l == y[*k]).count();
    Ok(S::ratio(same, x.len()))
}

/// Mean agreement over every pair of raters.
pub fn mean_pairwise_agreement<S: Scalar, K: Ord + fmt::Debug>(
    raters: &[BTreeMap<K, RowLabel>],
    policy: UsefulnessPolicy,
    exact: bool,
) -> Result<S, EvalError> {
    if raters.len() < 2 {
        return Err(EvalError::TooFewRaters {
            needed: 2,
            found: raters.len(),
        });
    }
    let mut sum = S::zero();
    let mut pairs = 0;
    for i in 0..raters.len() {
        for j in (i + 1)..raters.len() {
            sum = sum
                + if exact {
                    exact_agreement(&raters[i], &raters[j])?
                } else {
                    agreement(&raters[i], &raters[j], policy)?
                };
            pairs += 1;
        }
    }
    Ok(sum / S::from_count(pairs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    /// Binary useful/not-useful agreement, the headline figure.
    pub human_human: Option<f64>,
    pub human_autorater: Option<f64>,
    pub human_human_exact: Option<f64>,
    pub human_autorater_exact: Option<f64>,
    pub n_rows: usize,
    pub n_raters: usize,
}

/// Agreement among human raters, and between their per-row majority and
/// the autorater where autorater labels are given.
pub fn agreement_stats(
    humans: &BTreeMap<String, BTreeMap<usize, RowLabel>>,
    autorater: Option<&BTreeMap<usize, RowLabel>>,
    policy: UsefulnessPolicy,
) -> Result<AgreementStats, EvalError> {
    let raters: Vec<BTreeMap<usize, RowLabel>> = humans.values().cloned().collect();
    let n_rows = raters.first().map_or(0, BTreeMap::len);
    let (human_human, human_human_exact) = if raters.len() >= 2 {
        (
            Some(mean_pairwise_agreement::<f64, _>(&raters, policy, false)?),
            Some(mean_pairwise_agreement::<f64, _>(&raters, policy, true)?),
        )
    } else {
        (None, None)
    };
    let (mut human_autorater, mut human_autorater_exact) = (None, None);
    if let (Some(auto), false) = (autorater, raters.is_empty()) {
        let majority = majority_by_row(&raters)?;
        human_autorater = Some(agreement::<f64, _>(&majority, auto, policy)?);
        human_autorater_exact = Some(exact_agreement::<f64, _>(&majority, auto)?);
    }
    Ok(AgreementStats {
        human_human,
        human_autorater,
        human_human_exact,
        human_autorater_exact,
        n_rows,
        n_raters: raters.len(),
    })
}

/// Per-row majority over raters that all rated the same rows.
pub fn majority_by_row<K: Ord + Clone + fmt::Debug>(
    raters: &[BTreeMap<K, RowLabel>],
) -> Result<BTreeMap<K, RowLabel>, EvalError> {
    let first = raters.first().ok_or(EvalError::NoRatings)?;
    for r in &raters[1..] {
        check_same_rows(first, r)?;
    }
    first
        .keys()
        .map(|k| {
            let labels: Vec<RowLabel> = raters.iter().map(|r| r[k]).collect();
            Ok((k.clone(), majority_opinion(&labels)?))
        })
        .collect()
}

/// The autorater's view of one summary row.
pub fn row_input(summary: &ComparisonSummary, row: &ComparisonRow, aliases: [&[String]; 2]) -> RowInput {
    let names = |side: Side, extra: &[String]| {
        let mut v = vec![summary.entity(side).display_name.clone()];
        v.extend(extra.iter().filter(|a| !v.contains(a)).cloned().collect::<Vec<_>>());
        v
    };
    let mut values = Vec::new();
    let mut evidence = Vec::new();
    for side in [Side::A, Side::B] {
        for c in row.cell(side) {
            values.push(ValueEntry {
                side,
                value: c.value.clone(),
                support: c.support_count,
            });
            for e in &c.evidence {
                evidence.push((side, e.text.clone()));
            }
        }
    }
    RowInput {
        names_a: names(Side::A, aliases[0]),
        names_b: names(Side::B, aliases[1]),
        attribute: row.attribute.clone(),
        contrast: row.contrast_level,
        importance: row.importance,
        values,
        evidence,
    }
}

/// Rate one row with the AUTORATE stage (always at temperature 0).
pub fn chs_rate_row(gateway: &Gateway, input: &RowInput) -> Result<RowLabel, GatewayError> {
    let call = gateway.run_stage(StageTag::Autorate, &input.render())?;
    match call.output {
        StageOutput::Rating(label) => Ok(label),
        _ => unreachable!("stage output matches its tag"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatedRow {
    pub row_index: usize,
    pub attribute: String,
    pub rating: RowRating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub summary_id: String,
    pub n_rows: usize,
    pub pct_rows_useful: f64,
    pub redundancy: f64,
    pub inconsistency_count: usize,
    pub precision_at_k: f64,
    pub k: usize,
    pub ratings: Vec<RatedRow>,
    pub agreement: Option<AgreementStats>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k: usize,
    pub policy: UsefulnessPolicy,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 5,
            policy: UsefulnessPolicy::default(),
        }
    }
}

/// Rate every row, then compute the summary metrics. Precision uses the
/// human majority when human ratings cover the rows, the autorater
/// otherwise.
pub fn evaluate(
    summary_id: &str,
    summary: &ComparisonSummary,
    aliases: [&[String]; 2],
    gateway: &Gateway,
    human: Option<&RatingsTable>,
    config: EvalConfig,
) -> Result<EvalReport, EvalError> {
    let mut warnings = Vec::new();
    let mut ratings = Vec::with_capacity(summary.rows.len());
    for (i, row) in summary.rows.iter().enumerate() {
        let label = chs_rate_row(gateway, &row_input(summary, row, aliases))?;
        ratings.push(RatedRow {
            row_index: i,
            attribute: row.attribute.clone(),
            rating: RowRating {
                label,
                rater_id: format!("chs:{}", gateway.backend_id()),
            },
        });
    }
    let auto: BTreeMap<usize, RowLabel> = ratings.iter().map(|r| (r.row_index, r.rating.label)).collect();
    let useful_count = ratings.iter().filter(|r| config.policy.is_useful(r.rating.label)).count();

    let mut agreement = None;
    let mut useful_for_precision: Vec<bool> = ratings.iter().map(|r| config.policy.is_useful(r.rating.label)).collect();
    if let Some(table) = human {
        let humans = table.by_rater(summary_id);
        let skipped = table.records.iter().filter(|r| r.summary_id != summary_id).count();
        if skipped > 0 {
            warnings.push(format!("{skipped} rating(s) for other summaries ignored"));
        }
        if !humans.is_empty() {
            let stats = agreement_stats(&humans, Some(&auto), config.policy)?;
            let raters: Vec<_> = humans.values().cloned().collect();
            let majority = majority_by_row(&raters)?;
            if majority.len() == summary.rows.len() {
                useful_for_precision = majority.values().map(|l| config.policy.is_useful(*l)).collect();
            } else {
                warnings.push("human ratings do not cover every row; precision uses the autorater".into());
            }
            agreement = Some(stats);
        }
    }

    Ok(EvalReport {
        summary_id: summary_id.to_string(),
        n_rows: summary.rows.len(),
        pct_rows_useful: f64::ratio(useful_count, summary.rows.len()),
        redundancy: summary_redundancy::<f64>(summary, &RuleClusterOracle)?,
        inconsistency_count: summary_inconsistency(summary),
        precision_at_k: precision_at_k::<f64>(&useful_for_precision, config.k),
        k: config.k,
        ratings,
        agreement,
        warnings,
    })
}

/// Table-level figures over several summaries. Inconsistency is summed per
/// summary and averaged over summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub n_summaries: usize,
    pub pct_rows_useful: f64,
    pub redundancy: f64,
    pub avg_inconsistent_values: f64,
    pub precision_at_k: f64,
}

pub fn aggregate(reports: &[EvalReport]) -> AggregateReport {
    let n = reports.len();
    let mean = |f: &dyn Fn(&EvalReport) -> f64| {
        if n == 0 {
            0.0
        } else {
            reports.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let rows: usize = reports.iter().map(|r| r.n_rows).sum();
    let useful: f64 = reports.iter().map(|r| r.pct_rows_useful * r.n_rows as f64).sum();
    AggregateReport {
        n_summaries: n,
        pct_rows_useful: if rows == 0 { 0.0 } else { useful / rows as f64 },
        redundancy: mean(&|r| r.redundancy),
        avg_inconsistent_values: mean(&|r| r.inconsistency_count as f64),
        precision_at_k: mean(&|r| r.precision_at_k),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn strings(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn redundancy_of_the_room_example() {
        let r: Ratio<u64> =
            redundancy(&strings(&["room", "rooms", "amenities", "facilities"]), &RuleClusterOracle).unwrap();
        assert_eq!(r, Ratio::new(1, 2));
        let zero: f64 = redundancy(&strings(&["price", "range"]), &RuleClusterOracle).unwrap();
        assert_eq!(zero, 0.0);
        let empty: f64 = redundancy(&[], &RuleClusterOracle).unwrap();
        assert_eq!(empty, 0.0);
    }

    #[test]
    fn inconsistency_examples() {
        let liters = strings(&["45 liters", "46 liters", "46 liters in volume", "46 liters of space"]);
        assert_eq!(inconsistency_count(&liters, rule_compatible).count, 1);
        assert_eq!(inconsistency_count(&[], rule_compatible).count, 0);
        assert_eq!(inconsistency_count(&strings(&["good", "great", "bad"]), rule_compatible).count, 1);
    }

    #[test]
    fn precision_examples() {
        let p: Ratio<u64> = precision_at_k(&[true, true, false, true, false], 5);
        assert_eq!(p, Ratio::new(3, 5));
        let p: Ratio<u64> = precision_at_k(&[true, false, true], 5);
        assert_eq!(p, Ratio::new(2, 3));
        assert_eq!(precision_at_k::<f64>(&[], 5), 0.0);
    }

    #[test]
    fn majority_ties_lean_to_no() {
        use RowLabel::*;
        assert_eq!(majority_opinion(&[Yes, Yes, NoBadExtraction]).unwrap(), Yes);
        assert_eq!(majority_opinion(&[Yes]).unwrap(), Yes);
        assert_eq!(majority_opinion(&[Yes, NoBadExtraction]).unwrap(), NoBadExtraction);
        assert_eq!(
            majority_opinion(&[NoOrthogonalValues, NoBadExtraction]).unwrap(),
            NoBadExtraction
        );
        assert!(majority_opinion(&[]).is_err());
    }

    #[test]
    fn agreement_requires_matching_rows() {
        let x: BTreeMap<usize, RowLabel> = [(0, RowLabel::Yes), (1, RowLabel::Ok)].into();
        let y: BTreeMap<usize, RowLabel> = [(0, RowLabel::Yes), (2, RowLabel::Ok)].into();
        assert!(agreement::<f64, _>(&x, &y, UsefulnessPolicy::default()).is_err());
        let z: BTreeMap<usize, RowLabel> = [(0, RowLabel::Yes), (1, RowLabel::NoBadExtraction)].into();
        assert_eq!(agreement::<f64, _>(&x, &z, UsefulnessPolicy::default()).unwrap(), 1.0);
        assert_eq!(exact_agreement::<f64, _>(&x, &z).unwrap(), 0.5);
    }
}
