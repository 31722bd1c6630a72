//! Critique-and-revision: detect defects in a stage output, then revise it.
//!
//! Two payload scopes exist. The extract scope works on one entity's
//! extractions; the compare scope works on the value-merged rows. Both run
//! through [`refine_loop`], which alternates CRITIQUE and REVISE calls on
//! the gateway until nothing is left to fix, the critique set stops
//! changing, or the iteration cap is hit.

mod compare;
mod engine;
mod extract;

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::model::Side;

pub use compare::{CompareEntry, CompareState, Restage};
pub use engine::{refine_loop, CrLogRecord, CrState, RevisionResult};
pub use extract::ExtractState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scope {
    Extract,
    Compare,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Extract => "EXTRACT",
            Scope::Compare => "COMPARE",
        }
    }

    pub fn parse(s: &str) -> Option<Scope> {
        [Scope::Extract, Scope::Compare].into_iter().find(|x| x.as_str() == s)
    }
}

/// The eight defect kinds, in the order revisions are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CritiqueKind {
    InsufficientContext,
    WrongEntity,
    UnhelpfulAttributeExtract,
    OrthogonalValues,
    InconsistentValues,
    UnhelpfulAttributeOrValue,
    UnderOrOverMerged,
    LongComplexClaim,
}

impl CritiqueKind {
    pub const ALL: [CritiqueKind; 8] = [
        CritiqueKind::InsufficientContext,
        CritiqueKind::WrongEntity,
        CritiqueKind::UnhelpfulAttributeExtract,
        CritiqueKind::OrthogonalValues,
        CritiqueKind::InconsistentValues,
        CritiqueKind::UnhelpfulAttributeOrValue,
        CritiqueKind::UnderOrOverMerged,
        CritiqueKind::LongComplexClaim,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CritiqueKind::InsufficientContext => "INSUFFICIENT_CONTEXT",
            CritiqueKind::WrongEntity => "WRONG_ENTITY",
            CritiqueKind::UnhelpfulAttributeExtract => "UNHELPFUL_ATTRIBUTE_EXTRACT",
            CritiqueKind::OrthogonalValues => "ORTHOGONAL_VALUES",
            CritiqueKind::InconsistentValues => "INCONSISTENT_VALUES",
            CritiqueKind::UnhelpfulAttributeOrValue => "UNHELPFUL_ATTRIBUTE_OR_VALUE",
            CritiqueKind::UnderOrOverMerged => "UNDER_OR_OVER_MERGED",
            CritiqueKind::LongComplexClaim => "LONG_COMPLEX_CLAIM",
        }
    }

    pub fn parse(s: &str) -> Option<CritiqueKind> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn scope(self) -> Scope {
        match self {
            CritiqueKind::InsufficientContext
            | CritiqueKind::WrongEntity
            | CritiqueKind::UnhelpfulAttributeExtract => Scope::Extract,
            _ => Scope::Compare,
        }
    }
}

impl fmt::Display for CritiqueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a critique or edit points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    /// `E<i>`
    Extraction(usize),
    /// `R<i>`
    Row(usize),
    /// `R<i>.A`
    Side(usize, Side),
    /// `R<i>.A.<g>`
    Group(usize, Side, usize),
}

impl Target {
    pub fn row(self) -> Option<usize> {
        match self {
            Target::Extraction(_) => None,
            Target::Row(i) | Target::Side(i, _) | Target::Group(i, _, _) => Some(i),
        }
    }

    pub fn parse(s: &str) -> Option<Target> {
        if let Some(i) = s.strip_prefix('E') {
            return i.parse().ok().map(Target::Extraction);
        }
        let rest = s.strip_prefix('R')?;
        let mut parts = rest.split('.');
        let row: usize = parts.next()?.parse().ok()?;
        let t = match (parts.next(), parts.next()) {
            (None, _) => Target::Row(row),
            (Some(side), None) => Target::Side(row, Side::parse(side)?),
            (Some(side), Some(g)) => Target::Group(row, Side::parse(side)?, g.parse().ok()?),
        };
        parts.next().is_none().then_some(t)
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Extraction(i) => write!(f, "E{i}"),
            Target::Row(i) => write!(f, "R{i}"),
            Target::Side(i, s) => write!(f, "R{i}.{}", s.as_str()),
            Target::Group(i, s, g) => write!(f, "R{i}.{}.{g}", s.as_str()),
        }
    }
}

/// A detected defect bound to a target in the criticized payload.
pub type Critique = crate::gateway::grammar::CritiqueRecord;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scopes_split_three_and_five() {
        let extract = CritiqueKind::ALL.iter().filter(|k| k.scope() == Scope::Extract).count();
        assert_eq!(extract, 3);
        assert!(CritiqueKind::ALL[..3].iter().all(|k| k.scope() == Scope::Extract));
    }

    #[test]
    fn target_text_round_trip() {
        for t in [
            Target::Extraction(4),
            Target::Row(0),
            Target::Side(12, Side::B),
            Target::Group(3, Side::A, 7),
        ] {
            assert_eq!(Target::parse(&t.to_string()), Some(t));
        }
        for bad in ["", "E", "Rx", "R1.C", "R1.A.2.3", "X1"] {
            assert_eq!(Target::parse(bad), None, "{bad}");
        }
    }
}
