//! Entropy-normalized collaboration balance.
//!
//! For per-author contribution shares `s_1..s_u` the balance score is
//!
//! ```text
//! score = (1 / ln u) * Σ_j s_j ln(1 / s_j)
//! ```
//!
//! with `0 ln(1/0) = 0`. It is 1 for perfectly even shares and 0 when a
//! single author did everything. Counting every content-contributing event
//! gives the contribution balance score (CBS); counting only one activity
//! dimension gives the role balance score (RBS) for that dimension.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::taxonomy::{CommandTaxonomy, HighLevel};
use crate::telemetry::TelemetryEvent;

const SHARE_TOLERANCE: f64 = 1e-9;

/// One of the four content-contribution dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dimension {
    Adding,
    Editing,
    Communicating,
    Finalizing,
}

impl Dimension {
    pub const ALL: [Dimension; 4] =
        [Dimension::Adding, Dimension::Editing, Dimension::Communicating, Dimension::Finalizing];

    pub fn high_level(self) -> HighLevel {
        match self {
            Dimension::Adding => HighLevel::AddingContent,
            Dimension::Editing => HighLevel::Editing,
            Dimension::Communicating => HighLevel::Communicating,
            Dimension::Finalizing => HighLevel::Finalizing,
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Dimension::Adding => "adding",
            Dimension::Editing => "editing",
            Dimension::Communicating => "communicating",
            Dimension::Finalizing => "finalizing",
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("contribution vector is empty")]
    Empty,
    #[error("share {0} is negative or not finite")]
    BadShare(f64),
    #[error("shares sum to {0}, expected 1")]
    NotNormalized(f64),
}

/// Which authors count toward `u`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthorMembership {
    /// Only authors with at least one counted event.
    #[default]
    Contributors,
    /// Every author seen in the events, zero shares included.
    AllObserved,
}

/// Per-author shares, ordered by author id.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionVector {
    shares: Vec<f64>,
    dimension: Option<Dimension>,
}

impl ContributionVector {
    pub fn from_shares(shares: Vec<f64>, dimension: Option<Dimension>) -> Result<Self, MetricError> {
        if shares.is_empty() {
            return Err(MetricError::Empty);
        }
        if let Some(&bad) = shares.iter().find(|s| !s.is_finite() || **s < 0.0) {
            return Err(MetricError::BadShare(bad));
        }
        let total: f64 = shares.iter().sum();
        if (total - 1.0).abs() > SHARE_TOLERANCE {
            return Err(MetricError::NotNormalized(total));
        }
        Ok(Self { shares, dimension })
    }

    pub fn shares(&self) -> &[f64] {
        &self.shares
    }

    pub fn authors(&self) -> usize {
        self.shares.len()
    }

    pub fn dimension(&self) -> Option<Dimension> {
        self.dimension
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BalanceScore {
    pub value: f64,
    /// True when only one author is present, so the score is pinned to 0.
    pub single_author: bool,
}

pub fn balance_score(v: &ContributionVector) -> BalanceScore {
    let u = v.authors();
    if u == 1 {
        return BalanceScore { value: 0.0, single_author: true };
    }
    // Equal shares have entropy exactly ln u; skip the rounding.
    if v.shares.iter().all(|s| *s == v.shares[0]) {
        return BalanceScore { value: 1.0, single_author: false };
    }
    let entropy: f64 = v.shares.iter().filter(|s| **s > 0.0).map(|s| s * (1.0 / s).ln()).sum();
    BalanceScore { value: (entropy / (u as f64).ln()).clamp(0.0, 1.0), single_author: false }
}

/// Validate raw shares and score them in one step.
pub fn balance_score_of(shares: &[f64]) -> Result<BalanceScore, MetricError> {
    ContributionVector::from_shares(shares.to_vec(), None).map(|v| balance_score(&v))
}

/// Count contributions per author. With no dimension every content
/// contribution counts (CBS); otherwise only that dimension (RBS).
/// Returns `None` when nothing was counted.
pub fn contribution_vector(
    events: &[TelemetryEvent],
    taxonomy: &CommandTaxonomy,
    dimension: Option<Dimension>,
    membership: AuthorMembership,
) -> Option<ContributionVector> {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for e in events {
        let counted = match (taxonomy.classify(&e.command).high_level(), dimension) {
            (Some(h), None) => h.is_contribution(),
            (Some(h), Some(d)) => h == d.high_level(),
            (None, _) => false,
        };
        if counted {
            *counts.entry(e.author_id.as_str()).or_default() += 1;
        } else if membership == AuthorMembership::AllObserved {
            counts.entry(e.author_id.as_str()).or_default();
        }
    }
    let total: u64 = counts.values().sum();
    if total == 0 {
        return None;
    }
    let shares = counts.values().map(|c| *c as f64 / total as f64).collect();
    Some(ContributionVector { shares, dimension })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent reference: base-2 Shannon entropy over the base-2 maximum.
    fn entropy_ratio_base2(shares: &[f64]) -> f64 {
        let h: f64 = shares.iter().filter(|p| **p > 0.0).map(|p| -p * p.log2()).sum();
        h / (shares.len() as f64).log2()
    }

    #[test]
    fn equal_shares_are_exactly_one() {
        for u in 2..=50 {
            assert_eq!(balance_score_of(&vec![1.0 / u as f64; u]).unwrap().value, 1.0, "u={u}");
        }
    }

    #[test]
    fn reference_cases() {
        assert_eq!(balance_score_of(&[0.5, 0.5]).unwrap().value, 1.0);
        assert_eq!(balance_score_of(&[1.0, 0.0]).unwrap().value, 0.0);
        let s = balance_score_of(&[0.5, 0.25, 0.25]).unwrap().value;
        // 1.5 bits / log2(3) bits
        assert!((s - 1.5 / 3f64.log2()).abs() < 1e-12);
        assert!((s - 0.9464).abs() < 1e-4);
    }

    #[test]
    fn single_author_is_flagged() {
        let b = balance_score_of(&[1.0]).unwrap();
        assert_eq!(b, BalanceScore { value: 0.0, single_author: true });
    }

    #[test]
    fn invalid_shares_are_rejected() {
        assert_eq!(balance_score_of(&[]), Err(MetricError::Empty));
        assert_eq!(balance_score_of(&[1.2, -0.2]), Err(MetricError::BadShare(-0.2)));
        assert!(matches!(balance_score_of(&[0.5, 0.4]), Err(MetricError::NotNormalized(_))));
        assert!(matches!(balance_score_of(&[f64::NAN, 1.0]), Err(MetricError::BadShare(_))));
    }

    fn ev(author: &str, cmd: &str) -> TelemetryEvent {
        TelemetryEvent::new("d", author, 0, cmd)
    }

    #[test]
    fn cbs_counts_all_contribution_dimensions() {
        let tax = CommandTaxonomy::builtin();
        let events = [ev("A", "Typing"), ev("A", "Paste"), ev("A", "InsertFile"), ev("B", "Bold"), ev("B", "Find")];
        let v = contribution_vector(&events, &tax, None, AuthorMembership::Contributors).unwrap();
        assert_eq!(v.shares(), &[0.75, 0.25]);
    }

    #[test]
    fn rbs_restricts_to_one_dimension() {
        let tax = CommandTaxonomy::builtin();
        let events = [ev("A", "Typing"), ev("A", "Paste"), ev("A", "InsertFile"), ev("B", "Bold")];
        let v = contribution_vector(&events, &tax, Some(Dimension::Adding), AuthorMembership::Contributors).unwrap();
        assert_eq!(v.shares(), &[1.0]);
        assert_eq!(balance_score(&v), BalanceScore { value: 0.0, single_author: true });

        let all = contribution_vector(&events, &tax, Some(Dimension::Adding), AuthorMembership::AllObserved).unwrap();
        assert_eq!(all.shares(), &[1.0, 0.0]);
        assert_eq!(balance_score(&all), BalanceScore { value: 0.0, single_author: false });
    }

    #[test]
    fn viewing_only_history_is_empty() {
        let tax = CommandTaxonomy::builtin();
        let events = [ev("A", "Find"), ev("B", "NextField"), ev("B", "Unlisted")];
        assert!(contribution_vector(&events, &tax, None, AuthorMembership::Contributors).is_none());
        assert!(contribution_vector(&events, &tax, None, AuthorMembership::AllObserved).is_none());
    }

    fn arb_shares() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, 2..8).prop_filter_map("nonzero", |raw| {
            let total: f64 = raw.iter().sum();
            (total > 1e-6).then(|| raw.iter().map(|x| x / total).collect())
        })
    }

    proptest! {
        #[test]
        fn base_invariant(shares in arb_shares()) {
            let ln = balance_score_of(&shares).unwrap().value;
            prop_assert!((ln - entropy_ratio_base2(&shares).clamp(0.0, 1.0)).abs() < 1e-12);
        }

        #[test]
        fn permutation_invariant(shares in arb_shares(), rot in 0usize..8) {
            let mut rotated = shares.clone();
            let k = rot % rotated.len();
            rotated.rotate_left(k);
            rotated.reverse();
            let a = balance_score_of(&shares).unwrap().value;
            let b = balance_score_of(&rotated).unwrap().value;
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn bounded_and_extremal(u in 2usize..10, hot in 0usize..10) {
            let uniform = vec![1.0 / u as f64; u];
            prop_assert!((balance_score_of(&uniform).unwrap().value - 1.0).abs() < 1e-9);
            let mut one_hot = vec![0.0; u];
            one_hot[hot % u] = 1.0;
            prop_assert_eq!(balance_score_of(&one_hot).unwrap().value, 0.0);
        }
    }
}
