//! Automatic choice of the exemplar treatment/control pair the story follows.
//!
//! Hard constraints:
//! - H1: both interventions are matched, in the same stratum, at the reference window;
//! - H2: neither is truncated by the data extent at the widest half-width;
//! - H3: both have at least one event before and one after at the reference window.
//!
//! Among pairs passing all three, the highest weighted score wins; ties go to
//! the lexicographically smallest `(treatment_id, control_id)`.

use std::cmp::Ordering;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::{ActorWeights, Arm, Dataset};
use crate::matching::MatchResult;
use crate::wake::{Wake, WindowGrid, WindowSpec};

/// Event totals in this range read well on a small map.
const READABLE_MIN: u32 = 3;
const READABLE_MAX: u32 = 30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreTerms {
    pub treatment_readability: f64,
    pub control_readability: f64,
    pub trend_similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActorPair {
    pub treatment_id: String,
    pub control_id: String,
    pub reference_window: WindowSpec,
    pub score: f64,
    pub terms: ScoreTerms,
    pub report: Vec<ConstraintCheck>,
}

/// Why no pair qualified: counts of interventions/pairs surviving each stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NoActorsReport {
    pub matched_strata: usize,
    pub same_stratum_pairs: usize,
    pub treated_passing_h2_h3: usize,
    pub control_passing_h2_h3: usize,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ActorError {
    #[error("NoActors: no treatment/control pair satisfies the actor constraints ({0:?})")]
    NoActors(NoActorsReport),
}

/// Median radius and median half-width of the grid (lower median for even
/// lengths).
pub fn reference_window(grid: &WindowGrid) -> WindowSpec {
    let lower_median = |n: usize| (n - 1) / 2;
    WindowSpec {
        radius_km: grid.radii()[lower_median(grid.radii().len())],
        half_width_days: grid.half_widths()[lower_median(grid.half_widths().len())],
    }
}

pub fn readability(w: &Wake) -> f64 {
    let total = w.total();
    let gap = READABLE_MIN.saturating_sub(total) + total.saturating_sub(READABLE_MAX);
    (1.0 - f64::from(gap) / 30.0).max(0.0)
}

pub fn trend_similarity(t: &Wake, c: &Wake) -> f64 {
    let diff = (t.trend - c.trend).unsigned_abs() as f64;
    let scale = 1.0 + t.trend.unsigned_abs().max(c.trend.unsigned_abs()) as f64;
    (1.0 - diff / scale).max(0.0)
}

pub fn score_terms(t: &Wake, c: &Wake) -> ScoreTerms {
    ScoreTerms {
        treatment_readability: readability(t),
        control_readability: readability(c),
        trend_similarity: trend_similarity(t, c),
    }
}

pub fn weighted_score(terms: &ScoreTerms, weights: &ActorWeights) -> f64 {
    weights.treatment_readability * terms.treatment_readability
        + weights.control_readability * terms.control_readability
        + weights.trend_similarity * terms.trend_similarity
}

/// Score with the default weights {2, 2, 1}; at most 5.
pub fn score_pair(t: &Wake, c: &Wake) -> f64 {
    weighted_score(&score_terms(t, c), &ActorWeights::default())
}

fn passes_h2_h3(ds: &Dataset, i: usize, w: &Wake) -> bool {
    !ds.interventions[i].truncated && w.n_pre >= 1 && w.n_post >= 1
}

/// Picks the actor pair. `wakes_ref` and `match_ref` must both be at the
/// reference window.
pub fn select_actors(
    ds: &Dataset,
    wakes_ref: &[Wake],
    match_ref: &MatchResult,
    weights: &ActorWeights,
) -> Result<ActorPair, ActorError> {
    let n = ds.interventions.len();
    assert_eq!(wakes_ref.len(), n);
    assert_eq!(match_ref.ids.len(), n);

    let mut report = NoActorsReport {
        matched_strata: match_ref.strata.iter().filter(|s| s.is_matched()).count(),
        same_stratum_pairs: 0,
        treated_passing_h2_h3: 0,
        control_passing_h2_h3: 0,
    };

    // Members of each matched stratum that pass the per-unit constraints.
    let mut eligible: Vec<(Vec<usize>, Vec<usize>)> =
        vec![Default::default(); match_ref.strata.len()];
    for i in 0..n {
        if !match_ref.matched[i] || !passes_h2_h3(ds, i, &wakes_ref[i]) {
            continue;
        }
        let slot = &mut eligible[match_ref.stratum_of[i]];
        match ds.interventions[i].arm {
            Arm::Treatment => {
                report.treated_passing_h2_h3 += 1;
                slot.0.push(i);
            }
            Arm::Control => {
                report.control_passing_h2_h3 += 1;
                slot.1.push(i);
            }
        }
    }
    report.same_stratum_pairs = match_ref
        .strata
        .iter()
        .filter(|s| s.is_matched())
        .map(|s| s.treated.len() * s.control.len())
        .sum();

    let mut best: Option<(f64, usize, usize)> = None;
    for (treated, control) in &eligible {
        for &ti in treated {
            for &ci in control {
                let score = weighted_score(&score_terms(&wakes_ref[ti], &wakes_ref[ci]), weights);
                let better = match best {
                    None => true,
                    Some((bs, bt, bc)) => match score.total_cmp(&bs) {
                        Ordering::Greater => true,
                        Ordering::Less => false,
                        Ordering::Equal => {
                            (&ds.interventions[ti].id, &ds.interventions[ci].id)
                                < (&ds.interventions[bt].id, &ds.interventions[bc].id)
                        }
                    },
                };
                if better {
                    best = Some((score, ti, ci));
                }
            }
        }
    }

    let (score, ti, ci) = best.ok_or(ActorError::NoActors(report))?;
    let (tw, cw) = (&wakes_ref[ti], &wakes_ref[ci]);
    let (t_iv, c_iv) = (&ds.interventions[ti], &ds.interventions[ci]);
    let same = match_ref.stratum_of[ti] == match_ref.stratum_of[ci];
    let report = vec![
        ConstraintCheck {
            name: "H1_same_matched_stratum",
            passed: same && match_ref.matched[ti] && match_ref.matched[ci],
            detail: format!("signature {:?}", match_ref.signature(ti)),
        },
        ConstraintCheck {
            name: "H2_not_truncated",
            passed: !t_iv.truncated && !c_iv.truncated,
            detail: format!(
                "treatment truncated={}, control truncated={}",
                t_iv.truncated, c_iv.truncated
            ),
        },
        ConstraintCheck {
            name: "H3_events_before_and_after",
            passed: tw.n_pre >= 1 && tw.n_post >= 1 && cw.n_pre >= 1 && cw.n_post >= 1,
            detail: format!(
                "treatment n_pre={} n_post={}, control n_pre={} n_post={}",
                tw.n_pre, tw.n_post, cw.n_pre, cw.n_post
            ),
        },
    ];
    Ok(ActorPair {
        treatment_id: t_iv.id.clone(),
        control_id: c_iv.id.clone(),
        reference_window: match_ref.window,
        score,
        terms: score_terms(tw, cw),
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wake(n_pre: u32, n_post: u32, trend: i64) -> Wake {
        Wake {
            intervention_id: "x".into(),
            window: WindowSpec::new(5.0, 10).unwrap(),
            n_pre,
            n_post,
            trend,
            offsets: vec![],
        }
    }

    #[test]
    fn reference_window_medians() {
        let g = WindowGrid::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![10, 20, 30]).unwrap();
        assert_eq!(reference_window(&g), WindowSpec::new(3.0, 20).unwrap());
        let g = WindowGrid::new(vec![7.0], vec![14]).unwrap();
        assert_eq!(reference_window(&g), WindowSpec::new(7.0, 14).unwrap());
        let g = WindowGrid::new(vec![1.0, 2.0, 3.0, 4.0], vec![10, 20]).unwrap();
        assert_eq!(reference_window(&g), WindowSpec::new(2.0, 10).unwrap());
    }

    #[test]
    fn maximum_score() {
        assert_eq!(score_pair(&wake(5, 5, 2), &wake(4, 6, 2)), 5.0);
    }

    #[test]
    fn readability_gap() {
        assert!((readability(&wake(0, 0, 0)) - 0.9).abs() < 1e-12);
        assert!((readability(&wake(20, 20, 0)) - (1.0 - 10.0 / 30.0)).abs() < 1e-12);
        assert_eq!(readability(&wake(100, 100, 0)), 0.0);
        assert_eq!(readability(&wake(1, 2, 0)), 1.0);
        assert_eq!(readability(&wake(15, 15, 0)), 1.0);
    }

    #[test]
    fn opposite_trends_clamp_to_zero() {
        assert_eq!(trend_similarity(&wake(4, 1, 4), &wake(4, 1, -4)), 0.0);
        assert!(
            (trend_similarity(&wake(4, 1, 2), &wake(4, 1, 1)) - (1.0 - 1.0 / 3.0)).abs() < 1e-12
        );
    }
}
