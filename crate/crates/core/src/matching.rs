//! Coarsened exact matching of treatment to control interventions.
//!
//! Every matching variable is coarsened into bins; interventions sharing the
//! full tuple of bin indices form a stratum, and a stratum is matched when it
//! holds at least one intervention of each arm. Besides the user covariates,
//! the pre-window level `n_pre` (optional) and the `trend` are always-derived
//! matching variables computed from the wakes of the window being analysed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Arm, CovariateKind, CovariateSchema, InterventionEvent, ScenarioConfig};
use crate::wake::{Wake, WindowSpec};

pub const PRE_LEVEL_VAR: &str = "n_pre";
pub const TREND_VAR: &str = "trend";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableSource {
    Covariate,
    PreLevel,
    Trend,
}

/// Bins of one matching variable and the bin of every intervention.
///
/// Continuous bins are half-open `[e_i, e_{i+1})` with the last bin closed,
/// so the maximum lands in the last bin. Binary variables use the two
/// categories 0 and 1 directly, with `edges = [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinAssignment {
    pub variable: String,
    pub source: VariableSource,
    pub kind: CovariateKind,
    pub edges: Vec<f64>,
    pub indices: Vec<u32>,
}

impl BinAssignment {
    pub fn n_bins(&self) -> usize {
        match self.kind {
            CovariateKind::Binary => 2,
            CovariateKind::Continuous => (self.edges.len() - 1).max(1),
        }
    }

    /// Bin of an arbitrary value under these edges.
    pub fn bin_of(&self, v: f64) -> u32 {
        match self.kind {
            CovariateKind::Binary => u32::from(v != 0.0),
            CovariateKind::Continuous => assign_bin(&self.edges, v),
        }
    }
}

/// Bin index of `v` for ascending `edges`: the last `i < edges.len() - 1`
/// with `v >= edges[i]`. Values below the first edge fall in bin 0, values
/// above the last edge in the last bin.
pub fn assign_bin(edges: &[f64], v: f64) -> u32 {
    let n_bins = edges.len().saturating_sub(1).max(1);
    let above = edges[..n_bins].iter().filter(|&&e| v >= e).count();
    above.saturating_sub(1) as u32
}

/// Number of equal-width bins for `n` observations (Sturges).
pub fn sturges_bins(n: usize) -> usize {
    if n <= 1 {
        return 1;
    }
    ((n as f64).log2() + 1.0).ceil() as usize
}

/// Coarsens one column. `n_total` is the number of interventions, which sets
/// the bin count for continuous columns.
pub fn coarsen(values: &[f64], kind: CovariateKind, n_total: usize) -> BinAssignment {
    let (edges, indices) = match kind {
        CovariateKind::Binary => (
            vec![0.0, 1.0],
            values.iter().map(|&v| u32::from(v != 0.0)).collect(),
        ),
        CovariateKind::Continuous => {
            let edges = equal_width_edges(values, sturges_bins(n_total));
            let indices = values.iter().map(|&v| assign_bin(&edges, v)).collect();
            (edges, indices)
        }
    };
    BinAssignment {
        variable: String::new(),
        source: VariableSource::Covariate,
        kind,
        edges,
        indices,
    }
}

/// Coarsens against explicit cutpoints.
pub fn coarsen_with_edges(values: &[f64], edges: Vec<f64>) -> BinAssignment {
    let indices = values.iter().map(|&v| assign_bin(&edges, v)).collect();
    BinAssignment {
        variable: String::new(),
        source: VariableSource::Covariate,
        kind: CovariateKind::Continuous,
        edges,
        indices,
    }
}

fn equal_width_edges(values: &[f64], k: usize) -> Vec<f64> {
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if values.is_empty() {
        return vec![0.0, 0.0];
    }
    if min == max {
        return vec![min, max];
    }
    let mut edges: Vec<f64> = (0..k)
        .map(|i| min + (max - min) * i as f64 / k as f64)
        .collect();
    edges.push(max);
    edges
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchOptions {
    pub match_on_pre_level: bool,
    /// Explicit edges per variable name, replacing the automatic bins.
    pub cutpoints: BTreeMap<String, Vec<f64>>,
}

impl MatchOptions {
    pub fn standard() -> Self {
        Self {
            match_on_pre_level: true,
            cutpoints: BTreeMap::new(),
        }
    }
}

impl From<&ScenarioConfig> for MatchOptions {
    fn from(cfg: &ScenarioConfig) -> Self {
        Self {
            match_on_pre_level: cfg.match_on_pre_level,
            cutpoints: cfg.cutpoints.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub signature: Vec<u32>,
    pub treated: Vec<String>,
    pub control: Vec<String>,
}

impl Stratum {
    pub fn is_matched(&self) -> bool {
        !self.treated.is_empty() && !self.control.is_empty()
    }
}

/// Matching outcome for one window. Per-intervention vectors follow the
/// intervention input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub window: WindowSpec,
    pub variables: Vec<BinAssignment>,
    /// Sorted by signature.
    pub strata: Vec<Stratum>,
    pub ids: Vec<String>,
    pub arms: Vec<Arm>,
    pub stratum_of: Vec<usize>,
    pub matched: Vec<bool>,
    pub weights: Vec<f64>,
    pub m_t: usize,
    pub m_c: usize,
}

impl MatchResult {
    pub fn signature(&self, i: usize) -> &[u32] {
        &self.strata[self.stratum_of[i]].signature
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn variable(&self, name: &str) -> Option<&BinAssignment> {
        self.variables.iter().find(|v| v.variable == name)
    }
}

/// Values of every matching variable, in signature order.
fn matching_columns(
    wakes: &[Wake],
    interventions: &[InterventionEvent],
    schema: &CovariateSchema,
    opts: &MatchOptions,
) -> Vec<(String, VariableSource, CovariateKind, Vec<f64>)> {
    let mut cols: Vec<_> = schema
        .columns
        .iter()
        .enumerate()
        .map(|(j, c)| {
            (
                c.name.clone(),
                VariableSource::Covariate,
                c.kind,
                interventions.iter().map(|iv| iv.covariates[j]).collect(),
            )
        })
        .collect();
    if opts.match_on_pre_level {
        cols.push((
            PRE_LEVEL_VAR.to_string(),
            VariableSource::PreLevel,
            CovariateKind::Continuous,
            wakes.iter().map(|w| f64::from(w.n_pre)).collect(),
        ));
    }
    cols.push((
        TREND_VAR.to_string(),
        VariableSource::Trend,
        CovariateKind::Continuous,
        wakes.iter().map(|w| w.trend as f64).collect(),
    ));
    cols
}

/// Coarsened exact matching for one window. `wakes[i]` must belong to
/// `interventions[i]`, all at the same window.
pub fn match_cem(
    wakes: &[Wake],
    interventions: &[InterventionEvent],
    schema: &CovariateSchema,
    opts: &MatchOptions,
) -> MatchResult {
    assert_eq!(
        wakes.len(),
        interventions.len(),
        "one wake per intervention"
    );
    debug_assert!(wakes
        .iter()
        .zip(interventions)
        .all(|(w, iv)| w.intervention_id == iv.id));
    let n = interventions.len();
    let window = wakes.first().map(|w| w.window).unwrap_or(WindowSpec {
        radius_km: 1.0,
        half_width_days: 2,
    });

    let variables: Vec<BinAssignment> = matching_columns(wakes, interventions, schema, opts)
        .into_iter()
        .map(|(name, source, kind, values)| {
            let mut b = match opts.cutpoints.get(&name) {
                Some(edges) => coarsen_with_edges(&values, edges.clone()),
                None => coarsen(&values, kind, n),
            };
            b.variable = name;
            b.source = source;
            b
        })
        .collect();

    let mut groups: BTreeMap<Vec<u32>, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, iv) in interventions.iter().enumerate() {
        let sig: Vec<u32> = variables.iter().map(|v| v.indices[i]).collect();
        let entry = groups.entry(sig).or_default();
        match iv.arm {
            Arm::Treatment => entry.0.push(i),
            Arm::Control => entry.1.push(i),
        }
    }

    let mut stratum_of = vec![0usize; n];
    let mut strata = Vec::with_capacity(groups.len());
    for (s, (signature, (t, c))) in groups.iter().enumerate() {
        for &i in t.iter().chain(c) {
            stratum_of[i] = s;
        }
        strata.push(Stratum {
            signature: signature.clone(),
            treated: t.iter().map(|&i| interventions[i].id.clone()).collect(),
            control: c.iter().map(|&i| interventions[i].id.clone()).collect(),
        });
    }

    let m_t: usize = strata
        .iter()
        .filter(|s| s.is_matched())
        .map(|s| s.treated.len())
        .sum();
    let m_c: usize = strata
        .iter()
        .filter(|s| s.is_matched())
        .map(|s| s.control.len())
        .sum();

    let mut matched = vec![false; n];
    let mut weights = vec![0.0; n];
    for (i, iv) in interventions.iter().enumerate() {
        let s = &strata[stratum_of[i]];
        if !s.is_matched() {
            continue;
        }
        matched[i] = true;
        weights[i] = match iv.arm {
            Arm::Treatment => 1.0,
            Arm::Control => {
                (s.treated.len() as f64 / s.control.len() as f64) * (m_c as f64 / m_t as f64)
            }
        };
    }

    MatchResult {
        window,
        variables,
        strata,
        ids: interventions.iter().map(|iv| iv.id.clone()).collect(),
        arms: interventions.iter().map(|iv| iv.arm).collect(),
        stratum_of,
        matched,
        weights,
        m_t,
        m_c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Covariate, GeoPoint};
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn iv(id: &str, arm: Arm, cov: Vec<f64>) -> InterventionEvent {
        InterventionEvent {
            id: id.into(),
            date: NaiveDate::from_ymd_opt(2010, 1, 1).unwrap(),
            loc: GeoPoint { lon: 0.0, lat: 0.0 },
            arm,
            covariates: cov,
            truncated: false,
        }
    }

    fn wake(id: &str, n_pre: u32, trend: i64) -> Wake {
        Wake {
            intervention_id: id.into(),
            window: WindowSpec::new(5.0, 10).unwrap(),
            n_pre,
            n_post: 0,
            trend,
            offsets: vec![],
        }
    }

    fn binary_schema(names: &[&str]) -> CovariateSchema {
        CovariateSchema {
            columns: names
                .iter()
                .map(|n| Covariate {
                    name: n.to_string(),
                    kind: CovariateKind::Binary,
                })
                .collect(),
        }
    }

    #[test]
    fn binary_identity_bins() {
        let b = coarsen(&[0.0, 1.0, 1.0, 0.0], CovariateKind::Binary, 4);
        assert_eq!(b.indices, vec![0, 1, 1, 0]);
        assert_eq!(b.edges, vec![0.0, 1.0]);
    }

    #[test]
    fn constant_column_single_bin() {
        let b = coarsen(&[3.5; 7], CovariateKind::Continuous, 7);
        assert_eq!(b.indices, vec![0; 7]);
        assert_eq!(b.n_bins(), 1);
    }

    #[test]
    fn sturges_counts() {
        // ceil(log2(100) + 1) = ceil(7.64) = 8
        assert_eq!(sturges_bins(100), 8);
        assert_eq!(sturges_bins(64), 7);
        assert_eq!(sturges_bins(1), 1);
        let values: Vec<f64> = (0..100).map(f64::from).collect();
        let b = coarsen(&values, CovariateKind::Continuous, 100);
        assert_eq!(b.n_bins(), 8);
        assert_eq!(b.edges.len(), 9);
        assert_eq!(*b.indices.last().unwrap(), 7);
        assert_eq!(b.indices[0], 0);
    }

    #[test]
    fn bin_edges_half_open_last_closed() {
        let edges = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(assign_bin(&edges, 0.0), 0);
        assert_eq!(assign_bin(&edges, 0.999), 0);
        assert_eq!(assign_bin(&edges, 1.0), 1);
        assert_eq!(assign_bin(&edges, 3.0), 2);
        assert_eq!(assign_bin(&edges, 7.0), 2);
        assert_eq!(assign_bin(&edges, -1.0), 0);
        assert_eq!(assign_bin(&[2.0, 2.0], 2.0), 0);
    }

    #[test]
    fn identical_pair_matches_with_unit_weights() {
        let ivs = vec![
            iv("T", Arm::Treatment, vec![1.0]),
            iv("C", Arm::Control, vec![1.0]),
        ];
        let wakes = vec![wake("T", 2, 1), wake("C", 2, 1)];
        let m = match_cem(
            &wakes,
            &ivs,
            &binary_schema(&["x"]),
            &MatchOptions::standard(),
        );
        assert_eq!(m.matched, vec![true, true]);
        assert_eq!(m.weights, vec![1.0, 1.0]);
        assert_eq!((m.m_t, m.m_c), (1, 1));
    }

    #[test]
    fn disjoint_strata_match_nothing() {
        let ivs = vec![
            iv("T", Arm::Treatment, vec![1.0]),
            iv("C", Arm::Control, vec![0.0]),
        ];
        let wakes = vec![wake("T", 0, 0), wake("C", 0, 0)];
        let m = match_cem(
            &wakes,
            &ivs,
            &binary_schema(&["x"]),
            &MatchOptions::standard(),
        );
        assert_eq!((m.m_t, m.m_c), (0, 0));
        assert_eq!(m.weights, vec![0.0, 0.0]);
        assert_eq!(m.strata.len(), 2);
    }

    #[test]
    fn worked_weight_example() {
        // Stratum A (x=0): 2 treated, 1 control. Stratum B (x=1): 1 treated, 2 control.
        let ivs = vec![
            iv("A_t1", Arm::Treatment, vec![0.0]),
            iv("A_t2", Arm::Treatment, vec![0.0]),
            iv("A_c1", Arm::Control, vec![0.0]),
            iv("B_t1", Arm::Treatment, vec![1.0]),
            iv("B_c1", Arm::Control, vec![1.0]),
            iv("B_c2", Arm::Control, vec![1.0]),
        ];
        let wakes: Vec<_> = ivs.iter().map(|i| wake(&i.id, 0, 0)).collect();
        let m = match_cem(
            &wakes,
            &ivs,
            &binary_schema(&["x"]),
            &MatchOptions::standard(),
        );
        assert_eq!((m.m_t, m.m_c), (3, 3));
        assert_eq!(m.weights, vec![1.0, 1.0, 2.0, 1.0, 0.5, 0.5]);
        let control_sum: f64 = m
            .weights
            .iter()
            .zip(&m.arms)
            .filter(|(_, a)| **a == Arm::Control)
            .map(|(w, _)| w)
            .sum();
        assert!((control_sum - 3.0).abs() < 1e-9);
    }

    #[test]
    fn trend_separates_otherwise_identical_units() {
        let ivs = vec![
            iv("T", Arm::Treatment, vec![]),
            iv("C", Arm::Control, vec![]),
        ];
        let wakes = vec![wake("T", 4, 4), wake("C", 4, -4)];
        let m = match_cem(
            &wakes,
            &ivs,
            &CovariateSchema::default(),
            &MatchOptions::standard(),
        );
        assert_eq!((m.m_t, m.m_c), (0, 0));
        assert_eq!(m.variables.len(), 2);
        assert_eq!(m.variables[0].variable, PRE_LEVEL_VAR);
        assert_eq!(m.variables[1].variable, TREND_VAR);
    }

    #[test]
    fn pre_level_can_be_disabled_and_cutpoints_override() {
        let ivs = vec![
            iv("T", Arm::Treatment, vec![]),
            iv("C", Arm::Control, vec![]),
        ];
        let wakes = vec![wake("T", 1, 0), wake("C", 9, 0)];
        let mut opts = MatchOptions::standard();
        let m = match_cem(&wakes, &ivs, &CovariateSchema::default(), &opts);
        assert_eq!(m.m_t, 0);
        opts.match_on_pre_level = false;
        let m = match_cem(&wakes, &ivs, &CovariateSchema::default(), &opts);
        assert_eq!(m.m_t, 1);
        assert_eq!(m.variables.len(), 1);

        let mut opts = MatchOptions::standard();
        opts.cutpoints
            .insert(PRE_LEVEL_VAR.into(), vec![0.0, 100.0]);
        let m = match_cem(&wakes, &ivs, &CovariateSchema::default(), &opts);
        assert_eq!(m.m_t, 1);
        assert_eq!(m.variable(PRE_LEVEL_VAR).unwrap().edges, vec![0.0, 100.0]);
    }

    proptest! {
        #[test]
        fn affine_scaling_keeps_continuous_bins(values in proptest::collection::vec(-50.0f64..50.0, 2..60)) {
            let scaled: Vec<f64> = values.iter().map(|v| v * 2.0).collect();
            let a = coarsen(&values, CovariateKind::Continuous, values.len());
            let b = coarsen(&scaled, CovariateKind::Continuous, values.len());
            prop_assert_eq!(a.indices, b.indices);
        }

        #[test]
        fn strata_share_signatures_and_weights_conserve(
            rows in proptest::collection::vec((any::<bool>(), 0u8..2, 0u8..2, 0u32..4, -2i64..3), 1..60)
        ) {
            let ivs: Vec<_> = rows.iter().enumerate().map(|(i, r)| {
                iv(&format!("I{i}"), if r.0 { Arm::Treatment } else { Arm::Control }, vec![f64::from(r.1), f64::from(r.2)])
            }).collect();
            let wakes: Vec<_> = rows.iter().enumerate().map(|(i, r)| wake(&format!("I{i}"), r.3, r.4)).collect();
            let m = match_cem(&wakes, &ivs, &binary_schema(&["a", "b"]), &MatchOptions::standard());
            for (i, _) in ivs.iter().enumerate() {
                let sig: Vec<u32> = m.variables.iter().map(|v| v.indices[i]).collect();
                prop_assert_eq!(&sig, &m.strata[m.stratum_of[i]].signature);
            }
            let (mut wt, mut wc) = (0.0, 0.0);
            for i in 0..ivs.len() {
                if !m.matched[i] { prop_assert_eq!(m.weights[i], 0.0); continue; }
                match m.arms[i] { Arm::Treatment => wt += m.weights[i], Arm::Control => wc += m.weights[i] }
            }
            prop_assert!((wt - m.m_t as f64).abs() < 1e-9);
            prop_assert!((wc - m.m_c as f64).abs() < 1e-9);
        }
    }
}
