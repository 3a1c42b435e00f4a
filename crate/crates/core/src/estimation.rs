//! Weighted difference-in-differences per window and the result grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::canonical::{format_float, to_canonical_bytes};
use crate::dataset::{Arm, Dataset};
use crate::geo::{GeoError, SpatialIndex};
use crate::matching::{match_cem, MatchOptions, MatchResult};
use crate::wake::{compute_wakes_grid_with_index, Wake, WakeGrid, WindowGrid, WindowSpec};

/// Below this magnitude an exact-fit slope counts as zero.
const ZERO_SLOPE: f64 = 1e-12;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum EstimationError {
    #[error("EmptyArm: no {0:?} rows with positive weight")]
    EmptyArm(Arm),
}

/// One regression row: arm indicator, outcome, weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DidRow {
    pub treated: bool,
    pub y: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    /// Treated minus control change in events per intervention.
    pub estimate: f64,
    pub std_error: f64,
    pub p_value: f64,
    pub n_matched_t: usize,
    pub n_matched_c: usize,
    pub degenerate: bool,
}

impl EffectEstimate {
    /// Cell without both arms.
    pub fn empty(n_matched_t: usize, n_matched_c: usize) -> Self {
        Self {
            estimate: 0.0,
            std_error: 0.0,
            p_value: 1.0,
            n_matched_t,
            n_matched_c,
            degenerate: true,
        }
    }
}

/// Two-sided tail probability of Student's t with `df` degrees of freedom.
pub fn t_p_value(t: f64, df: f64) -> f64 {
    assert!(df > 0.0, "degrees of freedom must be positive");
    if t == 0.0 {
        return 1.0;
    }
    if !t.is_finite() {
        return 0.0;
    }
    // P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2)
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Weighted least squares of `y` on an intercept and the treatment
/// indicator. The slope is the effect; its classical standard error uses the
/// weighted residual variance with `N - 2` degrees of freedom.
pub fn wls_did(rows: &[DidRow]) -> Result<EffectEstimate, EstimationError> {
    let rows: Vec<&DidRow> = rows.iter().filter(|r| r.w > 0.0).collect();
    let n_t = rows.iter().filter(|r| r.treated).count();
    let n_c = rows.len() - n_t;
    if n_t == 0 {
        return Err(EstimationError::EmptyArm(Arm::Treatment));
    }
    if n_c == 0 {
        return Err(EstimationError::EmptyArm(Arm::Control));
    }

    // Normal equations X'WX b = X'Wy with X = [1, d].
    let (mut s_w, mut s_wd, mut s_wy, mut s_wdy) = (0.0, 0.0, 0.0, 0.0);
    for r in &rows {
        let d = if r.treated { 1.0 } else { 0.0 };
        s_w += r.w;
        s_wd += r.w * d;
        s_wy += r.w * r.y;
        s_wdy += r.w * d * r.y;
    }
    let det = s_w * s_wd - s_wd * s_wd;
    let beta0 = (s_wd * s_wy - s_wd * s_wdy) / det;
    let beta1 = (s_w * s_wdy - s_wd * s_wy) / det;

    let (mut rss, mut scale) = (0.0, 0.0);
    for r in &rows {
        let d = if r.treated { 1.0 } else { 0.0 };
        let resid = r.y - beta0 - beta1 * d;
        rss += r.w * resid * resid;
        scale += r.w * r.y * r.y;
    }
    let n = rows.len();
    let df = n as f64 - 2.0;
    let exact_fit = df < 1.0 || rss <= 1e-24 * scale.max(1.0);
    if exact_fit {
        return Ok(EffectEstimate {
            estimate: beta1,
            std_error: 0.0,
            p_value: if beta1.abs() > ZERO_SLOPE { 0.0 } else { 1.0 },
            n_matched_t: n_t,
            n_matched_c: n_c,
            degenerate: true,
        });
    }
    let sigma2 = rss / df;
    // [(X'WX)^-1]_{11} = s_w / det
    let std_error = (sigma2 * s_w / det).sqrt();
    let p_value = t_p_value(beta1 / std_error, df);
    Ok(EffectEstimate {
        estimate: beta1,
        std_error,
        p_value,
        n_matched_t: n_t,
        n_matched_c: n_c,
        degenerate: false,
    })
}

/// Regression rows for the matched interventions: `y = n_post - n_pre`.
pub fn did_rows(wakes: &[Wake], m: &MatchResult) -> Vec<DidRow> {
    wakes
        .iter()
        .enumerate()
        .filter(|(i, _)| m.matched[*i])
        .map(|(i, w)| DidRow {
            treated: m.arms[i].is_treated(),
            y: f64::from(w.n_post) - f64::from(w.n_pre),
            w: m.weights[i],
        })
        .collect()
}

/// Matching plus estimation for one window.
pub fn estimate_cell(
    ds: &Dataset,
    wakes: &[Wake],
    opts: &MatchOptions,
) -> (MatchResult, EffectEstimate) {
    let m = match_cem(wakes, &ds.interventions, &ds.schema, opts);
    let est = wls_did(&did_rows(wakes, &m)).unwrap_or_else(|_| EffectEstimate::empty(m.m_t, m.m_c));
    (m, est)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub radius_km: f64,
    pub half_width_days: u32,
    #[serde(flatten)]
    pub effect: EffectEstimate,
}

impl GridCell {
    pub fn window(&self) -> WindowSpec {
        WindowSpec {
            radius_km: self.radius_km,
            half_width_days: self.half_width_days,
        }
    }
}

/// Effect estimates for every window, radii-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultGrid {
    pub radii: Vec<f64>,
    pub half_widths: Vec<u32>,
    pub cells: Vec<GridCell>,
}

impl ResultGrid {
    pub fn get(&self, w: WindowSpec) -> Option<&EffectEstimate> {
        self.cells
            .iter()
            .find(|c| c.window() == w)
            .map(|c| &c.effect)
    }

    pub fn all_degenerate(&self) -> bool {
        self.cells.iter().all(|c| c.effect.degenerate)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "radius_km,half_width_days,estimate,std_error,p_value,n_matched_t,n_matched_c,degenerate\n",
        );
        for c in &self.cells {
            let e = &c.effect;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                format_float(c.radius_km),
                c.half_width_days,
                format_float(e.estimate),
                format_float(e.std_error),
                format_float(e.p_value),
                e.n_matched_t,
                e.n_matched_c,
                e.degenerate
            ));
        }
        out
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(self).expect("result grid serializes")
    }
}

/// Everything the story needs from one sweep.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub grid: WindowGrid,
    pub wakes: WakeGrid,
    pub matches: std::collections::BTreeMap<WindowSpec, MatchResult>,
    pub results: ResultGrid,
}

/// Wakes, matching and estimation over every grid cell. Cells run on the
/// current rayon pool and are merged by window key.
pub fn run_analysis(
    ds: &Dataset,
    grid: &WindowGrid,
    opts: &MatchOptions,
) -> Result<Analysis, GeoError> {
    let index = SpatialIndex::build(&ds.dependents, grid.max_radius());
    let wakes = compute_wakes_grid_with_index(ds, grid, &index)?;
    let per_cell: Vec<(WindowSpec, MatchResult, EffectEstimate)> = wakes
        .par_iter()
        .map(|(w, cell_wakes)| {
            let (m, e) = estimate_cell(ds, cell_wakes, opts);
            (*w, m, e)
        })
        .collect();

    let mut matches = std::collections::BTreeMap::new();
    let mut by_window = std::collections::BTreeMap::new();
    for (w, m, e) in per_cell {
        matches.insert(w, m);
        by_window.insert(w, e);
    }
    let cells = grid
        .cells()
        .into_iter()
        .map(|w| GridCell {
            radius_km: w.radius_km,
            half_width_days: w.half_width_days,
            effect: by_window[&w],
        })
        .collect();
    Ok(Analysis {
        grid: grid.clone(),
        wakes,
        matches,
        results: ResultGrid {
            radii: grid.radii().to_vec(),
            half_widths: grid.half_widths().to_vec(),
            cells,
        },
    })
}

pub fn sweep_grid(
    ds: &Dataset,
    grid: &WindowGrid,
    opts: &MatchOptions,
) -> Result<ResultGrid, GeoError> {
    run_analysis(ds, grid, opts).map(|a| a.results)
}
