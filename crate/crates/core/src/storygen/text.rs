//! Text templates: intro, effect interpretation, resolution.

use super::scenes::SceneContext;
use super::{Intro, Run, Scene, StoryError, TextBlock};
use crate::canonical::format_float;
use crate::dataset::ScenarioConfig;
use crate::estimation::EffectEstimate;
use crate::wake::WindowSpec;

pub const INSUFFICIENT_VARIATION: &str = "insufficient variation to estimate an effect";

const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Lowercases the first letter unless the label starts with an acronym.
pub(crate) fn lower_first(s: &str) -> String {
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(_), Some(b)) if b.is_uppercase() => s.to_string(),
        (Some(a), _) => a.to_lowercase().chain(s.chars().skip(1)).collect(),
        _ => String::new(),
    }
}

pub(crate) fn para(text: impl Into<String>) -> Vec<Run> {
    vec![Run::plain(text)]
}

pub fn build_intro(cfg: &ScenarioConfig, scenes: &[Scene]) -> Result<Intro, StoryError> {
    Ok(Intro {
        hook: cfg.hook()?,
        background: cfg.background.clone(),
        outline: scenes.iter().map(|s| s.summary.clone()).collect(),
    })
}

/// One sentence on the effect at window `w`. The magnitude run links to the
/// positive or negative theme role.
pub fn interpret_effect(
    e: &EffectEstimate,
    w: WindowSpec,
    cfg: &ScenarioConfig,
) -> Result<TextBlock, StoryError> {
    if e.degenerate {
        return Err(StoryError::DegenerateCell {
            radius_km: w.radius_km,
            half_width_days: w.half_width_days,
        });
    }
    let units = cfg.effect_units()?;
    let significance = if e.p_value < SIGNIFICANCE_LEVEL {
        "statistically significant"
    } else {
        "not statistically significant"
    };
    let tail = format!(
        "within {} km and {} days ({significance}, p = {:.3})",
        format_float(w.radius_km),
        w.half_width_days,
        e.p_value
    );
    let magnitude = format!("{:.2}", e.estimate.abs());
    let runs = if magnitude == "0.00" {
        vec![Run::plain(format!(
            "{} are associated with no estimated difference in {units} {tail}",
            cfg.treatment_label
        ))]
    } else {
        let (dir, role) = if e.estimate > 0.0 {
            ("more", "positive")
        } else {
            ("fewer", "negative")
        };
        vec![
            Run::plain(format!("{} are associated with ", cfg.treatment_label)),
            Run::link(format!("{magnitude} {dir}"), role),
            Run::plain(format!(" {units} {tail}")),
        ]
    };
    Ok(TextBlock::single(runs))
}

/// [`interpret_effect`], or a plain note when the cell is degenerate.
pub fn interpretation_or_fallback(
    e: &EffectEstimate,
    w: WindowSpec,
    cfg: &ScenarioConfig,
) -> Result<TextBlock, StoryError> {
    if e.degenerate {
        return Ok(TextBlock::single(vec![Run::plain(format!(
            "At {} km and {} days there is {INSUFFICIENT_VARIATION}.",
            format_float(w.radius_km),
            w.half_width_days
        ))]));
    }
    interpret_effect(e, w, cfg)
}

/// Closing summary; plain text only, since no marks are on screen.
pub(crate) fn resolution_summary(ctx: &SceneContext) -> Result<TextBlock, StoryError> {
    let cells = &ctx.heatmap.cells;
    let estimable = cells.iter().filter(|c| !c.degenerate).count();
    let significant = cells
        .iter()
        .filter(|c| !c.degenerate && c.p_value < SIGNIFICANCE_LEVEL)
        .count();
    let overview = if estimable == 0 {
        format!(
            "None of the {} combinations of radius and temporal window had enough variation to estimate an effect.",
            cells.len()
        )
    } else {
        format!(
            "Across {} combinations of radius and temporal window, {estimable} could be estimated and {significant} show a statistically significant effect (p < 0.05).",
            cells.len()
        )
    };
    let mut tb = TextBlock::single(para(format!(
        "Method: {} were counted within each radius and number of days before and after every intervention. Interventions were then matched exactly on their coarsened covariates, the earlier count and the trend, and the effect is the weighted difference between the before-to-after changes of the two groups.",
        ctx.cfg.dependent_label
    )));
    tb.extend(TextBlock::single(vec![Run::plain(overview)]));
    tb.extend(interpretation_or_fallback(
        ctx.reference_effect(),
        ctx.reference,
        ctx.cfg,
    )?);
    tb.extend(TextBlock::single(para(format!(
        "At that window, {} {} were matched to {} {}. The full results for every window can be downloaded below.",
        ctx.covariate_table.m_t,
        lower_first(&ctx.cfg.treatment_label),
        ctx.covariate_table.m_c,
        lower_first(&ctx.cfg.control_label)
    ))));
    Ok(tb.without_roles())
}
