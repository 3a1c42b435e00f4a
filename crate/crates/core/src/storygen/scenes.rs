//! The four scenes and the data slices behind them.

use serde_json::json;

use super::text::{lower_first, para};
use super::{
    ActorSlice, ActorSlices, ConstraintRow, CovariateRow, CovariateTable, HeatCell, Heatmap,
    Interaction, Mark, MarkKind, Run, Scene, SceneId, Shot, SliceEvent, StoryData, StoryError,
    TextBlock, TrendBins, TrendRow, VariableColumn, WindowCounts,
};
use crate::actors::ActorPair;
use crate::canonical::format_float;
use crate::dataset::{Arm, Dataset, InterventionEvent, ScenarioConfig};
use crate::estimation::{Analysis, EffectEstimate};
use crate::geo::haversine_km;
use crate::matching::{MatchResult, VariableSource, TREND_VAR};
use crate::wake::{count_offsets, day_offset, Wake, WindowSpec};

/// Everything the scene builders share: engine outputs at the reference
/// window, the two actors, and the precomputed data slices.
pub struct SceneContext<'a> {
    pub ds: &'a Dataset,
    pub analysis: &'a Analysis,
    pub actors: &'a ActorPair,
    pub cfg: &'a ScenarioConfig,
    pub reference: WindowSpec,
    pub wakes_ref: &'a [Wake],
    pub match_ref: &'a MatchResult,
    pub treatment: &'a InterventionEvent,
    pub control: &'a InterventionEvent,
    pub slices: ActorSlices,
    pub trend_bins: TrendBins,
    pub covariate_table: CovariateTable,
    pub heatmap: Heatmap,
}

impl<'a> SceneContext<'a> {
    pub fn new(
        ds: &'a Dataset,
        analysis: &'a Analysis,
        actors: &'a ActorPair,
        cfg: &'a ScenarioConfig,
    ) -> Result<Self, StoryError> {
        let reference = actors.reference_window;
        let wakes_ref = analysis
            .wakes
            .get(&reference)
            .ok_or(StoryError::MissingWindow(reference))?;
        let match_ref = analysis
            .matches
            .get(&reference)
            .ok_or(StoryError::MissingWindow(reference))?;
        let treatment = ds
            .intervention(&actors.treatment_id)
            .ok_or_else(|| StoryError::UnknownActor(actors.treatment_id.clone()))?;
        let control = ds
            .intervention(&actors.control_id)
            .ok_or_else(|| StoryError::UnknownActor(actors.control_id.clone()))?;
        let t_max = analysis.grid.max_half_width();

        let wake_of = |id: &str| {
            wakes_ref
                .iter()
                .find(|w| w.intervention_id == id)
                .expect("wake for every intervention")
        };
        let slices = ActorSlices {
            treatment: actor_slice(
                ds,
                treatment,
                wake_of(&treatment.id),
                2.0 * reference.radius_km,
                t_max,
            ),
            control: actor_slice(
                ds,
                control,
                wake_of(&control.id),
                2.0 * reference.radius_km,
                t_max,
            ),
            radius_km: reference.radius_km,
            half_width_days: reference.half_width_days,
            slice_radius_km: 2.0 * reference.radius_km,
            slice_half_width_days: t_max,
            score: actors.score,
            constraints: actors
                .report
                .iter()
                .map(|c| ConstraintRow {
                    name: c.name.to_string(),
                    passed: c.passed,
                    detail: c.detail.clone(),
                })
                .collect(),
        };
        let trend_bins = trend_table(ds, treatment, control, match_ref, reference, t_max);
        let covariate_table = covariate_table(ds, wakes_ref, match_ref);
        let heatmap = heatmap(analysis, reference);

        Ok(Self {
            ds,
            analysis,
            actors,
            cfg,
            reference,
            wakes_ref,
            match_ref,
            treatment,
            control,
            slices,
            trend_bins,
            covariate_table,
            heatmap,
        })
    }

    pub fn story_data(&self) -> StoryData {
        StoryData {
            reference_window: self.reference,
            actor_slices: self.slices.clone(),
            trend_bins: self.trend_bins.clone(),
            covariate_table: self.covariate_table.clone(),
            heatmap: self.heatmap.clone(),
        }
    }

    pub fn reference_effect(&self) -> &EffectEstimate {
        self.analysis
            .results
            .get(self.reference)
            .expect("result for the reference window")
    }

    fn treatment_label(&self) -> String {
        lower_first(&self.cfg.treatment_label)
    }

    fn control_label(&self) -> String {
        lower_first(&self.cfg.control_label)
    }

    fn dependent_label(&self) -> &str {
        &self.cfg.dependent_label
    }

    fn radius(&self) -> String {
        format_float(self.reference.radius_km)
    }
}

/// Dependent events within `radius_km` and `|offset| <= half_width` of an
/// intervention, including those on its day.
fn actor_slice(
    ds: &Dataset,
    iv: &InterventionEvent,
    wake: &Wake,
    radius_km: f64,
    half_width: u32,
) -> ActorSlice {
    let t = i64::from(half_width);
    let mut events: Vec<SliceEvent> = ds
        .dependents
        .iter()
        .filter_map(|e| {
            let offset = day_offset(e.date, iv.date);
            let distance_km = haversine_km(iv.loc, e.loc);
            (offset.abs() <= t && distance_km <= radius_km).then(|| SliceEvent {
                id: e.id.clone(),
                lon: e.loc.lon,
                lat: e.loc.lat,
                offset,
                distance_km,
            })
        })
        .collect();
    events.sort_by(|a, b| a.offset.cmp(&b.offset).then_with(|| a.id.cmp(&b.id)));
    ActorSlice {
        id: iv.id.clone(),
        arm: iv.arm,
        date: iv.date,
        lon: iv.loc.lon,
        lat: iv.loc.lat,
        n_pre: wake.n_pre,
        n_post: wake.n_post,
        trend: wake.trend,
        events,
    }
}

fn offsets_within(
    ds: &Dataset,
    iv: &InterventionEvent,
    radius_km: f64,
    half_width: u32,
) -> Vec<i64> {
    let t = i64::from(half_width);
    let mut v: Vec<i64> = ds
        .dependents
        .iter()
        .filter(|e| haversine_km(iv.loc, e.loc) <= radius_km)
        .map(|e| day_offset(e.date, iv.date))
        .filter(|&o| o != 0 && o.abs() <= t)
        .collect();
    v.sort_unstable();
    v
}

/// Counts, trends and trend bins of both actors for every even half-width
/// from 2 to `t_max`, binned with the reference-window trend edges.
pub fn trend_table(
    ds: &Dataset,
    treatment: &InterventionEvent,
    control: &InterventionEvent,
    match_ref: &MatchResult,
    reference: WindowSpec,
    t_max: u32,
) -> TrendBins {
    let trend_var = match_ref
        .variable(TREND_VAR)
        .expect("trend is always a matching variable");
    let treatment_offsets = offsets_within(ds, treatment, reference.radius_km, t_max);
    let control_offsets = offsets_within(ds, control, reference.radius_km, t_max);
    let drag_range: Vec<u32> = (1..=t_max / 2).map(|k| 2 * k).collect();
    let counts = |offsets: &[i64], t: u32| {
        let (n_pre, n_post, trend) = count_offsets(offsets, t);
        WindowCounts {
            n_pre,
            n_post,
            trend,
            trend_bin: trend_var.bin_of(trend as f64),
        }
    };
    let table = drag_range
        .iter()
        .map(|&t| {
            let tc = counts(&treatment_offsets, t);
            let cc = counts(&control_offsets, t);
            TrendRow {
                half_width_days: t,
                treatment: tc,
                control: cc,
                valid: tc.trend_bin == cc.trend_bin,
            }
        })
        .collect();
    TrendBins {
        default_half_width: reference.half_width_days,
        drag_range,
        edges: trend_var.edges.clone(),
        treatment_offsets,
        control_offsets,
        table,
    }
}

fn covariate_table(ds: &Dataset, wakes_ref: &[Wake], m: &MatchResult) -> CovariateTable {
    CovariateTable {
        variables: m
            .variables
            .iter()
            .map(|v| VariableColumn {
                name: v.variable.clone(),
                source: v.source,
                kind: v.kind,
                edges: v.edges.clone(),
            })
            .collect(),
        covariate_names: ds.schema.names().map(str::to_string).collect(),
        rows: ds
            .interventions
            .iter()
            .enumerate()
            .map(|(i, iv)| CovariateRow {
                id: iv.id.clone(),
                arm: iv.arm,
                covariates: iv.covariates.clone(),
                n_pre: wakes_ref[i].n_pre,
                trend: wakes_ref[i].trend,
                matched: m.matched[i],
                weight: m.weights[i],
                signature: m.signature(i).to_vec(),
            })
            .collect(),
        m_t: m.m_t,
        m_c: m.m_c,
    }
}

/// Tile side as a fraction of the cell: 0.4 at p = 1, growing with
/// `-log10 p` up to 1.0 at p <= 0.001.
pub fn side_fraction(p: f64) -> f64 {
    let strength = -p.max(1e-6).log10() / 3.0;
    0.4 + 0.6 * strength.clamp(0.0, 1.0)
}

fn heatmap(analysis: &Analysis, reference: WindowSpec) -> Heatmap {
    let r = &analysis.results;
    let m = r
        .cells
        .iter()
        .filter(|c| !c.effect.degenerate)
        .map(|c| c.effect.estimate.abs())
        .fold(0.0f64, f64::max);
    Heatmap {
        radii: r.radii.clone(),
        half_widths: r.half_widths.clone(),
        cells: r
            .cells
            .iter()
            .map(|c| HeatCell {
                radius_km: c.radius_km,
                half_width_days: c.half_width_days,
                estimate: c.effect.estimate,
                std_error: c.effect.std_error,
                p_value: c.effect.p_value,
                n_matched_t: c.effect.n_matched_t,
                n_matched_c: c.effect.n_matched_c,
                degenerate: c.effect.degenerate,
                side_fraction: side_fraction(c.effect.p_value),
            })
            .collect(),
        color_domain: [-m, m],
        reference,
    }
}

fn mark(id: impl Into<String>, kind: MarkKind, role: Option<&str>) -> Mark {
    Mark {
        id: id.into(),
        kind,
        role: role.map(str::to_string),
        persistent: true,
        label: None,
        props: Default::default(),
    }
}

impl Mark {
    fn transient(mut self) -> Self {
        self.persistent = false;
        self
    }

    fn label(mut self, l: impl Into<String>) -> Self {
        self.label = Some(l.into());
        self
    }

    fn prop(mut self, k: &str, v: serde_json::Value) -> Self {
        self.props.insert(k.to_string(), v);
        self
    }
}

/// Accumulates shots: persistent marks carry over, transient ones vanish
/// after their shot, and the final shot becomes interactive.
struct Stager {
    scene: &'static str,
    carried: Vec<Mark>,
    prev_ids: Vec<String>,
    shots: Vec<Shot>,
}

impl Stager {
    fn new(scene: &'static str) -> Self {
        Self {
            scene,
            carried: Vec::new(),
            prev_ids: Vec::new(),
            shots: Vec::new(),
        }
    }

    fn shot(&mut self, new_marks: Vec<Mark>, text: TextBlock) {
        let mut view = self.carried.clone();
        view.extend(new_marks);
        let entering_marks = view
            .iter()
            .filter(|m| !self.prev_ids.contains(&m.id))
            .map(|m| m.id.clone())
            .collect();
        self.carried = view.iter().filter(|m| m.persistent).cloned().collect();
        self.prev_ids = view.iter().map(|m| m.id.clone()).collect();
        self.shots.push(Shot {
            id: format!("{}-{}", self.scene, self.shots.len() + 1),
            view_state: view,
            text,
            entering_marks,
            interactive: false,
        });
    }

    fn finish(mut self) -> Vec<Shot> {
        if let Some(last) = self.shots.last_mut() {
            last.interactive = true;
        }
        self.shots
    }
}

fn arm_row(arm: Arm, slice: &ActorSlice, radius_km: f64, t_ref: u32) -> Vec<Vec<Mark>> {
    let a = arm.as_str();
    let panel = |phase: &str| {
        mark(format!("map-{a}-{phase}"), MarkKind::MapPanel, Some(a))
            .prop("arm", json!(a))
            .prop("phase", json!(phase))
    };
    let circle = |phase: &str| {
        mark(
            format!("circle-{a}-{phase}"),
            MarkKind::ReferenceCircle,
            Some(a),
        )
        .prop("arm", json!(a))
        .prop("phase", json!(phase))
        .prop("radius_km", json!(radius_km))
        .prop("dashed", json!(true))
    };
    let dots = |phase: &str, count: u32| {
        mark(
            format!("events-{a}-{phase}"),
            MarkKind::EventDots,
            Some("dependent"),
        )
        .prop("arm", json!(a))
        .prop("phase", json!(phase))
        .prop("count", json!(count))
        .prop("half_width_days", json!(t_ref))
    };
    vec![
        vec![panel("pre"), circle("pre"), dots("pre", slice.n_pre)],
        vec![
            panel("post"),
            circle("post"),
            dots("post", slice.n_post),
            mark(format!("timeline-{a}"), MarkKind::Timeline, Some(a))
                .prop("arm", json!(a))
                .prop("half_width_days", json!(t_ref)),
        ],
        vec![
            panel("intervention"),
            mark(format!("marker-{a}"), MarkKind::InterventionMarker, Some(a))
                .prop("arm", json!(a))
                .prop("lon", json!(slice.lon))
                .prop("lat", json!(slice.lat)),
        ],
    ]
}

/// Scene 1: three maps (before / intervention / after) for each actor.
pub fn build_scene_wakes(ctx: &SceneContext) -> Result<Scene, StoryError> {
    let (t, c) = (&ctx.slices.treatment, &ctx.slices.control);
    let t_ref = ctx.reference.half_width_days;
    let r = ctx.radius();
    let dep = ctx.dependent_label();
    let mut treat_rows = arm_row(Arm::Treatment, t, ctx.reference.radius_km, t_ref).into_iter();
    let control_marks: Vec<Mark> = arm_row(Arm::Control, c, ctx.reference.radius_km, t_ref)
        .into_iter()
        .flatten()
        .collect();

    let mut st = Stager::new("wakes");
    let mut first = treat_rows.next().expect("pre row");
    first.push(
        mark("hint-circle", MarkKind::Annotation, None)
            .transient()
            .label(format!("{r} km")),
    );
    st.shot(
        first,
        TextBlock {
            paragraphs: vec![
                vec![
                    Run::plain(format!("Take {}, one of the ", t.id)),
                    Run::link(ctx.treatment_label(), "treatment"),
                    Run::plain(format!(
                        " in the data. The dashed circle marks {r} km around the place where it started on {}.",
                        t.date
                    )),
                ],
                vec![
                    Run::plain("In the "),
                    Run::plain(format!("{t_ref} days before, ")),
                    Run::link(format!("{} {dep}", t.n_pre), "dependent"),
                    Run::plain(" happened inside the circle."),
                ],
            ],
        },
    );
    st.shot(
        treat_rows.next().expect("post row"),
        TextBlock {
            paragraphs: vec![
                vec![
                    Run::plain(format!("In the {t_ref} days after it started, ")),
                    Run::link(format!("{} {dep}", t.n_post), "dependent"),
                    Run::plain(" happened within the same distance."),
                ],
                para(format!(
                    "The timeline below the maps places every event relative to the start date of {}.",
                    t.id
                )),
            ],
        },
    );
    st.shot(
        treat_rows.next().expect("intervention row"),
        TextBlock {
            paragraphs: vec![
                vec![
                    Run::plain("The middle map shows the "),
                    Run::link("intervention", "treatment"),
                    Run::plain(" itself, between the periods before and after it."),
                ],
                para(format!(
                    "Comparing the counts before and after ({} and {}) alone says little: {dep} might have changed anyway.",
                    t.n_pre, t.n_post
                )),
            ],
        },
    );
    st.shot(
        control_marks,
        TextBlock {
            paragraphs: vec![
                vec![
                    Run::plain("For comparison, "),
                    Run::plain(format!("{}, one of the ", c.id)),
                    Run::link(ctx.control_label(), "control"),
                    Run::plain(", saw "),
                    Run::link(format!("{} {dep}", c.n_pre), "dependent"),
                    Run::plain(format!(
                        " before and {} after it, within {r} km and {t_ref} days.",
                        c.n_post
                    )),
                ],
                para(format!(
                    "The change around {} is set against the change around {}.",
                    t.id, c.id
                )),
            ],
        },
    );
    st.shot(
        vec![mark("hint-sync", MarkKind::Annotation, None)
            .transient()
            .label("pan & zoom")],
        TextBlock {
            paragraphs: vec![
                para("Pan and zoom any map: the three maps of the same intervention move together."),
                para("Hover over an event to see its id, how many days before or after the intervention it happened, and its distance."),
            ],
        },
    );

    Ok(Scene {
        id: SceneId::Wakes,
        title: "Counting events before and after".into(),
        summary: format!(
            "Problem: does {} change how often {dep} occur? Approach: count {dep} within a radius and a number of days before and after each intervention.",
            ctx.treatment_label()
        ),
        shots: st.finish(),
        interaction: Interaction::SynchronizedMaps,
        advanced_summary: None,
    })
}

/// Scene 2: aggregated counts and the trend, with a draggable window.
pub fn build_scene_trend(ctx: &SceneContext) -> Result<Scene, StoryError> {
    let (t, c) = (&ctx.slices.treatment, &ctx.slices.control);
    let t_ref = ctx.reference.half_width_days;
    let half = t_ref / 2;
    let t_max = ctx.analysis.grid.max_half_width();
    let dep = ctx.dependent_label();
    let halves = |s: &ActorSlice| {
        let early = (i64::from(s.n_pre) - s.trend) / 2;
        let recent = (i64::from(s.n_pre) + s.trend) / 2;
        (early, recent)
    };
    let (t_early, t_recent) = halves(t);
    let (c_early, c_recent) = halves(c);
    let n_invalid = ctx.trend_bins.table.iter().filter(|r| !r.valid).count();

    let bars = |arm: &str, s: &ActorSlice| {
        mark(format!("counts-{arm}"), MarkKind::CountBar, Some(arm))
            .prop("n_pre", json!(s.n_pre))
            .prop("n_post", json!(s.n_post))
    };
    let aid = |arm: &str, s: &ActorSlice| {
        mark(format!("trend-aid-{arm}"), MarkKind::TrendAid, Some(arm))
            .prop("trend", json!(s.trend))
            .prop("half_width_days", json!(t_ref))
    };

    let mut st = Stager::new("trend");
    st.shot(
        vec![bars("treatment", t), bars("control", c)],
        TextBlock {
            paragraphs: vec![vec![
                Run::plain("Aggregated over time: around "),
                Run::link(t.id.clone(), "treatment"),
                Run::plain(format!(
                    " {} {dep} before and {} after; around ",
                    t.n_pre, t.n_post
                )),
                Run::link(c.id.clone(), "control"),
                Run::plain(format!(" {} before and {} after.", c.n_pre, c.n_post)),
            ]],
        },
    );
    st.shot(
        vec![aid("treatment", t), aid("control", c)],
        TextBlock {
            paragraphs: vec![
                para(format!(
                    "Counts alone hide whether {dep} were already rising or falling. The trend splits the {t_ref} days before into two halves of {half} days and subtracts the earlier count from the later one."
                )),
                vec![
                    Run::link(t.id.clone(), "treatment"),
                    Run::plain(format!(": {t_recent} - {t_early} = {}. ", t.trend)),
                    Run::link(c.id.clone(), "control"),
                    Run::plain(format!(": {c_recent} - {c_early} = {}.", c.trend)),
                ],
            ],
        },
    );
    st.shot(
        vec![mark("badge-valid", MarkKind::Annotation, Some("highlight"))
            .label("valid pair")
            .prop(
                "trend_bin",
                json!(ctx
                    .trend_bins
                    .table
                    .iter()
                    .find(|r| r.half_width_days == t_ref)
                    .map(|r| r.treatment.trend_bin)),
            )],
        TextBlock {
            paragraphs: vec![vec![
                Run::plain(
                    "Both trends fall into the same trend bin, so the two interventions are ",
                ),
                Run::link("similar enough to compare", "highlight"),
                Run::plain("."),
            ]],
        },
    );
    st.shot(
        vec![
            mark("window-handles", MarkKind::WindowHandles, Some("highlight"))
                .prop("min", json!(2))
                .prop("max", json!(t_max))
                .prop("step", json!(2))
                .prop("default", json!(t_ref)),
            mark("badge-invalid", MarkKind::Annotation, Some("invalid")).label("too dissimilar"),
        ],
        TextBlock {
            paragraphs: vec![
                vec![
                    Run::plain("Drag the "),
                    Run::link("handles", "highlight"),
                    Run::plain(format!(
                        " to change the temporal window between 2 and {t_max} days and watch the counts and trends change."
                    )),
                ],
                vec![
                    Run::plain("When the two trends fall into different bins, the pair is "),
                    Run::link("too dissimilar to compare", "invalid"),
                    Run::plain(format!(
                        "; this happens for {n_invalid} of the {} window sizes.",
                        ctx.trend_bins.drag_range.len()
                    )),
                ],
            ],
        },
    );

    Ok(Scene {
        id: SceneId::Trend,
        title: "The trend before the intervention".into(),
        summary: format!(
            "Problem: {dep} may already be increasing or decreasing before an intervention. Approach: measure the trend over the two halves of the window before it."
        ),
        shots: st.finish(),
        interaction: Interaction::TemporalWindowDrag,
        advanced_summary: None,
    })
}

/// Scene 3: one histogram pair per matching variable.
pub fn build_scene_matching(ctx: &SceneContext) -> Result<Scene, StoryError> {
    let table = &ctx.covariate_table;
    let n_t = ctx.ds.count_arm(Arm::Treatment);
    let n_c = ctx.ds.count_arm(Arm::Control);
    let hist_pair = |v: &VariableColumn| {
        ["treatment", "control"]
            .into_iter()
            .map(|arm| {
                mark(
                    format!("hist-{}-{arm}", v.name),
                    MarkKind::Histogram,
                    Some(arm),
                )
                .label(v.name.clone())
                .prop("variable", json!(v.name))
                .prop("arm", json!(arm))
                .prop("edges", json!(v.edges))
            })
            .collect::<Vec<_>>()
    };
    let user: Vec<Mark> = table
        .variables
        .iter()
        .filter(|v| v.source == VariableSource::Covariate)
        .flat_map(hist_pair)
        .collect();
    let derived: Vec<Mark> = table
        .variables
        .iter()
        .filter(|v| v.source != VariableSource::Covariate)
        .flat_map(hist_pair)
        .collect();
    let derived_names: Vec<&str> = table
        .variables
        .iter()
        .filter(|v| v.source != VariableSource::Covariate)
        .map(|v| v.name.as_str())
        .collect();

    let mut st = Stager::new("matching");
    let first_text = if user.is_empty() {
        TextBlock::single(vec![Run::plain(
            "This data set provides no matching variables of its own; only the ones derived from the events are used.",
        )])
    } else {
        TextBlock {
            paragraphs: vec![
                vec![
                    Run::plain("Each pair of histograms shows how the "),
                    Run::link(ctx.treatment_label(), "treatment"),
                    Run::plain(" and the "),
                    Run::link(ctx.control_label(), "control"),
                    Run::plain(
                        " are distributed over one matching variable that comes with the data.",
                    ),
                ],
                para("Chart titles are the variable names in the data set."),
            ],
        }
    };
    let first_marks = if user.is_empty() {
        vec![mark("note-no-covariates", MarkKind::Annotation, None).transient()]
    } else {
        user
    };
    st.shot(first_marks, first_text);
    st.shot(
        derived,
        TextBlock::single(vec![Run::plain(format!(
            "The events themselves add {}: {}. They are computed for every intervention at the {} km / {} day window.",
            if derived_names.len() == 1 { "one more matching variable" } else { "more matching variables" },
            derived_names.join(" and "),
            ctx.radius(),
            ctx.reference.half_width_days
        ))]),
    );
    st.shot(
        vec![
            mark("toggle-matched", MarkKind::Toggle, Some("highlight")).label("matched only"),
            mark("matched-counts", MarkKind::Annotation, Some("highlight"))
                .transient()
                .prop("m_t", json!(table.m_t))
                .prop("m_c", json!(table.m_c)),
        ],
        TextBlock {
            paragraphs: vec![
                para(format!(
                    "Only interventions that share the same bin on all {} variables can be compared.",
                    table.variables.len()
                )),
                vec![
                    Run::plain(format!("Here, {} of {n_t} ", table.m_t)),
                    Run::link(ctx.treatment_label(), "treatment"),
                    Run::plain(format!(" and {} of {n_c} ", table.m_c)),
                    Run::link(ctx.control_label(), "control"),
                    Run::plain(" are "),
                    Run::link("matched", "highlight"),
                    Run::plain("."),
                ],
            ],
        },
    );
    st.shot(
        vec![mark("filters", MarkKind::Filter, Some("highlight"))
            .prop("variables", json!(table.variables.iter().map(|v| &v.name).collect::<Vec<_>>()))],
        TextBlock {
            paragraphs: vec![
                vec![
                    Run::plain("Use the "),
                    Run::link("toggle", "highlight"),
                    Run::plain(" to show only matched events, and filter any histogram to remove the events that do not pass from all histograms."),
                ],
                para("The more matching variables are included, the fewer interventions find a partner."),
            ],
        },
    );

    Ok(Scene {
        id: SceneId::Matching,
        title: "Matching similar interventions".into(),
        summary: format!(
            "Problem: {} and {} may take place under different conditions. Approach: compare only interventions that agree on every matching variable.",
            ctx.treatment_label(),
            ctx.control_label()
        ),
        shots: st.finish(),
        interaction: Interaction::HistogramFilter,
        advanced_summary: None,
    })
}

/// Scene 4: heatmap of effects across the window grid.
pub fn build_scene_results(ctx: &SceneContext) -> Result<Scene, StoryError> {
    let hm = &ctx.heatmap;
    let dep = ctx.dependent_label();
    let all_degenerate = hm.cells.iter().all(|c| c.degenerate);
    let n_significant = hm
        .cells
        .iter()
        .filter(|c| !c.degenerate && c.p_value < 0.05)
        .count();

    let mut st = Stager::new("results");
    st.shot(
        vec![
            mark("heatmap", MarkKind::Heatmap, None)
                .prop("rows", json!(hm.radii.len()))
                .prop("columns", json!(hm.half_widths.len())),
            mark("legend-positive", MarkKind::Legend, Some("positive"))
                .prop("domain_max", json!(hm.color_domain[1])),
            mark("legend-negative", MarkKind::Legend, Some("negative"))
                .prop("domain_min", json!(hm.color_domain[0])),
        ],
        TextBlock {
            paragraphs: vec![
                para(format!(
                    "The whole analysis was repeated for {} radii and {} temporal windows; each tile is one of them.",
                    hm.radii.len(),
                    hm.half_widths.len()
                )),
                vec![
                    Run::plain("Color shows the estimated effect: "),
                    Run::link("more", "positive"),
                    Run::plain(" or "),
                    Run::link("fewer", "negative"),
                    Run::plain(format!(" {dep} per intervention after {} than after matched {}.", ctx.treatment_label(), ctx.control_label())),
                ],
            ],
        },
    );
    st.shot(
        vec![mark("legend-size", MarkKind::Legend, None)
            .prop("min_fraction", json!(side_fraction(1.0)))
            .prop("max_fraction", json!(side_fraction(0.0)))],
        TextBlock {
            paragraphs: vec![
                para("Tile size shows significance: the smaller the p-value, the larger the tile."),
                para("Windows without enough variation to estimate an effect stay as empty outlines."),
            ],
        },
    );
    let reference_text = if all_degenerate {
        TextBlock::single(vec![Run::plain(
            "None of the windows has enough matched interventions with varying outcomes to estimate an effect.",
        )])
    } else {
        let mut tb = TextBlock::single(vec![
            Run::plain("The "),
            Run::link("highlighted tile", "highlight"),
            Run::plain(" is the window used in the examples."),
        ]);
        tb.extend(super::text::interpretation_or_fallback(
            ctx.reference_effect(),
            ctx.reference,
            ctx.cfg,
        )?);
        tb
    };
    st.shot(
        vec![
            mark("reference-cell", MarkKind::CellHighlight, Some("highlight"))
                .prop("radius_km", json!(ctx.reference.radius_km))
                .prop("half_width_days", json!(ctx.reference.half_width_days)),
        ],
        reference_text,
    );
    let closing = if all_degenerate {
        para("Hover over a tile to see how many interventions were matched for that window.")
    } else {
        vec![Run::plain(format!(
            "Hover over a tile for the exact effect size and its place on the legend. {} of {} windows show a statistically significant effect (p < 0.05).",
            n_significant,
            hm.cells.len()
        ))]
    };
    st.shot(
        vec![mark("hover-hint", MarkKind::Annotation, None).transient()],
        TextBlock::single(closing),
    );

    Ok(Scene {
        id: SceneId::Results,
        title: "Results across windows".into(),
        summary: "Problem: the effect can depend on how far in space and time events are counted. Approach: repeat the analysis for every combination of radius and temporal window.".into(),
        shots: st.finish(),
        interaction: Interaction::HeatmapHover,
        advanced_summary: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn side_fraction_endpoints() {
        assert_eq!(side_fraction(1.0), 0.4);
        assert_eq!(side_fraction(0.001), 1.0);
        assert_eq!(side_fraction(0.0), 1.0);
        // 0.4 + 0.6 * (-log10 0.05) / 3 = 0.4 + 0.6 * 1.30103 / 3
        assert!((side_fraction(0.05) - 0.660206).abs() < 1e-6);
        assert!((side_fraction(0.05) - 0.66).abs() < 0.001);
    }

    #[test]
    fn stager_carries_persistent_marks_only() {
        let mut st = Stager::new("s");
        st.shot(
            vec![
                mark("a", MarkKind::MapPanel, None),
                mark("hint", MarkKind::Annotation, None).transient(),
            ],
            TextBlock::default(),
        );
        st.shot(
            vec![mark("b", MarkKind::MapPanel, None)],
            TextBlock::default(),
        );
        let shots = st.finish();
        let ids = |s: &Shot| {
            s.view_state
                .iter()
                .map(|m| m.id.clone())
                .collect::<Vec<_>>()
        };
        assert_eq!(ids(&shots[0]), ["a", "hint"]);
        assert_eq!(ids(&shots[1]), ["a", "b"]);
        assert_eq!(shots[1].entering_marks, ["b"]);
        assert!(!shots[0].interactive && shots[1].interactive);
        assert_eq!(shots[0].text.plain_text(), "");
    }
}
