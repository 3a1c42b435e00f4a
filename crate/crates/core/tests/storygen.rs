mod common;

use common::{demo_run, ea_config, oracle_km};
use serde_json::Value;
use wakestory::estimation::EffectEstimate;
use wakestory::matching::{PRE_LEVEL_VAR, TREND_VAR};
use wakestory::storygen::{
    build_bundle, check_bundle, parse_bundle, serialize_bundle, IntegrityError, MarkKind, SceneId,
    StoryBundle, BUNDLE_SCHEMA_V1, INSUFFICIENT_VARIATION,
};
use wakestory::ScenarioConfig;

fn demo_bundle(seed: u64, cfg: &ScenarioConfig) -> StoryBundle {
    let run = demo_run(seed);
    build_bundle(&run.ds, &run.analysis, &run.actors, cfg).unwrap()
}

fn schema_errors(bytes: &[u8]) -> Vec<String> {
    let schema: Value = serde_json::from_str(BUNDLE_SCHEMA_V1).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let instance: Value = serde_json::from_slice(bytes).unwrap();
    validator
        .iter_errors(&instance)
        .map(|e| format!("{} at {}", e, e.instance_path))
        .collect()
}

#[test]
fn bundle_validates_against_schema_and_round_trips() {
    for cfg in [
        ea_config(),
        ScenarioConfig::from_json(include_bytes!("../../../scenarios/patrols.json")).unwrap(),
        ScenarioConfig::from_json(include_bytes!("../../../scenarios/minigrids.json")).unwrap(),
    ] {
        let b = demo_bundle(1, &cfg);
        let bytes = serialize_bundle(&b);
        assert_eq!(schema_errors(&bytes), Vec::<String>::new());
        let back = parse_bundle(&bytes).unwrap();
        assert_eq!(serialize_bundle(&back), bytes);
        check_bundle(&back).unwrap();
    }
}

#[test]
fn bundle_is_byte_identical_across_runs() {
    let cfg = ea_config();
    assert_eq!(
        serialize_bundle(&demo_bundle(3, &cfg)),
        serialize_bundle(&demo_bundle(3, &cfg))
    );
}

#[test]
fn intro_and_scene_layout() {
    let b = demo_bundle(1, &ea_config());
    assert_eq!(
        b.intro.hook,
        "What is the impact of aid projects excluding parts of a community on insurgent activities in Afghanistan?"
    );
    assert_eq!(
        b.scenes.iter().map(|s| s.id).collect::<Vec<_>>(),
        SceneId::ORDER
    );
    assert_eq!(
        b.intro.outline,
        b.scenes
            .iter()
            .map(|s| s.summary.clone())
            .collect::<Vec<_>>()
    );
    assert_eq!(
        b.scenes.iter().map(|s| s.shots.len()).collect::<Vec<_>>(),
        [5, 4, 4, 4]
    );
    let last = b.scenes[0].shots.last().unwrap();
    let panels = last
        .view_state
        .iter()
        .filter(|m| m.kind == MarkKind::MapPanel)
        .count();
    assert_eq!(panels, 6);
    for s in &b.scenes {
        let first = &s.shots[0];
        assert!(first.view_state.len() < s.shots.last().unwrap().view_state.len());
        assert!(s.advanced_summary.is_none());
    }
    assert_eq!(
        b.resolution
            .download_refs
            .iter()
            .map(|d| d.path.as_str())
            .collect::<Vec<_>>(),
        ["results.csv", "results.json"]
    );
}

#[test]
fn actor_slices_agree_with_wake_counts() {
    let run = demo_run(2);
    let b = build_bundle(&run.ds, &run.analysis, &run.actors, &ea_config()).unwrap();
    let s = &b.data.actor_slices;
    let r = b.data.reference_window;
    let t_ref = i64::from(r.half_width_days);
    for slice in [&s.treatment, &s.control] {
        let iv = run.ds.intervention(&slice.id).unwrap();
        let inside = |pre: bool| {
            slice
                .events
                .iter()
                .filter(|e| {
                    let near = oracle_km(iv.loc.lon, iv.loc.lat, e.lon, e.lat) <= r.radius_km;
                    let when = if pre {
                        (-t_ref..=-1).contains(&e.offset)
                    } else {
                        (1..=t_ref).contains(&e.offset)
                    };
                    near && when
                })
                .count() as u32
        };
        assert_eq!(inside(true), slice.n_pre);
        assert_eq!(inside(false), slice.n_post);
        for e in &slice.events {
            assert!(e.distance_km <= s.slice_radius_km);
            assert!(e.offset.abs() <= i64::from(s.slice_half_width_days));
        }
    }
    assert_eq!(s.treatment.id, run.actors.treatment_id);
    assert_eq!(s.control.id, run.actors.control_id);
}

fn bin_oracle(edges: &[f64], v: f64) -> u32 {
    let last = edges.len().saturating_sub(2);
    (0..=last).rev().find(|&i| v >= edges[i]).unwrap_or(0) as u32
}

#[test]
fn trend_table_matches_reference_wakes_and_bins() {
    let run = demo_run(4);
    let b = build_bundle(&run.ds, &run.analysis, &run.actors, &ea_config()).unwrap();
    let tb = &b.data.trend_bins;
    let r = b.data.reference_window;
    let t_max = run.analysis.grid.max_half_width();
    assert_eq!(
        tb.drag_range,
        (1..=t_max / 2).map(|k| 2 * k).collect::<Vec<_>>()
    );
    assert_eq!(tb.default_half_width, r.half_width_days);
    let row = tb
        .table
        .iter()
        .find(|row| row.half_width_days == r.half_width_days)
        .unwrap();
    assert_eq!(row.treatment.n_pre, b.data.actor_slices.treatment.n_pre);
    assert_eq!(row.treatment.trend, b.data.actor_slices.treatment.trend);
    assert_eq!(row.control.n_post, b.data.actor_slices.control.n_post);
    assert!(
        row.valid,
        "actors share a stratum, so their trend bins agree at the reference window"
    );
    for row in &tb.table {
        let t = i64::from(row.half_width_days);
        let trend = |offs: &[i64]| {
            offs.iter().filter(|&&o| (-t / 2..=-1).contains(&o)).count() as i64
                - offs
                    .iter()
                    .filter(|&&o| (-t..=-t / 2 - 1).contains(&o))
                    .count() as i64
        };
        assert_eq!(row.treatment.trend, trend(&tb.treatment_offsets));
        assert_eq!(row.control.trend, trend(&tb.control_offsets));
        let (bt, bc) = (
            bin_oracle(&tb.edges, row.treatment.trend as f64),
            bin_oracle(&tb.edges, row.control.trend as f64),
        );
        assert_eq!((row.treatment.trend_bin, row.control.trend_bin), (bt, bc));
        assert_eq!(row.valid, bt == bc);
    }
}

#[test]
fn histograms_use_verbatim_variable_names() {
    let run = demo_run(1);
    let b = build_bundle(&run.ds, &run.analysis, &run.actors, &ea_config()).unwrap();
    let last = b.scenes[2].shots.last().unwrap();
    let mut titles: Vec<&str> = last
        .view_state
        .iter()
        .filter(|m| m.kind == MarkKind::Histogram)
        .filter_map(|m| m.label.as_deref())
        .collect();
    titles.dedup();
    let mut expected: Vec<&str> = run.ds.schema.names().collect();
    expected.extend([PRE_LEVEL_VAR, TREND_VAR]);
    assert_eq!(titles, expected);
    let names: Vec<_> = b
        .data
        .covariate_table
        .variables
        .iter()
        .map(|v| v.name.as_str())
        .collect();
    assert_eq!(names, expected);
}

#[test]
fn heatmap_encodes_every_cell() {
    let run = demo_run(1);
    let b = build_bundle(&run.ds, &run.analysis, &run.actors, &ea_config()).unwrap();
    let hm = &b.data.heatmap;
    assert_eq!(hm.cells.len(), hm.radii.len() * hm.half_widths.len());
    let m = hm
        .cells
        .iter()
        .filter(|c| !c.degenerate)
        .map(|c| c.estimate.abs())
        .fold(0.0, f64::max);
    assert_eq!(hm.color_domain, [-m, m]);
    for c in &hm.cells {
        let p = c.p_value.max(1e-6);
        let expect = 0.4 + 0.6 * (-p.log10() / 3.0).clamp(0.0, 1.0);
        assert!((c.side_fraction - expect).abs() < 1e-12);
        let cell = run
            .analysis
            .results
            .cells
            .iter()
            .find(|g| g.radius_km == c.radius_km && g.half_width_days == c.half_width_days)
            .unwrap();
        assert_eq!(c.estimate, cell.effect.estimate);
    }
}

#[test]
fn all_degenerate_grid_says_so() {
    let mut run = demo_run(1);
    for c in &mut run.analysis.results.cells {
        c.effect = EffectEstimate::empty(0, c.effect.n_matched_c);
    }
    let b = build_bundle(&run.ds, &run.analysis, &run.actors, &ea_config()).unwrap();
    assert_eq!(b.data.heatmap.color_domain, [0.0, 0.0]);
    let text: String = b.scenes[3]
        .shots
        .iter()
        .map(|s| s.text.plain_text())
        .collect();
    assert!(text.contains("None of the windows"));
    assert!(b
        .resolution
        .summary
        .plain_text()
        .contains(INSUFFICIENT_VARIATION));
}

#[test]
fn integrity_violations_are_caught() {
    let good = demo_bundle(1, &ea_config());
    check_bundle(&good).unwrap();

    let mut b = good.clone();
    b.scenes.swap(1, 2);
    assert_eq!(check_bundle(&b), Err(IntegrityError::SceneOrder));

    let mut b = good.clone();
    b.scenes[0].shots[0].interactive = true;
    assert!(matches!(
        check_bundle(&b),
        Err(IntegrityError::Interactive(_))
    ));

    let mut b = good.clone();
    let gone = b.scenes[0].shots[0].view_state[0].id.clone();
    b.scenes[0].shots[1].view_state.retain(|m| m.id != gone);
    assert!(matches!(
        check_bundle(&b),
        Err(IntegrityError::Staging { .. })
    ));

    let mut b = good.clone();
    b.scenes[1].shots[2].entering_marks.clear();
    assert!(matches!(
        check_bundle(&b),
        Err(IntegrityError::EnteringMarks(_))
    ));

    let mut b = good.clone();
    b.scenes[0].shots[0].text.paragraphs[0][0].role = Some("sparkle".into());
    assert!(matches!(
        check_bundle(&b),
        Err(IntegrityError::UnknownRole { .. })
    ));

    let mut b = good.clone();
    b.scenes[0].shots[0].text.paragraphs[0][0].role = Some("negative".into());
    assert!(matches!(
        check_bundle(&b),
        Err(IntegrityError::UnlinkedRole { .. })
    ));

    let mut b = good.clone();
    b.theme.remove("invalid");
    assert!(matches!(
        check_bundle(&b),
        Err(IntegrityError::MissingThemeRole(_))
    ));

    let mut b = good.clone();
    b.intro
        .background
        .push_str(" See https://example.org/data.");
    assert!(matches!(
        check_bundle(&b),
        Err(IntegrityError::ExternalReference { .. })
    ));

    let mut b = good.clone();
    b.resolution
        .references
        .push("https://example.org/report".into());
    check_bundle(&b).unwrap();

    let mut b = good.clone();
    b.resolution.download_refs[0].path = "/tmp/results.csv".into();
    assert!(matches!(
        check_bundle(&b),
        Err(IntegrityError::DownloadPath(_))
    ));

    let mut b = good;
    b.resolution.summary.paragraphs[0][0].role = Some("positive".into());
    assert_eq!(check_bundle(&b), Err(IntegrityError::ResolutionRoles));
}

#[test]
fn schema_rejects_unknown_fields() {
    let b = demo_bundle(1, &ea_config());
    let mut v: Value = serde_json::from_slice(&serialize_bundle(&b)).unwrap();
    v["scenes"][0]["shots"][0]["sparkle"] = Value::Bool(true);
    assert!(!schema_errors(&serde_json::to_vec(&v).unwrap()).is_empty());
    assert!(parse_bundle(&serde_json::to_vec(&v).unwrap()).is_err());
}

#[test]
fn four_binary_covariates_give_six_histogram_pairs() {
    use wakestory::actors::{reference_window, select_actors};
    use wakestory::estimation::run_analysis;
    use wakestory::matching::MatchOptions;
    use wakestory::synth::SynthConfig;

    let grid = common::demo_grid();
    let r = reference_window(&grid);
    let names = ["road_nearby", "pashtun_region", "hazara_region", "is_urban"];
    let bundle = (0..20)
        .find_map(|seed| {
            let cfg = SynthConfig {
                binary_covariates: names.iter().map(|s| s.to_string()).collect(),
                n_treatment: 100,
                n_control: 100,
                ..SynthConfig::story_demo(seed)
            };
            let ds = common::synth_dataset(&cfg, &grid);
            let a = run_analysis(&ds, &grid, &MatchOptions::standard()).unwrap();
            let actors =
                select_actors(&ds, &a.wakes[&r], &a.matches[&r], &Default::default()).ok()?;
            Some(build_bundle(&ds, &a, &actors, &ea_config()).unwrap())
        })
        .expect("some seed yields actors");
    let last = bundle.scenes[2].shots.last().unwrap();
    let hist: Vec<_> = last
        .view_state
        .iter()
        .filter(|m| m.kind == MarkKind::Histogram)
        .collect();
    assert_eq!(hist.len(), 12);
    let binary = bundle
        .data
        .covariate_table
        .variables
        .iter()
        .filter(|v| v.kind == wakestory::dataset::CovariateKind::Binary)
        .map(|v| v.name.as_str())
        .collect::<Vec<_>>();
    assert_eq!(binary, names);
}

#[test]
fn covariate_table_is_consistent_with_matching() {
    use wakestory::dataset::Arm;
    let b = demo_bundle(5, &ea_config());
    let t = &b.data.covariate_table;
    let count = |arm: Arm| t.rows.iter().filter(|r| r.arm == arm && r.matched).count();
    assert_eq!((count(Arm::Treatment), count(Arm::Control)), (t.m_t, t.m_c));
    let matched: Vec<_> = t.rows.iter().filter(|r| r.matched).collect();
    for a in &matched {
        let partners = matched.iter().filter(|b| b.signature == a.signature);
        assert!(partners.clone().any(|b| b.arm != a.arm));
    }
    for v in &t.variables {
        assert!(v.edges.windows(2).all(|w| w[0] <= w[1]), "{}", v.name);
    }
    assert!(b.resolution.summary.plain_text().starts_with("Method:"));
}

mod props {
    use super::*;
    use proptest::prelude::*;
    use wakestory::actors::{reference_window, select_actors};
    use wakestory::estimation::run_analysis;
    use wakestory::matching::MatchOptions;
    use wakestory::synth::SynthConfig;
    use wakestory::wake::WindowGrid;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        /// Any bundle the pipeline produces passes the integrity checks, the
        /// schema, and serializes to a fixed point.
        #[test]
        fn generated_bundles_are_well_formed(
            seed in 0u64..10_000,
            radii in proptest::sample::subsequence(vec![1.0, 2.5, 5.0, 8.0, 15.0], 1..=5),
            halves in proptest::sample::subsequence(vec![2u32, 6, 10, 14, 20, 30], 1..=6),
            n_sites in 20usize..80,
        ) {
            let grid = WindowGrid::new(radii, halves).unwrap();
            let cfg = SynthConfig { n_treatment: n_sites, n_control: n_sites, ..SynthConfig::story_demo(seed) };
            let ds = common::synth_dataset(&cfg, &grid);
            let a = run_analysis(&ds, &grid, &MatchOptions::standard()).unwrap();
            let r = reference_window(&grid);
            if let Ok(actors) = select_actors(&ds, &a.wakes[&r], &a.matches[&r], &Default::default()) {
                let b = build_bundle(&ds, &a, &actors, &ea_config()).unwrap();
                for scene in &b.scenes {
                    for pair in scene.shots.windows(2) {
                        for m in pair[0].view_state.iter().filter(|m| m.persistent) {
                            prop_assert!(pair[1].view_state.iter().any(|n| n.id == m.id));
                        }
                    }
                    prop_assert!(scene.shots.last().unwrap().interactive);
                }
                let bytes = serialize_bundle(&b);
                prop_assert!(schema_errors(&bytes).is_empty());
                prop_assert_eq!(serialize_bundle(&parse_bundle(&bytes).unwrap()), bytes);
                prop_assert_eq!(&b.data.heatmap.color_domain[0], &-b.data.heatmap.color_domain[1]);
            }
        }
    }
}
