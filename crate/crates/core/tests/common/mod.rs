#![allow(dead_code)]

use wakestory::actors::{reference_window, select_actors, ActorPair};
use wakestory::dataset::{validate_dataset, Dataset, ScenarioConfig};
use wakestory::estimation::{run_analysis, Analysis};
use wakestory::matching::MatchOptions;
use wakestory::synth::{generate, SynthConfig};
use wakestory::wake::WindowGrid;

pub fn ea_config() -> ScenarioConfig {
    ScenarioConfig::from_json(include_bytes!("../../../../scenarios/ea.json")).unwrap()
}

pub fn demo_grid() -> WindowGrid {
    WindowGrid::new(vec![2.5, 5.0, 10.0, 20.0], vec![4, 10, 20, 30]).unwrap()
}

pub fn synth_dataset(cfg: &SynthConfig, grid: &WindowGrid) -> Dataset {
    let d = generate(cfg);
    validate_dataset(d.interventions, d.dependents, d.schema, grid)
        .unwrap()
        .0
}

pub struct Run {
    pub ds: Dataset,
    pub analysis: Analysis,
    pub actors: ActorPair,
}

pub fn demo_run(seed: u64) -> Run {
    let grid = demo_grid();
    let ds = synth_dataset(&SynthConfig::story_demo(seed), &grid);
    let analysis = run_analysis(&ds, &grid, &MatchOptions::standard()).unwrap();
    let r = reference_window(&grid);
    let actors = select_actors(
        &ds,
        &analysis.wakes[&r],
        &analysis.matches[&r],
        &Default::default(),
    )
    .unwrap();
    Run {
        ds,
        analysis,
        actors,
    }
}

/// Great-circle distance written out independently of the library.
pub fn oracle_km(lon1: f64, lat1: f64, lon2: f64, lat2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * 6371.0088 * h.sqrt().min(1.0).asin()
}
