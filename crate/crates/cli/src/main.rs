use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::json;

use wakestory::actors::{reference_window, select_actors, ActorError};
use wakestory::canonical::to_canonical_string;
use wakestory::dataset::{
    apply_kind_overrides, parse_dependent, parse_interventions, validate_dataset,
    write_dependent_csv, write_interventions_csv, ConfigError, Dataset, DatasetError, ParseError,
    ScenarioConfig, ValidationWarning,
};
use wakestory::estimation::{run_analysis, Analysis};
use wakestory::matching::MatchOptions;
use wakestory::storygen::{build_bundle, serialize_bundle, StoryError, RESULTS_CSV, RESULTS_JSON};
use wakestory::synth::{generate, SynthConfig};
use wakestory::wake::{GridError, WindowGrid};

const EXIT_IO: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NO_ACTORS: u8 = 3;

const TREND_FIXTURE: &str = "trend_fixture.json";

#[derive(Parser)]
#[command(
    name = "wakestory",
    version,
    about = "Matched wake analysis and story bundles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check input files and the window grid.
    Validate(InputArgs),
    /// Sweep the window grid and write results.csv / results.json.
    Analyze(OutArgs),
    /// Print the selected actor pair and its constraint report.
    Actors(InputArgs),
    /// Write bundle.json plus the result files it links to.
    Story(OutArgs),
    /// Write a synthetic interventions.csv / dependent.csv pair.
    Synth(SynthArgs),
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    interventions: PathBuf,
    #[arg(long)]
    dependent: PathBuf,
    /// Scenario config (JSON); supplies labels, covariate kinds and cutpoints.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Radii in km, comma separated and increasing.
    #[arg(long, value_delimiter = ',', default_values_t = [2.5, 5.0, 10.0, 20.0])]
    radii: Vec<f64>,
    /// Temporal half-widths in days; even, comma separated and increasing.
    #[arg(long, value_delimiter = ',', default_values_t = [4, 10, 20, 30])]
    halfwidths: Vec<u32>,
    /// Machine-readable output on stdout.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct OutArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Planted,
    Null,
    Demo,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Preset::Demo)]
    preset: Preset,
}

fn classify(e: &anyhow::Error) -> (u8, &'static str) {
    if let Some(a) = e.downcast_ref::<ActorError>() {
        let ActorError::NoActors(_) = a;
        return (EXIT_NO_ACTORS, "NoActors");
    }
    if let Some(p) = e.downcast_ref::<ParseError>() {
        return (EXIT_VALIDATION, p.code());
    }
    if let Some(d) = e.downcast_ref::<DatasetError>() {
        return (EXIT_VALIDATION, d.code());
    }
    if let Some(g) = e.downcast_ref::<GridError>() {
        return (EXIT_VALIDATION, g.code());
    }
    if let Some(c) = e.downcast_ref::<ConfigError>() {
        return (EXIT_VALIDATION, c.code());
    }
    if let Some(s) = e.downcast_ref::<StoryError>() {
        return match s {
            StoryError::Config(c) => (EXIT_VALIDATION, c.code()),
            _ => (EXIT_VALIDATION, "StoryError"),
        };
    }
    (EXIT_IO, "Io")
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

struct Loaded {
    ds: Dataset,
    warnings: Vec<ValidationWarning>,
    grid: WindowGrid,
    scenario: Option<ScenarioConfig>,
}

fn load(args: &InputArgs) -> Result<Loaded> {
    let iv_bytes = read(&args.interventions)?;
    let dep_bytes = read(&args.dependent)?;
    let scenario = match &args.scenario {
        Some(p) => {
            let cfg = ScenarioConfig::from_json(&read(p)?)?;
            cfg.validate()?;
            Some(cfg)
        }
        None => None,
    };
    let grid = WindowGrid::new(args.radii.clone(), args.halfwidths.clone())?;
    let (interventions, mut schema) = parse_interventions(&iv_bytes)?;
    let dependents = parse_dependent(&dep_bytes)?;
    if let Some(cfg) = &scenario {
        apply_kind_overrides(&mut schema, &interventions, &cfg.covariate_kinds)?;
    }
    let (ds, warnings) = validate_dataset(interventions, dependents, schema, &grid)?;
    Ok(Loaded {
        ds,
        warnings,
        grid,
        scenario,
    })
}

fn analyze(l: &Loaded) -> Result<Analysis> {
    let opts = l
        .scenario
        .as_ref()
        .map(MatchOptions::from)
        .unwrap_or_else(MatchOptions::standard);
    Ok(run_analysis(&l.ds, &l.grid, &opts)?)
}

fn print_warnings(warnings: &[ValidationWarning]) {
    for w in warnings {
        match w {
            ValidationWarning::Truncated { intervention_id } => {
                eprintln!("warning: {intervention_id}: widest window leaves the data extent")
            }
        }
    }
}

fn cmd_validate(args: &InputArgs) -> Result<()> {
    match load(args) {
        Ok(l) => {
            if args.json {
                let report = json!({
                    "ok": true,
                    "interventions": l.ds.interventions.len(),
                    "dependents": l.ds.dependents.len(),
                    "covariates": l.ds.schema.names().collect::<Vec<_>>(),
                    "warnings": l.warnings,
                });
                println!("{}", to_canonical_string(&report)?);
            } else {
                print_warnings(&l.warnings);
                println!(
                    "ok: {} interventions, {} dependent events, {} warnings",
                    l.ds.interventions.len(),
                    l.ds.dependents.len(),
                    l.warnings.len()
                );
            }
            Ok(())
        }
        Err(e) => {
            let (code, name) = classify(&e);
            if args.json && code == EXIT_VALIDATION {
                let report = json!({
                    "ok": false,
                    "error": {"code": name, "message": e.to_string()},
                });
                println!("{}", to_canonical_string(&report)?);
            }
            Err(e)
        }
    }
}

fn write_results(out: &Path, a: &Analysis) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(out, RESULTS_CSV, a.results.to_csv().as_bytes())?;
    write(out, RESULTS_JSON, &a.results.to_json_bytes())
}

fn cmd_analyze(args: &OutArgs) -> Result<()> {
    let l = load(&args.input)?;
    print_warnings(&l.warnings);
    let a = analyze(&l)?;
    write_results(&args.out, &a)?;
    if args.input.json {
        println!("{}", String::from_utf8(a.results.to_json_bytes())?);
    } else {
        let estimable = a
            .results
            .cells
            .iter()
            .filter(|c| !c.effect.degenerate)
            .count();
        println!(
            "wrote {} cells ({estimable} estimable) to {}",
            a.results.cells.len(),
            args.out.display()
        );
    }
    Ok(())
}

fn pick_actors(l: &Loaded, a: &Analysis) -> Result<wakestory::ActorPair> {
    let r = reference_window(&l.grid);
    let weights = l
        .scenario
        .as_ref()
        .map(|c| c.actor_weights)
        .unwrap_or_default();
    match select_actors(&l.ds, &a.wakes[&r], &a.matches[&r], &weights) {
        Ok(p) => Ok(p),
        Err(e) => {
            let ActorError::NoActors(report) = &e;
            println!(
                "{}",
                to_canonical_string(&json!({"error": "NoActors", "report": report}))?
            );
            Err(e.into())
        }
    }
}

fn cmd_actors(args: &InputArgs) -> Result<()> {
    let l = load(args)?;
    print_warnings(&l.warnings);
    let a = analyze(&l)?;
    let pair = pick_actors(&l, &a)?;
    println!("{}", to_canonical_string(&pair)?);
    Ok(())
}

fn cmd_story(args: &OutArgs) -> Result<()> {
    let l = load(&args.input)?;
    let Some(cfg) = l.scenario.clone() else {
        Cli::command()
            .error(ErrorKind::MissingRequiredArgument, "story needs --scenario")
            .exit()
    };
    print_warnings(&l.warnings);
    let a = analyze(&l)?;
    let pair = pick_actors(&l, &a)?;
    let bundle = build_bundle(&l.ds, &a, &pair, &cfg)?;
    write_results(&args.out, &a)?;
    write(&args.out, "bundle.json", &serialize_bundle(&bundle))?;
    write(
        &args.out,
        TREND_FIXTURE,
        to_canonical_string(&bundle.data.trend_bins)?.as_bytes(),
    )?;
    if !args.input.json {
        println!(
            "wrote bundle.json for {} / {} to {}",
            pair.treatment_id,
            pair.control_id,
            args.out.display()
        );
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let cfg = match args.preset {
        Preset::Planted => SynthConfig::planted_effect(args.seed),
        Preset::Null => SynthConfig::null(args.seed),
        Preset::Demo => SynthConfig::story_demo(args.seed),
    };
    let d = generate(&cfg);
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write(
        &args.out,
        "interventions.csv",
        write_interventions_csv(&d.interventions, &d.schema).as_bytes(),
    )?;
    write(
        &args.out,
        "dependent.csv",
        write_dependent_csv(&d.dependents).as_bytes(),
    )?;
    println!(
        "wrote {} interventions and {} dependent events to {}",
        d.interventions.len(),
        d.dependents.len(),
        args.out.display()
    );
    Ok(())
}

/// Sizes the global pool from `WAKESTORY_THREADS` (unset or 0: automatic).
fn init_threads() -> Result<()> {
    let n = match std::env::var("WAKESTORY_THREADS") {
        Ok(v) => v.trim().parse::<usize>().unwrap_or_else(|_| {
            Cli::command()
                .error(
                    ErrorKind::InvalidValue,
                    format!("WAKESTORY_THREADS must be a non-negative integer, got `{v}`"),
                )
                .exit()
        }),
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("starting thread pool")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match &cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Actors(a) => cmd_actors(a),
        Command::Story(a) => cmd_story(a),
        Command::Synth(a) => cmd_synth(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, _) = classify(&e);
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
