use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Map, Value};

use simlab_core::cara::TargetKind;
use simlab_core::procedure::{ProcedureId, ProcedureSpec};
use simlab_core::scenario::ScenarioSpec;
use simlab_core::sim::{
    fixed_design_report, reproduce_table, run_study, two_stratum_report, write_csv, write_json,
    PresetTable, StudyOptions, StudySummary,
};
use simlab_core::SimError;

const DEFAULT_SEED: u64 = 1;
const DEFAULT_REPS: usize = 5000;

#[derive(Parser)]
#[command(name = "simlab", version, about = "Simulate sequential treatment-allocation procedures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one procedure on one scenario.
    Run(RunArgs),
    /// Re-run a preset table or the two-stratum fixed-design example.
    Reproduce(ReproduceArgs),
    /// Target proportions and expected failures for fixed strata.
    FixedDesign(FixedDesignArgs),
    /// List procedure ids with their default parameters.
    Procedures,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args)]
struct OutputArgs {
    /// Random seed of the replication streams.
    #[arg(long, env = "SIMLAB_SEED")]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long)]
    workers: Option<usize>,
    /// Output path; `-` writes to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON file with any of the run settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario file, or one of the bundled presets model1, model2, model3.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    procedure: Option<String>,
    /// Procedure parameter override `key=value` (repeatable).
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Table {
    #[value(name = "t7-1")]
    T71,
    #[value(name = "t7-2")]
    T72,
    #[value(name = "t7-3")]
    T73,
    #[value(name = "s7-rules")]
    S7Rules,
}

#[derive(clap::Args)]
struct ReproduceArgs {
    #[arg(value_enum)]
    table: Table,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(clap::Args)]
struct FixedDesignArgs {
    /// Success probabilities `pA,pB` of one stratum (repeatable).
    #[arg(long = "stratum", value_name = "PA,PB", required = true)]
    strata: Vec<String>,
    /// Stratum sizes, one per stratum.
    #[arg(long = "size", value_name = "N", required = true)]
    sizes: Vec<f64>,
    /// Target rules to compare.
    #[arg(long = "rule", value_name = "KIND")]
    rules: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// File equivalent of the `run` flags.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    scenario: Option<String>,
    procedure: Option<String>,
    #[serde(default)]
    params: Map<String, Value>,
    reps: Option<usize>,
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<PathBuf>,
    format: Option<Format>,
}

fn config_error(message: impl Into<String>) -> SimError {
    SimError::Config(message.into())
}

fn exit_code(err: &SimError) -> u8 {
    match err {
        SimError::Config(_)
        | SimError::InvalidParameter(_)
        | SimError::Json(_)
        | SimError::UnsupportedProcedure(_) => 2,
        _ => 1,
    }
}

fn load_scenario(reference: &str) -> Result<ScenarioSpec, SimError> {
    let path = Path::new(reference);
    let scenario = if path.exists() {
        ScenarioSpec::from_path(path)?
    } else if let Ok(preset) = ScenarioSpec::preset(reference) {
        preset
    } else {
        return Err(config_error(format!(
            "scenario '{reference}' is neither a file nor a preset (model1, model2, model3)"
        )));
    };
    scenario.validate()?;
    Ok(scenario)
}

fn infer_format(format: Option<Format>, out: Option<&Path>) -> Format {
    format.unwrap_or_else(|| match out.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some("json") => Format::Json,
        _ => Format::Csv,
    })
}

fn open_output(out: Option<&Path>) -> Result<Box<dyn Write>, SimError> {
    Ok(match out {
        None => Box::new(io::stdout().lock()),
        Some(p) if p.as_os_str() == "-" => Box::new(io::stdout().lock()),
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
    })
}

fn emit(summaries: &[StudySummary], format: Format, out: Option<&Path>) -> Result<(), SimError> {
    let mut w = open_output(out)?;
    match format {
        Format::Csv => write_csv(summaries, &mut w)?,
        Format::Json => write_json(summaries, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

fn emit_json(value: &impl serde::Serialize, out: Option<&Path>) -> Result<(), SimError> {
    let mut w = open_output(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn warn_degenerate(reps: usize) {
    if reps == 1 {
        eprintln!("simlab: warning: reps = 1, standard deviations are reported as 0");
    }
}

fn cmd_run(args: RunArgs) -> Result<(), SimError> {
    let file: RunConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| config_error(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    let scenario_ref = args
        .scenario
        .or(file.scenario)
        .ok_or_else(|| config_error("no scenario given (--scenario)"))?;
    let scenario = load_scenario(&scenario_ref)?;
    let procedure_id = args
        .procedure
        .or(file.procedure)
        .ok_or_else(|| config_error("no procedure given (--procedure)"))?;
    let mut procedure = ProcedureSpec::parse(&procedure_id)?;
    for (k, v) in file.params {
        procedure = procedure.with_param(&k, v);
    }
    for assignment in &args.params {
        procedure = procedure.with_assignment(assignment)?;
    }
    let reps = args.reps.or(file.reps).unwrap_or(DEFAULT_REPS);
    let seed = args.output.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let workers = args.output.workers.or(file.workers);
    let out = args.output.out.or(file.out);
    let format = infer_format(args.output.format.or(file.format), out.as_deref());
    warn_degenerate(reps);
    eprintln!(
        "simlab: {} on {} (n = {}, {} reps, seed {})",
        procedure.id, scenario.name, scenario.n, reps, seed
    );
    let options = StudyOptions {
        workers,
        label: None,
    };
    let summary = run_study(&scenario, &procedure, reps, seed, &options)?;
    emit(&[summary], format, out.as_deref())
}

fn cmd_reproduce(args: ReproduceArgs) -> Result<(), SimError> {
    let out = args.output.out.as_deref();
    let table = match args.table {
        Table::T71 => PresetTable::T71,
        Table::T72 => PresetTable::T72,
        Table::T73 => PresetTable::T73,
        Table::S7Rules => return emit_json(&two_stratum_report()?, out),
    };
    let seed = args.output.seed.unwrap_or(DEFAULT_SEED);
    warn_degenerate(args.reps);
    let rows = reproduce_table(table, args.reps, seed, args.output.workers, |label| {
        eprintln!("simlab: {label} ({} reps, seed {seed})", args.reps)
    })?;
    emit(&rows, infer_format(args.output.format, out), out)
}

fn parse_target(name: &str) -> Result<TargetKind, SimError> {
    TargetKind::ALL
        .into_iter()
        .find(|k| k.name() == name)
        .ok_or_else(|| {
            let valid: Vec<_> = TargetKind::ALL.iter().map(|k| k.name()).collect();
            config_error(format!("unknown rule '{name}'; valid rules: {}", valid.join(", ")))
        })
}

fn cmd_fixed_design(args: FixedDesignArgs) -> Result<(), SimError> {
    let strata = args
        .strata
        .iter()
        .map(|s| {
            let parsed: Option<(f64, f64)> = s
                .split_once(',')
                .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
            parsed.ok_or_else(|| config_error(format!("stratum '{s}' is not of the form pA,pB")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if strata.len() != args.sizes.len() {
        return Err(config_error("give one --size per --stratum"));
    }
    let rules = if args.rules.is_empty() {
        vec![
            TargetKind::Balanced,
            TargetKind::NeymanLogOR,
            TargetKind::FailureOptimalLogOR,
        ]
    } else {
        args.rules
            .iter()
            .map(|r| parse_target(r))
            .collect::<Result<_, _>>()?
    };
    let report = fixed_design_report(&strata, &args.sizes, &rules)
        .map_err(|e| match e {
            SimError::Boundary(m) | SimError::InvalidInput(m) => SimError::InvalidParameter(m),
            other => other,
        })?;
    emit_json(&report, args.out.as_deref())
}

fn cmd_procedures() -> Result<(), SimError> {
    let listing: Map<String, Value> = ProcedureId::ALL
        .iter()
        .map(|id| {
            let spec = ProcedureSpec::new(*id);
            let entry = json!({
                "uses_responses": id.uses_responses(),
                "defaults": Value::Object(spec.resolved_params()),
            });
            (id.as_str().to_string(), entry)
        })
        .collect();
    emit_json(&listing, None)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Reproduce(args) => cmd_reproduce(args),
        Command::FixedDesign(args) => cmd_fixed_design(args),
        Command::Procedures => cmd_procedures(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let record = json!({ "error": { "kind": err.kind(), "message": err.to_string() } });
            eprintln!("{record}");
            ExitCode::from(exit_code(&err))
        }
    }
}
