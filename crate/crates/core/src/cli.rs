//! `armd` command-line front end.
//!
//! Exit codes: 0 success, 1 malformed input, 2 I/O failure, 3 optimization
//! budget exhausted above the target error.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dynamics::{trajectory_of_model, TrajectoryRecord, DEFAULT_STEPS, JUMP_EPSILON};
use crate::gates::{
    adiabatic_spectrum, computational_block, cz_error, detect_phase_jumps, dynamical_phase, GateReport,
    PhaseDecomposition, PhaseJump, INPUT_LABELS,
};
use crate::model::{Blockade, GateConfiguration, Mhz, Model};
use crate::optimize::{search, ProblemDocument, ResultDocument};
use crate::pulse::{parse_pulse_file, preset, serialize_pulse_file, PulseSet, Waveform, PRESET_NAMES};
use crate::{dynamics, Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

pub const SPECTRUM_SAMPLES: usize = 257;

#[derive(Debug, Parser)]
#[command(name = "armd", version, about = "Simulate, analyze and synthesize modulated-driving Rydberg blockade gates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Propagate a pulse set and write waveforms, trajectories and the gate report.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search Fourier coefficients for a problem document.
    Optimize {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the document's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Detect phase jumps, split dynamical/geometric phases and trace the adiabatic spectrum.
    Analyze {
        #[command(flatten)]
        source: Source,
        /// Directory written by `simulate` (uses its trajectory CSVs and pulse.json).
        #[arg(long, conflicts_with_all = ["preset", "pulse"])]
        trajectories: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SPECTRUM_SAMPLES)]
        samples: usize,
    },
    /// List, print or export the published coefficient sets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Simulate and analyze a published figure and write a summary table.
    Reproduce {
        figure: String,
        #[arg(long)]
        out: PathBuf,
        /// One-photon detuning in 2π×MHz (required for fig3/fig4).
        #[arg(long, allow_negative_numbers = true)]
        delta: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum PresetAction {
    List,
    Show { name: String },
    Export { name: String, file: PathBuf },
}

#[derive(Debug, Args, Clone)]
pub struct Source {
    #[arg(long, conflicts_with = "pulse")]
    pub preset: Option<String>,
    #[arg(long)]
    pub pulse: Option<PathBuf>,
    /// One-photon detuning in 2π×MHz.
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// Blockade strength in 2π×MHz, or `inf`.
    #[arg(long)]
    pub blockade: Option<String>,
    #[arg(long, default_value_t = DEFAULT_STEPS)]
    pub steps: usize,
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "{m}"),
            CliError::Io(m) => write!(f, "i/o: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) => CliError::Io(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INPUT
        }
        Err(CliError::Io(msg)) => {
            eprintln!("i/o error: {msg}");
            EXIT_IO
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<i32> {
    match cmd {
        Command::Simulate { source, out } => {
            let (config, pulses) = load(&source)?;
            simulate(&config, &pulses, source.steps, &out)?;
            Ok(EXIT_OK)
        }
        Command::Optimize { problem, out, seed, jobs } => optimize(&problem, &out, seed, jobs),
        Command::Analyze { source, trajectories, out, samples } => {
            match trajectories {
                Some(dir) => {
                    analyze_dir(&dir, &out, samples)?;
                }
                None => {
                    let (config, pulses) = load(&source)?;
                    analyze(&config, &pulses, source.steps, samples, &out)?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::Presets { action } => presets(action),
        Command::Reproduce { figure, out, delta, steps } => {
            reproduce(&figure, &out, delta, steps)?;
            Ok(EXIT_OK)
        }
    }
}

fn load(source: &Source) -> CliResult<(GateConfiguration, PulseSet)> {
    let (mut config, pulses) = match (&source.preset, &source.pulse) {
        (Some(name), None) => preset(name)?,
        (None, Some(path)) => parse_pulse_file(&read(path)?)?,
        _ => return Err(CliError::Input("exactly one of --preset or --pulse is required".into())),
    };
    if let Some(d) = source.delta {
        config.delta = Some(Mhz(d));
    }
    if let Some(b) = &source.blockade {
        config.blockade = parse_blockade(b)?;
    }
    config.validate()?;
    config.check_wiring(&pulses)?;
    if source.steps == 0 {
        return Err(CliError::Input("--steps must be at least 1".into()));
    }
    Ok((config, pulses))
}

fn parse_blockade(s: &str) -> CliResult<Blockade> {
    match s.trim() {
        "inf" | "infinite" => Ok(Blockade::Infinite),
        v => v
            .parse::<f64>()
            .map(|b| Blockade::Finite(Mhz(b)))
            .map_err(|_| CliError::Input(format!("--blockade expects a number in 2π×MHz or 'inf', got '{v}'"))),
    }
}

/// Everything `simulate` produces, for reuse by `reproduce`.
pub struct Simulation {
    pub model: Model,
    pub report: GateReport,
    pub trajectories: Vec<TrajectoryRecord>,
}

pub fn run_simulation(config: &GateConfiguration, pulses: &PulseSet, steps: usize) -> Result<Simulation> {
    let model = Model::new(config)?;
    let u = dynamics::propagate_model(&model, pulses, steps)?;
    let report = cz_error(&computational_block(&u, &model.space));
    let trajectories = model
        .space
        .computational_labels()
        .iter()
        .map(|l| trajectory_of_model(&model, pulses, l, steps))
        .collect::<Result<Vec<_>>>()?;
    Ok(Simulation { model, report, trajectories })
}

fn trajectory_file(input: &str) -> String {
    format!("trajectory_{input}.csv")
}

fn write_waveforms(path: &Path, config: &GateConfiguration, pulses: &PulseSet, times: &[f64]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let roles: Vec<_> = config.scheme.roles().to_vec();
    let mut header = vec!["t_us".to_string()];
    header.extend(roles.iter().map(|r| format!("{r}_2pi_MHz")));
    let csv_io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    w.write_record(&header).map_err(csv_io)?;
    for &t in times {
        let mut row = vec![t.to_string()];
        row.extend(roles.iter().map(|r| (pulses.get(*r).unwrap().eval(t) / TAU).to_string()));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn simulate(config: &GateConfiguration, pulses: &PulseSet, steps: usize, out: &Path) -> CliResult<Simulation> {
    let sim = run_simulation(config, pulses, steps)?;
    create_dir(out)?;
    write(&out.join("pulse.json"), serialize_pulse_file(config, pulses)? + "\n")?;
    write_waveforms(&out.join("waveforms.csv"), config, pulses, &sim.trajectories[0].times)?;
    for (label, tr) in INPUT_LABELS.iter().zip(&sim.trajectories) {
        let path = out.join(trajectory_file(label));
        let f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        tr.write_csv(std::io::BufWriter::new(f))?;
    }
    write(&out.join("report.json"), to_json(&sim.report))?;
    Ok(sim)
}

#[derive(Debug, Serialize)]
struct JumpEntry {
    state: String,
    time: f64,
    jump_size: f64,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum PhaseEntry {
    Ok(PhaseDecomposition),
    Undefined { error: String },
}

/// Summary of an analysis pass.
pub struct Analysis {
    pub jumps: BTreeMap<String, Vec<PhaseJump>>,
    pub phases: BTreeMap<String, std::result::Result<PhaseDecomposition, String>>,
    pub fastness: Option<f64>,
}

fn analysis_outputs(
    trajectories: &[(String, TrajectoryRecord)],
    model: Option<(&Model, &PulseSet)>,
    samples: usize,
    out: &Path,
) -> CliResult<Analysis> {
    create_dir(out)?;
    let mut jumps = BTreeMap::new();
    let mut jump_doc = BTreeMap::new();
    for (input, tr) in trajectories {
        let found = detect_phase_jumps(tr, tr.reference, JUMP_EPSILON);
        jump_doc.insert(
            input.clone(),
            found
                .iter()
                .map(|j| JumpEntry { state: tr.reference_label().to_string(), time: j.time, jump_size: j.jump_size })
                .collect::<Vec<_>>(),
        );
        jumps.insert(input.clone(), found);
    }
    write(&out.join("jumps.json"), to_json(&jump_doc))?;
    let mut phases = BTreeMap::new();
    let mut fastness = None;
    if let Some((model, pulses)) = model {
        let mut doc = BTreeMap::new();
        for (input, tr) in trajectories {
            let d = dynamical_phase(tr, model, pulses).map_err(|e| e.to_string());
            doc.insert(
                input.clone(),
                match &d {
                    Ok(p) => PhaseEntry::Ok(p.clone()),
                    Err(e) => PhaseEntry::Undefined { error: e.clone() },
                },
            );
            phases.insert(input.clone(), d);
        }
        write(&out.join("phases.json"), to_json(&doc))?;
        let spectrum = adiabatic_spectrum(&model.config, pulses, samples)?;
        let path = out.join("spectrum.csv");
        let f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        spectrum.write_csv(std::io::BufWriter::new(f))?;
        fastness = Some(spectrum.fastness);
    }
    Ok(Analysis { jumps, phases, fastness })
}

pub fn analyze(
    config: &GateConfiguration,
    pulses: &PulseSet,
    steps: usize,
    samples: usize,
    out: &Path,
) -> CliResult<Analysis> {
    let model = Model::new(config)?;
    let trajectories = INPUT_LABELS
        .iter()
        .zip(model.space.computational_labels())
        .map(|(input, label)| Ok((input.to_string(), trajectory_of_model(&model, pulses, &label, steps)?)))
        .collect::<Result<Vec<_>>>()?;
    analysis_outputs(&trajectories, Some((&model, pulses)), samples, out)
}

fn analyze_dir(dir: &Path, out: &Path, samples: usize) -> CliResult<Analysis> {
    let mut trajectories = Vec::new();
    for input in INPUT_LABELS {
        let path = dir.join(trajectory_file(input));
        if !path.exists() {
            continue;
        }
        let f = fs::File::open(&path).map_err(|e| io_err(&path, e))?;
        trajectories.push((input.to_string(), TrajectoryRecord::read_csv(f)?));
    }
    if trajectories.is_empty() {
        return Err(CliError::Input(format!("no trajectory_*.csv files in {}", dir.display())));
    }
    let pulse_path = dir.join("pulse.json");
    if pulse_path.exists() {
        let (config, pulses) = parse_pulse_file(&read(&pulse_path)?)?;
        let model = Model::new(&config)?;
        analysis_outputs(&trajectories, Some((&model, &pulses)), samples, out)
    } else {
        analysis_outputs(&trajectories, None, samples, out)
    }
}

fn optimize(problem_path: &Path, out: &Path, seed: Option<u64>, jobs: usize) -> CliResult<i32> {
    let doc = ProblemDocument::parse(&read(problem_path)?)?;
    let (problem, mut settings) = doc.to_problem()?;
    if let Some(s) = seed {
        settings.seed = s;
    }
    settings.jobs = jobs.max(1);
    let result = search(&problem, &settings)?;
    let out_doc = ResultDocument::new(&problem, &result)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write(out, to_json(&out_doc))?;
    eprintln!(
        "best error {:.3e} after {} evaluations ({} restarts)",
        result.report.error, result.evaluations, result.restarts_used
    );
    Ok(if result.reached_target { EXIT_OK } else { EXIT_BUDGET })
}

fn presets(action: PresetAction) -> CliResult<i32> {
    match action {
        PresetAction::List => {
            println!("{}", PRESET_NAMES.join(" "));
        }
        PresetAction::Show { name } => {
            let (config, pulses) = preset(&name)?;
            println!("scheme {}", config.scheme);
            match config.blockade {
                Blockade::Infinite => println!("blockade infinite"),
                Blockade::Finite(b) => println!("blockade {} (2pi MHz)", b.0),
            }
            println!("duration_us {}", config.duration);
            if config.delta.is_none() && config.scheme == crate::model::Scheme::TwoPhotonTwoQubit {
                println!("delta required (--delta, 2pi MHz)");
            }
            for (role, w) in pulses.iter() {
                match w {
                    Waveform::Modulated { coefficients, .. } => println!(
                        "{role} [{}]",
                        coefficients.iter().map(|a| format!("{a:.2}")).collect::<Vec<_>>().join(", ")
                    ),
                    Waveform::Constant(v) => println!("{role} constant {} (2pi MHz)", v.0),
                }
            }
        }
        PresetAction::Export { name, file } => {
            let (config, pulses) = preset(&name)?;
            write(&file, serialize_pulse_file(&config, &pulses)? + "\n")?;
        }
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
pub struct SummaryRow {
    pub figure: String,
    pub error: f64,
    pub raw_error: f64,
    pub conditional_phase_rad: Option<f64>,
    pub fastness: Option<f64>,
    /// Whether the published "< 1e-4" error claim is met; absent for the
    /// figures whose detuning is not published.
    pub meets_published_error: Option<bool>,
}

#[derive(Debug, Serialize)]
struct Provenance {
    figure: String,
    scheme: String,
    #[serde(rename = "delta_2pi_MHz")]
    delta_2pi_mhz: Option<f64>,
    delta_source: &'static str,
    blockade: String,
    steps: usize,
    spectrum_samples: usize,
    tool_version: &'static str,
}

pub fn reproduce(figure: &str, out: &Path, delta: Option<f64>, steps: usize) -> CliResult<SummaryRow> {
    let (mut config, pulses) = preset(figure)?;
    let needs_delta = config.delta.is_none() && config.scheme == crate::model::Scheme::TwoPhotonTwoQubit;
    if let Some(d) = delta {
        config.delta = Some(Mhz(d));
    }
    if needs_delta && delta.is_none() {
        return Err(CliError::Input(format!(
            "{figure} needs the one-photon detuning: pass --delta <2pi MHz> (the value is not part of the preset)"
        )));
    }
    if steps == 0 {
        return Err(CliError::Input("--steps must be at least 1".into()));
    }
    let sim = simulate(&config, &pulses, steps, out)?;
    let trajectories: Vec<(String, TrajectoryRecord)> =
        INPUT_LABELS.iter().map(|l| l.to_string()).zip(sim.trajectories.iter().cloned()).collect();
    let analysis = analysis_outputs(&trajectories, Some((&sim.model, &pulses)), SPECTRUM_SAMPLES, out)?;
    let row = SummaryRow {
        figure: figure.to_string(),
        error: sim.report.error,
        raw_error: 1.0 - sim.report.raw_fidelity,
        conditional_phase_rad: sim.report.conditional_phase,
        fastness: analysis.fastness,
        meets_published_error: (!needs_delta).then_some(sim.report.error < 1e-4),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(&row).map_err(|e| CliError::Io(e.to_string()))?;
    let table = String::from_utf8(w.into_inner().map_err(|e| CliError::Io(e.to_string()))?)
        .expect("csv output is utf-8");
    write(&out.join("summary.csv"), &table)?;
    write(&out.join("summary.json"), to_json(&row))?;
    let provenance = Provenance {
        figure: figure.to_string(),
        scheme: config.scheme.to_string(),
        delta_2pi_mhz: config.delta.map(|d| d.0),
        delta_source: if needs_delta { "user (--delta)" } else { "not used" },
        blockade: match config.blockade {
            Blockade::Infinite => "infinite".into(),
            Blockade::Finite(b) => format!("{} (2pi MHz)", b.0),
        },
        steps,
        spectrum_samples: SPECTRUM_SAMPLES,
        tool_version: env!("CARGO_PKG_VERSION"),
    };
    write(&out.join("provenance.json"), to_json(&provenance))?;
    print!("{table}");
    Ok(row)
}
