mod data;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cubefield::interp::{interpolation_sequence, schedule, Space};
use cubefield::mesh::{export_obj, marching_cubes, DEFAULT_ISO};
use cubefield::metrics::{evaluate, format_table, EvalConfig, FieldSource, GroundTruthOracle};
use cubefield::nets::{field_eval_grid, load_checkpoint, save_checkpoint, FieldMode, HyperNetwork};
use cubefield::training::{train_with, write_telemetry, TrainConfig, TrainError, Variant};
use cubefield::voxel::load_binvox;
use serde::Serialize;

use data::{generate, load_dataset, DataKind};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_DIVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "cubefield", version, about = "Hypernetwork occupancy fields: data, training, reconstruction, evaluation")]
struct Cli {
    /// Worker threads for data-parallel stages.
    #[arg(long, global = true, env = "CUBEFIELD_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write procedural binvox shapes and a manifest.
    GenData(GenDataArgs),
    /// Train a hypernetwork on a generated dataset.
    Train(TrainArgs),
    /// Reconstruct one binvox input as an OBJ mesh.
    Reconstruct(ReconstructArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Interpolate between two inputs and write one OBJ per step.
    Interpolate(InterpolateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Point,
    Interval,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Point => Variant::Point,
            VariantArg::Interval => Variant::Interval,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldArg {
    /// Point evaluation at cell centers.
    Point,
    /// Midpoint of each cell's occupancy interval.
    Interval,
    /// Lower end of each cell's occupancy interval.
    IntervalLo,
    /// Upper end of each cell's occupancy interval.
    IntervalHi,
}

impl From<FieldArg> for FieldMode {
    fn from(v: FieldArg) -> Self {
        match v {
            FieldArg::Point => FieldMode::PointAtCenter,
            FieldArg::Interval => FieldMode::IntervalMidpoint,
            FieldArg::IntervalLo => FieldMode::IntervalWorstLo,
            FieldArg::IntervalHi => FieldMode::IntervalWorstHi,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SpaceArg {
    Latent,
    Theta,
}

impl From<SpaceArg> for Space {
    fn from(v: SpaceArg) -> Self {
        match v {
            SpaceArg::Latent => Space::Latent,
            SpaceArg::Theta => Space::Theta,
        }
    }
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    kind: DataKind,
    /// Grid resolution.
    #[arg(long, default_value_t = 32)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// `key = value` file; flags given here take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint path; telemetry and the resolved config go beside it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_cubes: Option<usize>,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 32)]
    res: usize,
    #[arg(long, value_enum, default_value = "point")]
    mode: FieldArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Not needed with --oracle-gt.
    #[arg(long, required_unless_present = "oracle_gt")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long, default_value_t = 32)]
    res: usize,
    #[arg(long, value_enum, default_value = "point")]
    mode: FieldArg,
    /// Surface samples per mesh for the Chamfer distance.
    #[arg(long, default_value_t = 4096)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Score the ground truth against itself instead of a model.
    #[arg(long)]
    oracle_gt: bool,
    /// Include per-component triangle counts.
    #[arg(long)]
    components: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InterpolateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value_t = 5)]
    steps: usize,
    #[arg(long, value_enum, default_value = "latent")]
    space: SpaceArg,
    #[arg(long, default_value_t = 32)]
    res: usize,
    #[arg(long, value_enum, default_value = "point")]
    mode: FieldArg,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Numeric divergence during training.
#[derive(Debug)]
struct Diverged(String);

impl std::fmt::Display for Diverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Diverged {}

/// Usage problem detected after argument parsing.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Interpolate(a) => cmd_interpolate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Diverged>().is_some() {
                ExitCode::from(EXIT_DIVERGED)
            } else if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_DATA)
            }
        }
    }
}

/// `path` with `suffix` appended to its file name.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn write_run_config(path: &Path, lines: &[(&str, String)]) -> Result<()> {
    let text: String = lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn load_model(path: &Path) -> Result<HyperNetwork> {
    load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn cmd_gen_data(a: GenDataArgs) -> Result<()> {
    if a.n == 0 {
        return Err(Usage("--n must be at least 1".into()).into());
    }
    generate(a.kind, a.n, a.count, a.seed, &a.out_dir)?;
    write_run_config(
        &a.out_dir.join("gen-data.config"),
        &[
            ("kind", a.kind.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()),
            ("n", a.n.to_string()),
            ("count", a.count.to_string()),
            ("seed", a.seed.to_string()),
        ],
    )?;
    println!("wrote {} shapes to {}", a.count, a.out_dir.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut config = TrainConfig::default();
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        config.apply_kv(&text).map_err(|e| Usage(e.to_string()))?;
    }
    if let Some(v) = a.variant {
        config.variant = v.into();
    }
    if let Some(v) = a.epochs {
        config.epochs = v;
    }
    if let Some(v) = a.seed {
        config.seed = v;
    }
    if let Some(v) = a.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = a.batch_cubes {
        config.batch_cubes = v;
    }
    config.validate().map_err(|e| Usage(e.to_string()))?;

    let (_, grids) = load_dataset(&a.data_dir)?;
    ensure_parent(&a.out)?;
    fs::write(sibling(&a.out, ".config"), config.to_kv())?;
    let telemetry_path = a.out.with_file_name("telemetry.jsonl");
    let mut telemetry = BufWriter::new(File::create(&telemetry_path)?);
    let mut io_error = None;
    let result = train_with(&grids, &config, |rec| {
        if io_error.is_none() {
            if let Err(e) = write_telemetry(std::slice::from_ref(rec), &mut telemetry).and_then(|_| telemetry.flush()) {
                io_error = Some(e);
            }
        }
    });
    if let Some(e) = io_error {
        return Err(e).context("writing telemetry");
    }
    match result {
        Ok(outcome) => {
            save_checkpoint(&outcome.model, &a.out)?;
            let last = outcome.telemetry.last().map_or(f64::NAN, |r| r.loss);
            println!(
                "trained {} epochs ({} steps), final epoch loss {last:.6}; checkpoint {}",
                outcome.telemetry.len(),
                outcome.step_losses.len(),
                a.out.display()
            );
            Ok(())
        }
        Err(TrainError::Diverged(d)) => {
            let rescue = sibling(&a.out, ".last-good");
            save_checkpoint(&d.last_good, &rescue)?;
            Err(Diverged(format!(
                "training diverged at epoch {} step {}: {}; last good parameters saved to {}",
                d.epoch,
                d.step,
                d.reason,
                rescue.display()
            ))
            .into())
        }
        Err(e) => Err(e.into()),
    }
}

fn mode_name(m: FieldArg) -> String {
    m.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
}

fn cmd_reconstruct(a: ReconstructArgs) -> Result<()> {
    let model = load_model(&a.checkpoint)?;
    let grid = load_binvox(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let (_, theta) = model.forward(&grid)?;
    let values = field_eval_grid(&theta, a.res, a.mode.into())?;
    let mesh = marching_cubes(&values, DEFAULT_ISO)?;
    ensure_parent(&a.out)?;
    export_obj(&mesh, &a.out)?;
    write_run_config(
        &sibling(&a.out, ".config"),
        &[
            ("checkpoint", a.checkpoint.display().to_string()),
            ("input", a.input.display().to_string()),
            ("res", a.res.to_string()),
            ("mode", mode_name(a.mode)),
        ],
    )?;
    if mesh.is_empty() {
        eprintln!("warning: reconstruction produced an empty mesh; wrote header-only OBJ");
    }
    println!(
        "{} vertices, {} triangles -> {}",
        mesh.vertices.len(),
        mesh.triangles.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let (_, grids) = load_dataset(&a.data_dir)?;
    let config = EvalConfig {
        resolution: a.res,
        samples: a.samples,
        mode: a.mode.into(),
        seed: a.seed,
        histograms: a.components,
    };
    let model;
    let (source, variant): (&dyn FieldSource, String) = if a.oracle_gt {
        (&GroundTruthOracle, "oracle-gt".to_string())
    } else {
        let path = a.checkpoint.as_ref().expect("required unless oracle");
        model = load_model(path)?;
        (&model, mode_name(a.mode))
    };
    if a.samples == 0 {
        bail!(Usage("--samples must be at least 1".into()));
    }
    let report = evaluate(source, &variant, &grids, &config)?;
    ensure_parent(&a.out)?;
    write_json(&a.out, &report)?;
    write_run_config(
        &sibling(&a.out, ".config"),
        &[
            ("checkpoint", a.checkpoint.map(|p| p.display().to_string()).unwrap_or_default()),
            ("data_dir", a.data_dir.display().to_string()),
            ("res", a.res.to_string()),
            ("mode", mode_name(a.mode)),
            ("samples", a.samples.to_string()),
            ("seed", a.seed.to_string()),
            ("oracle_gt", a.oracle_gt.to_string()),
            ("components", a.components.to_string()),
        ],
    )?;
    print!("{}", format_table(&report));
    Ok(())
}

#[derive(Serialize)]
struct InterpIndex {
    space: Space,
    steps: Vec<InterpStep>,
}

#[derive(Serialize)]
struct InterpStep {
    t: f64,
    file: String,
    vertices: usize,
    triangles: usize,
}

fn cmd_interpolate(a: InterpolateArgs) -> Result<()> {
    if a.steps < 2 {
        return Err(Usage(format!("--steps must be at least 2, got {}", a.steps)).into());
    }
    let model = load_model(&a.checkpoint)?;
    let ga = load_binvox(&a.a).with_context(|| format!("reading {}", a.a.display()))?;
    let gb = load_binvox(&a.b).with_context(|| format!("reading {}", a.b.display()))?;
    let space: Space = a.space.into();
    let meshes = interpolation_sequence(&model, &ga, &gb, a.steps, space, a.res, a.mode.into())?;
    fs::create_dir_all(&a.out_dir)?;
    let mut steps = Vec::new();
    for (i, (t, mesh)) in schedule(a.steps)?.into_iter().zip(&meshes).enumerate() {
        let file = format!("step_{i:03}.obj");
        export_obj(mesh, a.out_dir.join(&file))?;
        if mesh.is_empty() {
            eprintln!("warning: step {i} (t = {t}) produced an empty mesh");
        }
        steps.push(InterpStep {
            t,
            file,
            vertices: mesh.vertices.len(),
            triangles: mesh.triangles.len(),
        });
    }
    write_json(&a.out_dir.join("index.json"), &InterpIndex { space, steps })?;
    write_run_config(
        &a.out_dir.join("interpolate.config"),
        &[
            ("checkpoint", a.checkpoint.display().to_string()),
            ("a", a.a.display().to_string()),
            ("b", a.b.display().to_string()),
            ("steps", a.steps.to_string()),
            ("space", space.to_string()),
            ("res", a.res.to_string()),
            ("mode", mode_name(a.mode)),
        ],
    )?;
    println!("wrote {} meshes to {}", meshes.len(), a.out_dir.display());
    Ok(())
}
