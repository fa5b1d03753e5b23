use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use meshcnn::arch::{ArchName, NetworkSpec};
use meshcnn::features::{assemble_features, FeatureSelection};
use meshcnn::mesh::{labels_from_colors, load_obj, RingWalker, DEFAULT_RED_THRESHOLD};
use meshcnn::synth::{generate_dataset, DatasetConfig};
use meshcnn::train::run::{run_training, RunConfig, RunDir};
use meshcnn::train::{evaluate, export_colored_mesh, predict, ColorSource, Split};
use meshcnn::Error;

/// Per-vertex classification on triangle meshes with ring-neighborhood
/// expanding layers.
#[derive(Parser)]
#[command(name = "meshcnn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset (train/val/test OBJ files plus manifest.json)
    GenData {
        /// TOML dataset config; defaults are used when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the master seed from the config
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print mesh counts, label ratio and ring-size histograms
    Inspect { mesh: PathBuf },
    /// Write the per-vertex feature matrix as CSV
    Features {
        mesh: PathBuf,
        /// Feature groups joined by '+': xyz, curv, dist, or all
        #[arg(long, default_value = "curv+dist")]
        select: FeatureSelection,
        /// Output CSV; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a network and write a run directory
    Train {
        /// TOML run config; flags given here override it
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Preset architecture: baseline, a, b, c, d or e
        #[arg(long, conflicts_with = "arch_file")]
        arch: Option<ArchName>,
        /// Custom network spec (TOML or JSON)
        #[arg(long)]
        arch_file: Option<PathBuf>,
        #[arg(long)]
        select: Option<FeatureSelection>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        /// Initial learning rate; the drop schedule is kept
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        pos_weight: Option<f64>,
        #[arg(long)]
        eval_every: Option<usize>,
        /// Do not read or write feature caches beside the meshes
        #[arg(long)]
        no_cache: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the best checkpoint of a run on one split
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Label a mesh with a trained run and write it as a colored OBJ
    Predict {
        #[arg(long)]
        run: PathBuf,
        mesh: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Color by positive-class probability instead of hard labels
        #[arg(long)]
        probabilities: bool,
    },
}

enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        if e.is_numeric() {
            return Failure::Numeric(message);
        }
        match e {
            Error::InvalidConfig(_) | Error::InvalidSpec(_) | Error::UnknownArchitecture(_) | Error::EmptyRings => {
                Failure::Usage(message)
            }
            _ => Failure::Data(message),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

type Outcome = Result<(), Failure>;

fn gen_data(config: Option<PathBuf>, out: PathBuf, seed: Option<u64>) -> Outcome {
    let mut config = match config {
        Some(path) => DatasetConfig::load(path)?,
        None => DatasetConfig::default(),
    };
    if let Some(seed) = seed {
        config.synth.seed = seed;
    }
    let manifest = generate_dataset(&config, &out)?;
    for split in Split::ALL {
        let entries: Vec<_> = manifest.entries_for(split).collect();
        let vertices: usize = entries.iter().map(|e| e.vertices).sum();
        let positives: usize = entries.iter().map(|e| e.positives).sum();
        println!(
            "{split}: {} meshes, {vertices} vertices, {:.3} positive",
            entries.len(),
            positives as f64 / vertices.max(1) as f64
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn inspect(path: PathBuf) -> Outcome {
    let mesh = load_obj(&path)?;
    println!("vertices {}", mesh.vertex_count());
    println!("faces {}", mesh.face_count());
    println!("edges {}", mesh.edge_count());
    match labels_from_colors(&mesh, DEFAULT_RED_THRESHOLD) {
        Ok(labels) => {
            println!("positive vertices {}", labels.positives());
            println!("positive ratio {:.4}", labels.positive_fraction());
        }
        Err(Error::MissingColors) => println!("labels none"),
        Err(e) => return Err(e.into()),
    }
    const RINGS: [usize; 4] = [1, 2, 4, 8];
    let mut histograms: [BTreeMap<usize, usize>; 4] = Default::default();
    let mut walker = RingWalker::new(&mesh);
    for v in 0..mesh.vertex_count() {
        let rings = walker.walk(v, 8)?;
        for (h, &k) in histograms.iter_mut().zip(&RINGS) {
            *h.entry(rings[k].len()).or_default() += 1;
        }
    }
    for (h, k) in histograms.iter().zip(RINGS) {
        let total: usize = h.iter().map(|(size, count)| size * count).sum();
        let mut line = format!("ring {k} mean {:.2} |", total as f64 / mesh.vertex_count().max(1) as f64);
        for (size, count) in h {
            let _ = write!(line, " {size}:{count}");
        }
        println!("{line}");
    }
    Ok(())
}

fn features(path: PathBuf, select: FeatureSelection, out: Option<PathBuf>) -> Outcome {
    let mesh = load_obj(&path)?;
    let matrix = assemble_features(&mesh, select)?;
    // The label column is empty for meshes without colors.
    let labels = match labels_from_colors(&mesh, DEFAULT_RED_THRESHOLD) {
        Ok(labels) => Some(labels),
        Err(Error::MissingColors) => None,
        Err(e) => return Err(e.into()),
    };
    let mut csv = String::from("vertex");
    for name in matrix.names() {
        csv.push(',');
        csv.push_str(name.as_str());
    }
    csv.push_str(",label\n");
    for i in 0..matrix.rows() {
        let _ = write!(csv, "{i}");
        for v in matrix.row(i) {
            let _ = write!(csv, ",{v}");
        }
        match &labels {
            Some(l) => {
                let _ = writeln!(csv, ",{}", l.as_slice()[i]);
            }
            None => csv.push_str(",\n"),
        }
    }
    match out {
        Some(out) => fs::write(&out, csv).map_err(|e| io_failure(&out, e))?,
        None => print!("{csv}"),
    }
    Ok(())
}

struct TrainArgs {
    config: Option<PathBuf>,
    data: Option<PathBuf>,
    arch: Option<ArchName>,
    arch_file: Option<PathBuf>,
    select: Option<FeatureSelection>,
    seed: Option<u64>,
    steps: Option<usize>,
    lr: Option<f64>,
    pos_weight: Option<f64>,
    eval_every: Option<usize>,
    no_cache: bool,
    out: PathBuf,
}

fn train(args: TrainArgs) -> Outcome {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(data) = args.data {
        config.data = data;
    }
    if let Some(arch) = args.arch {
        config.arch = arch;
        config.network = None;
    }
    if let Some(path) = &args.arch_file {
        config.network = Some(NetworkSpec::load(path)?);
    }
    if let Some(select) = args.select {
        config.features = select;
    }
    if args.no_cache {
        config.cache = false;
    }
    let train = &mut config.train;
    if let Some(seed) = args.seed {
        train.seed = seed;
    }
    if let Some(steps) = args.steps {
        train.schedule.total_steps = steps;
    }
    if let Some(lr) = args.lr {
        train.schedule.initial_lr = lr;
    }
    if let Some(w) = args.pos_weight {
        train.schedule.pos_weight = w;
    }
    if let Some(every) = args.eval_every {
        train.eval_every = every;
    }
    config.validate()?;

    let run = RunDir::create(&args.out, &config)?;
    let outcome = run_training(&run, &config)?;
    if let Some(best) = &outcome.best {
        let m = best.metrics;
        println!(
            "best step {}: val accuracy {:.3} precision {:.3} recall {:.3}",
            best.step, m.accuracy, m.precision, m.recall
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn eval(run: PathBuf, split: Split) -> Outcome {
    let run = RunDir::open(run)?;
    let mut config = run.config()?;
    let checkpoint = run.load_best()?;
    let net = checkpoint.network()?;
    config.features = checkpoint.features;
    let data = config.load_split(split, net.spec())?;
    if data.is_empty() {
        return Err(Error::EmptySplit { split: split.to_string() }.into());
    }
    let mut report = evaluate(&net, &data, config.train.schedule.pos_weight)?;
    report.step = checkpoint.step;
    println!("accuracy {:.3}", report.accuracy);
    println!("precision {:.3}", report.precision);
    println!("recall {:.3}", report.recall);
    run.append_metrics(split.as_str(), &report)?;
    Ok(())
}

fn predict_mesh(run: PathBuf, mesh: PathBuf, out: PathBuf, probabilities: bool) -> Outcome {
    let checkpoint = RunDir::open(run)?.load_best()?;
    let net = checkpoint.network()?;
    let mesh = load_obj(&mesh)?;
    let prediction = predict(&net, &mesh, checkpoint.features)?;
    let source = if probabilities {
        ColorSource::Probabilities(&prediction.probabilities)
    } else {
        ColorSource::Labels(&prediction.labels)
    };
    export_colored_mesh(&mesh, source, &out)?;
    println!("positive vertices {}", prediction.labels.positives());
    println!("wrote {}", out.display());
    Ok(())
}

fn dispatch(command: Command) -> Outcome {
    match command {
        Command::GenData { config, out, seed } => gen_data(config, out, seed),
        Command::Inspect { mesh } => inspect(mesh),
        Command::Features { mesh, select, out } => features(mesh, select, out),
        Command::Train {
            config,
            data,
            arch,
            arch_file,
            select,
            seed,
            steps,
            lr,
            pos_weight,
            eval_every,
            no_cache,
            out,
        } => train(TrainArgs {
            config,
            data,
            arch,
            arch_file,
            select,
            seed,
            steps,
            lr,
            pos_weight,
            eval_every,
            no_cache,
            out,
        }),
        Command::Eval { run, split } => eval(run, split),
        Command::Predict {
            run,
            mesh,
            out,
            probabilities,
        } => predict_mesh(run, mesh, out, probabilities),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}
