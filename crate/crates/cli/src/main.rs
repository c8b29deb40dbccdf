use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use visnav::dataset::{
    generate_synthetic_dataset, load_dataset, DatasetEnvConfig, DatasetTask, GenerateConfig, LoadOptions, NoiseConfig,
};
use visnav::env::NavEnv;
use visnav::eval::{
    evaluate, parse_metrics, plot_curves, EvalConfig, EvalReport, GreedyAgent, Policy, RandomAgent, ShortestPathAgent,
};
use visnav::grid::MotionModel;
use visnav::mix_seed;
use visnav::nn::{load_checkpoint, NetworkConfig};
use visnav::sim::SimConfig;
use visnav::train::{make_envs, parse_key_values, train, EnvSpec, EvalHook, TrainConfig, TrainRun, Trainer};

#[derive(Parser)]
#[command(name = "visnav", version, about = "Goal-conditioned visual navigation: training, datasets, evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train in the procedural room simulator.
    TrainSim(TrainArgs),
    /// Train on a recorded (or generated) grid dataset.
    TrainDataset {
        /// Dataset directory.
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Render a synthetic grid dataset to disk.
    GenDataset(GenArgs),
    /// Evaluate a checkpoint or a baseline policy.
    Eval(EvalArgs),
    /// Plot learning curves from metrics logs as SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Frame budget.
    #[arg(long)]
    frames: Option<u64>,
    /// Checkpoint to resume from (same environment) or fine-tune from.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory for metrics and checkpoints.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    /// Frames between greedy evaluations (0 disables).
    #[arg(long, default_value_t = 0)]
    eval_every: u64,
    #[arg(long, default_value_t = 100)]
    eval_episodes: usize,
    /// Stop once an evaluation reaches this success rate.
    #[arg(long)]
    stop_at: Option<f64>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Grid size as WIDTHxHEIGHT.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    images_per_pose: Option<usize>,
    /// Noise level (0 none, 1 low).
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    image_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyKind {
    Greedy,
    Random,
    ShortestPath,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Network checkpoint; required for the greedy policy.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Dataset directory; the simulator is used when absent.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PolicyKind::Greedy)]
    policy: PolicyKind,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Image side for baselines in the simulator.
    #[arg(long)]
    image_size: Option<usize>,
    /// Also write the report as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output SVG file.
    #[arg(long)]
    out: PathBuf,
    /// Moving-average window in rows.
    #[arg(long, default_value_t = 1)]
    window: usize,
    /// Metrics CSV files, optionally as LABEL=PATH.
    #[arg(required = true)]
    inputs: Vec<String>,
}

/// Environment settings that may appear in a training config next to the
/// optimizer keys.
#[derive(Default)]
struct EnvOverrides {
    max_episode_steps: Option<usize>,
    allow_backward: Option<bool>,
    layout_reuse: Option<u64>,
    curriculum_start_frame: Option<u64>,
    curriculum_end_frame: Option<u64>,
    curriculum_start_length: Option<usize>,
}

fn read_config(path: &Path) -> Result<Vec<(usize, String, String)>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    Ok(parse_key_values(&text)?)
}

fn parse_val<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| anyhow::anyhow!("line {line}: invalid value {v:?} for {key}"))
}

fn train_config(mut cfg: TrainConfig, args: &TrainArgs) -> Result<(TrainConfig, EnvOverrides)> {
    let mut env = EnvOverrides::default();
    if let Some(path) = &args.config {
        for (line, k, v) in read_config(path)? {
            match k.as_str() {
                "max_episode_steps" => env.max_episode_steps = Some(parse_val(line, &k, &v)?),
                "allow_backward" => env.allow_backward = Some(parse_val(line, &k, &v)?),
                "layout_reuse" => env.layout_reuse = Some(parse_val(line, &k, &v)?),
                "curriculum_start_frame" => env.curriculum_start_frame = Some(parse_val::<f64>(line, &k, &v)? as u64),
                "curriculum_end_frame" => env.curriculum_end_frame = Some(parse_val::<f64>(line, &k, &v)? as u64),
                "curriculum_start_length" => env.curriculum_start_length = Some(parse_val(line, &k, &v)?),
                _ => cfg.set(line, &k, &v).with_context(|| format!("in {}", path.display()))?,
            }
        }
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(f) = args.frames {
        cfg.frames = f;
    }
    cfg.validate()?;
    Ok((cfg, env))
}

fn run_training(spec: EnvSpec, cfg: TrainConfig, args: &TrainArgs) -> Result<()> {
    let envs = make_envs(&spec, cfg.instances, cfg.seed)?;
    let mut trainer = Trainer::new(cfg, envs, spec.kind())?;
    if let Some(path) = &args.checkpoint {
        let ckpt = load_checkpoint(path, Some(&cfg.network))
            .with_context(|| format!("cannot use checkpoint {}", path.display()))?;
        let resumed = trainer.load_checkpoint(ckpt)?;
        log::info!(
            "{} from {} at frame {}",
            if resumed { "resuming" } else { "fine-tuning" },
            path.display(),
            trainer.frame()
        );
    }
    let mut eval_env = spec.make(mix_seed(cfg.seed, 0xe7a1))?;
    let (episodes, stop_at, seed) = (args.eval_episodes, args.stop_at, cfg.seed);
    let hook: EvalHook = Box::new(move |t: &Trainer| {
        let mut agent = GreedyAgent::new(t.params().clone());
        let r = evaluate(&mut agent, eval_env.as_mut(), episodes, seed, &EvalConfig::default())
            .map_err(|e| visnav::train::TrainError::Config(e.to_string()))?;
        log::info!("frame {}: greedy success rate {:.3}", t.frame(), r.success_rate);
        Ok(stop_at.is_some_and(|s| r.success_rate >= s))
    });
    let outcome = train(
        &mut trainer,
        TrainRun { out_dir: Some(args.out.clone()), eval_interval: args.eval_every, eval_hook: Some(hook) },
    )?;
    println!(
        "trained {} steps to frame {}{}; checkpoints in {}",
        outcome.steps,
        outcome.final_frame,
        if outcome.stopped_early { " (stopped early)" } else { "" },
        args.out.display()
    );
    Ok(())
}

fn dataset_task(dir: &Path, motion: MotionModel) -> Result<Arc<DatasetTask>> {
    let ds = load_dataset(dir, LoadOptions::default()).with_context(|| format!("cannot load dataset {}", dir.display()))?;
    Ok(Arc::new(DatasetTask::new(Arc::new(ds), motion)))
}

fn train_sim(args: TrainArgs) -> Result<()> {
    let (cfg, o) = train_config(TrainConfig::default(), &args)?;
    let mut sim = SimConfig::default();
    sim.render.size = cfg.network.image_side;
    if let Some(v) = o.max_episode_steps {
        sim.max_episode_steps = v;
    }
    if let Some(v) = o.allow_backward {
        sim.motion.allow_backward = v;
    }
    if let Some(v) = o.layout_reuse {
        sim.layout_reuse = v;
    }
    run_training(EnvSpec::Sim(sim), cfg, &args)
}

fn train_dataset(dataset: &Path, args: TrainArgs) -> Result<()> {
    let (cfg, o) = train_config(TrainConfig::dataset_defaults(), &args)?;
    let mut env = DatasetEnvConfig::default();
    if let Some(v) = o.max_episode_steps {
        env.max_episode_steps = v;
    }
    if let Some(v) = o.allow_backward {
        env.motion.allow_backward = v;
    }
    if let Some(v) = o.curriculum_start_frame {
        env.curriculum_start_frame = v;
    }
    if let Some(v) = o.curriculum_end_frame {
        env.curriculum_end_frame = v;
    }
    if let Some(v) = o.curriculum_start_length {
        env.curriculum_start_length = v;
    }
    let task = dataset_task(dataset, env.motion)?;
    run_training(EnvSpec::Dataset { task, config: env }, cfg, &args)
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let (w, h) = s.split_once(['x', 'X']).with_context(|| format!("grid {s:?} is not WIDTHxHEIGHT"))?;
    Ok((w.trim().parse().context("grid width")?, h.trim().parse().context("grid height")?))
}

fn gen_dataset(args: GenArgs) -> Result<()> {
    let mut cfg = GenerateConfig::default();
    if let Some(path) = &args.config {
        for (line, k, v) in read_config(path)? {
            match k.as_str() {
                "seed" => cfg.seed = parse_val(line, &k, &v)?,
                "width" => cfg.width = parse_val(line, &k, &v)?,
                "height" => cfg.height = parse_val(line, &k, &v)?,
                "grid" => (cfg.width, cfg.height) = parse_grid(&v)?,
                "images_per_pose" => cfg.images_per_pose = parse_val(line, &k, &v)?,
                "noise" => cfg.noise = NoiseConfig::level(parse_val(line, &k, &v)?),
                "image_size" => cfg.render.size = parse_val(line, &k, &v)?,
                "resolution" => cfg.resolution = parse_val(line, &k, &v)?,
                "object_density" => cfg.object_density = parse_val(line, &k, &v)?,
                _ => bail!("line {line}: unknown key {k:?}"),
            }
        }
    }
    if let Some(g) = &args.grid {
        (cfg.width, cfg.height) = parse_grid(g)?;
    }
    if let Some(n) = args.images_per_pose {
        cfg.images_per_pose = n;
    }
    if let Some(l) = args.noise {
        cfg.noise = NoiseConfig::level(l);
    }
    if let Some(s) = args.image_size {
        cfg.render.size = s;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let ds = generate_synthetic_dataset(&cfg)?;
    ds.write(&args.out).with_context(|| format!("cannot write dataset to {}", args.out.display()))?;
    println!("wrote {} records over {} poses to {}", ds.records().len(), ds.pose_count(), args.out.display());
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let mut cfg = EvalConfig::default();
    let (mut episodes, mut seed, mut image_size) = (100, 0, None);
    if let Some(path) = &args.config {
        for (line, k, v) in read_config(path)? {
            match k.as_str() {
                "episodes" => episodes = parse_val(line, &k, &v)?,
                "seed" => seed = parse_val(line, &k, &v)?,
                "max_steps" => cfg.max_steps = parse_val(line, &k, &v)?,
                "allow_backward" => cfg.motion.allow_backward = parse_val(line, &k, &v)?,
                "image_size" => image_size = Some(parse_val(line, &k, &v)?),
                _ => bail!("line {line}: unknown key {k:?}"),
            }
        }
    }
    episodes = args.episodes.unwrap_or(episodes);
    seed = args.seed.unwrap_or(seed);
    cfg.max_steps = args.max_steps.unwrap_or(cfg.max_steps);
    image_size = args.image_size.or(image_size);

    let ckpt = match &args.checkpoint {
        Some(p) => Some(load_checkpoint(p, None).with_context(|| format!("cannot load checkpoint {}", p.display()))?),
        None => None,
    };
    let mut policy: Box<dyn Policy> = match args.policy {
        PolicyKind::Greedy => {
            let c = ckpt.as_ref().context("the greedy policy needs --checkpoint")?;
            Box::new(GreedyAgent::new(c.params.clone()))
        }
        PolicyKind::Random => Box::new(RandomAgent::new(cfg.motion)),
        PolicyKind::ShortestPath => Box::new(ShortestPathAgent::new(cfg.motion)),
    };
    let side = ckpt.as_ref().map(|c| c.params.config.image_side).or(image_size).unwrap_or(NetworkConfig::default().image_side);
    let mut env: Box<dyn NavEnv> = match &args.dataset {
        Some(dir) => {
            let mut env_cfg = DatasetEnvConfig::default();
            env_cfg.motion = cfg.motion;
            EnvSpec::Dataset { task: dataset_task(dir, cfg.motion)?, config: env_cfg }.make(seed)?
        }
        None => {
            let mut sim = SimConfig::default();
            sim.render.size = side;
            sim.motion = cfg.motion;
            EnvSpec::Sim(sim).make(seed)?
        }
    };
    let report = evaluate(policy.as_mut(), env.as_mut(), episodes, seed, &cfg)?;
    print!("{}", report.to_table());
    if let Some(out) = &args.out {
        let label = match args.policy {
            PolicyKind::Greedy => "greedy",
            PolicyKind::Random => "random",
            PolicyKind::ShortestPath => "shortest_path",
        };
        fs::write(out, format!("{}\n{}\n", EvalReport::CSV_HEADER, report.to_csv_row(label)))
            .with_context(|| format!("cannot write {}", out.display()))?;
    }
    Ok(())
}

fn plot_cmd(args: PlotArgs) -> Result<()> {
    let mut window = args.window;
    if let Some(path) = &args.config {
        for (line, k, v) in read_config(path)? {
            match k.as_str() {
                "window" => window = parse_val(line, &k, &v)?,
                _ => bail!("line {line}: unknown key {k:?}"),
            }
        }
    }
    let mut runs = Vec::new();
    for input in &args.inputs {
        let (label, path) = match input.split_once('=') {
            Some((l, p)) => (l.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(input);
                let label = p.parent().and_then(|d| d.file_name()).unwrap_or(p.as_os_str()).to_string_lossy().into_owned();
                (label, p)
            }
        };
        let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        let table = parse_metrics(&text).with_context(|| format!("in {}", path.display()))?;
        runs.push((label, table));
    }
    let svg = plot_curves(&runs, window)?;
    fs::write(&args.out, svg).with_context(|| format!("cannot write {}", args.out.display()))?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::TrainSim(args) => train_sim(args),
        Command::TrainDataset { dataset, train } => train_dataset(&dataset, train),
        Command::GenDataset(args) => gen_dataset(args),
        Command::Eval(args) => eval_cmd(args),
        Command::Plot(args) => plot_cmd(args),
    }
}
