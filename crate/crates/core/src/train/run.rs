//! Training loop driver: metrics log, periodic checkpoints and an optional
//! evaluation hook.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

use super::trainer::{EpisodeStats, Trainer, METRICS_HEADER};
use super::TrainError;
use crate::dataset::{DatasetEnv, DatasetEnvConfig, DatasetTask};
use crate::env::NavEnv;
use crate::mix_seed;
use crate::nn::{save_checkpoint, EnvKind};
use crate::sim::{SimConfig, SimEnv};

/// Recipe for building environment instances.
#[derive(Debug, Clone)]
pub enum EnvSpec {
    Sim(SimConfig),
    Dataset { task: Arc<DatasetTask>, config: DatasetEnvConfig },
}

impl EnvSpec {
    pub fn kind(&self) -> EnvKind {
        match self {
            EnvSpec::Sim(_) => EnvKind::Sim,
            EnvSpec::Dataset { .. } => EnvKind::Dataset,
        }
    }

    pub fn make(&self, seed: u64) -> Result<Box<dyn NavEnv>, TrainError> {
        Ok(match self {
            EnvSpec::Sim(cfg) => Box::new(SimEnv::new(*cfg, seed)?),
            EnvSpec::Dataset { task, config } => Box::new(DatasetEnv::new(task.clone(), *config, seed)),
        })
    }
}

/// `n` instances with independent seeds derived from `seed`.
pub fn make_envs(spec: &EnvSpec, n: usize, seed: u64) -> Result<Vec<Box<dyn NavEnv>>, TrainError> {
    (0..n).map(|i| spec.make(mix_seed(seed, 1 + i as u64))).collect()
}

/// Called every `eval_interval` frames; returning `true` stops training.
pub type EvalHook<'a> = Box<dyn FnMut(&Trainer) -> Result<bool, TrainError> + 'a>;

#[derive(Default)]
pub struct TrainRun<'a> {
    /// Directory for `metrics.csv` and checkpoints; nothing is written
    /// when absent.
    pub out_dir: Option<PathBuf>,
    pub eval_interval: u64,
    pub eval_hook: Option<EvalHook<'a>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub steps: usize,
    pub final_frame: u64,
    pub stopped_early: bool,
    pub checkpoints: Vec<PathBuf>,
}

#[derive(Default)]
struct Window {
    episodes: Vec<EpisodeStats>,
    losses: [f64; 10],
    learning_rate: f64,
    grad_norm: f64,
    steps: usize,
}

impl Window {
    fn row(&self, frame: u64) -> String {
        let n_ep = self.episodes.len();
        let mean = |f: &dyn Fn(&EpisodeStats) -> f64| {
            if n_ep == 0 {
                f64::NAN
            } else {
                self.episodes.iter().map(f).sum::<f64>() / n_ep as f64
            }
        };
        let k = self.steps.max(1) as f64;
        let mut fields = vec![
            frame.to_string(),
            mean(&|e| e.total_reward).to_string(),
            mean(&|e| e.length as f64).to_string(),
            mean(&|e| if e.success { 1.0 } else { 0.0 }).to_string(),
            n_ep.to_string(),
        ];
        fields.extend(self.losses.iter().map(|v| (v / k).to_string()));
        fields.push((self.learning_rate / k).to_string());
        fields.push((self.grad_norm / k).to_string());
        fields.join(",")
    }
}

/// Runs `train_step` until the frame budget of the trainer's config.
pub fn train(trainer: &mut Trainer, mut run: TrainRun<'_>) -> Result<TrainOutcome, TrainError> {
    let cfg = *trainer.config();
    let mut metrics = match &run.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut w = BufWriter::new(File::create(dir.join("metrics.csv"))?);
            writeln!(w, "{METRICS_HEADER}")?;
            Some(w)
        }
        None => None,
    };
    let next = |f: u64, every: u64| if every == 0 { u64::MAX } else { (f / every + 1) * every };
    let mut next_log = next(trainer.frame(), cfg.log_interval);
    let mut next_ckpt = next(trainer.frame(), cfg.checkpoint_interval);
    let mut next_eval = next(trainer.frame(), run.eval_interval);
    let mut window = Window::default();
    let mut out = TrainOutcome { steps: 0, final_frame: trainer.frame(), stopped_early: false, checkpoints: Vec::new() };

    while trainer.frame() < cfg.frames {
        let report = trainer.train_step()?;
        out.steps += 1;
        window.episodes.extend(report.episodes);
        window.losses[0] += report.total;
        for (acc, v) in window.losses[1..].iter_mut().zip(report.losses.values()) {
            *acc += v;
        }
        window.learning_rate += report.learning_rate;
        window.grad_norm += report.grad_norm;
        window.steps += 1;
        let f = trainer.frame();

        if f >= next_log {
            let row = window.row(f);
            log::info!("{row}");
            if let Some(w) = metrics.as_mut() {
                writeln!(w, "{row}")?;
                w.flush()?;
            }
            window = Window::default();
            next_log = next(f, cfg.log_interval);
        }
        if f >= next_ckpt {
            if let Some(dir) = &run.out_dir {
                let path = dir.join(format!("checkpoint_{f:010}.ckpt"));
                save_checkpoint(&path, &trainer.checkpoint())?;
                out.checkpoints.push(path);
            }
            next_ckpt = next(f, cfg.checkpoint_interval);
        }
        if f >= next_eval {
            next_eval = next(f, run.eval_interval);
            if let Some(hook) = run.eval_hook.as_mut() {
                if hook(trainer)? {
                    out.stopped_early = true;
                    break;
                }
            }
        }
    }

    if window.steps > 0 {
        if let Some(w) = metrics.as_mut() {
            writeln!(w, "{}", window.row(trainer.frame()))?;
        }
    }
    if let Some(w) = metrics.as_mut() {
        w.flush()?;
    }
    if let Some(dir) = &run.out_dir {
        let path = dir.join("final.ckpt");
        save_checkpoint(&path, &trainer.checkpoint())?;
        out.checkpoints.push(path);
    }
    out.final_frame = trainer.frame();
    Ok(out)
}
