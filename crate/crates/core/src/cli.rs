//! Command-line front end.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_split_dir, synthesize, LoadOptions, Sample, SyntheticSpec};
use crate::error::{Error, Result};
use crate::eval::{
    cold_start_slice, evaluate, family_variants, fit, pretty_table, run_ablation_suite, significance, write_table_csv,
    Family, SweepSpec, TrainConfig,
};
use crate::forgetting::{dump_trajectory, write_trajectory_csv};
use crate::gsu::{gsu_positions, BehaviorEvent, CompressedSequence};
use crate::model::{load_model, save_model, ModelConfig, StimModel};
use crate::moe::RequestContext;

#[derive(Debug, Parser)]
#[command(name = "stim", version, about = "Spatiotemporal periodic interest ranking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset with planted periodic interest.
    GenSynth {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on `<data>/train.*` and save a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on `<data>/test.*`.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also report on rows with fewer than `--max-len` behaviors.
        #[arg(long)]
        cold_start: bool,
        #[arg(long, default_value_t = 10)]
        max_len: usize,
        /// Write the reports here as JSON lines instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the raw retention trajectories for one request.
    MaskDump {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        request: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and compare a family of variants.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        family: Family,
        #[arg(long)]
        out: PathBuf,
        /// Data directory; synthetic data from the config is used otherwise.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

/// `train` configuration file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// `ablate` configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub sweep: SweepSpec,
    pub synthetic: SyntheticSpec,
    pub data_seed: u64,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            seeds: vec![1],
            sweep: SweepSpec::default(),
            synthetic: SyntheticSpec::default(),
            data_seed: 1,
        }
    }
}

/// `mask-dump` request file: a request context plus its history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskRequest {
    pub request: RequestContext,
    pub history: Vec<BehaviorEvent>,
}

/// Reads JSON, or TOML for `.toml` files. Any failure after the file is read
/// is a config error.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parsed = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| e.to_string())
    } else {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn data_dir(dir: &Path) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let (train, test, reports) = load_split_dir(dir, &LoadOptions::default())?;
    for r in &reports {
        for e in r.rejected.iter().take(5) {
            eprintln!("{}:{}: rejected: {}", r.path.display(), e.line, e.message);
        }
        if r.rejected.len() > 5 {
            eprintln!("{}: {} rows rejected in total", r.path.display(), r.rejected.len());
        }
    }
    Ok((train, test))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynth { spec, seed, out } => {
            let spec: SyntheticSpec = match spec {
                Some(p) => load_config(&p)?,
                None => SyntheticSpec::default(),
            };
            generate_synthetic(&spec, seed, &out)?;
            eprintln!("wrote synthetic data to {}", out.display());
        }
        Command::Train { config, data, out } => {
            let cfg: ExperimentConfig = load_config(&config)?;
            let (train, _) = data_dir(&data)?;
            let mut model = StimModel::new(cfg.model)?;
            let report = fit(&mut model, &train, &cfg.train)?;
            save_model(&out, &model)?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Eval {
            ckpt,
            data,
            cold_start,
            max_len,
            out,
        } => {
            let model = load_model(&ckpt)?;
            let (_, test) = data_dir(&data)?;
            let mut text = serde_json::to_string(&evaluate(&model, &test, "test")?)? + "\n";
            if cold_start {
                let slice = cold_start_slice(&test, max_len);
                text += &(serde_json::to_string(&evaluate(&model, &slice, &format!("cold_start<{max_len}"))?)? + "\n");
            }
            write_out(out.as_deref(), &text)?;
        }
        Command::MaskDump { config, request, out } => {
            let cfg: ExperimentConfig = load_config(&config)?;
            let variant = cfg.model.validate()?;
            let text = fs::read_to_string(&request).map_err(|e| Error::io(&request, e))?;
            let mut req: MaskRequest =
                serde_json::from_str(&text).map_err(|e| Error::data(request.display().to_string(), e.to_string()))?;
            req.history.sort_by_key(|e| e.timestamp);
            let kept: Vec<BehaviorEvent> = gsu_positions(&req.history, req.request.target.category_id, cfg.model.k)
                .into_iter()
                .map(|i| req.history[i])
                .collect();
            let seq = CompressedSequence::from_events(&kept, cfg.model.k);
            let rows = dump_trajectory(&seq, &req.request, &cfg.model.masks, variant.strategy())?;
            let file = fs::File::create(&out).map_err(|e| Error::io(&out, e))?;
            let mut w = BufWriter::new(file);
            write_trajectory_csv(&rows, &mut w)?;
            w.flush().map_err(|e| Error::io(&out, e))?;
        }
        Command::Ablate {
            config,
            family,
            out,
            data,
        } => {
            let cfg: AblateConfig = load_config(&config)?;
            if cfg.seeds.is_empty() {
                return Err(Error::Config("ablate needs at least one seed".into()));
            }
            let (train, test) = match data {
                Some(d) => data_dir(&d)?,
                None => {
                    let s = synthesize(&cfg.synthetic, cfg.data_seed)?;
                    (s.train, s.test)
                }
            };
            let variants = family_variants(&cfg.model, family, &cfg.sweep)?;
            let rows = run_ablation_suite(&variants, &cfg.seeds, &train, &test, &cfg.train)?;
            write_table_csv(&out, &rows)?;
            eprint!("{}", pretty_table(&rows));
            if let Some(reference) = variants.last() {
                for (label, t) in significance(&rows, &reference.label) {
                    eprintln!(
                        "{} vs {label}: mean diff {:.4}, t = {:.3}, p = {:.4} (n = {})",
                        reference.label, t.mean_diff, t.t, t.p_value, t.n
                    );
                }
            }
        }
    }
    Ok(())
}
