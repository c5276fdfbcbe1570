//! The `ferret` command line.
//!
//! Results go to stdout as JSON (or aligned tables with `--pretty`); logs go
//! to stderr. Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ferret_core::data::{gen_toy_corpus, load_dataset, load_image, save_png, PerturbationSpec, EVAL_CROP, TRAIN_CROP};
use ferret_core::metrics::{benchmark_throughput, BenchConfig, WARMUP_BATCHES};
use ferret_core::model::{
    eval_input, evaluate, gradcheck_suite, load_trained, predict_proba, save_trained, train, EvalOptions,
    FerretConfig, FerretNet, FerretVariant, InputKind, TrainConfig, TrainManifest, VariantName, DEFAULT_DROPOUT,
};
use ferret_core::nn::Layer;
use ferret_core::{lpd_map, lpd_to_image, CenterStrategy, NeighborhoodSpec, Statistic};

#[derive(Debug, Parser)]
#[command(name = "ferret", version, about = "Synthetic-image detection from local pixel dependencies")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (falls back to FERRET_THREADS, then 1).
    #[arg(long, global = true, env = "FERRET_THREADS", default_value_t = 1,
          value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: u32,
    /// Neighborhood side length.
    #[arg(long, global = true, default_value = "3", value_parser = ["3", "5", "7"])]
    pub n: String,
    /// Center handling: mask, exclude or retain.
    #[arg(long, global = true, default_value = "mask", value_parser = parse_center)]
    pub center: CenterStrategy,
    /// Neighborhood statistic: median, max, min or avg.
    #[arg(long, global = true, default_value = "median", value_parser = parse_stat)]
    pub stat: Statistic,
    /// Model size: s, b or l.
    #[arg(long, global = true, default_value = "b", value_parser = parse_variant)]
    pub variant: VariantName,
    #[arg(long, global = true, default_value_t = DEFAULT_DROPOUT, value_parser = parse_dropout)]
    pub dropout: f64,
    /// Print aligned tables instead of JSON.
    #[arg(long, global = true)]
    pub pretty: bool,
}

impl GlobalOpts {
    pub fn neighborhood(&self) -> anyhow::Result<NeighborhoodSpec> {
        Ok(NeighborhoodSpec::new(self.n.parse()?, self.center, self.stat)?)
    }

    fn threads(&self) -> usize {
        self.threads as usize
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the LPD map of an image as a PNG, mapping [-1, 1] onto [0, 255]
    /// with round-half-up.
    ExtractLpd { input: PathBuf, output: PathBuf },
    /// Generate a procedural real/fake corpus under DIR/{real,fake}.
    GenCorpus {
        dir: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 256)]
        size: usize,
    },
    /// Train a detector from scratch and write a checkpoint plus JSON manifest.
    Train {
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = TRAIN_CROP)]
        crop: usize,
        /// Feed raw crops instead of LPD maps.
        #[arg(long)]
        raw_input: bool,
    },
    /// Report ACC and AP on a labeled directory. Input features follow the
    /// checkpoint, not the neighborhood flags.
    Eval {
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// One of jpeg:Q, resize:S, rotate[:D].
        #[arg(long, value_parser = parse_perturb)]
        perturb: Option<PerturbationSpec>,
        #[arg(long, default_value_t = EVAL_CROP)]
        eval_size: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
    },
    /// Print the probability that one image is synthetic.
    Detect {
        image: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = EVAL_CROP)]
        eval_size: usize,
    },
    /// Measure inference throughput on synthetic batches.
    Bench {
        #[arg(long, default_value_t = 128)]
        batch: usize,
        #[arg(long, default_value_t = 10.0)]
        secs: f64,
        #[arg(long, default_value_t = EVAL_CROP)]
        size: usize,
        /// Time the network alone, skipping LPD extraction.
        #[arg(long)]
        no_lpd: bool,
    },
    /// Check every layer's gradients against central differences.
    Gradcheck {
        /// Coordinates sampled per tensor in the full-model check (0 = all).
        #[arg(long, default_value_t = 64)]
        sample: usize,
    },
}

fn parse_center(s: &str) -> Result<CenterStrategy, String> {
    s.parse().map_err(|e: ferret_core::Error| e.to_string())
}

fn parse_stat(s: &str) -> Result<Statistic, String> {
    s.parse().map_err(|e: ferret_core::Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<VariantName, String> {
    s.parse().map_err(|e: ferret_core::Error| e.to_string())
}

fn parse_perturb(s: &str) -> Result<PerturbationSpec, String> {
    s.parse().map_err(|e: ferret_core::Error| e.to_string())
}

fn parse_dropout(s: &str) -> Result<f64, String> {
    let p: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..1.0).contains(&p) {
        Ok(p)
    } else {
        Err(format!("dropout {p} must lie in [0, 1)"))
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    match execute(&cli) {
        Ok(out) => {
            println!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn table(rows: &[(&str, String)]) -> String {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    rows.iter()
        .map(|(k, v)| format!("{k:<width$}  {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn emit(pretty: bool, value: serde_json::Value, rows: &[(&str, String)]) -> anyhow::Result<String> {
    Ok(if pretty {
        table(rows)
    } else {
        serde_json::to_string(&value)?
    })
}

/// Runs a parsed command and returns what it prints on stdout.
pub fn execute(cli: &Cli) -> anyhow::Result<String> {
    let g = &cli.global;
    match &cli.command {
        Command::ExtractLpd { input, output } => {
            let spec = g.neighborhood()?;
            let image = load_image(input)?;
            let map = lpd_map(&image, &spec)?;
            save_png(output, &lpd_to_image(&map))?;
            let (_, h, w) = image.shape();
            emit(
                g.pretty,
                json!({"input": input, "output": output, "height": h, "width": w, "neighborhood": spec.to_string()}),
                &[
                    ("output", output.display().to_string()),
                    ("size", format!("{w}x{h}")),
                    ("neighborhood", spec.to_string()),
                ],
            )
        }
        Command::GenCorpus { dir, count, size } => {
            let ds = gen_toy_corpus(dir, *count, *size, g.seed)?;
            let (real, fake) = ds.counts();
            emit(
                g.pretty,
                json!({"dir": dir, "real": real, "fake": fake, "size": size, "seed": g.seed}),
                &[("real", real.to_string()), ("fake", fake.to_string()), ("size", size.to_string())],
            )
        }
        Command::Train {
            data,
            out,
            epochs,
            batch_size,
            crop,
            raw_input,
        } => {
            let input = if *raw_input {
                InputKind::Raw
            } else {
                InputKind::Lpd(g.neighborhood()?)
            };
            let config = TrainConfig {
                epochs: *epochs,
                batch_size: *batch_size,
                crop_size: *crop,
                seed: g.seed,
                threads: g.threads(),
                ..TrainConfig::default()
            };
            config.validate()?;
            let dataset = load_dataset(data)?;
            let model_config = FerretConfig::new(FerretVariant::preset(g.variant)).dropout(g.dropout);
            let mut model = FerretNet::<f32>::new(model_config.clone(), g.seed)?;
            let history = train(&mut model, &dataset, &config, input)?;
            let manifest = TrainManifest {
                model: model_config,
                input,
                train: config,
                seed: g.seed,
                history,
            };
            save_trained(out, &model, &manifest).with_context(|| format!("writing {}", out.display()))?;
            let last = manifest.history.epochs.last().cloned();
            let mut rows = vec![("checkpoint", out.display().to_string())];
            let lines: Vec<String> = manifest
                .history
                .epochs
                .iter()
                .map(|e| format!("loss {:.5}  acc {:.4}", e.loss, e.acc))
                .collect();
            let labels: Vec<String> = (1..=lines.len()).map(|i| format!("epoch {i}")).collect();
            rows.extend(labels.iter().map(String::as_str).zip(lines));
            emit(
                g.pretty,
                json!({"checkpoint": out, "epochs": manifest.history.epochs, "final": last}),
                &rows,
            )
        }
        Command::Eval {
            data,
            ckpt,
            perturb,
            eval_size,
            batch_size,
        } => {
            let (model, manifest) = load_checkpoint(ckpt)?;
            let dataset = load_dataset(data)?;
            let opts = EvalOptions {
                eval_size: *eval_size,
                input: manifest.input,
                perturb: *perturb,
                seed: g.seed,
                batch_size: *batch_size,
                threads: g.threads(),
            };
            let r = evaluate(&model, &dataset, &opts)?;
            let p = perturb.map(|p| p.to_string());
            emit(
                g.pretty,
                json!({"acc": r.acc, "ap": r.ap, "n": r.n, "perturb": p}),
                &[
                    ("acc", format!("{:.4}", r.acc)),
                    ("ap", format!("{:.4}", r.ap)),
                    ("n", r.n.to_string()),
                    ("perturb", p.unwrap_or_else(|| "none".into())),
                ],
            )
        }
        Command::Detect { image, ckpt, eval_size } => {
            let (model, manifest) = load_checkpoint(ckpt)?;
            let mut opts = EvalOptions::new(manifest.input);
            opts.eval_size = *eval_size;
            let x = eval_input(&load_image(image)?, &opts, 0)?;
            let p = predict_proba(&model, &[x])?[0];
            let label = if p >= 0.5 { "fake" } else { "real" };
            emit(
                g.pretty,
                json!({"image": image, "probability": p, "label": label}),
                &[("probability", format!("{p:.6}")), ("label", label.into())],
            )
        }
        Command::Bench {
            batch,
            secs,
            size,
            no_lpd,
        } => {
            if !(secs.is_finite() && *secs > 0.0) {
                bail!("--secs must be positive");
            }
            let model = FerretNet::<f32>::new(
                FerretConfig::new(FerretVariant::preset(g.variant)).dropout(g.dropout),
                g.seed,
            )?;
            let config = BenchConfig {
                input_shape: (3, *size, *size),
                batch_size: *batch,
                duration: Duration::from_secs_f64(*secs),
                lpd: if *no_lpd { None } else { Some(g.neighborhood()?) },
                threads: g.threads(),
                warmup_batches: WARMUP_BATCHES,
                seed: g.seed,
            };
            let report = benchmark_throughput(&model, &config)?;
            Ok(if g.pretty {
                report.to_string().trim_end().to_string()
            } else {
                let mut v = serde_json::to_value(&report)?;
                v["variant"] = json!(g.variant.to_string());
                serde_json::to_string(&v)?
            })
        }
        Command::Gradcheck { sample } => {
            let cap = (*sample > 0).then_some(*sample);
            let outcomes = gradcheck_suite(g.seed, cap)?;
            let failed: Vec<&str> = outcomes
                .iter()
                .filter(|o| !o.passed())
                .map(|o| o.name.as_str())
                .collect();
            let text = if g.pretty {
                let lines: Vec<String> = outcomes
                    .iter()
                    .map(|o| {
                        format!(
                            "{:<30} {:>10.3e} < {:.0e}  {}",
                            o.name,
                            o.max_rel_error,
                            o.tolerance,
                            if o.passed() { "ok" } else { "FAIL" }
                        )
                    })
                    .collect();
                lines.join("\n")
            } else {
                serde_json::to_string(&json!({"checks": outcomes, "passed": failed.is_empty()}))?
            };
            if !failed.is_empty() {
                println!("{text}");
                bail!("gradient check failed for {}", failed.join(", "));
            }
            Ok(text)
        }
    }
}

fn load_checkpoint(path: &Path) -> anyhow::Result<(FerretNet<f32>, TrainManifest)> {
    load_trained(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

/// Logit of `model` on one prepared image; exposed for cross-checking
/// `detect`.
pub fn logit(model: &dyn Layer<f32>, image: ferret_core::Image<f32>) -> anyhow::Result<f32> {
    let x = ferret_core::model::images_to_batch(&[image])?;
    Ok(model.infer(&x)?.data()[0])
}
