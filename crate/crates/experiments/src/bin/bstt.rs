use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bstt::regression::{relative_error, FitOptions};
use bstt::{
    build_augmented, build_block_structure, dof_count, local_rank_bound, Dictionary,
    SpaceDescriptor,
};
use bstt_experiments::reference::reference_spaces;
use bstt_experiments::{
    emit_study, fit_space, ingest_samples, reference_dof, run_study, ExperimentConfig, Format,
    StudyResult,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bstt", about = "Block-sparse tensor-train regression studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover the heat-control value function x^T P x.
    Riccati(StudyArgs),
    /// Recover exp(-|x|^2).
    Gaussian(StudyArgs),
    /// Fit a sample file and report the residual and an optional test error.
    IngestFit(IngestArgs),
    /// Degrees of freedom of ansatz spaces.
    Dof {
        #[arg(long = "space")]
        spaces: Vec<SpaceDescriptor>,
    },
    /// Block-size bounds per interface and degree.
    Bounds(BoundsArgs),
    /// Run a study described by a JSON config and write its output files.
    StudyEmit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct StudyArgs {
    /// Ansatz space, repeatable, e.g. "B(rho=4;W(d=8,g=2))".
    #[arg(long = "space")]
    spaces: Vec<SpaceDescriptor>,
    /// Training sample sizes, e.g. 100,200,500.
    #[arg(long, value_delimiter = ',')]
    samples: Vec<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    test_size: Option<usize>,
    /// Output prefix; writes <out>.jsonl, <out>.quantiles.csv, <out>.meta.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Solver options as JSON.
    #[arg(long)]
    opts: Option<PathBuf>,
    #[arg(long)]
    dictionary: Option<String>,
    /// Write every trial's samples as CSV into this directory.
    #[arg(long)]
    dump_dir: Option<PathBuf>,
    /// Record wall-clock seconds (makes output machine dependent).
    #[arg(long)]
    record_seconds: bool,
    /// Control penalty of the Riccati problem.
    #[arg(long)]
    control_penalty: Option<f64>,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    format: Option<Format>,
    #[arg(long)]
    space: SpaceDescriptor,
    #[arg(long, default_value = "legendre")]
    dictionary: String,
    /// Held-out samples in the same format.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    opts: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    g: usize,
    #[arg(long, default_value_t = usize::MAX)]
    rho: usize,
    /// Variable locality.
    #[arg(long)]
    kloc: Option<usize>,
    /// Structure of the augmented train (order d+1).
    #[arg(long)]
    augmented: bool,
}

fn read_opts(path: Option<&Path>) -> Result<Option<FitOptions>> {
    path.map(|p| {
        let text =
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        FitOptions::from_json(&text).with_context(|| format!("parsing {}", p.display()))
    })
    .transpose()
}

fn study_config(mut cfg: ExperimentConfig, a: StudyArgs) -> Result<ExperimentConfig> {
    if !a.spaces.is_empty() {
        cfg.spaces = a.spaces;
    }
    if !a.samples.is_empty() {
        cfg.sample_sizes = a.samples;
    }
    if let Some(o) = read_opts(a.opts.as_deref())? {
        cfg.options = o;
    }
    cfg.trials = a.trials.unwrap_or(cfg.trials);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.test_size = a.test_size.unwrap_or(cfg.test_size);
    cfg.control_penalty = a.control_penalty.unwrap_or(cfg.control_penalty);
    cfg.dictionary = a.dictionary.or(cfg.dictionary);
    cfg.dump_dir = a.dump_dir.or(cfg.dump_dir);
    cfg.output = a.out.or(cfg.output);
    cfg.record_seconds |= a.record_seconds;
    cfg.validate()?;
    Ok(cfg)
}

fn print_dof(space: &SpaceDescriptor, dof: Option<u64>) {
    let value = dof.map_or("-".to_string(), |v| v.to_string());
    match reference_dof(space) {
        Some(r) if r.convention_differs => {
            println!(
                "dof {space} {value} (published {}, different counting convention)",
                r.value
            )
        }
        Some(r) => println!("dof {space} {value} (published {})", r.value),
        None => println!("dof {space} {value}"),
    }
}

fn report(result: &StudyResult) -> Result<()> {
    for line in &result.dof {
        print_dof(&line.space, line.dof);
    }
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3e}"));
    println!(
        "{:<28} {:>7} {:>10} {:>10} {:>10} {:>6}",
        "space", "M", "q15", "median", "q85", "failed"
    );
    for q in &result.quantiles {
        println!(
            "{:<28} {:>7} {:>10} {:>10} {:>10} {:>6}",
            q.space.to_string(),
            q.m,
            fmt(q.q15),
            fmt(q.median),
            fmt(q.q85),
            q.failed
        );
    }
    if let Some(out) = &result.config.output {
        for p in emit_study(result, out)? {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn ingest_fit(a: IngestArgs) -> Result<()> {
    let format = a.format.unwrap_or_else(|| Format::from_path(&a.input));
    let dict = Dictionary::from_name(&a.dictionary, a.space.p())?;
    let train = ingest_samples(&a.input, format, dict.clone())?;
    let mut opts = read_opts(a.opts.as_deref())?.unwrap_or_default();
    opts.seed = a.seed.unwrap_or(opts.seed);
    let (model, mut rep) = fit_space(&a.space, &train, &opts)?;
    if let Some(test) = &a.test {
        let test = ingest_samples(
            test,
            a.format.unwrap_or_else(|| Format::from_path(test)),
            dict,
        )?;
        rep.test_error = Some(relative_error(model.as_ref(), &test)?);
    }
    print_dof(&a.space, dof_count(&a.space).ok());
    println!("{}", rep.to_json()?);
    Ok(())
}

fn bounds(a: BoundsArgs) -> Result<()> {
    let bs = if a.augmented {
        build_augmented(a.d, a.g, a.rho, a.kloc)?
    } else {
        build_block_structure(a.d, a.g, a.rho, a.kloc)?
    };
    print!("{:>4}", "k");
    for h in 0..=a.g {
        print!(" {:>6}", format!("h={h}"));
    }
    println!();
    for (k, row) in bs.table().iter().enumerate() {
        print!("{k:>4}");
        for v in row {
            print!(" {v:>6}");
        }
        println!();
    }
    if let Some(kloc) = a.kloc {
        print!("locality bound K={kloc}:");
        for h in 0..=a.g {
            print!(" {}", local_rank_bound(a.g, h, kloc, a.augmented));
        }
        println!();
    }
    println!("dof {}", bs.dof());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Riccati(a) => report(&run_study(&study_config(ExperimentConfig::riccati(), a)?)?),
        Command::Gaussian(a) => {
            report(&run_study(&study_config(ExperimentConfig::gaussian(), a)?)?)
        }
        Command::IngestFit(a) => ingest_fit(a),
        Command::Dof { spaces } => {
            let spaces = if spaces.is_empty() {
                reference_spaces()
            } else {
                spaces
            };
            for s in &spaces {
                print_dof(s, dof_count(s).ok());
            }
            Ok(())
        }
        Command::Bounds(a) => bounds(a),
        Command::StudyEmit { config, out } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let mut cfg = ExperimentConfig::from_json(&text)?;
            cfg.output = out.or(cfg.output);
            if cfg.output.is_none() {
                bail!("no output prefix: pass --out or set \"output\" in the config");
            }
            report(&run_study(&cfg)?)
        }
    }
}
