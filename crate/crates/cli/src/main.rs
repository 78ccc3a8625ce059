//! `rawls`: synthetic data, moment estimation, FAT/FLAT adaptation,
//! evaluation, decision-boundary export and the finite-distribution oracle.
//!
//! Exit codes: 0 ok, 2 parse/usage, 3 I/O, 4 precondition, 5 infeasible.

mod error;
mod formats;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rawls_core::eval::{boundary_grid, evaluate};
use rawls_core::fat::fat_adapt;
use rawls_core::flat::{solve_flat1, solve_flat_general, GeneralOptions};
use rawls_core::oracle::{brute_force_rawls, dual_grid_maximize, dual_value, randomized_minimax_p1, DualWeights};
use rawls_core::stats::{estimate_moments, EstimationMode};
use rawls_core::synth::{generate, preset};
use rawls_core::Model;

use error::{Failure, Result};
use formats::{
    DistributionFile, DualCheck, EvalFile, Method, ModelFile, OptimumOut, OracleFile, StatsFile, SubPopRate,
};

#[derive(Parser)]
#[command(name = "rawls", version, about = "Minimax-fair adaptation of scores and embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatsMode {
    Full,
    Spherical,
    Score,
}

#[derive(Clone, Copy, ValueEnum)]
enum FlatMode {
    Spherical,
    General,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset as CSV.
    Synth {
        #[arg(long)]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate per-sub-population means and covariances.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "full")]
        mode: StatsMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Chebyshev-robust threshold for a 1-D score.
    Fat {
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gaussian-robust linear threshold for an embedding.
    Flat {
        #[arg(long)]
        stats: PathBuf,
        #[arg(long, value_enum, default_value = "general")]
        mode: FlatMode,
        /// Bisection tolerance on kappa (general mode).
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-sub-population error report of a model on a dataset.
    Eval {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact minimax classifier of a finite distribution.
    Oracle {
        #[arg(long)]
        dist: PathBuf,
        /// Simplex grid resolution of the dual check.
        #[arg(long, default_value_t = 200)]
        dual_res: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predicted labels of a 2-D linear model on a lattice.
    Boundary {
        #[arg(long)]
        model: PathBuf,
        /// `xmin,ymin,xmax,ymax`
        #[arg(long, allow_hyphen_values = true)]
        bbox: String,
        #[arg(long, default_value_t = 200)]
        res: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            preset: name,
            seed,
            out,
        } => {
            let data = generate(&preset(&name)?.with_seed(seed))?;
            formats::write_dataset(&out, &data)
        }
        Command::Stats { input, mode, out } => {
            let data = formats::read_dataset(&input)?;
            let mode = match mode {
                StatsMode::Full => EstimationMode::Full,
                StatsMode::Spherical => EstimationMode::Spherical,
                StatsMode::Score => EstimationMode::Score,
            };
            let table = estimate_moments(&data, mode)?;
            formats::write_json(&out, &StatsFile::from_table(&table))
        }
        Command::Fat { stats, out } => {
            let table = formats::read_json::<StatsFile>(&stats)?.to_table()?;
            let r = fat_adapt(&table)?;
            let file = ModelFile::from_model(&r.to_model().into(), Method::Fat, Some(r.k_star));
            formats::write_json(&out, &file)?;
            println!(
                "r_star={} j_star={} k_star={} b={}",
                r.r_star, r.j_star, r.k_star, r.b_star
            );
            Ok(())
        }
        Command::Flat { stats, mode, tol, out } => {
            let table = formats::read_json::<StatsFile>(&stats)?.to_table()?;
            let (r, method) = match mode {
                FlatMode::Spherical => (solve_flat1(&table)?, Method::Flat1),
                FlatMode::General => {
                    let opts = GeneralOptions {
                        tol_kappa: tol,
                        ..GeneralOptions::default()
                    };
                    (solve_flat_general(&table, opts)?, Method::Flat2)
                }
            };
            let file = ModelFile::from_model(&r.to_model().into(), method, Some(r.k_star));
            formats::write_json(&out, &file)?;
            println!(
                "r_star={} j_star={} k_star={} kappa={} mode={}",
                r.r_star, r.j_star, r.k_star, r.kappa_star, r.diagnostics.mode
            );
            Ok(())
        }
        Command::Eval { input, model, out } => {
            let data = formats::read_dataset(&input)?;
            let model = formats::read_json::<ModelFile>(&model)?.to_model()?;
            if model.dim() != data.d() {
                return Err(Failure::precondition(format!(
                    "model expects {} features, dataset has {}",
                    model.dim(),
                    data.d()
                )));
            }
            let report = evaluate(&data, &model)?;
            formats::write_json(&out, &EvalFile::new(&report, model.guarantee().map(|g| g.r_star)))
        }
        Command::Oracle { dist, dual_res, out } => {
            let file: DistributionFile = formats::read_json(&dist)?;
            formats::write_json(&out, &oracle_report(&file, dual_res)?)
        }
        Command::Boundary { model, bbox, res, out } => {
            let bbox = parse_bbox(&bbox)?;
            let model = match formats::read_json::<ModelFile>(&model)?.to_model()? {
                Model::Linear(m) => m,
                Model::Threshold(_) => return Err(Failure::precondition("boundary export needs a 2-D linear model")),
            };
            formats::write_grid(&out, &boundary_grid(&model, bbox, res)?)
        }
    }
}

fn parse_bbox(s: &str) -> Result<(f64, f64, f64, f64)> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
        .collect::<Option<_>>()
        .ok_or_else(|| Failure::parse(format!("bbox {s:?} must be four numbers `xmin,ymin,xmax,ymax`")))?;
    match v[..] {
        [a, b, c, d] => Ok((a, b, c, d)),
        _ => Err(Failure::parse(format!(
            "bbox {s:?} must be four numbers `xmin,ymin,xmax,ymax`, got {}",
            v.len()
        ))),
    }
}

fn oracle_report(file: &DistributionFile, dual_res: usize) -> Result<OracleFile> {
    let dist = file.to_distribution()?;
    let p = dist.p();
    let bf = brute_force_rawls(&dist)?;
    let optima = bf
        .optima
        .iter()
        .map(|o| OptimumOut {
            labels: o.classifier.assignment.clone(),
            rates: o
                .rates
                .iter()
                .map(|(id, &error)| SubPopRate {
                    y: id.label,
                    z: id.group,
                    error,
                })
                .collect(),
            max_error: o.max_error,
            trivial: o.classifier.is_trivial_on(&dist),
        })
        .collect();
    let argmax_sets = bf
        .optima
        .iter()
        .map(|o| o.argmax_set.iter().map(|&id| id.into()).collect())
        .collect();
    let (method, resolution, c, value) = if dist.n_subpops() <= 4 {
        let g = dual_grid_maximize(&dist, dual_res)?;
        ("grid", Some(dual_res), g.c_star.as_slice().to_vec(), g.value)
    } else {
        let k = dist.n_subpops();
        let c = DualWeights::new(p, vec![1.0 / k as f64; k])?;
        ("uniform", None, c.as_slice().to_vec(), dual_value(&dist, &c)?)
    };
    Ok(OracleFile {
        tool_version: OracleFile::version(),
        points: dist.points().to_vec(),
        p,
        r_star: bf.r_star,
        optima,
        argmax_sets,
        truncated: bf.truncated,
        dual_value_check: DualCheck {
            method,
            resolution,
            c,
            value,
            gap: bf.r_star - value,
        },
        randomized_r_star: if p == 1 {
            Some(randomized_minimax_p1(&dist)?)
        } else {
            None
        },
    })
}
