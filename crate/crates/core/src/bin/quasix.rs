use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use quasix::balls::{cover, shrunk_slice_measure, verify_quasiextremal, BallParams};
use quasix::combinatorics::{build_tower, convexify, extract_ball};
use quasix::config::{default_config, ExperimentConfig};
use quasix::error::Error;
use quasix::generators::{gen_paraboloid_cluster, gen_random_sets};
use quasix::geom::SpacePoint;
use quasix::grid::GridSet;
use quasix::suites::{calibrate, run_suite, write_reports, SUITE_NAMES};
use quasix::symmetry::{apply_pair, check_invariance, SymmetryWord};
use quasix::transform::{bilinear_mc, score, QuadratureSpec};

#[derive(Parser)]
#[command(
    name = "quasix",
    about = "Incidence counting under a parabolic Radon-like transform: quasiextremal scores, the ball family, its symmetries, and verification suites.",
    version
)]
struct Cli {
    /// Ambient dimension for generators and default configs.
    #[arg(long, global = true, default_value_t = 2)]
    dim: usize,
    /// Output directory for reports and generated files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Payload format on stdout.
    #[arg(long, global = true, default_value = "json")]
    format: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a pair of voxel sets under the incidence functional.
    Eval(EvalArgs),
    /// Ball-family operations.
    Ball {
        #[command(subcommand)]
        cmd: BallCmd,
    },
    /// Apply a symmetry word or check its invariance.
    Symmetry {
        #[command(subcommand)]
        cmd: SymmetryCmd,
    },
    /// Build the two-step tower of a pair and write it out.
    Tower {
        #[command(subcommand)]
        cmd: TowerCmd,
    },
    /// Balanced convex approximation of a voxel set.
    Convexify {
        /// JSON file holding the GridSet.
        #[arg(long)]
        set: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        eta: f64,
        /// Search around the mass center instead of the origin.
        #[arg(long)]
        unbalanced: bool,
    },
    /// Extract the dominating ball of a pair.
    Extract(EvalArgs),
    /// Corpus generators.
    Generate {
        #[command(subcommand)]
        cmd: GenerateCmd,
    },
    /// Verification suites.
    Suite {
        #[command(subcommand)]
        cmd: SuiteCmd,
    },
    /// Measure the empirical baselines and write a frozen-constant config.
    Calibrate {
        /// Base configuration (defaults derive from --dim).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output config path.
        #[arg(long, default_value = "config/frozen.json")]
        write: PathBuf,
    },
}

#[derive(Args)]
struct EvalArgs {
    /// JSON file holding E.
    #[arg(long)]
    e: PathBuf,
    /// JSON file holding E*.
    #[arg(long)]
    estar: PathBuf,
    /// t-lattice step.
    #[arg(long, default_value_t = 1.0 / 64.0)]
    t_res: f64,
    /// Also run the Monte Carlo oracle with this many samples.
    #[arg(long)]
    mc: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum BallCmd {
    /// Validate ball parameters from a JSON file.
    Make {
        #[arg(long)]
        params: PathBuf,
    },
    /// Score the rasterized envelope pair of a ball.
    Score {
        #[arg(long)]
        params: PathBuf,
    },
    /// Cover a ball by sub-balls of envelope fraction delta.
    Cover {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        delta: f64,
    },
    /// Second-factor slice measure through a point of the shrunk envelope.
    Slice {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        eps: f64,
        /// Comma-separated coordinates of x.
        #[arg(long)]
        x: String,
    },
}

#[derive(Subcommand)]
enum SymmetryCmd {
    /// Apply a word (JSON array of generators) to a ball or incidence pair.
    Apply {
        #[arg(long)]
        word: PathBuf,
        /// Ball parameter file to transform.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Incidence pair "x1,..,xd;y1,..,yd" to transform.
        #[arg(long)]
        z: Option<String>,
    },
    /// Sample on-manifold points and report the worst image residual.
    Check {
        #[arg(long)]
        word: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum TowerCmd {
    Build(EvalArgs),
}

#[derive(Subcommand)]
enum GenerateCmd {
    /// The sparse paraboloid-cluster counterexample family.
    ParaboloidCluster {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.04)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// A pair from a tagged generator spec (JSON).
    Random {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        index: u64,
    },
}

#[derive(Subcommand)]
enum SuiteCmd {
    /// Run one suite (or `all`) against a config.
    Run {
        name: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_set(path: &PathBuf) -> Result<GridSet, Error> {
    let text = std::fs::read_to_string(path)?;
    GridSet::from_json(&serde_json::from_str(&text)?)
}

fn load_ball(path: &PathBuf) -> Result<BallParams, Error> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn load_config(path: &Option<PathBuf>, dim: usize) -> Result<ExperimentConfig, Error> {
    match path {
        Some(p) => ExperimentConfig::from_file(p),
        None => Ok(default_config(dim)),
    }
}

fn emit(value: &serde_json::Value, format: &str) {
    if format == "csv" {
        if let Some(obj) = value.as_object() {
            let keys: Vec<&String> = obj.keys().collect();
            println!("{}", keys.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(","));
            println!(
                "{}",
                keys.iter().map(|k| obj[k.as_str()].to_string()).collect::<Vec<_>>().join(",")
            );
            return;
        }
    }
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn parse_point_list(text: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::ConfigInvalid(format!("bad coordinate {s}: {e}")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Eval(args) => {
            let e = load_set(&args.e)?;
            let estar = load_set(&args.estar)?;
            let q = QuadratureSpec::auto(args.t_res);
            let s = score(&e, &estar, &q)?;
            let mut value = serde_json::to_value(s)?;
            if let Some(n) = args.mc {
                let (mc, se) = bilinear_mc(&e, &estar, args.seed, n)?;
                value["mc_estimate"] = serde_json::json!(mc);
                value["stderr"] = serde_json::json!(se);
            }
            emit(&value, &cli.format);
            Ok(0)
        }
        Command::Ball { cmd } => match cmd {
            BallCmd::Make { params } => {
                let ball = load_ball(&params)?;
                emit(&serde_json::to_value(&ball)?, &cli.format);
                Ok(0)
            }
            BallCmd::Score { params } => {
                let ball = load_ball(&params)?;
                let s = verify_quasiextremal(&ball, &ball.suggested_quadrature())?;
                emit(&serde_json::to_value(s)?, &cli.format);
                Ok(0)
            }
            BallCmd::Cover { params, delta } => {
                let ball = load_ball(&params)?;
                let family = cover(&ball, delta)?;
                std::fs::create_dir_all(&cli.out)?;
                let path = cli.out.join("cover.json");
                std::fs::write(&path, serde_json::to_string_pretty(&family)? + "\n")?;
                emit(
                    &serde_json::json!({
                        "cardinality": family.len(),
                        "delta": delta,
                        "written": path,
                    }),
                    &cli.format,
                );
                Ok(0)
            }
            BallCmd::Slice { params, eps, x } => {
                let ball = load_ball(&params)?;
                let coords = parse_point_list(&x)?;
                let q = ball.suggested_quadrature();
                let m = shrunk_slice_measure(&ball, eps, &SpacePoint::new(coords), &q)?;
                let full: f64 = ball.r_star().iter().map(|r| 2.0 * r).product();
                emit(&serde_json::json!({"slice_measure": m, "full_box": full}), &cli.format);
                Ok(0)
            }
        },
        Command::Symmetry { cmd } => match cmd {
            SymmetryCmd::Apply { word, params, z } => {
                let text = std::fs::read_to_string(&word)?;
                let word: SymmetryWord = serde_json::from_str(&text)?;
                if let Some(p) = params {
                    let ball = load_ball(&p)?;
                    let out = quasix::balls::apply_ball_word(&word, &ball)?;
                    emit(&serde_json::to_value(&out)?, &cli.format);
                } else if let Some(z) = z {
                    let parts: Vec<&str> = z.split(';').collect();
                    if parts.len() != 2 {
                        return Err(Error::ConfigInvalid("expected \"x1,..,xd;y1,..,yd\"".into()));
                    }
                    let zin = quasix::geom::IncidencePoint::new(
                        SpacePoint::new(parse_point_list(parts[0])?),
                        SpacePoint::new(parse_point_list(parts[1])?),
                    );
                    let out = apply_pair(&word, &zin)?;
                    emit(&serde_json::to_value(&out)?, &cli.format);
                } else {
                    return Err(Error::ConfigInvalid("pass --params or --z".into()));
                }
                Ok(0)
            }
            SymmetryCmd::Check { word, samples, seed } => {
                let text = std::fs::read_to_string(&word)?;
                let word: SymmetryWord = serde_json::from_str(&text)?;
                let rep = check_invariance(&word, cli.dim, samples, seed)?;
                emit(&serde_json::to_value(&rep)?, &cli.format);
                Ok(0)
            }
        },
        Command::Tower { cmd: TowerCmd::Build(args) } => {
            let e = load_set(&args.e)?;
            let estar = load_set(&args.estar)?;
            let q = QuadratureSpec::auto(args.t_res);
            let tower = build_tower(&e, &estar, &q)?;
            std::fs::create_dir_all(&cli.out)?;
            let path = cli.out.join("tower.json");
            std::fs::write(&path, serde_json::to_string_pretty(&tower.to_json())? + "\n")?;
            emit(
                &serde_json::json!({
                    "alpha": tower.alpha,
                    "alpha_star": tower.alpha_star,
                    "omega1_measure": tower.omega1_measure(),
                    "fiber_measure": tower.fiber_measure(),
                    "fibers": tower.fibers.len(),
                    "written": path,
                }),
                &cli.format,
            );
            Ok(0)
        }
        Command::Convexify { set, eta, unbalanced } => {
            let s = load_set(&set)?;
            let c = convexify(&s, eta, !unbalanced)?;
            emit(&serde_json::to_value(&c)?, &cli.format);
            Ok(0)
        }
        Command::Extract(args) => {
            let e = load_set(&args.e)?;
            let estar = load_set(&args.estar)?;
            let q = QuadratureSpec::auto(args.t_res);
            let (ball, report) = extract_ball(&e, &estar, &q)?;
            let mut value = serde_json::to_value(&report)?;
            value["ball"] = serde_json::to_value(&ball)?;
            emit(&value, &cli.format);
            Ok(0)
        }
        Command::Generate { cmd } => {
            std::fs::create_dir_all(&cli.out)?;
            let (e, estar, label) = match cmd {
                GenerateCmd::ParaboloidCluster { n, delta, seed } => {
                    let (e, s) = gen_paraboloid_cluster(cli.dim, n, delta, seed)?;
                    (e, s, format!("paraboloid_cluster_n{n}"))
                }
                GenerateCmd::Random { spec, seed, index } => {
                    let text = std::fs::read_to_string(&spec)?;
                    let spec = serde_json::from_str(&text)?;
                    let pair = gen_random_sets(&spec, cli.dim, seed, index)?;
                    (pair.e, pair.estar, pair.label)
                }
            };
            let e_path = cli.out.join("E.json");
            let s_path = cli.out.join("Estar.json");
            std::fs::write(&e_path, serde_json::to_string(&e.to_json())? + "\n")?;
            std::fs::write(&s_path, serde_json::to_string(&estar.to_json())? + "\n")?;
            emit(
                &serde_json::json!({
                    "label": label,
                    "measure_e": e.measure(),
                    "measure_estar": estar.measure(),
                    "e": e_path,
                    "estar": s_path,
                }),
                &cli.format,
            );
            Ok(0)
        }
        Command::Suite { cmd: SuiteCmd::Run { name, config } } => {
            let cfg = load_config(&config, cli.dim)?;
            let names: Vec<String> = if name == "all" {
                SUITE_NAMES.iter().map(|s| s.to_string()).collect()
            } else {
                if !SUITE_NAMES.contains(&name.as_str()) {
                    return Err(Error::UnknownSuite(name));
                }
                vec![name]
            };
            let mut all_passed = true;
            for suite_name in &names {
                let outcome = run_suite(suite_name, &cfg)?;
                write_reports(&outcome, &cli.out)?;
                println!("suite {suite_name}: {}", if outcome.passed { "PASS" } else { "FAIL" });
                for f in &outcome.failures {
                    println!("  - {f}");
                }
                all_passed &= outcome.passed;
            }
            Ok(if all_passed { 0 } else { 1 })
        }
        Command::Calibrate { config, write } => {
            let base = load_config(&config, cli.dim)?;
            let frozen = calibrate(&base)?;
            let mut cfg = base;
            cfg.frozen_constants = frozen;
            if let Some(dir) = write.parent() {
                std::fs::create_dir_all(dir)?;
            }
            cfg.to_file(&write)?;
            println!("calibrated constants written to {}", write.display());
            Ok(0)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code().max(1));
        }
    }
}
