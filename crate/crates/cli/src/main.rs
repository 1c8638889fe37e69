use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DVector;

use erglab_cli::cfg::{resolve_system, validate_config, AnySystem, Params};
use erglab_cli::{init_workers, runs, CliError, CliResult};
use erglab_core::manifold::TransformParams;

#[derive(Parser)]
#[command(name = "erglab", version, about = "conservative-dynamics laboratory")]
struct Cli {
    /// TOML config file; every flag overrides the matching key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV / JSON-lines artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker-pool size (also: env ERGLAB_WORKERS). Never affects results.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Lyapunov spectra over sample points.
    Spectrum {
        #[arg(long)]
        system: Option<String>,
        #[arg(long)]
        points: Option<u64>,
        #[arg(long)]
        n: Option<u64>,
    },
    /// Dominated-splitting reports.
    Dominate {
        #[arg(long)]
        system: Option<String>,
        #[arg(long)]
        index: Option<u64>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long = "m-max")]
        m_max: Option<u64>,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        points: Option<u64>,
    },
    /// Pesin-block parameter selection and block lemma check.
    Block {
        #[arg(long)]
        system: Option<String>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        index: Option<u64>,
    },
    /// Exact / estimated ergodic decompositions and the variance table.
    Decompose {
        #[arg(long)]
        system: Option<String>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        degree: Option<u64>,
        #[arg(long)]
        points: Option<u64>,
    },
    /// Center-stable disk construction plus contraction verification.
    Disk {
        #[arg(long)]
        system: Option<String>,
        /// Base point, comma-separated coordinates.
        #[arg(long)]
        x: Option<String>,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        ell: Option<u64>,
        #[arg(long)]
        depth: Option<u64>,
        #[arg(long)]
        resolution: Option<u64>,
        #[arg(long)]
        index: Option<u64>,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        iterates: Option<u64>,
    },
    /// Lemma fuzzing against exact finite oracles.
    Oracle {
        #[arg(long)]
        lemma: Option<String>,
        #[arg(long)]
        count: Option<u64>,
    },
    /// Continuity experiment on the perturbed cat family.
    Perturb {
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long = "n-dec")]
        n_dec: Option<u64>,
    },
    /// Parameter sweep with regime classification.
    Sweep {
        #[arg(long)]
        system: Option<String>,
        #[arg(long)]
        param: Option<String>,
        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        points: Option<u64>,
        #[arg(long)]
        n: Option<u64>,
    },
    /// Validate a config file without running.
    Validate { path: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_workers(cli.workers);
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> CliResult<String> {
    let sub = match &cli.cmd {
        Cmd::Spectrum { .. } => "spectrum",
        Cmd::Dominate { .. } => "dominate",
        Cmd::Block { .. } => "block",
        Cmd::Decompose { .. } => "decompose",
        Cmd::Disk { .. } => "disk",
        Cmd::Oracle { .. } => "oracle",
        Cmd::Perturb { .. } => "perturb",
        Cmd::Sweep { .. } => "sweep",
        Cmd::Validate { .. } => "validate",
    };
    if let Cmd::Validate { path } = &cli.cmd {
        let (lines, ok) = validate_config(path);
        let text = lines.join("\n");
        if ok {
            return Ok(text);
        }
        return Err(CliError::Schema(text));
    }

    let p = Params::load(cli.config.as_deref(), sub)?;
    let out = cli
        .out
        .clone()
        .or_else(|| {
            p.string_or("out", None, "")
                .ok()
                .filter(|s| !s.is_empty())
                .map(PathBuf::from)
        })
        .unwrap_or_else(|| PathBuf::from("."));
    let seed = p.integer("seed", cli.seed);
    let mut echo: Vec<(String, String)> = Vec::new();

    let summary = match cli.cmd {
        Cmd::Spectrum { system, points, n } => {
            let seed = seed?;
            let system = p.string("system", system)?;
            let points = p.integer("points", points)? as usize;
            let n = p.integer("n", n)? as usize;
            echo.push(("system".into(), system.clone()));
            echo.push(("points".into(), points.to_string()));
            echo.push(("n".into(), n.to_string()));
            echo.push(("seed".into(), seed.to_string()));
            let sys = resolve_system(&system, seed)?;
            runs::run_spectrum(&sys, points, n, seed, &out)?
        }
        Cmd::Dominate {
            system,
            index,
            n,
            m_max,
            horizon,
            points,
        } => {
            let seed = seed?;
            let system = p.string("system", system)?;
            let index = p.integer("index", index)? as usize;
            let n = p.integer("n", n)? as usize;
            let m_max = p.integer("m_max", m_max)? as usize;
            let horizon = p.integer_or("horizon", horizon, 30)? as usize;
            let points = p.integer_or("points", points, 100)? as usize;
            echo.push(("system".into(), system.clone()));
            echo.push(("index".into(), index.to_string()));
            echo.push(("seed".into(), seed.to_string()));
            let sys = resolve_system(&system, seed)?;
            runs::run_dominate(&sys, index, n, m_max, horizon, points, seed, &out)?
        }
        Cmd::Block { system, eta, index } => {
            let system = p.string("system", system)?;
            let eta = p.real("eta", eta)?;
            let index = p.integer("index", index)? as usize;
            echo.push(("system".into(), system.clone()));
            echo.push(("eta".into(), eta.to_string()));
            let sys = resolve_system(&system, seed.unwrap_or(0))?;
            let AnySystem::Finite(fsys) = sys else {
                return Err(CliError::Schema(
                    "block needs a finite system (file: or random:)".to_string(),
                ));
            };
            runs::run_block(&fsys, eta, index, &out)?
        }
        Cmd::Decompose {
            system,
            n,
            radius,
            degree,
            points,
        } => {
            let seed = seed?;
            let system = p.string("system", system)?;
            let n = p.integer("n", n)? as usize;
            let radius = p.real("radius", radius)?;
            let degree = p.integer_or("degree", degree, 8)? as i64;
            let points = p.integer_or("points", points, 100)? as usize;
            echo.push(("system".into(), system.clone()));
            echo.push(("n".into(), n.to_string()));
            echo.push(("radius".into(), radius.to_string()));
            let sys = resolve_system(&system, seed)?;
            runs::run_decompose(&sys, n, radius, degree, points, seed, &out)?
        }
        Cmd::Disk {
            system,
            x,
            r,
            ell,
            depth,
            resolution,
            index,
            horizon,
            iterates,
        } => {
            let system = p.string("system", system)?;
            let xs = p.string("x", x)?;
            let r = p.real("r", r)?;
            let params = TransformParams {
                ell: p.integer("ell", ell)? as usize,
                depth: p.integer("depth", depth)? as usize,
                resolution: p.integer_or("resolution", resolution, 17)? as usize,
                index: p.integer_or("index", index, 1)? as usize,
                horizon: p.integer_or("horizon", horizon, 30)? as usize,
            };
            let iterates = p.integer_or("iterates", iterates, 30)? as usize;
            echo.push(("system".into(), system.clone()));
            echo.push(("x".into(), xs.clone()));
            echo.push(("r".into(), r.to_string()));
            let sys = resolve_system(&system, seed.unwrap_or(0))?;
            let AnySystem::Torus(map) = sys else {
                return Err(CliError::Schema("disk needs a torus map".to_string()));
            };
            let coords: Vec<f64> = xs
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| CliError::Schema(format!("bad coordinate `{s}` in `disk.x`")))
                })
                .collect::<CliResult<_>>()?;
            if coords.len() != map.dim() {
                return Err(CliError::Schema(format!(
                    "`disk.x` needs {} coordinates, got {}",
                    map.dim(),
                    coords.len()
                )));
            }
            runs::run_disk(&map, &DVector::from_vec(coords), r, &params, iterates, &out)?
        }
        Cmd::Oracle { lemma, count } => {
            let seed = seed?;
            let lemma = p.string("lemma", lemma)?;
            let count = p.integer("count", count)? as usize;
            echo.push(("lemma".into(), lemma.clone()));
            echo.push(("count".into(), count.to_string()));
            echo.push(("seed".into(), seed.to_string()));
            runs::run_oracle(&lemma, count, seed, &out)?
        }
        Cmd::Perturb { samples, n, n_dec } => {
            let seed = seed?;
            let samples = p.integer_or("samples", samples, 16)? as usize;
            let n = p.integer_or("n", n, 2000)? as usize;
            let n_dec = p.integer_or("n_dec", n_dec, 400)? as usize;
            echo.push(("seed".into(), seed.to_string()));
            echo.push(("samples".into(), samples.to_string()));
            runs::run_perturb(seed, samples, n, n_dec, &out)?
        }
        Cmd::Sweep {
            system,
            param,
            from,
            to,
            steps,
            points,
            n,
        } => {
            let seed = seed?;
            let system = p.string("system", system)?;
            let param = p.string("param", param)?;
            let from = p.real("from", from)?;
            let to = p.real("to", to)?;
            let steps = p.integer("steps", steps)? as usize;
            let points = p.integer_or("points", points, 10)? as usize;
            let n = p.integer_or("n", n, 2000)? as usize;
            echo.push(("system".into(), system.clone()));
            echo.push(("param".into(), param.clone()));
            echo.push(("steps".into(), steps.to_string()));
            runs::run_sweep(&system, &param, from, to, steps, points, n, seed, &out)?
        }
        Cmd::Validate { .. } => unreachable!("handled above"),
    };
    runs::write_report(&out, sub, &echo, &[summary.clone()])?;
    Ok(summary)
}
