//! `postproc`: project noisy vectors, sample noise, evaluate the analysis
//! formulas, run experiments and plot residual histograms.
//!
//! Exit codes: 0 success, 1 experiment gate failure, 2 usage or domain error,
//! 3 infeasible or non-convergent projection, 4 I/O error.

mod input;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use postproc_core::analysis::{
    bias_bound, l1_ball_prob_geometric, l1_ball_prob_laplace, marginal_error_variance,
    BallProbabilityQuery, BiasBoundInputs,
};
use postproc_core::constraints::io::read_hierarchy;
use postproc_core::harness::{execute, ExperimentConfig};
use postproc_core::noise::sample_vector;
use postproc_core::{
    check_feasible, hierarchy_to_system, project_sum, project_sum_nonneg, Error, NoiseSpec,
    ProjectionResult, Projector, RngStream, SolverOptions,
};

#[derive(Parser)]
#[command(name = "postproc", version, about = "Post-processing of noisy counts")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Project a vector onto a sum constraint or a hierarchy.
    Project(ProjectArgs),
    /// Sample a noise vector.
    Noise(NoiseArgs),
    /// Evaluate a closed-form quantity.
    Formula {
        #[command(subcommand)]
        which: Formula,
    },
    /// Run an experiment config.
    Experiment(ExperimentArgs),
    /// Render residuals.csv as an SVG histogram.
    Plot(PlotArgs),
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct ProjectArgs {
    /// Comma-separated values, or a file with one value per line or a
    /// hierarchy CSV.
    #[arg(long = "in", value_name = "VECTOR|FILE", allow_hyphen_values = true)]
    input: String,
    /// Public total of a single sum constraint.
    #[arg(long, conflicts_with = "constraints")]
    sum: Option<f64>,
    /// Hierarchy file (CSV or JSON) whose consistency rows to enforce.
    #[arg(long, value_name = "FILE")]
    constraints: Option<PathBuf>,
    #[arg(long)]
    nonneg: bool,
    /// Feasibility tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Also write the result here.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Laplace,
    Geometric,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct NoiseArgs {
    #[arg(long, value_enum, default_value = "laplace")]
    family: Family,
    /// Laplace scale or geometric ratio.
    #[arg(long, conflicts_with_all = ["sensitivity", "epsilon"])]
    scale: Option<f64>,
    #[arg(long, requires = "epsilon")]
    sensitivity: Option<f64>,
    #[arg(long, requires = "sensitivity")]
    epsilon: Option<f64>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
}

#[derive(Subcommand)]
enum Formula {
    /// Pr[||Lap(lambda)^n||_1 <= r].
    #[command(allow_negative_numbers = true)]
    BallLaplace {
        #[arg(long)]
        r: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        lambda: f64,
    },
    /// Pr[||Geom(a)^n||_1 <= r] for integer r.
    #[command(allow_negative_numbers = true)]
    BallGeom {
        #[arg(long)]
        r: u64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        a: f64,
    },
    /// Bias bound of the non-negative projection.
    #[command(allow_negative_numbers = true)]
    BiasBound {
        #[arg(long)]
        rm: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        cprime: f64,
    },
    /// Variance of a sum projection's marginal error.
    #[command(allow_negative_numbers = true)]
    Variance {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        n: usize,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    config: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    residuals: PathBuf,
    #[arg(long, default_value_t = 40)]
    bins: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 640)]
    width: u32,
    /// Height of each panel.
    #[arg(long, default_value_t = 240)]
    height: u32,
}

enum Failure {
    Gates(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(e.into())
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible { .. } | Error::NotConverged { .. } => 3,
        Error::Io(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match cli.cmd {
        Command::Project(a) => cmd_project(a),
        Command::Noise(a) => cmd_noise(a),
        Command::Formula { which } => cmd_formula(which),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Plot(a) => cmd_plot(a),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Gates(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            if let Error::NotConverged { last_iterate, .. } = &e {
                eprintln!("last iterate: {}", input::join(last_iterate));
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn cmd_project(a: ProjectArgs) -> Result<(), Failure> {
    let vector = input::read_vector(&a.input)?;
    let opts = SolverOptions {
        eps_feas: a.tol,
        ..Default::default()
    };
    if let Some(tol) = a.tol {
        if !(tol > 0.0) {
            return Err(Error::Domain(format!("--tol must be positive, got {tol}")).into());
        }
    }
    let (res, ids, sys) = match (a.sum, &a.constraints) {
        (Some(total), None) => {
            let x = vector.positional()?;
            let res = if a.nonneg {
                project_sum_nonneg(&x, total)?
            } else {
                project_sum(&x, total)?
            };
            let sys = postproc_core::LinearSystem::sum_to(x.len(), total, a.nonneg)?;
            (res, None, sys)
        }
        (None, Some(path)) => {
            let h = read_hierarchy(path)?;
            let (sys, map) = hierarchy_to_system(&h, false)?;
            let sys = sys.with_nonneg(a.nonneg);
            let x = vector.arrange(&map)?;
            let res = Projector::new(&sys, opts)?.project(&x)?;
            let flat = h.flatten();
            (res, Some(flat), sys)
        }
        _ => {
            return Err(Error::Domain("give exactly one of --sum or --constraints".into()).into());
        }
    };
    let tol = a.tol.unwrap_or_else(|| opts.eps_for(&res.solution));
    let violations = check_feasible(&res.solution, &sys, tol)?;
    if let Some(v) = violations.first() {
        return Err(Error::Infeasible {
            residual: v.residual,
        }
        .into());
    }
    println!("{}", input::join(&res.solution));
    report_diagnostics(&res);
    if let Some(path) = a.out {
        let text = match ids {
            Some(flat) => input::node_csv(&flat, &res.solution),
            None => res.solution.iter().map(|v| format!("{}\n", input::num(*v))).collect(),
        };
        std::fs::write(path, text)?;
    }
    Ok(())
}

fn report_diagnostics(res: &ProjectionResult) {
    eprintln!(
        "objective={} iterations={} residual_inf={:e} active_nonneg={}",
        res.objective, res.iterations, res.residual_inf, res.active_nonneg
    );
}

fn cmd_noise(a: NoiseArgs) -> Result<(), Failure> {
    let spec = match (a.family, a.scale, a.sensitivity, a.epsilon) {
        (Family::Laplace, Some(s), _, _) => NoiseSpec::laplace(s)?,
        (Family::Geometric, Some(s), _, _) => NoiseSpec::geometric(s)?,
        (Family::Laplace, None, Some(d), Some(e)) => NoiseSpec::laplace_mechanism(d, e)?,
        (Family::Geometric, None, Some(d), Some(e)) => NoiseSpec::geometric_mechanism(d, e)?,
        _ => {
            return Err(
                Error::Domain("give --scale or both --sensitivity and --epsilon".into()).into(),
            )
        }
    };
    let v = sample_vector(&spec, a.n, RngStream::new(a.seed, a.stream))?;
    let mut out = String::new();
    for x in v {
        out.push_str(&input::num(x));
        out.push('\n');
    }
    print!("{out}");
    Ok(())
}

fn cmd_formula(f: Formula) -> Result<(), Failure> {
    let value = match f {
        Formula::BallLaplace { r, n, lambda } => {
            l1_ball_prob_laplace(BallProbabilityQuery::new(r, n, lambda)?)
        }
        Formula::BallGeom { r, n, a } => l1_ball_prob_geometric(r, a, n)?,
        Formula::BiasBound { rm, lambda, n, cprime } => {
            bias_bound(BiasBoundInputs::new(rm, lambda, n, cprime)?)
        }
        Formula::Variance { lambda, n } => {
            if !(lambda > 0.0) {
                return Err(Error::Domain(format!("lambda must be positive, got {lambda}")).into());
            }
            marginal_error_variance(lambda, n)?
        }
    };
    println!("{}", significant(value, 12));
    Ok(())
}

/// `%.{digits}g`.
fn significant(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        return format!("{m}e{exp}");
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let fixed = format!("{v:.decimals$}");
    if fixed.contains('.') {
        fixed.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        fixed
    }
}

fn cmd_experiment(a: ExperimentArgs) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let out = a.out.unwrap_or_else(|| cfg.output_dir.clone());
    let report = execute(&cfg, a.workers, &out)?;
    for g in &report.gates {
        println!("{} {}: {}", if g.pass { "pass" } else { "FAIL" }, g.name, g.detail);
    }
    eprintln!("wall time {:.2?}", report.wall_time);
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failing_gates().iter().map(|g| g.name.as_str()).collect();
        Err(Failure::Gates(format!("failing gates: {}", names.join(", "))))
    }
}

fn cmd_plot(a: PlotArgs) -> Result<(), Failure> {
    if a.bins == 0 {
        return Err(Error::Domain("--bins must be >= 1".into()).into());
    }
    let text = std::fs::read_to_string(&a.residuals)?;
    let groups = plot::read_residuals(&text)?;
    let svg = plot::histogram_svg(&groups, a.bins, a.width, a.height)?;
    std::fs::write(&a.out, svg)?;
    Ok(())
}
