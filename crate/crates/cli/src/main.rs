//! Command-line interface for DAR(p) model simulation, estimation, mixture-order
//! selection, Monte Carlo studies, and Value-at-Risk backtesting.

use std::error::Error;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use darmix::backtest::{rolling_backtest, VarConfig, VarEstimator};
use darmix::dar::{simulate, DarParams, Series};
use darmix::estimate::{fit_nmqmle, FitConfig};
use darmix::harness::{
    load_returns, parse_scenario, run_monte_carlo, ReturnKind, ReturnsConfig,
};
use darmix::innovations::{sample_innovations, InnovationSpec};
use darmix::select::{select_k, slope_heuristic, Criterion, SlopeMethod};

#[derive(Parser)]
#[command(
    name = "darmix",
    version,
    about = "Double autoregressive models with normal-mixture quasi-maximum likelihood"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Aic,
    Bic,
    Icl,
    Ddse,
    Djump,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReturnKindArg {
    Log,
    Simple,
}

#[derive(Args)]
struct FitOpts {
    /// Optimizer restarts per fit.
    #[arg(long, default_value_t = 8)]
    starts: usize,
    /// Seed for optimizer restarts and EM initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl FitOpts {
    fn config(&self) -> FitConfig {
        FitConfig { starts: self.starts, seed: self.seed, ..FitConfig::default() }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a DAR(p) series and write it as `t,value` CSV.
    Simulate {
        /// Model parameters, e.g. "phi=0.3,0.1;omega=1.0;alpha=0.5,0.2".
        #[arg(long)]
        params: String,
        /// Innovation law: normal | t:DF | skewnormal:SHAPE | skewt:TAIL,ASYM | mixture:FILE.
        #[arg(long, default_value = "normal")]
        innovation: String,
        /// Observations to keep after burn-in.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Initial simulated points to discard.
        #[arg(long, default_value_t = 500)]
        burn_in: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a DAR(p) model by normal-mixture QMLE.
    Fit {
        /// Series CSV (`t,value`, presample rows at t <= 0).
        #[arg(long)]
        data: PathBuf,
        /// Autoregressive order p.
        #[arg(long, default_value_t = 1)]
        order: usize,
        /// Mixture components (ignored when --criterion is given).
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Choose K by this criterion over --kmin..=--kmax before fitting.
        #[arg(long)]
        criterion: Option<CriterionArg>,
        #[arg(long, default_value_t = 1)]
        kmin: usize,
        #[arg(long, default_value_t = 15)]
        kmax: usize,
        /// Write the coefficient table CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        fit: FitOpts,
    },
    /// Fit every K in a range and print the selection table.
    SelectK {
        /// Series CSV (`t,value`, presample rows at t <= 0).
        #[arg(long)]
        data: PathBuf,
        /// Autoregressive order p.
        #[arg(long, default_value_t = 1)]
        order: usize,
        #[arg(long, default_value_t = 1)]
        kmin: usize,
        #[arg(long, default_value_t = 15)]
        kmax: usize,
        /// Write the table CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        fit: FitOpts,
    },
    /// Expanding-window VaR backtest on a `date,close` price CSV.
    Backtest {
        #[arg(long)]
        data: PathBuf,
        /// VaR tail level.
        #[arg(long, default_value_t = 0.05)]
        p: f64,
        /// Autoregressive order of the forecasting model.
        #[arg(long, default_value_t = 1)]
        order: usize,
        /// Mixture components; omit for Gaussian QMLE.
        #[arg(long)]
        k: Option<usize>,
        /// First index of the estimation window (1-based, after return formation).
        #[arg(long, default_value_t = 1)]
        estimation_start: usize,
        /// First forecast index; defaults to the second half of the sample.
        #[arg(long)]
        test_start: Option<usize>,
        /// Last forecast index; defaults to the end of the sample.
        #[arg(long)]
        test_end: Option<usize>,
        #[arg(long, default_value_t = 1)]
        refit_every: usize,
        #[arg(long, value_enum, default_value_t = ReturnKindArg::Log)]
        return_kind: ReturnKindArg,
        /// Return scale factor (100 = percent returns).
        #[arg(long, default_value_t = 100.0)]
        scale: f64,
        /// Write per-step `t,y,var,hit` CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        fit: FitOpts,
    },
    /// Run a Monte Carlo scenario file and write the accuracy table.
    Mc {
        /// Keyed-text scenario configuration.
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario's replicate count.
        #[arg(long)]
        reps: Option<usize>,
        /// Override the scenario's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the `parameter,estimator,rmse,mean_bias` CSV here.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses "phi=0.3,0.1;omega=1.0;alpha=0.5,0.2" into model parameters.
fn parse_params(s: &str) -> Result<DarParams, String> {
    let mut phi = None;
    let mut omega = None;
    let mut alpha = None;
    for part in s.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (key, value) =
            part.split_once('=').ok_or_else(|| format!("expected key=value in `{part}`"))?;
        let nums: Result<Vec<f64>, _> =
            value.split(',').map(|t| t.trim().parse::<f64>()).collect();
        let nums = nums.map_err(|e| format!("{key}: {e}"))?;
        match key.trim() {
            "phi" => phi = Some(nums),
            "omega" if nums.len() == 1 => omega = Some(nums[0]),
            "omega" => return Err("omega takes a single value".into()),
            "alpha" => alpha = Some(nums),
            other => return Err(format!("unknown parameter key `{other}`")),
        }
    }
    DarParams::new(
        phi.ok_or("missing phi")?,
        omega.ok_or("missing omega")?,
        alpha.ok_or("missing alpha")?,
    )
    .map_err(|e| e.to_string())
}

fn read_series(path: &PathBuf) -> Result<Series, Box<dyn Error>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    Ok(Series::from_csv(&text)?)
}

fn write_out(path: &PathBuf, content: &str) -> Result<(), Box<dyn Error>> {
    std::fs::write(path, content).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    Ok(())
}

/// Prints to stdout, treating a closed pipe (e.g. `darmix … | head`) as a
/// normal hang-up rather than an error. Every subcommand writes its output
/// files before printing anything, so quitting here loses no artifacts.
fn emit(text: &str) {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    if stdout.write_all(text.as_bytes()).and_then(|()| stdout.flush()).is_err() {
        std::process::exit(0);
    }
}

fn run() -> Result<(), Box<dyn Error>> {
    match Cli::parse().command {
        Command::Simulate { params, innovation, n, seed, burn_in, out } => {
            let params = parse_params(&params)?;
            let spec = InnovationSpec::parse(&innovation)?;
            let eta = sample_innovations(&spec, n + burn_in, seed);
            let presample = vec![0.0; params.order()];
            let series = simulate(&params, &eta, &presample, burn_in)?;
            write_out(&out, &series.to_csv())?;
            emit(&format!("wrote {} observations to {}\n", series.len(), out.display()));
        }
        Command::Fit { data, order, k, criterion, kmin, kmax, out, fit } => {
            let series = read_series(&data)?;
            let cfg = fit.config();
            let k = match criterion {
                None => k,
                Some(c) => {
                    let table = select_k(&series, order, kmin, kmax, &cfg)?;
                    let chosen = match c {
                        CriterionArg::Aic => table.chosen(Criterion::Aic),
                        CriterionArg::Bic => table.chosen(Criterion::Bic),
                        CriterionArg::Icl => table.chosen(Criterion::Icl),
                        CriterionArg::Ddse => slope_heuristic(&table, SlopeMethod::Ddse).ok(),
                        CriterionArg::Djump => slope_heuristic(&table, SlopeMethod::Djump).ok(),
                    };
                    chosen.ok_or("no converged fit in the K range")?
                }
            };
            let result = fit_nmqmle(&series, order, k, &cfg)?;
            let mut text = result.to_keyed_text();
            if let Some(out) = out {
                write_out(&out, &result.coefficients_csv())?;
                text.push_str(&format!("coefficients written to {}\n", out.display()));
            }
            emit(&text);
        }
        Command::SelectK { data, order, kmin, kmax, out, fit } => {
            let series = read_series(&data)?;
            let table = select_k(&series, order, kmin, kmax, &fit.config())?;
            let mut text = table.summary();
            if let Some(out) = out {
                write_out(&out, &table.to_csv())?;
                text.push_str(&format!("table written to {}\n", out.display()));
            } else {
                text.push_str(&table.to_csv());
            }
            emit(&text);
        }
        Command::Backtest {
            data,
            p,
            order,
            k,
            estimation_start,
            test_start,
            test_end,
            refit_every,
            return_kind,
            scale,
            out,
            fit,
        } => {
            let returns_cfg = ReturnsConfig {
                kind: match return_kind {
                    ReturnKindArg::Log => ReturnKind::Log,
                    ReturnKindArg::Simple => ReturnKind::Simple,
                },
                scale,
                presample: order,
            };
            let series = load_returns(&data, &returns_cfg)?;
            let n = series.len();
            let cfg = VarConfig {
                p_level: p,
                order,
                estimation_start,
                test_start: test_start.unwrap_or(n / 2 + 1),
                test_end: test_end.unwrap_or(n),
                refit_every,
                estimator: match k {
                    Some(k) => VarEstimator::NmQmle { k },
                    None => VarEstimator::GaussianQmle,
                },
                fit: fit.config(),
            };
            let report = rolling_backtest(&series, &cfg)?;
            let mut text = report.summary();
            text.push_str("level   critical  lr_cc     decision\n");
            for (level, crit, reject) in &report.reject_at {
                text.push_str(&format!(
                    "{:<7} {:<9} {:<9.4} {}\n",
                    format!("{}%", level * 100.0),
                    crit,
                    report.lr_cc,
                    if *reject { "reject" } else { "accept" }
                ));
            }
            if let Some(out) = out {
                write_out(&out, &report.to_csv())?;
                text.push_str(&format!("per-step records written to {}\n", out.display()));
            }
            emit(&text);
        }
        Command::Mc { scenario, reps, seed, out } => {
            let text = std::fs::read_to_string(&scenario)
                .map_err(|e| format!("cannot read {}: {e}", scenario.display()))?;
            let mut sc = parse_scenario(&text)?;
            if let Some(reps) = reps {
                sc.replicates = reps;
            }
            if let Some(seed) = seed {
                sc.base_seed = seed;
            }
            let report = run_monte_carlo(&sc)?;
            let rate = report.max_failure_rate();
            if rate > 0.05 {
                return Err(format!(
                    "failure gate: {:.1}% of replicates failed (limit 5%)",
                    rate * 100.0
                )
                .into());
            }
            write_out(&out, &report.to_csv())?;
            let mut text = report.to_markdown();
            text.push_str(&format!("table written to {}\n", out.display()));
            emit(&text);
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
