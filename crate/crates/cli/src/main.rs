use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use affsel_core::diagnostics::{
    portmanteau_arch, portmanteau_in, PortmanteauReport, VForm, DEFAULT_K,
};
use affsel_core::harness::{
    load_returns, render_report, run_pipeline, run_selection_experiment, run_size_power_experiment,
    write_series, ExperimentConfig, GeneratorConfig, McReport, ReportFormat, Scheme,
};
use affsel_core::models::DEFAULT_BURN_IN;
use affsel_core::{
    enumerate_candidates, fit_qmle, select, simulate, CandidateGrid, Error, FitResult, ModelFamily,
    OptimizerOptions, Penalty, Result, TimeSeries,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "affsel",
    version,
    about = "QMLE, penalized selection and portmanteau tests for affine causal time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// One-column or (date, value) delimited file.
    #[arg(long)]
    data: PathBuf,
    /// How to read the values: prices or returns.
    #[arg(long, default_value = "returns")]
    scheme: Scheme,
    /// Multiplier applied to every return.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
}

impl DataArgs {
    fn load(&self) -> Result<TimeSeries> {
        load_returns(&self.data, self.scheme, self.scale)
    }
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, default_value = "text")]
    format: ReportFormat,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptArgs {
    /// Starting points per fit.
    #[arg(long)]
    restarts: Option<usize>,
    /// Seed for the random restarts.
    #[arg(long)]
    opt_seed: Option<u64>,
}

impl OptArgs {
    fn options(&self, base: OptimizerOptions) -> OptimizerOptions {
        OptimizerOptions {
            restarts: self.restarts.unwrap_or(base.restarts),
            seed: self.opt_seed.unwrap_or(base.seed),
            ..base
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a series from a model file.
    Simulate {
        /// TOML file with `family`, `params` and optional `active`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_BURN_IN)]
        burn_in: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit one model by QMLE.
    Fit {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        opt: OptArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Select a model from a candidate grid.
    Select {
        #[command(flatten)]
        data: DataArgs,
        /// arma-garch, arma-garch-reduced, ftse, ftse-reduced, subsets4 or model5.
        #[arg(long, conflicts_with = "config")]
        grid: Option<String>,
        /// Experiment file whose candidate grid is used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "sqrt_n")]
        penalty: Penalty,
        /// Model file to classify the selection against.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[command(flatten)]
        opt: OptArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Fit a model and run the portmanteau test.
    Test {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Lags; repeat for several.
        #[arg(long = "k", default_values_t = [DEFAULT_K])]
        k: Vec<usize>,
        /// Use the ARCH(p) statistic with K - p degrees of freedom.
        #[arg(long)]
        arch: bool,
        /// Covariance form: published or derived.
        #[arg(long, default_value_t = VForm::default())]
        v_form: VForm,
        #[command(flatten)]
        opt: OptArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Select under each penalty and test every winner.
    Pipeline {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "ftse")]
        grid: String,
        /// Repeat for several.
        #[arg(long = "penalty", default_values = ["log_n", "sqrt_n"])]
        penalties: Vec<Penalty>,
        #[arg(long = "k", default_values_t = [DEFAULT_K])]
        k: Vec<usize>,
        /// Covariance form: published or derived.
        #[arg(long, default_value_t = VForm::default())]
        v_form: VForm,
        #[command(flatten)]
        opt: OptArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte Carlo selection experiment.
    McSelect(McArgs),
    /// Monte Carlo size and power experiment.
    McSizepower(McArgs),
}

#[derive(Args)]
struct McArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    replications: Option<usize>,
    /// Overrides the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the covariance form of the portmanteau statistic.
    #[arg(long)]
    v_form: Option<VForm>,
    #[arg(long, default_value = "json")]
    format: ReportFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_output(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn fit_text(fit: &FitResult) -> String {
    let mut s = format!(
        "model {}\nn = {}, loglik = {:.6}, converged = {}, iterations = {}{}\n",
        fit.spec,
        fit.n,
        fit.loglik,
        fit.converged,
        fit.iterations,
        if fit.boundary { ", boundary" } else { "" }
    );
    let se = fit.covariance.as_ref().map(|c| &c.std_errors);
    for (k, (name, v)) in fit
        .active_names()
        .iter()
        .zip(fit.active_values())
        .enumerate()
    {
        match se {
            Some(se) => s.push_str(&format!("  {name:<8} {v:>12.6}  (se {:.6})\n", se[k])),
            None => s.push_str(&format!("  {name:<8} {v:>12.6}\n")),
        }
    }
    if let Some(e) = &fit.covariance_error {
        s.push_str(&format!("covariance unavailable: {e}\n"));
    }
    s
}

fn model_family(path: &Path) -> Result<GeneratorConfig> {
    GeneratorConfig::from_path(path)
}

fn run_mc(args: &McArgs, size_power: bool) -> Result<()> {
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    if let Some(s) = args.seed {
        cfg.base_seed = s;
    }
    if let Some(f) = args.v_form {
        cfg.v_form = f;
    }
    let started = Instant::now();
    let report: McReport = if size_power {
        run_size_power_experiment(&cfg)?
    } else {
        run_selection_experiment(&cfg)?
    };
    eprintln!(
        "{}: {} replications in {:.1}s",
        cfg.name,
        cfg.replications,
        started.elapsed().as_secs_f64()
    );
    let text = render_report(&report, args.format)?;
    write_output(&text, args.out.as_deref())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            model,
            n,
            burn_in,
            seed,
            out,
        } => {
            let (spec, theta) = model_family(&model)?.resolve()?;
            let x = simulate(&spec, &theta, n, burn_in, seed)?;
            match out {
                Some(p) => write_series(&p, &x),
                None => {
                    let mut s = String::from("value\n");
                    for v in &x.values {
                        s.push_str(&format!("{v:?}\n"));
                    }
                    write_output(&s, None)
                }
            }
        }
        Command::Fit {
            model,
            data,
            opt,
            output,
        } => {
            let spec = model_family(&model)?.spec()?;
            let x = data.load()?;
            let fit = fit_qmle(&spec, &x, &opt.options(OptimizerOptions::default()))?;
            let text = match output.format {
                ReportFormat::Text => fit_text(&fit),
                ReportFormat::Json => json(&fit)?,
            };
            write_output(&text, output.out.as_deref())
        }
        Command::Select {
            data,
            grid,
            config,
            penalty,
            reference,
            opt,
            output,
        } => {
            let x = data.load()?;
            let (grid, base) = match (grid, config) {
                (_, Some(path)) => {
                    let cfg = ExperimentConfig::from_path(&path)?;
                    (cfg.candidates, cfg.optimizer)
                }
                (Some(name), None) => (CandidateGrid::preset(&name)?, OptimizerOptions::default()),
                (None, None) => (
                    CandidateGrid::preset("arma-garch")?,
                    OptimizerOptions::default(),
                ),
            };
            let candidates = enumerate_candidates(&grid)?;
            let opts = OptimizerOptions {
                covariance: false,
                ..opt.options(base)
            };
            let mut report = select(&x, &candidates, &penalty, &opts)?;
            if let Some(r) = reference {
                report.classify_against(&model_family(&r)?.spec()?);
            }
            let text = match output.format {
                ReportFormat::Text => report.to_text(),
                ReportFormat::Json => json(&report)?,
            };
            write_output(&text, output.out.as_deref())
        }
        Command::Test {
            model,
            data,
            k,
            arch,
            v_form,
            opt,
            output,
        } => {
            let spec = model_family(&model)?.spec()?;
            let x = data.load()?;
            let fit = fit_qmle(&spec, &x, &opt.options(OptimizerOptions::default()))?;
            let reports: Vec<PortmanteauReport> = k
                .iter()
                .map(|&k| {
                    if arch {
                        let p = match spec.family {
                            ModelFamily::Arch { p } | ModelFamily::Garch { p, q: 0 } => p,
                            ref f => {
                                return Err(Error::InvalidArgument(format!(
                                    "--arch needs an ARCH model, got {f}"
                                )))
                            }
                        };
                        portmanteau_arch(&fit, &x, p, k)
                    } else {
                        portmanteau_in(&spec, &fit, &x, k, v_form)
                    }
                })
                .collect::<Result<_>>()?;
            let text = match output.format {
                ReportFormat::Text => {
                    let mut s = fit_text(&fit);
                    for r in &reports {
                        s.push_str(&r.to_text());
                    }
                    s
                }
                ReportFormat::Json => json(&reports)?,
            };
            write_output(&text, output.out.as_deref())
        }
        Command::Pipeline {
            data,
            grid,
            penalties,
            k,
            v_form,
            opt,
            output,
        } => {
            let x = data.load()?;
            let candidates = enumerate_candidates(&CandidateGrid::preset(&grid)?)?;
            let report = run_pipeline(
                &x,
                &candidates,
                &penalties,
                &k,
                v_form,
                &opt.options(OptimizerOptions::default()),
            )?;
            let text = render_report(&report, output.format)?;
            write_output(&text, output.out.as_deref())
        }
        Command::McSelect(args) => run_mc(&args, false),
        Command::McSizepower(args) => run_mc(&args, true),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                msg.push_str(&format!("\n  caused by: {s}"));
                src = s.source();
            }
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
