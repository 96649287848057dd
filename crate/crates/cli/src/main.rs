//! `hetnet` — run base-station activation experiments from the command line.
//!
//! Exit codes: 0 on success, 2 when some realization was infeasible,
//! 1 on any error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use hetnet_core::admm::{admm_solve, select_and_debias, AdmmConfig};
use hetnet_core::experiment::{read_csv_file, summarize, write_csv, write_csv_file};
use hetnet_core::oracle::{min_active_set, min_dominating_set, min_vertex_cover, vertex_cover_instance};
use hetnet_core::swmmse::sparse_sum_rate;
use hetnet_core::{
    generate_network, run_experiment, Baseline, Execution, ExperimentSpec, Graph, Mode, NetworkInstance,
};

#[derive(Parser)]
#[command(name = "hetnet", version, about = "Joint base-station activation and beamforming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo experiment; writes one CSV row per realization and scheme.
    Run(RunArgs),
    /// Draw one random network and write it as JSON.
    Generate(RunArgs),
    /// Solve a saved network and print the solver report as JSON.
    Solve {
        /// Network JSON written by `generate`.
        network: PathBuf,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Minimum vertex cover, dominating set and active set of the
    /// power-control gadget built from an edge list.
    VertexCover {
        /// First line: vertex count; then one `u v` edge per line (1-based).
        graph: PathBuf,
    },
    /// Re-read a results CSV and print its summary.
    Summarize { csv: PathBuf },
}

#[derive(Args, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct RunArgs {
    /// TOML file with any of these options (kebab-case keys); flags win.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Start from a named setting: powermin-paper or sumrate-paper.
    #[arg(long)]
    preset: Option<String>,
    /// power-min | selection | sumrate | sumrate-clustered
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long)]
    bs_per_cell: Option<usize>,
    /// Users per cell.
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    antennas_tx: Option<usize>,
    #[arg(long)]
    antennas_rx: Option<usize>,
    /// 1 / sigma^2 in dB.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    /// SINR target in dB.
    #[arg(long, allow_hyphen_values = true)]
    tau_db: Option<f64>,
    /// Per-cell total budget in dB (half to the center BS).
    #[arg(long, allow_hyphen_values = true)]
    ptot_db: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Initial group penalty for selection.
    #[arg(long)]
    beta0: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    reweight_rounds: Option<usize>,
    /// ADMM iteration cap (infeasibility declared beyond it).
    #[arg(long)]
    max_iters: Option<usize>,
    /// ADMM stopping tolerance.
    #[arg(long)]
    eps_tol: Option<f64>,
    /// all-on, random-50, random-70; repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    baseline: Option<Vec<Baseline>>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Zero run times so repeated runs are byte-identical.
    #[arg(long)]
    #[serde(default)]
    deterministic: bool,
    /// Single-threaded execution.
    #[arg(long)]
    #[serde(default)]
    sequential: bool,
}

impl RunArgs {
    /// Flag values override `base` where given.
    fn overlay(self, base: RunArgs) -> RunArgs {
        RunArgs {
            config: self.config.or(base.config),
            preset: self.preset.or(base.preset),
            mode: self.mode.or(base.mode),
            cells: self.cells.or(base.cells),
            bs_per_cell: self.bs_per_cell.or(base.bs_per_cell),
            users: self.users.or(base.users),
            antennas_tx: self.antennas_tx.or(base.antennas_tx),
            antennas_rx: self.antennas_rx.or(base.antennas_rx),
            snr_db: self.snr_db.or(base.snr_db),
            tau_db: self.tau_db.or(base.tau_db),
            ptot_db: self.ptot_db.or(base.ptot_db),
            rho: self.rho.or(base.rho),
            beta0: self.beta0.or(base.beta0),
            mu: self.mu.or(base.mu),
            lambda: self.lambda.or(base.lambda),
            seed: self.seed.or(base.seed),
            realizations: self.realizations.or(base.realizations),
            reweight_rounds: self.reweight_rounds.or(base.reweight_rounds),
            max_iters: self.max_iters.or(base.max_iters),
            eps_tol: self.eps_tol.or(base.eps_tol),
            baseline: self.baseline.or(base.baseline),
            out: self.out.or(base.out),
            deterministic: self.deterministic || base.deterministic,
            sequential: self.sequential || base.sequential,
        }
    }

    /// Preset, then config file, then flags.
    fn resolve(self) -> Result<(ExperimentSpec, Option<PathBuf>)> {
        let args = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let file: RunArgs = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                self.overlay(file)
            }
            None => self,
        };
        let mut s = match &args.preset {
            Some(name) => ExperimentSpec::preset(name)?,
            None => ExperimentSpec::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = args.$field { s.$target = v; })*
            };
        }
        set!(
            mode => mode, cells => cells, bs_per_cell => bs_per_cell, users => users,
            antennas_tx => antennas_tx, antennas_rx => antennas_rx, snr_db => snr_db,
            tau_db => tau_db, rho => rho, beta0 => beta0, mu => mu, lambda => lambda,
            seed => seed, realizations => realizations, reweight_rounds => reweight_rounds,
            max_iters => max_iters, eps_tol => eps_tol, baseline => baselines,
        );
        if args.ptot_db.is_some() {
            s.ptot_db = args.ptot_db;
        }
        s.deterministic |= args.deterministic;
        if args.sequential {
            s.execution = Execution::Sequential;
        }
        s.validate()?;
        Ok((s, args.out))
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn summary_path(out: &Path) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(".summary.json");
    out.with_file_name(name)
}

fn cmd_run(args: RunArgs) -> Result<u8> {
    let (spec, out) = args.resolve()?;
    let rows = run_experiment(&spec)?;
    let summary = serde_json::to_string_pretty(&summarize(&rows))? + "\n";
    match &out {
        Some(path) => {
            write_csv_file(&rows, path).with_context(|| format!("writing {}", path.display()))?;
            let sp = summary_path(path);
            std::fs::write(&sp, &summary).with_context(|| format!("writing {}", sp.display()))?;
        }
        None => {
            write_csv(&rows, std::io::stdout().lock())?;
            eprint!("{summary}");
        }
    }
    Ok(if rows.iter().any(|r| r.is_infeasible()) { 2 } else { 0 })
}

fn cmd_generate(args: RunArgs) -> Result<u8> {
    let (spec, out) = args.resolve()?;
    let net = generate_network(&spec.network_params(), spec.seed)?;
    write_output(out.as_deref(), &(net.to_json()? + "\n"))?;
    Ok(0)
}

fn cmd_solve(network: &Path, args: RunArgs) -> Result<u8> {
    let text = std::fs::read_to_string(network).with_context(|| format!("reading {}", network.display()))?;
    let net = NetworkInstance::from_json(&text)?;
    let (spec, out) = args.resolve()?;
    let nb = net.topology().num_bs();
    let result = match spec.mode {
        Mode::PowerMin => {
            let cfg = AdmmConfig {
                theta: Some(1.0),
                ..spec.admm_config()
            };
            admm_solve(&net, &cfg, None)
        }
        Mode::Selection => select_and_debias(&net, &spec.admm_config(), &vec![spec.beta0; nb]).map(|o| o.debiased),
        Mode::Sumrate | Mode::SumrateClustered => {
            if spec.mode == Mode::SumrateClustered && spec.lambda <= 0.0 {
                bail!("sumrate-clustered needs lambda > 0");
            }
            sparse_sum_rate(&net, &spec.swmmse_config(&net)).map(|o| o.debiased.report)
        }
    };
    match result {
        Ok(report) => {
            write_output(out.as_deref(), &(report.to_json()? + "\n"))?;
            Ok(0)
        }
        Err(hetnet_core::Error::Infeasible { iterations, residual }) => {
            eprintln!("infeasible: no convergence in {iterations} iterations (residual {residual:.3e})");
            Ok(2)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_vertex_cover(path: &Path) -> Result<u8> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let g = Graph::parse(&text)?;
    let inst = vertex_cover_instance(&g);
    let (active, witness) = min_active_set(&inst, Execution::Parallel)?
        .context("gadget infeasible with every base station on")?;
    let report = serde_json::json!({
        "vertices": g.num_vertices(),
        "edges": g.edges().len(),
        "min_vertex_cover": min_vertex_cover(&g)?,
        "min_dominating_set": min_dominating_set(&g)?,
        "min_active_set": active,
        "active_set_witness": witness.iter().map(|q| q + 1).collect::<Vec<_>>(),
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(0)
}

fn cmd_summarize(path: &Path) -> Result<u8> {
    let rows = read_csv_file(path)?;
    println!("{}", serde_json::to_string_pretty(&summarize(&rows))?);
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Solve { network, args } => cmd_solve(&network, args),
        Command::VertexCover { graph } => cmd_vertex_cover(&graph),
        Command::Summarize { csv } => cmd_summarize(&csv),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
