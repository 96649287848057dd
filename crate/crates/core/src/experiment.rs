//! Seeded Monte Carlo experiments over random networks.
//!
//! Realization `r` uses the network drawn from seed `seed + r`, so any
//! subset of a sweep can be rerun on its own. Every realization produces one
//! row for the selected mode and one per requested baseline.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::admm::{admm_solve, debias, select_and_debias, AdmmConfig};
use crate::error::{Error, Result};
use crate::net_model::{db_to_linear, generate_network, NetworkInstance, NetworkParams, Topology};
use crate::par::{map_range, Execution};
use crate::report::Status;
use crate::swmmse::{sparse_sum_rate, wmmse_on_support, SwmmseConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Minimum power with every base station on.
    PowerMin,
    /// Reweighted BS selection for minimum power, then debiasing.
    Selection,
    /// Sparse sum-rate maximization.
    Sumrate,
    /// Sparse sum-rate maximization with per-user clustering.
    SumrateClustered,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::PowerMin => "power-min",
            Mode::Selection => "selection",
            Mode::Sumrate => "sumrate",
            Mode::SumrateClustered => "sumrate-clustered",
        }
    }

    pub fn is_power(self) -> bool {
        matches!(self, Mode::PowerMin | Mode::Selection)
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Mode::PowerMin, Mode::Selection, Mode::Sumrate, Mode::SumrateClustered]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown mode `{s}`")))
    }
}

/// Reference schemes solved on the same networks as the main mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Baseline {
    #[serde(rename = "all-on")]
    AllOn,
    #[serde(rename = "random-50")]
    Random50,
    #[serde(rename = "random-70")]
    Random70,
}

impl Baseline {
    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::AllOn => "all-on",
            Baseline::Random50 => "random-50",
            Baseline::Random70 => "random-70",
        }
    }

    pub fn fraction(self) -> f64 {
        match self {
            Baseline::AllOn => 1.0,
            Baseline::Random50 => 0.5,
            Baseline::Random70 => 0.7,
        }
    }
}

impl std::str::FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Baseline::AllOn, Baseline::Random50, Baseline::Random70]
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown baseline `{s}`")))
    }
}

/// Everything needed to reproduce a batch of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub cells: usize,
    pub bs_per_cell: usize,
    pub users: usize,
    pub antennas_tx: usize,
    pub antennas_rx: usize,
    /// `1 / sigma^2` in dB.
    pub snr_db: f64,
    /// SINR target of every user (power modes).
    pub tau_db: f64,
    /// Per-cell total budget: half to the center BS, the rest split evenly.
    /// When unset the center / other budgets below apply.
    pub ptot_db: Option<f64>,
    pub center_budget_db: f64,
    pub other_budget_db: f64,
    pub rho: f64,
    /// Initial group penalty of every BS in selection mode.
    pub beta0: f64,
    pub mu: f64,
    pub lambda: f64,
    pub reweight_rounds: usize,
    /// ADMM iteration cap; a run that does not converge within it is
    /// declared infeasible.
    pub max_iters: usize,
    /// ADMM stopping tolerance on the normalized residuals.
    pub eps_tol: f64,
    pub seed: u64,
    pub realizations: usize,
    pub baselines: Vec<Baseline>,
    pub execution: Execution,
    /// Write zero run times so output files are byte-reproducible.
    pub deterministic: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            mode: Mode::Selection,
            cells: 1,
            bs_per_cell: 4,
            users: 3,
            antennas_tx: 2,
            antennas_rx: 1,
            snr_db: 10.0,
            tau_db: 10.0,
            ptot_db: None,
            center_budget_db: 10.0,
            other_budget_db: 5.0,
            rho: 5.0,
            beta0: 0.3,
            mu: 1.0,
            lambda: 0.0,
            reweight_rounds: 6,
            max_iters: 2000,
            eps_tol: 1e-4,
            seed: 0,
            realizations: 1,
            baselines: Vec::new(),
            execution: Execution::default(),
            deterministic: false,
        }
    }
}

pub const PRESETS: &[&str] = &["powermin-paper", "sumrate-paper"];

impl ExperimentSpec {
    /// Named full-scale settings.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "powermin-paper" => Ok(ExperimentSpec {
                mode: Mode::Selection,
                cells: 4,
                bs_per_cell: 20,
                users: 10,
                antennas_tx: 5,
                antennas_rx: 1,
                snr_db: 10.0,
                tau_db: 15.0,
                center_budget_db: 10.0,
                other_budget_db: 5.0,
                rho: 5.0,
                realizations: 100,
                baselines: vec![Baseline::AllOn, Baseline::Random70],
                ..ExperimentSpec::default()
            }),
            "sumrate-paper" => Ok(ExperimentSpec {
                mode: Mode::Sumrate,
                cells: 4,
                bs_per_cell: 10,
                users: 10,
                antennas_tx: 4,
                antennas_rx: 2,
                snr_db: 0.0,
                ptot_db: Some(10.0),
                mu: 1.5,
                realizations: 100,
                baselines: vec![Baseline::AllOn, Baseline::Random50],
                ..ExperimentSpec::default()
            }),
            _ => Err(Error::ConfigInvalid(format!(
                "unknown preset `{name}` (known: {})",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::ConfigInvalid("realizations must be at least 1".into()));
        }
        for (name, x) in [("snr_db", self.snr_db), ("tau_db", self.tau_db)] {
            if !x.is_finite() {
                return Err(Error::ConfigInvalid(format!("{name} must be finite")));
            }
        }
        if self.mode.is_power() && self.antennas_rx != 1 {
            return Err(Error::ConfigInvalid(format!(
                "{} needs single-antenna users",
                self.mode.as_str()
            )));
        }
        if self.mode == Mode::Selection && !(self.beta0 > 0.0) {
            return Err(Error::ConfigInvalid("selection needs beta0 > 0".into()));
        }
        if !(self.mu >= 0.0 && self.lambda >= 0.0) {
            return Err(Error::ConfigInvalid("mu and lambda must be nonnegative".into()));
        }
        if self.mode == Mode::Sumrate && self.lambda > 0.0 {
            return Err(Error::ConfigInvalid("lambda > 0 needs mode sumrate-clustered".into()));
        }
        if self.mode == Mode::SumrateClustered && !(self.lambda > 0.0) {
            return Err(Error::ConfigInvalid("sumrate-clustered needs lambda > 0".into()));
        }
        if self.reweight_rounds == 0 || self.max_iters == 0 {
            return Err(Error::ConfigInvalid("reweight_rounds and max_iters must be positive".into()));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::ConfigInvalid("rho must be positive".into()));
        }
        if !(self.eps_tol > 0.0) {
            return Err(Error::ConfigInvalid("eps_tol must be positive".into()));
        }
        self.network_params().validate()
    }

    pub fn network_params(&self) -> NetworkParams {
        let p = NetworkParams {
            cells: self.cells,
            bs_per_cell: self.bs_per_cell,
            users_per_cell: self.users,
            tx_antennas: self.antennas_tx,
            rx_antennas: self.antennas_rx,
            sinr_target_db: self.tau_db,
            center_bs_budget_db: self.center_budget_db,
            other_bs_budget_db: self.other_budget_db,
            noise_power: 1.0 / db_to_linear(self.snr_db),
            ..NetworkParams::default()
        };
        match self.ptot_db {
            Some(db) => p.with_total_budget_db(db),
            None => p,
        }
    }

    pub fn admm_config(&self) -> AdmmConfig {
        AdmmConfig {
            rho: self.rho,
            max_iters: self.max_iters,
            infeasible_iter_cap: self.max_iters,
            eps_tol: self.eps_tol,
            reweight_rounds: self.reweight_rounds,
            execution: self.execution,
            ..AdmmConfig::default()
        }
    }

    pub fn swmmse_config(&self, net: &NetworkInstance) -> SwmmseConfig {
        SwmmseConfig {
            reweight_rounds: self.reweight_rounds,
            track_objective: false,
            execution: self.execution,
            ..SwmmseConfig::uniform(net, self.mu, self.lambda)
        }
    }

    pub fn realization_seed(&self, r: usize) -> u64 {
        self.seed.wrapping_add(r as u64)
    }
}

/// One CSV row. Solver outputs are empty for infeasible runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub mode: String,
    pub cells: usize,
    pub seed: u64,
    pub realization: usize,
    pub status: Status,
    pub iters: Option<usize>,
    pub active_bs: Option<usize>,
    pub total_power_w: Option<f64>,
    pub sum_rate_nats: Option<f64>,
    pub runtime_ms: f64,
}

impl ResultRow {
    pub fn is_infeasible(&self) -> bool {
        self.status == Status::Infeasible
    }
}

/// Random support: in every cell the center BS plus `round(f * Q) - 1`
/// others drawn uniformly.
pub fn random_support(t: &Topology, fraction: f64, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut support = vec![false; t.num_bs()];
    for cell in 0..t.num_cells() {
        let range = t.bs_range(cell);
        let q = range.len();
        let keep = ((fraction * q as f64).round() as usize).clamp(1, q);
        support[range.start] = true;
        let mut others: Vec<usize> = range.skip(1).collect();
        others.shuffle(&mut rng);
        for &b in others.iter().take(keep - 1) {
            support[b] = true;
        }
    }
    support
}

fn baseline_seed(seed: u64, b: Baseline) -> u64 {
    // Distinct streams per baseline, independent of the channel draw.
    seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(b as u64 + 1))
}

struct Outcome {
    status: Status,
    iters: usize,
    active: usize,
    power: f64,
    rate: f64,
}

fn infeasible_or<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(x) => Ok(Some(x)),
        Err(Error::Infeasible { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn run_mode(spec: &ExperimentSpec, net: &NetworkInstance) -> Result<Option<Outcome>> {
    let nb = net.topology().num_bs();
    match spec.mode {
        Mode::PowerMin => {
            let cfg = AdmmConfig {
                theta: Some(1.0),
                ..spec.admm_config()
            };
            Ok(infeasible_or(admm_solve(net, &cfg, None))?.map(|r| Outcome {
                status: r.status,
                iters: r.iterations,
                active: r.active_set.len(),
                power: r.total_power,
                rate: r.sum_rate,
            }))
        }
        Mode::Selection => {
            let out = infeasible_or(select_and_debias(net, &spec.admm_config(), &vec![spec.beta0; nb]))?;
            Ok(out.map(|o| Outcome {
                status: o.debiased.status,
                iters: o.rounds.iter().map(|r| r.iterations).sum::<usize>() + o.debiased.iterations,
                active: o.debiased.active_set.len(),
                power: o.debiased.total_power,
                rate: o.debiased.sum_rate,
            }))
        }
        Mode::Sumrate | Mode::SumrateClustered => {
            let o = sparse_sum_rate(net, &spec.swmmse_config(net))?;
            let iters = o.debiased.report.iterations;
            let r = o.debiased.report;
            Ok(Some(Outcome {
                status: r.status,
                iters,
                active: r.active_set.len(),
                power: r.total_power,
                rate: r.sum_rate,
            }))
        }
    }
}

fn run_baseline(spec: &ExperimentSpec, net: &NetworkInstance, b: Baseline, seed: u64) -> Result<Option<Outcome>> {
    let t = net.topology();
    let support = match b {
        Baseline::AllOn => vec![true; t.num_bs()],
        _ => random_support(t, b.fraction(), baseline_seed(seed, b)),
    };
    if spec.mode.is_power() {
        let set: Vec<usize> = (0..t.num_bs()).filter(|&q| support[q]).collect();
        Ok(infeasible_or(debias(net, &spec.admm_config(), &set, None))?.map(|r| Outcome {
            status: r.status,
            iters: r.iterations,
            active: r.active_set.len(),
            power: r.total_power,
            rate: r.sum_rate,
        }))
    } else {
        // Baselines use plain WMMSE without the cluster penalty.
        let cfg = SwmmseConfig {
            lambda: Vec::new(),
            ..spec.swmmse_config(net)
        };
        let r = wmmse_on_support(net, &cfg, &support)?.report;
        Ok(Some(Outcome {
            status: r.status,
            iters: r.iterations,
            active: r.active_set.len(),
            power: r.total_power,
            rate: r.sum_rate,
        }))
    }
}

fn timed<F>(spec: &ExperimentSpec, label: &str, seed: u64, realization: usize, f: F) -> Result<ResultRow>
where
    F: FnOnce() -> Result<Option<Outcome>>,
{
    let start = Instant::now();
    let out = f()?;
    let runtime_ms = if spec.deterministic {
        0.0
    } else {
        start.elapsed().as_secs_f64() * 1e3
    };
    Ok(match out {
        Some(o) => ResultRow {
            mode: label.to_string(),
            cells: spec.cells,
            seed,
            realization,
            status: o.status,
            iters: Some(o.iters),
            active_bs: Some(o.active),
            total_power_w: Some(o.power),
            sum_rate_nats: Some(o.rate),
            runtime_ms,
        },
        None => ResultRow {
            mode: label.to_string(),
            cells: spec.cells,
            seed,
            realization,
            status: Status::Infeasible,
            iters: None,
            active_bs: None,
            total_power_w: None,
            sum_rate_nats: None,
            runtime_ms,
        },
    })
}

fn run_realization(spec: &ExperimentSpec, r: usize) -> Result<Vec<ResultRow>> {
    let seed = spec.realization_seed(r);
    let net = generate_network(&spec.network_params(), seed)?;
    let mut rows = vec![timed(spec, spec.mode.as_str(), seed, r, || run_mode(spec, &net))?];
    for &b in &spec.baselines {
        rows.push(timed(spec, b.as_str(), seed, r, || run_baseline(spec, &net, b, seed))?);
    }
    Ok(rows)
}

/// Runs every realization (in parallel if enabled) and returns rows ordered
/// by realization, main mode first.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let per = map_range(spec.execution, spec.realizations, |r| run_realization(spec, r));
    let mut rows = Vec::new();
    for chunk in per {
        rows.extend(chunk?);
    }
    Ok(rows)
}

pub fn write_csv<W: std::io::Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record([
        "mode",
        "cells",
        "seed",
        "realization",
        "status",
        "iters",
        "active_bs",
        "total_power_w",
        "sum_rate_nats",
        "runtime_ms",
    ])?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(rows: &[ResultRow], path: &Path) -> Result<()> {
    write_csv(rows, std::fs::File::create(path)?)
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

pub fn read_csv_file(path: &Path) -> Result<Vec<ResultRow>> {
    read_csv(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Population statistics; `None` for an empty sample.
    pub fn of(xs: &[f64]) -> Option<Stat> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(Stat { mean, std: var.sqrt() })
    }
}

/// Aggregates of one scheme over the feasible realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub runs: usize,
    pub infeasible: usize,
    pub iters: Option<Stat>,
    pub active_bs: Option<Stat>,
    pub total_power_w: Option<Stat>,
    pub sum_rate_nats: Option<Stat>,
}

/// Per-scheme summary keyed by the `mode` column.
pub fn summarize(rows: &[ResultRow]) -> BTreeMap<String, SchemeSummary> {
    let mut groups: BTreeMap<String, Vec<&ResultRow>> = BTreeMap::new();
    for row in rows {
        groups.entry(row.mode.clone()).or_default().push(row);
    }
    groups
        .into_iter()
        .map(|(mode, mut g)| {
            g.sort_by_key(|r| r.realization);
            let ok: Vec<_> = g.iter().filter(|r| !r.is_infeasible()).collect();
            let col = |f: fn(&ResultRow) -> Option<f64>| -> Option<Stat> {
                Stat::of(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            let s = SchemeSummary {
                runs: g.len(),
                infeasible: g.len() - ok.len(),
                iters: col(|r| r.iters.map(|x| x as f64)),
                active_bs: col(|r| r.active_bs.map(|x| x as f64)),
                total_power_w: col(|r| r.total_power_w),
                sum_rate_nats: col(|r| r.sum_rate_nats),
            };
            (mode, s)
        })
        .collect()
}
