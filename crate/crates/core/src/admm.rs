//! ADMM solver for joint base-station activation and minimum-power
//! beamforming (single-antenna users).
//!
//! The relaxed problem is
//!
//! ```text
//!   min  sum_q beta_q ||v^q|| + theta sum_q ||v^q||^2
//!   s.t. ||v^q||^2 <= P_q
//!        Re(h_i^H v_i) >= sqrt(tau_i) * || (sigma_i, {h_i^H v_j}_{j != i}) ||
//! ```
//!
//! and is split into two primal blocks tied by linear consensus constraints:
//!
//! * block A: `w` (copy of `v`, carries the group penalty and the budgets),
//!   `K` (copy of every received amplitude `h_j^H v_i`, carries the cones)
//!   and `kappa` (copy of the noise amplitude);
//! * block B: `v` and `kappa_hat`, an unconstrained quadratic.
//!
//! Every block minimization is closed form. Duals follow the sign convention
//! of the augmented Lagrangian
//! `Re<K - Hv, mu> + Re<w - v, lambda> + delta (kappa - kappa_hat)`
//! with penalties `rho/2 ||.||^2`, so each dual step is `y += rho * residual`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net_model::{sum_rate, BeamformerSet, CMat, CVec, NetworkInstance, C64};
use crate::par::{map_range, Execution};
use crate::report::{IterRecord, ResidualTerms, SolveReport, SolverKind, Status};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmConfig {
    pub rho: f64,
    /// Group penalty per base station. Empty means all zero.
    pub beta: Vec<f64>,
    /// Power weight. `None` picks `1 / sum P` when any `beta > 0`, else 1.
    pub theta: Option<f64>,
    pub eps_tol: f64,
    pub max_iters: usize,
    pub infeasible_iter_cap: usize,
    pub reweight_eps: f64,
    /// Number of solves in the reweighting loop (the first uses `beta0`).
    pub reweight_rounds: usize,
    /// Threshold on `||w^q||` for a base station to count as active.
    /// `None` uses `1e-5 * sqrt(max P)`.
    pub active_tol: Option<f64>,
    pub execution: Execution,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            rho: 5.0,
            beta: Vec::new(),
            theta: None,
            eps_tol: 1e-4,
            max_iters: 2000,
            infeasible_iter_cap: 2000,
            reweight_eps: 1e-3,
            reweight_rounds: 6,
            active_tol: None,
            execution: Execution::default(),
        }
    }
}

impl AdmmConfig {
    pub fn power_min() -> Self {
        AdmmConfig {
            theta: Some(1.0),
            ..AdmmConfig::default()
        }
    }

    pub fn validate(&self, net: &NetworkInstance) -> Result<()> {
        let nb = net.topology().num_bs();
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::ConfigInvalid("rho must be positive".into()));
        }
        if !self.beta.is_empty() && self.beta.len() != nb {
            return Err(Error::ConfigInvalid(format!(
                "beta has {} entries for {} base stations",
                self.beta.len(),
                nb
            )));
        }
        if self.beta.iter().any(|&b| !(b >= 0.0 && b.is_finite())) {
            return Err(Error::ConfigInvalid("beta must be nonnegative".into()));
        }
        if let Some(th) = self.theta {
            if !(th > 0.0 && th.is_finite()) {
                return Err(Error::ConfigInvalid("theta must be positive".into()));
            }
        }
        if !(self.eps_tol > 0.0) {
            return Err(Error::ConfigInvalid("eps_tol must be positive".into()));
        }
        if self.max_iters == 0 || self.infeasible_iter_cap == 0 {
            return Err(Error::ConfigInvalid("iteration limits must be positive".into()));
        }
        if !(self.reweight_eps > 0.0) {
            return Err(Error::ConfigInvalid("reweight_eps must be positive".into()));
        }
        if net.topology().rx_antennas() != 1 {
            return Err(Error::ConfigInvalid(
                "the power-minimization solver needs single-antenna users".into(),
            ));
        }
        Ok(())
    }

    pub fn beta_for(&self, nb: usize) -> Vec<f64> {
        if self.beta.is_empty() {
            vec![0.0; nb]
        } else {
            self.beta.clone()
        }
    }

    pub fn resolved_theta(&self, net: &NetworkInstance) -> f64 {
        match self.theta {
            Some(t) => t,
            None if self.beta.iter().any(|&b| b > 0.0) => {
                1.0 / net.power_budgets().iter().sum::<f64>()
            }
            None => 1.0,
        }
    }

    pub fn active_tol(&self, net: &NetworkInstance) -> f64 {
        self.active_tol.unwrap_or_else(|| net.default_active_tol())
    }
}

/// All primal copies and duals of the splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub w: BeamformerSet,
    /// `k[(rx, tx)]` is the copy of `h_rx^H v_tx`.
    pub k: CMat,
    pub kappa: Vec<f64>,
    pub v: BeamformerSet,
    pub kappa_hat: Vec<f64>,
    pub mu: CMat,
    pub lambda: BeamformerSet,
    pub delta: Vec<f64>,
    /// `hv[(rx, tx)] = h_rx^H v_tx` for the current `v`.
    pub hv: CMat,
    pub iteration: usize,
}

/// Result of projecting `(t, y)` onto `{t >= c ||y||}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocProjection {
    pub t: f64,
    /// Factor applied to `y`.
    pub scale: f64,
    /// Multiplier of the cone constraint, `2 (t_proj - t)`.
    pub gamma: f64,
}

/// Euclidean projection of `(t, y)`, with `||y|| = y_norm`, onto the cone
/// `{(t, y) : t >= c ||y||}`.
pub fn project_soc(t: f64, y_norm: f64, c: f64) -> SocProjection {
    if t >= c * y_norm {
        return SocProjection { t, scale: 1.0, gamma: 0.0 };
    }
    if y_norm <= -c * t {
        return SocProjection {
            t: 0.0,
            scale: 0.0,
            gamma: -2.0 * t,
        };
    }
    let r = (c * t + y_norm) / (1.0 + c * c);
    let t_new = c * r;
    SocProjection {
        t: t_new,
        scale: r / y_norm,
        gamma: 2.0 * (t_new - t),
    }
}

/// Minimizer of `beta ||w|| + rho/2 ||w - b||^2` over `||w||^2 <= budget`.
pub fn w_block_update(b: &CVec, rho: f64, beta: f64, budget: f64) -> CVec {
    let nb = b.norm();
    if rho * nb <= beta {
        return CVec::zeros(b.len());
    }
    let shrunk = b * C64::from((rho * nb - beta) / (rho * nb));
    if shrunk.norm_squared() <= budget {
        shrunk
    } else {
        b * C64::from(budget.sqrt() / nb)
    }
}

/// Reweighted penalties `beta0_q / (||w^q|| + eps)`.
pub fn reweight(net: &NetworkInstance, w: &BeamformerSet, beta0: &[f64], eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::ConfigInvalid("reweighting epsilon must be positive".into()));
    }
    let t = net.topology();
    if beta0.len() != t.num_bs() {
        return Err(Error::ConfigInvalid("beta0 length mismatch".into()));
    }
    Ok((0..t.num_bs())
        .map(|q| beta0[q] / (w.bs_norm(t, q) + eps))
        .collect())
}

/// Concatenation over the users of `bs`'s cell of their blocks at `bs`.
pub fn gather_bs(net: &NetworkInstance, set: &BeamformerSet, bs: usize) -> CVec {
    let t = net.topology();
    let m = t.tx_antennas();
    let q = t.local_bs(bs);
    let users = t.user_range(t.cell_of_bs(bs));
    let mut out = CVec::zeros(m * users.len());
    for (slot, u) in users.enumerate() {
        out.rows_mut(slot * m, m).copy_from(&set.block(m, u, q));
    }
    out
}

fn scatter_bs(net: &NetworkInstance, set: &mut BeamformerSet, bs: usize, data: &CVec) {
    let t = net.topology();
    let m = t.tx_antennas();
    let q = t.local_bs(bs);
    for (slot, u) in t.user_range(t.cell_of_bs(bs)).enumerate() {
        set.block_mut(m, u, q).copy_from(&data.rows(slot * m, m));
    }
}

/// A configured solver bound to one network and one base-station support.
pub struct Admm<'a> {
    net: &'a NetworkInstance,
    config: AdmmConfig,
    beta: Vec<f64>,
    theta: f64,
    support: Vec<bool>,
    /// Per cell: rows `h_j^H` (restricted to that cell's antennas) for every user `j`.
    stacks: Vec<CMat>,
    /// Per cell: Cholesky factor of `rho H^H H + (rho + 2 theta) I` with
    /// pinned coordinates decoupled.
    factors: Vec<nalgebra::Cholesky<C64, nalgebra::Dyn>>,
}

impl<'a> Admm<'a> {
    pub fn new(net: &'a NetworkInstance, config: &AdmmConfig) -> Result<Self> {
        Self::with_support(net, config, None)
    }

    /// Solver in which only base stations with `support[q] == true` may
    /// transmit; the others are pinned to zero.
    pub fn with_support(
        net: &'a NetworkInstance,
        config: &AdmmConfig,
        support: Option<&[bool]>,
    ) -> Result<Self> {
        config.validate(net)?;
        let t = net.topology();
        let nb = t.num_bs();
        let support = match support {
            Some(s) if s.len() != nb => {
                return Err(Error::ConfigInvalid("support mask length mismatch".into()))
            }
            Some(s) => s.to_vec(),
            None => vec![true; nb],
        };
        let theta = config.resolved_theta(net);
        let rho = config.rho;
        let m = t.tx_antennas();
        let nu = t.num_users();
        let mut stacks = Vec::with_capacity(t.num_cells());
        let mut factors = Vec::with_capacity(t.num_cells());
        for cell in 0..t.num_cells() {
            let len = t.stack_len(cell);
            let mut stack = CMat::zeros(nu, len);
            for j in 0..nu {
                stack.row_mut(j).copy_from(&net.cell_channel(j, cell).row(0));
            }
            let mut a = stack.adjoint() * &stack * C64::from(rho);
            for d in 0..len {
                a[(d, d)] += C64::from(rho + 2.0 * theta);
            }
            for (local, bs) in t.bs_range(cell).enumerate() {
                if !support[bs] {
                    for d in local * m..(local + 1) * m {
                        a.row_mut(d).fill(C64::from(0.0));
                        a.column_mut(d).fill(C64::from(0.0));
                        a[(d, d)] = C64::from(1.0);
                    }
                }
            }
            let chol = a
                .cholesky()
                .ok_or_else(|| Error::ConfigInvalid("cell system not positive definite".into()))?;
            stacks.push(stack);
            factors.push(chol);
        }
        Ok(Admm {
            net,
            beta: config.beta_for(nb),
            config: config.clone(),
            theta,
            support,
            stacks,
            factors,
        })
    }

    pub fn config(&self) -> &AdmmConfig {
        &self.config
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn support(&self) -> &[bool] {
        &self.support
    }

    /// `hv[(rx, tx)] = h_rx^H v_tx` for all user pairs.
    pub fn received_matrix(&self, v: &BeamformerSet) -> CMat {
        let t = self.net.topology();
        let nu = t.num_users();
        let cols = map_range(self.config.execution, nu, |tx| {
            &self.stacks[t.cell_of_user(tx)] * v.user(tx)
        });
        let mut hv = CMat::zeros(nu, nu);
        for (tx, col) in cols.iter().enumerate() {
            hv.set_column(tx, col);
        }
        hv
    }

    fn masked(&self, mut v: BeamformerSet) -> BeamformerSet {
        let t = self.net.topology();
        let m = t.tx_antennas();
        for bs in 0..t.num_bs() {
            if !self.support[bs] {
                let q = t.local_bs(bs);
                for u in t.user_range(t.cell_of_bs(bs)) {
                    v.block_mut(m, u, q).fill(C64::from(0.0));
                }
            }
        }
        v
    }

    /// Cold start (`v = w = K = 0`, `kappa = sigma`, zero duals), or a warm
    /// start from given beamformers with consistent copies and zero duals.
    pub fn initial_state(&self, warm_start: Option<&BeamformerSet>) -> Result<AdmmState> {
        let t = self.net.topology();
        let nu = t.num_users();
        let sigma: Vec<f64> = self.net.noise_powers().iter().map(|s| s.sqrt()).collect();
        let v = match warm_start {
            Some(v0) => {
                v0.check(t)?;
                self.masked(v0.clone())
            }
            None => BeamformerSet::zeros(t),
        };
        let hv = self.received_matrix(&v);
        Ok(AdmmState {
            w: v.clone(),
            k: hv.clone(),
            kappa: sigma.clone(),
            kappa_hat: sigma,
            lambda: BeamformerSet::zeros(t),
            v,
            mu: CMat::zeros(nu, nu),
            delta: vec![0.0; nu],
            hv,
            iteration: 0,
        })
    }

    /// Exact minimizer of the block-A subproblem in `(K_{user, .}, kappa_user)`:
    /// projection of the shifted targets onto the user's SINR cone.
    pub fn update_k_kappa(&self, state: &AdmmState, user: usize) -> Result<(Vec<C64>, f64)> {
        let tau = self.net.sinr_target(user);
        if !(tau > 0.0) {
            return Err(Error::ConfigInvalid("SINR target must be positive".into()));
        }
        let rho = self.config.rho;
        let nu = self.net.topology().num_users();
        let mut row: Vec<C64> = (0..nu)
            .map(|j| state.hv[(user, j)] - state.mu[(user, j)] / rho)
            .collect();
        let kappa_target = state.kappa_hat[user] - state.delta[user] / rho;
        let direct = row[user].re;
        let tail_sq: f64 = kappa_target * kappa_target
            + row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != user)
                .map(|(_, z)| z.norm_sqr())
                .sum::<f64>();
        let proj = project_soc(direct, tail_sq.sqrt(), tau.sqrt());
        for (j, z) in row.iter_mut().enumerate() {
            if j == user {
                *z = C64::from(proj.t);
            } else {
                *z *= proj.scale;
            }
        }
        Ok((row, kappa_target * proj.scale))
    }

    /// Exact minimizer of the block-A subproblem in `w^q`.
    pub fn update_w(&self, state: &AdmmState, bs: usize) -> CVec {
        let vq = gather_bs(self.net, &state.v, bs);
        if !self.support[bs] {
            return CVec::zeros(vq.len());
        }
        let lq = gather_bs(self.net, &state.lambda, bs);
        let rho = self.config.rho;
        let b = vq - lq / C64::from(rho);
        w_block_update(&b, rho, self.beta[bs], self.net.power_budget(bs))
    }

    /// Exact minimizer of block B for the users of `cell`; `kappa_hat` is
    /// pinned to the noise amplitude.
    pub fn update_v(&self, state: &AdmmState, cell: usize) -> Vec<CVec> {
        let t = self.net.topology();
        let rho = self.config.rho;
        let m = t.tx_antennas();
        let stack = &self.stacks[cell];
        t.user_range(cell)
            .map(|i| {
                let target: CVec = CVec::from_fn(t.num_users(), |j, _| {
                    state.k[(j, i)] + state.mu[(j, i)] / rho
                });
                let mut rhs = stack.adjoint() * target * C64::from(rho)
                    + state.w.user(i) * C64::from(rho)
                    + state.lambda.user(i);
                for (local, bs) in t.bs_range(cell).enumerate() {
                    if !self.support[bs] {
                        rhs.rows_mut(local * m, m).fill(C64::from(0.0));
                    }
                }
                self.factors[cell].solve(&rhs)
            })
            .collect()
    }

    /// Dual ascent on the three consensus constraints.
    pub fn update_duals(&self, state: &mut AdmmState) {
        let rho = C64::from(self.config.rho);
        state.mu += (&state.k - &state.hv) * rho;
        for u in 0..state.v.num_users() {
            let step = (state.w.user(u) - state.v.user(u)) * rho;
            *state.lambda.user_mut(u) += step;
        }
        for u in 0..state.delta.len() {
            state.delta[u] += self.config.rho * (state.kappa[u] - state.kappa_hat[u]);
        }
    }

    /// One pass of block A, block B and the dual step.
    pub fn iterate(&self, state: &mut AdmmState) -> Result<()> {
        self.block_a(state)?;
        self.block_b(state);
        self.update_duals(state);
        state.iteration += 1;
        Ok(())
    }

    pub fn block_a(&self, state: &mut AdmmState) -> Result<()> {
        let t = self.net.topology();
        let exec = self.config.execution;
        let rows = map_range(exec, t.num_users(), |u| self.update_k_kappa(state, u));
        let ws = map_range(exec, t.num_bs(), |bs| self.update_w(state, bs));
        for (u, r) in rows.into_iter().enumerate() {
            let (row, kappa) = r?;
            for (j, z) in row.into_iter().enumerate() {
                state.k[(u, j)] = z;
            }
            state.kappa[u] = kappa;
        }
        for (bs, w) in ws.iter().enumerate() {
            scatter_bs(self.net, &mut state.w, bs, w);
        }
        Ok(())
    }

    pub fn block_b(&self, state: &mut AdmmState) {
        let t = self.net.topology();
        let cells = map_range(self.config.execution, t.num_cells(), |c| self.update_v(state, c));
        for (cell, vs) in cells.into_iter().enumerate() {
            for (i, v) in t.user_range(cell).zip(vs) {
                *state.v.user_mut(i) = v;
            }
        }
        for (u, kh) in state.kappa_hat.iter_mut().enumerate() {
            *kh = self.net.noise_power(u).sqrt();
        }
        state.hv = self.received_matrix(&state.v);
    }

    /// `sum_q beta_q ||x^q|| + theta sum_q ||x^q||^2`.
    pub fn objective(&self, x: &BeamformerSet) -> f64 {
        let t = self.net.topology();
        (0..t.num_bs())
            .map(|q| {
                let p = x.bs_power(t, q);
                self.beta[q] * p.sqrt() + self.theta * p
            })
            .sum()
    }

    /// Augmented Lagrangian of the split problem at `state`.
    pub fn augmented_lagrangian(&self, state: &AdmmState) -> f64 {
        let t = self.net.topology();
        let rho = self.config.rho;
        let mut l = 0.0;
        for q in 0..t.num_bs() {
            l += self.beta[q] * state.w.bs_norm(t, q) + self.theta * state.v.bs_power(t, q);
        }
        for u in 0..t.num_users() {
            let d = state.kappa[u] - state.kappa_hat[u];
            l += d * state.delta[u] + 0.5 * rho * d * d;
            let dw = state.w.user(u) - state.v.user(u);
            l += state.lambda.user(u).dotc(&dw).re + 0.5 * rho * dw.norm_squared();
        }
        let dk = &state.k - &state.hv;
        for (r, m) in dk.iter().zip(state.mu.iter()) {
            l += (m.conj() * r).re + 0.5 * rho * r.norm_sqr();
        }
        l
    }

    /// Normalized stopping terms; `prev_objective` is the objective at the
    /// previous iterate's `w`.
    pub fn residual_terms(&self, state: &AdmmState, prev_objective: Option<f64>) -> ResidualTerms {
        let dk = &state.k - &state.hv;
        let k_inf = dk.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let k_fro = state.k.norm();
        let mut vw_inf: f64 = 0.0;
        for u in 0..state.v.num_users() {
            let d = state.w.user(u) - state.v.user(u);
            vw_inf = d.iter().map(|z| z.norm()).fold(vw_inf, f64::max);
        }
        let vn = state.v.total_power().sqrt();
        let wn = state.w.total_power().sqrt();
        let noise = state
            .kappa
            .iter()
            .enumerate()
            .map(|(u, k)| (k * k - self.net.noise_power(u)).abs())
            .fold(0.0, f64::max);
        let obj = self.objective(&state.w);
        let objective_change = match prev_objective {
            None => f64::INFINITY,
            Some(p) if p != 0.0 => ((obj - p) / p).abs(),
            Some(_) if obj == 0.0 => 0.0,
            Some(_) => f64::INFINITY,
        };
        ResidualTerms {
            interference_consensus: k_inf / k_fro.max(1.0),
            copy_consensus: vw_inf / vn.max(wn).max(1.0),
            noise_consensus: noise,
            objective_change,
        }
    }

    pub fn solve(&self, warm_start: Option<&BeamformerSet>) -> Result<SolveReport> {
        self.solve_observed(warm_start, |_, _| {})
    }

    /// Runs the iteration, calling `observe` after every iteration.
    pub fn solve_observed<F>(&self, warm_start: Option<&BeamformerSet>, mut observe: F) -> Result<SolveReport>
    where
        F: FnMut(&AdmmState, &IterRecord),
    {
        let mut state = self.initial_state(warm_start)?;
        let limit = self.config.max_iters.min(self.config.infeasible_iter_cap);
        let mut prev_obj = self.objective(&state.w);
        let mut trace = Vec::with_capacity(limit.min(4096));
        let mut status = Status::MaxIterations;
        for _ in 0..limit {
            self.iterate(&mut state)?;
            let residuals = self.residual_terms(&state, Some(prev_obj));
            let objective = self.objective(&state.w);
            prev_obj = objective;
            let rec = IterRecord {
                iter: state.iteration,
                objective,
                residuals: Some(residuals),
            };
            observe(&state, &rec);
            trace.push(rec);
            if residuals.max() < self.config.eps_tol {
                status = Status::Converged;
                break;
            }
        }
        if status != Status::Converged && state.iteration >= self.config.infeasible_iter_cap {
            return Err(Error::Infeasible {
                iterations: state.iteration,
                residual: trace.last().and_then(|r| r.residuals).map(|r| r.max()).unwrap_or(f64::NAN),
            });
        }
        self.report(state, trace, status)
    }

    fn report(&self, state: AdmmState, trace: Vec<IterRecord>, status: Status) -> Result<SolveReport> {
        let t = self.net.topology();
        let v = state.w;
        let tol = self.config.active_tol(self.net);
        Ok(SolveReport {
            solver: SolverKind::Admm,
            status,
            iterations: state.iteration,
            trace,
            total_power: v.total_power(),
            active_set: v.active_bs_set(t, tol),
            sum_rate: sum_rate(self.net, &v)?,
            beamformers: v,
            alpha: None,
            user_rates: None,
            cluster_sizes: None,
            block_objectives: Vec::new(),
            flags: Vec::new(),
        })
    }
}

/// Solves the relaxed selection problem (or plain power minimization when
/// `beta` is zero).
pub fn admm_solve(
    net: &NetworkInstance,
    config: &AdmmConfig,
    warm_start: Option<&BeamformerSet>,
) -> Result<SolveReport> {
    Admm::new(net, config)?.solve(warm_start)
}

/// Plain power minimization restricted to `active_set`.
pub fn debias(
    net: &NetworkInstance,
    config: &AdmmConfig,
    active_set: &[usize],
    warm_start: Option<&BeamformerSet>,
) -> Result<SolveReport> {
    let nb = net.topology().num_bs();
    if active_set.is_empty() {
        return Err(Error::Infeasible {
            iterations: 0,
            residual: f64::INFINITY,
        });
    }
    let mut support = vec![false; nb];
    for &q in active_set {
        if q >= nb {
            return Err(Error::ConfigInvalid(format!("no base station {q}")));
        }
        support[q] = true;
    }
    let cfg = AdmmConfig {
        beta: Vec::new(),
        theta: Some(1.0),
        ..config.clone()
    };
    Admm::with_support(net, &cfg, Some(&support))?.solve(warm_start)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRound {
    pub round: usize,
    pub active_count: usize,
    pub iterations: usize,
    pub total_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub rounds: Vec<SelectionRound>,
    pub regularized: SolveReport,
    pub debiased: SolveReport,
}

/// Reweighted selection followed by debiasing on the final support.
/// Round 1 uses `beta0`; each later round reweights from the previous `w`.
pub fn select_and_debias(
    net: &NetworkInstance,
    config: &AdmmConfig,
    beta0: &[f64],
) -> Result<SelectionOutcome> {
    let nb = net.topology().num_bs();
    if beta0.len() != nb {
        return Err(Error::ConfigInvalid("beta0 length mismatch".into()));
    }
    let theta = config
        .theta
        .unwrap_or_else(|| 1.0 / net.power_budgets().iter().sum::<f64>());
    let mut beta = beta0.to_vec();
    let mut rounds = Vec::new();
    let mut last: Option<SolveReport> = None;
    for round in 1..=config.reweight_rounds.max(1) {
        let cfg = AdmmConfig {
            beta: beta.clone(),
            theta: Some(theta),
            ..config.clone()
        };
        let warm = last.as_ref().map(|r| &r.beamformers);
        let rep = match admm_solve(net, &cfg, warm) {
            Ok(rep) => rep,
            // A reweighted round that stalls does not make the instance
            // infeasible; keep the last converged round.
            Err(Error::Infeasible { .. }) if last.is_some() => break,
            Err(e) => return Err(e),
        };
        rounds.push(SelectionRound {
            round,
            active_count: rep.active_set.len(),
            iterations: rep.iterations,
            total_power: rep.total_power,
        });
        beta = reweight(net, &rep.beamformers, beta0, config.reweight_eps)?;
        last = Some(rep);
    }
    let mut regularized = last.expect("at least one round");
    if rounds.len() < config.reweight_rounds.max(1) {
        regularized.flags.push("reweighting-stopped-early".into());
    }
    let debiased = debias(net, config, &regularized.active_set, Some(&regularized.beamformers))?;
    Ok(SelectionOutcome {
        rounds,
        regularized,
        debiased,
    })
}

/// Gradient of the block-B quadratic with respect to `v_i` (for checks).
pub fn block_b_gradient(admm: &Admm<'_>, state: &AdmmState, user: usize) -> CVec {
    let t = admm.net.topology();
    let cell = t.cell_of_user(user);
    let rho = admm.config.rho;
    let stack = &admm.stacks[cell];
    let resid: CVec = CVec::from_fn(t.num_users(), |j, _| {
        state.hv[(j, user)] - state.k[(j, user)] - state.mu[(j, user)] / rho
    });
    stack.adjoint() * resid * C64::from(rho)
        + (state.v.user(user) - state.w.user(user) - state.lambda.user(user) / C64::from(rho))
            * C64::from(rho)
        + state.v.user(user) * C64::from(2.0 * admm.theta)
}
