//! Sparse weighted-MMSE (S-WMMSE) solver for sum-rate maximization with
//! base-station activation and, optionally, per-user cluster-size control.
//!
//! Every beamformer is written as `v_i^q = alpha_q * vbar_i^q` with a real
//! activation scalar `alpha_q in [-1, 1]` per base station. The solver runs
//! block coordinate descent on
//!
//! ```text
//!   sum_j (w_j e_j(u_j, v) - ln w_j)
//!     + sum_q mu_q |alpha_q|
//!     + sum_k lambda_k sum_{i in k} sum_{q in k} ||vbar_i^q||
//!     + eps ||vbar||^2
//! ```
//!
//! subject to `alpha_q^2 <= 1` and `sum_i ||vbar_i^q||^2 <= P_q`, cycling
//! `u -> w -> vbar -> alpha`. Each block is minimized exactly, so the
//! objective is non-increasing at every block update.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net_model::{mse_unchecked, rate, received, BeamformerSet, CMat, CVec, NetworkInstance, C64};
use crate::par::{map_range, Execution};
use crate::report::{IterRecord, SolveReport, SolverKind, Status};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwmmseConfig {
    /// Activation penalty per base station. Empty means all zero.
    pub mu: Vec<f64>,
    /// Cluster-size penalty per cell. Empty means all zero.
    pub lambda: Vec<f64>,
    /// Ridge weight on `vbar`.
    pub v_reg: f64,
    /// Relative tolerance of the dual root search for per-BS power.
    pub bisect_tol: f64,
    /// Outer loop stops when the objective changes by less than this
    /// (relative) over one full cycle.
    pub tol: f64,
    pub max_outer_iters: usize,
    pub inner_tol: f64,
    pub inner_max_sweeps: usize,
    pub reweight_eps: f64,
    /// Maximum number of penalized solves in the reweighting loop.
    pub reweight_rounds: usize,
    /// Reweighting stops once fewer than this fraction of BSs are active.
    pub min_active_fraction: f64,
    /// Threshold on block norms for activity and cluster membership.
    /// `None` uses `1e-5 * sqrt(max P)`.
    pub active_tol: Option<f64>,
    /// Record the objective after every block update.
    pub track_objective: bool,
    pub execution: Execution,
}

impl Default for SwmmseConfig {
    fn default() -> Self {
        SwmmseConfig {
            mu: Vec::new(),
            lambda: Vec::new(),
            v_reg: 1e-8,
            bisect_tol: 1e-12,
            tol: 1e-6,
            max_outer_iters: 500,
            inner_tol: 1e-8,
            inner_max_sweeps: 5000,
            reweight_eps: 1e-3,
            reweight_rounds: 6,
            min_active_fraction: 0.5,
            active_tol: None,
            track_objective: true,
            execution: Execution::default(),
        }
    }
}

impl SwmmseConfig {
    /// Same `mu` for every base station and `lambda` for every cell.
    pub fn uniform(net: &NetworkInstance, mu: f64, lambda: f64) -> Self {
        let t = net.topology();
        SwmmseConfig {
            mu: vec![mu; t.num_bs()],
            lambda: vec![lambda; t.num_cells()],
            ..SwmmseConfig::default()
        }
    }

    pub fn validate(&self, net: &NetworkInstance) -> Result<()> {
        let t = net.topology();
        if !self.mu.is_empty() && self.mu.len() != t.num_bs() {
            return Err(Error::ConfigInvalid("mu needs one entry per base station".into()));
        }
        if !self.lambda.is_empty() && self.lambda.len() != t.num_cells() {
            return Err(Error::ConfigInvalid("lambda needs one entry per cell".into()));
        }
        if self.mu.iter().chain(&self.lambda).any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::ConfigInvalid("penalties must be nonnegative".into()));
        }
        if !(self.v_reg > 0.0) || !(self.bisect_tol > 0.0) || !(self.reweight_eps > 0.0) {
            return Err(Error::ConfigInvalid(
                "v_reg, bisect_tol and reweight_eps must be positive".into(),
            ));
        }
        if !(self.tol >= 0.0) || !(self.inner_tol >= 0.0) {
            return Err(Error::ConfigInvalid("tolerances must be nonnegative".into()));
        }
        if self.max_outer_iters == 0 || self.inner_max_sweeps == 0 {
            return Err(Error::ConfigInvalid("iteration limits must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.min_active_fraction) {
            return Err(Error::ConfigInvalid("min_active_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn mu_at(&self, bs: usize) -> f64 {
        self.mu.get(bs).copied().unwrap_or(0.0)
    }

    pub fn lambda_at(&self, cell: usize) -> f64 {
        self.lambda.get(cell).copied().unwrap_or(0.0)
    }

    pub fn active_tol(&self, net: &NetworkInstance) -> f64 {
        self.active_tol.unwrap_or_else(|| net.default_active_tol())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwmmseState {
    pub alpha: Vec<f64>,
    pub vbar: BeamformerSet,
    pub u: Vec<CVec>,
    pub w: Vec<f64>,
}

impl SwmmseState {
    /// Starting point with `alpha = 1`, receive filters zero and weights one.
    pub fn new(net: &NetworkInstance, vbar: BeamformerSet) -> Result<Self> {
        let t = net.topology();
        vbar.check(t)?;
        Ok(SwmmseState {
            alpha: vec![1.0; t.num_bs()],
            vbar,
            u: vec![CVec::zeros(t.rx_antennas()); t.num_users()],
            w: vec![1.0; t.num_users()],
        })
    }

    /// `v = alpha * vbar`.
    pub fn effective(&self, net: &NetworkInstance) -> BeamformerSet {
        effective_beamformers(net, &self.alpha, &self.vbar)
    }
}

pub fn effective_beamformers(net: &NetworkInstance, alpha: &[f64], vbar: &BeamformerSet) -> BeamformerSet {
    let t = net.topology();
    let m = t.tx_antennas();
    let mut v = vbar.clone();
    for u in 0..t.num_users() {
        let cell = t.cell_of_user(u);
        for (local, bs) in t.bs_range(cell).enumerate() {
            let a = C64::from(alpha[bs]);
            for x in v.block_mut(m, u, local).iter_mut() {
                *x *= a;
            }
        }
    }
    v
}

/// Feasible start: every base station splits its budget evenly over the
/// users of its cell, each along the strongest right singular direction of
/// that user's channel.
pub fn init_vbar(net: &NetworkInstance) -> BeamformerSet {
    let t = net.topology();
    let m = t.tx_antennas();
    let mut v = BeamformerSet::zeros(t);
    for u in 0..t.num_users() {
        let cell = t.cell_of_user(u);
        let share = t.users_in_cell(cell) as f64;
        for (local, bs) in t.bs_range(cell).enumerate() {
            let h = net.channel(u, bs);
            let eig = (h.adjoint() * &h).symmetric_eigen();
            let best = eig.eigenvalues.imax();
            let dir = eig.eigenvectors.column(best);
            let scale = (net.power_budget(bs) / share).sqrt() / dir.norm();
            v.block_mut(m, u, local).copy_from(&(dir * C64::from(scale)));
        }
    }
    v
}

/// MMSE receive filter `J^{-1} H v_user`, with `J` the covariance of
/// everything the user receives.
pub fn mmse_receiver(net: &NetworkInstance, v: &BeamformerSet, user: usize) -> CVec {
    let n = net.topology().rx_antennas();
    let mut j = CMat::identity(n, n) * C64::from(net.noise_power(user));
    for tx in 0..net.topology().num_users() {
        let a = received(net, v, user, tx);
        j += &a * a.adjoint();
    }
    let a = received(net, v, user, user);
    j.cholesky().expect("noise keeps J positive definite").solve(&a)
}

pub fn update_u(net: &NetworkInstance, state: &SwmmseState, exec: Execution) -> Vec<CVec> {
    let v = state.effective(net);
    map_range(exec, net.topology().num_users(), |u| mmse_receiver(net, &v, u))
}

/// `w = 1 / e(u, v)`, the minimizer of `w e - ln w`.
pub fn update_weights(net: &NetworkInstance, state: &SwmmseState, exec: Execution) -> Vec<f64> {
    let v = state.effective(net);
    map_range(exec, net.topology().num_users(), |u| {
        1.0 / mse_unchecked(net, &v, &state.u[u], u)
    })
}

/// Quadratic data of one cell for fixed `(u, w)`:
/// `G = sum_j w_j g_j g_j^H` with `g_j = H_j^H u_j` over all users, and the
/// weighted in-cell vectors `w_i g_i`.
#[derive(Debug, Clone)]
pub struct CellQuadratic {
    pub g: CMat,
    pub wg: Vec<CVec>,
}

pub fn cell_quadratic(net: &NetworkInstance, state: &SwmmseState, cell: usize) -> CellQuadratic {
    let t = net.topology();
    let len = t.stack_len(cell);
    let mut g = CMat::zeros(len, len);
    let mut wg = Vec::with_capacity(t.users_in_cell(cell));
    for j in 0..t.num_users() {
        let gj = net.cell_channel(j, cell).adjoint() * &state.u[j];
        g += &gj * gj.adjoint() * C64::from(state.w[j]);
        if t.cell_of_user(j) == cell {
            wg.push(gj * C64::from(state.w[j]));
        }
    }
    CellQuadratic { g, wg }
}

/// `(A, b)` of the activation subproblem `min a^T A a - 2 b^T a + sum mu |a|`.
pub fn alpha_problem(net: &NetworkInstance, state: &SwmmseState, cell: usize, quad: &CellQuadratic) -> (DMatrix<f64>, Vec<f64>) {
    let t = net.topology();
    let m = t.tx_antennas();
    let nq = t.bs_in_cell(cell);
    let mut a = DMatrix::<f64>::zeros(nq, nq);
    let mut b = vec![0.0; nq];
    for (slot, i) in t.user_range(cell).enumerate() {
        let vi = state.vbar.user(i);
        for q in 0..nq {
            let vq = vi.rows(q * m, m);
            b[q] += quad.wg[slot].rows(q * m, m).dotc(&vq).re;
            for p in 0..nq {
                // Re (vbar^p)^H G[p,q] vbar^q
                let gpq_vq = quad.g.view((p * m, q * m), (m, m)) * vq;
                a[(p, q)] += vi.rows(p * m, m).dotc(&gpq_vq).re;
            }
        }
    }
    (a, b)
}

/// Minimizer over `[-1, 1]` of `a_qq x^2 - 2 c x + mu |x|`. The flag is set
/// when `a_qq = 0` forces the boundary.
pub fn alpha_coordinate(a_qq: f64, c: f64, mu: f64) -> (f64, bool) {
    if 2.0 * c.abs() <= mu {
        return (0.0, false);
    }
    if a_qq <= 0.0 {
        return (c.signum(), true);
    }
    let x = (2.0 * c - mu * c.signum()) / (2.0 * a_qq);
    if x.abs() >= 1.0 {
        (c.signum(), false)
    } else {
        (x, false)
    }
}

/// Coordinate descent on the activation subproblem, stopped on the KKT
/// residual. Coordinate descent crawls on ill-conditioned cells, so every
/// few sweeps the free coordinates of the current sign/box pattern are
/// solved exactly.
pub fn solve_alpha(a: &DMatrix<f64>, b: &[f64], mu: &[f64], start: &[f64], tol: f64, max_sweeps: usize) -> (Vec<f64>, bool) {
    let n = b.len();
    let mut x = start.to_vec();
    let mut degenerate = false;
    let kkt_tol = tol;
    let settled = |x: &[f64]| {
        let k = alpha_kkt(a, b, mu, x);
        k.stationarity.max(k.dual_feasibility).max(k.complementarity) <= kkt_tol
    };
    for sweep in 0..max_sweeps {
        let mut change: f64 = 0.0;
        for q in 0..n {
            let c = b[q] - (0..n).filter(|&p| p != q).map(|p| a[(p, q)] * x[p]).sum::<f64>();
            let (xq, flag) = alpha_coordinate(a[(q, q)], c, mu[q]);
            degenerate |= flag;
            change = change.max((xq - x[q]).abs());
            x[q] = xq;
        }
        let scale = x.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        let small_step = change <= tol * scale;
        if small_step || sweep % 10 == 9 {
            if let Some(p) = polish_alpha(a, b, mu, &x) {
                if alpha_value(a, b, mu, &p) <= alpha_value(a, b, mu, &x) {
                    x = p;
                }
            }
            if settled(&x) || (small_step && change == 0.0) {
                break;
            }
        }
    }
    (x, degenerate)
}

fn alpha_value(a: &DMatrix<f64>, b: &[f64], mu: &[f64], x: &[f64]) -> f64 {
    let n = b.len();
    (0..n)
        .map(|q| x[q] * (0..n).map(|p| a[(q, p)] * x[p]).sum::<f64>() - 2.0 * b[q] * x[q] + mu[q] * x[q].abs())
        .sum()
}

/// Step towards the stationary point of the current sign/box pattern,
/// `(A x)_q = b_q - mu_q sign(x_q) / 2` on interior nonzero coordinates
/// with the others fixed, stopped at the first coordinate that would reach
/// zero or the box edge (which is then snapped there). `None` when there is
/// no interior coordinate or the reduced system is singular.
fn polish_alpha(a: &DMatrix<f64>, b: &[f64], mu: &[f64], x: &[f64]) -> Option<Vec<f64>> {
    let free: Vec<usize> = (0..b.len()).filter(|&q| x[q] != 0.0 && x[q].abs() < 1.0).collect();
    if free.is_empty() {
        return None;
    }
    let m = DMatrix::from_fn(free.len(), free.len(), |r, c| a[(free[r], free[c])]);
    let rhs = nalgebra::DVector::from_fn(free.len(), |r, _| {
        let q = free[r];
        let fixed: f64 = (0..b.len()).filter(|p| !free.contains(p)).map(|p| a[(q, p)] * x[p]).sum();
        b[q] - 0.5 * mu[q] * x[q].signum() - fixed
    });
    let target = m.lu().solve(&rhs)?;
    if target.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut step = 1.0f64;
    let mut blocking = None;
    for (r, &q) in free.iter().enumerate() {
        let d = target[r] - x[q];
        // Distance to zero (sign change) or to the edge on the same side.
        let limit = if d * x[q] < 0.0 { -x[q] / d } else if d != 0.0 { (x[q].signum() - x[q]) / d } else { f64::INFINITY };
        if limit < step {
            step = limit;
            blocking = Some(q);
        }
    }
    let mut out = x.to_vec();
    for (r, &q) in free.iter().enumerate() {
        out[q] = x[q] + step * (target[r] - x[q]);
    }
    if let Some(q) = blocking {
        out[q] = if (target[free.iter().position(|&p| p == q).unwrap()] - x[q]) * x[q] < 0.0 { 0.0 } else { x[q].signum() };
    }
    Some(out)
}

/// Optimality residuals of an activation vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaKkt {
    /// Violation of `2|c| <= mu` at zero coordinates.
    pub stationarity: f64,
    /// Violation of `gamma >= 0` at nonzero coordinates.
    pub dual_feasibility: f64,
    /// `max |(1 - alpha^2) gamma|`.
    pub complementarity: f64,
}

pub fn alpha_kkt(a: &DMatrix<f64>, b: &[f64], mu: &[f64], x: &[f64]) -> AlphaKkt {
    let n = b.len();
    let mut out = AlphaKkt {
        stationarity: 0.0,
        dual_feasibility: 0.0,
        complementarity: 0.0,
    };
    for q in 0..n {
        let c = b[q] - (0..n).filter(|&p| p != q).map(|p| a[(p, q)] * x[p]).sum::<f64>();
        if x[q] == 0.0 {
            out.stationarity = out.stationarity.max(2.0 * c.abs() - mu[q]);
        } else {
            let gamma = (2.0 * c - mu[q] * x[q].signum()) / (2.0 * x[q]) - a[(q, q)];
            out.dual_feasibility = out.dual_feasibility.max(-gamma);
            out.complementarity = out.complementarity.max(((1.0 - x[q] * x[q]) * gamma).abs());
        }
    }
    out.stationarity = out.stationarity.max(0.0);
    out.dual_feasibility = out.dual_feasibility.max(0.0);
    out
}

/// One base-station block of the `vbar` subproblem:
/// `min sum_i x_i^H (C + reg I) x_i - 2 Re(r_i^H x_i) + lambda ||x_i||`
/// subject to `sum_i ||x_i||^2 <= budget`.
#[derive(Debug, Clone)]
pub struct BlockProblem {
    pub c: CMat,
    pub r: Vec<CVec>,
    pub budget: f64,
    pub reg: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct BlockSolution {
    pub x: Vec<CVec>,
    /// Multiplier of the power constraint.
    pub delta: f64,
}

impl BlockProblem {
    pub fn objective(&self, x: &[CVec]) -> f64 {
        x.iter()
            .zip(&self.r)
            .map(|(xi, ri)| {
                (xi.adjoint() * &self.c * xi)[(0, 0)].re + self.reg * xi.norm_squared()
                    - 2.0 * ri.dotc(xi).re
                    + self.lambda * xi.norm()
            })
            .sum()
    }

    pub fn solve(&self, tol: f64) -> BlockSolution {
        let eig = self.c.clone().symmetric_eigen();
        let evals: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        self.solve_with_eigen(&evals, &eig.eigenvectors, tol)
    }

    /// As [`BlockProblem::solve`], with `c = U diag(evals) U^H` supplied.
    pub fn solve_with_eigen(&self, evals: &[f64], u: &CMat, tol: f64) -> BlockSolution {
        let lmin = evals.iter().cloned().fold(f64::INFINITY, f64::min);
        let z: Vec<CVec> = self.r.iter().map(|r| u.adjoint() * r).collect();
        let half = self.lambda / 2.0;

        let solve_at = |delta: f64| -> Vec<CVec> {
            let s = self.reg + delta;
            z.iter()
                .zip(&self.r)
                .map(|(zi, ri)| {
                    if self.lambda > 0.0 {
                        if ri.norm() <= half {
                            return CVec::zeros(ri.len());
                        }
                        // ||x|| = t solves sum |z_m|^2 / (t (l_m + s) + lambda/2)^2 = 1.
                        let h = |t: f64| {
                            zi.iter()
                                .zip(evals)
                                .map(|(zm, l)| zm.norm_sqr() / (t * (l + s) + half).powi(2))
                                .sum::<f64>()
                                - 1.0
                        };
                        let t = decreasing_root(h, 0.0, zi.norm() / (lmin + s), 1e-15).0;
                        let d = CVec::from_iterator(
                            zi.len(),
                            zi.iter().zip(evals).map(|(zm, l)| zm / (l + s + half / t)),
                        );
                        u * d
                    } else {
                        let d = CVec::from_iterator(
                            zi.len(),
                            zi.iter().zip(evals).map(|(zm, l)| zm / (l + s)),
                        );
                        u * d
                    }
                })
                .collect()
        };
        let power = |x: &[CVec]| x.iter().map(|v| v.norm_squared()).sum::<f64>();

        let x0 = solve_at(0.0);
        if power(&x0) <= self.budget {
            return BlockSolution { x: x0, delta: 0.0 };
        }
        let rnorm2: f64 = self.r.iter().map(|r| r.norm_squared()).sum();
        let mut hi = (rnorm2 / self.budget).sqrt();
        while power(&solve_at(hi)) > self.budget {
            hi *= 2.0;
        }
        let (_, delta) = decreasing_root(|d| power(&solve_at(d)) - self.budget, 0.0, hi, tol);
        BlockSolution {
            x: solve_at(delta),
            delta,
        }
    }
}

/// Root of a decreasing function with `f(lo) > 0 >= f(hi)`, by the Illinois
/// variant of false position. Returns the final bracket `(lo, hi)`; `hi` is
/// always on the non-positive side.
fn decreasing_root<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if fhi > 0.0 || flo <= 0.0 {
        return if flo <= 0.0 { (lo, lo) } else { (hi, hi) };
    }
    let mut side = 0i8;
    for _ in 0..300 {
        if hi - lo <= tol * hi.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        let mut x = hi - fhi * (hi - lo) / (fhi - flo);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x);
        if fx > 0.0 {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            fhi = fx;
            if fx == 0.0 {
                lo = x;
                break;
            }
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    (lo, hi)
}

/// Block coordinate descent over the BS blocks of one cell's `vbar`
/// subproblem, with cluster penalty `lambda`. Blocks of BSs with
/// `alpha = 0` do not enter the objective and are left unchanged.
fn vbar_bcd(net: &NetworkInstance, cfg: &SwmmseConfig, state: &SwmmseState, cell: usize, lambda: f64) -> (Vec<CVec>, bool) {
    let t = net.topology();
    let m = t.tx_antennas();
    let quad = cell_quadratic(net, state, cell);
    let bs: Vec<usize> = t.bs_range(cell).collect();
    let alpha: Vec<f64> = bs.iter().map(|&b| state.alpha[b]).collect();
    let mut vb: Vec<CVec> = t.user_range(cell).map(|i| state.vbar.user(i).clone()).collect();
    let degenerate = alpha.iter().any(|&a| a == 0.0);
    let ahat = |v: &CVec| -> CVec {
        CVec::from_fn(v.len(), |d, _| v[d] * alpha[d / m])
    };
    let eigs: Vec<(Vec<f64>, CMat)> = (0..bs.len())
        .map(|q| {
            let e = quad.g.view((q * m, q * m), (m, m)).into_owned().symmetric_eigen();
            let a2 = alpha[q] * alpha[q];
            (e.eigenvalues.iter().map(|&l| (l * a2).max(0.0)).collect(), e.eigenvectors)
        })
        .collect();
    for _ in 0..cfg.inner_max_sweeps {
        let mut change: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for (q, &b) in bs.iter().enumerate() {
            let aq = alpha[q];
            if aq == 0.0 {
                continue;
            }
            let rows = quad.g.rows(q * m, m);
            let c = quad.g.view((q * m, q * m), (m, m)) * C64::from(aq * aq);
            let r: Vec<CVec> = vb
                .iter()
                .zip(&quad.wg)
                .map(|(v, wg)| {
                    let full = &rows * ahat(v);
                    let own = quad.g.view((q * m, q * m), (m, m)) * v.rows(q * m, m) * C64::from(aq);
                    (wg.rows(q * m, m) - full + own) * C64::from(aq)
                })
                .collect();
            let prob = BlockProblem {
                c,
                r,
                budget: net.power_budget(b),
                reg: cfg.v_reg,
                lambda,
            };
            let sol = prob.solve_with_eigen(&eigs[q].0, &eigs[q].1, cfg.bisect_tol);
            for (v, x) in vb.iter_mut().zip(sol.x) {
                let old = v.rows(q * m, m).into_owned();
                change = change.max((&x - &old).norm());
                scale = scale.max(x.norm());
                v.rows_mut(q * m, m).copy_from(&x);
            }
        }
        if change <= cfg.inner_tol * scale {
            break;
        }
    }
    (vb, degenerate)
}

/// `vbar` update of one cell without the cluster penalty.
pub fn update_vbar(net: &NetworkInstance, cfg: &SwmmseConfig, state: &SwmmseState, cell: usize) -> (Vec<CVec>, bool) {
    vbar_bcd(net, cfg, state, cell, 0.0)
}

/// `vbar` update of one cell with the cell's cluster penalty.
pub fn update_vbar_clustered(net: &NetworkInstance, cfg: &SwmmseConfig, state: &SwmmseState, cell: usize) -> (Vec<CVec>, bool) {
    vbar_bcd(net, cfg, state, cell, cfg.lambda_at(cell))
}

/// Activation update of one cell. The flag reports a zero diagonal entry
/// that forced a boundary value.
pub fn update_alpha(net: &NetworkInstance, cfg: &SwmmseConfig, state: &SwmmseState, cell: usize) -> (Vec<f64>, bool) {
    let t = net.topology();
    let quad = cell_quadratic(net, state, cell);
    let (a, b) = alpha_problem(net, state, cell, &quad);
    let mu: Vec<f64> = t.bs_range(cell).map(|q| cfg.mu_at(q)).collect();
    let start: Vec<f64> = t.bs_range(cell).map(|q| state.alpha[q]).collect();
    solve_alpha(&a, &b, &mu, &start, cfg.inner_tol, cfg.inner_max_sweeps)
}

/// Value of the penalized weighted-MSE objective at `state`.
pub fn penalized_objective(net: &NetworkInstance, cfg: &SwmmseConfig, state: &SwmmseState) -> f64 {
    let t = net.topology();
    let m = t.tx_antennas();
    let v = state.effective(net);
    let mut f: f64 = (0..t.num_users())
        .map(|j| state.w[j] * mse_unchecked(net, &v, &state.u[j], j) - state.w[j].ln())
        .sum();
    f += (0..t.num_bs()).map(|q| cfg.mu_at(q) * state.alpha[q].abs()).sum::<f64>();
    for i in 0..t.num_users() {
        let cell = t.cell_of_user(i);
        let lam = cfg.lambda_at(cell);
        if lam > 0.0 {
            f += lam
                * (0..t.bs_in_cell(cell))
                    .map(|q| state.vbar.block(m, i, q).norm())
                    .sum::<f64>();
        }
    }
    f + cfg.v_reg * state.vbar.total_power()
}

/// Result of one S-WMMSE run: the report plus the final state for warm starts.
#[derive(Debug, Clone)]
pub struct SwmmseRun {
    pub report: SolveReport,
    pub state: SwmmseState,
}

/// Runs S-WMMSE from `start` (or from [`init_vbar`] with `alpha = 1`).
pub fn swmmse_solve(net: &NetworkInstance, cfg: &SwmmseConfig, start: Option<SwmmseState>) -> Result<SwmmseRun> {
    let state = match start {
        Some(s) => {
            s.vbar.check(net.topology())?;
            s
        }
        None => SwmmseState::new(net, init_vbar(net))?,
    };
    run(net, cfg, state, true)
}

fn run(net: &NetworkInstance, cfg: &SwmmseConfig, mut state: SwmmseState, alpha_step: bool) -> Result<SwmmseRun> {
    cfg.validate(net)?;
    let t = net.topology();
    if state.alpha.len() != t.num_bs() || state.alpha.iter().any(|a| !(a.abs() <= 1.0)) {
        return Err(Error::ConfigInvalid("alpha must have one entry in [-1, 1] per BS".into()));
    }
    let exec = cfg.execution;
    let mut flags = Vec::new();
    let mut block_objectives = Vec::new();
    let mut trace = Vec::new();
    let mut prev = penalized_objective(net, cfg, &state);
    if cfg.track_objective {
        block_objectives.push(prev);
    }
    let mut status = Status::MaxIterations;
    let mut iterations = 0;

    let record = |state: &SwmmseState, out: &mut Vec<f64>| {
        if cfg.track_objective {
            out.push(penalized_objective(net, cfg, state));
        }
    };

    for it in 1..=cfg.max_outer_iters {
        iterations = it;
        state.u = update_u(net, &state, exec);
        record(&state, &mut block_objectives);
        state.w = update_weights(net, &state, exec);
        record(&state, &mut block_objectives);

        let cells = map_range(exec, t.num_cells(), |c| vbar_bcd(net, cfg, &state, c, cfg.lambda_at(c)));
        for (cell, (vb, degenerate)) in cells.into_iter().enumerate() {
            if degenerate {
                push_flag(&mut flags, "zero-alpha-block-skipped");
            }
            for (i, v) in t.user_range(cell).zip(vb) {
                *state.vbar.user_mut(i) = v;
            }
        }
        record(&state, &mut block_objectives);

        if alpha_step {
            let cells = map_range(exec, t.num_cells(), |c| update_alpha(net, cfg, &state, c));
            for (cell, (a, degenerate)) in cells.into_iter().enumerate() {
                if degenerate {
                    push_flag(&mut flags, "zero-curvature-alpha-clipped");
                }
                for (q, x) in t.bs_range(cell).zip(a) {
                    state.alpha[q] = x;
                }
            }
            record(&state, &mut block_objectives);
        }

        let obj = penalized_objective(net, cfg, &state);
        trace.push(IterRecord {
            iter: it,
            objective: obj,
            residuals: None,
        });
        let done = (prev - obj).abs() <= cfg.tol * prev.abs().max(1.0);
        prev = obj;
        if done {
            status = Status::Converged;
            break;
        }
    }
    if state.alpha.iter().all(|&a| a == 0.0) {
        push_flag(&mut flags, "all-bs-inactive");
    }
    let report = build_report(net, cfg, &state, status, iterations, trace, block_objectives, flags)?;
    Ok(SwmmseRun { report, state })
}

fn push_flag(flags: &mut Vec<String>, f: &str) {
    if !flags.iter().any(|x| x == f) {
        flags.push(f.to_string());
    }
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    net: &NetworkInstance,
    cfg: &SwmmseConfig,
    state: &SwmmseState,
    status: Status,
    iterations: usize,
    trace: Vec<IterRecord>,
    block_objectives: Vec<f64>,
    flags: Vec<String>,
) -> Result<SolveReport> {
    let t = net.topology();
    let m = t.tx_antennas();
    let v = state.effective(net);
    let tol = cfg.active_tol(net);
    let user_rates: Vec<f64> = (0..t.num_users()).map(|u| rate(net, &v, u)).collect::<Result<_>>()?;
    let cluster_sizes = (0..t.num_users())
        .map(|i| {
            (0..t.bs_in_cell(t.cell_of_user(i)))
                .filter(|&q| v.block(m, i, q).norm() > tol)
                .count()
        })
        .collect();
    Ok(SolveReport {
        solver: SolverKind::Swmmse,
        status,
        iterations,
        trace,
        total_power: v.total_power(),
        active_set: v.active_bs_set(t, tol),
        sum_rate: user_rates.iter().sum(),
        beamformers: v,
        alpha: Some(state.alpha.clone()),
        user_rates: Some(user_rates),
        cluster_sizes: Some(cluster_sizes),
        block_objectives,
        flags,
    })
}

/// Re-solves without the activation penalty on the support of `alpha_star`:
/// `alpha` is pinned to `sign(alpha_star)` and the activation step skipped.
/// The cluster penalty is kept. The start is the penalized solution itself
/// (`vbar` rescaled by `|alpha_star|`), so the effective beamformers are
/// continuous across the switch.
pub fn debias_swmmse(net: &NetworkInstance, cfg: &SwmmseConfig, alpha_star: &[f64], vbar: &BeamformerSet) -> Result<SwmmseRun> {
    let t = net.topology();
    if alpha_star.len() != t.num_bs() {
        return Err(Error::ConfigInvalid("alpha length mismatch".into()));
    }
    let alpha: Vec<f64> = alpha_star
        .iter()
        .map(|&a| if a == 0.0 { 0.0 } else { a.signum() })
        .collect();
    let magnitudes: Vec<f64> = alpha_star.iter().map(|a| a.abs()).collect();
    let start = effective_beamformers(net, &magnitudes, vbar);
    let mut state = SwmmseState::new(net, start)?;
    state.alpha = alpha;
    let cfg = SwmmseConfig {
        mu: Vec::new(),
        ..cfg.clone()
    };
    run(net, &cfg, state, false)
}

/// Plain WMMSE (no activation penalty) on a fixed support, started from
/// [`init_vbar`]. The cluster penalty of `cfg` is kept.
pub fn wmmse_on_support(net: &NetworkInstance, cfg: &SwmmseConfig, support: &[bool]) -> Result<SwmmseRun> {
    let t = net.topology();
    if support.len() != t.num_bs() {
        return Err(Error::ConfigInvalid("support mask length mismatch".into()));
    }
    let mut state = SwmmseState::new(net, init_vbar(net))?;
    state.alpha = support.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
    let cfg = SwmmseConfig {
        mu: Vec::new(),
        ..cfg.clone()
    };
    run(net, &cfg, state, false)
}

/// `mu_q = mu0_q / (|alpha_q| + eps)`.
pub fn reweight_mu(mu0: &[f64], alpha: &[f64], eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::ConfigInvalid("reweighting epsilon must be positive".into()));
    }
    if mu0.len() != alpha.len() {
        return Err(Error::ConfigInvalid("mu0 and alpha lengths differ".into()));
    }
    Ok(mu0.iter().zip(alpha).map(|(m, a)| m / (a.abs() + eps)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumRateRound {
    pub round: usize,
    pub active_count: usize,
    pub sum_rate: f64,
}

#[derive(Debug, Clone)]
pub struct SumRateOutcome {
    pub rounds: Vec<SumRateRound>,
    pub penalized: SwmmseRun,
    pub debiased: SwmmseRun,
}

/// Penalized S-WMMSE with `mu` reweighting, then debiasing. Reweighting
/// stops after `reweight_rounds` solves, when a round does not switch off
/// any further BS, or when the active fraction drops below
/// `min_active_fraction`.
pub fn sparse_sum_rate(net: &NetworkInstance, cfg: &SwmmseConfig) -> Result<SumRateOutcome> {
    cfg.validate(net)?;
    let nb = net.topology().num_bs();
    let mu0: Vec<f64> = (0..nb).map(|q| cfg.mu_at(q)).collect();
    let mut mu = mu0.clone();
    let mut rounds = Vec::new();
    let mut start = None;
    let mut prev_count = usize::MAX;
    let mut last: Option<SwmmseRun> = None;
    for round in 1..=cfg.reweight_rounds.max(1) {
        let rcfg = SwmmseConfig {
            mu: mu.clone(),
            ..cfg.clone()
        };
        let run = swmmse_solve(net, &rcfg, start.take())?;
        let count = run.report.active_set.len();
        rounds.push(SumRateRound {
            round,
            active_count: count,
            sum_rate: run.report.sum_rate,
        });
        let stop = count >= prev_count || (count as f64) < cfg.min_active_fraction * nb as f64;
        prev_count = count;
        mu = reweight_mu(&mu0, &run.state.alpha, cfg.reweight_eps)?;
        start = Some(run.state.clone());
        last = Some(run);
        if stop {
            break;
        }
    }
    let penalized = last.expect("at least one round");
    let debiased = debias_swmmse(net, cfg, &penalized.state.alpha, &penalized.state.vbar)?;
    Ok(SumRateOutcome {
        rounds,
        penalized,
        debiased,
    })
}
