//! Reference solvers for small instances.
//!
//! * Single-antenna power control with an explicit active set, as a linear
//!   program in the per-link powers `p_i^q`.
//! * The vertex-cover gadget: graph -> power-control instance whose minimum
//!   number of active base stations equals the minimum vertex cover.
//! * Exhaustive search for the minimum active set and minimum vertex cover.
//! * Exact minimum-power beamforming without per-BS budgets via
//!   uplink-downlink duality, used to check the ADMM power minimizer.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net_model::{BeamformerSet, CMat, CVec, NetworkInstance, C64};
use crate::par::{find_first, Execution};

/// Largest vertex / base-station count accepted by the exhaustive searches.
pub const DEFAULT_SIZE_CAP: usize = 12;

/// Simple undirected graph on vertices `0..n` (1-based in text form).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Edges are 0-based; duplicates are merged.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut out = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidParams(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::InvalidParams(format!("self-loop at vertex {a}")));
            }
            out.push((a.min(b), a.max(b)));
        }
        out.sort_unstable();
        out.dedup();
        Ok(Graph { n, edges: out })
    }

    /// Parses an edge list: the first non-comment line holds the vertex
    /// count, every further line an edge `u v` with 1-based vertices.
    /// `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let n: usize = lines
            .next()
            .ok_or_else(|| Error::Serialization("empty graph description".into()))?
            .parse()
            .map_err(|e| Error::Serialization(format!("vertex count: {e}")))?;
        let mut edges = Vec::new();
        for line in lines {
            let nums: Vec<&str> = line.split_whitespace().collect();
            if nums.len() != 2 {
                return Err(Error::Serialization(format!("bad edge line `{line}`")));
            }
            let parse = |s: &str| -> Result<usize> {
                let v: usize = s
                    .parse()
                    .map_err(|e| Error::Serialization(format!("vertex `{s}`: {e}")))?;
                if v == 0 {
                    return Err(Error::Serialization("vertices are numbered from 1".into()));
                }
                Ok(v - 1)
            };
            edges.push((parse(nums[0])?, parse(nums[1])?));
        }
        Graph::new(n, &edges)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.n);
        for &(a, b) in &self.edges {
            s.push_str(&format!("{} {}\n", a + 1, b + 1));
        }
        s
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    pub fn is_cover(&self, set: &[bool]) -> bool {
        self.edges.iter().all(|&(a, b)| set[a] || set[b])
    }

    /// Every vertex is in `set` or adjacent to a member.
    pub fn is_dominating(&self, set: &[bool]) -> bool {
        let mut hit = set.to_vec();
        for &(a, b) in &self.edges {
            hit[a] |= set[b];
            hit[b] |= set[a];
        }
        hit.iter().all(|&h| h)
    }
}

/// Single-cell, single-antenna power control. `gains[(i, q)]` is the power
/// gain from base station `q` to user `i`; user `i` receives
/// `sum_q p_i^q g_i^q` as signal and `sum_{j != i} sum_q p_j^q g_i^q` as
/// interference.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerControlInstance {
    pub gains: DMatrix<f64>,
    pub targets: Vec<f64>,
    pub noise: Vec<f64>,
    pub budgets: Vec<f64>,
}

impl PowerControlInstance {
    pub fn num_users(&self) -> usize {
        self.gains.nrows()
    }

    pub fn num_bs(&self) -> usize {
        self.gains.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (u, q) = self.gains.shape();
        if self.targets.len() != u || self.noise.len() != u || self.budgets.len() != q {
            return Err(Error::DimensionMismatch("power-control instance".into()));
        }
        if self.gains.iter().chain(&self.targets).chain(&self.noise).chain(&self.budgets).any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidParams("entries must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Worst ratio `SINR_i / tau_i` of a power allocation `p[(i, q)]`.
    pub fn min_sinr_margin(&self, p: &DMatrix<f64>) -> f64 {
        (0..self.num_users())
            .map(|i| {
                let mut signal = 0.0;
                let mut interference = self.noise[i];
                for j in 0..self.num_users() {
                    let rx: f64 = (0..self.num_bs()).map(|q| p[(j, q)] * self.gains[(i, q)]).sum();
                    if j == i {
                        signal = rx;
                    } else {
                        interference += rx;
                    }
                }
                signal / (interference * self.targets[i])
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn within_budgets(&self, p: &DMatrix<f64>) -> bool {
        (0..self.num_bs()).all(|q| p.column(q).sum() <= self.budgets[q])
    }
}

/// Gadget instance of a graph: `g_i^q = 1` if `i = q` or `{i, q}` is an edge,
/// else 0; `tau = 1/Q^2`, `sigma^2 = Q`, `P = Q`.
pub fn vertex_cover_instance(g: &Graph) -> PowerControlInstance {
    let q = g.num_vertices();
    let gains = DMatrix::from_fn(q, q, |i, j| if i == j || g.has_edge(i, j) { 1.0 } else { 0.0 });
    let qf = q as f64;
    PowerControlInstance {
        gains,
        targets: vec![1.0 / (qf * qf); q],
        noise: vec![qf; q],
        budgets: vec![qf; q],
    }
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        return Err(Error::Oracle(format!("size {n} exceeds the exhaustive-search cap {cap}")));
    }
    Ok(())
}

/// Builds the LP over the active columns; the objective is total power.
fn power_lp(inst: &PowerControlInstance, active: &[bool]) -> Option<f64> {
    let (nu, nq) = (inst.num_users(), inst.num_bs());
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut vars = vec![vec![None; nq]; nu];
    for row in vars.iter_mut() {
        for (q, slot) in row.iter_mut().enumerate() {
            if active[q] {
                *slot = Some(lp.add_var(1.0, (0.0, f64::INFINITY)));
            }
        }
    }
    for i in 0..nu {
        // signal - tau * interference >= tau * sigma^2
        let mut expr = Vec::new();
        for (j, row) in vars.iter().enumerate() {
            for (q, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    let g = inst.gains[(i, q)];
                    let coef = if j == i { g } else { -inst.targets[i] * g };
                    if coef != 0.0 {
                        expr.push((*v, coef));
                    }
                }
            }
        }
        lp.add_constraint(expr.as_slice(), ComparisonOp::Ge, inst.targets[i] * inst.noise[i]);
    }
    for q in (0..nq).filter(|&q| active[q]) {
        let expr: Vec<_> = vars.iter().filter_map(|row| row[q]).map(|v| (v, 1.0)).collect();
        lp.add_constraint(expr.as_slice(), ComparisonOp::Le, inst.budgets[q]);
    }
    lp.solve().ok().map(|s| s.objective())
}

/// Whether powers supported on `active` meet every target within budget.
///
/// Cheap exact checks run first (a user that no active BS reaches is
/// infeasible; the unit allocation on active columns is tried as a
/// witness), then an LP decides.
pub fn feasible_with_set(inst: &PowerControlInstance, active: &[bool]) -> Result<bool> {
    feasible_with_set_capped(inst, active, DEFAULT_SIZE_CAP)
}

pub fn feasible_with_set_capped(inst: &PowerControlInstance, active: &[bool], cap: usize) -> Result<bool> {
    inst.validate()?;
    check_cap(inst.num_bs(), cap)?;
    if active.len() != inst.num_bs() {
        return Err(Error::DimensionMismatch("active mask length".into()));
    }
    let (nu, nq) = (inst.num_users(), inst.num_bs());
    for i in 0..nu {
        let reached = (0..nq).any(|q| active[q] && inst.gains[(i, q)] > 0.0);
        if !reached && inst.targets[i] * inst.noise[i] > 0.0 {
            return Ok(false);
        }
    }
    let unit = DMatrix::from_fn(nu, nq, |_, q| if active[q] { 1.0 } else { 0.0 });
    if inst.within_budgets(&unit) && inst.min_sinr_margin(&unit) >= 1.0 {
        return Ok(true);
    }
    Ok(power_lp(inst, active).is_some())
}

/// Minimum total power supported on `active`, or `None` if infeasible.
pub fn min_power_with_set(inst: &PowerControlInstance, active: &[bool]) -> Result<Option<f64>> {
    inst.validate()?;
    check_cap(inst.num_bs(), DEFAULT_SIZE_CAP)?;
    if active.len() != inst.num_bs() {
        return Err(Error::DimensionMismatch("active mask length".into()));
    }
    Ok(power_lp(inst, active))
}

fn subsets_of_size(n: usize, k: usize) -> Vec<u32> {
    (0u32..(1u32 << n)).filter(|m| m.count_ones() as usize == k).collect()
}

fn mask_to_set(mask: u32, n: usize) -> Vec<bool> {
    (0..n).map(|b| mask >> b & 1 == 1).collect()
}

/// Smallest active set admitting a feasible allocation, with one witness
/// (0-based indices). `None` if even all base stations are infeasible.
pub fn min_active_set(inst: &PowerControlInstance, exec: Execution) -> Result<Option<(usize, Vec<usize>)>> {
    inst.validate()?;
    let n = inst.num_bs();
    check_cap(n, DEFAULT_SIZE_CAP)?;
    for k in 0..=n {
        let masks = subsets_of_size(n, k);
        let hit = find_first(exec, masks.len(), |idx| {
            feasible_with_set(inst, &mask_to_set(masks[idx], n)).unwrap_or(false)
        });
        if let Some(idx) = hit {
            let set = mask_to_set(masks[idx], n);
            return Ok(Some((k, (0..n).filter(|&q| set[q]).collect())));
        }
    }
    Ok(None)
}

/// Size of a minimum vertex cover, by enumeration.
pub fn min_vertex_cover(g: &Graph) -> Result<usize> {
    let n = g.num_vertices();
    check_cap(n, DEFAULT_SIZE_CAP)?;
    for k in 0..=n {
        if subsets_of_size(n, k).into_iter().any(|m| g.is_cover(&mask_to_set(m, n))) {
            return Ok(k);
        }
    }
    unreachable!("the full vertex set is always a cover")
}

/// Size of a minimum dominating set, by enumeration. On gadget instances
/// this is what [`min_active_set`] returns: a user is reachable exactly when
/// its own vertex or a neighbor is active, and the unit allocation then meets
/// `tau = 1/Q^2`.
pub fn min_dominating_set(g: &Graph) -> Result<usize> {
    let n = g.num_vertices();
    check_cap(n, DEFAULT_SIZE_CAP)?;
    for k in 0..=n {
        if subsets_of_size(n, k).into_iter().any(|m| g.is_dominating(&mask_to_set(m, n))) {
            return Ok(k);
        }
    }
    unreachable!("the full vertex set always dominates")
}

/// Outcome of the minimum-power oracle.
#[derive(Debug, Clone, PartialEq)]
pub enum PowerOracle {
    /// Minimum total power and optimal beamformers; all budgets hold.
    Optimal { total_power: f64, beamformers: BeamformerSet },
    /// The targets cannot be met even with unlimited power.
    Infeasible,
    /// The unconstrained optimum violates a per-BS budget, so it is not
    /// certified optimal for the budgeted problem.
    BudgetBinding { total_power: f64 },
}

/// Exact minimum total power meeting every SINR target with only the BSs in
/// `active`, for single-antenna users, ignoring per-BS budgets; budgets are
/// checked on the result.
///
/// Solves the dual fixed point
/// `lambda_i = 1 / ((1 + 1/tau_i) h_i^H (I + sum_j lambda_j h_j h_j^H)^{-1} h_i)`
/// (sums over users sharing the transmitter antennas), takes the dual
/// directions as beam directions, and recovers the powers from the SINR
/// equalities.
pub fn miso_power_oracle(net: &NetworkInstance, active: Option<&[bool]>) -> Result<PowerOracle> {
    let t = net.topology();
    if t.rx_antennas() != 1 {
        return Err(Error::Oracle("needs single-antenna users".into()));
    }
    let nu = t.num_users();
    let m = t.tx_antennas();
    let mask: Vec<bool> = match active {
        Some(a) if a.len() != t.num_bs() => return Err(Error::DimensionMismatch("active mask length".into())),
        Some(a) => a.to_vec(),
        None => vec![true; t.num_bs()],
    };
    // h[j][cell]: conjugated row of user j's channel from `cell`, restricted
    // to active antennas.
    let h: Vec<Vec<CVec>> = (0..nu)
        .map(|j| {
            (0..t.num_cells())
                .map(|c| {
                    let mut col = net.cell_channel(j, c).row(0).adjoint();
                    for (local, bs) in t.bs_range(c).enumerate() {
                        if !mask[bs] {
                            col.rows_mut(local * m, m).fill(C64::from(0.0));
                        }
                    }
                    col
                })
                .collect()
        })
        .collect();
    let own = |i: usize| &h[i][t.cell_of_user(i)];
    if (0..nu).any(|i| own(i).norm() == 0.0) {
        return Ok(PowerOracle::Infeasible);
    }

    let covariance = |lam: &[f64], cell: usize| -> CMat {
        let len = t.stack_len(cell);
        let mut a = CMat::identity(len, len);
        for j in 0..nu {
            let hj = &h[j][cell];
            a += hj * hj.adjoint() * C64::from(lam[j]);
        }
        a
    };

    let mut lam = vec![0.0; nu];
    let mut converged = false;
    for _ in 0..100_000 {
        let covs: Vec<_> = (0..t.num_cells()).map(|c| covariance(&lam, c).cholesky().expect("positive definite")).collect();
        let next: Vec<f64> = (0..nu)
            .map(|i| {
                let hi = own(i);
                let q = hi.dotc(&covs[t.cell_of_user(i)].solve(hi)).re;
                1.0 / ((1.0 + 1.0 / net.sinr_target(i)) * q)
            })
            .collect();
        let change = next
            .iter()
            .zip(&lam)
            .map(|(a, b)| ((a - b) / a.max(1e-300)).abs())
            .fold(0.0, f64::max);
        lam = next;
        if lam.iter().any(|l| !l.is_finite() || *l > 1e15) {
            return Ok(PowerOracle::Infeasible);
        }
        if change < 1e-14 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Ok(PowerOracle::Infeasible);
    }

    let covs: Vec<_> = (0..t.num_cells()).map(|c| covariance(&lam, c).cholesky().expect("positive definite")).collect();
    let dirs: Vec<CVec> = (0..nu)
        .map(|i| {
            let d = covs[t.cell_of_user(i)].solve(own(i));
            let n = d.norm();
            d / C64::from(n)
        })
        .collect();
    // p_i |h_i^H u_i|^2 / tau_i - sum_{j != i} p_j |h_i^H u_j|^2 = sigma_i^2
    let mut a = DMatrix::<f64>::zeros(nu, nu);
    for i in 0..nu {
        for j in 0..nu {
            let g = h[i][t.cell_of_user(j)].dotc(&dirs[j]).norm_sqr();
            a[(i, j)] = if i == j { g / net.sinr_target(i) } else { -g };
        }
    }
    let rhs = nalgebra::DVector::from_iterator(nu, (0..nu).map(|i| net.noise_power(i)));
    let p = match a.lu().solve(&rhs) {
        Some(p) => p,
        None => return Ok(PowerOracle::Infeasible),
    };
    if p.iter().any(|&x| !(x >= 0.0)) {
        return Ok(PowerOracle::Infeasible);
    }
    let v = BeamformerSet::from_users(
        (0..nu).map(|i| &dirs[i] * C64::from(p[i].sqrt())).collect(),
    );
    let total_power = v.total_power();
    let over = (0..t.num_bs()).any(|q| v.bs_power(t, q) > net.power_budget(q) * (1.0 + 1e-9));
    if over {
        return Ok(PowerOracle::BudgetBinding { total_power });
    }
    Ok(PowerOracle::Optimal {
        total_power,
        beamformers: v,
    })
}
