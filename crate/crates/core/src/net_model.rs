//! Multi-cell network data, random instance generation, and link metrics.
//!
//! Indexing is global and cell-major: base stations `0..num_bs()` and users
//! `0..num_users()` are numbered cell by cell. A user is served only by the
//! base stations of its own cell, so its beamformer is the stack of one
//! `M`-vector per base station of that cell.
//!
//! Channels follow the receive convention `y = H x`: the channel from base
//! station `q` to user `i` is an `N x M` matrix, and for single-antenna users
//! it is the row `h^H`.

use nalgebra::{DMatrix, DVector, DVectorView, DVectorViewMut, Dyn, U1};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Closest allowed base-station to user distance, in meters.
pub const MIN_DISTANCE_M: f64 = 10.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TopologyRepr", into = "TopologyRepr")]
pub struct Topology {
    bs_per_cell: Vec<usize>,
    users_per_cell: Vec<usize>,
    tx_antennas: usize,
    rx_antennas: usize,
    cell_centers: Vec<[f64; 2]>,
    bs_positions: Vec<[f64; 2]>,
    user_positions: Vec<[f64; 2]>,
    bs_offsets: Vec<usize>,
    user_offsets: Vec<usize>,
    bs_cell: Vec<usize>,
    user_cell: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct TopologyRepr {
    num_cells: usize,
    bs_per_cell: Vec<usize>,
    users_per_cell: Vec<usize>,
    tx_antennas: usize,
    rx_antennas: usize,
    cell_centers: Vec<[f64; 2]>,
    bs_positions: Vec<[f64; 2]>,
    user_positions: Vec<[f64; 2]>,
}

impl TryFrom<TopologyRepr> for Topology {
    type Error = Error;

    fn try_from(r: TopologyRepr) -> Result<Self> {
        if r.bs_per_cell.len() != r.num_cells {
            return Err(Error::InvalidParams(format!(
                "num_cells = {} but {} base-station counts given",
                r.num_cells,
                r.bs_per_cell.len()
            )));
        }
        Topology::with_positions(
            r.bs_per_cell,
            r.users_per_cell,
            r.tx_antennas,
            r.rx_antennas,
            r.cell_centers,
            r.bs_positions,
            r.user_positions,
        )
    }
}

impl From<Topology> for TopologyRepr {
    fn from(t: Topology) -> Self {
        TopologyRepr {
            num_cells: t.num_cells(),
            bs_per_cell: t.bs_per_cell,
            users_per_cell: t.users_per_cell,
            tx_antennas: t.tx_antennas,
            rx_antennas: t.rx_antennas,
            cell_centers: t.cell_centers,
            bs_positions: t.bs_positions,
            user_positions: t.user_positions,
        }
    }
}

fn offsets(counts: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(counts.len() + 1);
    let mut acc = 0;
    out.push(0);
    for &c in counts {
        acc += c;
        out.push(acc);
    }
    out
}

impl Topology {
    /// Topology without geometry (all positions at the origin).
    pub fn new(
        bs_per_cell: Vec<usize>,
        users_per_cell: Vec<usize>,
        tx_antennas: usize,
        rx_antennas: usize,
    ) -> Result<Self> {
        let k = bs_per_cell.len();
        let nb: usize = bs_per_cell.iter().sum();
        let nu: usize = users_per_cell.iter().sum();
        Self::with_positions(
            bs_per_cell,
            users_per_cell,
            tx_antennas,
            rx_antennas,
            vec![[0.0; 2]; k],
            vec![[0.0; 2]; nb],
            vec![[0.0; 2]; nu],
        )
    }

    pub fn with_positions(
        bs_per_cell: Vec<usize>,
        users_per_cell: Vec<usize>,
        tx_antennas: usize,
        rx_antennas: usize,
        cell_centers: Vec<[f64; 2]>,
        bs_positions: Vec<[f64; 2]>,
        user_positions: Vec<[f64; 2]>,
    ) -> Result<Self> {
        let k = bs_per_cell.len();
        if k == 0 {
            return Err(Error::InvalidParams("at least one cell is required".into()));
        }
        if users_per_cell.len() != k {
            return Err(Error::InvalidParams(format!(
                "{} cells but {} user counts",
                k,
                users_per_cell.len()
            )));
        }
        if bs_per_cell.iter().any(|&q| q == 0) || users_per_cell.iter().any(|&i| i == 0) {
            return Err(Error::InvalidParams(
                "every cell needs at least one base station and one user".into(),
            ));
        }
        if tx_antennas == 0 || rx_antennas == 0 {
            return Err(Error::InvalidParams("antenna counts must be positive".into()));
        }
        let bs_offsets = offsets(&bs_per_cell);
        let user_offsets = offsets(&users_per_cell);
        if cell_centers.len() != k
            || bs_positions.len() != bs_offsets[k]
            || user_positions.len() != user_offsets[k]
        {
            return Err(Error::InvalidParams("position arrays do not match counts".into()));
        }
        let bs_cell = (0..k)
            .flat_map(|c| std::iter::repeat_n(c, bs_per_cell[c]))
            .collect();
        let user_cell = (0..k)
            .flat_map(|c| std::iter::repeat_n(c, users_per_cell[c]))
            .collect();
        Ok(Topology {
            bs_per_cell,
            users_per_cell,
            tx_antennas,
            rx_antennas,
            cell_centers,
            bs_positions,
            user_positions,
            bs_offsets,
            user_offsets,
            bs_cell,
            user_cell,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.bs_per_cell.len()
    }
    pub fn num_bs(&self) -> usize {
        self.bs_cell.len()
    }
    pub fn num_users(&self) -> usize {
        self.user_cell.len()
    }
    pub fn tx_antennas(&self) -> usize {
        self.tx_antennas
    }
    pub fn rx_antennas(&self) -> usize {
        self.rx_antennas
    }
    pub fn bs_in_cell(&self, cell: usize) -> usize {
        self.bs_per_cell[cell]
    }
    pub fn users_in_cell(&self, cell: usize) -> usize {
        self.users_per_cell[cell]
    }
    pub fn bs_range(&self, cell: usize) -> std::ops::Range<usize> {
        self.bs_offsets[cell]..self.bs_offsets[cell + 1]
    }
    pub fn user_range(&self, cell: usize) -> std::ops::Range<usize> {
        self.user_offsets[cell]..self.user_offsets[cell + 1]
    }
    pub fn cell_of_user(&self, user: usize) -> usize {
        self.user_cell[user]
    }
    pub fn cell_of_bs(&self, bs: usize) -> usize {
        self.bs_cell[bs]
    }
    /// Position of `bs` within its cell.
    pub fn local_bs(&self, bs: usize) -> usize {
        bs - self.bs_offsets[self.bs_cell[bs]]
    }
    /// Length of the stacked beamformer of a user in `cell` (`M * Q_cell`).
    pub fn stack_len(&self, cell: usize) -> usize {
        self.tx_antennas * self.bs_per_cell[cell]
    }
    pub fn cell_centers(&self) -> &[[f64; 2]] {
        &self.cell_centers
    }
    pub fn bs_positions(&self) -> &[[f64; 2]] {
        &self.bs_positions
    }
    pub fn user_positions(&self) -> &[[f64; 2]] {
        &self.user_positions
    }
}

/// All fixed problem data. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceRepr", into = "InstanceRepr")]
pub struct NetworkInstance {
    topology: Topology,
    /// `channels[user * K + cell]`: `N x (M * Q_cell)` stacked channel from
    /// every base station of `cell` to `user`.
    channels: Vec<CMat>,
    noise_power: Vec<f64>,
    sinr_target: Vec<f64>,
    power_budget: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ChannelRepr {
    user: usize,
    bs: usize,
    rows: usize,
    cols: usize,
    /// Row-major entries.
    entries: Vec<C64>,
}

#[derive(Serialize, Deserialize)]
struct InstanceRepr {
    topology: Topology,
    noise_power: Vec<f64>,
    sinr_target: Vec<f64>,
    power_budget: Vec<f64>,
    channels: Vec<ChannelRepr>,
}

impl From<NetworkInstance> for InstanceRepr {
    fn from(net: NetworkInstance) -> Self {
        let t = &net.topology;
        let mut channels = Vec::with_capacity(t.num_users() * t.num_bs());
        for user in 0..t.num_users() {
            for bs in 0..t.num_bs() {
                let h = net.channel(user, bs);
                let mut entries = Vec::with_capacity(h.len());
                for r in 0..h.nrows() {
                    for c in 0..h.ncols() {
                        entries.push(h[(r, c)]);
                    }
                }
                channels.push(ChannelRepr {
                    user,
                    bs,
                    rows: h.nrows(),
                    cols: h.ncols(),
                    entries,
                });
            }
        }
        InstanceRepr {
            topology: net.topology,
            noise_power: net.noise_power,
            sinr_target: net.sinr_target,
            power_budget: net.power_budget,
            channels,
        }
    }
}

impl TryFrom<InstanceRepr> for NetworkInstance {
    type Error = Error;

    fn try_from(r: InstanceRepr) -> Result<Self> {
        let t = &r.topology;
        let (n, m) = (t.rx_antennas(), t.tx_antennas());
        if r.channels.len() != t.num_users() * t.num_bs() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} channel blocks, found {}",
                t.num_users() * t.num_bs(),
                r.channels.len()
            )));
        }
        let mut blocks = vec![None; t.num_users() * t.num_bs()];
        for c in r.channels {
            if c.user >= t.num_users() || c.bs >= t.num_bs() {
                return Err(Error::DimensionMismatch("channel index out of range".into()));
            }
            if c.rows != n || c.cols != m || c.entries.len() != n * m {
                return Err(Error::DimensionMismatch(format!(
                    "channel ({}, {}) has shape {}x{}, expected {}x{}",
                    c.user, c.bs, c.rows, c.cols, n, m
                )));
            }
            blocks[c.user * t.num_bs() + c.bs] = Some(CMat::from_row_slice(n, m, &c.entries));
        }
        let nb = t.num_bs();
        NetworkInstance::from_fn(
            r.topology.clone(),
            |user, bs| blocks[user * nb + bs].clone().expect("every block present"),
            r.noise_power,
            r.sinr_target,
            r.power_budget,
        )
    }
}

impl NetworkInstance {
    /// Builds an instance from per-link `N x M` channels `channel(user, bs)`.
    pub fn from_fn<F>(
        topology: Topology,
        mut channel: F,
        noise_power: Vec<f64>,
        sinr_target: Vec<f64>,
        power_budget: Vec<f64>,
    ) -> Result<Self>
    where
        F: FnMut(usize, usize) -> CMat,
    {
        let (n, m, k) = (topology.rx_antennas(), topology.tx_antennas(), topology.num_cells());
        let mut channels = Vec::with_capacity(topology.num_users() * k);
        for user in 0..topology.num_users() {
            for cell in 0..k {
                let mut stack = CMat::zeros(n, topology.stack_len(cell));
                for (local, bs) in topology.bs_range(cell).enumerate() {
                    let h = channel(user, bs);
                    if h.nrows() != n || h.ncols() != m {
                        return Err(Error::DimensionMismatch(format!(
                            "channel ({user}, {bs}) is {}x{}, expected {n}x{m}",
                            h.nrows(),
                            h.ncols()
                        )));
                    }
                    stack.view_mut((0, local * m), (n, m)).copy_from(&h);
                }
                channels.push(stack);
            }
        }
        let net = NetworkInstance {
            topology,
            channels,
            noise_power,
            sinr_target,
            power_budget,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        let t = &self.topology;
        if self.noise_power.len() != t.num_users()
            || self.sinr_target.len() != t.num_users()
            || self.power_budget.len() != t.num_bs()
        {
            return Err(Error::DimensionMismatch(
                "noise/target/budget arrays do not match topology".into(),
            ));
        }
        if self.noise_power.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParams("noise powers must be positive".into()));
        }
        if self.sinr_target.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParams("SINR targets must be positive".into()));
        }
        if self.power_budget.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParams("power budgets must be positive".into()));
        }
        if self.channels.iter().flat_map(|c| c.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParams("channels must be finite".into()));
        }
        Ok(())
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }
    pub fn noise_power(&self, user: usize) -> f64 {
        self.noise_power[user]
    }
    pub fn noise_powers(&self) -> &[f64] {
        &self.noise_power
    }
    pub fn sinr_target(&self, user: usize) -> f64 {
        self.sinr_target[user]
    }
    pub fn sinr_targets(&self) -> &[f64] {
        &self.sinr_target
    }
    pub fn power_budget(&self, bs: usize) -> f64 {
        self.power_budget[bs]
    }
    pub fn power_budgets(&self) -> &[f64] {
        &self.power_budget
    }

    /// Stacked channel from all base stations of `cell` to `user`.
    pub fn cell_channel(&self, user: usize, cell: usize) -> &CMat {
        &self.channels[user * self.topology.num_cells() + cell]
    }

    /// `N x M` channel from base station `bs` to `user`.
    pub fn channel(&self, user: usize, bs: usize) -> CMat {
        let t = &self.topology;
        let m = t.tx_antennas();
        let stack = self.cell_channel(user, t.cell_of_bs(bs));
        stack.columns(t.local_bs(bs) * m, m).into_owned()
    }

    /// Same instance with every SINR target replaced.
    pub fn with_sinr_targets(&self, targets: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.sinr_target = targets;
        out.validate()?;
        Ok(out)
    }

    /// Same instance with every power budget replaced.
    pub fn with_power_budgets(&self, budgets: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.power_budget = budgets;
        out.validate()?;
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Default activity threshold: `1e-5 * sqrt(max budget)`.
    pub fn default_active_tol(&self) -> f64 {
        let pmax = self.power_budget.iter().cloned().fold(0.0, f64::max);
        1e-5 * pmax.sqrt()
    }
}

/// Transmit beamformers. `v[user]` stacks the `M`-vectors of every base
/// station in the user's cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Vec<C64>>", into = "Vec<Vec<C64>>")]
pub struct BeamformerSet {
    per_user: Vec<CVec>,
}

impl From<Vec<Vec<C64>>> for BeamformerSet {
    fn from(v: Vec<Vec<C64>>) -> Self {
        BeamformerSet {
            per_user: v.into_iter().map(CVec::from_vec).collect(),
        }
    }
}

impl From<BeamformerSet> for Vec<Vec<C64>> {
    fn from(v: BeamformerSet) -> Self {
        v.per_user.into_iter().map(|x| x.as_slice().to_vec()).collect()
    }
}

impl BeamformerSet {
    pub fn zeros(t: &Topology) -> Self {
        BeamformerSet {
            per_user: (0..t.num_users())
                .map(|u| CVec::zeros(t.stack_len(t.cell_of_user(u))))
                .collect(),
        }
    }

    pub fn from_users(per_user: Vec<CVec>) -> Self {
        BeamformerSet { per_user }
    }

    pub fn num_users(&self) -> usize {
        self.per_user.len()
    }

    pub fn user(&self, u: usize) -> &CVec {
        &self.per_user[u]
    }

    pub fn user_mut(&mut self, u: usize) -> &mut CVec {
        &mut self.per_user[u]
    }

    pub fn users(&self) -> &[CVec] {
        &self.per_user
    }

    /// `v_u^q` for the `local_q`-th base station of the user's cell.
    pub fn block(&self, m: usize, u: usize, local_q: usize) -> DVectorView<'_, C64, U1, Dyn> {
        self.per_user[u].rows(local_q * m, m)
    }

    pub fn block_mut(&mut self, m: usize, u: usize, local_q: usize) -> DVectorViewMut<'_, C64, U1, Dyn> {
        self.per_user[u].rows_mut(local_q * m, m)
    }

    pub fn check(&self, t: &Topology) -> Result<()> {
        if self.per_user.len() != t.num_users() {
            return Err(Error::DimensionMismatch(format!(
                "{} beamformers for {} users",
                self.per_user.len(),
                t.num_users()
            )));
        }
        for (u, v) in self.per_user.iter().enumerate() {
            let want = t.stack_len(t.cell_of_user(u));
            if v.len() != want {
                return Err(Error::DimensionMismatch(format!(
                    "beamformer of user {u} has length {}, expected {want}",
                    v.len()
                )));
            }
        }
        Ok(())
    }

    /// `||v^q||^2` summed over the users served by `bs`.
    pub fn bs_power(&self, t: &Topology, bs: usize) -> f64 {
        let m = t.tx_antennas();
        let q = t.local_bs(bs);
        t.user_range(t.cell_of_bs(bs))
            .map(|u| self.block(m, u, q).norm_squared())
            .sum()
    }

    pub fn bs_norm(&self, t: &Topology, bs: usize) -> f64 {
        self.bs_power(t, bs).sqrt()
    }

    pub fn total_power(&self) -> f64 {
        self.per_user.iter().map(|v| v.norm_squared()).sum()
    }

    /// Base stations whose beamformer block has norm above `tol`.
    pub fn active_bs_set(&self, t: &Topology, tol: f64) -> Vec<usize> {
        (0..t.num_bs()).filter(|&b| self.bs_norm(t, b) > tol).collect()
    }
}

/// `H_rx^{cell(tx)} v_tx`: what user `rx` receives from the stream of `tx`.
pub fn received(net: &NetworkInstance, v: &BeamformerSet, rx: usize, tx: usize) -> CVec {
    let cell = net.topology().cell_of_user(tx);
    net.cell_channel(rx, cell) * v.user(tx)
}

fn check_dims(net: &NetworkInstance, v: &BeamformerSet, user: usize) -> Result<()> {
    v.check(net.topology())?;
    if user >= net.topology().num_users() {
        return Err(Error::DimensionMismatch(format!("no user {user}")));
    }
    Ok(())
}

/// SINR of a single-antenna user treating interference as noise.
pub fn sinr(net: &NetworkInstance, v: &BeamformerSet, user: usize) -> Result<f64> {
    check_dims(net, v, user)?;
    if net.topology().rx_antennas() != 1 {
        return Err(Error::DimensionMismatch("SINR is defined for N = 1".into()));
    }
    let mut interference = net.noise_power(user);
    let mut signal = 0.0;
    for tx in 0..net.topology().num_users() {
        let g = received(net, v, user, tx)[0].norm_sqr();
        if tx == user {
            signal = g;
        } else {
            interference += g;
        }
    }
    Ok(signal / interference)
}

/// Interference-plus-noise covariance seen by `user` (all streams but its own).
pub fn interference_covariance(net: &NetworkInstance, v: &BeamformerSet, user: usize) -> CMat {
    let n = net.topology().rx_antennas();
    let mut r = CMat::identity(n, n) * C64::from(net.noise_power(user));
    for tx in 0..net.topology().num_users() {
        if tx != user {
            let a = received(net, v, user, tx);
            r += &a * a.adjoint();
        }
    }
    r
}

/// Achievable rate in nats: `log det(I + H v v^H H^H R^{-1})`.
pub fn rate(net: &NetworkInstance, v: &BeamformerSet, user: usize) -> Result<f64> {
    check_dims(net, v, user)?;
    if !(net.noise_power(user) > 0.0) {
        return Err(Error::InvalidParams("rate needs positive noise power".into()));
    }
    let a = received(net, v, user, user);
    let r = interference_covariance(net, v, user);
    // Rank-one update: det(I + a a^H R^-1) = 1 + a^H R^-1 a.
    let chol = r
        .cholesky()
        .ok_or_else(|| Error::InvalidParams("interference covariance not positive definite".into()))?;
    let q = a.dotc(&chol.solve(&a)).re;
    Ok(q.max(0.0).ln_1p())
}

pub fn sum_rate(net: &NetworkInstance, v: &BeamformerSet) -> Result<f64> {
    (0..net.topology().num_users()).map(|u| rate(net, v, u)).sum()
}

/// Mean-squared error of estimating the user's symbol with receive filter `u`.
pub fn mse(net: &NetworkInstance, v: &BeamformerSet, filter: &CVec, user: usize) -> Result<f64> {
    check_dims(net, v, user)?;
    if filter.len() != net.topology().rx_antennas() {
        return Err(Error::DimensionMismatch(format!(
            "receive filter has length {}, expected {}",
            filter.len(),
            net.topology().rx_antennas()
        )));
    }
    Ok(mse_unchecked(net, v, filter, user))
}

pub(crate) fn mse_unchecked(net: &NetworkInstance, v: &BeamformerSet, filter: &CVec, user: usize) -> f64 {
    let mut e = net.noise_power(user) * filter.norm_squared();
    for tx in 0..net.topology().num_users() {
        let g = filter.dotc(&received(net, v, user, tx));
        if tx == user {
            e += (C64::from(1.0) - g).norm_sqr();
        } else {
            e += g.norm_sqr();
        }
    }
    e
}

/// Parameters of the random instance generator. Budgets and SINR targets in
/// dB, noise power linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub cells: usize,
    pub bs_per_cell: usize,
    pub users_per_cell: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub cell_spacing_m: f64,
    pub sinr_target_db: f64,
    pub center_bs_budget_db: f64,
    pub other_bs_budget_db: f64,
    pub noise_power: f64,
}

impl Default for NetworkParams {
    fn default() -> Self {
        NetworkParams {
            cells: 1,
            bs_per_cell: 1,
            users_per_cell: 1,
            tx_antennas: 1,
            rx_antennas: 1,
            cell_spacing_m: 2000.0,
            sinr_target_db: 15.0,
            center_bs_budget_db: 10.0,
            other_bs_budget_db: 5.0,
            noise_power: 0.1,
        }
    }
}

impl NetworkParams {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("cells", self.cells),
            ("bs_per_cell", self.bs_per_cell),
            ("users_per_cell", self.users_per_cell),
            ("tx_antennas", self.tx_antennas),
            ("rx_antennas", self.rx_antennas),
        ];
        for (name, c) in counts {
            if c == 0 {
                return Err(Error::InvalidParams(format!("{name} must be positive")));
            }
        }
        if !(self.cell_spacing_m > 0.0 && self.cell_spacing_m.is_finite()) {
            return Err(Error::InvalidParams("cell spacing must be positive".into()));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return Err(Error::InvalidParams("noise power must be positive".into()));
        }
        for (name, x) in [
            ("sinr_target_db", self.sinr_target_db),
            ("center_bs_budget_db", self.center_bs_budget_db),
            ("other_bs_budget_db", self.other_bs_budget_db),
        ] {
            if !x.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// Splits a per-cell total budget: half to the center base station, the
    /// other half shared equally by the remaining ones.
    pub fn with_total_budget_db(mut self, total_db: f64) -> Self {
        let total = db_to_linear(total_db);
        if self.bs_per_cell <= 1 {
            self.center_bs_budget_db = total_db;
        } else {
            self.center_bs_budget_db = linear_to_db(total / 2.0);
            self.other_bs_budget_db = linear_to_db(total / (2.0 * (self.bs_per_cell - 1) as f64));
        }
        self
    }

    /// Radius of the placement disk around each cell center.
    pub fn cell_radius_m(&self) -> f64 {
        self.cell_spacing_m / 2.0
    }
}

/// The first `count` centers of a hexagonal lattice with the given spacing,
/// ordered ring by ring outward from the origin.
pub fn hex_cell_centers(count: usize, spacing: f64) -> Vec<[f64; 2]> {
    let mut rings = 0i64;
    while (3 * rings * (rings + 1) + 1) < count as i64 {
        rings += 1;
    }
    let mut cells = Vec::new();
    for q in -rings..=rings {
        for r in -rings..=rings {
            let s = -q - r;
            let ring = q.abs().max(r.abs()).max(s.abs());
            if ring > rings {
                continue;
            }
            let x = spacing * (q as f64 + r as f64 / 2.0);
            let y = spacing * (r as f64 * 3f64.sqrt() / 2.0);
            let mut angle = y.atan2(x);
            if angle < -1e-9 {
                angle += 2.0 * std::f64::consts::PI;
            }
            cells.push((ring, angle, [x, y]));
        }
    }
    cells.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    cells.into_iter().take(count).map(|c| c.2).collect()
}

fn uniform_in_disk<R: Rng>(rng: &mut R, center: [f64; 2], radius: f64) -> [f64; 2] {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = 2.0 * std::f64::consts::PI * rng.random::<f64>();
    [center[0] + r * theta.cos(), center[1] + r * theta.sin()]
}

/// Draws a random network: one base station at every cell center, the other
/// base stations and all users uniform over the cell disk, and i.i.d.
/// Rayleigh channels with variance `(200/d)^3 * L`, where `L` is log-normal
/// shadowing with an 8 dB standard deviation.
pub fn generate_network(params: &NetworkParams, seed: u64) -> Result<NetworkInstance> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = params.cells;
    let centers = hex_cell_centers(k, params.cell_spacing_m);
    let radius = params.cell_radius_m();

    let mut bs_positions = Vec::with_capacity(k * params.bs_per_cell);
    let mut user_positions = Vec::with_capacity(k * params.users_per_cell);
    for &c in &centers {
        bs_positions.push(c);
        for _ in 1..params.bs_per_cell {
            bs_positions.push(uniform_in_disk(&mut rng, c, radius));
        }
        for _ in 0..params.users_per_cell {
            user_positions.push(uniform_in_disk(&mut rng, c, radius));
        }
    }
    let topology = Topology::with_positions(
        vec![params.bs_per_cell; k],
        vec![params.users_per_cell; k],
        params.tx_antennas,
        params.rx_antennas,
        centers,
        bs_positions,
        user_positions,
    )?;

    let shadow = Normal::new(0.0, 8.0).expect("valid std");
    let (n, m) = (params.rx_antennas, params.tx_antennas);
    let nb = topology.num_bs();
    let mut links = Vec::with_capacity(topology.num_users() * nb);
    for user in 0..topology.num_users() {
        let up = topology.user_positions()[user];
        for bs in 0..nb {
            let bp = topology.bs_positions()[bs];
            let d = ((up[0] - bp[0]).powi(2) + (up[1] - bp[1]).powi(2))
                .sqrt()
                .max(MIN_DISTANCE_M);
            let l = db_to_linear(shadow.sample(&mut rng));
            let std = ((200.0 / d).powi(3) * l / 2.0).sqrt();
            let h = CMat::from_fn(n, m, |_, _| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                C64::new(std * re, std * im)
            });
            links.push(h);
        }
    }

    let budgets = topology
        .bs_positions()
        .iter()
        .enumerate()
        .map(|(b, _)| {
            if topology.local_bs(b) == 0 {
                db_to_linear(params.center_bs_budget_db)
            } else {
                db_to_linear(params.other_bs_budget_db)
            }
        })
        .collect();
    let nu = topology.num_users();
    NetworkInstance::from_fn(
        topology,
        |user, bs| links[user * nb + bs].clone(),
        vec![params.noise_power; nu],
        vec![db_to_linear(params.sinr_target_db); nu],
        budgets,
    )
}
