//! Shared fixtures, reference minimizers and invariant checks for the
//! integration, property and acceptance tests.
#![allow(dead_code)]

use hetnet_core::admm::{gather_bs, w_block_update, Admm, AdmmConfig, AdmmState};
use hetnet_core::experiment::{run_experiment, write_csv, Baseline, ExperimentSpec, Mode};
use hetnet_core::net_model::{mse, rate, sinr, BeamformerSet, CMat, CVec, C64};
use hetnet_core::oracle::{
    feasible_with_set, min_active_set, min_dominating_set, min_power_with_set, min_vertex_cover,
    vertex_cover_instance, Graph, PowerControlInstance,
};
use hetnet_core::swmmse::{
    alpha_kkt, alpha_problem, cell_quadratic, init_vbar, mmse_receiver, penalized_objective,
    sparse_sum_rate, swmmse_solve, update_alpha, update_u, update_vbar, update_vbar_clustered,
    update_weights, wmmse_on_support, BlockProblem, SwmmseConfig, SwmmseState,
};
use hetnet_core::{generate_network, Execution, NetworkInstance, NetworkParams};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Check = std::result::Result<(), String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cgauss<R: Rng>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) / 2f64.sqrt()
}

pub fn cvec<R: Rng>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| cgauss(rng))
}

pub fn cmat<R: Rng>(rng: &mut R, r: usize, c: usize) -> CMat {
    CMat::from_fn(r, c, |_, _| cgauss(rng))
}

pub fn random_beamformers<R: Rng>(net: &NetworkInstance, rng: &mut R) -> BeamformerSet {
    let t = net.topology();
    BeamformerSet::from_users(
        (0..t.num_users())
            .map(|u| cvec(rng, t.stack_len(t.cell_of_user(u))))
            .collect(),
    )
}

/// Instance of the scaled convergence experiments.
pub fn desk_params() -> NetworkParams {
    NetworkParams {
        cells: 3,
        bs_per_cell: 8,
        users_per_cell: 5,
        tx_antennas: 3,
        rx_antennas: 1,
        sinr_target_db: 15.0,
        noise_power: 0.1,
        ..NetworkParams::default()
    }
}

/// Instance of the sum-rate experiments: unit noise, 10 dB per cell.
pub fn sumrate_params() -> NetworkParams {
    NetworkParams {
        cells: 2,
        bs_per_cell: 4,
        users_per_cell: 4,
        tx_antennas: 4,
        rx_antennas: 2,
        noise_power: 1.0,
        ..NetworkParams::default()
    }
    .with_total_budget_db(10.0)
}

pub fn small_params(seed: u64, rx: usize) -> NetworkParams {
    let mut r = rng(seed ^ 0xA5A5);
    NetworkParams {
        cells: r.random_range(1..=2),
        bs_per_cell: r.random_range(1..=3),
        users_per_cell: r.random_range(1..=3),
        tx_antennas: r.random_range(1..=3),
        rx_antennas: rx,
        sinr_target_db: 0.0,
        noise_power: 0.1,
        cell_spacing_m: 600.0,
        ..NetworkParams::default()
    }
}

pub fn small_net(seed: u64, rx: usize) -> NetworkInstance {
    generate_network(&small_params(seed, rx), seed).expect("valid params")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// Reference minimizers

/// Golden-section minimizer of a unimodal `f` on `[lo, hi]`.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..400 {
        if hi - lo <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    let mid = 0.5 * (lo + hi);
    [lo, mid, hi]
        .into_iter()
        .min_by(|x, y| f(*x).total_cmp(&f(*y)))
        .unwrap()
}

/// Projection of the row target `y` (with `y[user]` the direct term) and
/// the noise target `k` onto `{Re y_u >= c ||(k, y_{-u})||, Im y_u = 0}`,
/// found by a one-dimensional search over the tail scaling.
pub fn reference_cone_projection(y: &[C64], user: usize, k: f64, c: f64) -> (Vec<C64>, f64) {
    let t0 = y[user].re;
    let tail = (k * k + y.iter().enumerate().filter(|&(j, _)| j != user).map(|(_, z)| z.norm_sqr()).sum::<f64>()).sqrt();
    let cost = |s: f64| {
        let t = t0.max(c * s * tail);
        (t - t0).powi(2) + (s - 1.0).powi(2) * tail * tail
    };
    let s = golden_min(cost, 0.0, 1.0);
    let t = t0.max(c * s * tail);
    let row = y
        .iter()
        .enumerate()
        .map(|(j, z)| if j == user { C64::from(t) } else { z * s })
        .collect();
    (row, k * s)
}

/// Minimizer of `beta ||w|| + rho/2 ||w - b||^2` on `||w||^2 <= p` by a
/// search over the norm along `b`.
pub fn reference_w(b: &CVec, rho: f64, beta: f64, p: f64) -> CVec {
    let nb = b.norm();
    if nb == 0.0 {
        return b.clone();
    }
    let s = golden_min(|s| beta * s + 0.5 * rho * (s - nb).powi(2), 0.0, p.sqrt());
    b * C64::from(s / nb)
}

fn prox_group(x: &[CVec], thr: f64) -> Vec<CVec> {
    x.iter()
        .map(|xi| {
            let n = xi.norm();
            if n <= thr {
                CVec::zeros(xi.len())
            } else {
                xi * C64::from(1.0 - thr / n)
            }
        })
        .collect()
}

/// Accelerated proximal gradient on the block problem with the power
/// constraint dualized at `delta`.
fn fista_block(p: &BlockProblem, delta: f64, lmax: f64) -> Vec<CVec> {
    let q = &p.c + CMat::identity(p.c.nrows(), p.c.nrows()) * C64::from(p.reg + delta);
    let step = 1.0 / (2.0 * (lmax + p.reg + delta));
    let mut x: Vec<CVec> = p.r.iter().map(|r| CVec::zeros(r.len())).collect();
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..20_000 {
        let grad: Vec<CVec> = y
            .iter()
            .zip(&p.r)
            .map(|(yi, ri)| (&q * yi - ri) * C64::from(2.0))
            .collect();
        let moved: Vec<CVec> = y.iter().zip(&grad).map(|(yi, g)| yi - g * C64::from(step)).collect();
        let xn = prox_group(&moved, step * p.lambda);
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let change: f64 = xn.iter().zip(&x).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
        y = xn
            .iter()
            .zip(&x)
            .map(|(a, b)| a + (a - b) * C64::from((t - 1.0) / tn))
            .collect();
        x = xn;
        t = tn;
        if change < 1e-14 {
            break;
        }
    }
    x
}

/// Reference solution of a block problem: proximal gradient for a fixed
/// multiplier, bisection on the multiplier.
pub fn reference_block(p: &BlockProblem) -> Vec<CVec> {
    let lmax = p.c.clone().symmetric_eigen().eigenvalues.max().max(0.0);
    let power = |x: &[CVec]| x.iter().map(|v| v.norm_squared()).sum::<f64>();
    let x0 = fista_block(p, 0.0, lmax);
    if power(&x0) <= p.budget {
        return x0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while power(&fista_block(p, hi, lmax)) > p.budget {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if power(&fista_block(p, mid, lmax)) > p.budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    fista_block(p, hi, lmax)
}

pub fn random_block_problem(seed: u64) -> BlockProblem {
    let mut r = rng(seed);
    let m = r.random_range(1..=4);
    let users = r.random_range(1..=3);
    let a = cmat(&mut r, m, m);
    let c = a.adjoint() * &a + CMat::identity(m, m) * C64::from(0.05);
    let rs: Vec<CVec> = (0..users).map(|_| cvec(&mut r, m) * C64::from(2.0)).collect();
    BlockProblem {
        c,
        r: rs,
        budget: r.random_range(0.05..5.0),
        reg: 1e-8,
        lambda: if r.random_bool(0.5) { r.random_range(0.0..2.0) } else { 0.0 },
    }
}

/// `a x^2 - 2 c x + mu |x|` on `[-1, 1]`.
pub fn alpha_objective(a: f64, c: f64, mu: f64, x: f64) -> f64 {
    a * x * x - 2.0 * c * x + mu * x.abs()
}

pub fn reference_alpha(a: f64, c: f64, mu: f64) -> f64 {
    golden_min(|x| alpha_objective(a, c, mu, x), -1.0, 1.0)
}

/// A solver bound to a random small network plus a randomized state.
pub fn random_admm_state(net: &NetworkInstance, seed: u64) -> (AdmmConfig, AdmmState) {
    let mut r = rng(seed);
    let t = net.topology();
    let nu = t.num_users();
    let cfg = AdmmConfig {
        rho: r.random_range(0.5..10.0),
        beta: (0..t.num_bs()).map(|_| r.random_range(0.0..1.0)).collect(),
        theta: Some(r.random_range(0.1..2.0)),
        execution: Execution::Sequential,
        ..AdmmConfig::default()
    };
    let admm = Admm::new(net, &cfg).expect("valid config");
    let mut st = admm.initial_state(Some(&random_beamformers(net, &mut r))).unwrap();
    st.hv = cmat(&mut r, nu, nu);
    st.mu = cmat(&mut r, nu, nu);
    st.lambda = random_beamformers(net, &mut r);
    st.delta = (0..nu).map(|_| r.sample(StandardNormal)).collect();
    (cfg, st)
}

// ---------------------------------------------------------------------------
// Closed-form update checks (max deviation from the reference)

pub fn kkappa_deviation(seed: u64) -> f64 {
    let net = small_net(seed, 1);
    let (cfg, st) = random_admm_state(&net, seed);
    let admm = Admm::new(&net, &cfg).unwrap();
    let rho = cfg.rho;
    let nu = net.topology().num_users();
    let mut worst: f64 = 0.0;
    for u in 0..nu {
        let (row, kappa) = admm.update_k_kappa(&st, u).unwrap();
        let y: Vec<C64> = (0..nu).map(|j| st.hv[(u, j)] - st.mu[(u, j)] / rho).collect();
        let k = st.kappa_hat[u] - st.delta[u] / rho;
        let (rrow, rk) = reference_cone_projection(&y, u, k, net.sinr_target(u).sqrt());
        for (a, b) in row.iter().zip(&rrow) {
            worst = worst.max((a - b).norm());
        }
        worst = worst.max((kappa - rk).abs());
    }
    worst
}

pub fn w_deviation(seed: u64) -> f64 {
    let net = small_net(seed, 1);
    let (cfg, st) = random_admm_state(&net, seed);
    let admm = Admm::new(&net, &cfg).unwrap();
    let mut worst: f64 = 0.0;
    for bs in 0..net.topology().num_bs() {
        let b = gather_bs(&net, &st.v, bs) - gather_bs(&net, &st.lambda, bs) / C64::from(cfg.rho);
        let reference = reference_w(&b, cfg.rho, cfg.beta[bs], net.power_budget(bs));
        worst = worst.max((admm.update_w(&st, bs) - &reference).norm());
        worst = worst.max((w_block_update(&b, cfg.rho, cfg.beta[bs], net.power_budget(bs)) - reference).norm());
    }
    worst
}

pub fn block_deviation(seed: u64) -> f64 {
    let p = random_block_problem(seed);
    let x = p.solve(1e-13).x;
    let reference = reference_block(&p);
    x.iter().zip(&reference).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

pub fn alpha_deviation(seed: u64) -> f64 {
    let mut r = rng(seed);
    let a = if r.random_bool(0.1) { 0.0 } else { r.random_range(0.05..5.0) };
    let c = r.random_range(-3.0..3.0);
    let mu = r.random_range(0.0..3.0);
    let (x, _) = hetnet_core::swmmse::alpha_coordinate(a, c, mu);
    let reference = reference_alpha(a, c, mu);
    if a == 0.0 {
        // Flat curvature: compare values (the minimizer may be an interval).
        (alpha_objective(a, c, mu, x) - alpha_objective(a, c, mu, reference)).abs()
    } else {
        (x - reference).abs()
    }
}

// ---------------------------------------------------------------------------
// Invariants: net-model

pub fn check_rate_log1p_sinr(seed: u64) -> Check {
    let net = small_net(seed, 1);
    let v = random_beamformers(&net, &mut rng(seed));
    for u in 0..net.topology().num_users() {
        let (r, s) = (rate(&net, &v, u).unwrap(), sinr(&net, &v, u).unwrap());
        ensure(rel(r, s.ln_1p()) <= 1e-12, || format!("user {u}: rate {r} vs ln(1+sinr) {}", s.ln_1p()))?;
    }
    Ok(())
}

pub fn check_sinr_phase_invariance(seed: u64, phase: f64) -> Check {
    let net = small_net(seed, 1);
    let v = random_beamformers(&net, &mut rng(seed));
    for u in 0..net.topology().num_users() {
        let mut rotated = v.clone();
        *rotated.user_mut(u) *= C64::from_polar(1.0, phase);
        for j in 0..net.topology().num_users() {
            let (a, b) = (sinr(&net, &v, j).unwrap(), sinr(&net, &rotated, j).unwrap());
            ensure(rel(a, b) <= 1e-10, || format!("rotating user {u} moved sinr of {j}: {a} -> {b}"))?;
        }
    }
    Ok(())
}

pub fn check_generator_reproducible(seed: u64) -> Check {
    let p = small_params(seed, 2);
    let a = generate_network(&p, seed).unwrap().to_json().unwrap();
    let b = generate_network(&p, seed).unwrap().to_json().unwrap();
    ensure(a == b, || "same seed gave different instances".into())?;
    let back = NetworkInstance::from_json(&a).unwrap().to_json().unwrap();
    ensure(a == back, || "JSON round trip changed the instance".into())
}

pub fn check_rate_mse_identity(seed: u64) -> Check {
    let net = small_net(seed, 2);
    let v = random_beamformers(&net, &mut rng(seed));
    for u in 0..net.topology().num_users() {
        let f = mmse_receiver(&net, &v, u);
        let e = mse(&net, &v, &f, u).unwrap();
        let r = rate(&net, &v, u).unwrap();
        ensure((-e.ln() - r).abs() <= 1e-9 * r.max(1.0), || format!("user {u}: -ln mse {} vs rate {r}", -e.ln()))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Invariants: ADMM

fn feasible_net(seed: u64) -> NetworkInstance {
    let net = small_net(seed, 1);
    let t = net.topology();
    net.with_sinr_targets(vec![1.0; t.num_users()]).unwrap()
}

pub fn check_block_a_feasibility(seed: u64) -> Check {
    let net = feasible_net(seed);
    let cfg = AdmmConfig {
        beta: vec![0.2; net.topology().num_bs()],
        execution: Execution::Sequential,
        ..AdmmConfig::default()
    };
    let admm = Admm::new(&net, &cfg).unwrap();
    let mut st = admm.initial_state(None).unwrap();
    let t = net.topology();
    for it in 0..60 {
        admm.iterate(&mut st).map_err(|e| e.to_string())?;
        for i in 0..t.num_users() {
            let c = net.sinr_target(i).sqrt();
            let tail = (st.kappa[i].powi(2)
                + (0..t.num_users()).filter(|&j| j != i).map(|j| st.k[(i, j)].norm_sqr()).sum::<f64>())
            .sqrt();
            ensure(st.k[(i, i)].im == 0.0, || format!("iter {it}: Im K_ii = {}", st.k[(i, i)].im))?;
            ensure(st.k[(i, i)].re >= c * tail * (1.0 - 1e-12) - 1e-15, || {
                format!("iter {it} user {i}: cone violated ({} < {})", st.k[(i, i)].re, c * tail)
            })?;
        }
        for q in 0..t.num_bs() {
            let p = st.w.bs_power(t, q);
            ensure(p <= net.power_budget(q) * (1.0 + 1e-12), || format!("iter {it} bs {q}: power {p}"))?;
        }
    }
    Ok(())
}

pub fn check_al_monotone(seed: u64) -> Check {
    let net = small_net(seed, 1);
    let (cfg, _) = random_admm_state(&net, seed);
    let admm = Admm::new(&net, &cfg).unwrap();
    let mut st = admm.initial_state(None).unwrap();
    // The cold start is outside the cone; block A's minimum is taken over
    // the feasible set, so monotonicity starts from its first output.
    admm.block_a(&mut st).map_err(|e| e.to_string())?;
    for it in 0..60 {
        let l0 = admm.augmented_lagrangian(&st);
        admm.block_b(&mut st);
        let l1 = admm.augmented_lagrangian(&st);
        admm.update_duals(&mut st);
        let l2 = admm.augmented_lagrangian(&st);
        admm.block_a(&mut st).map_err(|e| e.to_string())?;
        let l3 = admm.augmented_lagrangian(&st);
        let tol = 1e-9 * l0.abs().max(l2.abs()).max(1.0);
        ensure(l1 <= l0 + tol, || format!("iter {it}: block B raised L {l0} -> {l1}"))?;
        ensure(l3 <= l2 + tol, || format!("iter {it}: block A raised L {l2} -> {l3}"))?;
    }
    Ok(())
}

/// Converged runs leave small residuals, meet every SINR target within
/// 1e-3 relative slack and every budget exactly. Runs that do not converge
/// are skipped.
pub fn check_termination(seed: u64, eps_tol: f64) -> Check {
    let net = feasible_net(seed);
    let cfg = AdmmConfig {
        eps_tol,
        max_iters: 20_000,
        infeasible_iter_cap: 20_000,
        execution: Execution::Sequential,
        ..AdmmConfig::power_min()
    };
    let Ok(rep) = hetnet_core::admm_solve(&net, &cfg, None) else {
        return Ok(());
    };
    let t = net.topology();
    let res = rep.final_residual().unwrap();
    ensure(res < cfg.eps_tol, || format!("terminal residual {res}"))?;
    for u in 0..t.num_users() {
        let s = sinr(&net, &rep.beamformers, u).unwrap();
        ensure(s >= net.sinr_target(u) * (1.0 - 1e-3), || format!("user {u}: sinr {s} below {}", net.sinr_target(u)))?;
    }
    for q in 0..t.num_bs() {
        let p = rep.beamformers.bs_power(t, q);
        ensure(p <= net.power_budget(q) * (1.0 + 1e-12), || format!("bs {q}: power {p} over budget"))?;
    }
    Ok(())
}

pub fn random_power_control(seed: u64) -> PowerControlInstance {
    let mut r = rng(seed);
    let n = r.random_range(1..=4);
    let q = r.random_range(1..=4);
    PowerControlInstance {
        gains: DMatrix::from_fn(n, q, |_, _| if r.random_bool(0.25) { 0.0 } else { r.random_range(0.0..2.0) }),
        targets: (0..n).map(|_| r.random_range(0.05..1.5)).collect(),
        noise: (0..n).map(|_| r.random_range(0.1..1.0)).collect(),
        budgets: (0..q).map(|_| r.random_range(0.5..4.0)).collect(),
    }
}

fn mask(bits: u32, n: usize) -> Vec<bool> {
    (0..n).map(|b| bits >> b & 1 == 1).collect()
}

/// With the power weight below `1 / sum P`, the integer part of the exact
/// regularized l0 optimum is the minimum number of active BSs.
pub fn check_l0_floor(seed: u64) -> Check {
    let inst = random_power_control(seed);
    let nq = inst.num_bs();
    let theta = 1.0 / (inst.budgets.iter().sum::<f64>() + 1.0);
    let mut best = f64::INFINITY;
    for bits in 0..(1u32 << nq) {
        if let Some(p) = min_power_with_set(&inst, &mask(bits, nq)).unwrap() {
            best = best.min(bits.count_ones() as f64 + theta * p);
        }
    }
    let brute = min_active_set(&inst, Execution::Sequential).unwrap();
    match brute {
        None => ensure(best.is_infinite(), || "oracle infeasible but some set works".into()),
        Some((k, _)) => ensure(best.floor() as usize == k, || format!("floor {best} vs min active {k}")),
    }
}

// ---------------------------------------------------------------------------
// Invariants: S-WMMSE

fn swmmse_case(seed: u64) -> (NetworkInstance, SwmmseConfig) {
    let p = NetworkParams {
        noise_power: 1.0,
        ..small_params(seed, 2)
    };
    let net = generate_network(&p, seed).unwrap();
    let mut r = rng(seed);
    let cfg = SwmmseConfig {
        execution: Execution::Sequential,
        max_outer_iters: 40,
        ..SwmmseConfig::uniform(&net, r.random_range(0.0..1.5), r.random_range(0.0..0.5))
    };
    (net, cfg)
}

pub fn check_swmmse_monotone(seed: u64) -> Check {
    let (net, cfg) = swmmse_case(seed);
    let run = swmmse_solve(&net, &cfg, None).map_err(|e| e.to_string())?;
    for (k, pair) in run.report.block_objectives.windows(2).enumerate() {
        ensure(pair[1] <= pair[0] + 1e-9 * pair[0].abs().max(1.0), || {
            format!("block update {k}: objective {} -> {}", pair[0], pair[1])
        })?;
    }
    Ok(())
}

/// Runs the block cycle by hand, checking feasibility after every block and
/// the rate-MSE identity after every weight update.
pub fn check_swmmse_feasibility_and_identity(seed: u64) -> Check {
    let (net, cfg) = swmmse_case(seed);
    let t = net.topology();
    let m = t.tx_antennas();
    let mut st = SwmmseState::new(&net, init_vbar(&net)).unwrap();
    let feasible = |st: &SwmmseState, stage: &str| -> Check {
        for (q, a) in st.alpha.iter().enumerate() {
            ensure(a * a <= 1.0, || format!("{stage}: alpha_{q} = {a}"))?;
        }
        for q in 0..t.num_bs() {
            let local = t.local_bs(q);
            let p: f64 = t.user_range(t.cell_of_bs(q)).map(|u| st.vbar.block(m, u, local).norm_squared()).sum();
            ensure(p <= net.power_budget(q) * (1.0 + 1e-9), || format!("{stage}: bs {q} power {p}"))?;
        }
        Ok(())
    };
    for it in 0..15 {
        st.u = update_u(&net, &st, Execution::Sequential);
        st.w = update_weights(&net, &st, Execution::Sequential);
        let v = st.effective(&net);
        let logw: f64 = st.w.iter().map(|w| w.ln()).sum();
        let rates: f64 = (0..t.num_users()).map(|u| rate(&net, &v, u).unwrap()).sum();
        ensure((logw - rates).abs() <= 1e-8 * rates.max(1.0), || format!("iter {it}: sum ln w {logw} vs sum rate {rates}"))?;
        for cell in 0..t.num_cells() {
            let (vb, _) = if cfg.lambda_at(cell) > 0.0 {
                update_vbar_clustered(&net, &cfg, &st, cell)
            } else {
                update_vbar(&net, &cfg, &st, cell)
            };
            for (i, v) in t.user_range(cell).zip(vb) {
                *st.vbar.user_mut(i) = v;
            }
        }
        feasible(&st, "vbar")?;
        for cell in 0..t.num_cells() {
            let (a, _) = update_alpha(&net, &cfg, &st, cell);
            for (q, x) in t.bs_range(cell).zip(a) {
                st.alpha[q] = x;
            }
        }
        feasible(&st, "alpha")?;
    }
    Ok(())
}

pub fn check_alpha_kkt(seed: u64) -> Check {
    let (net, cfg) = swmmse_case(seed);
    let t = net.topology();
    let mut st = SwmmseState::new(&net, init_vbar(&net)).unwrap();
    let mut r = rng(seed);
    st.alpha = (0..t.num_bs()).map(|_| r.random_range(-1.0..1.0)).collect();
    st.u = update_u(&net, &st, Execution::Sequential);
    st.w = update_weights(&net, &st, Execution::Sequential);
    for cell in 0..t.num_cells() {
        let (a, _) = update_alpha(&net, &cfg, &st, cell);
        let quad = cell_quadratic(&net, &st, cell);
        let (am, b) = alpha_problem(&net, &st, cell, &quad);
        let mu: Vec<f64> = t.bs_range(cell).map(|q| cfg.mu_at(q)).collect();
        let kkt = alpha_kkt(&am, &b, &mu, &a);
        ensure(kkt.stationarity <= 1e-7 && kkt.dual_feasibility <= 1e-7, || format!("cell {cell}: {kkt:?}"))?;
        ensure(kkt.complementarity <= 1e-7, || format!("cell {cell}: {kkt:?}"))?;
    }
    Ok(())
}

/// Switching off any single active BS and re-solving on the smaller support
/// does not improve `-sum rate + mu |S|` by more than 5%.
pub fn check_support_property(seed: u64) -> Check {
    let p = NetworkParams {
        cells: 1,
        bs_per_cell: 3,
        users_per_cell: 2,
        tx_antennas: 2,
        rx_antennas: 2,
        noise_power: 1.0,
        ..NetworkParams::default()
    }
    .with_total_budget_db(10.0);
    let net = generate_network(&p, seed).unwrap();
    let mu = 0.3;
    let cfg = SwmmseConfig {
        execution: Execution::Sequential,
        ..SwmmseConfig::uniform(&net, mu, 0.0)
    };
    let out = sparse_sum_rate(&net, &cfg).map_err(|e| e.to_string())?;
    let nb = net.topology().num_bs();
    let support: Vec<bool> = (0..nb).map(|q| out.debiased.report.active_set.contains(&q)).collect();
    let count = support.iter().filter(|&&s| s).count();
    let value = -out.debiased.report.sum_rate + mu * count as f64;
    for q in (0..nb).filter(|&q| support[q]) {
        let mut smaller = support.clone();
        smaller[q] = false;
        if !smaller.iter().any(|&s| s) {
            continue;
        }
        let r = wmmse_on_support(&net, &cfg, &smaller).map_err(|e| e.to_string())?;
        let reduced = -r.report.sum_rate + mu * (count - 1) as f64;
        ensure(reduced >= value - 0.05 * value.abs(), || {
            format!("dropping bs {q}: penalized {value:.4} -> {reduced:.4}")
        })?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Invariants: oracle

pub fn random_graph(seed: u64, max_n: usize) -> Graph {
    let mut r = rng(seed);
    let n = r.random_range(1..=max_n);
    let density = r.random_range(0.1..0.9);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if r.random_bool(density) {
                edges.push((a, b));
            }
        }
    }
    Graph::new(n, &edges).unwrap()
}

/// Every graph on `n` labeled vertices.
pub fn all_graphs(n: usize) -> Vec<Graph> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    (0u32..(1 << pairs.len()))
        .map(|bits| {
            let e: Vec<_> = pairs.iter().enumerate().filter(|(k, _)| bits >> k & 1 == 1).map(|(_, p)| *p).collect();
            Graph::new(n, &e).unwrap()
        })
        .collect()
}

/// Minimum active set of the gadget vs (vertex cover, dominating set).
pub fn gadget_sizes(g: &Graph) -> (usize, usize, usize) {
    let inst = vertex_cover_instance(g);
    let (active, _) = min_active_set(&inst, Execution::Sequential).unwrap().expect("all-on is feasible");
    (active, min_vertex_cover(g).unwrap(), min_dominating_set(g).unwrap())
}

pub fn check_gadget_vertex_cover(seed: u64) -> Check {
    let g = random_graph(seed, 8);
    let (active, cover, _) = gadget_sizes(&g);
    ensure(active == cover, || format!("{} vertices, {} edges: active set {active}, vertex cover {cover}", g.num_vertices(), g.edges().len()))
}

pub fn check_gadget_dominating_set(seed: u64) -> Check {
    let g = random_graph(seed, 8);
    let (active, _, dom) = gadget_sizes(&g);
    ensure(active == dom, || format!("active set {active}, dominating set {dom}"))
}

pub fn check_feasibility_monotone(seed: u64) -> Check {
    let inst = random_power_control(seed);
    let nq = inst.num_bs();
    let feas: Vec<bool> = (0..(1u32 << nq)).map(|b| feasible_with_set(&inst, &mask(b, nq)).unwrap()).collect();
    for bits in 0..(1u32 << nq) {
        for q in 0..nq {
            let sup = bits | (1 << q);
            ensure(!feas[bits as usize] || feas[sup as usize], || format!("set {bits:b} feasible but superset {sup:b} not"))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Invariants: experiments

fn tiny_spec(seed: u64, mode: Mode) -> ExperimentSpec {
    ExperimentSpec {
        mode,
        cells: 1,
        bs_per_cell: 3,
        users: 2,
        antennas_tx: 2,
        antennas_rx: if mode.is_power() { 1 } else { 2 },
        tau_db: 3.0,
        snr_db: if mode.is_power() { 10.0 } else { 0.0 },
        ptot_db: if mode.is_power() { None } else { Some(10.0) },
        seed,
        realizations: 2,
        baselines: vec![Baseline::AllOn, Baseline::Random50],
        execution: Execution::Sequential,
        deterministic: true,
        ..ExperimentSpec::default()
    }
}

pub fn check_experiment_bytes(seed: u64) -> Check {
    for mode in [Mode::Selection, Mode::Sumrate] {
        let spec = tiny_spec(seed, mode);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_csv(&run_experiment(&spec).map_err(|e| e.to_string())?, &mut a).unwrap();
        write_csv(&run_experiment(&spec).map_err(|e| e.to_string())?, &mut b).unwrap();
        ensure(a == b, || format!("{} output differs between runs", mode.as_str()))?;
    }
    Ok(())
}

pub fn check_all_on_lower_bound(seed: u64) -> Check {
    // The bound holds between optima; at the default tolerance a run can stop
    // several percent short of its optimum on low-power instances.
    let spec = ExperimentSpec {
        eps_tol: 1e-8,
        max_iters: 50_000,
        ..tiny_spec(seed, Mode::Selection)
    };
    let rows = run_experiment(&spec).map_err(|e| e.to_string())?;
    for r in 0..2 {
        let of = |mode: &str| rows.iter().find(|x| x.realization == r && x.mode == mode).and_then(|x| x.total_power_w);
        if let (Some(all), Some(sel)) = (of("all-on"), of("selection")) {
            ensure(all <= sel * (1.0 + 1e-3), || format!("realization {r}: all-on {all} > selection {sel}"))?;
        }
    }
    Ok(())
}

/// The penalized objective after the last block is what the solver reports.
pub fn final_objective_matches(net: &NetworkInstance, cfg: &SwmmseConfig) -> bool {
    let run = swmmse_solve(net, cfg, None).unwrap();
    let f = penalized_objective(net, cfg, &run.state);
    run.report.block_objectives.last().map_or(true, |&l| (l - f).abs() <= 1e-12 * f.abs().max(1.0))
}

/// Solver reports and result tables survive their text formats.
pub fn check_serialization_roundtrip(seed: u64) -> Check {
    let net = feasible_net(seed);
    let cfg = AdmmConfig {
        execution: Execution::Sequential,
        ..AdmmConfig::power_min()
    };
    if let Ok(rep) = hetnet_core::admm_solve(&net, &cfg, None) {
        let text = rep.to_json().unwrap();
        let back = hetnet_core::SolveReport::from_json(&text).map_err(|e| e.to_string())?;
        ensure(back.to_json().unwrap() == text, || "report JSON round trip changed the report".into())?;
    }
    let rows = run_experiment(&tiny_spec(seed, Mode::PowerMin)).map_err(|e| e.to_string())?;
    let mut csv = Vec::new();
    write_csv(&rows, &mut csv).unwrap();
    let back = hetnet_core::experiment::read_csv(csv.as_slice()).map_err(|e| e.to_string())?;
    ensure(back == rows, || "CSV round trip changed the rows".into())
}
