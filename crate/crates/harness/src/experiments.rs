//! Experiment runners. Every runner fans seeds out in parallel and collects
//! rows in seed order, so output depends on the configuration alone.
//!
//! Rates in the CSV files are in bits per channel use and powers in dB over
//! unit noise; the solvers work in nats and linear power.

use std::f64::consts::{FRAC_PI_2, LN_2};
use std::path::Path;

use bmac_core::distsim::{information_audit, run_prd, PrdInit, PrdOptions};
use bmac_core::itree::itree_order;
use bmac_core::netmodel::{Coupling, NetworkSpec};
use bmac_core::ordering::{
    algorithm_o, exhaustive_orders, meb_order, order_to_coupling, OrderOptions, OrderSolver, OrderSpec,
};
use bmac_core::pwf_solvers::{algorithm_pr, algorithm_pr1, Pr1Init, PwfOptions};
use bmac_core::sinr_algs::{algorithm_a, algorithm_b, IterRecord, SolverOptions, SolverResult};
use bmac_core::Error as CoreError;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentKind, OrderChoice, SolverKind};
use crate::output::{db, num, Table};
use crate::{HarnessError, Result};

/// One CSV file produced by an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub csv: String,
}

/// Runs the experiment described by `cfg`; relative paths in the network
/// section resolve against `base_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, base_dir: &Path) -> Result<Vec<Artifact>> {
    cfg.validate()?;
    let tables = match cfg.kind {
        ExperimentKind::RegionSweep => vec![(cfg.output_name(), region_sweep(cfg, base_dir)?)],
        ExperimentKind::ConvergenceTrace => vec![(cfg.output_name(), convergence_trace(cfg, base_dir)?)],
        ExperimentKind::PowerVsRate => {
            let (mean, per_seed) = power_vs_rate(cfg, base_dir)?;
            let detail = cfg.output_name().trim_end_matches(".csv").to_string() + "_seeds.csv";
            vec![(cfg.output_name(), mean), (detail, per_seed)]
        }
        ExperimentKind::PrdRounds => vec![(cfg.output_name(), prd_rounds(cfg, base_dir)?)],
        ExperimentKind::OrderCompare => vec![(cfg.output_name(), order_compare(cfg, base_dir)?)],
    };
    tables
        .into_iter()
        .map(|(name, t)| Ok(Artifact { name, csv: t.render(cfg)? }))
        .collect()
}

fn per_seed<T: Send>(cfg: &ExperimentConfig, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<(u64, T)>> {
    cfg.seeds
        .expand()
        .into_par_iter()
        .map(|s| f(s).map(|t| (s, t)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

fn flat(rows: Vec<(u64, Vec<Vec<String>>)>) -> Vec<Vec<String>> {
    rows.into_iter().flat_map(|(_, r)| r).collect()
}

/// Network and coupling of one seed.
pub fn network(cfg: &ExperimentConfig, seed: u64, base_dir: &Path) -> Result<(NetworkSpec, Coupling)> {
    let (net, phi, _) = cfg.network.build(Some(seed), base_dir)?;
    Ok((net, phi))
}

fn bits_to_nats(bits: &[f64]) -> Vec<f64> {
    bits.iter().map(|b| b * LN_2).collect()
}

fn total_power(cfg: &ExperimentConfig) -> f64 {
    10f64.powf(cfg.total_power_db / 10.0)
}

fn solver_options(cfg: &ExperimentConfig) -> SolverOptions {
    SolverOptions::default().with_tol(cfg.tol).with_max_iter(cfg.max_iter)
}

fn pwf_options(cfg: &ExperimentConfig) -> PwfOptions {
    PwfOptions::default().with_tol(cfg.tol).with_max_iter(cfg.max_iter)
}

/// Runs a sum-power (or, for A, max-min) solver on one coupling. PR runs on
/// the iTree relabeling of the network.
pub fn solve(
    kind: SolverKind,
    net: &NetworkSpec,
    phi: &Coupling,
    targets: &[f64],
    cfg: &ExperimentConfig,
) -> Result<SolverResult> {
    let r = match kind {
        SolverKind::A => algorithm_a(net, phi, targets, total_power(cfg), &solver_options(cfg)),
        SolverKind::B => algorithm_b(net, phi, targets, &solver_options(cfg)),
        SolverKind::Pr1 => algorithm_pr1(net, phi, targets, &Pr1Init::default(), &pwf_options(cfg)).map(|r| r.result),
        SolverKind::Pr => {
            let perm = itree_order(phi)
                .ok_or_else(|| HarnessError::Config("solver pr needs an acyclic interference graph".into()))?;
            let t: Vec<f64> = perm.iter().map(|&p| targets[p]).collect();
            algorithm_pr(&net.permute(&perm), &phi.permute(&perm), &t, None, &pwf_options(cfg))
        }
    };
    Ok(r?)
}

fn order_solver(kind: SolverKind, cfg: &ExperimentConfig) -> Result<OrderSolver> {
    match kind {
        SolverKind::A => Ok(OrderSolver::A { total_power: total_power(cfg) }),
        SolverKind::B => Ok(OrderSolver::B),
        SolverKind::Pr1 => Ok(OrderSolver::Pr1),
        SolverKind::Pr => Err(HarnessError::Config("order search supports solvers a, b and pr1".into())),
    }
}

/// Couplings selected by a fixed order choice, with labels.
pub fn fixed_orders(choice: OrderChoice, net: &NetworkSpec, phi: &Coupling) -> Result<Vec<(String, Coupling)>> {
    Ok(match choice {
        OrderChoice::Config => vec![("config".into(), phi.clone())],
        OrderChoice::Meb => vec![("meb".into(), order_to_coupling(net, &meb_order(net))?)],
        OrderChoice::All => exhaustive_orders(net)
            .iter()
            .map(|o| Ok((o.label(), order_to_coupling(net, o)?)))
            .collect::<Result<_>>()?,
        OrderChoice::O => return Err(HarnessError::Config("order o is not a fixed order".into())),
    })
}

fn min_scaled(rates: &[f64], targets: &[f64]) -> f64 {
    rates
        .iter()
        .zip(targets)
        .filter(|(_, t)| **t > 0.0)
        .map(|(r, t)| r / t)
        .fold(f64::INFINITY, f64::min)
}

/// Largest `s` with `s · direction` inside the region of one coupling, by
/// bisection on the balanced scale `C` of Algorithm A (`C ≥ 1` iff inside).
pub fn ray_boundary(net: &NetworkSpec, phi: &Coupling, direction: &[f64], cfg: &ExperimentConfig) -> Result<f64> {
    let inside = |s: f64| -> Result<bool> {
        let t: Vec<f64> = direction.iter().map(|d| d * s).collect();
        Ok(solve(SolverKind::A, net, phi, &t, cfg)?.objective >= 1.0)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut doublings = 0;
    while inside(hi)? {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(HarnessError::Config("region is unbounded along a ray".into()));
        }
    }
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if inside(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `rays` directions spanning the positive quadrant, both axes included.
/// The axis directions are exact so that one target is exactly zero there.
pub fn ray_directions(rays: usize) -> Vec<(f64, [f64; 2])> {
    (0..rays)
        .map(|i| {
            if i == 0 {
                return (0.0, [1.0, 0.0]);
            }
            if i + 1 == rays {
                return (FRAC_PI_2, [0.0, 1.0]);
            }
            let theta = i as f64 / (rays - 1) as f64 * FRAC_PI_2;
            (theta, [theta.cos(), theta.sin()])
        })
        .collect()
}

fn region_sweep(cfg: &ExperimentConfig, base_dir: &Path) -> Result<Table> {
    let rows = per_seed(cfg, |seed| {
        let (net, phi) = network(cfg, seed, base_dir)?;
        let mut rows = Vec::new();
        for &choice in &cfg.orders {
            for (label, phi) in fixed_orders(choice, &net, &phi)? {
                for (i, (theta, dir)) in ray_directions(cfg.rays).into_iter().enumerate() {
                    let s = ray_boundary(&net, &phi, &dir, cfg)?;
                    rows.push(vec![
                        seed.to_string(),
                        label.clone(),
                        i.to_string(),
                        num(theta),
                        num(s * dir[0] / LN_2),
                        num(s * dir[1] / LN_2),
                    ]);
                }
            }
        }
        Ok(rows)
    })?;
    Ok(Table::new(&["seed", "order", "ray", "theta_rad", "rate1_bits", "rate2_bits"], flat(rows)))
}

fn trace_of(kind: SolverKind, net: &NetworkSpec, phi: &Coupling, targets: &[f64], cfg: &ExperimentConfig) -> Result<Option<Vec<IterRecord>>> {
    if kind == SolverKind::A {
        return Err(HarnessError::Config("convergence_trace compares sum-power solvers b, pr and pr1".into()));
    }
    match solve(kind, net, phi, targets, cfg) {
        Ok(r) => Ok(Some(r.trace)),
        Err(HarnessError::Core(CoreError::Infeasible(_))) => Ok(None),
        Err(e) => Err(e),
    }
}

fn convergence_trace(cfg: &ExperimentConfig, base_dir: &Path) -> Result<Table> {
    let targets = bits_to_nats(cfg.targets_bits.as_deref().unwrap_or_default());
    let rows = per_seed(cfg, |seed| {
        let (net, phi) = network(cfg, seed, base_dir)?;
        let mut rows = Vec::new();
        for &choice in &cfg.orders {
            for (label, phi) in fixed_orders(choice, &net, &phi)? {
                for &kind in &cfg.solvers {
                    let head = [seed.to_string(), kind.name().to_string(), label.clone()];
                    match trace_of(kind, &net, &phi, &targets, cfg)? {
                        Some(trace) => {
                            for (i, r) in trace.iter().enumerate() {
                                let mut row = head.to_vec();
                                row.extend([(i + 1).to_string(), db(r.sum_power), num(min_scaled(&r.rates, &targets))]);
                                rows.push(row);
                            }
                        }
                        None => {
                            let mut row = head.to_vec();
                            row.extend(["0".to_string(), "inf".to_string(), "0".to_string()]);
                            rows.push(row);
                        }
                    }
                }
            }
        }
        Ok(rows)
    })?;
    Ok(Table::new(&["seed", "solver", "order", "iteration", "sum_power_db", "min_scaled_rate"], flat(rows)))
}

/// Sum power of one solver under one order choice, `None` when infeasible.
/// `All` keeps the best order.
pub fn power_for(
    kind: SolverKind,
    choice: OrderChoice,
    net: &NetworkSpec,
    phi: &Coupling,
    targets: &[f64],
    cfg: &ExperimentConfig,
) -> Result<Option<f64>> {
    let feasible = |r: Result<SolverResult>| match r {
        Ok(r) => Ok(Some(r.sum_power)),
        Err(HarnessError::Core(CoreError::Infeasible(_))) => Ok(None),
        Err(e) => Err(e),
    };
    match choice {
        OrderChoice::O => {
            let opts = OrderOptions { tol: cfg.tol, ..OrderOptions::default() };
            let r = algorithm_o(net, targets, order_solver(kind, cfg)?, meb_order(net), &opts).map(|o| o.result);
            feasible(r.map_err(HarnessError::from))
        }
        _ => {
            let mut best: Option<f64> = None;
            for (_, phi) in fixed_orders(choice, net, phi)? {
                if let Some(p) = feasible(solve(kind, net, &phi, targets, cfg))? {
                    best = Some(best.map_or(p, |b| b.min(p)));
                }
            }
            Ok(best)
        }
    }
}

fn power_vs_rate(cfg: &ExperimentConfig, base_dir: &Path) -> Result<(Table, Table)> {
    let n = cfg.network.links;
    let weights = cfg.target_weights.clone().unwrap_or_else(|| vec![1.0; n]);
    let wsum: f64 = weights.iter().sum();
    let totals = cfg.total_rates_bits.clone().unwrap_or_default();
    let variants: Vec<(SolverKind, OrderChoice)> =
        cfg.solvers.iter().flat_map(|&s| cfg.orders.iter().map(move |&o| (s, o))).collect();
    let results = per_seed(cfg, |seed| {
        let (net, phi) = network(cfg, seed, base_dir)?;
        let mut out = Vec::new();
        for &total in &totals {
            let bits: Vec<f64> = weights.iter().map(|w| total * w / wsum).collect();
            let targets = bits_to_nats(&bits);
            for &(kind, choice) in &variants {
                out.push(power_for(kind, choice, &net, &phi, &targets, cfg)?);
            }
        }
        Ok(out)
    })?;
    let mut detail = Vec::new();
    let mut mean = Vec::new();
    for (ti, &total) in totals.iter().enumerate() {
        for (vi, &(kind, choice)) in variants.iter().enumerate() {
            let idx = ti * variants.len() + vi;
            let mut dbs = Vec::new();
            for (seed, powers) in &results {
                let p = powers[idx];
                detail.push(vec![
                    num(total),
                    seed.to_string(),
                    kind.name().into(),
                    choice.name().into(),
                    p.map_or("inf".into(), db),
                    u8::from(p.is_some()).to_string(),
                ]);
                if let Some(p) = p {
                    dbs.push(10.0 * p.log10());
                }
            }
            let avg = if dbs.is_empty() { f64::INFINITY } else { dbs.iter().sum::<f64>() / dbs.len() as f64 };
            mean.push(vec![
                num(total),
                kind.name().into(),
                choice.name().into(),
                num(avg),
                dbs.len().to_string(),
                results.len().to_string(),
            ]);
        }
    }
    Ok((
        Table::new(&["total_rate_bits", "solver", "order", "mean_sum_power_db", "feasible_seeds", "seeds"], mean),
        Table::new(&["total_rate_bits", "seed", "solver", "order", "sum_power_db", "feasible"], detail),
    ))
}

/// Seed of the random first-round covariances for a channel seed.
pub fn prd_init_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

fn prd_rounds(cfg: &ExperimentConfig, base_dir: &Path) -> Result<Table> {
    let bits = cfg.targets_bits.clone().unwrap_or_default();
    let targets = bits_to_nats(&bits);
    let positive: Vec<f64> = bits.iter().copied().filter(|b| *b > 0.0).collect();
    let mean_target = positive.iter().sum::<f64>() / positive.len().max(1) as f64;
    let rows = per_seed(cfg, |seed| {
        let (net, phi) = network(cfg, seed, base_dir)?;
        let mut rows = Vec::new();
        for &beta in &cfg.betas {
            let opts = PrdOptions {
                rounds: cfg.rounds,
                beta,
                init: PrdInit::Random { seed: prd_init_seed(seed), power: cfg.init_power },
                ..PrdOptions::default()
            };
            let run = run_prd(&net, &phi, &targets, &opts)?;
            if !information_audit(&run.access_log).passed() {
                return Err(HarnessError::Config("distributed run read non-local state".into()));
            }
            for r in &run.rounds {
                rows.push(vec![
                    num(beta),
                    seed.to_string(),
                    num(r.label),
                    db(r.sum_power),
                    num(r.min_scaled_rate * mean_target),
                    u8::from(r.min_scaled_rate >= 1.0 - 1e-6).to_string(),
                ]);
            }
        }
        Ok(rows)
    })?;
    Ok(Table::new(&["beta", "seed", "round", "sum_power_db", "min_scaled_rate_bits", "meets_target"], flat(rows)))
}

fn order_compare(cfg: &ExperimentConfig, base_dir: &Path) -> Result<Table> {
    let targets = bits_to_nats(cfg.targets_bits.as_deref().unwrap_or_default());
    let kind = cfg.solvers[0];
    let rows = per_seed(cfg, |seed| {
        let (net, _) = network(cfg, seed, base_dir)?;
        let meb = meb_order(&net);
        let opts = OrderOptions { tol: cfg.tol, ..OrderOptions::default() };
        let chosen: Option<OrderSpec> = match algorithm_o(&net, &targets, order_solver(kind, cfg)?, meb.clone(), &opts) {
            Ok(o) => Some(o.order),
            Err(CoreError::Infeasible(_)) => None,
            Err(e) => return Err(e.into()),
        };
        let mut rows = Vec::new();
        for order in exhaustive_orders(&net) {
            let phi = order_to_coupling(&net, &order)?;
            let objective = match solve(kind, &net, &phi, &targets, cfg) {
                Ok(r) => r.objective,
                Err(HarnessError::Core(CoreError::Infeasible(_))) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            rows.push(vec![
                seed.to_string(),
                order.label(),
                num(objective),
                db(objective),
                u8::from(order == meb).to_string(),
                u8::from(chosen.as_ref() == Some(&order)).to_string(),
            ]);
        }
        Ok(rows)
    })?;
    Ok(Table::new(&["seed", "order", "objective", "objective_db", "is_meb", "is_o"], flat(rows)))
}
