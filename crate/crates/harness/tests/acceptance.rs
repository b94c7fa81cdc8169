//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits with failure if any criterion fails.

use std::f64::consts::LN_2;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use bmac_core::conversion::{equal_power_decomposition, equal_sinr_streams, rate_to_sinr_target, sic_sinrs};
use bmac_core::distsim::{information_audit, random_init, run_prd, NodeId, PrdInit, PrdOptions, Quantity, RogueRead};
use bmac_core::itree::{algorithm_i, build_subnetwork, BaseSolver};
use bmac_core::linalg::{self, c, CMat, C64};
use bmac_core::netmodel::{generate_network, link_rates, Coupling, CovarianceSet, Direction, NetworkSpec, Topology};
use bmac_core::ordering::{
    algorithm_o, exhaustive_orders, order_to_coupling, NodeKind, OrderOptions, OrderSolver, OrderSpec,
};
use bmac_core::politewf::{algorithm_w, check_structure, optimality_report, Problem};
use bmac_core::pwf_solvers::{algorithm_pr, algorithm_pr1, Pr1Init, PwfOptions};
use bmac_core::sinr_algs::{algorithm_a, algorithm_b, Init, SolverOptions};
use bmac_core::streams::{covariance_transformation, sinr_report};
use bmac_core::Error as CoreError;
use bmac_harness::experiments::{fixed_orders, network, power_for, prd_init_seed, ray_boundary, ray_directions};
use bmac_harness::oracles::{oracle_scalar_network, oracle_single_user, two_user_mac_radius};
use bmac_harness::{ExperimentConfig, OrderChoice, SolverKind};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs_dir().join(name)).expect("bundled config loads")
}

// ---- random instances ----

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, cols: usize) -> CMat {
    CMat::from_fn(r, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

fn psd(rng: &mut ChaCha8Rng, n: usize, rank: usize, trace: f64) -> CMat {
    let a = gaussian(rng, n, rank);
    let s = &a * a.adjoint();
    linalg::hermitize(&(s.clone() * c(trace / linalg::trace_re(&s))))
}

fn hpd(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    psd(rng, n, n, 0.5 * n as f64) + linalg::identity(n) * c(0.5)
}

struct Case {
    net: NetworkSpec,
    phi: Coupling,
    covs: CovarianceSet,
}

/// Random B-MAC network with shared nodes, a coupling from random per-node
/// orders, and random forward covariances.
fn corpus_case(seed: u64, colored: bool) -> Case {
    let mut r = rng(seed);
    let n = r.random_range(1..=4);
    let tx_node: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
    let rx_node: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
    let tx_ant: Vec<usize> = (0..n).map(|_| r.random_range(1..=4)).collect();
    let rx_ant: Vec<usize> = (0..n).map(|_| r.random_range(1..=4)).collect();
    let topo = Topology {
        tx_antennas: tx_node.iter().map(|&t| tx_ant[t]).collect(),
        rx_antennas: rx_node.iter().map(|&t| rx_ant[t]).collect(),
        tx_node,
        rx_node,
    };
    let gains: Vec<Vec<f64>> =
        (0..n).map(|l| (0..n).map(|k| if l == k { 0.0 } else { r.random_range(-10.0..0.0) }).collect()).collect();
    let mut net = generate_network(&topo, &gains, r.random()).unwrap();
    if colored {
        let noise = (0..n).map(|l| hpd(&mut r, net.rx_antennas(l))).collect();
        let weight = (0..n).map(|l| hpd(&mut r, net.tx_antennas(l))).collect();
        net = net.with_noise(noise).unwrap().with_weights(weight).unwrap();
    }
    let mut order = OrderSpec::by_index(&net);
    for kind in [NodeKind::Tx, NodeKind::Rx] {
        for links in order.slot_mut(kind).values_mut() {
            links.shuffle(&mut r);
        }
    }
    let phi = order_to_coupling(&net, &order).unwrap();
    let mats = (0..n)
        .map(|l| {
            let d = net.tx_antennas(l);
            let rank = r.random_range(1..=d);
            let tr = r.random_range(0.2..5.0);
            psd(&mut r, d, rank, tr)
        })
        .collect();
    let covs = CovarianceSet::new(&net, Direction::Forward, mats).unwrap();
    Case { net, phi, covs }
}

const CORPUS: u64 = 200;

// ---- criteria ----

fn sinr_duality() -> Outcome {
    let start = Instant::now();
    let (mut worst_sinr, mut worst_power) = (0.0f64, 0.0f64);
    for seed in 0..CORPUS {
        let cs = corpus_case(seed, false);
        let t = covariance_transformation(&cs.net, &cs.phi, &cs.covs).map_err(err)?;
        let f = sinr_report(&cs.net, &cs.phi, &t.strategy, Direction::Forward);
        let r = sinr_report(&cs.net, &cs.phi, &t.strategy, Direction::Reverse);
        for (a, b) in f.iter().zip(&r) {
            worst_sinr = worst_sinr.max(rel(*b, *a));
        }
        let p: f64 = t.strategy.p.iter().sum();
        let q: f64 = t.strategy.q.iter().sum();
        worst_power = worst_power.max(rel(q, p));
    }
    let elapsed = start.elapsed();
    ensure(worst_sinr < 1e-6, || format!("worst SINR mismatch {worst_sinr:.2e}"))?;
    ensure(worst_power < 1e-9, || format!("worst power mismatch {worst_power:.2e}"))?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("{CORPUS} networks, SINR err {worst_sinr:.1e}, power err {worst_power:.1e}, {elapsed:.2?}"))
}

fn mmse_sic_lossless() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..CORPUS {
        let cs = corpus_case(seed, false);
        let t = covariance_transformation(&cs.net, &cs.phi, &cs.covs).map_err(err)?;
        let g = sinr_report(&cs.net, &cs.phi, &t.strategy, Direction::Forward);
        let rates = link_rates(&cs.net, &cs.phi, &cs.covs).map_err(err)?;
        for (l, rate) in rates.iter().enumerate() {
            let s: f64 = t.strategy.layout.range(l).map(|i| g[i].ln_1p()).sum();
            worst = worst.max((s - rate).abs() / rate.max(1.0));
        }
    }
    ensure(worst < 1e-8, || format!("worst stream/log-det gap {worst:.2e}"))?;
    Ok(format!("{CORPUS} networks, worst gap {worst:.1e}"))
}

fn rate_duality() -> Outcome {
    let (mut drop, mut power) = (0.0f64, 0.0f64);
    let mut check = |net: &NetworkSpec, phi: &Coupling, covs: &CovarianceSet| -> Result<(), String> {
        let t = covariance_transformation(net, phi, covs).map_err(err)?;
        let fwd = link_rates(net, phi, covs).map_err(err)?;
        let rev = link_rates(net, phi, &t.covs).map_err(err)?;
        for (f, r) in fwd.iter().zip(&rev) {
            drop = drop.max((f - r) / f.max(1.0));
        }
        power = power.max(rel(t.covs.weighted_power(net), covs.weighted_power(net)));
        Ok(())
    };
    let mut cases = 0;
    for seed in 0..CORPUS {
        let cs = corpus_case(seed, seed % 2 == 1);
        check(&cs.net, &cs.phi, &cs.covs)?;
        cases += 1;
    }
    // Sub-networks of acyclic networks carry the folded-in interference as
    // colored noise.
    for seed in 0..50u64 {
        let mut r = rng(1_000 + seed);
        let n = r.random_range(2..=4);
        let topo = Topology::distinct(n, r.random_range(1..=3), r.random_range(1..=3));
        let net = generate_network(&topo, &vec![vec![0.0; n]; n], r.random()).unwrap();
        let mask: Vec<Vec<bool>> = (0..n).map(|l| (0..n).map(|k| k > l && r.random_bool(0.7)).collect()).collect();
        let phi = Coupling::from_fn(n, |l, k| mask[l][k]);
        let mats = (0..n).map(|l| psd(&mut r, net.tx_antennas(l), net.tx_antennas(l), 2.0)).collect();
        let covs = CovarianceSet::new(&net, Direction::Forward, mats).unwrap();
        for i in 1..n {
            let sub = build_subnetwork(&net, &phi, &covs, i).map_err(err)?;
            let sub_covs = CovarianceSet::new(&sub.net, Direction::Forward, covs.mats()[..i].to_vec()).map_err(err)?;
            check(&sub.net, &sub.phi, &sub_covs)?;
            cases += 1;
        }
    }
    ensure(drop <= 1e-9, || format!("a reverse rate fell {drop:.2e} below its forward rate"))?;
    ensure(power < 1e-9, || format!("weighted power mismatch {power:.2e}"))?;
    Ok(format!("{cases} cases incl. colored and sub-network noise, power err {power:.1e}"))
}

fn equal_sinr() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut r = rng(2_000 + seed);
        let lt = r.random_range(1..=4);
        let lr = r.random_range(1..=4);
        let rank = r.random_range(1..=lt.min(lr));
        let m = r.random_range(rank..=4);
        let h = gaussian(&mut r, lr, lt);
        let tr = r.random_range(0.5..10.0);
        let sigma = psd(&mut r, lt, rank, tr);
        let (dirs, pw) = equal_sinr_streams(&h, &sigma, m).map_err(err)?;
        let g = CMat::from_fn(lr, m, |i, j| (&h * &dirs[j])[i] * c(pw[j].sqrt()));
        let info = linalg::log_det_hpd(&(linalg::identity(lr) + &h * &sigma * h.adjoint())).map_err(err)?;
        let want = rate_to_sinr_target(info, m);
        for s in sic_sinrs(&g).map_err(err)? {
            worst = worst.max((s - want).abs() / want.max(1.0));
        }
    }
    ensure(worst < 1e-6, || format!("worst SINR spread {worst:.2e}"))?;
    Ok(format!("100 cases, worst deviation from e^(I/M)-1 {worst:.1e}"))
}

fn equal_power() -> Outcome {
    let (mut recon, mut spread) = (0.0f64, 0.0f64);
    let mut branches = [0usize; 2];
    let mut check = |sigma: &CMat, m: usize| -> Result<(), String> {
        let t = equal_power_decomposition(sigma, m).map_err(err)?;
        recon = recon.max((&t * t.adjoint() - sigma).norm());
        let each = linalg::trace_re(sigma) / m as f64;
        for j in 0..m {
            spread = spread.max((t.column(j).norm_squared() - each).abs());
        }
        branches[usize::from(m < sigma.nrows())] += 1;
        Ok(())
    };
    check(&CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(3.0), c(1.0)])), 4)?;
    for seed in 0..100u64 {
        let mut r = rng(3_000 + seed);
        let lt = r.random_range(2..=4);
        let rank = r.random_range(1..lt);
        let m = if seed % 2 == 0 { r.random_range(lt..=6) } else { r.random_range(rank..lt) };
        let tr = r.random_range(0.5..5.0);
        let sigma = psd(&mut r, lt, rank, tr);
        check(&sigma, m)?;
    }
    ensure(recon < 1e-10, || format!("reconstruction error {recon:.2e}"))?;
    ensure(spread < 1e-10, || format!("power spread {spread:.2e}"))?;
    ensure(branches.iter().all(|&b| b > 0), || format!("branch coverage {branches:?}"))?;
    Ok(format!("M>=L_T {} cases, M<L_T {} cases, recon {recon:.1e}, spread {spread:.1e}", branches[0], branches[1]))
}

fn water_filling() -> Outcome {
    let w = algorithm_w(&[4.0, 0.1], 3f64.ln()).map_err(err)?;
    ensure((w.nu - 0.75).abs() < 1e-12, || format!("hand case level {}", w.nu))?;
    ensure(w.d[1] == 0.0 && w.d[0] > 0.0, || format!("hand case active set {:?}", w.d))?;
    ensure((w.total() - 0.5).abs() < 1e-12, || format!("hand case power {}", w.total()))?;
    let (mut rate_err, mut power_err) = (0.0f64, 0.0f64);
    for seed in 0..200u64 {
        let mut r = rng(4_000 + seed);
        let (rows, cols) = (r.random_range(1..=4), r.random_range(1..=4));
        let h = gaussian(&mut r, rows, cols);
        let rate = r.random_range(0.01..15.0);
        let deltas: Vec<f64> = (h.adjoint() * &h).symmetric_eigenvalues().iter().copied().filter(|&g| g > 1e-12).collect();
        let w = algorithm_w(&deltas, rate).map_err(err)?;
        ensure(w.d.iter().all(|&d| d >= 0.0), || format!("seed {seed}: negative power {:?}", w.d))?;
        rate_err = rate_err.max((w.rate(&deltas) - rate).abs() / rate.max(1.0));
        let (oracle, _) = oracle_single_user(&h, rate);
        power_err = power_err.max(rel(w.total(), oracle));
    }
    ensure(rate_err < 1e-10, || format!("rate error {rate_err:.2e}"))?;
    ensure(power_err < 1e-9, || format!("power differs from bisection oracle by {power_err:.2e}"))?;
    Ok(format!("hand case nu=0.75 power=0.5; 200 random cases, rate err {rate_err:.1e}, oracle err {power_err:.1e}"))
}

fn scalar_b_oracle() -> Outcome {
    let amp = |g: &[Vec<f64>]| -> Vec<Vec<f64>> { g.iter().map(|r| r.iter().map(|x| x.sqrt()).collect()).collect() };
    let cases = [
        ("IC", vec![vec![1.0, 0.5], vec![0.5, 1.0]], vec![vec![false, true], vec![true, false]], 4.0),
        ("Z", vec![vec![1.0, 0.5], vec![0.0, 1.0]], vec![vec![false, true], vec![false, false]], 2.5),
    ];
    let mut out = Vec::new();
    for (name, gains, mask, want) in cases {
        let oracle: f64 = oracle_scalar_network(&gains, &[LN_2; 2], &mask).map_err(err)?.iter().sum();
        ensure((oracle - want).abs() < 1e-12, || format!("{name}: oracle {oracle}"))?;
        let net = NetworkSpec::scalar(&amp(&gains)).map_err(err)?;
        let phi = Coupling::from_fn(2, |l, k| mask[l][k]);
        let b = algorithm_b(&net, &phi, &[LN_2; 2], &SolverOptions::default()).map_err(err)?;
        ensure((b.sum_power - want).abs() < 1e-3, || format!("{name}: B {} oracle {want}", b.sum_power))?;
        out.push(format!("{name} {:.6}", b.sum_power));
    }
    Ok(out.join(", "))
}

fn b_monotone() -> Outcome {
    let (mut runs, mut feasible_runs, mut worst) = (0, 0, 0.0f64);
    for seed in 0..CORPUS {
        let cs = corpus_case(seed, false);
        let targets: Vec<f64> = link_rates(&cs.net, &cs.phi, &cs.covs).map_err(err)?.iter().map(|r| 0.7 * r).collect();
        let r = match algorithm_b(&cs.net, &cs.phi, &targets, &SolverOptions::default().with_max_iter(300)) {
            Ok(r) => r,
            Err(CoreError::Infeasible(_)) => continue,
            Err(e) => return Err(format!("seed {seed}: {e}")),
        };
        runs += 1;
        let Some(first) = r.trace.iter().position(|t| t.feasible) else { continue };
        feasible_runs += 1;
        for w in r.trace[first..].windows(2) {
            worst = worst.max((w[1].sum_power - w[0].sum_power) / w[0].sum_power);
        }
    }
    ensure(worst <= 1e-10, || format!("sum power rose by {worst:.2e} relative"))?;
    Ok(format!("{runs} runs, {feasible_runs} with a feasible iterate, largest relative rise {worst:.1e}"))
}

/// Radius along `d` of the convex hull of `points` and the origin.
fn hull_radius(points: &[[f64; 2]], d: [f64; 2]) -> f64 {
    let mut best = 0.0f64;
    let cross = |a: [f64; 2], b: [f64; 2]| a[0] * b[1] - a[1] * b[0];
    for (i, &p) in points.iter().enumerate() {
        for &q in &points[i..] {
            // Solve t d = p + s (q − p) for s in [0, 1].
            let e = [q[0] - p[0], q[1] - p[1]];
            let den = cross(d, e);
            if den.abs() < 1e-15 {
                let along = (p[0] * d[0] + p[1] * d[1]).max(q[0] * d[0] + q[1] * d[1]);
                if cross(d, p).abs() < 1e-12 {
                    best = best.max(along);
                }
                continue;
            }
            let s = cross(p, d) / den;
            if (-1e-12..=1.0 + 1e-12).contains(&s) {
                let t = cross(p, e) / den;
                best = best.max(t);
            }
        }
    }
    best
}

fn mac_region() -> Outcome {
    let mut cfg = load("region_mac.toml");
    cfg.rays = 128;
    let seed = cfg.seeds.expand()[0];
    let (net, phi) = network(&cfg, seed, &configs_dir()).map_err(err)?;
    let gains = [net.channel(0, 0)[(0, 0)].norm_sqr(), net.channel(0, 1)[(0, 0)].norm_sqr()];
    let power = 10f64.powf(cfg.total_power_db / 10.0);
    let rays = ray_directions(cfg.rays);
    let mut points = Vec::new();
    for (_, phi) in fixed_orders(OrderChoice::All, &net, &phi).map_err(err)? {
        for (_, d) in &rays {
            let s = ray_boundary(&net, &phi, d, &cfg).map_err(err)?;
            points.push([s * d[0], s * d[1]]);
        }
    }
    let mut worst = 0.0f64;
    for (_, d) in &rays {
        let want = two_user_mac_radius(gains, *d, power);
        worst = worst.max((hull_radius(&points, *d) - want).abs());
    }
    // Single-user corners: all power on one user.
    for k in 0..2 {
        let mut axis = [0.0; 2];
        axis[k] = 1.0;
        worst = worst.max((hull_radius(&points, axis) - (gains[k] * power).ln_1p()).abs());
    }
    ensure(worst < 1e-3, || format!("hull differs from the capacity region by {worst:.2e} nats"))?;
    Ok(format!("gains ({:.3}, {:.3}), {} rays x 2 orders, worst radial gap {worst:.1e} nats", gains[0], gains[1], rays.len()))
}

fn rank_one_structure() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..6u64 {
        let mut r = rng(5_000 + seed);
        let topo = Topology::distinct(3, 3, 3);
        let base = generate_network(&topo, &vec![vec![0.0; 3]; 3], seed).map_err(err)?;
        let channels: Vec<Vec<CMat>> = (0..3)
            .map(|l| {
                (0..3)
                    .map(|k| if l == k { gaussian(&mut r, 3, 1) * gaussian(&mut r, 1, 3) } else { base.channel(l, k).clone() })
                    .collect()
            })
            .collect();
        let net = NetworkSpec::new(topo, channels).map_err(err)?;
        let phi = Coupling::full(3);
        let opts = SolverOptions::default().with_tol(1e-15).with_max_iter(20_000);
        let b = algorithm_b(&net, &phi, &[1.0; 3], &opts).map_err(err)?;
        let a = algorithm_a(&net, &phi, &[1.0; 3], 10.0, &opts).map_err(err)?;
        for (name, covs) in [("B", &b.covs_f), ("A", &a.covs_f)] {
            let res = check_structure(&net, &phi, covs).map_err(err)?.max_relative_residual();
            ensure(res < 1e-6, || format!("seed {seed}: {name} structure residual {res:.2e}"))?;
            worst = worst.max(res);
        }
    }
    Ok(format!("6 networks, A and B, worst structure residual {worst:.1e}"))
}

/// Acyclic network whose isolated link 2 has a diagonal channel with unequal
/// gains, so its singular vectors are exact and the singular-vector start is
/// an exact fixed point of the stream iterations.
fn stuck_network(seed: u64) -> Result<(NetworkSpec, Coupling), String> {
    let base = generate_network(&Topology::distinct(3, 3, 3), &vec![vec![0.0; 3]; 3], seed).map_err(err)?;
    let mut channels: Vec<Vec<CMat>> = (0..3).map(|l| (0..3).map(|k| base.channel(l, k).clone()).collect()).collect();
    channels[2][2] = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(2.0), c(1.0), c(0.5)]));
    let net = NetworkSpec::new(Topology::distinct(3, 3, 3), channels).map_err(err)?;
    let phi = Coupling::from_rows(&[vec![0, 1, 0], vec![0, 0, 0], vec![0, 0, 0]]).map_err(err)?;
    Ok((net, phi))
}

fn algorithm_i_escapes() -> Outcome {
    let (mut worst, mut s_calls, mut stuck) = (0.0f64, 0, 0.0f64);
    let targets = [2.0; 3];
    let opts = SolverOptions::default().with_init(Init::SingularVectors).with_tol(1e-15).with_max_iter(5000);
    for seed in [4u64, 14, 24, 34, 44] {
        let (net, phi) = stuck_network(seed)?;
        let plain = algorithm_b(&net, &phi, &targets, &opts).map_err(err)?;
        let res = check_structure(&net, &phi, &plain.covs_f).map_err(err)?.links[2].relative_residual;
        ensure(res > 1e-2, || format!("seed {seed}: the singular-vector start did not stall B (residual {res:.2e})"))?;
        stuck = stuck.max(res);
        for (base, problem) in [
            (BaseSolver::B, Problem::SumPower),
            (BaseSolver::A { total_power: 10.0 }, Problem::Feasibility { total_power: 10.0 }),
        ] {
            let out = algorithm_i(&net, &phi, &targets, base, &opts).map_err(err)?;
            let rep = optimality_report(&net, &phi, &out.result.covs_f, &targets, problem).map_err(err)?;
            ensure(rep.structure_residual < 1e-5 && rep.rate_residual < 1e-5, || {
                format!("seed {seed} {base:?}: structure {:.2e} rate {:.2e}", rep.structure_residual, rep.rate_residual)
            })?;
            worst = worst.max(rep.structure_residual).max(rep.rate_residual);
            s_calls += out.s_calls;
        }
    }
    Ok(format!("5 networks x A and B, stalled residual {stuck:.2}, {s_calls} improvement steps, final residual {worst:.1e}"))
}

fn pr_pr1_agreement() -> Outcome {
    let opts = PwfOptions::default().with_tol(1e-12).with_max_iter(20_000);
    let mut worst_db = 0.0f64;
    for seed in 0..20u64 {
        let net = generate_network(&Topology::mac(3, 2, 3), &vec![vec![0.0; 3]; 3], seed).map_err(err)?;
        // Decoding in index order: link l hears every later link.
        let phi = Coupling::from_fn(3, |l, k| k > l);
        let targets = [1.5; 3];
        let pr = algorithm_pr(&net, &phi, &targets, None, &opts).map_err(err)?;
        let pr1 = algorithm_pr1(&net, &phi, &targets, &Pr1Init::default(), &opts).map_err(err)?;
        worst_db = worst_db.max((db(pr.sum_power) - db(pr1.result.sum_power)).abs());
    }
    ensure(worst_db < 0.05, || format!("PR and PR1 differ by {worst_db:.3} dB on a MAC"))?;
    let mut worst_res = 0.0f64;
    for seed in 0..5u64 {
        let net = generate_network(&Topology::distinct(3, 3, 3), &vec![vec![0.0; 3]; 3], 100 + seed).map_err(err)?;
        let targets = [2.0; 3];
        let full = Coupling::from_fn(3, |l, k| l != k);
        let upper = Coupling::from_fn(3, |l, k| k > l);
        let pr1 = algorithm_pr1(&net, &full, &targets, &Pr1Init::default(), &opts).map_err(err)?.result;
        let pr = algorithm_pr(&net, &upper, &targets, None, &opts).map_err(err)?;
        for (name, phi, covs) in [("PR1", &full, &pr1.covs_f), ("PR", &upper, &pr.covs_f)] {
            let rep = optimality_report(&net, phi, covs, &targets, Problem::SumPower).map_err(err)?;
            let res = rep.structure_residual.max(rep.rate_residual);
            ensure(res < 1e-5, || format!("seed {seed}: {name} residual {res:.2e}"))?;
            worst_res = worst_res.max(res);
        }
    }
    Ok(format!("MAC: 20 seeds, worst gap {worst_db:.2e} dB; IC: 5 seeds, worst residual {worst_res:.1e}"))
}

/// First iteration after which the trace stays within 0.1 dB of its end.
fn settle_iteration(powers: &[f64], last: f64) -> usize {
    let off = |p: f64| (db(p) - db(last)).abs() > 0.1;
    powers.iter().rposition(|&p| off(p)).map_or(1, |i| i + 2)
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2]) as f64
    }
}

fn convergence_speed() -> Outcome {
    let start = Instant::now();
    let targets = [5.0 * LN_2; 3];
    let phi = Coupling::from_fn(3, |l, k| l != k);
    let (mut pr1_iters, mut b_iters) = (Vec::new(), Vec::new());
    for seed in 0..20u64 {
        let net = generate_network(&Topology::distinct(3, 4, 4), &vec![vec![0.0; 3]; 3], seed).map_err(err)?;
        let pr1 = algorithm_pr1(&net, &phi, &targets, &Pr1Init::default(), &PwfOptions::default().with_tol(1e-8).with_max_iter(2000))
            .map_err(err)?
            .result;
        let b = algorithm_b(&net, &phi, &targets, &SolverOptions::default().with_tol(1e-8).with_max_iter(2000)).map_err(err)?;
        let trace = |r: &bmac_core::sinr_algs::SolverResult| r.trace.iter().map(|t| t.sum_power).collect::<Vec<_>>();
        pr1_iters.push(settle_iteration(&trace(&pr1), pr1.sum_power));
        b_iters.push(settle_iteration(&trace(&b), b.sum_power));
    }
    let elapsed = start.elapsed();
    let (mp, mb) = (median(pr1_iters), median(b_iters));
    ensure(mp < mb, || format!("median iterations PR1 {mp} vs B {mb}"))?;
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!("median iterations to final+0.1 dB: PR1 {mp}, B {mb}; {elapsed:.2?}"))
}

fn order_optimization() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let mut r = rng(6_000 + seed);
        let net = generate_network(&Topology::mac(4, 1, 1), &vec![vec![0.0; 4]; 4], seed).map_err(err)?;
        let targets: Vec<f64> = (0..4).map(|_| r.random_range(0.3..1.5)).collect();
        let best = exhaustive_orders(&net)
            .iter()
            .map(|o| {
                let phi = order_to_coupling(&net, o).unwrap();
                algorithm_b(&net, &phi, &targets, &SolverOptions::default().with_tol(1e-12)).map(|r| r.sum_power)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        let out = algorithm_o(&net, &targets, OrderSolver::B, OrderSpec::by_index(&net), &OrderOptions::default()).map_err(err)?;
        let gap = rel(out.result.sum_power, best);
        ensure(gap < 1e-6, || format!("seed {seed}: O {} exhaustive {best}", out.result.sum_power))?;
        worst = worst.max(gap);
    }
    let cfg = load("power_mac.toml");
    let seeds = cfg.seeds.expand();
    let mut gaps = Vec::new();
    for &total in cfg.total_rates_bits.as_deref().unwrap_or_default() {
        let targets = vec![total * LN_2 / 4.0; 4];
        let (mut meb, mut o) = (0.0, 0.0);
        for &seed in &seeds {
            let (net, phi) = network(&cfg, seed, &configs_dir()).map_err(err)?;
            let p_meb = power_for(SolverKind::B, OrderChoice::Meb, &net, &phi, &targets, &cfg).map_err(err)?;
            let p_o = power_for(SolverKind::B, OrderChoice::O, &net, &phi, &targets, &cfg).map_err(err)?;
            let (Some(p_meb), Some(p_o)) = (p_meb, p_o) else {
                return Err(format!("seed {seed} infeasible at {total} bits"));
            };
            meb += db(p_meb);
            o += db(p_o);
        }
        let gap = (meb - o) / seeds.len() as f64;
        ensure(gap.abs() < 0.05, || format!("{total} bits: mean MEB and O powers differ by {gap:.3} dB"))?;
        gaps.push(format!("{total}b {gap:.3} dB"));
    }
    Ok(format!("scalar MAC: 10 seeds, worst gap {worst:.1e}; MIMO MAC mean MEB-O: {}", gaps.join(", ")))
}

fn distributed() -> Outcome {
    let ic = |seed: u64| generate_network(&Topology::distinct(3, 4, 4), &vec![vec![0.0; 3]; 3], seed);
    let phi = Coupling::from_fn(3, |l, k| l != k);
    let targets = [5.0 * LN_2; 3];
    let mut lockstep = 0.0f64;
    let mut audited = 0;
    for seed in 0..5u64 {
        let net = ic(seed).map_err(err)?;
        let init = random_init(&net, seed + 100, 1.0);
        let opts = PrdOptions { rounds: 8, init: PrdInit::Given(init.clone()), ..Default::default() };
        let run = run_prd(&net, &phi, &targets, &opts).map_err(err)?;
        ensure(information_audit(&run.access_log).passed(), || format!("seed {seed}: audit failed"))?;
        audited += 1;
        let pr1 = algorithm_pr1(&net, &phi, &targets, &Pr1Init::Forward(init), &PwfOptions::default().with_tol(0.0).with_max_iter(8))
            .map_err(err)?;
        for (i, want) in pr1.forward_iterates.iter().enumerate() {
            for l in 0..3 {
                let got = run.forward_iterates[i + 1].get(l);
                lockstep = lockstep.max((got - want.get(l)).norm() / want.get(l).norm().max(1.0));
            }
        }
    }
    ensure(lockstep < 1e-10, || format!("PRD departs from PR1 by {lockstep:.2e}"))?;
    let rogue = RogueRead { node: NodeId::Tx(0), quantity: Quantity::Channel(1, 0) };
    let run = run_prd(&ic(0).map_err(err)?, &phi, &targets, &PrdOptions { rogue: Some(rogue), ..Default::default() }).map_err(err)?;
    ensure(!information_audit(&run.access_log).passed(), || "audit missed a cross-channel read".into())?;

    let cfg = load("prd_ic.toml");
    let bits = cfg.targets_bits.clone().unwrap_or_default();
    let cfg_targets: Vec<f64> = bits.iter().map(|b| b * LN_2).collect();
    let seeds = cfg.seeds.expand();
    let mut met = 0;
    for &seed in &seeds {
        let (net, phi) = network(&cfg, seed, &configs_dir()).map_err(err)?;
        let init = PrdInit::Random { seed: prd_init_seed(seed), power: cfg.init_power };
        let run = run_prd(&net, &phi, &cfg_targets, &PrdOptions { rounds: 3, beta: 1.0, init, ..Default::default() })
            .map_err(err)?;
        ensure(information_audit(&run.access_log).passed(), || format!("seed {seed}: audit failed"))?;
        audited += 1;
        let last = run.rounds.last().expect("at least one round");
        ensure(last.label == 3.5, || format!("last label {}", last.label))?;
        if last.min_scaled_rate >= 1.0 - 1e-6 {
            met += 1;
        }
    }
    let need = (seeds.len() * 4).div_ceil(5);
    ensure(met >= need, || format!("target met after 3.5 rounds on {met}/{} seeds", seeds.len()))?;
    Ok(format!(
        "lockstep err {lockstep:.1e}; {audited} runs audited, rogue read caught; target met on {met}/{} seeds",
        seeds.len()
    ))
}

fn determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_bmac");
    let dirs = [tempfile::tempdir().map_err(err)?, tempfile::tempdir().map_err(err)?];
    let mut configs: Vec<PathBuf> = std::fs::read_dir(configs_dir())
        .map_err(err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    configs.sort();
    let mut files = 0;
    for path in &configs {
        let kind = ExperimentConfig::load(path).map_err(err)?.kind.name().replace('_', "-");
        for dir in &dirs {
            let out = Command::new(exe)
                .args([kind.as_str(), "--config"])
                .arg(path)
                .arg("--out")
                .arg(dir.path())
                .output()
                .map_err(err)?;
            ensure(out.status.success(), || {
                format!("{}: {}", path.display(), String::from_utf8_lossy(&out.stderr).trim())
            })?;
        }
    }
    for entry in std::fs::read_dir(dirs[0].path()).map_err(err)? {
        let name = entry.map_err(err)?.file_name();
        let a = std::fs::read(dirs[0].path().join(&name)).map_err(err)?;
        let b = std::fs::read(dirs[1].path().join(&name)).map_err(|e| format!("{name:?} missing on rerun: {e}"))?;
        ensure(a == b, || format!("{name:?} differs between runs"))?;
        files += 1;
    }
    ensure(files > configs.len() - 1, || format!("only {files} files for {} configs", configs.len()))?;
    Ok(format!("{} configs, {files} CSV files byte-identical across two runs", configs.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 16] = [
        ("SINR duality", sinr_duality),
        ("MMSE-SIC losslessness", mmse_sic_lossless),
        ("rate duality", rate_duality),
        ("equal-SINR decomposition", equal_sinr),
        ("equal-power decomposition", equal_power),
        ("Algorithm W", water_filling),
        ("Algorithm B vs scalar oracle", scalar_b_oracle),
        ("Algorithm B monotonicity", b_monotone),
        ("Algorithm A MAC region", mac_region),
        ("rank-one direct channels", rank_one_structure),
        ("Algorithm I", algorithm_i_escapes),
        ("PR/PR1 agreement", pr_pr1_agreement),
        ("convergence speed", convergence_speed),
        ("Algorithm O", order_optimization),
        ("distributed PRD", distributed),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail} [{elapsed:.1?}]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {detail} [{elapsed:.1?}]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
