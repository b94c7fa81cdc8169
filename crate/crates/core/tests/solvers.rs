mod common;

use bmac_core::linalg::CMat;
use bmac_core::netmodel::{generate_network, link_rates, Coupling, NetworkSpec, Topology};
use bmac_core::politewf::{check_structure, optimality_report, Problem};
use bmac_core::pwf_solvers::{algorithm_pr, algorithm_pr1, Pr1Init, PwfOptions};
use bmac_core::sinr_algs::{algorithm_a, algorithm_b, SolverOptions};
use bmac_core::Error;
use common::{case, gaussian, rng};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Minimum powers for single-antenna links with fixed SINR targets:
/// `p = (I − D G)^{-1} D 1` with `D = diag(γ / g_ll)` and `G` the cross gains.
fn scalar_powers(gain: &[Vec<f64>], phi: &Coupling, sinr: &[f64]) -> Option<Vec<f64>> {
    let n = gain.len();
    let a = DMatrix::from_fn(n, n, |l, k| {
        let cross = if l != k && phi.get(l, k) { gain[l][k] } else { 0.0 };
        f64::from(u8::from(l == k)) - sinr[l] / gain[l][l] * cross
    });
    let b = DVector::from_fn(n, |l, _| sinr[l] / gain[l][l]);
    let p = a.lu().solve(&b)?;
    p.iter().all(|&x| x >= 0.0).then(|| p.iter().copied().collect())
}

fn amplitude(gain: &[Vec<f64>]) -> Vec<Vec<f64>> {
    gain.iter().map(|r| r.iter().map(|g| g.sqrt()).collect()).collect()
}

#[test]
fn algorithm_b_matches_scalar_power_control() {
    let cases = [
        (vec![vec![1.0, 0.5], vec![0.5, 1.0]], Coupling::full(2)),
        (vec![vec![1.0, 0.5], vec![0.0, 1.0]], Coupling::from_rows(&[vec![0, 1], vec![0, 0]]).unwrap()),
        (vec![vec![2.0, 0.3, 0.1], vec![0.2, 1.0, 0.4], vec![0.3, 0.1, 1.5]], Coupling::full(3)),
    ];
    for (gain, phi) in cases {
        let n = gain.len();
        let net = NetworkSpec::scalar(&amplitude(&gain)).unwrap();
        let targets = vec![2f64.ln(); n];
        let want: f64 = scalar_powers(&gain, &phi, &vec![1.0; n]).unwrap().iter().sum();
        let got = algorithm_b(&net, &phi, &targets, &SolverOptions::default()).unwrap();
        assert!((got.sum_power - want).abs() < 1e-6 * want, "{} vs {want}", got.sum_power);
    }
}

#[test]
fn algorithm_b_reports_infeasible_scalar_targets() {
    let net = NetworkSpec::scalar(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let r = algorithm_b(&net, &Coupling::full(2), &[3f64.ln(); 2], &SolverOptions::default());
    assert!(matches!(r, Err(Error::Infeasible(_))));
}

#[test]
fn algorithm_a_matches_scalar_mac_balance() {
    // Link 1 is decoded last (clean); link 0 hears it.
    let (g0, g1, total) = (1.0f64, 0.5f64, 10.0);
    let net = NetworkSpec::scalar(&[vec![g0.sqrt(), g1.sqrt()], vec![g0.sqrt(), g1.sqrt()]]).unwrap();
    let net = NetworkSpec::new(
        Topology { tx_antennas: vec![1, 1], rx_antennas: vec![1, 1], tx_node: vec![0, 1], rx_node: vec![0, 0] },
        (0..2).map(|l| (0..2).map(|k| net.channel(l, k).clone()).collect()).collect(),
    )
    .unwrap();
    let phi = Coupling::from_rows(&[vec![0, 1], vec![0, 0]]).unwrap();
    let targets = [1.0, 0.5];
    let r = algorithm_a(&net, &phi, &targets, total, &SolverOptions::default().with_tol(1e-12)).unwrap();
    // SINR_l = C γ_l: p1 = Cγ1/g1, p0 = Cγ0(1 + Cγ1)/g0, p0 + p1 = total.
    let (y0, y1) = (targets[0].exp_m1(), targets[1].exp_m1());
    let (qa, qb, qc) = (y0 * y1 / g0, y0 / g0 + y1 / g1, -total);
    let want = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
    assert!((r.objective - want).abs() < 1e-8 * want, "{} vs {want}", r.objective);
    assert!((r.sum_power - total).abs() < 1e-9 * total);
}

fn achievable_targets(seed: u64, scale: f64) -> (NetworkSpec, Coupling, Vec<f64>) {
    let c = case(seed, 3, 3, false);
    let rates = link_rates(&c.net, &c.phi, &c.covs).unwrap();
    (c.net, c.phi, rates.iter().map(|r| r * scale).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn algorithm_b_power_never_rises_once_feasible(seed in any::<u64>()) {
        let (net, phi, targets) = achievable_targets(seed, 0.7);
        let r = algorithm_b(&net, &phi, &targets, &SolverOptions::default().with_max_iter(300));
        prop_assume!(!matches!(r, Err(Error::Infeasible(_))));
        let r = r.unwrap();
        // Runs that approach the targets from below have no feasible iterate.
        let first = r.trace.iter().position(|t| t.feasible).unwrap_or(r.trace.len());
        for w in r.trace[first..].windows(2) {
            prop_assert!(w[1].sum_power <= w[0].sum_power * (1.0 + 1e-10), "{} -> {}", w[0].sum_power, w[1].sum_power);
        }
        for (l, (got, want)) in r.rates.iter().zip(&targets).enumerate() {
            prop_assert!(*got >= want - 1e-6 * want.max(1.0), "link {l}: {got} < {want}");
        }
    }

    #[test]
    fn algorithm_a_objective_never_falls(seed in any::<u64>(), total in 1.0f64..100.0) {
        let (net, phi, targets) = achievable_targets(seed, 1.0);
        let r = algorithm_a(&net, &phi, &targets, total, &SolverOptions::default().with_max_iter(300)).unwrap();
        for w in r.trace.windows(2) {
            prop_assert!(w[1].objective >= w[0].objective * (1.0 - 1e-10), "{} -> {}", w[0].objective, w[1].objective);
        }
        prop_assert!((r.sum_power - total).abs() < 1e-8 * total);
    }
}

/// Rank-one direct channels: every converged output is polite water-filled.
#[test]
fn rank_one_direct_channels_give_structured_outputs() {
    for seed in 0..6u64 {
        let mut r = rng(seed);
        let topo = Topology::distinct(3, 3, 3);
        let base = generate_network(&topo, &vec![vec![0.0; 3]; 3], seed).unwrap();
        let channels: Vec<Vec<CMat>> = (0..3)
            .map(|l| {
                (0..3)
                    .map(|k| if l == k { gaussian(&mut r, 3, 1) * gaussian(&mut r, 1, 3) } else { base.channel(l, k).clone() })
                    .collect()
            })
            .collect();
        let net = NetworkSpec::new(topo, channels).unwrap();
        let phi = Coupling::full(3);
        let opts = SolverOptions::default().with_tol(1e-15).with_max_iter(20_000);
        let b = algorithm_b(&net, &phi, &[1.0; 3], &opts).unwrap();
        let res = check_structure(&net, &phi, &b.covs_f).unwrap().max_relative_residual();
        assert!(res < 1e-6, "seed {seed}: B structure residual {res}");
        let a = algorithm_a(&net, &phi, &[1.0; 3], 10.0, &opts).unwrap();
        let res = check_structure(&net, &phi, &a.covs_f).unwrap().max_relative_residual();
        assert!(res < 1e-6, "seed {seed}: A structure residual {res}");
    }
}

/// A two-user MIMO MAC is an iTree network; PR and PR1 both reach its
/// minimum power.
#[test]
fn pr_and_pr1_agree_on_a_mac() {
    for seed in 0..4u64 {
        let topo = Topology::mac(2, 2, 3);
        let net = generate_network(&topo, &vec![vec![0.0; 2]; 2], seed).unwrap();
        // Link 1 decoded last: link 0 hears link 1.
        let phi = Coupling::from_rows(&[vec![0, 1], vec![0, 0]]).unwrap();
        let targets = [2.0, 1.5];
        let opts = PwfOptions::default().with_tol(1e-12).with_max_iter(5000);
        let pr = algorithm_pr(&net, &phi, &targets, None, &opts).unwrap();
        let pr1 = algorithm_pr1(&net, &phi, &targets, &Pr1Init::default(), &opts).unwrap();
        let db = 10.0 * (pr.sum_power / pr1.result.sum_power).log10();
        assert!(db.abs() < 0.01, "seed {seed}: PR {} PR1 {}", pr.sum_power, pr1.result.sum_power);
        let rep = optimality_report(&net, &phi, &pr1.result.covs_f, &targets, Problem::SumPower).unwrap();
        assert!(rep.structure_residual < 1e-5 && rep.rate_residual < 1e-5, "{rep:?}");
    }
}

#[test]
fn pr1_reaches_a_stationary_point_on_an_interference_channel() {
    let topo = Topology::distinct(3, 3, 3);
    let net = generate_network(&topo, &vec![vec![0.0; 3]; 3], 11).unwrap();
    let phi = Coupling::from_fn(3, |l, k| l != k);
    let targets = [2.0; 3];
    let opts = PwfOptions::default().with_tol(1e-13).with_max_iter(20_000);
    let r = algorithm_pr1(&net, &phi, &targets, &Pr1Init::default(), &opts).unwrap();
    assert!(r.result.converged);
    let rep = optimality_report(&net, &phi, &r.result.covs_f, &targets, Problem::SumPower).unwrap();
    assert!(rep.structure_residual < 1e-5, "structure {}", rep.structure_residual);
    assert!(rep.rate_residual < 1e-5, "rate {}", rep.rate_residual);
}
