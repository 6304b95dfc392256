//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use leader_consensus::graph::{self, fixtures::fig1_topology, laplacian};
use leader_consensus::linalg::{self, Matrix};
use leader_consensus::protocol::{self, gamma_coupled, DEFAULT_RATIO_GRID};
use leader_consensus::sde::{self, Trajectory};
use leader_consensus::switching::{self, fixtures::balanced_pair};
use leader_consensus::{
    DiffusionMode, ExampleScenario, GainSchedule, LeaderDynamics, ProtocolSystem, SimConfig,
    SimMode, SwitchedSystem, SwitchingSignal,
};
use tempfile::TempDir;

const LAMBDA_MAX_P: f64 = 0.9447;
const LAMBDA_TOL: f64 = 5e-4;
const RESIDUAL_TOL: f64 = 1e-9;
const RATIO_TOL: f64 = 1e-9;
const THRESHOLD_TOL: f64 = 1e-6;
const PATHWISE_TOL: f64 = 1e-9;
const FAST_GAIN_FRACTION: f64 = 0.05;
const ORDER_RANGE: (f64, f64) = (0.7, 1.3);
const DEFINITENESS_SAMPLES: usize = 200;
const LAPLACIAN_SAMPLES: usize = 100;
const LYAPUNOV_SAMPLES: usize = 20;
const PTILDE_REL_TOL: f64 = 1e-8;
const ITILDE_TOL: f64 = 1e-12;

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn example_system(sigma: f64, h: GainSchedule, g: GainSchedule) -> ProtocolSystem {
    ProtocolSystem::new(
        fig1_topology(sigma),
        ExampleScenario::GAMMA,
        h,
        g,
        DiffusionMode::Faithful,
    )
    .unwrap()
}

fn example_cfg(dt: f64, horizon: f64, seed: u64, stride: usize, mode: SimMode) -> SimConfig {
    SimConfig {
        dt,
        horizon,
        seed,
        record_stride: stride,
        mode,
    }
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

fn lyapunov_fidelity() -> Outcome {
    let start = Instant::now();
    let lb = graph::lb_matrix(&fig1_topology(ExampleScenario::SIGMA));
    let sol = linalg::solve_lyapunov(&lb).unwrap();
    let elapsed = start.elapsed();
    let ok = sol.residual < RESIDUAL_TOL
        && (sol.lambda_max - LAMBDA_MAX_P).abs() < LAMBDA_TOL
        && elapsed < Duration::from_secs(1);
    (
        ok,
        format!(
            "lambda_max(P) = {:.6}, residual = {:.2e}, {:?}",
            sol.lambda_max, sol.residual, elapsed
        ),
    )
}

fn assumption_pipeline() -> Outcome {
    let start = Instant::now();
    let sys = example_system(
        ExampleScenario::SIGMA,
        ExampleScenario::h(),
        ExampleScenario::g(),
    );
    let report =
        protocol::check_assumptions(&sys, ExampleScenario::HORIZON, DEFAULT_RATIO_GRID).unwrap();
    let elapsed = start.elapsed();
    let lb = graph::lb_matrix(&fig1_topology(ExampleScenario::SIGMA));
    let independent = linalg::solve_lyapunov(&lb).unwrap().lambda_max / 0.75;
    let ok = report.a1
        && report.a2.holds
        && report.a3.holds
        && report.a4.holds
        && (report.a2.ratio_inf - 6.0).abs() < RATIO_TOL
        && (report.a2.threshold - independent).abs() < THRESHOLD_TOL
        && report.rho > 0.0
        && elapsed < Duration::from_secs(1);
    (
        ok,
        format!(
            "A1-A4 = ({}, {}, {}, {}), ratio_inf = {}, threshold = {:.6}, rho = {:.6}, {:?}",
            report.a1,
            report.a2.holds,
            report.a3.holds,
            report.a4.holds,
            report.a2.ratio_inf,
            report.a2.threshold,
            report.rho,
            elapsed
        ),
    )
}

fn max_gap(a: &Trajectory, b: &Trajectory) -> f64 {
    a.states
        .iter()
        .zip(&b.states)
        .flat_map(|(x, y)| {
            x.eps()
                .into_iter()
                .zip(y.eps())
                .map(|(p, q)| (p - q).abs())
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

fn pathwise_equivalence() -> Outcome {
    let sys = example_system(
        ExampleScenario::SIGMA,
        ExampleScenario::h(),
        ExampleScenario::g(),
    );
    let moving = LeaderDynamics {
        a0: protocol::Acceleration::Sinusoid {
            amplitude: 0.5,
            omega: 0.2,
            phase: 0.0,
        },
        x0_init: 1.5,
        v0_init: -0.7,
    };
    let mut ok = true;
    let mut details = Vec::new();
    for (label, leader) in [
        ("leader at rest", LeaderDynamics::default()),
        ("moving leader", moving),
    ] {
        let full = sde::simulate(
            &sys,
            &leader,
            &example_cfg(0.01, 100.0, 7, 1, SimMode::FullSystem),
            &ExampleScenario::EPS0,
        )
        .unwrap();
        let err = sde::simulate(
            &sys,
            &leader,
            &example_cfg(0.01, 100.0, 7, 1, SimMode::ErrorDynamics),
            &ExampleScenario::EPS0,
        )
        .unwrap();
        let gap = max_gap(&full, &err);
        ok &= full.times == err.times && gap < PATHWISE_TOL;
        details.push(format!(
            "{label}: max gap {gap:.2e} over {} records",
            full.times.len()
        ));
    }
    (ok, details.join("; "))
}

fn mean_square_tracking() -> Outcome {
    let start = Instant::now();
    let leader = LeaderDynamics::default();
    let cfg = example_cfg(
        ExampleScenario::DT,
        ExampleScenario::HORIZON,
        ExampleScenario::SEED,
        ExampleScenario::RECORD_STRIDE,
        SimMode::FullSystem,
    );
    let sys = example_system(
        ExampleScenario::SIGMA,
        ExampleScenario::h(),
        ExampleScenario::g(),
    );
    let report =
        protocol::check_assumptions(&sys, ExampleScenario::HORIZON, DEFAULT_RATIO_GRID).unwrap();
    let res = single_threaded(|| {
        sde::monte_carlo(
            &sys,
            &leader,
            &cfg,
            &ExampleScenario::EPS0,
            ExampleScenario::RUNS,
        )
        .unwrap()
    });
    let cmp = sde::compare_envelope(&res, &sys, report.rho, &ExampleScenario::EPS0).unwrap();
    let ms0 = res.ms_error[0];
    let ms_end = *res.ms_error.last().unwrap();
    let hand: f64 = ExampleScenario::EPS0.iter().map(|x| x * x).sum();

    let fast_h = GainSchedule::power_law(5.0, 1.0, 1.0).unwrap();
    let fast_g = GainSchedule::power_law(5.0 / 6.0, 1.0, 1.0).unwrap();
    let fast = example_system(ExampleScenario::SIGMA, fast_h, fast_g);
    let fast_report =
        protocol::check_assumptions(&fast, ExampleScenario::HORIZON, DEFAULT_RATIO_GRID).unwrap();
    let fast_res = single_threaded(|| {
        sde::monte_carlo(
            &fast,
            &leader,
            &cfg,
            &ExampleScenario::EPS0,
            ExampleScenario::RUNS,
        )
        .unwrap()
    });
    let fast_end = *fast_res.ms_error.last().unwrap();
    let elapsed = start.elapsed();

    let a = (ms0 - hand).abs() < 1e-12 && ms_end < ms0;
    let b = cmp.violations == 0;
    let c = fast_report.all_hold() && fast_end < FAST_GAIN_FRACTION * ms0;
    let ok = a && b && c && elapsed < Duration::from_secs(120);
    (
        ok,
        format!(
            "(a) ms_error(200) = {:.4} < ms_error(0) = {} [{a}]; (b) {} envelope violations [{b}]; \
             (c) fast gain ms_error(200) = {:.4} < {:.4} [{c}]; {:?} single-threaded",
            ms_end,
            ms0,
            cmp.violations,
            fast_end,
            FAST_GAIN_FRACTION * ms0,
            elapsed
        ),
    )
}

fn order_one_convergence() -> Outcome {
    let sys = example_system(0.0, ExampleScenario::h(), ExampleScenario::g());
    let leader = LeaderDynamics::default();
    let horizon = ExampleScenario::HORIZON;
    let record_every = 1.0;
    let run = |dt: f64| {
        let stride = (record_every / dt).round() as usize;
        sde::simulate(
            &sys,
            &leader,
            &example_cfg(dt, horizon, 1, stride, SimMode::FullSystem),
            &ExampleScenario::EPS0,
        )
        .unwrap()
    };
    let dts = [0.04, 0.02, 0.01];
    let reference = run(dts[2] / 8.0);
    let errors: Vec<f64> = dts
        .iter()
        .map(|&dt| max_gap(&run(dt), &reference))
        .collect();
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = dts
        .iter()
        .zip(&errors)
        .map(|(d, e)| (d.ln(), e.ln()))
        .unzip();
    let mx = lx.iter().sum::<f64>() / 3.0;
    let my = ly.iter().sum::<f64>() / 3.0;
    let slope = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let inside = |p: f64| p >= ORDER_RANGE.0 && p <= ORDER_RANGE.1;
    let ok = inside(slope) && orders.iter().all(|&p| inside(p));
    let errors: Vec<String> = errors.iter().map(|e| format!("{e:.3e}")).collect();
    (
        ok,
        format!(
            "errors [{}], pairwise orders {orders:.3?}, fitted order {slope:.3}",
            errors.join(", ")
        ),
    )
}

fn gain_classification() -> Outcome {
    let expected = [
        (0.4, true, false),
        (0.5, true, false),
        (0.75, true, true),
        (1.0, true, true),
        (1.5, false, true),
    ];
    let mut ok = true;
    let mut got = Vec::new();
    for (p, a3, a4) in expected {
        let h = GainSchedule::power_law(1.0, 2.0, p).unwrap();
        let g = GainSchedule::power_law(1.0 / 6.0, 2.0, p).unwrap();
        let report =
            protocol::check_assumptions(&example_system(0.1, h, g), 200.0, DEFAULT_RATIO_GRID)
                .unwrap();
        let pair = (report.a3.holds, report.a4.holds);
        ok &= pair == (a3, a4) && (h.integral_diverges(), h.square_integrable()) == pair;
        got.push(format!("p={p}: ({}, {})", pair.0 as u8, pair.1 as u8));
    }
    (ok, got.join(", "))
}

fn switching_topologies() -> Outcome {
    let gamma = 0.5;
    let h = GainSchedule::power_law(1.0, 2.0, 1.0).unwrap();
    let g = GainSchedule::power_law(1.0 / 8.0, 2.0, 1.0).unwrap();
    let set = balanced_pair(ExampleScenario::SIGMA);
    let report = switching::check_switching(
        &set,
        gamma,
        &h,
        &g,
        ExampleScenario::HORIZON,
        DEFAULT_RATIO_GRID,
    )
    .unwrap();
    let sys = SwitchedSystem::new(
        set,
        SwitchingSignal::round_robin(1.0, 2).unwrap(),
        gamma,
        h,
        g,
        DiffusionMode::Faithful,
    )
    .unwrap();
    let eps0 = ExampleScenario::EPS0;
    let cfg = example_cfg(0.01, ExampleScenario::HORIZON, 1, 10, SimMode::FullSystem);
    let res = switching::monte_carlo_switching(&sys, &LeaderDynamics::default(), &cfg, &eps0, 400)
        .unwrap();
    let cmp = switching::compare_switching_envelope(&res, &sys, report.nu, &eps0).unwrap();
    let ms_end = *res.ms_error.last().unwrap();
    let tracking = report.balanced.iter().all(|&b| b)
        && report.reachable.iter().all(|&r| r)
        && report.mu > 0.0
        && report.nu > 0.0
        && report.all_hold()
        && ms_end < res.ms_error[0]
        && cmp.violations == 0;

    let samples = sample(
        with_random_leader(balanced_digraph(6), 0.1),
        DEFINITENESS_SAMPLES,
    );
    let reachable = samples.iter().filter(|t| leader_reachable(t)).count();
    let mismatches = samples
        .iter()
        .filter(|t| {
            linalg::is_positive_definite(&graph::symmetrized_lb(t)).unwrap() != leader_reachable(t)
        })
        .count();
    let ok = tracking && mismatches == 0;
    (
        ok,
        format!(
            "mu = {:.5}, nu = {:.5}, ms_error(200) = {:.4} < {}, {} envelope violations; \
             definiteness vs reachability: {mismatches} mismatches in {DEFINITENESS_SAMPLES} samples ({reachable} reachable)",
            report.mu, report.nu, ms_end, res.ms_error[0], cmp.violations
        ),
    )
}

fn determinism() -> Outcome {
    let dir = TempDir::new().unwrap();
    let outs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let status = Command::new(env!("CARGO_BIN_EXE_leader-consensus"))
                .args(["reproduce-example", "--seed", "1", "--out"])
                .arg(&out)
                .output()
                .unwrap()
                .status;
            (out, status.code())
        })
        .collect();
    let mut names: Vec<_> = fs::read_dir(&outs[0].0)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let same = names
        .iter()
        .all(|n| fs::read(outs[0].0.join(n)).ok() == fs::read(outs[1].0.join(n)).ok());
    let csv = names
        .iter()
        .filter(|n| n.to_string_lossy().ends_with(".csv"))
        .count();
    let json = names
        .iter()
        .filter(|n| n.to_string_lossy().ends_with(".json"))
        .count();
    let ok = outs.iter().all(|(_, c)| *c == Some(0)) && same && csv >= 2 && json >= 2;
    (
        ok,
        format!(
            "exit codes {:?}, {} files ({csv} csv, {json} json) byte-identical: {same}",
            outs.iter().map(|(_, c)| *c).collect::<Vec<_>>(),
            names.len()
        ),
    )
}

fn structural_invariants() -> Outcome {
    let graphs = sample(digraph(8), LAPLACIAN_SAMPLES);
    let worst_row = graphs
        .iter()
        .map(|g| {
            let l = laplacian(g);
            l.mul_vec(&vec![1.0; g.n()])
                .into_iter()
                .map(f64::abs)
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);

    let mut worst_ptilde = 0.0_f64;
    let mut worst_itilde = 0.0_f64;
    for m in sample(positive_stable(6), LYAPUNOV_SAMPLES) {
        let sol = linalg::solve_lyapunov(&m).unwrap();
        for gamma in [0.1, 0.5, 0.9] {
            let (lo, _) = linalg::sym_eig_extremes(&gamma_coupled(&sol.p, gamma)).unwrap();
            let expect = (1.0 - gamma) * sol.lambda_min;
            worst_ptilde = worst_ptilde.max((lo - expect).abs() / expect);
            let (ilo, ihi) =
                linalg::sym_eig_extremes(&gamma_coupled(&Matrix::identity(m.rows()), gamma))
                    .unwrap();
            worst_itilde = worst_itilde
                .max((ilo - (1.0 - gamma)).abs())
                .max((ihi - (1.0 + gamma)).abs());
        }
    }
    let ok = worst_row < 1e-12 && worst_ptilde < PTILDE_REL_TOL && worst_itilde < ITILDE_TOL;
    (
        ok,
        format!(
            "max |L 1| = {worst_row:.1e} over {LAPLACIAN_SAMPLES} digraphs, P~ rel err {worst_ptilde:.1e}, \
             I~ err {worst_itilde:.1e} over {LYAPUNOV_SAMPLES}x3"
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("Lyapunov solver fidelity", lyapunov_fidelity),
        ("assumption pipeline", assumption_pipeline),
        ("pathwise equivalence", pathwise_equivalence),
        ("mean-square tracking", mean_square_tracking),
        ("order-1 convergence", order_one_convergence),
        ("gain classification", gain_classification),
        ("switching topologies", switching_topologies),
        ("determinism", determinism),
        ("structural invariants", structural_invariants),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = match panic::catch_unwind(AssertUnwindSafe(check)) {
            Ok(outcome) => outcome,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        failed += usize::from(!ok);
        println!(
            "criterion {}: {} {name}: {detail}",
            k + 1,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
