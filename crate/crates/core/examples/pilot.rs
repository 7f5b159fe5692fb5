//! Calibration runs behind the pilot-based acceptance thresholds.
//!
//! `cargo run --release -p gsgd-core --example pilot`

use gsgd_core::diagnostics::{di_shadow_distance, stationarity_measure, ShadowParams};
use gsgd_core::optimizer::{run, GsgdConfig, Method, RunRecord};
use gsgd_core::problems::{make_l1_regression, PiecewiseLinearSum, Side, SyntheticRecipe};
use gsgd_core::schedules::{EtaRule, Regime, StepsizeSchedule};

const DATA_SEEDS: [u64; 3] = [1, 2, 3];

fn planted(seed: u64) -> PiecewiseLinearSum {
    let d = SyntheticRecipe {
        samples: 20,
        dim: 5,
        noise_std: 0.0,
        seed,
    }
    .generate()
    .unwrap();
    make_l1_regression(&d.a, &d.b, Side::Plus).unwrap()
}

fn heavy_ball(
    problem: &PiecewiseLinearSum,
    regime: Regime,
    eta0: f64,
    horizon: usize,
    seed: u64,
    probe_period: usize,
) -> RunRecord {
    let schedule = StepsizeSchedule::new(regime, EtaRule::Power { eta0, p: 0.5 }).unwrap();
    let mut cfg = GsgdConfig::new(Method::HeavyBall, schedule, horizon);
    cfg.seed = seed;
    cfg.probe_period = probe_period;
    cfg.record_trajectory = probe_period == 0;
    run(problem, &cfg).unwrap()
}

fn tail_std(rec: &RunRecord, len: usize) -> f64 {
    let tail: Vec<f64> = rec.rows[rec.rows.len() - len..]
        .iter()
        .map(|r| r.f)
        .collect();
    let mean = tail.iter().sum::<f64>() / len as f64;
    (tail.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / len as f64).sqrt()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn convergence() {
    println!("terminal stationarity by kink radius, K = 1e5, eta0 = 0.05");
    for data in DATA_SEEDS {
        let problem = planted(data);
        for regime in [Regime::Single { tau: 1.0 }, Regime::Two] {
            for seed in [7, 8, 9] {
                let rec = heavy_ball(&problem, regime, 0.05, 100_000, seed, 0);
                let st: Vec<String> = [0.0, 1e-4, 3e-4, 1e-3, 3e-3]
                    .iter()
                    .map(|&r| {
                        format!(
                            "{:.3}",
                            stationarity_measure(&problem, &rec.final_x, r)
                                .unwrap()
                                .value
                        )
                    })
                    .collect();
                println!(
                    "  data {data} {regime:?} seed {seed}: radii 0/1e-4/3e-4/1e-3/3e-3 -> {}  tail std {:.2e}",
                    st.join(" "),
                    tail_std(&rec, 10_000)
                );
            }
        }
    }
}

fn momentum_gap() {
    println!("median momentum gap per decade of k, two-timescale, probe every step");
    for data in DATA_SEEDS {
        let rec = heavy_ball(&planted(data), Regime::Two, 0.05, 100_000, 7, 1);
        let mut line = format!("  data {data}:");
        let mut lo = 1;
        while lo < 100_000 {
            let hi = (lo * 10).min(100_001);
            let gaps: Vec<f64> = rec
                .probes
                .iter()
                .filter(|p| p.k >= lo && p.k < hi)
                .filter_map(|p| p.momentum_gap)
                .collect();
            line += &format!(" [{lo}, {hi}) {:.3}", median(gaps));
            lo *= 10;
        }
        println!("{line}");
    }
}

fn shadowing() {
    println!("shadow distance over T = 1 at eta0 = 0.04 / 0.02 / 0.01, euler step 2e-6");
    for data in DATA_SEEDS {
        let problem = planted(data);
        for regime in [Regime::Two, Regime::Single { tau: 1.0 }] {
            for seed in [7, 8] {
                let mut out = Vec::new();
                for eta0 in [0.04, 0.02, 0.01] {
                    let schedule =
                        StepsizeSchedule::new(regime, EtaRule::Power { eta0, p: 0.5 }).unwrap();
                    let (mut horizon, mut t) = (0, 0.0);
                    while t < 4.0 {
                        t += schedule.eta(horizon);
                        horizon += 1;
                    }
                    let rec = heavy_ball(&problem, regime, eta0, horizon, seed, 0);
                    let etas = (0..horizon).map(|k| schedule.eta(k)).collect();
                    let params = ShadowParams {
                        window: 1.0,
                        euler_step: 2e-6,
                        alpha: 0.0,
                        probes: 5,
                    };
                    out.push(
                        di_shadow_distance(&problem, rec.trajectory.unwrap(), etas, params)
                            .unwrap(),
                    );
                }
                let monotone = out.windows(2).all(|w| w[1] <= w[0]);
                println!("  data {data} {regime:?} seed {seed}: {out:.4?} monotone {monotone}");
            }
        }
    }
}

fn main() {
    convergence();
    momentum_gap();
    shadowing();
}
