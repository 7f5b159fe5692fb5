//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero on any failure.
//!
//! Thresholds that are not exact identities were calibrated with pilot runs; the pilot
//! numbers are listed next to each check and reproduced by `cargo run --release --example pilot`.

use std::path::Path;
use std::time::{Duration, Instant};

use gsgd_cli::commands::{counterexample, run_experiment};
use gsgd_cli::ExperimentConfig;
use gsgd_core::diagnostics::{
    di_shadow_distance, min_norm_in_hull, ShadowParams, DEFAULT_MIN_NORM_TOL,
};
use gsgd_core::fields::{PhiChoice, TiePolicy};
use gsgd_core::linalg::{dist, norm};
use gsgd_core::optimizer::{
    average_momentum, framework_momentum, run, step_framework, step_heavy_ball, GsgdConfig, Method,
    NoiseModel, StepSizes,
};
use gsgd_core::problems::{
    make_l1_regression, FiniteSumProblem, HullDescription, PiecewiseLinearSum, Side,
    SyntheticRecipe,
};
use gsgd_core::schedules::{geometric_weight_identity_check, EtaRule, Regime, StepsizeSchedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn configs_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn planted_problem() -> PiecewiseLinearSum {
    let data = SyntheticRecipe {
        samples: 20,
        dim: 5,
        noise_std: 0.0,
        seed: 1,
    }
    .generate()
    .unwrap();
    make_l1_regression(&data.a, &data.b, Side::Plus).unwrap()
}

fn two_timescale(eta0: f64) -> StepsizeSchedule {
    StepsizeSchedule::new(Regime::Two, EtaRule::Power { eta0, p: 0.5 }).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn counterexample_reproduction() -> Outcome {
    let start = Instant::now();
    let r = counterexample(0.2, 0.3, 10_000).unwrap();
    let elapsed = start.elapsed();
    let pass = r.max_diagonal_gap == 0.0
        && r.max_abs_u <= 1.0
        && r.terminal_stationarity >= 0.4
        && r.distance_to_minimizer >= 20.0
        && elapsed < Duration::from_secs(5);
    outcome(
        pass,
        format!(
            "max|u-v| = {:e}, max|u| = {:.3}, stationarity = {:.4}, dist to (-10,20) = {:.3}, {:.2?}",
            r.max_diagonal_gap, r.max_abs_u, r.terminal_stationarity, r.distance_to_minimizer, elapsed
        ),
    )
}

// pilot (data seed 1, run seeds 7..9): stationarity at radius 1e-3 was 0 for every run,
// tail std of f between 9e-5 and 3.2e-4
fn heavy_ball_convergence() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for file in ["heavy_ball_single.json", "heavy_ball_two.json"] {
        let cfg = ExperimentConfig::load(&configs_dir().join(file)).unwrap();
        let start = Instant::now();
        let exp = run_experiment(&cfg).unwrap();
        let elapsed = start.elapsed();
        let tail: Vec<f64> = exp.record.rows[exp.record.rows.len() - 10_000..]
            .iter()
            .map(|r| r.f)
            .collect();
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        let std = (tail.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / tail.len() as f64).sqrt();
        let st = exp.summary.final_stationarity;
        pass &=
            st < 0.1 && std < 1e-2 && !exp.summary.diverged && elapsed < Duration::from_secs(60);
        parts.push(format!(
            "{}: stationarity {:.3e}, tail std {:.2e}, {:.2?}",
            file.trim_end_matches(".json"),
            st,
            std,
            elapsed
        ));
    }
    outcome(pass, parts.join("; "))
}

/// `sum_{i=0}^{l} w_i` with weights built by the recursion `P_i = P_{i-1} (1 - theta_{k-i})`.
fn identity_by_recursion(thetas: &[f64], k: usize, l: usize) -> (f64, f64) {
    let mut tail = 1.0 - thetas[k];
    let mut lhs = thetas[k];
    for i in 0..=l {
        lhs += thetas[k - i - 1] * tail;
        tail *= 1.0 - thetas[k - i - 1];
    }
    (lhs, 1.0 - tail)
}

fn geometric_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut worst_oracle = 0.0f64;
    let mut checks = 0usize;
    for _ in 0..1000 {
        // slot 0 holds theta_{-1}, so k <= 100 with l = k stays in range
        let thetas: Vec<f64> = (0..102)
            .map(|_| rng.random_range(f64::EPSILON..1.0))
            .collect();
        for k in 0..=100 {
            for l in 0..=k {
                let (lhs, rhs) = geometric_weight_identity_check(&thetas, k + 1, l).unwrap();
                let (ol, or) = identity_by_recursion(&thetas, k + 1, l);
                worst = worst.max((lhs - rhs).abs());
                worst_oracle = worst_oracle.max((lhs - ol).abs()).max((rhs - or).abs());
                checks += 1;
            }
        }
    }
    outcome(
        worst <= 1e-12 && worst_oracle <= 1e-12,
        format!("{checks} (k, l) pairs, max |lhs - rhs| = {worst:.2e}, max deviation from recursion = {worst_oracle:.2e}"),
    )
}

/// Smallest norm over the simplex by pattern search on a halving grid of weights.
fn grid_min_norm(vs: &[Vec<f64>], finest: f64) -> f64 {
    let m = vs.len();
    let point = |w: &[f64]| -> f64 {
        let mut p = vec![0.0; vs[0].len()];
        for (wi, v) in w.iter().zip(vs) {
            for (pj, vj) in p.iter_mut().zip(v) {
                *pj += wi * vj;
            }
        }
        norm(&p)
    };
    // coarse full grid with spacing 1/8
    let parts = 8usize;
    let mut best_w = vec![0.0; m];
    let mut best = f64::INFINITY;
    let mut counts = vec![0usize; m];
    loop {
        if counts.iter().sum::<usize>() == parts {
            let w: Vec<f64> = counts.iter().map(|&c| c as f64 / parts as f64).collect();
            let v = point(&w);
            if v < best {
                best = v;
                best_w = w;
            }
        }
        let mut i = 0;
        while i < m {
            counts[i] += 1;
            if counts.iter().sum::<usize>() <= parts {
                break;
            }
            counts[i] = 0;
            i += 1;
        }
        if i == m {
            break;
        }
    }
    // refine: move mass between pairs of vertices until no move helps, then halve the step
    let mut h = 1.0 / parts as f64;
    while h >= finest {
        let mut improved = true;
        while improved {
            improved = false;
            for i in 0..m {
                for j in 0..m {
                    if i == j {
                        continue;
                    }
                    for mult in [1.0, 2.0, 4.0] {
                        let s = (h * mult).min(best_w[j]);
                        if s <= 0.0 {
                            continue;
                        }
                        let mut w = best_w.clone();
                        w[i] += s;
                        w[j] -= s;
                        let v = point(&w);
                        if v < best - 1e-15 {
                            best = v;
                            best_w = w;
                            improved = true;
                        }
                    }
                }
            }
        }
        h /= 2.0;
    }
    best
}

/// Exact projection of 0: the best affine minimizer over vertex subsets with non-negative weights.
fn exact_min_norm(vs: &[Vec<f64>]) -> f64 {
    let m = vs.len();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << m) {
        let idx: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        if let Some(w) = affine_weights(vs, &idx) {
            if w.iter().all(|&x| x >= -1e-12) {
                let mut p = vec![0.0; vs[0].len()];
                for (wi, &i) in w.iter().zip(&idx) {
                    for (pj, vj) in p.iter_mut().zip(&vs[i]) {
                        *pj += wi * vj;
                    }
                }
                best = best.min(norm(&p));
            }
        }
    }
    best
}

/// Weights of the point of minimal norm on the affine hull of `vs[idx]`, via the KKT system.
fn affine_weights(vs: &[Vec<f64>], idx: &[usize]) -> Option<Vec<f64>> {
    let k = idx.len();
    let size = k + 1;
    let mut a = vec![vec![0.0; size + 1]; size];
    for r in 0..k {
        for c in 0..k {
            a[r][c] = vs[idx[r]].iter().zip(&vs[idx[c]]).map(|(x, y)| x * y).sum();
        }
        a[r][k] = 1.0;
        a[k][r] = 1.0;
    }
    a[k][size] = 1.0;
    // Gaussian elimination with partial pivoting
    for col in 0..size {
        let piv = (col..size).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        for r in 0..size {
            if r != col {
                let f = a[r][col] / a[col][col];
                let pivot_row = a[col].clone();
                for (x, p) in a[r][col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * p;
                }
            }
        }
    }
    Some((0..k).map(|r| a[r][size] / a[r][r]).collect())
}

/// 0 is in the hull iff some simplex of `n + 1` vertices has non-negative barycentric coordinates.
fn contains_origin(vs: &[Vec<f64>]) -> bool {
    let n = vs[0].len();
    let m = vs.len();
    if m < n + 1 {
        return false;
    }
    (0u32..(1 << m))
        .filter(|mask| mask.count_ones() as usize == n + 1)
        .any(|mask| {
            let idx: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
            match affine_weights(vs, &idx) {
                Some(w) => {
                    let p: Vec<f64> = (0..n)
                        .map(|d| w.iter().zip(&idx).map(|(wi, &i)| wi * vs[i][d]).sum())
                        .collect();
                    norm(&p) < 1e-9 && w.iter().all(|&x| x >= 0.0)
                }
                None => false,
            }
        })
}

fn segment_min_norm(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
    let dd: f64 = d.iter().map(|x| x * x).sum();
    let t = if dd == 0.0 {
        0.0
    } else {
        (-a.iter().zip(&d).map(|(x, y)| x * y).sum::<f64>() / dd).clamp(0.0, 1.0)
    };
    norm(&a.iter().zip(&d).map(|(x, y)| x + t * y).collect::<Vec<_>>())
}

fn min_norm_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut grid_err, mut exact_err, mut seg_err) = (0.0f64, 0.0f64, 0.0f64);
    let (mut verdict_mismatch, mut with_zero, mut pairs) = (0usize, 0usize, 0usize);
    for _ in 0..500 {
        let n = rng.random_range(1..=3usize);
        let m = rng.random_range(1..=5usize);
        let center: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let vs: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                center
                    .iter()
                    .map(|c| c + rng.random_range(-1.5..1.5))
                    .collect()
            })
            .collect();
        let wolfe = min_norm_in_hull(
            &HullDescription::new(vs.clone()).unwrap(),
            DEFAULT_MIN_NORM_TOL,
        )
        .unwrap();
        grid_err = grid_err.max((wolfe.norm - grid_min_norm(&vs, 1e-4)).abs());
        exact_err = exact_err.max((wolfe.norm - exact_min_norm(&vs)).abs());
        if m == 2 {
            pairs += 1;
            seg_err = seg_err.max((wolfe.norm - segment_min_norm(&vs[0], &vs[1])).abs());
        }
        let truth = contains_origin(&vs);
        with_zero += truth as usize;
        if truth != wolfe.contains_zero {
            verdict_mismatch += 1;
        }
    }
    outcome(
        grid_err <= 2e-3 && seg_err <= 1e-9 && verdict_mismatch == 0,
        format!(
            "max |wolfe - grid| = {grid_err:.2e}, max |wolfe - subset enumeration| = {exact_err:.2e}, \
             {pairs} segments max err {seg_err:.2e}, {with_zero} sets contain 0, {verdict_mismatch} verdict mismatches"
        ),
    )
}

fn lion_signsgd_equivalence() -> Outcome {
    let problem = planted_problem();
    let trajectory = |method| {
        let mut cfg = GsgdConfig::new(method, two_timescale(0.02), 10_000);
        cfg.seed = 11;
        cfg.tie = TiePolicy::SeededRandom;
        cfg.probe_period = 0;
        cfg.record_trajectory = true;
        run(&problem, &cfg).unwrap().trajectory.unwrap()
    };
    let (lion, sign) = (trajectory(Method::Lion), trajectory(Method::SignSgd));
    let differing = lion
        .iter()
        .zip(&sign)
        .filter(|(a, b)| {
            a.iter()
                .zip(b.iter())
                .any(|(x, y)| x.to_bits() != y.to_bits())
        })
        .count();
    outcome(
        differing == 0 && lion.len() == 10_001,
        format!(
            "{} iterates compared, {differing} differ in any bit",
            lion.len()
        ),
    )
}

// pilot (data seeds 1..3, probe every step): decade medians fell from 0.66..0.99 on [1, 10)
// to exactly 0 on [10^4, 10^5]
fn momentum_tracking() -> Outcome {
    let mut cfg = ExperimentConfig::load(&configs_dir().join("heavy_ball_two.json")).unwrap();
    cfg.output.probe_period = 1;
    let exp = run_experiment(&cfg).unwrap();
    let horizon = cfg.method.horizon;
    let gaps = |lo: usize, hi: usize| -> Vec<f64> {
        exp.record
            .probes
            .iter()
            .filter(|p| p.k >= lo && p.k <= hi)
            .filter_map(|p| p.momentum_gap)
            .collect()
    };
    let first = median(gaps(1, 9));
    let last = median(gaps(horizon / 10, horizon));
    outcome(
        first > 0.0 && last < 0.25 * first,
        format!(
            "median gap on k in [1, 10) = {first:.4}, on k in [{}, {horizon}] = {last:.4}",
            horizon / 10
        ),
    )
}

// pilot (data seeds 1..3, run seeds 7, 8): monotone in 5 of 6 cases; seed pair (2, 8) was not
fn di_shadowing() -> Outcome {
    let start = Instant::now();
    let problem = planted_problem();
    let mut distances = Vec::new();
    for eta0 in [0.04, 0.02, 0.01] {
        let schedule = two_timescale(eta0);
        // enough steps for the second half of the run to hold a unit window
        let mut horizon = 0;
        let mut t = 0.0;
        while t < 4.0 {
            t += schedule.eta(horizon);
            horizon += 1;
        }
        let mut cfg = GsgdConfig::new(Method::HeavyBall, schedule, horizon);
        cfg.seed = 7;
        cfg.probe_period = 0;
        cfg.record_trajectory = true;
        let record = run(&problem, &cfg).unwrap();
        let etas: Vec<f64> = (0..horizon).map(|k| schedule.eta(k)).collect();
        let params = ShadowParams {
            window: 1.0,
            euler_step: 2e-6,
            alpha: 0.0,
            probes: 5,
        };
        distances
            .push(di_shadow_distance(&problem, record.trajectory.unwrap(), etas, params).unwrap());
    }
    let elapsed = start.elapsed();
    let monotone = distances.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        monotone && elapsed < Duration::from_secs(120),
        format!(
            "distances at eta0 = 0.04, 0.02, 0.01: {}, {elapsed:.2?}",
            distances
                .iter()
                .map(|d| format!("{d:.4e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn invariant_suites() -> Outcome {
    let problem = planted_problem();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failures = Vec::new();

    // momentum stays within the largest sample seen
    for method in [
        Method::HeavyBall,
        Method::SignSgd,
        Method::Lion,
        Method::Normalized,
        Method::Clipped,
    ] {
        let mut cfg = GsgdConfig::new(method, two_timescale(0.05), 5_000);
        cfg.clip = Some(0.5);
        cfg.noise = NoiseModel::Uniform { bound: 0.3 };
        cfg.probe_period = 0;
        let rec = run(&problem, &cfg).unwrap();
        if rec.momentum_bound_violations != 0 {
            failures.push(format!(
                "{method:?} momentum bound violated {} times",
                rec.momentum_bound_violations
            ));
        }
    }

    // selections lie in the hull, also exactly on kinks
    let mut worst_membership = 0.0f64;
    for trial in 0..200 {
        let mut x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        if trial % 2 == 0 {
            // put x on the kink of one or two terms
            for term in 0..=(trial % 4 / 2) {
                let comp = &problem.components()[(trial + term * 7) % 20][0];
                let r = comp.a.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>() - comp.b;
                let aa: f64 = comp.a.iter().map(|a| a * a).sum();
                for (xj, aj) in x.iter_mut().zip(&comp.a) {
                    *xj -= r / aa * aj;
                }
            }
        }
        let hull = problem.hull_at(&x).unwrap();
        let d =
            gsgd_core::diagnostics::distance_to(&hull, &problem.full_selection(&x), 1e-12).unwrap();
        worst_membership = worst_membership.max(d);
    }
    if worst_membership > 1e-9 {
        failures.push(format!("selection outside hull by {worst_membership:.2e}"));
    }

    // central differences match selections away from kinks
    let mut worst_fd = 0.0f64;
    let h = 1e-6;
    let mut tested = 0;
    while tested < 200 {
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        if problem.kink_distance(&x) < 1e-3 {
            continue;
        }
        tested += 1;
        let g = problem.full_selection(&x);
        for j in 0..5 {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += h;
            xm[j] -= h;
            let fd = (problem.full_objective(&xp) - problem.full_objective(&xm)) / (2.0 * h);
            worst_fd = worst_fd.max((fd - g[j]).abs());
        }
    }
    if worst_fd > 1e-5 {
        failures.push(format!("finite differences off by {worst_fd:.2e}"));
    }

    // the framework step with phi = |m|^2/2 is the heavy-ball step; averaging equals subtraction
    let mut worst_momentum = 0.0f64;
    let mut step_mismatch = 0;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let m: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let g: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s = StepSizes {
            eta: rng.random_range(0.0..0.5),
            theta: rng.random_range(0.0..1.0),
            lion_tau: 0.0,
        };
        let alpha = rng.random_range(0.0..2.0);
        let (mut x1, mut m1) = (x.clone(), m.clone());
        step_heavy_ball(&mut x1, &mut m1, &g, s, alpha);
        let (mut x2, mut m2) = (x.clone(), m.clone());
        step_framework(
            &PhiChoice::HalfSquare,
            &mut x2,
            &mut m2,
            &g,
            s,
            alpha,
            TiePolicy::Zero,
            &mut rng,
        )
        .unwrap();
        if x1 != x2 || m1 != m2 {
            step_mismatch += 1;
        }
        let mut avg = m.clone();
        average_momentum(&mut avg, &g, s.theta);
        worst_momentum = worst_momentum.max(dist(&avg, &framework_momentum(&m, &g, s.theta)));
    }
    if step_mismatch > 0 || worst_momentum > 1e-14 {
        failures.push(format!(
            "{step_mismatch} framework mismatches, momentum forms differ by {worst_momentum:.2e}"
        ));
    }

    // same seed, same run
    let mut cfg = GsgdConfig::new(Method::Lion, two_timescale(0.05), 2_000);
    cfg.tie = TiePolicy::SeededRandom;
    cfg.noise = NoiseModel::Uniform { bound: 0.2 };
    cfg.seed = 3;
    let (a, b) = (run(&problem, &cfg).unwrap(), run(&problem, &cfg).unwrap());
    if a.rows != b.rows || a.final_x != b.final_x || a.final_m != b.final_m {
        failures.push("repeated run differs".into());
    }

    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "momentum bound, hull membership (max {worst_membership:.1e}), finite differences (max {worst_fd:.1e}), \
                 framework equivalence, determinism"
            )
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("counterexample reproduction", counterexample_reproduction),
        ("heavy-ball convergence", heavy_ball_convergence),
        ("geometric-weight identity", geometric_identity),
        ("min-norm oracle equivalence", min_norm_equivalence),
        ("lion/signsgd equivalence", lion_signsgd_equivalence),
        ("momentum tracking", momentum_tracking),
        ("differential-inclusion shadowing", di_shadowing),
        ("invariant suites", invariant_suites),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        println!(
            "{} [{}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
        failed += !o.pass as usize;
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
