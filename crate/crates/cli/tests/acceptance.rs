//! End-to-end acceptance run on the reference model (c = 1, c_h = 1,
//! c_p = 3, q = 0.7, uniform(0, 1) demand, x0 = 0).
//!
//! Prints one line per criterion. Two criteria cannot hold for this model
//! and are listed in `KNOWN_FAILURES`, each with a check that the shortfall
//! is the one we expect. The process fails on any other failure, and also
//! when a known failure unexpectedly passes.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use invlab_core::demand::DemandModel;
use invlab_core::diagnostics::{
    clt_test, default_probes, ergodicity_report, hoeffding_check, martingale_summary, stochastic_order_compare,
    variance_growth, Verdict,
};
use invlab_core::rng::horizon_seed;
use invlab_core::solver::{principal_level_bound, structure_report};
use invlab_core::*;
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

/// Criteria expected to fail, with the reason shown next to the FAIL line.
const KNOWN_FAILURES: &[(u32, &str)] = &[
    (2, "levels settle near 0.898, the stationary optimum with delays, above the 0.75 quantile"),
    (7, "cost skewness at n = 200 is a real effect of order 1/sqrt(n), not sampling noise"),
];

const SEED: u64 = 20_240_601;

struct Verdicts {
    unexpected: Vec<u32>,
}

impl Verdicts {
    fn record(&mut self, id: u32, title: &str, pass: bool, elapsed: Duration, detail: String) {
        let known = KNOWN_FAILURES.iter().find(|k| k.0 == id);
        let flag = if pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {flag} {title} [{:.2} s]: {detail}", elapsed.as_secs_f64());
        match (pass, known) {
            (false, Some((_, why))) => println!("             known: {why}"),
            (false, None) => self.unexpected.push(id),
            (true, Some(_)) => {
                println!("             listed as a known failure but passed");
                self.unexpected.push(id);
            }
            (true, None) => {}
        }
    }
}

fn reference(n: usize) -> ModelParams {
    ModelParams::new(1.0, 1.0, 3.0, 0.7, n, 0.0).unwrap()
}

fn uniform() -> DemandModel {
    make_demand(&DemandSpec::uniform(0.0, 1.0), 512).unwrap()
}

/// Carrying cost written out again so the oracles share nothing with the crate.
fn carry(z: f64) -> f64 {
    if z >= 0.0 {
        z
    } else {
        -3.0 * z
    }
}

fn criterion_1(v: &mut Verdicts) {
    let start = Instant::now();
    let p = reference(2);
    let demand = DemandModel::coarse(DemandSpec::uniform(0.0, 1.0), 16).unwrap();
    let sol = solve(&p, &demand).unwrap();
    // Every (Y, D) outcome over two periods under the extracted policy.
    let target = |k: usize, x: f64| sol.policy.rule(k).target(x);
    let branches = [(true, 0.7), (false, 0.3)];
    let mut tree = 0.0;
    let y1 = target(2, 0.0);
    for &(del1, p1) in &branches {
        for &(d1, w1) in demand.nodes() {
            let cost1 = (y1 - 0.0) + if del1 { carry(y1 - d1) } else { carry(0.0 - d1) };
            let x2 = y1 - d1;
            let y2 = target(1, x2);
            for &(del2, p2) in &branches {
                for &(d2, w2) in demand.nodes() {
                    let cost2 = (y2 - x2) + if del2 { carry(y2 - d2) } else { carry(x2 - d2) };
                    tree += p1 * w1 * p2 * w2 * (cost1 + cost2);
                }
            }
        }
    }
    let rel = (sol.expected_cost - tree).abs() / tree;
    let t = start.elapsed();
    v.record(
        1,
        "solver matches outcome-tree enumeration",
        rel <= 1e-3 && t < Duration::from_secs(1),
        t,
        format!("v_2(0) = {:.6}, tree = {tree:.6}, relative gap {rel:.2e}", sol.expected_cost),
    );
}

fn criterion_2(v: &mut Verdicts) {
    let start = Instant::now();
    let p = reference(50);
    let d = uniform();
    let sol = solve(&p, &d).unwrap();
    let t = start.elapsed();
    let h = sol.values.grid.step;
    let n0 = compute_n0(&p);
    let active: Vec<(usize, f64)> = sol.policy.active_levels().collect();

    let mut worst_rule = 0.0f64;
    for &(k, s) in &active {
        for (i, x) in sol.values.grid.abscissae().enumerate() {
            worst_rule = worst_rule.max((sol.minimizers[k - 1][i] - x.max(s)).abs());
        }
    }
    let worst_drop = active.windows(2).map(|w| w[0].1 - w[1].1).fold(0.0f64, f64::max);
    let lower = principal_level_bound(&p, &d, n0);
    let min_principal = active.iter().filter(|a| a.0 >= n0 + 2).map(|a| a.1).fold(f64::INFINITY, f64::min);
    let max_level = active.iter().map(|a| a.1).fold(f64::NEG_INFINITY, f64::max);
    let upper = 0.75;

    let structure = worst_rule <= 2.0 * h && worst_drop <= 2.0 * h && min_principal >= lower - 2.0 * h;
    let upper_ok = max_level <= upper + 2.0 * h;
    let report = structure_report(&sol, &d);
    assert_eq!(report.base_stock.pass && report.monotone.pass && report.bounds.lower_pass, structure);

    // The upper bound fails for a known reason: long-run levels solve
    // q (4s - 3) + (1 - q)(2s^2 - 3) = 0 once orders can slip a period.
    let root = (-2.8 + (2.8f64 * 2.8 + 4.0 * 0.6 * 3.0).sqrt()) / (2.0 * 0.6);
    let tail_matches = active.iter().filter(|a| a.0 >= 10).all(|a| (a.1 - root).abs() <= 2.0 * h);
    assert!(structure, "order-up-to structure or lower bound broke");
    assert!(tail_matches, "levels no longer settle at the stationary root {root:.5}");

    v.record(
        2,
        "base-stock structure and level bounds",
        structure && upper_ok && t < Duration::from_secs(30),
        t,
        format!(
            "rule deviation {worst_rule:.1e}, worst drop {worst_drop:.1e}, principal min {min_principal:.4} >= {lower:.4}, \
             max level {max_level:.4} vs upper {:.4} (stationary root {root:.4})",
            upper + 2.0 * h
        ),
    );
}

fn criterion_3(v: &mut Verdicts) {
    let start = Instant::now();
    let p = reference(50);
    let sol = solve(&p, &uniform()).unwrap();
    let h = sol.values.grid.step;
    let xs: Vec<f64> = sol.values.grid.abscissae().filter(|x| (-0.9..=0.0).contains(x)).collect();
    let mut worst = 0.0f64;
    for k in [20, 25, 30] {
        for &x in &xs {
            for &y in &xs {
                let gap = sol.values.value(k, x) - sol.values.value(k, y) - 1.9 * (y - x);
                worst = worst.max(gap.abs());
            }
        }
    }
    let tol = 5.0 * h * (p.c + p.c_p);
    v.record(
        3,
        "cost-to-go slope -1.9 on backlog",
        worst <= tol,
        start.elapsed(),
        format!("{} grid points, k in 20/25/30, max deviation {worst:.2e} (allowed {tol:.2e})", xs.len()),
    );
}

fn criterion_4(v: &mut Verdicts) {
    let start = Instant::now();
    let p = reference(50);
    let d = uniform();
    let sol = solve(&p, &d).unwrap();
    let batch = simulate_batch(&PolicySpec::Optimal(sol.policy.clone()), &p, &d, 1000, SEED, 1000).unwrap();
    let probes = default_probes(&sol);
    let s = martingale_summary(&sol, &d, &batch.trajectories, &probes);
    let worst_probe = s.conditional_mean.iter().map(|c| c.residual).fold(0.0f64, f64::max);
    v.record(
        4,
        "optimality martingale",
        s.pass && s.conditional_mean.len() == 20,
        start.elapsed(),
        format!(
            "telescoping {:.0e}, worst of {} conditional means {worst_probe:.2e} (allowed {:.2e}), \
             variance gap {:.4} vs 4 se {:.4}",
            s.max_telescoping_residual,
            s.conditional_mean.len(),
            s.conditional_mean_tolerance,
            (s.variance.sample_variance - s.variance.sum_mean_square_differences).abs(),
            4.0 * s.variance.combined_std_error
        ),
    );
}

fn criterion_5(v: &mut Verdicts) {
    let start = Instant::now();
    let p = reference(50);
    let d = uniform();
    let sol = solve(&p, &d).unwrap();
    let rep = ergodicity_report(&sol.policy, &d, &p).unwrap();
    let delta_ok = rep.delta_by_period.iter().all(|x| x.delta <= 0.75 + 1e-6);
    let aug_ok = rep.augmented.iter().all(|a| a.delta_z <= a.delta_x + 1e-12);
    let shifts = [0.05, 0.1, 0.3, 0.5, 0.8];
    let tri = make_demand(&DemandSpec::triangular(0.0, 0.3, 1.0), 512).unwrap();
    let bumps = make_demand(
        &DemandSpec::mixture([(0.5, DemandSpec::uniform(0.0, 0.2)), (0.5, DemandSpec::uniform(0.8, 1.0))]),
        512,
    )
    .unwrap();
    let gate = check_soft_unimodality(&d, &shifts).pass
        && check_soft_unimodality(&tri, &shifts).pass
        && !check_soft_unimodality(&bumps, &shifts).pass;
    v.record(
        5,
        "Dobrushin coefficients and unimodality gate",
        rep.kappa == 0.75 && delta_ok && aug_ok && gate,
        start.elapsed(),
        format!(
            "kappa {}, max delta {:.4} over {} periods, augmented ok {aug_ok}, gate ok {gate}",
            rep.kappa,
            rep.max_delta,
            rep.delta_by_period.len()
        ),
    );
}

fn criterion_6(v: &mut Verdicts) {
    let start = Instant::now();
    let p = reference(200);
    let d = uniform();
    let horizons = [25, 50, 100, 200];
    let sweep = horizon_sweep(PolicyFamily::Optimal, &p, &d, &horizons, 10_000, SEED, &SolverOptions::default()).unwrap();
    let views: Vec<(usize, &[f64])> = sweep.iter().map(|h| (h.horizon, h.batch.costs.as_slice())).collect();
    let fit = variance_growth(&views).unwrap();
    let t = start.elapsed();
    v.record(
        6,
        "variance grows linearly in n",
        fit.slope > 0.0 && fit.r_squared >= 0.95 && t < Duration::from_secs(300),
        t,
        format!("slope {:.4}, R^2 {:.4}", fit.slope, fit.r_squared),
    );
}

/// Skewness of total cost from a plain re-simulation with its own generator,
/// using only the solved levels.
fn oracle_skewness(levels: &[Option<f64>], n: usize, r: usize) -> f64 {
    let mut rng = StdRng::seed_from_u64(7);
    let costs: Vec<f64> = (0..r)
        .map(|_| {
            let (mut x, mut total) = (0.0f64, 0.0);
            for i in 1..=n {
                let y = levels[n - i].map_or(x, |s: f64| x.max(s));
                let d: f64 = rng.random();
                let delivered = rng.random_bool(0.7);
                total += (y - x) + if delivered { carry(y - d) } else { carry(x - d) };
                x = y - d;
            }
            total
        })
        .collect();
    let m = costs.iter().sum::<f64>() / r as f64;
    let m2 = costs.iter().map(|c| (c - m).powi(2)).sum::<f64>() / r as f64;
    let m3 = costs.iter().map(|c| (c - m).powi(3)).sum::<f64>() / r as f64;
    m3 / m2.powf(1.5)
}

fn criterion_7(v: &mut Verdicts) {
    let start = Instant::now();
    let n = 200;
    let r = 20_000;
    let p = reference(n);
    let d = uniform();
    let sol = solve(&p, &d).unwrap();
    let batch = simulate_batch(&PolicySpec::Optimal(sol.policy.clone()), &p, &d, r, horizon_seed(SEED, n), 0).unwrap();
    let clt = clt_test(&batch.costs).unwrap();
    let t = start.elapsed();

    let mut rng = StdRng::seed_from_u64(3);
    let exponential: Vec<f64> = (0..r).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let control = clt_test(&exponential).unwrap();
    assert!(control.ks >= 0.05, "exponential control ks {}", control.ks);

    // Confirm the skew independently before calling it a property of the model.
    let levels: Vec<Option<f64>> = (1..=n).map(|k| sol.policy.rule(k).level()).collect();
    let oracle = oracle_skewness(&levels, n, r);
    let se = (6.0 / r as f64).sqrt();
    assert!(oracle > 0.1 + 4.0 * se, "independent skewness {oracle:.3} no longer clearly above 0.1");
    assert!((oracle - clt.skewness).abs() <= 6.0 * se, "skewness {} vs oracle {oracle}", clt.skewness);

    v.record(
        7,
        "standardized cost is close to normal",
        clt.pass && control.ks >= 0.05 && t < Duration::from_secs(300),
        t,
        format!(
            "ks {:.4} (<= 0.02), skewness {:.3} (<= 0.1, independent {oracle:.3} +- {se:.3}), \
             excess kurtosis {:.3} (<= 0.25), exponential control ks {:.3}",
            clt.ks, clt.skewness, clt.excess_kurtosis, control.ks
        ),
    );
}

fn criterion_8(v: &mut Verdicts) {
    let start = Instant::now();
    let n = 100;
    let p = reference(n);
    let d = uniform();
    let sol = solve(&p, &d).unwrap();
    let batch = simulate_batch(&PolicySpec::Optimal(sol.policy.clone()), &p, &d, 10_000, SEED, 10_000).unwrap();
    let b_hat = martingale_summary(&sol, &d, &batch.trajectories, &[]).b_hat;
    let b = 1.25 * b_hat;
    let unit = (n as f64).sqrt() * b / 4.0;
    let table = hoeffding_check(&batch.costs, b, n, &[2.0 * unit, 4.0 * unit, 8.0 * unit]).unwrap();

    let mut rng = StdRng::seed_from_u64(11);
    let walks: Vec<f64> =
        (0..10_000).map(|_| (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).sum()).collect();
    let coin = hoeffding_check(&walks, 1.0, n, &[10.0, 20.0, 30.0]).unwrap();
    let freqs: Vec<String> = table.rows.iter().map(|r| format!("{:.4}/{:.4}", r.empirical, r.bound)).collect();
    v.record(
        8,
        "Azuma-Hoeffding tails",
        table.pass && coin.pass,
        start.elapsed(),
        format!("B = {b:.4}, empirical/bound {}, coin control {}", freqs.join(" "), coin.pass),
    );
}

fn criterion_9(v: &mut Verdicts) {
    let start = Instant::now();
    let p = reference(50);
    let d = uniform();
    let opts = SolverOptions::default();
    let costs = |family: PolicyFamily| {
        let spec = family.instantiate(&p, &d, &opts).unwrap();
        (spec.name(), simulate_batch(&spec, &p, &d, 10_000, SEED, 0).unwrap().costs)
    };
    let (_, optimal) = costs(PolicyFamily::Optimal);
    let mut details = Vec::new();
    let mut ok = true;
    for alt in [PolicyFamily::NeverOrder, PolicyFamily::FixedBaseStock { level: 0.9 }] {
        let (name, sample) = costs(alt);
        let rep = stochastic_order_compare(&optimal, &sample).unwrap();
        ok &= rep.verdict == Verdict::Consistent || rep.location.is_some();
        let at = rep.location.map_or("nowhere".to_string(), |t| format!("{t:.3}"));
        details.push(format!("{name}: {:?} V = {:.4} at {at}", rep.verdict, rep.violation));
    }
    let same = stochastic_order_compare(&optimal, &optimal).unwrap();
    let shifted: Vec<f64> = optimal.iter().map(|c| c + 1.0).collect();
    let shift = stochastic_order_compare(&optimal, &shifted).unwrap();
    let controls = [same, shift].iter().all(|r| r.violation == 0.0 && r.verdict == Verdict::Consistent);
    v.record(
        9,
        "stochastic order against simple rules",
        ok && controls,
        start.elapsed(),
        format!("{}; controls ok {controls}", details.join("; ")),
    );
}

const DETERMINISM_CONFIG: &str = r#"
schema_version = 1

[params]
c = 1.0
c_h = 1.0
c_p = 3.0
q = 0.7

[demand]
family = "uniform"
support = [0.0, 1.0]

[run]
n = 50
horizons = [25, 50, 100, 200]
replications = 2000
master_seed = 20240601
retain = 3

[compare]
alternatives = [{ kind = "never_order" }, { kind = "fixed_base_stock", level = 0.9 }, { kind = "myopic" }]
"#;

fn run_twice(tmp: &Path, command: &str) -> std::result::Result<usize, String> {
    let cfg = tmp.join("config.toml");
    std::fs::write(&cfg, DETERMINISM_CONFIG).unwrap();
    let mut outputs = Vec::new();
    for (round, workers) in [(0, "1"), (1, "4")] {
        let dir = tmp.join(format!("{command}_{round}"));
        let status = Command::new(env!("CARGO_BIN_EXE_invlab"))
            .args([command, "--workers", workers, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&dir)
            .env_remove("INVLAB_SEED")
            .output()
            .unwrap()
            .status;
        if !matches!(status.code(), Some(0 | 2)) {
            return Err(format!("{command} exited with {status}"));
        }
        outputs.push(dir);
    }
    let manifest = |d: &Path| std::fs::read(d.join("manifest.json")).unwrap();
    if manifest(&outputs[0]) != manifest(&outputs[1]) {
        return Err(format!("{command}: manifests differ"));
    }
    let listing: serde_json::Value = serde_json::from_slice(&manifest(&outputs[0])).unwrap();
    let files = listing["files"].as_array().unwrap();
    for f in files {
        let rel = f["path"].as_str().unwrap();
        if std::fs::read(outputs[0].join(rel)).unwrap() != std::fs::read(outputs[1].join(rel)).unwrap() {
            return Err(format!("{command}: {rel} differs"));
        }
    }
    Ok(files.len())
}

fn criterion_10(v: &mut Verdicts) {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let mut counts = Vec::new();
    let mut problems = Vec::new();
    for command in ["solve", "simulate", "diagnose", "clt", "compare", "report"] {
        match run_twice(tmp.path(), command) {
            Ok(k) => counts.push(format!("{command} {k}")),
            Err(e) => problems.push(e),
        }
    }
    v.record(
        10,
        "byte-identical reruns",
        problems.is_empty(),
        start.elapsed(),
        if problems.is_empty() {
            format!("files compared: {} (1 worker vs 4)", counts.join(", "))
        } else {
            problems.join("; ")
        },
    );
}

fn main() {
    let mut v = Verdicts { unexpected: Vec::new() };
    criterion_1(&mut v);
    criterion_2(&mut v);
    criterion_3(&mut v);
    criterion_4(&mut v);
    criterion_5(&mut v);
    criterion_6(&mut v);
    criterion_7(&mut v);
    criterion_8(&mut v);
    criterion_9(&mut v);
    criterion_10(&mut v);
    if !v.unexpected.is_empty() {
        eprintln!("unexpected results for criteria {:?}", v.unexpected);
        std::process::exit(1);
    }
}
