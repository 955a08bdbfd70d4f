//! The six subcommands. Each writes its files through an [`OutputDir`] under
//! a prefix, so `report` can run them side by side in one directory.

use invlab_core::demand::{check_soft_unimodality, DemandModel};
use invlab_core::diagnostics::{
    clt_test, default_probes, ergodicity_report, histogram, hoeffding_check, martingale_summary, qq_pairs,
    standardize, stochastic_order_compare, variance_growth, CltReport, DiagnosticsReport, DominanceEntry,
    HoeffdingTable, VarianceFit, kappa_bound, SHIFT_POINTS,
};
use invlab_core::persist::PolicyFile;
use invlab_core::rng::horizon_seed;
use invlab_core::sim::{costs_to_csv, horizon_sweep, simulate_batch, PolicyFamily, PolicySpec, Summary};
use invlab_core::solver::{solve_with, structure_report, PeriodRule, Solution, StructureReport};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::output::OutputDir;
use crate::CliError;

/// Histogram bins for standardized cost samples.
pub const HISTOGRAM_BINS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Simulate,
    Diagnose,
    Clt,
    Compare,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Simulate => "simulate",
            Command::Diagnose => "diagnose",
            Command::Clt => "clt",
            Command::Compare => "compare",
            Command::Report => "report",
        }
    }
}

/// Result of a run: whether every acceptance flag held, and one line per
/// check for the terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub pass: bool,
    pub lines: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            pass: true,
            lines: Vec::new(),
        }
    }

    fn check(&mut self, name: &str, pass: bool, detail: String) {
        self.pass &= pass;
        let flag = if pass { "PASS" } else { "FAIL" };
        self.lines.push(format!("{flag} {name}: {detail}"));
    }

    fn note(&mut self, text: String) {
        self.lines.push(text);
    }

    fn absorb(&mut self, other: Outcome) {
        self.pass &= other.pass;
        self.lines.extend(other.lines);
    }
}

/// Runs `command` and writes the manifest.
pub fn run(command: Command, cfg: &ExperimentConfig, mut dir: OutputDir) -> Result<Outcome, CliError> {
    let demand = cfg.demand_model();
    let out = &mut dir;
    let mut outcome = match command {
        Command::Solve => solve_cmd(cfg, &demand, out, "")?,
        Command::Simulate => simulate_cmd(cfg, &demand, out, "")?,
        Command::Diagnose => diagnose_cmd(cfg, &demand, out, "")?,
        Command::Clt => clt_cmd(cfg, &demand, out, "")?,
        Command::Compare => compare_cmd(cfg, &demand, out, "")?,
        Command::Report => report_cmd(cfg, &demand, out)?,
    };
    let manifest = dir.finish(command.name(), cfg.run.master_seed)?;
    outcome.note(format!("manifest: {}", manifest.display()));
    Ok(outcome)
}

fn solve(cfg: &ExperimentConfig, demand: &DemandModel) -> Result<Solution, CliError> {
    Ok(solve_with(&cfg.params, demand, &cfg.solver_options())?)
}

#[derive(Serialize)]
struct SolveDocument<'a> {
    expected_cost: f64,
    warnings: &'a [String],
    structure: &'a StructureReport,
}

fn solve_cmd(
    cfg: &ExperimentConfig,
    demand: &DemandModel,
    out: &mut OutputDir,
    prefix: &str,
) -> Result<Outcome, CliError> {
    let sol = solve(cfg, demand)?;
    let report = structure_report(&sol, demand);
    out.write(&format!("{prefix}policy.txt"), PolicyFile::new(&sol, demand).to_text().as_bytes())?;
    if cfg.formats.csv {
        let mut csv = String::from("k,mode,level\n");
        for (i, rule) in sol.policy.rules.iter().enumerate() {
            match rule {
                PeriodRule::Active { level } => csv.push_str(&format!("{},active,{level}\n", i + 1)),
                PeriodRule::Passive => csv.push_str(&format!("{},passive,\n", i + 1)),
            }
        }
        out.write(&format!("{prefix}levels.csv"), csv.as_bytes())?;
    }
    if cfg.formats.json {
        let doc = SolveDocument {
            expected_cost: sol.expected_cost,
            warnings: &sol.warnings,
            structure: &report,
        };
        out.write_json(&format!("{prefix}structure.json"), &doc)?;
    }

    let mut o = Outcome::new();
    o.note(format!("v_{}(x0) = {}", cfg.params.n, sol.expected_cost));
    o.check(
        "levels non-decreasing",
        report.monotone.pass,
        format!("worst drop {:.3e} (allowed {:.3e})", report.monotone.measured, report.monotone.tolerance),
    );
    o.check(
        "order-up-to structure",
        report.base_stock.pass,
        format!("max deviation {:.3e} (allowed {:.3e})", report.base_stock.measured, report.base_stock.tolerance),
    );
    o.check(
        "slope below zero",
        report.slope_identity.pass,
        format!(
            "max deviation {:.3e} (allowed {:.3e})",
            report.slope_identity.measured, report.slope_identity.tolerance
        ),
    );
    let b = &report.bounds;
    o.check(
        "principal levels above lower bound",
        b.lower_pass,
        format!("min {:?} vs bound {}", b.min_principal_level, b.lower_bound),
    );
    o.check(
        "levels below newsvendor bound",
        b.upper_pass,
        format!("max {:?} vs bound {}", b.max_level, b.upper_bound),
    );
    for w in &sol.warnings {
        o.note(format!("warning: {w}"));
    }
    Ok(o)
}

#[derive(Serialize)]
struct SimulationDocument {
    policy: String,
    horizon: usize,
    replications: usize,
    master_seed: u64,
    summary: Summary,
    expected_cost: f64,
    /// `(mean - expected_cost) / standard error`.
    mean_z: f64,
}

fn simulate_cmd(
    cfg: &ExperimentConfig,
    demand: &DemandModel,
    out: &mut OutputDir,
    prefix: &str,
) -> Result<Outcome, CliError> {
    let sol = solve(cfg, demand)?;
    let run = &cfg.run;
    let policy = PolicySpec::Optimal(sol.policy.clone());
    let batch = simulate_batch(&policy, &cfg.params, demand, run.replications, run.master_seed, run.retain)?;
    if cfg.formats.csv {
        out.write(&format!("{prefix}costs.csv"), costs_to_csv(&batch.costs).as_bytes())?;
        for (r, t) in batch.trajectories.iter().enumerate() {
            out.write(&format!("{prefix}trajectories/path_{r:05}.csv"), t.to_csv().as_bytes())?;
        }
    }
    let se = batch.summary.std_error();
    let mean_z = if se > 0.0 {
        (batch.summary.mean - sol.expected_cost) / se
    } else {
        0.0
    };
    if cfg.formats.json {
        let doc = SimulationDocument {
            policy: policy.name(),
            horizon: cfg.params.n,
            replications: run.replications,
            master_seed: run.master_seed,
            summary: batch.summary,
            expected_cost: sol.expected_cost,
            mean_z,
        };
        out.write_json(&format!("{prefix}simulation.json"), &doc)?;
    }
    let mut o = Outcome::new();
    o.note(format!(
        "mean C_{} = {} (se {se:.4}), v_{}(x0) = {}, z = {mean_z:.2}",
        cfg.params.n, batch.summary.mean, cfg.params.n, sol.expected_cost
    ));
    Ok(o)
}

/// Plot data for a cost sample: standardized histogram and QQ pairs.
fn plot_data(sample: &[f64], out: &mut OutputDir, prefix: &str) -> Result<(), CliError> {
    let Ok(z) = standardize(sample) else {
        return Ok(());
    };
    let mut hist = String::from("bin_left,bin_right,count\n");
    for b in histogram(&z, HISTOGRAM_BINS) {
        hist.push_str(&format!("{},{},{}\n", b.left, b.right, b.count));
    }
    out.write(&format!("{prefix}histogram.csv"), hist.as_bytes())?;
    let mut qq = String::from("theoretical,empirical\n");
    for (t, e) in qq_pairs(&z) {
        qq.push_str(&format!("{t},{e}\n"));
    }
    out.write(&format!("{prefix}qq.csv"), qq.as_bytes())
}

fn variance_csv(fit: &VarianceFit) -> String {
    let mut s = String::from("n,variance\n");
    for p in &fit.points {
        s.push_str(&format!("{},{}\n", p.n, p.variance));
    }
    s
}

fn alternative_costs(
    cfg: &ExperimentConfig,
    demand: &DemandModel,
    family: PolicyFamily,
) -> Result<(String, Vec<f64>), CliError> {
    let spec = family.instantiate(&cfg.params, demand, &cfg.solver_options())?;
    let batch = simulate_batch(&spec, &cfg.params, demand, cfg.run.replications, cfg.run.master_seed, 0)?;
    Ok((spec.name(), batch.costs))
}

fn dominance(
    cfg: &ExperimentConfig,
    demand: &DemandModel,
    optimal: &[f64],
) -> Result<(Vec<DominanceEntry>, Vec<(String, Vec<f64>)>), CliError> {
    let mut entries = Vec::new();
    let mut samples = Vec::new();
    for &family in &cfg.alternatives {
        let (name, costs) = alternative_costs(cfg, demand, family)?;
        entries.push(DominanceEntry {
            candidate: "optimal".into(),
            alternative: name.clone(),
            report: stochastic_order_compare(optimal, &costs)?,
        });
        samples.push((name, costs));
    }
    Ok((entries, samples))
}

fn variance_sweep(cfg: &ExperimentConfig, demand: &DemandModel) -> Result<Option<VarianceFit>, CliError> {
    let run = &cfg.run;
    if run.horizons.len() < 3 {
        return Ok(None);
    }
    let sweep = horizon_sweep(
        PolicyFamily::Optimal,
        &cfg.params,
        demand,
        &run.horizons,
        run.replications,
        run.master_seed,
        &cfg.solver_options(),
    )?;
    let views: Vec<(usize, &[f64])> = sweep.iter().map(|h| (h.horizon, h.batch.costs.as_slice())).collect();
    Ok(Some(variance_growth(&views)?))
}

fn diagnose_cmd(
    cfg: &ExperimentConfig,
    demand: &DemandModel,
    out: &mut OutputDir,
    prefix: &str,
) -> Result<Outcome, CliError> {
    let sol = solve(cfg, demand)?;
    let p = &cfg.params;
    let n = p.n;
    let run = &cfg.run;

    let lowest = sol.policy.active_levels().map(|l| l.1).fold(f64::INFINITY, f64::min);
    let span = if lowest.is_finite() {
        (sol.policy.state_hi - lowest).max(0.0)
    } else {
        0.0
    };
    let shifts: Vec<f64> = (1..SHIFT_POINTS)
        .map(|j| span * j as f64 / (SHIFT_POINTS - 1) as f64)
        .collect();
    let soft_unimodality = check_soft_unimodality(demand, &shifts);
    let (ergodicity, ergodicity_refused) = if soft_unimodality.pass {
        (Some(ergodicity_report(&sol.policy, demand, p)?), None)
    } else {
        (None, Some("demand density is not softly unimodal on the shift grid".to_string()))
    };

    let policy = PolicySpec::Optimal(sol.policy.clone());
    let batch = simulate_batch(&policy, p, demand, run.replications, run.master_seed, run.replications)?;
    let martingale = martingale_summary(&sol, demand, &batch.trajectories, &default_probes(&sol));
    let ks: Option<CltReport> = clt_test(&batch.costs).ok();
    let b_hat = martingale.b_hat;
    let hoeffding_table: Option<HoeffdingTable> = if b_hat > 0.0 {
        let unit = (n as f64).sqrt() * b_hat / 4.0;
        Some(hoeffding_check(&batch.costs, 1.25 * b_hat, n, &[2.0 * unit, 4.0 * unit, 8.0 * unit])?)
    } else {
        None
    };
    let fit = variance_sweep(cfg, demand)?;
    let (dominance, alt_samples) = dominance(cfg, demand, &batch.costs)?;

    let mut o = Outcome::new();
    match &ergodicity {
        Some(e) => o.check(
            "dobrushin coefficients within kappa",
            e.pass,
            format!("kappa {} max delta {:.6}", e.kappa, e.max_delta),
        ),
        None => o.check("dobrushin coefficients within kappa", false, "refused: density not softly unimodal".into()),
    }
    o.check(
        "martingale checks",
        martingale.pass,
        format!(
            "telescoping {:e}, variance gap {:.4} (4 se = {:.4})",
            martingale.max_telescoping_residual,
            (martingale.variance.sample_variance - martingale.variance.sum_mean_square_differences).abs(),
            4.0 * martingale.variance.combined_std_error
        ),
    );
    match &ks {
        Some(k) => o.check(
            "normal approximation",
            k.pass,
            format!("ks {:.4} skew {:.3} excess kurtosis {:.3}", k.ks, k.skewness, k.excess_kurtosis),
        ),
        None => o.check("normal approximation", false, "cost sample has zero variance".into()),
    }
    if let Some(h) = &hoeffding_table {
        o.check("tail bound", h.pass, format!("B = {:.4}", h.b));
    }
    if let Some(f) = &fit {
        o.check("variance growth", f.pass, format!("slope {:.4} R^2 {:.4}", f.slope, f.r_squared));
    }
    for d in &dominance {
        o.note(format!(
            "dominance optimal vs {}: {:?} (V = {:.4} at {:?})",
            d.alternative, d.report.verdict, d.report.violation, d.report.location
        ));
    }

    let kappa = kappa_bound(p, sol.policy.n0);
    let report = DiagnosticsReport {
        kappa,
        alpha_lower: 1.0 - kappa,
        delta_by_period: ergodicity.as_ref().map(|e| e.delta_by_period.clone()).unwrap_or_default(),
        augmented: ergodicity.as_ref().map(|e| e.augmented.clone()).unwrap_or_default(),
        soft_unimodality,
        ergodicity_refused,
        martingale: Some(martingale),
        ks,
        variance_fit: fit.clone(),
        hoeffding_table,
        dominance,
        pass: o.pass,
    };
    if cfg.formats.json {
        out.write_json(&format!("{prefix}diagnostics.json"), &report)?;
    }
    if cfg.formats.csv {
        out.write(&format!("{prefix}costs.csv"), costs_to_csv(&batch.costs).as_bytes())?;
        for (name, costs) in &alt_samples {
            out.write(&format!("{prefix}costs_{}.csv", file_stem(name)), costs_to_csv(costs).as_bytes())?;
        }
        plot_data(&batch.costs, out, prefix)?;
        if let Some(f) = &fit {
            out.write(&format!("{prefix}variance_vs_n.csv"), variance_csv(f).as_bytes())?;
        }
    }
    Ok(o)
}

/// `fixed_base_stock(0.9)` becomes `fixed_base_stock_0.9`.
fn file_stem(name: &str) -> String {
    name.replace('(', "_").replace(')', "")
}

#[derive(Serialize)]
struct HorizonEntry {
    n: usize,
    master_seed: u64,
    summary: Summary,
    ks: Option<CltReport>,
}

#[derive(Serialize)]
struct CltDocument {
    horizons: Vec<HorizonEntry>,
    variance_fit: Option<VarianceFit>,
    pass: bool,
}

fn clt_cmd(
    cfg: &ExperimentConfig,
    demand: &DemandModel,
    out: &mut OutputDir,
    prefix: &str,
) -> Result<Outcome, CliError> {
    let run = &cfg.run;
    let sweep = horizon_sweep(
        PolicyFamily::Optimal,
        &cfg.params,
        demand,
        &run.horizons,
        run.replications,
        run.master_seed,
        &cfg.solver_options(),
    )?;
    let fit = if sweep.len() >= 3 {
        let views: Vec<(usize, &[f64])> = sweep.iter().map(|h| (h.horizon, h.batch.costs.as_slice())).collect();
        Some(variance_growth(&views)?)
    } else {
        None
    };
    let entries: Vec<HorizonEntry> = sweep
        .iter()
        .map(|h| HorizonEntry {
            n: h.horizon,
            master_seed: horizon_seed(run.master_seed, h.horizon),
            summary: h.batch.summary,
            ks: clt_test(&h.batch.costs).ok(),
        })
        .collect();

    let mut o = Outcome::new();
    let last = entries.last().expect("at least one horizon");
    match &last.ks {
        Some(k) => o.check(
            &format!("normal approximation at n = {}", last.n),
            k.pass,
            format!("ks {:.4} skew {:.3} excess kurtosis {:.3}", k.ks, k.skewness, k.excess_kurtosis),
        ),
        None => o.check("normal approximation", false, "cost sample has zero variance".into()),
    }
    if let Some(f) = &fit {
        o.check("variance growth", f.pass, format!("slope {:.4} R^2 {:.4}", f.slope, f.r_squared));
    }

    if cfg.formats.csv {
        for h in &sweep {
            out.write(&format!("{prefix}costs_n{}.csv", h.horizon), costs_to_csv(&h.batch.costs).as_bytes())?;
        }
        plot_data(&sweep.last().expect("non-empty").batch.costs, out, prefix)?;
        if let Some(f) = &fit {
            out.write(&format!("{prefix}variance_vs_n.csv"), variance_csv(f).as_bytes())?;
        }
    }
    if cfg.formats.json {
        let doc = CltDocument {
            horizons: entries,
            variance_fit: fit,
            pass: o.pass,
        };
        out.write_json(&format!("{prefix}clt.json"), &doc)?;
    }
    Ok(o)
}

#[derive(Serialize)]
struct CompareDocument {
    horizon: usize,
    replications: usize,
    master_seed: u64,
    summaries: Vec<(String, Summary)>,
    dominance: Vec<DominanceEntry>,
}

fn compare_cmd(
    cfg: &ExperimentConfig,
    demand: &DemandModel,
    out: &mut OutputDir,
    prefix: &str,
) -> Result<Outcome, CliError> {
    let (_, optimal) = alternative_costs(cfg, demand, PolicyFamily::Optimal)?;
    let (dominance, samples) = dominance(cfg, demand, &optimal)?;
    let mut o = Outcome::new();
    for d in &dominance {
        o.note(format!(
            "optimal vs {}: {:?} (V = {:.4} at {:?}, bands {:.4} + {:.4})",
            d.alternative, d.report.verdict, d.report.violation, d.report.location, d.report.band_a, d.report.band_b
        ));
    }
    if cfg.formats.csv {
        out.write(&format!("{prefix}costs_optimal.csv"), costs_to_csv(&optimal).as_bytes())?;
        for (name, costs) in &samples {
            out.write(&format!("{prefix}costs_{}.csv", file_stem(name)), costs_to_csv(costs).as_bytes())?;
        }
    }
    if cfg.formats.json {
        let mut summaries = vec![("optimal".to_string(), Summary::of(&optimal))];
        summaries.extend(samples.iter().map(|(name, c)| (name.clone(), Summary::of(c))));
        let doc = CompareDocument {
            horizon: cfg.params.n,
            replications: cfg.run.replications,
            master_seed: cfg.run.master_seed,
            summaries,
            dominance,
        };
        out.write_json(&format!("{prefix}compare.json"), &doc)?;
    }
    Ok(o)
}

#[derive(Serialize)]
struct ReportDocument {
    sections: Vec<ReportSection>,
    pass: bool,
}

#[derive(Serialize)]
struct ReportSection {
    command: &'static str,
    pass: bool,
    lines: Vec<String>,
}

/// Every other subcommand, each in its own subdirectory, plus a summary.
fn report_cmd(cfg: &ExperimentConfig, demand: &DemandModel, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let mut sections = Vec::new();
    let mut all = Outcome::new();
    type Part = fn(&ExperimentConfig, &DemandModel, &mut OutputDir, &str) -> Result<Outcome, CliError>;
    let parts: [(Command, Part); 5] = [
        (Command::Solve, solve_cmd),
        (Command::Simulate, simulate_cmd),
        (Command::Diagnose, diagnose_cmd),
        (Command::Clt, clt_cmd),
        (Command::Compare, compare_cmd),
    ];
    for (cmd, f) in parts {
        let outcome = f(cfg, demand, out, &format!("{}/", cmd.name()))?;
        sections.push(ReportSection {
            command: cmd.name(),
            pass: outcome.pass,
            lines: outcome.lines.clone(),
        });
        all.absorb(Outcome {
            pass: outcome.pass,
            lines: outcome.lines.into_iter().map(|l| format!("[{}] {l}", cmd.name())).collect(),
        });
    }
    out.write_json(
        "report.json",
        &ReportDocument {
            sections,
            pass: all.pass,
        },
    )?;
    Ok(all)
}
