//! Experiment execution and report output.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::bell::{BellProcess, SamplingControls, StartConfig};
use crate::circuits::CircuitProcess;
use crate::current_lab::{violation_scan, CandidateId, ScanSettings, UnitarySource};
use crate::discrete::{
    restricted_transition_column, two_state_transition, DiscreteChain, DiscreteKind,
};
use crate::error::{Error, Result};
use crate::hilbert::{born_distribution, evolve_continuous, Decomposition, ProbabilityVector};
use crate::rng::{self, StreamRng};

use super::config::{ExperimentConfig, ExperimentKind, ResolvedSystem};
use super::stats::{lag1_independence, occupancy_z_scores, EnsembleStats};

/// Header of every per-time table.
pub const TIME_TABLE_HEADER: [&str; 6] = ["time", "config", "count", "empirical", "born", "z"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, max: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: format!("<= {max}"),
            passed: value <= max,
        }
    }

    fn at_least(name: &str, value: f64, min: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: format!(">= {min}"),
            passed: value >= min,
        }
    }

    fn within(name: &str, value: f64, range: [f64; 2]) -> Self {
        Self {
            name: name.into(),
            value,
            bound: format!("in [{}, {}]", range[0], range[1]),
            passed: value >= range[0] && value <= range[1],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File name, e.g. `table.csv`.
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.header).map_err(to_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(to_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub summary: Value,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Writes `summary.json` and every table into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(&self.summary).map_err(|e| Error::Io(e.into()))?;
        fs::write(dir.join("summary.json"), text + "\n")?;
        for t in &self.tables {
            fs::write(dir.join(&t.name), t.to_csv()?)?;
        }
        Ok(())
    }
}

/// Runs the configured experiment. The config must carry its final seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let (results, tables, checks) = match config.kind {
        ExperimentKind::Bell => bell(config)?,
        ExperimentKind::Restricted => discrete(config, DiscreteKind::Restricted)?,
        ExperimentKind::TwoState => discrete(config, DiscreteKind::TwoState)?,
        ExperimentKind::Iid => discrete(config, DiscreteKind::Iid)?,
        ExperimentKind::Circuit => circuit(config)?,
        ExperimentKind::ViolationScan => scan(config)?,
        ExperimentKind::Convergence => convergence(config)?,
    };
    let passed = checks.iter().all(|c| c.passed);
    let summary = json!({
        "kind": config.kind,
        "seed": config.seed,
        "config": config,
        "results": results,
        "checks": checks,
        "passed": passed,
    });
    Ok(ExperimentReport {
        summary,
        tables,
        checks,
    })
}

type Outcome = (Value, Vec<Table>, Vec<Check>);

fn controls(config: &ExperimentConfig) -> SamplingControls {
    let n = &config.numerics;
    SamplingControls {
        hazard_rel_tol: n.hazard_rel_tol,
        time_tol: n.time_tol,
        max_jumps: n.max_jumps,
    }
}

fn start(config: &ExperimentConfig) -> StartConfig {
    config
        .run
        .start_config
        .map_or(StartConfig::Born, StartConfig::Fixed)
}

fn seed_and_runs(config: &ExperimentConfig) -> (u64, usize) {
    (
        config.seed.expect("validated"),
        config.n_runs.expect("validated"),
    )
}

/// Runs `n_runs` independent simulations, run `i` on stream `i` of `seed`,
/// and sums their counts.
fn ensemble<F>(
    times: &[f64],
    n_configs: usize,
    seed: u64,
    n_runs: usize,
    run: F,
) -> Result<EnsembleStats>
where
    F: Fn(&mut StreamRng) -> Result<Vec<usize>> + Sync,
{
    let empty = EnsembleStats::new(times.to_vec(), n_configs)?;
    (0..n_runs as u64)
        .into_par_iter()
        .try_fold(
            || empty.clone(),
            |mut acc, i| {
                acc.record(run(&mut rng::stream(seed, i))?)?;
                Ok(acc)
            },
        )
        .try_reduce(|| empty.clone(), |a, b| a.merge(b))
}

fn ensemble_outcome(
    stats: &EnsembleStats,
    born: &[ProbabilityVector],
    record_every: usize,
    tv_max: Option<f64>,
) -> Result<(Value, Table, Vec<Check>)> {
    let mut table = Table::new("table.csv", &TIME_TABLE_HEADER);
    let mut per_time = Vec::with_capacity(stats.times().len());
    let mut max_tv: f64 = 0.0;
    for (k, (&t, reference)) in stats.times().iter().zip(born).enumerate() {
        let cmp = stats.compare(k, reference)?;
        max_tv = max_tv.max(cmp.tv_distance);
        if k % record_every == 0 || k + 1 == stats.times().len() {
            let emp = stats.empirical(k)?;
            for q in 0..stats.n_configs() {
                table.rows.push(vec![
                    t.to_string(),
                    q.to_string(),
                    stats.counts(k)[q].to_string(),
                    emp.get(q).to_string(),
                    reference.get(q).to_string(),
                    cmp.z_scores[q].to_string(),
                ]);
            }
            per_time.push(json!({
                "time": t,
                "tv_distance": cmp.tv_distance,
                "chi_square": cmp.chi_square,
                "dof": cmp.dof,
                "p_value": cmp.p_value,
                "max_abs_z": cmp.z_scores.iter().fold(0.0f64, |m, z| m.max(z.abs())),
            }));
        }
    }
    let checks = tv_max
        .map(|m| vec![Check::at_most("max_tv_distance", max_tv, m)])
        .unwrap_or_default();
    let results =
        json!({ "n_runs": stats.n_runs(), "max_tv_distance": max_tv, "per_time": per_time });
    Ok((results, table, checks))
}

fn need_h(sys: &ResolvedSystem) -> Result<&crate::hilbert::HermitianOperator> {
    sys.h.as_ref().ok_or_else(|| {
        Error::Config(
            "experiment needs a Hamiltonian (hamiltonian, preset, or unitary with tau)".into(),
        )
    })
}

fn bell(config: &ExperimentConfig) -> Result<Outcome> {
    let sys = config.resolve_system()?;
    let h = need_h(&sys)?.clone();
    let times = match &config.run.times {
        Some(t) => {
            if t.is_empty() || t.iter().any(|&x| !(x >= 0.0)) || t.windows(2).any(|w| w[1] <= w[0])
            {
                return Err(Error::Config(
                    "times must be nonnegative and increasing".into(),
                ));
            }
            t.clone()
        }
        None => {
            let t_end = config.run.t_end.expect("validated");
            let n = config.run.n_times.unwrap_or(10).max(1);
            std::iter::once(0.0)
                .chain((1..=n).map(|k| t_end * k as f64 / n as f64))
                .collect()
        }
    };
    let t_end = *times.last().expect("nonempty");
    let process = BellProcess::new(h.clone(), sys.dec.clone())?;
    let (seed, n_runs) = seed_and_runs(config);
    let ctl = controls(config);
    let st = start(config);
    let born = times
        .iter()
        .map(|&t| born_distribution(&evolve_continuous(&h, &sys.psi0, t)?, &sys.dec))
        .collect::<Result<Vec<_>>>()?;
    let stats = ensemble(&times, sys.dec.n_configs(), seed, n_runs, |rng| {
        if t_end == 0.0 {
            let q = match st {
                StartConfig::Fixed(q) => q,
                StartConfig::Born => crate::hilbert::sample_index(born[0].weights(), rng),
            };
            return Ok(vec![q; times.len()]);
        }
        let tr = process.sample_path(&sys.psi0, 0.0, t_end, st, rng, &ctl)?;
        Ok(times.iter().map(|&t| tr.config_at(t)).collect())
    })?;
    let tv_max = config.check.tv_max.or(Some(0.01));
    let (results, table, checks) =
        ensemble_outcome(&stats, &born, config.run.record_every.unwrap_or(1), tv_max)?;
    Ok((results, vec![table], checks))
}

fn discrete(config: &ExperimentConfig, kind: DiscreteKind) -> Result<Outcome> {
    let sys = config.resolve_system()?;
    let tau = config.run.tau.unwrap_or(1.0);
    let u = match &sys.u {
        Some(u) => u.clone(),
        None => need_h(&sys)?.exp_minus_i(tau),
    };
    let steps = config.run.steps.expect("validated");
    let chain = DiscreteChain::new(
        kind,
        &u,
        sys.h.clone(),
        sys.dec.clone(),
        &sys.psi0,
        tau,
        steps,
    )?;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * tau).collect();
    let born: Vec<ProbabilityVector> = (0..=steps).map(|k| chain.born(k)).collect();
    let (seed, n_runs) = seed_and_runs(config);
    let ctl = controls(config);
    let st = start(config);
    let n = sys.dec.n_configs();
    let record_every = config.run.record_every.unwrap_or(1);

    if kind != DiscreteKind::Iid {
        let stats = ensemble(&times, n, seed, n_runs, |rng| {
            Ok(chain.run(st, rng, &ctl)?.configs().to_vec())
        })?;
        let (results, table, checks) = ensemble_outcome(
            &stats,
            &born,
            record_every,
            config.check.tv_max.or(Some(0.01)),
        )?;
        return Ok((results, vec![table], checks));
    }

    let runs = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| {
            Ok(chain
                .run(st, &mut rng::stream(seed, i), &ctl)?
                .configs()
                .to_vec())
        })
        .collect::<Result<Vec<Vec<usize>>>>()?;
    let mut stats = EnsembleStats::new(times, n)?;
    for r in &runs {
        stats.record(r.iter().copied())?;
    }
    let (mut results, table, mut checks) =
        ensemble_outcome(&stats, &born, record_every, config.check.tv_max)?;
    let lag1 = lag1_independence(&runs, &born)?;
    let z = occupancy_z_scores(&runs, &born)?;
    let max_z = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    results["lag1"] = serde_json::to_value(lag1).map_err(|e| Error::Io(e.into()))?;
    results["occupancy_z"] = json!(z);
    checks.push(Check::at_least(
        "lag1_p_value",
        lag1.p_value,
        config.check.p_min.unwrap_or(0.001),
    ));
    checks.push(Check::at_most(
        "max_occupancy_abs_z",
        max_z,
        config.check.z_max.unwrap_or(3.0),
    ));
    Ok((results, vec![table], checks))
}

fn circuit(config: &ExperimentConfig) -> Result<Outcome> {
    let sys = config.resolve_system()?;
    let circuit = sys.circuit.clone().expect("validated");
    let n_gates = circuit.gates().len();
    let process = CircuitProcess::new(circuit, &sys.psi0)?;
    let (seed, n_runs) = seed_and_runs(config);
    let st = start(config);
    let times: Vec<f64> = (0..=n_gates).map(|k| k as f64).collect();
    let born: Vec<ProbabilityVector> = (0..=n_gates).map(|k| process.born(k)).collect();
    let stats = ensemble(&times, sys.dim, seed, n_runs, |rng| {
        Ok(process.run(st, rng)?.configs().to_vec())
    })?;
    let (mut results, table, checks) = ensemble_outcome(
        &stats,
        &born,
        config.run.record_every.unwrap_or(1),
        config.check.tv_max.or(Some(0.015)),
    )?;
    results["n_qubits"] = json!(process.circuit().n_qubits());
    results["n_gates"] = json!(n_gates);
    Ok((results, vec![table], checks))
}

fn scan(config: &ExperimentConfig) -> Result<Outcome> {
    let dim = config.system.dim.unwrap_or(3);
    let candidate: CandidateId = config
        .scan
        .candidate
        .as_deref()
        .unwrap_or("guess1:real:2")
        .parse()?;
    let (seed, n_samples) = seed_and_runs(config);
    let mut settings = ScanSettings::new(dim, candidate, n_samples, seed)?;
    if let Some(b) = &config.system.blocks {
        settings.dec = Decomposition::new(b.clone())?;
    }
    if let Some([q, qp]) = config.scan.pair {
        settings.pair = (q, qp);
    }
    settings.source = config.scan.source.unwrap_or(UnitarySource::Haar);
    settings.tol = config.numerics.condition_tol;
    let report = violation_scan(&settings)?;

    let mut table = Table::new(
        "conditions.csv",
        &["condition", "fail_count", "max_residual"],
    );
    let maxima = [
        report.max_cond1,
        report.max_cond2,
        report.worst_pair_excess,
        report.max_cond4,
    ];
    for (k, (&count, &max)) in report.cond_fail_counts.iter().zip(&maxima).enumerate() {
        table.rows.push(vec![
            format!("cond{}", k + 1),
            count.to_string(),
            max.to_string(),
        ]);
    }
    let residual_max = config.check.residual_max.unwrap_or(1e-10);
    let checks = vec![
        Check::within(
            "violation_fraction",
            report.violation_fraction(),
            config.check.fraction_range.unwrap_or([0.01, 0.15]),
        ),
        Check::at_most("max_cond1_residual", report.max_cond1, residual_max),
        Check::at_most("max_cond2_residual", report.max_cond2, residual_max),
        Check::at_most("max_cond4_residual", report.max_cond4, residual_max),
    ];
    let mut results = serde_json::to_value(&report).map_err(|e| Error::Io(e.into()))?;
    results["violation_fraction"] = json!(report.violation_fraction());
    results["dim"] = json!(dim);
    Ok((results, vec![table], checks))
}

fn convergence(config: &ExperimentConfig) -> Result<Outcome> {
    let sys = config.resolve_system()?;
    let h = need_h(&sys)?.clone();
    let t = config.run.t_probe.unwrap_or(0.3);
    let taus = config
        .run
        .taus
        .clone()
        .unwrap_or_else(|| vec![0.2, 0.1, 0.05]);
    let process = BellProcess::new(h.clone(), sys.dec.clone())?;
    let psi_t = evolve_continuous(&h, &sys.psi0, t)?;
    let rates = process.rates(&psi_t)?;
    let n = sys.dec.n_configs();
    let from = match config.run.from {
        Some(q) if q < n => q,
        Some(q) => return Err(Error::Config(format!("from = {q} out of range 0..{n}"))),
        None => (0..n)
            .max_by(|&a, &b| rates.total_out(a).total_cmp(&rates.total_out(b)))
            .expect("n > 0"),
    };
    let sigma = rates.total_out(from);
    let nm = &config.numerics;

    let mut table = Table::new(
        "convergence.csv",
        &[
            "tau",
            "process",
            "jump_probability",
            "rate_estimate",
            "bell_rate",
            "error",
            "ratio",
        ],
    );
    let mut per_process = serde_json::Map::new();
    let mut checks = Vec::new();
    let mut processes = vec!["restricted"];
    if n == 2 {
        processes.push("two-state");
    }
    for name in processes {
        let mut errors = Vec::with_capacity(taus.len());
        let mut rows = Vec::new();
        for &tau in &taus {
            let p_jump = if name == "restricted" {
                let col = restricted_transition_column(
                    &process,
                    &psi_t,
                    from,
                    tau,
                    nm.n_max,
                    nm.quad_tol,
                )?;
                col.iter()
                    .enumerate()
                    .filter(|&(q, _)| q != from)
                    .map(|(_, r)| r.probability)
                    .sum::<f64>()
            } else {
                1.0 - two_state_transition(&psi_t, &h.exp_minus_i(tau), &sys.dec)?.prob(from, from)
            };
            let err = (p_jump / tau - sigma).abs();
            let ratio = errors.last().map(|&prev: &f64| err / prev);
            errors.push(err);
            table.rows.push(vec![
                tau.to_string(),
                name.to_string(),
                p_jump.to_string(),
                (p_jump / tau).to_string(),
                sigma.to_string(),
                err.to_string(),
                ratio.map(|r| r.to_string()).unwrap_or_default(),
            ]);
            rows.push(
                json!({ "tau": tau, "jump_probability": p_jump, "error": err, "ratio": ratio }),
            );
        }
        let ratios: Vec<f64> = errors.windows(2).map(|w| w[1] / w[0]).collect();
        let range = config.check.ratio_range.unwrap_or([0.35, 0.65]);
        for (k, &r) in ratios.iter().enumerate() {
            checks.push(Check::within(&format!("{name}_ratio_{}", k + 1), r, range));
        }
        per_process.insert(name.into(), json!(rows));
    }
    let results =
        json!({ "t_probe": t, "from": from, "bell_rate": sigma, "processes": per_process });
    Ok((results, vec![table], checks))
}
