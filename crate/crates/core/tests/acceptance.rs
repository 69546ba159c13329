//! Acceptance suite: every criterion runs at its stated tolerance and
//! runtime budget and prints one PASS/FAIL line.

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use beable_lab::bell::{BellProcess, SamplingControls, StartConfig};
use beable_lab::circuits::{
    gate_partition, gate_unitary, random_circuit, verify_pairwise, CircuitProcess, PAIRWISE_TOL,
};
use beable_lab::current_lab::{
    candidate_current, check_conditions, scan_sample, violation_scan, Base, CandidateId, Part,
    ScanSettings,
};
use beable_lab::discrete::{
    restricted_step, restricted_transition_column, two_state_transition, DiscreteChain,
    DiscreteKind,
};
use beable_lab::harness::stats::{lag1_independence, occupancy_z_scores};
use beable_lab::harness::EnsembleStats;
use beable_lab::hilbert::{
    born_distribution, evolve_continuous, haar_unitary_from, principal_log_hamiltonian,
    random_hermitian_from, random_state_from, Decomposition, HermitianOperator, ProbabilityVector,
    StateVector, UnitaryOperator, C64, WEIGHT_EPS,
};
use beable_lab::rng;
use nalgebra::DMatrix;
use rand::Rng;

use common::{frobenius, rabi, random_blocks};

type Outcome = Result<(bool, String), String>;

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "current decomposition identity",
            budget: secs(10),
            run: c1_decomposition_identity,
        },
        Criterion {
            id: 2,
            name: "master equation equivariance",
            budget: secs(60),
            run: c2_master_equation,
        },
        Criterion {
            id: 3,
            name: "Monte Carlo equivariance (Rabi)",
            budget: secs(60),
            run: c3_monte_carlo,
        },
        Criterion {
            id: 4,
            name: "violation experiment",
            budget: secs(10),
            run: c4_violation_scan,
        },
        Criterion {
            id: 5,
            name: "candidate rejection",
            budget: secs(10),
            run: c5_candidate_rejection,
        },
        Criterion {
            id: 6,
            name: "two-state identities",
            budget: secs(5),
            run: c6_two_state,
        },
        Criterion {
            id: 7,
            name: "tau -> 0 convergence",
            budget: secs(120),
            run: c7_convergence,
        },
        Criterion {
            id: 8,
            name: "restricted series vs sampling",
            budget: secs(120),
            run: c8_series_vs_sampling,
        },
        Criterion {
            id: 9,
            name: "principal logarithm",
            budget: secs(10),
            run: c9_principal_log,
        },
        Criterion {
            id: 10,
            name: "circuit equivariance",
            budget: secs(180),
            run: c10_circuits,
        },
        Criterion {
            id: 11,
            name: "iid process",
            budget: secs(30),
            run: c11_iid,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok((ok, detail)) => (ok && elapsed < c.budget, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<36} {} ({}; {:.2}s of {}s)",
            c.id,
            c.name,
            if ok { "PASS" } else { "FAIL" },
            detail,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn c1_decomposition_identity() -> Outcome {
    let mut rng = rng::from_seed(101);
    let mut worst: f64 = 0.0;
    let mut pairs = 0usize;
    for _ in 0..1000 {
        let d = rng.random_range(2..=8);
        let dec = random_blocks(d, &mut rng);
        let h = random_hermitian_from(d, &mut rng);
        let psi = random_state_from(d, &mut rng);
        let process = BellProcess::new(h, dec.clone()).map_err(err)?;
        let rates = process.rates(&psi).map_err(err)?;
        let j = process.current(&psi).map_err(err)?;
        let w = born_distribution(&psi, &dec).map_err(err)?;
        for q in 0..dec.n_configs() {
            for qp in 0..dec.n_configs() {
                if q == qp || w.get(q) < WEIGHT_EPS || w.get(qp) < WEIGHT_EPS {
                    continue;
                }
                let lhs = rates.rate(q, qp) * w.get(qp) - rates.rate(qp, q) * w.get(q);
                worst = worst.max((lhs - j.get(q, qp)).abs());
                pairs += 1;
            }
        }
    }
    Ok((
        worst <= 1e-12,
        format!("max residual {worst:.2e} over {pairs} pairs, bound 1e-12"),
    ))
}

fn c2_master_equation() -> Outcome {
    let grid: Vec<f64> = (1..=10).map(|k| 0.5 * k as f64).collect();
    let mut worst: f64 = 0.0;
    let mut rng = rng::from_seed(202);
    let mut systems = vec![(
        rabi(),
        Decomposition::singletons(2).map_err(err)?,
        StateVector::basis(2, 0).map_err(err)?,
    )];
    for _ in 0..20 {
        let d = rng.random_range(2..=6);
        let dec = if rng.random::<bool>() {
            Decomposition::singletons(d).map_err(err)?
        } else {
            random_blocks(d, &mut rng)
        };
        systems.push((
            random_hermitian_from(d, &mut rng),
            dec,
            random_state_from(d, &mut rng),
        ));
    }
    for (h, dec, psi0) in &systems {
        let process = BellProcess::new(h.clone(), dec.clone()).map_err(err)?;
        let rho0 = born_distribution(psi0, dec).map_err(err)?;
        let rho = process
            .master_equation(psi0, &rho0, &grid, 1e-10)
            .map_err(err)?;
        for (&t, r) in grid.iter().zip(&rho) {
            let born = born_distribution(&evolve_continuous(h, psi0, t).map_err(err)?, dec)
                .map_err(err)?;
            for q in 0..dec.n_configs() {
                worst = worst.max((r.get(q) - born.get(q)).abs());
            }
        }
    }
    Ok((
        worst <= 1e-6,
        format!(
            "{} systems, max |rho - Born| {worst:.2e}, bound 1e-6",
            systems.len()
        ),
    ))
}

fn c3_monte_carlo() -> Outcome {
    let times = [0.5, 1.0, 2.0];
    let dec = Decomposition::singletons(2).map_err(err)?;
    let psi0 = StateVector::basis(2, 0).map_err(err)?;
    let process = BellProcess::new(rabi(), dec.clone()).map_err(err)?;
    let controls = SamplingControls::default();
    let mut stats = EnsembleStats::new(times.to_vec(), 2).map_err(err)?;
    for i in 0..100_000u64 {
        let tr = process
            .sample_path(
                &psi0,
                0.0,
                2.0,
                StartConfig::Born,
                &mut rng::stream(303, i),
                &controls,
            )
            .map_err(err)?;
        stats
            .record(times.iter().map(|&t| tr.config_at(t)))
            .map_err(err)?;
    }
    let mut worst: f64 = 0.0;
    for (k, &t) in times.iter().enumerate() {
        let born = born_distribution(&evolve_continuous(&rabi(), &psi0, t).map_err(err)?, &dec)
            .map_err(err)?;
        worst = worst.max(stats.compare(k, &born).map_err(err)?.tv_distance);
    }
    Ok((
        worst <= 0.01,
        format!("N = 1e5, max TV {worst:.4} at t in {{0.5, 1, 2}}, bound 0.01"),
    ))
}

fn c4_violation_scan() -> Outcome {
    let settings =
        ScanSettings::new(3, CandidateId::antisymmetrized_real_guess1(), 1000, 404).map_err(err)?;
    let r = violation_scan(&settings).map_err(err)?;
    let frac = r.violation_fraction();
    let ok = (0.01..=0.15).contains(&frac)
        && r.max_cond1 <= 1e-10
        && r.max_cond2 <= 1e-10
        && r.max_cond4 <= 1e-10;
    Ok((
        ok,
        format!(
            "{}/1000 violations at pair {:?} (any pair {}), max cond1/2/4 {:.1e}/{:.1e}/{:.1e}",
            r.violation_count, r.pair, r.any_violation_count, r.max_cond1, r.max_cond2, r.max_cond4
        ),
    ))
}

fn c5_candidate_rejection() -> Outcome {
    let dec = Decomposition::singletons(3).map_err(err)?;
    let others = [
        (Base::Guess1, Part::Imaginary),
        (Base::Guess2, Part::Real),
        (Base::Guess2, Part::Imaginary),
    ];
    let mut found = Vec::new();
    for (base, part) in others {
        let cand = CandidateId::new(base, part);
        let settings = ScanSettings::new(3, cand, 100, 505).map_err(err)?;
        let mut hit = None;
        for i in 0..100 {
            let (u, psi) = scan_sample(&settings, i);
            let j = candidate_current(&psi, &u, &dec, cand).map_err(err)?;
            let report = check_conditions(&j, &psi, &u, &dec, 1e-10).map_err(err)?;
            if report.max_cond4_residual() > 1e-6 {
                hit = Some((i, report.max_cond4_residual()));
                break;
            }
        }
        found.push((cand, hit));
    }
    let ok = found.iter().all(|(_, h)| h.is_some());
    let detail = found
        .iter()
        .map(|(c, h)| match h {
            Some((i, r)) => format!("{c}: sample {i} residual {r:.2e}"),
            None => format!("{c}: none"),
        })
        .collect::<Vec<_>>()
        .join(", ");
    Ok((ok, detail))
}

fn c6_two_state() -> Outcome {
    let dec = Decomposition::singletons(2).map_err(err)?;
    let mut rng = rng::from_seed(606);
    let (mut cur_dev, mut born_dev): (f64, f64) = (0.0, 0.0);
    let mut minimal = true;
    for _ in 0..1000 {
        let u = haar_unitary_from(2, &mut rng);
        let psi = random_state_from(2, &mut rng);
        let j = candidate_current(&psi, &u, &dec, CandidateId::antisymmetrized_real_guess1())
            .map_err(err)?;
        let before = born_distribution(&psi, &dec).map_err(err)?;
        let after = born_distribution(
            &beable_lab::hilbert::evolve_discrete(&u, &psi).map_err(err)?,
            &dec,
        )
        .map_err(err)?;
        for q in 0..2 {
            let two_state = after.get(q) - before.get(q);
            cur_dev = cur_dev.max((j.get(q, 1 - q) - two_state).abs());
        }
        let m = two_state_transition(&psi, &u, &dec).map_err(err)?;
        let pushed = m.apply(before.weights());
        for (q, &p) in pushed.iter().enumerate() {
            born_dev = born_dev.max((p - after.get(q)).abs());
        }
        minimal &= m.prob(1, 0) * m.prob(0, 1) == 0.0;
    }
    Ok((
        cur_dev <= 1e-12 && born_dev <= 1e-12 && minimal,
        format!("current dev {cur_dev:.1e}, Born dev {born_dev:.1e}, minimal {minimal}"),
    ))
}

fn c7_convergence() -> Outcome {
    let h = rabi();
    let dec = Decomposition::singletons(2).map_err(err)?;
    let t = 0.3;
    let psi_t = evolve_continuous(&h, &StateVector::basis(2, 0).map_err(err)?, t).map_err(err)?;
    let process = BellProcess::new(h.clone(), dec.clone()).map_err(err)?;
    let sigma = process.rates(&psi_t).map_err(err)?.rate(1, 0);
    let taus = [0.2, 0.1, 0.05];
    let mut restricted = Vec::new();
    let mut two_state = Vec::new();
    for &tau in &taus {
        let col = restricted_transition_column(&process, &psi_t, 0, tau, 6, 1e-12).map_err(err)?;
        if !col[1].meets_accuracy(1e-8) {
            return Err(format!(
                "series not accurate at tau = {tau}: bound {:.1e}",
                col[1].remainder_bound
            ));
        }
        restricted.push((col[1].probability / tau - sigma).abs());
        let m = two_state_transition(&psi_t, &h.exp_minus_i(tau), &dec).map_err(err)?;
        two_state.push((m.prob(1, 0) / tau - sigma).abs());
    }
    let ratios = |e: &[f64]| -> Vec<f64> { e.windows(2).map(|w| w[1] / w[0]).collect() };
    let (rr, rt) = (ratios(&restricted), ratios(&two_state));
    let ok = rr.iter().chain(&rt).all(|r| (0.35..=0.65).contains(r));
    Ok((
        ok,
        format!(
            "restricted ratios {:.3?}, two-state ratios {:.3?}, sigma {sigma:.4}",
            rr, rt
        ),
    ))
}

fn c8_series_vs_sampling() -> Outcome {
    let mut rng = rng::from_seed(808);
    let d = 3;
    let h = random_hermitian_from(d, &mut rng);
    let dec = Decomposition::singletons(d).map_err(err)?;
    let psi_t = random_state_from(d, &mut rng);
    let tau = 0.035;
    let process = BellProcess::new(h, dec).map_err(err)?;
    let q_from = 0;
    let col = restricted_transition_column(&process, &psi_t, q_from, tau, 3, 1e-12).map_err(err)?;
    let sup_tau = col[0].sup_total_rate * tau;
    let bound = col[0].remainder_bound;
    if !(sup_tau <= 0.5 && bound < 1e-4) {
        return Ok((
            false,
            format!("preconditions fail: sup*tau {sup_tau:.3}, bound {bound:.1e}"),
        ));
    }
    let n = 100_000u64;
    let controls = SamplingControls::default();
    let mut counts = vec![0u64; d];
    for i in 0..n {
        let q = restricted_step(
            &process,
            &psi_t,
            q_from,
            tau,
            &mut rng::stream(809, i),
            &controls,
        )
        .map_err(err)?;
        counts[q] += 1;
    }
    let mut worst_z: f64 = 0.0;
    for (q, r) in col.iter().enumerate() {
        let p = r.probability;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let z = (counts[q] as f64 / n as f64 - p).abs() / se;
        worst_z = worst_z.max(z);
    }
    let probs: Vec<f64> = col.iter().map(|r| r.probability).collect();
    Ok((
        worst_z <= 3.0,
        format!("series {probs:.4?}, sup*tau {sup_tau:.3}, bound {bound:.1e}, max |z| {worst_z:.2} (<= 3)"),
    ))
}

fn c9_principal_log() -> Outcome {
    let mut rng = rng::from_seed(909);
    let (mut recon, mut shifted): (f64, f64) = (0.0, 0.0);
    let mut in_branch = true;
    for _ in 0..1000 {
        let d = rng.random_range(1..=6);
        let u = haar_unitary_from(d, &mut rng);
        for tau in [0.1, 1.0] {
            let h = principal_log_hamiltonian(&u, tau).map_err(err)?;
            recon = recon.max(frobenius(h.exp_minus_i(tau).matrix(), u.matrix()));
            let bound = PI / tau;
            in_branch &= h
                .eigenvalues()
                .iter()
                .all(|&e| e > -bound && e <= bound * (1.0 + 1e-14));
            let eig = h.matrix().clone().symmetric_eigen();
            let v = &eig.eigenvectors;
            let k = DMatrix::from_fn(d, d, |i, j| {
                if i == j {
                    C64::new(2.0 * PI / tau * rng.random_range(-3i32..=3) as f64, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            let s = v * k * v.adjoint();
            let hs = HermitianOperator::new(h.matrix() + s).map_err(err)?;
            shifted = shifted.max(frobenius(hs.exp_minus_i(tau).matrix(), u.matrix()));
        }
    }
    Ok((
        recon <= 1e-12 && shifted <= 1e-12 && in_branch,
        format!("reconstruction {recon:.1e}, H+S reconstruction {shifted:.1e}, spectrum in branch {in_branch}"),
    ))
}

fn c10_circuits() -> Outcome {
    let mut rng = rng::from_seed(1010);
    let mut worst_tv: f64 = 0.0;
    let mut worst_off: f64 = 0.0;
    for c in 0..20u64 {
        let n_qubits = rng.random_range(1..=4);
        let n_gates = rng.random_range(1..=12);
        let circuit = random_circuit(n_qubits, n_gates, &mut rng).map_err(err)?;
        let dec = Decomposition::singletons(circuit.dim()).map_err(err)?;
        for g in circuit.gates() {
            let check = verify_pairwise(
                &gate_unitary(g, n_qubits),
                &gate_partition(g, n_qubits),
                &dec,
                PAIRWISE_TOL,
            )
            .map_err(err)?;
            if !check.ok {
                return Ok((
                    false,
                    format!("gate {g} not pairwise ({:.1e})", check.max_off_partition),
                ));
            }
            worst_off = worst_off.max(check.max_off_partition);
        }
        let psi0 = random_state_from(circuit.dim(), &mut rng);
        let process = CircuitProcess::new(circuit, &psi0).map_err(err)?;
        let times: Vec<f64> = (0..=n_gates).map(|k| k as f64).collect();
        let mut stats = EnsembleStats::new(times, dec.n_configs()).map_err(err)?;
        for i in 0..100_000u64 {
            let tr = process
                .run(StartConfig::Born, &mut rng::stream(1011 + c, i))
                .map_err(err)?;
            stats.record(tr.configs().iter().copied()).map_err(err)?;
        }
        for k in 0..=n_gates {
            worst_tv = worst_tv.max(stats.compare(k, &process.born(k)).map_err(err)?.tv_distance);
        }
    }
    Ok((
        worst_tv <= 0.015,
        format!("20 circuits, max off-partition {worst_off:.1e}, max TV {worst_tv:.4} (<= 0.015)"),
    ))
}

fn c11_iid() -> Outcome {
    let tau = 0.3;
    let steps = 100_000;
    let dec = Decomposition::singletons(2).map_err(err)?;
    let u: UnitaryOperator = rabi().exp_minus_i(tau);
    let psi0 = StateVector::basis(2, 0).map_err(err)?;
    let chain =
        DiscreteChain::new(DiscreteKind::Iid, &u, None, dec, &psi0, tau, steps).map_err(err)?;
    let run = chain
        .run(
            StartConfig::Born,
            &mut rng::from_seed(1111),
            &SamplingControls::default(),
        )
        .map_err(err)?;
    let marginals: Vec<ProbabilityVector> = (0..=steps).map(|k| chain.born(k)).collect();
    let lag1 = lag1_independence(&[run.configs()], &marginals).map_err(err)?;
    let z = occupancy_z_scores(&[run.configs()], &marginals).map_err(err)?;
    let max_z = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((
        lag1.p_value > 0.001 && max_z <= 3.0,
        format!(
            "lag-1 chi2 {:.2} on {} dof, p {:.3}; occupancy |z| max {max_z:.2}",
            lag1.chi_square, lag1.dof, lag1.p_value
        ),
    ))
}
