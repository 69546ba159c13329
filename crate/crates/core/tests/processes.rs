mod common;

use std::f64::consts::PI;

use beable_lab::bell::{BellProcess, SamplingControls, StartConfig};
use beable_lab::circuits::{gate_unitary, random_circuit, CircuitProcess};
use beable_lab::current_lab::{candidate_current, check_conditions, CandidateId};
use beable_lab::discrete::{restricted_step, restricted_transition_column, two_state_transition};
use beable_lab::harness::EnsembleStats;
use beable_lab::hilbert::{
    born_distribution, evolve_continuous, random_hermitian_from, random_state_from, Decomposition,
    ProbabilityVector, StateVector,
};
use beable_lab::rng;

use common::rabi;

/// Rabi oscillation from |0>: over [pi/4, 3pi/4] the Born weights return to
/// (1/2, 1/2), so the minimal two-state matrix is the identity, while Bell's
/// process must leave 0 before the node at pi/2 and comes back with
/// probability 1/2.
#[test]
fn restricted_and_two_state_processes_differ_across_a_flow_reversal() {
    let h = rabi();
    let dec = Decomposition::singletons(2).unwrap();
    let psi_t = evolve_continuous(&h, &StateVector::basis(2, 0).unwrap(), PI / 4.0).unwrap();
    let tau = PI / 2.0;

    let m = two_state_transition(&psi_t, &h.exp_minus_i(tau), &dec).unwrap();
    assert!(m.prob(1, 0).abs() <= 1e-12 && m.prob(0, 1).abs() <= 1e-12);

    let process = BellProcess::new(h, dec).unwrap();
    let controls = SamplingControls::default();
    let n = 20_000u64;
    for from in 0..2 {
        let moved = (0..n)
            .filter(|&i| {
                restricted_step(
                    &process,
                    &psi_t,
                    from,
                    tau,
                    &mut rng::stream(77 + from as u64, i),
                    &controls,
                )
                .unwrap()
                    != from
            })
            .count();
        let p = moved as f64 / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((p - 0.5).abs() <= 4.0 * se, "from {from}: {p}");
    }
}

#[test]
fn rabi_series_matches_restricted_sampling() {
    let process = BellProcess::new(rabi(), Decomposition::singletons(2).unwrap()).unwrap();
    let psi0 = StateVector::basis(2, 0).unwrap();
    let tau = 0.2;
    let col = restricted_transition_column(&process, &psi0, 0, tau, 3, 1e-12).unwrap();
    // From |0> at t = 0 the exact jump probability is sin^2(tau).
    assert!((col[1].probability - tau.sin().powi(2)).abs() <= col[1].remainder_bound + 1e-9);

    let n = 100_000u64;
    let controls = SamplingControls::default();
    let jumps = (0..n)
        .filter(|&i| {
            restricted_step(&process, &psi0, 0, tau, &mut rng::stream(5, i), &controls).unwrap()
                == 1
        })
        .count();
    let p = col[1].probability;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((jumps as f64 / n as f64 - p).abs() <= 3.0 * se);
}

#[test]
fn fixed_start_ensemble_follows_the_master_equation() {
    let mut rng = rng::from_seed(31);
    let d = 3;
    let h = random_hermitian_from(d, &mut rng);
    let dec = Decomposition::singletons(d).unwrap();
    let psi0 = random_state_from(d, &mut rng);
    let process = BellProcess::new(h, dec).unwrap();
    let times = [0.0, 0.5, 1.0, 2.0];
    let rho0 = ProbabilityVector::point_mass(d, 1).unwrap();
    let reference = process
        .master_equation(&psi0, &rho0, &times, 1e-10)
        .unwrap();

    let controls = SamplingControls::default();
    let mut stats = EnsembleStats::new(times.to_vec(), d).unwrap();
    for i in 0..20_000u64 {
        let tr = process
            .sample_path(
                &psi0,
                0.0,
                2.0,
                StartConfig::Fixed(1),
                &mut rng::stream(32, i),
                &controls,
            )
            .unwrap();
        stats
            .record(times.iter().map(|&t| tr.config_at(t)))
            .unwrap();
    }
    for (k, r) in reference.iter().enumerate() {
        let cmp = stats.compare(k, r).unwrap();
        assert!(
            cmp.z_scores.iter().all(|z| z.abs() <= 4.5),
            "t = {}: {:?}",
            times[k],
            cmp.z_scores
        );
    }
}

#[test]
fn circuit_pair_currents_equal_two_state_currents() {
    let tol = 1e-12;
    for seed in 0..10u64 {
        let mut rng = rng::from_seed(seed);
        let circuit = random_circuit(3, 8, &mut rng).unwrap();
        let d = circuit.dim();
        let dec = Decomposition::singletons(d).unwrap();
        let process =
            CircuitProcess::new(circuit.clone(), &random_state_from(d, &mut rng)).unwrap();
        for (k, gate) in circuit.gates().iter().enumerate() {
            let psi = process.state(k);
            let u = gate_unitary(gate, circuit.n_qubits());
            let j = candidate_current(psi, &u, &dec, CandidateId::antisymmetrized_real_guess1())
                .unwrap();
            assert!(
                check_conditions(&j, psi, &u, &dec, tol).unwrap().all_pass(),
                "gate {gate}"
            );
            let before = born_distribution(psi, &dec).unwrap();
            let after = process.born(k + 1);
            for q in 0..d {
                match process.jump(k, q) {
                    Some((partner, _)) => {
                        let two_state = after.get(q) - before.get(q);
                        assert!(
                            (j.get(q, partner) - two_state).abs() <= tol,
                            "gate {gate}, config {q}"
                        );
                        for other in (0..d).filter(|&o| o != partner) {
                            assert!(j.get(q, other).abs() <= tol);
                        }
                    }
                    None => assert!((0..d).all(|o| j.get(q, o).abs() <= tol)),
                }
            }
        }
    }
}

#[test]
fn circuit_jump_probabilities_are_the_minimal_pair_flows() {
    let mut rng = rng::from_seed(9);
    let circuit = random_circuit(2, 10, &mut rng).unwrap();
    let process = CircuitProcess::new(circuit, &random_state_from(4, &mut rng)).unwrap();
    for k in 0..process.circuit().gates().len() {
        let (w, w_next) = (process.born(k), process.born(k + 1));
        for q in 0..4 {
            if let Some((partner, p)) = process.jump(k, q) {
                let outflow = (w.get(q) - w_next.get(q)).max(0.0);
                if w.get(q) > 1e-12 {
                    assert!((p - outflow / w.get(q)).abs() <= 1e-12);
                }
                let (_, back) = process.jump(k, partner).unwrap();
                assert!(p * back == 0.0);
            }
        }
    }
}
