use proptest::prelude::*;
use qecopt::ansatz::{build_layout, encode, generate_rea, Encoder, GateKind, LayoutKind};
use qecopt::channels::{apply, build_channel, CompositeNoise, KrausChannel, NoiseSpec};
use qecopt::designs::{haar_sample, haar_unitary, two_design};
use qecopt::loss::{dloss, floss};
use qecopt::qmat::{conjugate, fidelity, gates, trace_distance, ComplexMatrix, DensityMatrix, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_density(qubits: usize, seed: u64) -> DensityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 1 << qubits;
    let u = haar_unitary(dim, &mut rng);
    let mut p: Vec<f64> = (0..dim).map(|_| rng.random::<f64>().powi(2)).collect();
    if rng.random_bool(0.3) {
        p.iter_mut().skip(1).for_each(|v| *v = 0.0);
    }
    let total: f64 = p.iter().sum();
    let diag: Vec<C64> = p.iter().map(|v| C64::new(v / total, 0.0)).collect();
    let m = u.dot(&ComplexMatrix::diagonal(&diag)).dot(&u.adjoint());
    DensityMatrix::new(m.hermitian_part()).unwrap()
}

fn noise_strategy() -> impl Strategy<Value = NoiseSpec> {
    prop_oneof![
        (0.0..=1.0f64).prop_map(|p| NoiseSpec::BitFlip { p }),
        (0.0..=1.0f64).prop_map(|p| NoiseSpec::Depolarizing { p }),
        (0.0..=0.7f64, 0.1..4.0f64).prop_map(|(p, c)| NoiseSpec::AsymDepolarizing { p, c }),
        (0.0..=1.0f64).prop_map(|gamma| NoiseSpec::AmplitudeDamping { gamma }),
        (0.0..=1.0f64).prop_map(|gamma| NoiseSpec::PhaseDamping { gamma }),
        (0.0..=1.0f64).prop_map(|gamma| NoiseSpec::AmpPhaseDamping { gamma }),
        (10.0..500.0f64, 0.1..1.0f64, 0.0..100.0f64).prop_map(|(t1, frac, t)| {
            NoiseSpec::ThermalRelaxation {
                t1_us: t1,
                t2_us: 2.0 * t1 * frac,
                t_us: t,
            }
        }),
    ]
}

fn bloch(rho: &DensityMatrix) -> [f64; 3] {
    let m = rho.matrix();
    [
        m.trace_product_re(&gates::pauli_x()),
        m.trace_product_re(&gates::pauli_y()),
        m.trace_product_re(&gates::pauli_z()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn kraus_operators_are_complete(spec in noise_strategy()) {
        let ch = build_channel(&spec).unwrap();
        let mut sum = ComplexMatrix::zeros(2, 2);
        for k in ch.operators() {
            sum.add_scaled(&k.adjoint().dot(k), C64::new(1.0, 0.0));
        }
        prop_assert!(sum.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-10);
    }

    #[test]
    fn gate_noise_is_complete(p in 0.0..=1.0f64) {
        let ch = build_channel(&NoiseSpec::CorrelatedDepolarizing2q { p }).unwrap();
        let mut sum = ComplexMatrix::zeros(4, 4);
        for k in ch.operators() {
            sum.add_scaled(&k.adjoint().dot(k), C64::new(1.0, 0.0));
        }
        prop_assert!(sum.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-10);
    }

    #[test]
    fn channels_preserve_trace_and_hermiticity(spec in noise_strategy(), seed in any::<u64>()) {
        let rho = random_density(2, seed);
        let noise = CompositeNoise::uniform(spec).unwrap();
        let out = apply(&rho, &noise).unwrap();
        prop_assert!((out.matrix().trace().re - 1.0).abs() < 1e-12);
        prop_assert!(out.matrix().hermiticity_error() < 1e-12);
    }

    #[test]
    fn qubit_trace_distance_matches_bloch_vectors(a in any::<u64>(), b in any::<u64>()) {
        let (rho, sigma) = (random_density(1, a), random_density(1, b));
        let (r, s) = (bloch(&rho), bloch(&sigma));
        let expected = 0.5 * ((r[0] - s[0]).powi(2) + (r[1] - s[1]).powi(2) + (r[2] - s[2]).powi(2)).sqrt();
        prop_assert!((trace_distance(&rho, &sigma).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn trace_distance_is_unitarily_invariant(qubits in 1usize..=3, a in any::<u64>(), b in any::<u64>(), u in any::<u64>()) {
        let (rho, sigma) = (random_density(qubits, a), random_density(qubits, b));
        let mut rng = ChaCha8Rng::seed_from_u64(u);
        let unitary = haar_unitary(1 << qubits, &mut rng);
        let before = trace_distance(&rho, &sigma).unwrap();
        let after = trace_distance(
            &conjugate(&rho, &unitary).unwrap(),
            &conjugate(&sigma, &unitary).unwrap(),
        )
        .unwrap();
        prop_assert!((before - after).abs() < 1e-10);
    }

    #[test]
    fn noiseless_encoding_preserves_purity_and_distance(n in 2usize..=4, depth in 0usize..6, seed in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        let layout = build_layout(LayoutKind::Full, n, None).unwrap();
        let ansatz = generate_rea(n, depth, &layout, seed, GateKind::Rzyz, GateKind::ControlledV).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let params: Vec<f64> = (0..ansatz.num_params).map(|_| rng.random_range(-3.2..3.2)).collect();
        let enc = Encoder::new(1, ansatz, params).unwrap();
        let (rho, sigma) = (random_density(1, a), random_density(1, b));
        let (er, es) = (encode(&rho, &enc, None).unwrap(), encode(&sigma, &enc, None).unwrap());
        prop_assert!((er.purity() - rho.purity()).abs() < 1e-10);
        let before = trace_distance(&rho, &sigma).unwrap();
        let after = trace_distance(&er, &es).unwrap();
        prop_assert!((before - after).abs() < 1e-10);
    }

    #[test]
    fn worst_case_losses_bound_averages(n in 2usize..=3, depth in 0usize..4, seed in any::<u64>(), spec in noise_strategy()) {
        let layout = build_layout(LayoutKind::Full, n, None).unwrap();
        let ansatz = generate_rea(n, depth, &layout, seed, GateKind::Rzyz, GateKind::ControlledV).unwrap();
        let params = vec![0.3; ansatz.num_params];
        let enc = Encoder::new(1, ansatz, params).unwrap();
        let noise = CompositeNoise::uniform(spec).unwrap();
        let set = two_design(1).unwrap();
        let d = dloss(&set, &enc, &noise).unwrap();
        let f = floss(&set, &enc, None, &noise).unwrap();
        let (d_avg, d_worst) = (d.d_avg.unwrap(), d.d_worst.unwrap());
        let (f_avg, f_worst) = (f.f_avg.unwrap(), f.f_worst.unwrap());
        prop_assert!(d_avg >= -1e-12 && d_avg <= d_worst + 1e-12);
        prop_assert!(f_avg >= -1e-12 && f_avg <= f_worst + 1e-12 && f_worst <= 1.0 + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn channels_contract_trace_distance(spec in noise_strategy(), a in any::<u64>(), b in any::<u64>(), both in any::<bool>()) {
        let (rho, sigma) = (random_density(2, a), random_density(2, b));
        let before = trace_distance(&rho, &sigma).unwrap();
        let after = if both {
            let noise = CompositeNoise::uniform(spec).unwrap();
            trace_distance(&apply(&rho, &noise).unwrap(), &apply(&sigma, &noise).unwrap()).unwrap()
        } else {
            let ch: KrausChannel = build_channel(&spec).unwrap().retarget(vec![1]).unwrap();
            trace_distance(&apply(&rho, &ch).unwrap(), &apply(&sigma, &ch).unwrap()).unwrap()
        };
        prop_assert!(after <= before + 1e-12, "{after} > {before}");
    }

    #[test]
    fn fidelity_and_trace_distance_satisfy_fuchs_van_de_graaf(qubits in 1usize..=2, a in any::<u64>(), b in any::<u64>()) {
        let (rho, sigma) = (random_density(qubits, a), random_density(qubits, b));
        let t = trace_distance(&rho, &sigma).unwrap();
        let f = fidelity(&rho, &sigma).unwrap();
        prop_assert!(1.0 - f.sqrt() <= t + 1e-9);
        prop_assert!(t <= (1.0 - f).max(0.0).sqrt() + 1e-9);
    }
}

#[test]
fn single_qubit_design_reproduces_haar_second_moment() {
    let swap = gates::swap();
    let id = ComplexMatrix::identity(4);
    let mut haar = id.clone();
    haar.add_scaled(&swap, C64::new(1.0, 0.0));
    let haar = haar.scale_real(1.0 / 6.0);
    let set = two_design(1).unwrap();
    let mut moment = ComplexMatrix::zeros(4, 4);
    for s in &set.states {
        let rho = s.density();
        moment.add_scaled(
            &rho.matrix().kron(rho.matrix()),
            C64::new(1.0 / set.len() as f64, 0.0),
        );
    }
    assert!(moment.max_abs_diff(&haar) < 1e-12);

    let sample = haar_sample(1, 4000, 17).unwrap();
    let mut empirical = ComplexMatrix::zeros(4, 4);
    for s in &sample.states {
        let rho = s.density();
        empirical.add_scaled(
            &rho.matrix().kron(rho.matrix()),
            C64::new(1.0 / sample.len() as f64, 0.0),
        );
    }
    assert!(empirical.max_abs_diff(&haar) < 0.02);
}

#[test]
fn ansatz_generation_is_deterministic() {
    let layout = build_layout(LayoutKind::Full, 5, None).unwrap();
    for seed in [0, 1, 99, u64::MAX] {
        let a = generate_rea(5, 12, &layout, seed, GateKind::Rzyz, GateKind::ControlledV).unwrap();
        let b = generate_rea(5, 12, &layout, seed, GateKind::Rzyz, GateKind::ControlledV).unwrap();
        assert_eq!(a, b);
    }
    let a = generate_rea(5, 12, &layout, 1, GateKind::Rzyz, GateKind::ControlledV).unwrap();
    let b = generate_rea(5, 12, &layout, 2, GateKind::Rzyz, GateKind::ControlledV).unwrap();
    assert_ne!(a, b);
}
