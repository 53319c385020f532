//! Acceptance criteria, one PASS/FAIL line each. Criteria 1-8 and 10 run in
//! a single sequential test so their timings are not shared with other tests;
//! criterion 9 is long and ignored by default:
//!
//! cargo test -p qecopt-cli --test acceptance -- --ignored --nocapture

use std::path::{Path, PathBuf};
use std::time::Instant;

use qecopt::ansatz::{build_layout, encode, generate_rea, Encoder, GateKind, LayoutKind};
use qecopt::channels::{apply, build_channel, solve_asymmetric_rates, CompositeNoise, NoiseSpec};
use qecopt::codes::{
    enumerate_pauli_errors, error_count, probe_with_design, standard_encoder, ProbeConfig,
};
use qecopt::designs::{haar_sample, haar_unitary, two_design};
use qecopt::loss::{dloss, fidelity_bounds};
use qecopt::qmat::{conjugate, fidelity, gates, trace_distance, ComplexMatrix, DensityMatrix, C64};
use qecopt::train::TrainReport;
use qecopt_cli::commands::{self, Overrides};
use qecopt_cli::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(bool, String), String>;

struct Outcome {
    pass: bool,
}

fn criterion(id: u32, name: &str, budget_s: f64, check: impl FnOnce() -> Check) -> Outcome {
    let start = Instant::now();
    let result = check();
    let secs = start.elapsed().as_secs_f64();
    let (ok, detail) = match result {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    let in_time = secs <= budget_s;
    let pass = ok && in_time;
    let timing = if in_time {
        format!("{secs:.1} s of {budget_s:.0} s")
    } else {
        format!("{secs:.1} s, over budget {budget_s:.0} s")
    };
    println!(
        "criterion {id:>2} {} {name}: {detail} ({timing})",
        if pass { "PASS" } else { "FAIL" }
    );
    Outcome { pass }
}

fn repro(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../repro")
        .join(name)
}

fn load(name: &str) -> Result<RunConfig, String> {
    RunConfig::load(&repro(name)).map_err(|e| e.to_string())
}

fn work_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR"))
        .join("acceptance")
        .join(name)
}

fn out_to(dir: PathBuf) -> Overrides {
    Overrides {
        out_dir: Some(dir),
        ..Overrides::default()
    }
}

fn near(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn random_density(qubits: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
    let dim = 1 << qubits;
    let u = haar_unitary(dim, rng);
    let mut p: Vec<f64> = (0..dim).map(|_| rng.random::<f64>().powi(2)).collect();
    if rng.random_bool(0.3) {
        p.iter_mut().skip(1).for_each(|v| *v = 0.0);
    }
    let total: f64 = p.iter().sum();
    let diag: Vec<C64> = p.iter().map(|v| C64::new(v / total, 0.0)).collect();
    let m = u.dot(&ComplexMatrix::diagonal(&diag)).dot(&u.adjoint());
    DensityMatrix::new(m.hermitian_part()).unwrap()
}

fn baseline_depolarizing() -> Check {
    let cfg = load("baseline_depolarizing.toml")?;
    let out = commands::baseline(&cfg, &Overrides::default()).map_err(|e| e.to_string())?;
    let haar = out
        .reports
        .iter()
        .find(|r| r.estimator == "haar:1000:0")
        .ok_or("no Haar(1000) report")?;
    let (dw, da) = (haar.d_worst.unwrap(), haar.d_avg.unwrap());
    let ok = near(dw, 0.13333, 0.005) && near(da, 0.08889, 0.005);
    Ok((ok, format!("Haar(1000) d_worst {dw:.5}, d_avg {da:.5}")))
}

fn haar_pair_distances() -> Check {
    let mut details = Vec::new();
    let mut ok = true;
    for (k, target) in [(1usize, 2.0 / 3.0), (2, 6.0 / 7.0)] {
        let pairs = 20_000;
        let set = haar_sample(k, 2 * pairs, 2024 + k as u64).map_err(|e| e.to_string())?;
        let mut sum = 0.0;
        for pair in set.states.chunks(2) {
            sum += trace_distance(&pair[0].density(), &pair[1].density())
                .map_err(|e| e.to_string())?;
        }
        let mean = sum / pairs as f64;
        ok &= near(mean, target, 0.01);
        details.push(format!("k={k} mean {mean:.4} (target {target:.4})"));
    }
    Ok((ok, details.join(", ")))
}

fn channel_baselines() -> Check {
    let table = [
        ("baseline_bit_flip.toml", 0.200),
        ("baseline_amplitude_damping.toml", 0.100),
        ("baseline_amp_phase_damping.toml", 0.100),
        ("baseline_thermal_relaxation.toml", 0.095),
        ("baseline_asym_depolarizing.toml", 0.185),
    ];
    let mut ok = true;
    let mut details = Vec::new();
    for (file, target) in table {
        let cfg = load(file)?;
        let out = commands::baseline(&cfg, &Overrides::default()).map_err(|e| e.to_string())?;
        for r in &out.reports {
            let d = r.d_worst.unwrap();
            ok &= near(d, target, 0.005);
            details.push(format!("{} {}={d:.4}", out.noise.spec.name(), r.estimator));
        }
    }
    Ok((ok, details.join(", ")))
}

fn perfect_code() -> Check {
    let enc = standard_encoder("perfect_5")
        .map_err(|e| e.to_string())?
        .encoder()
        .map_err(|e| e.to_string())?;
    let noise = CompositeNoise::uniform(NoiseSpec::Depolarizing { p: 0.1 }).unwrap();
    let haar = haar_sample(1, 1000, 0).unwrap();
    let d = dloss(&haar, &enc, &noise)
        .map_err(|e| e.to_string())?
        .d_worst
        .unwrap();
    Ok((near(d, 0.106, 0.003), format!("Haar(1000) d_worst {d:.5}")))
}

fn probe_distances() -> Check {
    let mut ok = true;
    let mut details = Vec::new();
    for (name, expected) in [
        ("bit_flip_3", 1),
        ("approximate_4", 2),
        ("css_422", 2),
        ("perfect_5", 3),
    ] {
        let spec = standard_encoder(name).map_err(|e| e.to_string())?;
        let report = probe_with_design(&spec.encoder().unwrap(), &ProbeConfig::default())
            .map_err(|e| e.to_string())?;
        ok &= report.d_star == expected;
        for w in &report.per_weight {
            let listed = enumerate_pauli_errors(spec.n, w.weight).unwrap().len() as u64;
            let counted = error_count(spec.n, w.weight);
            ok &= w.errors as u64 == counted && listed == counted;
        }
        details.push(format!("{name} d*={}", report.d_star));
    }
    Ok((ok, details.join(", ")))
}

fn asymmetric_solver() -> Check {
    let (px, py, pz) = solve_asymmetric_rates(0.1, 0.5).map_err(|e| e.to_string())?;
    let residual = (2.0 * px + px.powf(0.5) - 0.1).abs();
    let ok = near(pz, 0.085, 0.001) && px == py && residual < 1e-12;
    Ok((ok, format!("p_z {pz:.5}, residual {residual:.1e}")))
}

fn five_qubit_training() -> Check {
    let cfg = load("train_five_qubit_depolarizing.toml")?;
    let seeds = cfg.seeds().map_err(|e| e.to_string())?.len();
    let (report, _) =
        commands::train_encoding_cmd(&cfg, &out_to(work_dir("train_five_qubit_depolarizing")))
            .map_err(|e| e.to_string())?;
    let d = report.final_eval.haar.d_worst.unwrap();
    Ok((
        seeds >= 20 && d <= 0.110,
        format!(
            "{seeds} seeds, best seed {} Haar(1000) d_worst {d:.5}",
            report.best_seed
        ),
    ))
}

fn three_qubit_training() -> Check {
    let cfg = load("train_three_qubit_bit_flip.toml")?;
    let seeds = cfg.seeds().map_err(|e| e.to_string())?.len();
    let (report, _) =
        commands::train_encoding_cmd(&cfg, &out_to(work_dir("train_three_qubit_bit_flip")))
            .map_err(|e| e.to_string())?;
    let trained = report.final_eval.haar.d_worst.unwrap();
    let code = standard_encoder("bit_flip_3").unwrap().encoder().unwrap();
    let haar = haar_sample(1, cfg.selection.haar_count, cfg.selection.haar_seed).unwrap();
    let reference = dloss(&haar, &code, &report.noise).unwrap().d_worst.unwrap();
    Ok((
        seeds >= 20 && near(trained, reference, 2e-3),
        format!("{seeds} seeds, trained {trained:.5} vs repetition code {reference:.5}"),
    ))
}

fn property_suites() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut failures = Vec::new();

    let specs = |rng: &mut ChaCha8Rng| -> Vec<NoiseSpec> {
        let u = rng.random::<f64>();
        vec![
            NoiseSpec::BitFlip { p: u },
            NoiseSpec::Depolarizing { p: u },
            NoiseSpec::AsymDepolarizing {
                p: 0.7 * u,
                c: 0.1 + 3.9 * rng.random::<f64>(),
            },
            NoiseSpec::AmplitudeDamping { gamma: u },
            NoiseSpec::PhaseDamping { gamma: u },
            NoiseSpec::AmpPhaseDamping { gamma: u },
            NoiseSpec::ThermalRelaxation {
                t1_us: 200.0,
                t2_us: 20.0 + 380.0 * u,
                t_us: 50.0 * rng.random::<f64>(),
            },
        ]
    };

    let mut worst = 0.0f64;
    for _ in 0..200 {
        for spec in specs(&mut rng) {
            let ch = build_channel(&spec).map_err(|e| format!("{spec:?}: {e}"))?;
            let mut sum = ComplexMatrix::zeros(2, 2);
            for k in ch.operators() {
                sum.add_scaled(&k.adjoint().dot(k), C64::new(1.0, 0.0));
            }
            worst = worst.max(sum.max_abs_diff(&ComplexMatrix::identity(2)));
        }
    }
    if worst > 1e-10 {
        failures.push(format!("Kraus completeness {worst:.1e}"));
    }

    let mut dpi = 0;
    for i in 0..1000 {
        let spec = specs(&mut rng).swap_remove(i % 7);
        let noise = CompositeNoise::uniform(spec).unwrap();
        let (a, b) = (random_density(2, &mut rng), random_density(2, &mut rng));
        let before = trace_distance(&a, &b).unwrap();
        let after =
            trace_distance(&apply(&a, &noise).unwrap(), &apply(&b, &noise).unwrap()).unwrap();
        if after > before + 1e-12 {
            dpi += 1;
        }
    }
    if dpi > 0 {
        failures.push(format!("data processing violated {dpi}/1000"));
    }

    let mut fvdg = 0;
    for i in 0..1000 {
        let q = 1 + i % 2;
        let (a, b) = (random_density(q, &mut rng), random_density(q, &mut rng));
        let t = trace_distance(&a, &b).unwrap();
        let f = fidelity(&a, &b).unwrap();
        if 1.0 - f.sqrt() > t + 1e-9 || t > (1.0 - f).max(0.0).sqrt() + 1e-9 {
            fvdg += 1;
        }
    }
    if fvdg > 0 {
        failures.push(format!("Fuchs-van de Graaf violated {fvdg}/1000"));
    }

    let mut invariance = 0.0f64;
    for i in 0..300 {
        let q = 1 + i % 3;
        let (a, b) = (random_density(q, &mut rng), random_density(q, &mut rng));
        let u = haar_unitary(1 << q, &mut rng);
        let before = trace_distance(&a, &b).unwrap();
        let after =
            trace_distance(&conjugate(&a, &u).unwrap(), &conjugate(&b, &u).unwrap()).unwrap();
        invariance = invariance.max((before - after).abs());
    }
    if invariance > 1e-10 {
        failures.push(format!("unitary invariance {invariance:.1e}"));
    }

    let mut preserve = 0.0f64;
    for i in 0..100 {
        let n = 2 + i % 3;
        let layout = build_layout(LayoutKind::Full, n, None).unwrap();
        let ansatz = generate_rea(
            n,
            6,
            &layout,
            i as u64,
            GateKind::Rzyz,
            GateKind::ControlledV,
        )
        .unwrap();
        let params: Vec<f64> = (0..ansatz.num_params)
            .map(|_| rng.random_range(-3.2..3.2))
            .collect();
        let enc = Encoder::new(1, ansatz, params).unwrap();
        let (a, b) = (random_density(1, &mut rng), random_density(1, &mut rng));
        let (ea, eb) = (
            encode(&a, &enc, None).unwrap(),
            encode(&b, &enc, None).unwrap(),
        );
        preserve = preserve
            .max((ea.purity() - a.purity()).abs())
            .max((trace_distance(&ea, &eb).unwrap() - trace_distance(&a, &b).unwrap()).abs());
    }
    if preserve > 1e-10 {
        failures.push(format!("encoding preservation {preserve:.1e}"));
    }

    let mut haar = gates::swap();
    haar.add_scaled(&ComplexMatrix::identity(4), C64::new(1.0, 0.0));
    let haar = haar.scale_real(1.0 / 6.0);
    let set = two_design(1).unwrap();
    let mut moment = ComplexMatrix::zeros(4, 4);
    for s in &set.states {
        let m = s.density();
        moment.add_scaled(
            &m.matrix().kron(m.matrix()),
            C64::new(1.0 / set.len() as f64, 0.0),
        );
    }
    let moment_err = moment.max_abs_diff(&haar);
    if moment_err > 1e-12 {
        failures.push(format!("design moment {moment_err:.1e}"));
    }

    let layout = build_layout(LayoutKind::Full, 5, None).unwrap();
    let a = generate_rea(5, 12, &layout, 42, GateKind::Rzyz, GateKind::ControlledV).unwrap();
    let b = generate_rea(5, 12, &layout, 42, GateKind::Rzyz, GateKind::ControlledV).unwrap();
    if a != b {
        failures.push("ansatz generation not deterministic".into());
    }
    let cfg = load("smoke_train_encoding.toml")?;
    let runs: Vec<TrainReport> = (0..2)
        .map(|i| {
            commands::train_encoding_cmd(&cfg, &out_to(work_dir(&format!("smoke_determinism_{i}"))))
                .map(|(r, _)| r)
                .map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;
    let strip = |r: &TrainReport| TrainReport {
        wall_time: 0.0,
        ..r.clone()
    };
    if strip(&runs[0]) != strip(&runs[1]) {
        failures.push("training not deterministic".into());
    }

    let ok = failures.is_empty();
    let detail = if ok {
        "completeness, data processing (1000), Fuchs-van de Graaf (1000), unitary invariance, encoding preservation, design moment, determinism".to_string()
    } else {
        failures.join("; ")
    };
    Ok((ok, detail))
}

#[test]
fn acceptance_criteria() {
    let outcomes = [
        criterion(
            1,
            "unencoded depolarizing baseline",
            30.0,
            baseline_depolarizing,
        ),
        criterion(2, "Haar pair trace distances", 120.0, haar_pair_distances),
        criterion(3, "unencoded channel baselines", 120.0, channel_baselines),
        criterion(
            4,
            "perfect code under depolarizing noise",
            60.0,
            perfect_code,
        ),
        criterion(
            5,
            "potential distances of standard codes",
            300.0,
            probe_distances,
        ),
        criterion(6, "asymmetric depolarizing rates", 1.0, asymmetric_solver),
        criterion(
            7,
            "five-qubit encoder training",
            7200.0,
            five_qubit_training,
        ),
        criterion(
            8,
            "three-qubit bit-flip training",
            900.0,
            three_qubit_training,
        ),
        criterion(10, "property suites", 180.0, property_suites),
    ];
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}

fn recovery_regression() -> Check {
    let cached = work_dir("train_five_qubit_depolarizing").join("report.json");
    let encoder_report: TrainReport = match std::fs::read_to_string(&cached) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| e.to_string())?,
        Err(_) => {
            let cfg = load("train_five_qubit_depolarizing.toml")?;
            commands::train_encoding_cmd(&cfg, &out_to(work_dir("train_five_qubit_depolarizing")))
                .map_err(|e| e.to_string())?
                .0
        }
    };
    let mut cfg = load("recovery_five_qubit_depolarizing.toml")?;
    cfg.encoder
        .as_mut()
        .ok_or("recovery config has no encoder")?
        .circuit = Some(cached);
    let (report, _) =
        commands::train_recovery_cmd(&cfg, &out_to(work_dir("recovery_five_qubit_depolarizing")))
            .map_err(|e| e.to_string())?;
    let f = report.final_eval.haar.f_worst.unwrap();
    let d = encoder_report.final_eval.haar.d_worst.unwrap();
    let (lower, upper) = fidelity_bounds(d).map_err(|e| e.to_string())?;
    let ok = f <= 0.058 && lower <= f && f <= upper;
    Ok((
        ok,
        format!("f_worst {f:.5}, bounds [{lower:.5}, {upper:.5}] from d_worst {d:.5}"),
    ))
}

#[test]
#[ignore = "long-running recovery training"]
fn acceptance_recovery() {
    let outcome = criterion(
        9,
        "recovery training on the five-qubit encoder",
        6.0 * 3600.0,
        recovery_regression,
    );
    assert!(outcome.pass, "criterion 9 failed");
}
