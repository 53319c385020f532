//! Distinguishability and fidelity losses of a code under noise.
//!
//! Every map from `k`-qubit inputs to outputs here is linear, so it is
//! evaluated once on the Pauli basis `{P (x) |0..0><0..0|}` and the image of
//! a state `rho = sum_P x_P P` is recombined as `sum_P x_P L(P (x) |0><0|)`.
//! The same decomposition gives the adjoint gradients used in training.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{Ansatz, Encoder, Op, Program};
use crate::channels::{CompositeNoise, KrausChannel};
use crate::designs::StateSet;
use crate::error::{Error, Result};
use crate::qmat::{
    append_zero_ancillas, gates, hermitian_eigh, partial_trace_matrix, spectral_map,
    trace_distance, trace_norm, ComplexMatrix, DensityMatrix, PureState, C64,
};

/// Loss values of one estimator. Absent fields were not computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub estimator: String,
    pub states: usize,
    pub pairs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_avg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_worst: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_avg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_worst: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_pair: Option<Vec<Vec<f64>>>,
}

impl LossReport {
    fn empty(set: &StateSet) -> Self {
        Self {
            estimator: set.label(),
            states: set.len(),
            pairs: 0,
            d_avg: None,
            d_worst: None,
            f_avg: None,
            f_worst: None,
            per_pair: None,
        }
    }
}

/// A recovery circuit on the `n` code qubits followed by `r` fresh qubits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub r: usize,
    pub ansatz: Ansatz,
    pub params: Vec<f64>,
}

/// The `4^k` Pauli strings on `k` qubits; qubit 0 is the leading factor.
pub fn pauli_basis(k: usize) -> Vec<ComplexMatrix> {
    let singles = [
        gates::pauli_i(),
        gates::pauli_x(),
        gates::pauli_y(),
        gates::pauli_z(),
    ];
    let mut out = vec![ComplexMatrix::identity(1)];
    for _ in 0..k {
        out = out
            .iter()
            .flat_map(|m| singles.iter().map(move |p| m.kron(p)))
            .collect();
    }
    out
}

/// Coefficients `x_P = Tr(rho P) / 2^k` of `rho = sum_P x_P P`.
pub fn pauli_coefficients(rho: &ComplexMatrix, basis: &[ComplexMatrix]) -> Vec<f64> {
    let d = rho.rows() as f64;
    basis.iter().map(|p| rho.trace_product_re(p) / d).collect()
}

fn combine(images: &[ComplexMatrix], coeffs: &[f64]) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(images[0].rows(), images[0].cols());
    for (img, &c) in images.iter().zip(coeffs) {
        if c != 0.0 {
            out.add_scaled(img, C64::new(c, 0.0));
        }
    }
    out
}

/// `1 - |<a|b>|^2` under a square root: the trace distance of two pure states.
fn pure_trace_distance(a: &PureState, b: &PureState) -> f64 {
    (1.0 - a.inner(b).norm_sqr()).max(0.0).sqrt()
}

fn check_set(set: &StateSet, k: usize) -> Result<()> {
    if set.k != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: set.k,
        });
    }
    if set.len() < 2 {
        return Err(Error::InvalidParameter(
            "state set needs at least two states".into(),
        ));
    }
    Ok(())
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(format!("non-finite {what}")))
    }
}

/// The encoder circuit (with gate noise) followed by the per-qubit noise.
pub fn encoding_program(ansatz: &Ansatz, noise: &CompositeNoise) -> Result<Program> {
    let n = ansatz.num_qubits;
    let wires: Vec<usize> = (0..n).collect();
    let mut prog = Program::new(n, ansatz.num_params);
    prog.push_circuit(ansatz, 0, &wires, Some(noise))?;
    prog.push_noise(noise, &wires)?;
    Ok(prog)
}

/// Encoding, noise, recovery on `n + r` qubits and the noise-free inverse
/// encoding. Parameters are the encoder's followed by the recovery's.
pub fn decoding_program(
    encoder: &Ansatz,
    recovery: Option<(&Ansatz, usize)>,
    noise: &CompositeNoise,
) -> Result<Program> {
    let n = encoder.num_qubits;
    let r = recovery.map_or(0, |(_, r)| r);
    let rec_params = recovery.map_or(0, |(a, _)| a.num_params);
    let code: Vec<usize> = (0..n).collect();
    let mut prog = Program::new(n + r, encoder.num_params + rec_params);
    prog.push_circuit(encoder, 0, &code, Some(noise))?;
    prog.push_noise(noise, &code)?;
    if let Some((rec, _)) = recovery {
        if rec.num_qubits != n + r {
            return Err(Error::DimensionMismatch {
                expected: n + r,
                found: rec.num_qubits,
            });
        }
        let all: Vec<usize> = (0..n + r).collect();
        prog.push_circuit(rec, encoder.num_params, &all, None)?;
    }
    prog.push_inverse_circuit(encoder, 0, &code)?;
    Ok(prog)
}

/// Images of the Pauli basis inputs `P (x) |0..0><0..0|` under `prog`. With
/// `traceless_only` the identity image is left as zero, which is enough for
/// differences of states.
fn basis_images(
    prog: &Program,
    params: &[f64],
    k: usize,
    traceless_only: bool,
) -> Result<Vec<ComplexMatrix>> {
    let extra = prog.num_qubits() - k;
    let dim = 1usize << prog.num_qubits();
    pauli_basis(k)
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            if traceless_only && i == 0 {
                Ok(ComplexMatrix::zeros(dim, dim))
            } else {
                prog.apply(params, &append_zero_ancillas(p, extra))
            }
        })
        .collect()
}

/// `T(rho, sigma) - T(N(rho_L), N(sigma_L))` for arbitrary `k`-qubit states.
pub fn lost_trace(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    encoder: &Encoder,
    noise: &CompositeNoise,
) -> Result<f64> {
    if rho.num_qubits() != encoder.k || sigma.num_qubits() != encoder.k {
        return Err(Error::DimensionMismatch {
            expected: encoder.k,
            found: rho.num_qubits(),
        });
    }
    let before = trace_distance(rho, sigma)?;
    let prog = encoding_program(&encoder.ansatz, noise)?;
    let extra = encoder.n() - encoder.k;
    let diff = rho.matrix() - sigma.matrix();
    let after =
        0.5 * trace_norm(&prog.apply(&encoder.params, &append_zero_ancillas(&diff, extra))?)?;
    finite(before - after, "lost trace distance")
}

/// Per-pair losses `w_i w_j (T_in - T_out)` for `i < j`, row-major over `i`.
fn pair_losses(set: &StateSet, images: &[ComplexMatrix]) -> Result<Vec<f64>> {
    let basis = pauli_basis(set.k);
    let coeffs: Vec<Vec<f64>> = set
        .states
        .iter()
        .map(|s| pauli_coefficients(s.density().matrix(), &basis))
        .collect();
    let rows: Vec<Result<Vec<f64>>> = (0..set.len())
        .into_par_iter()
        .map(|i| {
            (i + 1..set.len())
                .map(|j| {
                    let diff: Vec<f64> = coeffs[i]
                        .iter()
                        .zip(&coeffs[j])
                        .map(|(a, b)| a - b)
                        .collect();
                    let t_out = 0.5 * trace_norm(&combine(images, &diff))?;
                    let t_in = pure_trace_distance(&set.states[i], &set.states[j]);
                    Ok(set.weights[i] * set.weights[j] * (t_in - t_out))
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(set.len() * (set.len() - 1) / 2);
    for row in rows {
        out.extend(row?);
    }
    Ok(out)
}

fn summarize_pairs(
    set: &StateSet,
    losses: &[f64],
    keep_pairs: bool,
    report: &mut LossReport,
) -> Result<()> {
    let total_w: f64 = set.weights.iter().sum();
    let sum: f64 = losses.iter().sum();
    let worst = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    report.pairs = losses.len();
    report.d_avg = Some(finite(2.0 * sum / (total_w * total_w), "average loss")?);
    report.d_worst = Some(finite(worst, "worst-case loss")?);
    if keep_pairs {
        let m = set.len();
        let mut table = vec![vec![0.0; m]; m];
        let pairs = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j)));
        for ((i, j), &v) in pairs.zip(losses) {
            table[i][j] = v;
            table[j][i] = v;
        }
        report.per_pair = Some(table);
    }
    Ok(())
}

/// Average and worst-case distinguishability loss over the pairs of `set`.
///
/// The average is `(1/W^2) sum_{i != j} w_i w_j Delta_ij` with `W = sum w`
/// (the diagonal contributes zero); the worst case is `max w_i w_j Delta_ij`.
pub fn dloss(set: &StateSet, encoder: &Encoder, noise: &CompositeNoise) -> Result<LossReport> {
    dloss_impl(set, encoder, noise, false)
}

/// [`dloss`] keeping the symmetric matrix of weighted per-pair losses.
pub fn dloss_with_pairs(
    set: &StateSet,
    encoder: &Encoder,
    noise: &CompositeNoise,
) -> Result<LossReport> {
    dloss_impl(set, encoder, noise, true)
}

fn dloss_impl(
    set: &StateSet,
    encoder: &Encoder,
    noise: &CompositeNoise,
    keep_pairs: bool,
) -> Result<LossReport> {
    check_set(set, encoder.k)?;
    let prog = encoding_program(&encoder.ansatz, noise)?;
    let images = basis_images(&prog, &encoder.params, encoder.k, true)?;
    let losses = pair_losses(set, &images)?;
    let mut report = LossReport::empty(set);
    summarize_pairs(set, &losses, keep_pairs, &mut report)?;
    Ok(report)
}

/// Distinguishability loss of a noise-free encoder followed by an arbitrary
/// channel on the code qubits.
pub fn dloss_under_channel(
    set: &StateSet,
    encoder: &Encoder,
    channel: &KrausChannel,
) -> Result<LossReport> {
    check_set(set, encoder.k)?;
    let n = encoder.n();
    let wires: Vec<usize> = (0..n).collect();
    let mut prog = Program::new(n, encoder.ansatz.num_params);
    prog.push_circuit(&encoder.ansatz, 0, &wires, None)?;
    prog.push(Op::Channel(channel.clone()))?;
    let images = basis_images(&prog, &encoder.params, encoder.k, true)?;
    let losses = pair_losses(set, &images)?;
    let mut report = LossReport::empty(set);
    summarize_pairs(set, &losses, false, &mut report)?;
    Ok(report)
}

/// Average-case loss over `set` for encoder parameters `params`.
pub fn dloss_average(
    set: &StateSet,
    ansatz: &Ansatz,
    params: &[f64],
    noise: &CompositeNoise,
) -> Result<f64> {
    if set.k > ansatz.num_qubits {
        return Err(Error::DimensionMismatch {
            expected: ansatz.num_qubits,
            found: set.k,
        });
    }
    check_set(set, set.k)?;
    let prog = encoding_program(ansatz, noise)?;
    let images = basis_images(&prog, params, set.k, true)?;
    let losses = pair_losses(set, &images)?;
    let total_w: f64 = set.weights.iter().sum();
    finite(
        2.0 * losses.iter().sum::<f64>() / (total_w * total_w),
        "average loss",
    )
}

/// Average-case loss over `set` and its gradient with respect to the encoder
/// parameters.
pub fn dloss_with_gradient(
    set: &StateSet,
    ansatz: &Ansatz,
    params: &[f64],
    noise: &CompositeNoise,
) -> Result<(f64, Vec<f64>)> {
    let k = set.k;
    let prog = encoding_program(ansatz, noise)?;
    let basis = pauli_basis(k);
    let extra = ansatz.num_qubits - k;
    // the identity component cancels in differences
    let active: Vec<usize> = (1..basis.len()).collect();
    let tapes = active
        .par_iter()
        .map(|&p| prog.forward(params, &append_zero_ancillas(&basis[p], extra)))
        .collect::<Result<Vec<_>>>()?;
    let images: Vec<ComplexMatrix> = tapes.iter().map(|t| t.output.clone()).collect();
    let coeffs: Vec<Vec<f64>> = set
        .states
        .iter()
        .map(|s| {
            let all = pauli_coefficients(s.density().matrix(), &basis);
            active.iter().map(|&p| all[p]).collect()
        })
        .collect();
    let total_w: f64 = set.weights.iter().sum();
    let scale = 2.0 / (total_w * total_w);

    let pairs: Vec<(usize, usize)> = (0..set.len())
        .flat_map(|i| (i + 1..set.len()).map(move |j| (i, j)))
        .collect();
    // per pair: loss term and sign matrix of the noisy difference
    let terms = pairs
        .par_iter()
        .map(|&(i, j)| {
            let diff: Vec<f64> = coeffs[i]
                .iter()
                .zip(&coeffs[j])
                .map(|(a, b)| a - b)
                .collect();
            let (vals, vecs) = hermitian_eigh(&combine(&images, &diff))?;
            let t_out = 0.5 * vals.iter().map(|v| v.abs()).sum::<f64>();
            let t_in = pure_trace_distance(&set.states[i], &set.states[j]);
            let sign = spectral_map(&vals, &vecs, |v| {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            });
            Ok((t_in - t_out, diff, sign))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut value = 0.0;
    let dim = 1usize << ansatz.num_qubits;
    let mut cotangents = vec![ComplexMatrix::zeros(dim, dim); active.len()];
    for (&(i, j), (delta, diff, sign)) in pairs.iter().zip(&terms) {
        let w = set.weights[i] * set.weights[j] * scale;
        value += w * delta;
        // d(-T_out) = -1/2 Re Tr(sign dA), A = sum_a diff_a L(B_a)
        for (c, &x) in cotangents.iter_mut().zip(diff) {
            if x != 0.0 {
                c.add_scaled(sign, C64::new(-0.5 * w * x, 0.0));
            }
        }
    }
    let grads = tapes
        .into_par_iter()
        .zip(cotangents.par_iter())
        .map(|(tape, c)| {
            let mut g = vec![0.0; ansatz.num_params];
            prog.backward(params, tape, c, &mut g)?;
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grad = vec![0.0; ansatz.num_params];
    for g in grads {
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    Ok((finite(value, "average loss")?, grad))
}

/// Per-state fidelities `F(psi, decoded)` for a decoding program.
fn state_fidelities(set: &StateSet, prog: &Program, params: &[f64]) -> Result<Vec<f64>> {
    let k = set.k;
    let images = basis_images(prog, params, k, false)?;
    // reduce each image to the data qubits once
    let data: Vec<usize> = (0..k).collect();
    let reduced = images
        .iter()
        .map(|m| partial_trace_matrix(m, prog.num_qubits(), &data))
        .collect::<Result<Vec<_>>>()?;
    let basis = pauli_basis(k);
    set.states
        .iter()
        .map(|s| {
            let coeffs = pauli_coefficients(s.density().matrix(), &basis);
            let decoded = combine(&reduced, &coeffs);
            finite(s.expectation(&decoded).re, "fidelity")
        })
        .collect()
}

fn summarize_fidelities(set: &StateSet, fids: &[f64], report: &mut LossReport) {
    let total_w: f64 = set.weights.iter().sum();
    let avg: f64 = fids
        .iter()
        .zip(&set.weights)
        .map(|(f, w)| f * w)
        .sum::<f64>()
        / total_w;
    let worst = fids.iter().copied().fold(f64::INFINITY, f64::min);
    report.f_avg = Some(1.0 - avg);
    report.f_worst = Some(1.0 - worst);
}

/// Average and worst-case fidelity loss of encoding, noise, optional
/// recovery and ideal decoding.
pub fn floss(
    set: &StateSet,
    encoder: &Encoder,
    recovery: Option<&Recovery>,
    noise: &CompositeNoise,
) -> Result<LossReport> {
    check_set(set, encoder.k)?;
    let prog = decoding_program(&encoder.ansatz, recovery.map(|r| (&r.ansatz, r.r)), noise)?;
    let mut params = encoder.params.clone();
    if let Some(r) = recovery {
        r.ansatz.check_params(&r.params)?;
        params.extend_from_slice(&r.params);
    }
    let fids = state_fidelities(set, &prog, &params)?;
    let mut report = LossReport::empty(set);
    summarize_fidelities(set, &fids, &mut report);
    Ok(report)
}

/// Both losses in one report.
pub fn evaluate(
    set: &StateSet,
    encoder: &Encoder,
    recovery: Option<&Recovery>,
    noise: &CompositeNoise,
) -> Result<LossReport> {
    let mut report = dloss(set, encoder, noise)?;
    let f = floss(set, encoder, recovery, noise)?;
    report.f_avg = f.f_avg;
    report.f_worst = f.f_worst;
    Ok(report)
}

/// Average-case fidelity loss of a decoding program.
pub fn floss_average(set: &StateSet, prog: &Program, params: &[f64]) -> Result<f64> {
    let fids = state_fidelities(set, prog, params)?;
    let total_w: f64 = set.weights.iter().sum();
    let avg: f64 = fids
        .iter()
        .zip(&set.weights)
        .map(|(f, w)| f * w)
        .sum::<f64>()
        / total_w;
    finite(1.0 - avg, "fidelity loss")
}

/// Average-case fidelity loss of a decoding program and its gradient.
pub fn floss_with_gradient(
    set: &StateSet,
    prog: &Program,
    params: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let k = set.k;
    let basis = pauli_basis(k);
    let extra = prog.num_qubits() - k;
    let total_w: f64 = set.weights.iter().sum();
    let coeffs: Vec<Vec<f64>> = set
        .states
        .iter()
        .map(|s| pauli_coefficients(s.density().matrix(), &basis))
        .collect();
    let projectors: Vec<ComplexMatrix> = set
        .states
        .iter()
        .map(|s| s.density().into_matrix())
        .collect();
    let results = basis
        .par_iter()
        .enumerate()
        .map(|(p, b)| {
            // cotangent -(1/W) sum_s w_s x_{s,p} |s><s| (x) I
            let mut m = ComplexMatrix::zeros(1 << k, 1 << k);
            for ((proj, c), w) in projectors.iter().zip(&coeffs).zip(&set.weights) {
                m.add_scaled(proj, C64::new(-w * c[p] / total_w, 0.0));
            }
            let cot = m.kron(&ComplexMatrix::identity(1 << extra));
            let tape = prog.forward(params, &append_zero_ancillas(b, extra))?;
            let contribution = cot.trace_product_re(&tape.output);
            let mut g = vec![0.0; prog.num_params()];
            prog.backward(params, tape, &cot, &mut g)?;
            Ok((contribution, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut value = 1.0;
    let mut grad = vec![0.0; prog.num_params()];
    for (v, g) in results {
        value += v;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    Ok((finite(value, "fidelity loss")?, grad))
}

/// Fidelity-loss bounds implied by a worst-case distinguishability loss:
/// `(d^2, 1 - (1 - d)^2)`.
pub fn fidelity_bounds(d_worst: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&d_worst) {
        return Err(Error::InvalidParameter(format!(
            "worst-case loss {d_worst} outside [0, 1]"
        )));
    }
    Ok((d_worst * d_worst, 1.0 - (1.0 - d_worst) * (1.0 - d_worst)))
}
