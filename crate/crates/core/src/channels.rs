//! Noise channels in Kraus form and their composition over a register.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmat::{
    apply_local_left, apply_local_right_adjoint, gates, ComplexMatrix, DensityMatrix, C64, ONE,
    ZERO,
};

/// Tolerance on `||sum K^dagger K - I||_max`.
pub const COMPLETENESS_TOL: f64 = 1e-10;

/// A named noise model with its physical parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    BitFlip {
        p: f64,
    },
    Depolarizing {
        p: f64,
    },
    /// Pauli channel with `p_x = p_y` and `p_z = p_x^c`, total error rate `p`.
    AsymDepolarizing {
        p: f64,
        c: f64,
    },
    AmplitudeDamping {
        gamma: f64,
    },
    PhaseDamping {
        gamma: f64,
    },
    /// Amplitude damping followed by phase damping with the same `gamma`.
    AmpPhaseDamping {
        gamma: f64,
    },
    /// Amplitude and phase relaxation over a duration `t_us`; times in microseconds.
    ThermalRelaxation {
        t1_us: f64,
        t2_us: f64,
        t_us: f64,
    },
    #[serde(rename = "correlated_depolarizing_2q")]
    CorrelatedDepolarizing2q {
        p: f64,
    },
}

impl NoiseSpec {
    /// Number of qubits the channel acts on.
    pub fn arity(&self) -> usize {
        match self {
            NoiseSpec::CorrelatedDepolarizing2q { .. } => 2,
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseSpec::BitFlip { .. } => "bit_flip",
            NoiseSpec::Depolarizing { .. } => "depolarizing",
            NoiseSpec::AsymDepolarizing { .. } => "asym_depolarizing",
            NoiseSpec::AmplitudeDamping { .. } => "amplitude_damping",
            NoiseSpec::PhaseDamping { .. } => "phase_damping",
            NoiseSpec::AmpPhaseDamping { .. } => "amp_phase_damping",
            NoiseSpec::ThermalRelaxation { .. } => "thermal_relaxation",
            NoiseSpec::CorrelatedDepolarizing2q { .. } => "correlated_depolarizing_2q",
        }
    }

    /// Short human-readable description used in report headers.
    pub fn describe(&self) -> String {
        match self {
            NoiseSpec::BitFlip { p }
            | NoiseSpec::Depolarizing { p }
            | NoiseSpec::CorrelatedDepolarizing2q { p } => format!("{}(p={p})", self.name()),
            NoiseSpec::AsymDepolarizing { p, c } => format!("{}(p={p},c={c})", self.name()),
            NoiseSpec::AmplitudeDamping { gamma }
            | NoiseSpec::PhaseDamping { gamma }
            | NoiseSpec::AmpPhaseDamping { gamma } => format!("{}(gamma={gamma})", self.name()),
            NoiseSpec::ThermalRelaxation { t1_us, t2_us, t_us } => {
                format!("{}(t1={t1_us}us,t2={t2_us}us,t={t_us}us)", self.name())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if !(0.0..=1.0).contains(&v) {
                Err(Error::InvalidParameter(format!(
                    "{name} = {v} outside [0, 1]"
                )))
            } else {
                Ok(())
            }
        };
        match *self {
            NoiseSpec::BitFlip { p }
            | NoiseSpec::Depolarizing { p }
            | NoiseSpec::CorrelatedDepolarizing2q { p } => prob("p", p),
            NoiseSpec::AsymDepolarizing { p, c } => {
                prob("p", p)?;
                if !(c > 0.0 && c.is_finite()) {
                    return Err(Error::InvalidParameter(format!("c = {c} must be positive")));
                }
                Ok(())
            }
            NoiseSpec::AmplitudeDamping { gamma }
            | NoiseSpec::PhaseDamping { gamma }
            | NoiseSpec::AmpPhaseDamping { gamma } => prob("gamma", gamma),
            NoiseSpec::ThermalRelaxation { t1_us, t2_us, t_us } => {
                if !(t1_us > 0.0 && t2_us > 0.0 && t_us >= 0.0) {
                    return Err(Error::InvalidParameter(
                        "relaxation times must be positive and duration non-negative".into(),
                    ));
                }
                if t2_us > 2.0 * t1_us {
                    return Err(Error::InvalidParameter(format!(
                        "t2 = {t2_us} exceeds 2 * t1 = {}",
                        2.0 * t1_us
                    )));
                }
                Ok(())
            }
        }
    }
}

/// A completely positive trace-preserving map given by Kraus operators
/// acting on `targets` (local operator index has `targets[0]` most significant).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrausChannel {
    targets: Vec<usize>,
    operators: Vec<ComplexMatrix>,
}

impl KrausChannel {
    /// Validates shapes and the completeness relation.
    pub fn new(targets: Vec<usize>, operators: Vec<ComplexMatrix>) -> Result<Self> {
        let local = 1usize << targets.len();
        if operators.is_empty() {
            return Err(Error::InvalidParameter(
                "channel has no Kraus operators".into(),
            ));
        }
        for (i, &t) in targets.iter().enumerate() {
            if targets[..i].contains(&t) {
                return Err(Error::DuplicateIndex(t));
            }
        }
        let mut sum = ComplexMatrix::zeros(local, local);
        for k in &operators {
            if !k.is_square() || k.rows() != local {
                return Err(Error::DimensionMismatch {
                    expected: local,
                    found: k.rows(),
                });
            }
            sum = &sum + &k.adjoint().dot(k);
        }
        let err = sum.max_abs_diff(&ComplexMatrix::identity(local));
        if err > COMPLETENESS_TOL {
            return Err(Error::InvalidParameter(format!(
                "Kraus operators violate completeness by {err:.3e}"
            )));
        }
        Ok(Self { targets, operators })
    }

    pub fn arity(&self) -> usize {
        self.targets.len()
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn operators(&self) -> &[ComplexMatrix] {
        &self.operators
    }

    /// The same operators acting on different qubits.
    pub fn retarget(&self, targets: Vec<usize>) -> Result<Self> {
        if targets.len() != self.targets.len() {
            return Err(Error::DimensionMismatch {
                expected: self.targets.len(),
                found: targets.len(),
            });
        }
        Self::new(targets, self.operators.clone())
    }

    /// Sequential composition: `other` after `self`, on the same targets.
    pub fn then(&self, other: &KrausChannel) -> Result<Self> {
        if self.targets != other.targets {
            return Err(Error::InvalidParameter(
                "composed channels differ in targets".into(),
            ));
        }
        let ops = other
            .operators
            .iter()
            .flat_map(|b| self.operators.iter().map(move |a| b.dot(a)))
            .collect();
        Self::new(self.targets.clone(), ops)
    }

    /// Dense `2^n`-dimensional Kraus operators on an `n`-qubit register.
    pub fn lift(&self, n: usize) -> Result<Vec<ComplexMatrix>> {
        self.operators
            .iter()
            .map(|k| crate::qmat::embed(k, &self.targets, n))
            .collect()
    }

    fn check_register(&self, n: usize) -> Result<()> {
        for &t in &self.targets {
            if t >= n {
                return Err(Error::IndexOutOfRange {
                    index: t,
                    num_qubits: n,
                });
            }
        }
        Ok(())
    }
}

/// A linear map on operators of an `n`-qubit register together with its
/// Hilbert-Schmidt adjoint.
pub trait QuantumChannel: Sync {
    /// `N(m)` for an operator `m` on `n` qubits.
    fn apply_to(&self, m: &ComplexMatrix, n: usize) -> Result<ComplexMatrix>;
    /// `N^dagger(m)`, so that `Tr(A N(B)) = Tr(N^dagger(A) B)`.
    fn apply_adjoint_to(&self, m: &ComplexMatrix, n: usize) -> Result<ComplexMatrix>;
}

fn kraus_sum(
    m: &ComplexMatrix,
    ops: &[ComplexMatrix],
    targets: &[usize],
    n: usize,
    adjoint: bool,
) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(m.rows(), m.cols());
    for k in ops {
        let k = if adjoint { k.adjoint() } else { k.clone() };
        let mut term = m.clone();
        apply_local_left(&mut term, &k, targets, n);
        apply_local_right_adjoint(&mut term, &k, targets, n);
        out.add_scaled(&term, ONE);
    }
    out
}

fn check_dim(m: &ComplexMatrix, n: usize) -> Result<()> {
    if !m.is_square() || m.rows() != 1 << n {
        return Err(Error::DimensionMismatch {
            expected: 1 << n,
            found: m.rows(),
        });
    }
    Ok(())
}

impl QuantumChannel for KrausChannel {
    fn apply_to(&self, m: &ComplexMatrix, n: usize) -> Result<ComplexMatrix> {
        check_dim(m, n)?;
        self.check_register(n)?;
        Ok(kraus_sum(m, &self.operators, &self.targets, n, false))
    }

    fn apply_adjoint_to(&self, m: &ComplexMatrix, n: usize) -> Result<ComplexMatrix> {
        check_dim(m, n)?;
        self.check_register(n)?;
        Ok(kraus_sum(m, &self.operators, &self.targets, n, true))
    }
}

fn cplx(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn pauli_kraus(weights: [f64; 4]) -> Vec<ComplexMatrix> {
    let paulis = [
        gates::pauli_i(),
        gates::pauli_x(),
        gates::pauli_y(),
        gates::pauli_z(),
    ];
    weights
        .iter()
        .zip(paulis)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, p)| p.scale_real(w.sqrt()))
        .collect()
}

fn amplitude_damping_ops(gamma: f64) -> Vec<ComplexMatrix> {
    vec![
        ComplexMatrix::diagonal(&[ONE, cplx((1.0 - gamma).sqrt())]),
        ComplexMatrix::from_vec(2, 2, vec![ZERO, cplx(gamma.sqrt()), ZERO, ZERO]).unwrap(),
    ]
}

fn phase_damping_ops(gamma: f64) -> Vec<ComplexMatrix> {
    vec![
        ComplexMatrix::diagonal(&[ONE, cplx((1.0 - gamma).sqrt())]),
        ComplexMatrix::diagonal(&[ZERO, cplx(gamma.sqrt())]),
    ]
}

/// Solves `2x + x^c = p` for the asymmetric Pauli rates `(p_x, p_y, p_z)`
/// with `p_x = p_y = x` and `p_z = x^c`.
pub fn solve_asymmetric_rates(p: f64, c: f64) -> Result<(f64, f64, f64)> {
    NoiseSpec::AsymDepolarizing { p, c }.validate()?;
    if p == 0.0 {
        return Ok((0.0, 0.0, 0.0));
    }
    let f = |x: f64| 2.0 * x + x.powf(c) - p;
    // f(0) = -p < 0 and f(p / 2) = (p / 2)^c > 0, and f is increasing.
    let (mut lo, mut hi) = (0.0, p / 2.0);
    let mut x = hi;
    for _ in 0..2000 {
        x = 0.5 * (lo + hi);
        let v = f(x);
        if v.abs() < 1e-14 || hi - lo <= f64::MIN_POSITIVE {
            break;
        }
        if v > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
    }
    if f(x).abs() >= 1e-12 {
        return Err(Error::Numerical(format!(
            "asymmetric rate solver did not converge (residual {:.3e})",
            f(x).abs()
        )));
    }
    Ok((x, x, x.powf(c)))
}

/// Relaxation probabilities `(gamma_1, gamma_phi)` for a duration `t`.
pub fn thermal_rates(t1: f64, t2: f64, t: f64) -> Result<(f64, f64)> {
    NoiseSpec::ThermalRelaxation {
        t1_us: t1,
        t2_us: t2,
        t_us: t,
    }
    .validate()?;
    let gamma1 = 1.0 - (-t / t1).exp();
    let inv_tphi = (1.0 / t2 - 1.0 / (2.0 * t1)).max(0.0);
    let gamma_phi = 1.0 - (-2.0 * t * inv_tphi).exp();
    Ok((gamma1, gamma_phi))
}

/// Kraus form of a noise model acting on qubits `0..arity`.
pub fn build_channel(spec: &NoiseSpec) -> Result<KrausChannel> {
    spec.validate()?;
    match *spec {
        NoiseSpec::BitFlip { p } => KrausChannel::new(vec![0], pauli_kraus([1.0 - p, p, 0.0, 0.0])),
        NoiseSpec::Depolarizing { p } => {
            KrausChannel::new(vec![0], pauli_kraus([1.0 - p, p / 3.0, p / 3.0, p / 3.0]))
        }
        NoiseSpec::AsymDepolarizing { p, c } => {
            let (px, py, pz) = solve_asymmetric_rates(p, c)?;
            KrausChannel::new(vec![0], pauli_kraus([1.0 - px - py - pz, px, py, pz]))
        }
        NoiseSpec::AmplitudeDamping { gamma } => {
            KrausChannel::new(vec![0], amplitude_damping_ops(gamma))
        }
        NoiseSpec::PhaseDamping { gamma } => KrausChannel::new(vec![0], phase_damping_ops(gamma)),
        NoiseSpec::AmpPhaseDamping { gamma } => {
            let ad = KrausChannel::new(vec![0], amplitude_damping_ops(gamma))?;
            let pd = KrausChannel::new(vec![0], phase_damping_ops(gamma))?;
            ad.then(&pd)
        }
        NoiseSpec::ThermalRelaxation { t1_us, t2_us, t_us } => {
            let (g1, gphi) = thermal_rates(t1_us, t2_us, t_us)?;
            let ad = KrausChannel::new(vec![0], amplitude_damping_ops(g1))?;
            let pd = KrausChannel::new(vec![0], phase_damping_ops(gphi))?;
            ad.then(&pd)
        }
        NoiseSpec::CorrelatedDepolarizing2q { p } => {
            let labels = ["I", "X", "Y", "Z"];
            let mut ops = Vec::with_capacity(16);
            for a in labels {
                for b in labels {
                    let w: f64 = if a == "I" && b == "I" {
                        1.0 - p
                    } else {
                        p / 15.0
                    };
                    if w > 0.0 {
                        let pauli = gates::pauli_string(&format!("{a}{b}")).unwrap();
                        ops.push(pauli.scale_real(w.sqrt()));
                    }
                }
            }
            KrausChannel::new(vec![0, 1], ops)
        }
    }
}

/// Independent identical noise on every qubit, plus optional noise after each
/// two-qubit gate of a circuit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeNoise {
    pub per_qubit: NoiseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_noise: Option<NoiseSpec>,
    #[serde(skip)]
    channel: Option<KrausChannel>,
}

impl CompositeNoise {
    pub fn new(per_qubit: NoiseSpec, gate_noise: Option<NoiseSpec>) -> Result<Self> {
        if per_qubit.arity() != 1 {
            return Err(Error::InvalidParameter(format!(
                "{} cannot be applied per qubit",
                per_qubit.name()
            )));
        }
        if let Some(g) = &gate_noise {
            g.validate()?;
        }
        let channel = build_channel(&per_qubit)?;
        Ok(Self {
            per_qubit,
            gate_noise,
            channel: Some(channel),
        })
    }

    pub fn uniform(per_qubit: NoiseSpec) -> Result<Self> {
        Self::new(per_qubit, None)
    }

    /// The single-qubit channel applied to each qubit.
    pub fn qubit_channel(&self) -> Result<KrausChannel> {
        match &self.channel {
            Some(c) => Ok(c.clone()),
            None => build_channel(&self.per_qubit),
        }
    }

    /// Noise channels inserted after a two-qubit gate on `(a, b)`.
    pub fn gate_channels(&self, a: usize, b: usize) -> Result<Vec<KrausChannel>> {
        let Some(spec) = &self.gate_noise else {
            return Ok(Vec::new());
        };
        let base = build_channel(spec)?;
        if base.arity() == 2 {
            Ok(vec![base.retarget(vec![a, b])?])
        } else {
            Ok(vec![base.retarget(vec![a])?, base.retarget(vec![b])?])
        }
    }
}

impl QuantumChannel for CompositeNoise {
    fn apply_to(&self, m: &ComplexMatrix, n: usize) -> Result<ComplexMatrix> {
        check_dim(m, n)?;
        let ch = self.qubit_channel()?;
        let mut out = m.clone();
        for q in 0..n {
            out = kraus_sum(&out, ch.operators(), &[q], n, false);
        }
        Ok(out)
    }

    fn apply_adjoint_to(&self, m: &ComplexMatrix, n: usize) -> Result<ComplexMatrix> {
        check_dim(m, n)?;
        let ch = self.qubit_channel()?;
        let mut out = m.clone();
        for q in 0..n {
            out = kraus_sum(&out, ch.operators(), &[q], n, true);
        }
        Ok(out)
    }
}

/// `N(rho) = (1 - p) rho + p E rho E` for an `n`-qubit Pauli string `E`.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliErrorChannel {
    pauli: Vec<u8>,
    p: f64,
}

impl PauliErrorChannel {
    /// `pauli` is a string over `IXYZ` whose length fixes the register size.
    pub fn new(pauli: &str, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("p = {p} outside [0, 1]")));
        }
        let bytes = pauli.as_bytes().to_vec();
        if let Some(b) = bytes.iter().find(|b| !b"IXYZ".contains(b)) {
            return Err(Error::InvalidParameter(format!(
                "invalid Pauli symbol {:?}",
                *b as char
            )));
        }
        Ok(Self { pauli: bytes, p })
    }

    pub fn weight(&self) -> usize {
        self.pauli.iter().filter(|&&b| b != b'I').count()
    }

    fn conjugate_by_pauli(&self, m: &ComplexMatrix, n: usize) -> ComplexMatrix {
        let mut out = m.clone();
        for (q, &b) in self.pauli.iter().enumerate() {
            let g = match b {
                b'X' => gates::pauli_x(),
                b'Y' => gates::pauli_y(),
                b'Z' => gates::pauli_z(),
                _ => continue,
            };
            apply_local_left(&mut out, &g, &[q], n);
            apply_local_right_adjoint(&mut out, &g, &[q], n);
        }
        out
    }
}

impl QuantumChannel for PauliErrorChannel {
    fn apply_to(&self, m: &ComplexMatrix, n: usize) -> Result<ComplexMatrix> {
        check_dim(m, n)?;
        if self.pauli.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.pauli.len(),
            });
        }
        let mut out = m.scale_real(1.0 - self.p);
        out.add_scaled(&self.conjugate_by_pauli(m, n), cplx(self.p));
        Ok(out)
    }

    fn apply_adjoint_to(&self, m: &ComplexMatrix, n: usize) -> Result<ComplexMatrix> {
        self.apply_to(m, n)
    }
}

/// The identity map.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoNoise;

impl QuantumChannel for NoNoise {
    fn apply_to(&self, m: &ComplexMatrix, n: usize) -> Result<ComplexMatrix> {
        check_dim(m, n)?;
        Ok(m.clone())
    }

    fn apply_adjoint_to(&self, m: &ComplexMatrix, n: usize) -> Result<ComplexMatrix> {
        self.apply_to(m, n)
    }
}

/// Applies a channel to a density matrix and re-validates the result.
pub fn apply<C: QuantumChannel + ?Sized>(
    rho: &DensityMatrix,
    channel: &C,
) -> Result<DensityMatrix> {
    let out = channel.apply_to(rho.matrix(), rho.num_qubits())?;
    DensityMatrix::new(out.hermitian_part())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::{partial_trace, PureState};

    fn plus() -> DensityMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        PureState::new(vec![cplx(h), cplx(h)]).unwrap().density()
    }

    #[test]
    fn bit_flip_on_zero() {
        let rho = PureState::basis(1, 0).unwrap().density();
        let ch = build_channel(&NoiseSpec::BitFlip { p: 0.1 }).unwrap();
        let out = apply(&rho, &ch).unwrap();
        let want = ComplexMatrix::from_real(2, &[0.9, 0.0, 0.0, 0.1]).unwrap();
        assert!(out.matrix().max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn amplitude_damping_on_excited_state() {
        let rho = PureState::basis(1, 1).unwrap().density();
        let ch = build_channel(&NoiseSpec::AmplitudeDamping { gamma: 0.3 }).unwrap();
        let out = apply(&rho, &ch).unwrap();
        let want = ComplexMatrix::from_real(2, &[0.3, 0.0, 0.0, 0.7]).unwrap();
        assert!(out.matrix().max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn phase_damping_keeps_populations() {
        let ch = build_channel(&NoiseSpec::PhaseDamping { gamma: 0.36 }).unwrap();
        let out = apply(&plus(), &ch).unwrap();
        assert!((out.matrix()[(0, 0)].re - 0.5).abs() < 1e-12);
        assert!((out.matrix()[(0, 1)].re - 0.5 * 0.8).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_rates_match_closed_form_for_half_exponent() {
        // with c = 1/2, s = sqrt(x) solves 2 s^2 + s - p = 0
        for p in [0.01f64, 0.1, 0.3] {
            let s = (-1.0 + (1.0 + 8.0 * p).sqrt()) / 4.0;
            let (px, py, pz) = solve_asymmetric_rates(p, 0.5).unwrap();
            assert!((px - s * s).abs() < 1e-12);
            assert_eq!(px, py);
            assert!((pz - s).abs() < 1e-10);
        }
        let (px, _, pz) = solve_asymmetric_rates(0.1, 0.5).unwrap();
        assert!((px - 0.007295).abs() < 1e-6);
        assert!((pz - 0.08541).abs() < 1e-5);
    }

    #[test]
    fn asymmetric_rates_solve_for_small_exponents() {
        for (p, c) in [(0.0028, 0.1), (0.3, 0.15), (1e-6, 0.5), (0.7, 4.0)] {
            let (x, y, z) = solve_asymmetric_rates(p, c).unwrap();
            assert_eq!(x, y);
            assert!((2.0 * x + z - p).abs() < 1e-12, "p = {p}, c = {c}");
            assert!((z - x.powf(c)).abs() < 1e-15);
        }
    }

    #[test]
    fn asymmetric_with_unit_exponent_is_depolarizing() {
        let (px, py, pz) = solve_asymmetric_rates(0.09, 1.0).unwrap();
        for v in [px, py, pz] {
            assert!((v - 0.03).abs() < 1e-12);
        }
    }

    #[test]
    fn thermal_relaxation_matches_bloch_decay() {
        let (t1, t2, t) = (200.0, 100.0, 10.0);
        let ch = build_channel(&NoiseSpec::ThermalRelaxation {
            t1_us: t1,
            t2_us: t2,
            t_us: t,
        })
        .unwrap();
        let out = apply(&plus(), &ch).unwrap();
        assert!((2.0 * out.matrix()[(0, 1)].norm() - (-t / t2).exp()).abs() < 1e-12);
        let excited = apply(&PureState::basis(1, 1).unwrap().density(), &ch).unwrap();
        assert!((excited.matrix()[(1, 1)].re - (-t / t1).exp()).abs() < 1e-12);
    }

    #[test]
    fn correlated_depolarizing_matches_twirl_oracle() {
        let p = 0.12;
        let ch = build_channel(&NoiseSpec::CorrelatedDepolarizing2q { p }).unwrap();
        assert_eq!(ch.operators().len(), 16);
        // three-qubit input, channel on qubits (2, 0)
        let psi = PureState::normalized(
            (0..8)
                .map(|i| C64::new(0.3 + i as f64, 1.0 - 0.2 * i as f64))
                .collect(),
        )
        .unwrap();
        let rho = psi.density();
        let lifted = ch.retarget(vec![2, 0]).unwrap();
        let got = lifted.apply_to(rho.matrix(), 3).unwrap();
        // (1 - 16p/15) rho + 16p/15 * (I/4 on the pair) (x) Tr_pair(rho)
        let reduced = partial_trace(&rho, &[1]).unwrap();
        let mixed = crate::qmat::embed(reduced.matrix(), &[1], 3).unwrap();
        let mut mixed_only = ComplexMatrix::zeros(8, 8);
        for r in 0..8 {
            for c in 0..8 {
                let same_pair = (r & 0b101) == (c & 0b101);
                if same_pair {
                    mixed_only[(r, c)] = mixed[(r, c)] * 0.25;
                }
            }
        }
        let mut want = rho.matrix().scale_real(1.0 - 16.0 * p / 15.0);
        want.add_scaled(&mixed_only, cplx(16.0 * p / 15.0));
        assert!(got.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn adjoint_satisfies_trace_duality() {
        let noise = CompositeNoise::uniform(NoiseSpec::AmpPhaseDamping { gamma: 0.2 }).unwrap();
        let a = ComplexMatrix::from_vec(
            4,
            4,
            (0..16)
                .map(|i| C64::new(i as f64, (i * i % 5) as f64))
                .collect(),
        )
        .unwrap();
        let b = a.adjoint().scale(C64::new(0.5, 0.1));
        let lhs = a.dot(&noise.apply_to(&b, 2).unwrap()).trace();
        let rhs = noise.apply_adjoint_to(&a, 2).unwrap().dot(&b).trace();
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(build_channel(&NoiseSpec::Depolarizing { p: 1.5 }).is_err());
        assert!(build_channel(&NoiseSpec::AsymDepolarizing { p: 0.1, c: 0.0 }).is_err());
        assert!(build_channel(&NoiseSpec::ThermalRelaxation {
            t1_us: 10.0,
            t2_us: 30.0,
            t_us: 1.0
        })
        .is_err());
        assert!(CompositeNoise::uniform(NoiseSpec::CorrelatedDepolarizing2q { p: 0.1 }).is_err());
        let bad = ComplexMatrix::identity(2).scale_real(0.9);
        assert!(KrausChannel::new(vec![0], vec![bad]).is_err());
    }

    #[test]
    fn noise_spec_parses_from_toml() {
        let spec: NoiseSpec =
            toml::from_str("kind = \"asym_depolarizing\"\np = 0.1\nc = 0.5").unwrap();
        assert_eq!(spec, NoiseSpec::AsymDepolarizing { p: 0.1, c: 0.5 });
        let bad: std::result::Result<NoiseSpec, _> =
            toml::from_str("kind = \"depolarizing\"\np = 0.1\nq = 2.0");
        assert!(bad.is_err());
    }
}
