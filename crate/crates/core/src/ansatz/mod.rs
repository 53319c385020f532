//! Parameterized circuits: the gate set, the seeded randomized entangling
//! ansatz, circuit unitaries and circuit application to density matrices.

mod layout;
mod program;
pub mod qasm;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::CompositeNoise;
use crate::error::{Error, Result};
use crate::qmat::{
    append_zero_ancillas, apply_local_left, gates, ComplexMatrix, DensityMatrix, MAX_QUBITS,
};

pub use layout::{build_layout, Layout, LayoutKind};
pub use program::{Axis, Op, Program, Tape};
pub use qasm::{export_qasm, parse_qasm, ParsedCircuit, QasmExport};

/// Gate kinds understood by the circuit model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    /// OpenQASM `u3(theta, phi, lambda)`.
    U3,
    /// `Rz(c) Ry(b) Rz(a)` with slots `(a, b, c)`; `Rz(a)` acts first.
    Rzyz,
    /// `Rz(c) Rx(b) Rz(a)` with slots `(a, b, c)`; `Rz(a)` acts first.
    Rzxz,
    /// `Rz(phi) Rx(theta) Rz(-phi)` with slots `(theta, phi)`.
    Prx,
    Cz,
    /// Controlled `Rz(c) Ry(b) Rz(a)`; qubits are `(control, target)`.
    ControlledV,
    H,
    X,
    Y,
    Z,
    S,
    Sdg,
    T,
    Tdg,
    Cx,
    Swap,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::Cz | GateKind::ControlledV | GateKind::Cx | GateKind::Swap => 2,
            _ => 1,
        }
    }

    pub fn num_params(self) -> usize {
        match self {
            GateKind::Rx | GateKind::Ry | GateKind::Rz => 1,
            GateKind::Prx => 2,
            GateKind::U3 | GateKind::Rzyz | GateKind::Rzxz | GateKind::ControlledV => 3,
            _ => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Rx => "rx",
            GateKind::Ry => "ry",
            GateKind::Rz => "rz",
            GateKind::U3 => "u3",
            GateKind::Rzyz => "rzyz",
            GateKind::Rzxz => "rzxz",
            GateKind::Prx => "prx",
            GateKind::Cz => "cz",
            GateKind::ControlledV => "controlled_v",
            GateKind::H => "h",
            GateKind::X => "x",
            GateKind::Y => "y",
            GateKind::Z => "z",
            GateKind::S => "s",
            GateKind::Sdg => "sdg",
            GateKind::T => "t",
            GateKind::Tdg => "tdg",
            GateKind::Cx => "cx",
            GateKind::Swap => "swap",
        }
    }

    fn is_single_rotation(self) -> bool {
        self.arity() == 1 && self.num_params() > 0
    }

    /// The gate's matrix for the given parameter values.
    pub fn matrix(self, p: &[f64]) -> ComplexMatrix {
        match self {
            GateKind::Rx => gates::rx(p[0]),
            GateKind::Ry => gates::ry(p[0]),
            GateKind::Rz => gates::rz(p[0]),
            GateKind::U3 => gates::u3(p[0], p[1], p[2]),
            GateKind::Rzyz => gates::rz(p[2]).dot(&gates::ry(p[1])).dot(&gates::rz(p[0])),
            GateKind::Rzxz => gates::rz(p[2]).dot(&gates::rx(p[1])).dot(&gates::rz(p[0])),
            GateKind::Prx => gates::rz(p[1]).dot(&gates::rx(p[0])).dot(&gates::rz(-p[1])),
            GateKind::Cz => gates::cz(),
            GateKind::ControlledV => gates::controlled(&GateKind::Rzyz.matrix(p)),
            GateKind::H => gates::hadamard(),
            GateKind::X => gates::pauli_x(),
            GateKind::Y => gates::pauli_y(),
            GateKind::Z => gates::pauli_z(),
            GateKind::S => gates::phase(std::f64::consts::FRAC_PI_2),
            GateKind::Sdg => gates::phase(-std::f64::consts::FRAC_PI_2),
            GateKind::T => gates::phase(std::f64::consts::FRAC_PI_4),
            GateKind::Tdg => gates::phase(-std::f64::consts::FRAC_PI_4),
            GateKind::Cx => gates::cx(),
            GateKind::Swap => gates::swap(),
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let all = [
            GateKind::Rx,
            GateKind::Ry,
            GateKind::Rz,
            GateKind::U3,
            GateKind::Rzyz,
            GateKind::Rzxz,
            GateKind::Prx,
            GateKind::Cz,
            GateKind::ControlledV,
            GateKind::H,
            GateKind::X,
            GateKind::Y,
            GateKind::Z,
            GateKind::S,
            GateKind::Sdg,
            GateKind::T,
            GateKind::Tdg,
            GateKind::Cx,
            GateKind::Swap,
        ];
        all.into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown gate kind {s:?}")))
    }
}

/// One gate occurrence: its kind, the qubits it acts on and the indices of
/// its parameters in the circuit's parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub qubits: Vec<usize>,
    #[serde(default)]
    pub slots: Vec<usize>,
}

impl Gate {
    pub fn new(kind: GateKind, qubits: Vec<usize>, slots: Vec<usize>) -> Self {
        Self {
            kind,
            qubits,
            slots,
        }
    }

    pub fn matrix(&self, params: &[f64]) -> ComplexMatrix {
        let p: Vec<f64> = self.slots.iter().map(|&s| params[s]).collect();
        self.kind.matrix(&p)
    }
}

/// A circuit with `num_params` free parameters referenced by gate slots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ansatz {
    pub num_qubits: usize,
    pub num_params: usize,
    pub gates: Vec<Gate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Layout>,
    #[serde(default)]
    pub depth_blocks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub single_kind: Option<GateKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_kind: Option<GateKind>,
}

impl Ansatz {
    /// A bare circuit; validates qubit indices, arities and slot ranges.
    pub fn new(num_qubits: usize, num_params: usize, gates: Vec<Gate>) -> Result<Self> {
        let a = Self {
            num_qubits,
            num_params,
            gates,
            seed: None,
            layout: None,
            depth_blocks: 0,
            single_kind: None,
            two_kind: None,
        };
        a.validate()?;
        Ok(a)
    }

    /// The empty circuit on `num_qubits` qubits.
    pub fn identity(num_qubits: usize) -> Self {
        Self::new(num_qubits, 0, Vec::new()).expect("empty circuit is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_qubits == 0 || self.num_qubits > MAX_QUBITS {
            return Err(Error::TooManyQubits(self.num_qubits));
        }
        for g in &self.gates {
            if g.qubits.len() != g.kind.arity() {
                return Err(Error::InvalidParameter(format!(
                    "{} expects {} qubits, got {}",
                    g.kind,
                    g.kind.arity(),
                    g.qubits.len()
                )));
            }
            if g.slots.len() != g.kind.num_params() {
                return Err(Error::InvalidParameter(format!(
                    "{} expects {} parameters, got {}",
                    g.kind,
                    g.kind.num_params(),
                    g.slots.len()
                )));
            }
            for (i, &q) in g.qubits.iter().enumerate() {
                if q >= self.num_qubits {
                    return Err(Error::IndexOutOfRange {
                        index: q,
                        num_qubits: self.num_qubits,
                    });
                }
                if g.qubits[..i].contains(&q) {
                    return Err(Error::DuplicateIndex(q));
                }
            }
            if let Some(&s) = g.slots.iter().find(|&&s| s >= self.num_params) {
                return Err(Error::InvalidParameter(format!(
                    "parameter slot {s} out of range for {} parameters",
                    self.num_params
                )));
            }
        }
        Ok(())
    }

    pub fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params {
            return Err(Error::DimensionMismatch {
                expected: self.num_params,
                found: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("non-finite circuit parameter".into()));
        }
        Ok(())
    }

    pub fn two_qubit_gate_count(&self) -> usize {
        self.gates.iter().filter(|g| g.kind.arity() == 2).count()
    }

    /// The circuit unitary; gates apply in list order.
    pub fn unitary(&self, params: &[f64]) -> Result<ComplexMatrix> {
        self.check_params(params)?;
        let n = self.num_qubits;
        let mut u = ComplexMatrix::identity(1 << n);
        for g in &self.gates {
            apply_local_left(&mut u, &g.matrix(params), &g.qubits, n);
        }
        Ok(u)
    }

    /// Compiles the circuit, followed by nothing, into a program on
    /// `self.num_qubits` qubits.
    pub fn program(&self, gate_noise: Option<&CompositeNoise>) -> Result<Program> {
        let mut p = Program::new(self.num_qubits, self.num_params);
        p.push_circuit(
            self,
            0,
            &(0..self.num_qubits).collect::<Vec<_>>(),
            gate_noise,
        )?;
        Ok(p)
    }
}

/// Number of free parameters of a randomized entangling ansatz.
pub fn rea_num_params(n: usize, depth_blocks: usize, single: GateKind, two: GateKind) -> usize {
    let nv = single.num_params();
    n * nv + depth_blocks * (two.num_params() + 2 * nv)
}

/// Generates the randomized entangling ansatz: one `single` gate on every
/// qubit, then `depth_blocks` blocks of a `two` gate on a random layout edge
/// followed by a `single` gate on each of its qubits.
///
/// Randomness comes from `ChaCha8Rng::seed_from_u64(seed)`: each block draws
/// an edge index uniformly (with replacement), then a fair coin that swaps
/// the control and target.
pub fn generate_rea(
    n: usize,
    depth_blocks: usize,
    layout: &Layout,
    seed: u64,
    single: GateKind,
    two: GateKind,
) -> Result<Ansatz> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::TooManyQubits(n));
    }
    if layout.num_qubits != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: layout.num_qubits,
        });
    }
    if !single.is_single_rotation() {
        return Err(Error::InvalidParameter(format!(
            "{single} is not a parameterized single-qubit gate"
        )));
    }
    if !matches!(two, GateKind::Cz | GateKind::ControlledV) {
        return Err(Error::InvalidParameter(format!(
            "{two} is not a supported entangling gate"
        )));
    }
    if depth_blocks > 0 && layout.edges.is_empty() {
        return Err(Error::InvalidParameter(
            "layout has no edges for entangling blocks".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next = 0usize;
    let mut take = |count: usize| {
        let s: Vec<usize> = (next..next + count).collect();
        next += count;
        s
    };
    let mut gates = Vec::with_capacity(n + 3 * depth_blocks);
    for q in 0..n {
        gates.push(Gate::new(single, vec![q], take(single.num_params())));
    }
    for _ in 0..depth_blocks {
        let [a, b] = layout.edges[rng.random_range(0..layout.edges.len())];
        let (c, t) = if rng.random_bool(0.5) { (b, a) } else { (a, b) };
        gates.push(Gate::new(two, vec![c, t], take(two.num_params())));
        gates.push(Gate::new(single, vec![c], take(single.num_params())));
        gates.push(Gate::new(single, vec![t], take(single.num_params())));
    }
    let num_params = rea_num_params(n, depth_blocks, single, two);
    let mut a = Ansatz::new(n, num_params, gates)?;
    a.seed = Some(seed);
    a.layout = Some(layout.clone());
    a.depth_blocks = depth_blocks;
    a.single_kind = Some(single);
    a.two_kind = Some(two);
    Ok(a)
}

/// Applies the circuit to a density matrix, inserting gate noise after each
/// two-qubit gate when `noise` carries one.
pub fn apply_circuit(
    rho: &DensityMatrix,
    ansatz: &Ansatz,
    params: &[f64],
    noise: Option<&CompositeNoise>,
) -> Result<DensityMatrix> {
    if rho.num_qubits() != ansatz.num_qubits {
        return Err(Error::DimensionMismatch {
            expected: ansatz.num_qubits,
            found: rho.num_qubits(),
        });
    }
    ansatz.check_params(params)?;
    let prog = ansatz.program(noise)?;
    let out = prog.apply(params, rho.matrix())?;
    Ok(DensityMatrix::from_matrix_unchecked(out.hermitian_part()))
}

/// A circuit with bound parameters that maps `k` data qubits plus `n - k`
/// ancillas in `|0>` to an `n`-qubit code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub k: usize,
    pub ansatz: Ansatz,
    pub params: Vec<f64>,
}

impl Encoder {
    pub fn new(k: usize, ansatz: Ansatz, params: Vec<f64>) -> Result<Self> {
        ansatz.validate()?;
        ansatz.check_params(&params)?;
        if k == 0 || k > ansatz.num_qubits {
            return Err(Error::InvalidParameter(format!(
                "k = {k} incompatible with {} qubits",
                ansatz.num_qubits
            )));
        }
        Ok(Self { k, ansatz, params })
    }

    /// The trivial code: `k` qubits, no ancillas, no gates.
    pub fn unencoded(k: usize) -> Self {
        Self {
            k,
            ansatz: Ansatz::identity(k),
            params: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.ansatz.num_qubits
    }

    pub fn unitary(&self) -> Result<ComplexMatrix> {
        self.ansatz.unitary(&self.params)
    }
}

/// `U (rho (x) |0...0><0...0|) U^dagger`, with gate noise if supplied.
pub fn encode(
    rho: &DensityMatrix,
    encoder: &Encoder,
    gate_noise: Option<&CompositeNoise>,
) -> Result<DensityMatrix> {
    if rho.num_qubits() != encoder.k {
        return Err(Error::DimensionMismatch {
            expected: encoder.k,
            found: rho.num_qubits(),
        });
    }
    let padded = append_zero_ancillas(rho.matrix(), encoder.n() - encoder.k);
    apply_circuit(
        &DensityMatrix::from_matrix_unchecked(padded),
        &encoder.ansatz,
        &encoder.params,
        gate_noise,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::{trace_distance, PureState, C64};

    fn full(n: usize) -> Layout {
        build_layout(LayoutKind::Full, n, None).unwrap()
    }

    #[test]
    fn parameter_counts() {
        let a = generate_rea(5, 12, &full(5), 3, GateKind::Rzyz, GateKind::ControlledV).unwrap();
        assert_eq!(a.num_params, 123);
        let b = generate_rea(4, 3, &full(4), 3, GateKind::Rzyz, GateKind::Cz).unwrap();
        assert_eq!(b.num_params, 30);
        assert_eq!(b.gates.len(), 4 + 9);
    }

    #[test]
    fn generation_is_deterministic_and_seed_dependent() {
        let l = full(5);
        let a = generate_rea(5, 20, &l, 11, GateKind::Rzyz, GateKind::ControlledV).unwrap();
        let b = generate_rea(5, 20, &l, 11, GateKind::Rzyz, GateKind::ControlledV).unwrap();
        let c = generate_rea(5, 20, &l, 12, GateKind::Rzyz, GateKind::ControlledV).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.gates, c.gates);
    }

    #[test]
    fn blocks_respect_layout() {
        let l = build_layout(LayoutKind::Hexagonal, 5, None).unwrap();
        let a = generate_rea(5, 40, &l, 5, GateKind::Rzxz, GateKind::Cz).unwrap();
        for g in a.gates.iter().filter(|g| g.kind.arity() == 2) {
            let (x, y) = (g.qubits[0], g.qubits[1]);
            assert!(l
                .edges
                .iter()
                .any(|&[a, b]| (a == x && b == y) || (a == y && b == x)));
        }
    }

    #[test]
    fn rx_pi_is_x_up_to_phase() {
        let a = Ansatz::new(1, 1, vec![Gate::new(GateKind::Rx, vec![0], vec![0])]).unwrap();
        let u = a.unitary(&[std::f64::consts::PI]).unwrap();
        let want = gates::pauli_x().scale(C64::new(0.0, -1.0));
        assert!(u.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn circuit_unitary_is_unitary() {
        let a = generate_rea(4, 8, &full(4), 9, GateKind::Prx, GateKind::ControlledV).unwrap();
        let params: Vec<f64> = (0..a.num_params).map(|i| 0.37 * i as f64 - 2.0).collect();
        assert!(a.unitary(&params).unwrap().is_unitary(1e-10));
    }

    #[test]
    fn program_matches_unitary_conjugation() {
        let a = generate_rea(3, 6, &full(3), 2, GateKind::U3, GateKind::ControlledV).unwrap();
        let params: Vec<f64> = (0..a.num_params).map(|i| (i as f64 * 0.71).sin()).collect();
        let rho = PureState::normalized(
            (0..8)
                .map(|i| C64::new(1.0 + i as f64, -0.5 * i as f64))
                .collect(),
        )
        .unwrap()
        .density();
        let u = a.unitary(&params).unwrap();
        let want = u.dot(rho.matrix()).dot(&u.adjoint());
        let got = apply_circuit(&rho, &a, &params, None).unwrap();
        assert!(got.matrix().max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn encoding_preserves_purity_and_distance() {
        let a = generate_rea(3, 5, &full(3), 4, GateKind::Rzyz, GateKind::ControlledV).unwrap();
        let params: Vec<f64> = (0..a.num_params).map(|i| 0.3 * i as f64).collect();
        let enc = Encoder::new(1, a, params).unwrap();
        let r = PureState::basis(1, 0).unwrap().density();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = PureState::new(vec![C64::new(h, 0.0), C64::new(0.0, h)])
            .unwrap()
            .density();
        let (er, es) = (
            encode(&r, &enc, None).unwrap(),
            encode(&s, &enc, None).unwrap(),
        );
        assert!((er.purity() - 1.0).abs() < 1e-12);
        let before = trace_distance(&r, &s).unwrap();
        let after = trace_distance(&er, &es).unwrap();
        assert!((before - after).abs() < 1e-10);
    }

    #[test]
    fn malformed_circuits_are_rejected() {
        assert!(Ansatz::new(2, 0, vec![Gate::new(GateKind::Cz, vec![0, 2], vec![])]).is_err());
        assert!(Ansatz::new(2, 1, vec![Gate::new(GateKind::Rx, vec![0], vec![1])]).is_err());
        assert!(Ansatz::new(2, 0, vec![Gate::new(GateKind::Cx, vec![1, 1], vec![])]).is_err());
        let l = full(3);
        assert!(generate_rea(3, 2, &l, 0, GateKind::Cz, GateKind::Cz).is_err());
        assert!(generate_rea(3, 2, &l, 0, GateKind::Rzyz, GateKind::Rx).is_err());
        assert!(generate_rea(4, 2, &l, 0, GateKind::Rzyz, GateKind::Cz).is_err());
    }
}
