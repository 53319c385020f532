//! Circuits compiled to primitive rotations, fixed gates and noise channels,
//! with reverse-mode differentiation of linear functionals of the output.
//!
//! A program `L` maps operators to operators. For Hermitian `X` and `C`,
//! [`Program::backward`] accumulates the gradient of `Re Tr(C L(X))` with
//! respect to the circuit parameters. Unitary steps are undone by inverting
//! them; the input of each channel is kept on the tape.

use serde::{Deserialize, Serialize};

use crate::channels::{CompositeNoise, KrausChannel, QuantumChannel};
use crate::error::{Error, Result};
use crate::qmat::{
    apply_local_left, apply_local_right_adjoint, gates, trace_with_local, ComplexMatrix,
};

use super::{Ansatz, GateKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn pauli(self) -> ComplexMatrix {
        match self {
            Axis::X => gates::pauli_x(),
            Axis::Y => gates::pauli_y(),
            Axis::Z => gates::pauli_z(),
        }
    }

    fn rotation(self, angle: f64) -> ComplexMatrix {
        match self {
            Axis::X => gates::rx(angle),
            Axis::Y => gates::ry(angle),
            Axis::Z => gates::rz(angle),
        }
    }
}

/// One step of a compiled program.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    /// `exp(-i coeff theta[slot] P / 2)` on `qubit`, optionally controlled.
    Rotation {
        axis: Axis,
        qubit: usize,
        control: Option<usize>,
        slot: usize,
        coeff: f64,
    },
    Fixed {
        matrix: ComplexMatrix,
        qubits: Vec<usize>,
    },
    Channel(KrausChannel),
}

impl Op {
    fn qubits(&self) -> Vec<usize> {
        match self {
            Op::Rotation { qubit, control, .. } => match control {
                Some(c) => vec![*c, *qubit],
                None => vec![*qubit],
            },
            Op::Fixed { qubits, .. } => qubits.clone(),
            Op::Channel(ch) => ch.targets().to_vec(),
        }
    }

    fn unitary(&self, params: &[f64]) -> Option<ComplexMatrix> {
        match self {
            Op::Rotation {
                axis,
                control,
                slot,
                coeff,
                ..
            } => {
                let r = axis.rotation(coeff * params[*slot]);
                Some(match control {
                    Some(_) => gates::controlled(&r),
                    None => r,
                })
            }
            Op::Fixed { matrix, .. } => Some(matrix.clone()),
            Op::Channel(_) => None,
        }
    }

    /// Hermitian generator `H` with `d/d(angle) U = -i/2 H U`.
    fn generator(&self) -> Option<ComplexMatrix> {
        match self {
            Op::Rotation { axis, control, .. } => {
                let p = axis.pauli();
                Some(match control {
                    Some(_) => {
                        let mut m = ComplexMatrix::zeros(4, 4);
                        for r in 0..2 {
                            for c in 0..2 {
                                m[(2 + r, 2 + c)] = p[(r, c)];
                            }
                        }
                        m
                    }
                    None => p,
                })
            }
            _ => None,
        }
    }
}

/// Intermediate data kept by [`Program::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    pub output: ComplexMatrix,
    channel_inputs: Vec<ComplexMatrix>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    num_qubits: usize,
    num_params: usize,
    ops: Vec<Op>,
}

impl Program {
    pub fn new(num_qubits: usize, num_params: usize) -> Self {
        Self {
            num_qubits,
            num_params,
            ops: Vec::new(),
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    fn check_op(&self, op: &Op) -> Result<()> {
        for q in op.qubits() {
            if q >= self.num_qubits {
                return Err(Error::IndexOutOfRange {
                    index: q,
                    num_qubits: self.num_qubits,
                });
            }
        }
        if let Op::Rotation { slot, .. } = op {
            if *slot >= self.num_params {
                return Err(Error::InvalidParameter(format!(
                    "slot {slot} out of range for {} parameters",
                    self.num_params
                )));
            }
        }
        Ok(())
    }

    pub fn push(&mut self, op: Op) -> Result<()> {
        self.check_op(&op)?;
        self.ops.push(op);
        Ok(())
    }

    fn rot(axis: Axis, qubit: usize, control: Option<usize>, slot: usize, coeff: f64) -> Op {
        Op::Rotation {
            axis,
            qubit,
            control,
            slot,
            coeff,
        }
    }

    /// Appends `ansatz` with its qubit `i` mapped to `wires[i]` and its slot
    /// `s` mapped to `slot_offset + s`. Gate noise, if present, follows each
    /// two-qubit gate.
    pub fn push_circuit(
        &mut self,
        ansatz: &Ansatz,
        slot_offset: usize,
        wires: &[usize],
        gate_noise: Option<&CompositeNoise>,
    ) -> Result<()> {
        if wires.len() != ansatz.num_qubits {
            return Err(Error::DimensionMismatch {
                expected: ansatz.num_qubits,
                found: wires.len(),
            });
        }
        for g in &ansatz.gates {
            let q: Vec<usize> = g.qubits.iter().map(|&i| wires[i]).collect();
            let s: Vec<usize> = g.slots.iter().map(|&i| slot_offset + i).collect();
            for op in compile_gate(g.kind, &q, &s) {
                self.push(op)?;
            }
            if g.kind.arity() == 2 {
                if let Some(noise) = gate_noise {
                    for ch in noise.gate_channels(q[0], q[1])? {
                        self.push(Op::Channel(ch))?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Appends the inverse of `ansatz` (noise-free), sharing parameter slots.
    pub fn push_inverse_circuit(
        &mut self,
        ansatz: &Ansatz,
        slot_offset: usize,
        wires: &[usize],
    ) -> Result<()> {
        let mut sub = Program::new(self.num_qubits, self.num_params);
        sub.push_circuit(ansatz, slot_offset, wires, None)?;
        for op in sub.ops.into_iter().rev() {
            let inv = match op {
                Op::Rotation {
                    axis,
                    qubit,
                    control,
                    slot,
                    coeff,
                } => Self::rot(axis, qubit, control, slot, -coeff),
                Op::Fixed { matrix, qubits } => Op::Fixed {
                    matrix: matrix.adjoint(),
                    qubits,
                },
                Op::Channel(_) => unreachable!("noise-free circuit"),
            };
            self.push(inv)?;
        }
        Ok(())
    }

    /// Appends the per-qubit noise of `noise` on each of `qubits`.
    pub fn push_noise(&mut self, noise: &CompositeNoise, qubits: &[usize]) -> Result<()> {
        let ch = noise.qubit_channel()?;
        for &q in qubits {
            self.push(Op::Channel(ch.retarget(vec![q])?))?;
        }
        Ok(())
    }

    fn check_input(&self, params: &[f64], x: &ComplexMatrix) -> Result<()> {
        if params.len() != self.num_params {
            return Err(Error::DimensionMismatch {
                expected: self.num_params,
                found: params.len(),
            });
        }
        if !x.is_square() || x.rows() != 1 << self.num_qubits {
            return Err(Error::DimensionMismatch {
                expected: 1 << self.num_qubits,
                found: x.rows(),
            });
        }
        Ok(())
    }

    /// `L(x)`.
    pub fn apply(&self, params: &[f64], x: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.check_input(params, x)?;
        let n = self.num_qubits;
        let mut m = x.clone();
        for op in &self.ops {
            match op {
                Op::Channel(ch) => m = ch.apply_to(&m, n)?,
                _ => {
                    let u = op.unitary(params).expect("unitary op");
                    let q = op.qubits();
                    apply_local_left(&mut m, &u, &q, n);
                    apply_local_right_adjoint(&mut m, &u, &q, n);
                }
            }
        }
        Ok(m)
    }

    /// `L(x)` together with the data needed by [`Program::backward`].
    pub fn forward(&self, params: &[f64], x: &ComplexMatrix) -> Result<Tape> {
        self.check_input(params, x)?;
        let n = self.num_qubits;
        let mut m = x.clone();
        let mut channel_inputs = Vec::new();
        for op in &self.ops {
            match op {
                Op::Channel(ch) => {
                    let out = ch.apply_to(&m, n)?;
                    channel_inputs.push(std::mem::replace(&mut m, out));
                }
                _ => {
                    let u = op.unitary(params).expect("unitary op");
                    let q = op.qubits();
                    apply_local_left(&mut m, &u, &q, n);
                    apply_local_right_adjoint(&mut m, &u, &q, n);
                }
            }
        }
        Ok(Tape {
            output: m,
            channel_inputs,
        })
    }

    /// Adds the gradient of `Re Tr(c L(x))` to `grad`, where `tape` comes
    /// from `forward(params, x)`. Both `x` and `c` must be Hermitian.
    pub fn backward(
        &self,
        params: &[f64],
        tape: Tape,
        c: &ComplexMatrix,
        grad: &mut [f64],
    ) -> Result<()> {
        if grad.len() != self.num_params {
            return Err(Error::DimensionMismatch {
                expected: self.num_params,
                found: grad.len(),
            });
        }
        self.check_input(params, c)?;
        let n = self.num_qubits;
        let Tape {
            output: mut x,
            mut channel_inputs,
        } = tape;
        let mut c = c.clone();
        for op in self.ops.iter().rev() {
            match op {
                Op::Channel(ch) => {
                    c = ch.apply_adjoint_to(&c, n)?;
                    x = channel_inputs
                        .pop()
                        .ok_or_else(|| Error::Numerical("tape exhausted".into()))?;
                }
                _ => {
                    let q = op.qubits();
                    if let (Some(h), Op::Rotation { slot, coeff, .. }) = (op.generator(), op) {
                        // d/dtheta Re Tr(C U X U^dag) = coeff * Im Tr(C H X) for Hermitian C, X
                        grad[*slot] += coeff * trace_with_local(&c, &h, &q, n, &x).im;
                    }
                    let u_inv = op.unitary(params).expect("unitary op").adjoint();
                    apply_local_left(&mut x, &u_inv, &q, n);
                    apply_local_right_adjoint(&mut x, &u_inv, &q, n);
                    apply_local_left(&mut c, &u_inv, &q, n);
                    apply_local_right_adjoint(&mut c, &u_inv, &q, n);
                }
            }
        }
        Ok(())
    }
}

fn compile_gate(kind: GateKind, q: &[usize], s: &[usize]) -> Vec<Op> {
    use Axis::{X, Y, Z};
    let r = Program::rot;
    match kind {
        GateKind::Rx => vec![r(X, q[0], None, s[0], 1.0)],
        GateKind::Ry => vec![r(Y, q[0], None, s[0], 1.0)],
        GateKind::Rz => vec![r(Z, q[0], None, s[0], 1.0)],
        // u3(theta, phi, lambda) = Rz(phi) Ry(theta) Rz(lambda) up to global phase
        GateKind::U3 => vec![
            r(Z, q[0], None, s[2], 1.0),
            r(Y, q[0], None, s[0], 1.0),
            r(Z, q[0], None, s[1], 1.0),
        ],
        GateKind::Rzyz => vec![
            r(Z, q[0], None, s[0], 1.0),
            r(Y, q[0], None, s[1], 1.0),
            r(Z, q[0], None, s[2], 1.0),
        ],
        GateKind::Rzxz => vec![
            r(Z, q[0], None, s[0], 1.0),
            r(X, q[0], None, s[1], 1.0),
            r(Z, q[0], None, s[2], 1.0),
        ],
        GateKind::Prx => vec![
            r(Z, q[0], None, s[1], -1.0),
            r(X, q[0], None, s[0], 1.0),
            r(Z, q[0], None, s[1], 1.0),
        ],
        GateKind::ControlledV => vec![
            r(Z, q[1], Some(q[0]), s[0], 1.0),
            r(Y, q[1], Some(q[0]), s[1], 1.0),
            r(Z, q[1], Some(q[0]), s[2], 1.0),
        ],
        fixed => vec![Op::Fixed {
            matrix: fixed.matrix(&[]),
            qubits: q.to_vec(),
        }],
    }
}

/// Deterministic pseudo-random Hermitian matrix for tests.
#[cfg(test)]
fn hermitian_from_seed(dim: usize, seed: u64) -> ComplexMatrix {
    use crate::qmat::C64;
    let mut m = ComplexMatrix::zeros(dim, dim);
    let mut s = seed;
    let mut next = || {
        s = s
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    for r in 0..dim {
        for c in 0..dim {
            m[(r, c)] = C64::new(next(), next());
        }
    }
    m.hermitian_part()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{build_layout, generate_rea, LayoutKind};
    use crate::channels::NoiseSpec;

    /// Central differences of `Re Tr(C L_theta(X))`, refined by Richardson
    /// extrapolation over two step sizes.
    fn fd_oracle(prog: &Program, params: &[f64], x: &ComplexMatrix, c: &ComplexMatrix) -> Vec<f64> {
        let f = |p: &[f64]| c.trace_product_re(&prog.apply(p, x).unwrap());
        let central = |i: usize, h: f64| {
            let mut a = params.to_vec();
            let mut b = params.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        };
        (0..params.len())
            .map(|i| {
                let h = 1e-3;
                (4.0 * central(i, h / 2.0) - central(i, h)) / 3.0
            })
            .collect()
    }

    fn check(prog: &Program, seed: u64) {
        let params: Vec<f64> = (0..prog.num_params())
            .map(|i| ((i as f64 + 1.0) * 0.913 + seed as f64).sin())
            .collect();
        let d = 1 << prog.num_qubits();
        let x = hermitian_from_seed(d, seed);
        let c = hermitian_from_seed(d, seed + 100);
        let tape = prog.forward(&params, &x).unwrap();
        let mut grad = vec![0.0; prog.num_params()];
        prog.backward(&params, tape, &c, &mut grad).unwrap();
        let want = fd_oracle(prog, &params, &x, &c);
        for (g, w) in grad.iter().zip(&want) {
            assert!((g - w).abs() < 1e-7, "adjoint {g} vs finite difference {w}");
        }
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let l = build_layout(LayoutKind::Full, 3, None).unwrap();
        for (single, two) in [
            (GateKind::Rzyz, GateKind::ControlledV),
            (GateKind::U3, GateKind::Cz),
            (GateKind::Prx, GateKind::ControlledV),
            (GateKind::Rx, GateKind::Cz),
        ] {
            let a = generate_rea(3, 4, &l, 17, single, two).unwrap();
            check(&a.program(None).unwrap(), 3);
        }
    }

    #[test]
    fn adjoint_gradient_through_channels() {
        let l = build_layout(LayoutKind::Full, 3, None).unwrap();
        let a = generate_rea(3, 4, &l, 5, GateKind::Rzyz, GateKind::ControlledV).unwrap();
        let noise = CompositeNoise::new(
            NoiseSpec::AmplitudeDamping { gamma: 0.2 },
            Some(NoiseSpec::CorrelatedDepolarizing2q { p: 0.05 }),
        )
        .unwrap();
        let mut prog = a.program(Some(&noise)).unwrap();
        prog.push_noise(&noise, &[0, 1, 2]).unwrap();
        prog.push_inverse_circuit(&a, 0, &[0, 1, 2]).unwrap();
        check(&prog, 9);
    }

    #[test]
    fn inverse_circuit_undoes_circuit() {
        let l = build_layout(LayoutKind::Full, 3, None).unwrap();
        let a = generate_rea(3, 5, &l, 1, GateKind::U3, GateKind::ControlledV).unwrap();
        let mut prog = a.program(None).unwrap();
        prog.push_inverse_circuit(&a, 0, &[0, 1, 2]).unwrap();
        let params: Vec<f64> = (0..a.num_params).map(|i| i as f64 * 0.1).collect();
        let x = hermitian_from_seed(8, 2);
        assert!(prog.apply(&params, &x).unwrap().max_abs_diff(&x) < 1e-12);
    }
}
