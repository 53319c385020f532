//! Standard code encoders, Pauli error enumeration and the potential
//! distance probe.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{Ansatz, Encoder, Gate, GateKind};
use crate::channels::KrausChannel;
use crate::designs::{two_design, StateSet};
use crate::error::{Error, Result};
use crate::loss::dloss_under_channel;
use crate::qmat::{gates, ComplexMatrix, MAX_QUBITS};

/// Names accepted by [`standard_encoder`].
pub const STANDARD_CODES: [&str; 4] = ["bit_flip_3", "approximate_4", "css_422", "perfect_5"];

/// A fixed encoder with its code parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeSpec {
    pub name: String,
    pub n: usize,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claimed_distance: Option<usize>,
    pub circuit: Ansatz,
}

impl CodeSpec {
    pub fn encoder(&self) -> Result<Encoder> {
        Encoder::new(self.k, self.circuit.clone(), Vec::new())
    }

    pub fn unitary(&self) -> Result<ComplexMatrix> {
        self.circuit.unitary(&[])
    }
}

fn fixed(kind: GateKind, qubits: &[usize]) -> Gate {
    Gate::new(kind, qubits.to_vec(), Vec::new())
}

/// Controlled-Y as `Sdg` on the target, CX, then `S` on the target.
fn cy(c: usize, t: usize) -> [Gate; 3] {
    [
        fixed(GateKind::Sdg, &[t]),
        fixed(GateKind::Cx, &[c, t]),
        fixed(GateKind::S, &[t]),
    ]
}

/// The encoder circuit of a standard code. Data qubits come first.
///
/// - `bit_flip_3`: `|0> -> |000>`, `|1> -> |111>`.
/// - `approximate_4`: `|0> -> (|0000> + |1111>)/sqrt2`,
///   `|1> -> (|0011> + |1100>)/sqrt2`.
/// - `css_422`: two logical qubits in the even-weight space stabilized by
///   `XXXX` and `ZZZZ`.
/// - `perfect_5`: the code stabilized by the cyclic shifts of `XZZXI`, with
///   logical operators `ZZZZZ` and `XXXXX`.
pub fn standard_encoder(name: &str) -> Result<CodeSpec> {
    use GateKind::{Cx, Cz, H, S, Z};
    let (n, k, d, gates): (usize, usize, usize, Vec<Gate>) = match name {
        "bit_flip_3" => (3, 1, 1, vec![fixed(Cx, &[0, 1]), fixed(Cx, &[0, 2])]),
        "approximate_4" => (
            4,
            1,
            2,
            vec![
                fixed(Cx, &[0, 2]),
                fixed(Cx, &[0, 3]),
                fixed(H, &[1]),
                fixed(Cx, &[1, 2]),
                fixed(Cx, &[1, 3]),
                fixed(Cx, &[2, 0]),
            ],
        ),
        "css_422" => (
            4,
            2,
            2,
            vec![
                fixed(Cx, &[0, 3]),
                fixed(Cx, &[1, 3]),
                fixed(H, &[2]),
                fixed(Cx, &[2, 0]),
                fixed(Cx, &[2, 1]),
                fixed(Cx, &[2, 3]),
            ],
        ),
        "perfect_5" => {
            let mut g = vec![fixed(Z, &[0]), fixed(H, &[1]), fixed(S, &[1])];
            g.extend(cy(1, 0));
            g.extend([fixed(Cz, &[1, 2]), fixed(Cz, &[1, 4])]);
            g.extend([
                fixed(H, &[2]),
                fixed(Cx, &[2, 0]),
                fixed(Cz, &[2, 3]),
                fixed(Cz, &[2, 4]),
            ]);
            g.extend([
                fixed(H, &[3]),
                fixed(Cx, &[3, 0]),
                fixed(Cz, &[3, 1]),
                fixed(Cz, &[3, 2]),
            ]);
            g.extend([fixed(H, &[4]), fixed(S, &[4])]);
            g.extend(cy(4, 0));
            g.extend([fixed(Cz, &[4, 1]), fixed(Cz, &[4, 3])]);
            (5, 1, 3, g)
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown code {other}; expected one of {}",
                STANDARD_CODES.join(", ")
            )))
        }
    };
    Ok(CodeSpec {
        name: name.to_string(),
        n,
        k,
        claimed_distance: Some(d),
        circuit: Ansatz::new(n, 0, gates)?,
    })
}

/// A Pauli operator on `n` qubits, e.g. `IXIZY`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliError {
    pub paulis: String,
    pub weight: usize,
}

impl PauliError {
    pub fn new(paulis: &str) -> Result<Self> {
        if let Some(c) = paulis.chars().find(|c| !"IXYZ".contains(*c)) {
            return Err(Error::InvalidParameter(format!("invalid Pauli letter {c}")));
        }
        Ok(Self {
            paulis: paulis.to_string(),
            weight: paulis.chars().filter(|&c| c != 'I').count(),
        })
    }

    /// Qubits carrying a non-identity factor.
    pub fn support(&self) -> Vec<usize> {
        self.paulis
            .chars()
            .enumerate()
            .filter(|(_, c)| *c != 'I')
            .map(|(i, _)| i)
            .collect()
    }

    /// `N(rho) = (1 - p) rho + p E rho E` acting on the support of `E`.
    pub fn channel(&self, p: f64) -> Result<KrausChannel> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!(
                "probability {p} outside [0, 1]"
            )));
        }
        let support = self.support();
        let local: String = self.paulis.chars().filter(|&c| c != 'I').collect();
        let e = gates::pauli_string(&local).expect("validated letters");
        let id = ComplexMatrix::identity(e.rows());
        KrausChannel::new(
            support,
            vec![id.scale_real((1.0 - p).sqrt()), e.scale_real(p.sqrt())],
        )
    }
}

/// `C(n, w) 3^w`, the number of weight-`w` Pauli errors on `n` qubits.
pub fn error_count(n: usize, w: usize) -> u64 {
    if w > n {
        return 0;
    }
    let mut binom: u64 = 1;
    for i in 0..w {
        binom = binom * (n - i) as u64 / (i + 1) as u64;
    }
    binom * 3u64.pow(w as u32)
}

/// All weight-`w` Pauli errors on `n` qubits in lexicographic order with
/// `I < X < Y < Z`.
pub fn enumerate_pauli_errors(n: usize, w: usize) -> Result<Vec<PauliError>> {
    if n > MAX_QUBITS {
        return Err(Error::TooManyQubits(n));
    }
    if w > n {
        return Err(Error::InvalidParameter(format!(
            "weight {w} exceeds {n} qubits"
        )));
    }
    fn grow(prefix: &mut String, left: usize, w: usize, out: &mut Vec<PauliError>) {
        if left == 0 {
            out.push(PauliError {
                paulis: prefix.clone(),
                weight: prefix.chars().filter(|&c| c != 'I').count(),
            });
            return;
        }
        for c in ['I', 'X', 'Y', 'Z'] {
            let used = prefix.chars().filter(|&c| c != 'I').count() + usize::from(c != 'I');
            // enough positions must remain to reach weight w
            if used <= w && used + left > w {
                prefix.push(c);
                grow(prefix, left - 1, w, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::with_capacity(error_count(n, w) as usize);
    grow(&mut String::with_capacity(n), n, w, &mut out);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Allowed worst-case loss; 0 selects the exact probe.
    pub eps: f64,
    /// Error probability of the probing channel.
    pub p: f64,
    /// Numerical tolerance of the exact probe.
    pub exact_tol: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            eps: 0.0,
            p: 0.5,
            exact_tol: 1e-9,
        }
    }
}

impl ProbeConfig {
    pub fn approximate(eps: f64) -> Self {
        Self {
            eps,
            ..Self::default()
        }
    }

    fn threshold(&self) -> f64 {
        if self.eps > 0.0 {
            self.eps
        } else {
            self.exact_tol
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightResult {
    pub weight: usize,
    pub errors: usize,
    pub max_loss: f64,
    pub worst_error: String,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Smallest weight whose worst error exceeds the threshold. This is a
    /// potential distance, not a proven one.
    pub d_star: usize,
    pub threshold: f64,
    pub per_weight: Vec<WeightResult>,
}

/// Worst-case loss over `set` under each Pauli channel of weight 1, 2, ...
/// until some error exceeds the threshold; that weight is `d_star`.
pub fn potential_distance(
    encoder: &Encoder,
    cfg: &ProbeConfig,
    set: &StateSet,
) -> Result<ProbeReport> {
    if !(cfg.eps >= 0.0 && cfg.exact_tol > 0.0) {
        return Err(Error::InvalidParameter(
            "eps must be >= 0 and exact_tol > 0".into(),
        ));
    }
    let n = encoder.n();
    let threshold = cfg.threshold();
    let mut per_weight = Vec::new();
    for w in 1..=n {
        let errors = enumerate_pauli_errors(n, w)?;
        let losses = errors
            .par_iter()
            .map(|e| {
                let r = dloss_under_channel(set, encoder, &e.channel(cfg.p)?)?;
                r.d_worst
                    .ok_or_else(|| Error::Numerical("missing worst-case loss".into()))
            })
            .collect::<Result<Vec<f64>>>()?;
        let (idx, max_loss) =
            losses
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, l)| {
                    if l > best.1 {
                        (i, l)
                    } else {
                        best
                    }
                });
        let passed = max_loss <= threshold;
        per_weight.push(WeightResult {
            weight: w,
            errors: errors.len(),
            max_loss,
            worst_error: errors[idx].paulis.clone(),
            passed,
        });
        if !passed {
            return Ok(ProbeReport {
                d_star: w,
                threshold,
                per_weight,
            });
        }
    }
    Err(Error::Numerical(format!(
        "no Pauli error up to weight {n} exceeded {threshold}"
    )))
}

/// [`potential_distance`] with the design set of the encoder's `k`.
pub fn probe_with_design(encoder: &Encoder, cfg: &ProbeConfig) -> Result<ProbeReport> {
    potential_distance(encoder, cfg, &two_design(encoder.k)?)
}
