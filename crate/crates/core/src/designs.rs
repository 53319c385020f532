//! Finite state ensembles used to evaluate losses: the standard design sets
//! on one and two qubits, weighted variants, and seeded Haar-random samples.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmat::{ComplexMatrix, PureState, C64, MAX_QUBITS, ONE, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    TwoDesign,
    WeightedTwoDesign,
    Haar,
}

/// A list of pure `k`-qubit states with positive weights summing to the
/// number of states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSet {
    pub k: usize,
    pub kind: DesignKind,
    pub states: Vec<PureState>,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl StateSet {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.iter().any(|&w| w != 1.0)
    }

    /// Short label used in reports, e.g. `two_design` or `haar:1000:7`.
    pub fn label(&self) -> String {
        match self.kind {
            DesignKind::TwoDesign => "two_design".into(),
            DesignKind::WeightedTwoDesign => "weighted_two_design".into(),
            DesignKind::Haar => format!("haar:{}:{}", self.len(), self.seed.unwrap_or(0)),
        }
    }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn single_qubit_design() -> Vec<[C64; 2]> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    vec![
        [ONE, ZERO],
        [ZERO, ONE],
        [c(h, 0.0), c(h, 0.0)],
        [c(h, 0.0), c(-h, 0.0)],
        [c(h, 0.0), c(0.0, h)],
        [c(h, 0.0), c(0.0, -h)],
    ]
}

/// The design set on `k` qubits.
///
/// `k = 1`: `|0>, |1>, |+>, |->, |+i>, |-i>`, an exact two-design.
/// `k = 2`: the computational basis, the products of equal-basis
/// eigenstates in the X and Y bases, and the four Bell states (16 states).
/// This set only approximates the Haar second moment.
pub fn two_design(k: usize) -> Result<StateSet> {
    let one = single_qubit_design();
    let states: Vec<Vec<C64>> = match k {
        1 => one.iter().map(|s| s.to_vec()).collect(),
        2 => {
            let mut out = Vec::with_capacity(16);
            // Z, X and Y basis pairs: indices (0,1), (2,3), (4,5) in `one`
            for basis in [[0usize, 1], [2, 3], [4, 5]] {
                for &a in &basis {
                    for &b in &basis {
                        let (x, y) = (one[a], one[b]);
                        out.push(vec![x[0] * y[0], x[0] * y[1], x[1] * y[0], x[1] * y[1]]);
                    }
                }
            }
            let h = std::f64::consts::FRAC_1_SQRT_2;
            let (p, m) = (c(h, 0.0), c(-h, 0.0));
            out.push(vec![p, ZERO, ZERO, p]);
            out.push(vec![p, ZERO, ZERO, m]);
            out.push(vec![ZERO, p, p, ZERO]);
            out.push(vec![ZERO, p, m, ZERO]);
            out
        }
        other => return Err(Error::UnsupportedDesign(other)),
    };
    let states = states
        .into_iter()
        .map(PureState::new)
        .collect::<Result<Vec<_>>>()?;
    let n = states.len();
    Ok(StateSet {
        k,
        kind: DesignKind::TwoDesign,
        states,
        weights: vec![1.0; n],
        seed: None,
    })
}

/// Reweights a state set; weights must be positive and are rescaled to sum
/// to the number of states.
pub fn weighted(base: &StateSet, weights: &[f64]) -> Result<StateSet> {
    if weights.len() != base.len() {
        return Err(Error::DimensionMismatch {
            expected: base.len(),
            found: weights.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "weight {w} is not positive"
        )));
    }
    let total: f64 = weights.iter().sum();
    let scale = base.len() as f64 / total;
    Ok(StateSet {
        k: base.k,
        kind: DesignKind::WeightedTwoDesign,
        states: base.states.clone(),
        weights: weights.iter().map(|w| w * scale).collect(),
        seed: base.seed,
    })
}

/// How a loss is estimated: on a design set, a weighted design set, or a
/// seeded Haar sample. Parses from `two_design`, `weighted`, `haar`,
/// `haar:COUNT` and `haar:COUNT:SEED`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Estimator {
    TwoDesign,
    Weighted,
    Haar { count: usize, seed: u64 },
}

impl Estimator {
    pub const DEFAULT_HAAR_COUNT: usize = 1000;

    /// The state set for `k` data qubits. `weights` applies to `Weighted`;
    /// without it the amplitude damping weights are used (`k = 1` only).
    pub fn state_set(&self, k: usize, weights: Option<&[f64]>) -> Result<StateSet> {
        match self {
            Estimator::TwoDesign => two_design(k),
            Estimator::Weighted => {
                let base = two_design(k)?;
                match weights {
                    Some(w) => weighted(&base, w),
                    None if k == 1 => weighted(&base, &amplitude_damping_weights()),
                    None => Err(Error::InvalidParameter(
                        "weighted estimator needs explicit weights for k > 1".into(),
                    )),
                }
            }
            Estimator::Haar { count, seed } => haar_sample(k, *count, *seed),
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Estimator::TwoDesign => write!(f, "two_design"),
            Estimator::Weighted => write!(f, "weighted"),
            Estimator::Haar { count, seed } => write!(f, "haar:{count}:{seed}"),
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown estimator {s:?}"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["two_design"] => Ok(Estimator::TwoDesign),
            ["weighted"] | ["weighted_two_design"] => Ok(Estimator::Weighted),
            ["haar", rest @ ..] if rest.len() <= 2 => {
                let count = match rest.first() {
                    Some(c) => c.parse().map_err(|_| bad())?,
                    None => Self::DEFAULT_HAAR_COUNT,
                };
                let seed = match rest.get(1) {
                    Some(v) => v.parse().map_err(|_| bad())?,
                    None => 0,
                };
                Ok(Estimator::Haar { count, seed })
            }
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Estimator {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Estimator> for String {
    fn from(e: Estimator) -> String {
        e.to_string()
    }
}

/// Weights on the single-qubit design that favour `|1>` over `|0>`, for
/// amplitude damping.
pub fn amplitude_damping_weights() -> Vec<f64> {
    vec![0.95, 1.05, 1.0, 1.0, 1.0, 1.0]
}

/// A Haar-random unitary of dimension `dim`: QR decomposition of a complex
/// Gaussian matrix with the phases of `R`'s diagonal moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let z = DMatrix::<C64>::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    ComplexMatrix::from_nalgebra(&q)
}

/// `count` Haar-random pure states on `k` qubits, the first columns of
/// Haar-random unitaries drawn from `ChaCha8Rng::seed_from_u64(seed)`.
pub fn haar_sample(k: usize, count: usize, seed: u64) -> Result<StateSet> {
    if k == 0 || k > MAX_QUBITS {
        return Err(Error::TooManyQubits(k));
    }
    if count < 2 {
        return Err(Error::InvalidParameter(
            "a Haar sample needs at least two states".into(),
        ));
    }
    let dim = 1usize << k;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = (0..count)
        .map(|_| PureState::normalized(haar_unitary(dim, &mut rng).column(0)))
        .collect::<Result<Vec<_>>>()?;
    Ok(StateSet {
        k,
        kind: DesignKind::Haar,
        states,
        weights: vec![1.0; count],
        seed: Some(seed),
    })
}
