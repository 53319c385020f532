//! Qubit connectivity graphs that constrain where two-qubit gates may act.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LAYOUT_DATA: &str = include_str!("../../data/layouts.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    Full,
    Dense,
    Square,
    Star,
    Hexagonal,
    Custom,
}

impl fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LayoutKind::Full => "full",
            LayoutKind::Dense => "dense",
            LayoutKind::Square => "square",
            LayoutKind::Star => "star",
            LayoutKind::Hexagonal => "hexagonal",
            LayoutKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl FromStr for LayoutKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(LayoutKind::Full),
            "dense" => Ok(LayoutKind::Dense),
            "square" => Ok(LayoutKind::Square),
            "star" => Ok(LayoutKind::Star),
            "hexagonal" => Ok(LayoutKind::Hexagonal),
            "custom" => Ok(LayoutKind::Custom),
            other => Err(Error::InvalidParameter(format!("unknown layout {other:?}"))),
        }
    }
}

/// An undirected connectivity graph on `num_qubits` qubits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub kind: LayoutKind,
    pub num_qubits: usize,
    pub edges: Vec<[usize; 2]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutEntry {
    max_qubits: usize,
    edges: Vec<[usize; 2]>,
}

fn shipped(kind: LayoutKind) -> Result<LayoutEntry> {
    let mut table: BTreeMap<String, LayoutEntry> = toml::from_str(LAYOUT_DATA)
        .map_err(|e| Error::InvalidParameter(format!("layout data: {e}")))?;
    table
        .remove(&kind.to_string())
        .ok_or_else(|| Error::InvalidParameter(format!("no shipped edges for {kind}")))
}

impl Layout {
    /// Validates edge endpoints and rejects self-loops and duplicates.
    pub fn custom(num_qubits: usize, edges: Vec<[usize; 2]>) -> Result<Self> {
        Self::checked(LayoutKind::Custom, num_qubits, edges)
    }

    fn checked(kind: LayoutKind, num_qubits: usize, edges: Vec<[usize; 2]>) -> Result<Self> {
        for (i, &[a, b]) in edges.iter().enumerate() {
            for q in [a, b] {
                if q >= num_qubits {
                    return Err(Error::IndexOutOfRange {
                        index: q,
                        num_qubits,
                    });
                }
            }
            if a == b {
                return Err(Error::DuplicateIndex(a));
            }
            let dup = edges[..i]
                .iter()
                .any(|&[x, y]| (x == a && y == b) || (x == b && y == a));
            if dup {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a}, {b}) listed twice"
                )));
            }
        }
        Ok(Self {
            kind,
            num_qubits,
            edges,
        })
    }

    pub fn is_connected(&self) -> bool {
        if self.num_qubits <= 1 {
            return true;
        }
        let mut seen = vec![false; self.num_qubits];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(q) = stack.pop() {
            for &[a, b] in &self.edges {
                let next = if a == q {
                    b
                } else if b == q {
                    a
                } else {
                    continue;
                };
                if !seen[next] {
                    seen[next] = true;
                    stack.push(next);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Builds a named layout for `num_qubits` qubits. `custom_edges` is required
/// for [`LayoutKind::Custom`] and ignored otherwise.
pub fn build_layout(
    kind: LayoutKind,
    num_qubits: usize,
    custom_edges: Option<Vec<[usize; 2]>>,
) -> Result<Layout> {
    match kind {
        LayoutKind::Full => {
            let mut edges = Vec::new();
            for a in 0..num_qubits {
                for b in a + 1..num_qubits {
                    edges.push([a, b]);
                }
            }
            Layout::checked(kind, num_qubits, edges)
        }
        LayoutKind::Star => {
            let edges = (1..num_qubits).map(|q| [0, q]).collect();
            Layout::checked(kind, num_qubits, edges)
        }
        LayoutKind::Dense | LayoutKind::Square | LayoutKind::Hexagonal => {
            let entry = shipped(kind)?;
            if num_qubits > entry.max_qubits {
                return Err(Error::InvalidParameter(format!(
                    "{kind} layout is defined for at most {} qubits",
                    entry.max_qubits
                )));
            }
            let edges = entry
                .edges
                .into_iter()
                .filter(|e| e[0] < num_qubits && e[1] < num_qubits)
                .collect();
            Layout::checked(kind, num_qubits, edges)
        }
        LayoutKind::Custom => {
            let edges = custom_edges.ok_or_else(|| {
                Error::InvalidParameter("custom layout requires an edge list".into())
            })?;
            Layout::custom(num_qubits, edges)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_layout_has_all_pairs() {
        let l = build_layout(LayoutKind::Full, 5, None).unwrap();
        assert_eq!(l.edges.len(), 10);
    }

    #[test]
    fn shipped_layouts_have_expected_sizes() {
        assert_eq!(
            build_layout(LayoutKind::Dense, 5, None)
                .unwrap()
                .edges
                .len(),
            8
        );
        assert_eq!(
            build_layout(LayoutKind::Square, 5, None)
                .unwrap()
                .edges
                .len(),
            5
        );
        assert_eq!(
            build_layout(LayoutKind::Star, 5, None).unwrap().edges.len(),
            4
        );
        let hex5 = build_layout(LayoutKind::Hexagonal, 5, None).unwrap();
        assert_eq!(hex5.edges, vec![[0, 1], [0, 2], [0, 3], [3, 4]]);
        let hex4 = build_layout(LayoutKind::Hexagonal, 4, None).unwrap();
        assert_eq!(hex4.edges, vec![[0, 1], [0, 2], [0, 3]]);
        let hex3 = build_layout(LayoutKind::Hexagonal, 3, None).unwrap();
        assert_eq!(hex3.edges, vec![[0, 1], [0, 2]]);
        for kind in [
            LayoutKind::Full,
            LayoutKind::Dense,
            LayoutKind::Square,
            LayoutKind::Star,
            LayoutKind::Hexagonal,
        ] {
            assert!(
                build_layout(kind, 5, None).unwrap().is_connected(),
                "{kind}"
            );
        }
    }

    #[test]
    fn invalid_layouts_are_rejected() {
        assert!(build_layout(LayoutKind::Hexagonal, 6, None).is_err());
        assert!(build_layout(LayoutKind::Custom, 3, None).is_err());
        assert!(Layout::custom(3, vec![[0, 3]]).is_err());
        assert!(Layout::custom(3, vec![[1, 1]]).is_err());
        assert!(Layout::custom(3, vec![[0, 1], [1, 0]]).is_err());
        assert!(!Layout::custom(3, vec![[0, 1]]).unwrap().is_connected());
    }
}
