//! Plain-text interchange format for circuits and report documents.
//!
//! A circuit document is UTF-8 JSON with fields `n`, `depth` and `layers`;
//! each gate is `{"weights": [decimal integer strings], "theta": "p/q"}`.
//! Parsing validates shape (depth matches the layer list, arities chain
//! correctly) and exactness (weights are arbitrary-precision integers, theta
//! an exact rational). Serialization is canonical, so parse ∘ serialize is
//! the identity on circuit values and serialize ∘ parse is idempotent on
//! documents.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::circuit::{CircuitError, Ltf, ThresholdCircuit};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("document is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad integer string {text:?} in gate {gate} of layer {layer}")]
    BadInteger {
        layer: usize,
        gate: usize,
        text: String,
    },
    #[error("bad rational string {text:?} in gate {gate} of layer {layer} (expected \"p/q\")")]
    BadRational {
        layer: usize,
        gate: usize,
        text: String,
    },
    #[error("declared depth {declared} but document has {actual} layers")]
    DepthMismatch { declared: usize, actual: usize },
    #[error("invalid circuit: {0}")]
    Circuit(#[from] CircuitError),
}

#[derive(Serialize, Deserialize)]
struct GateDoc {
    weights: Vec<String>,
    theta: String,
}

#[derive(Serialize, Deserialize)]
struct CircuitDoc {
    n: usize,
    depth: usize,
    layers: Vec<Vec<GateDoc>>,
}

/// Canonical text form of a rational: always `numer/denom`, including for
/// integers (`1` prints as `1/1`), so documents diff cleanly.
pub fn rational_to_text(x: &BigRational) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

/// 64-bit FNV-1a over a document's canonical text, printed as fixed-width
/// hex; used to cross-reference embedded artifacts, not for security.
pub fn content_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Parse a rational from `numer/denom` or a bare integer. Returns `None`
/// on malformed input or a zero denominator.
pub fn rational_from_text(text: &str) -> Option<BigRational> {
    let (p, q) = match text.split_once('/') {
        Some((p, q)) => (p.trim(), q.trim()),
        None => (text.trim(), "1"),
    };
    let p = BigInt::from_str(p).ok()?;
    let q = BigInt::from_str(q).ok()?;
    if q.is_zero() {
        return None;
    }
    Some(BigRational::new(p, q))
}

/// Serialize a circuit to the canonical interchange text.
pub fn circuit_to_text(circuit: &ThresholdCircuit) -> String {
    let doc = CircuitDoc {
        n: circuit.n,
        depth: circuit.depth(),
        layers: circuit
            .layers
            .iter()
            .map(|layer| {
                layer
                    .iter()
                    .map(|g| GateDoc {
                        weights: g.weights.iter().map(|w| w.to_string()).collect(),
                        theta: rational_to_text(&g.theta),
                    })
                    .collect()
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("document serialization");
    text.push('\n');
    text
}

/// Parse and validate a circuit from interchange text.
pub fn circuit_from_text(text: &str) -> Result<ThresholdCircuit, FormatError> {
    let doc: CircuitDoc = serde_json::from_str(text)?;
    if doc.depth != doc.layers.len() {
        return Err(FormatError::DepthMismatch {
            declared: doc.depth,
            actual: doc.layers.len(),
        });
    }
    let mut layers = Vec::with_capacity(doc.layers.len());
    for (li, layer) in doc.layers.into_iter().enumerate() {
        let mut gates = Vec::with_capacity(layer.len());
        for (gi, gate) in layer.into_iter().enumerate() {
            let mut weights = Vec::with_capacity(gate.weights.len());
            for w in &gate.weights {
                let parsed = BigInt::from_str(w.trim()).map_err(|_| FormatError::BadInteger {
                    layer: li,
                    gate: gi,
                    text: w.clone(),
                })?;
                weights.push(parsed);
            }
            let theta = rational_from_text(&gate.theta).ok_or_else(|| FormatError::BadRational {
                layer: li,
                gate: gi,
                text: gate.theta.clone(),
            })?;
            gates.push(Ltf::new(weights, theta));
        }
        layers.push(gates);
    }
    Ok(ThresholdCircuit::new(doc.n, layers)?)
}
