//! Exact tools for linear threshold functions and layered threshold circuits:
//! evaluation and restriction with big-integer weights, regularity / critical-index
//! analysis, seed-enumerable pseudorandom bit sources, pseudorandom restriction
//! pipelines, quantified derandomization, combinatorial designs, balanced linear
//! codes, an averaging sampler, and the reduction circuit built from it.
//!
//! Conventions used across the crate:
//!
//! * Inputs and gate outputs live in `{-1, +1}`, encoded as `i8`.
//! * `sgn(0) = +1`: a threshold gate outputs `+1` on ties.
//! * A decision circuit *accepts* an input when its output gate evaluates to `-1`.
//! * When a bit string is mapped to signs, bit `b` becomes `(-1)^b`, i.e.
//!   `0 -> +1` and `1 -> -1`. Enumeration over `{-1,+1}^n` walks an `n`-bit
//!   mask whose bit `j` gives coordinate `j` under the same map.
//!
//! All probabilities, thresholds and distances are exact rationals; nothing in
//! the evaluation or verification paths goes through floating point.

pub mod analysis;
pub mod circuit;
pub mod codes;
pub mod derand;
pub mod design;
pub mod exact;
pub mod format;
pub mod restriction;
pub mod sampler;
pub mod sources;

/// Default cap on the size of any exhaustively enumerated space (inputs of a
/// circuit, seeds of a source). Operations that would enumerate more states
/// than the budget refuse to run instead of silently degrading.
pub const DEFAULT_BUDGET: u64 = 1 << 22;

/// Environment variable consulted by the command-line tool for a budget override.
pub const BUDGET_ENV_VAR: &str = "LTCD_BUDGET";
