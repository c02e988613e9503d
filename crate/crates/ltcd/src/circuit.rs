//! Linear threshold functions, layered threshold circuits, and restrictions,
//! all over exact big-integer weights and rational thresholds.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::exact::signs_from_mask;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CircuitError {
    #[error("circuit has no layers")]
    NoLayers,
    #[error("layer {layer} is empty")]
    EmptyLayer { layer: usize },
    #[error("gate {gate} in layer {layer} has arity {got}, expected {expected}")]
    ArityMismatch {
        layer: usize,
        gate: usize,
        expected: usize,
        got: usize,
    },
    #[error("operation needs a decision circuit (one output gate), found {outputs}")]
    NotDecision { outputs: usize },
    #[error("input length {got} does not match circuit arity {expected}")]
    InputLength { expected: usize, got: usize },
    #[error("enumerating {needed} states exceeds budget {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },
    #[error("restriction length {got} does not match variable count {expected}")]
    RestrictionLength { expected: usize, got: usize },
    #[error("restriction cell {index} holds {value}; cells must be -1, 0 (free) or +1")]
    BadRestrictionCell { index: usize, value: i8 },
    #[error("circuits have different arities ({left} vs {right})")]
    ArityDiffers { left: usize, right: usize },
}

/// A linear threshold function `x -> sgn(<w, x> - theta)` on `{-1,+1}^arity`,
/// with `sgn(0) = +1`. Weights are exact integers, the threshold an exact
/// rational.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ltf {
    pub weights: Vec<BigInt>,
    pub theta: BigRational,
}

impl Ltf {
    pub fn new(weights: Vec<BigInt>, theta: BigRational) -> Self {
        Ltf { weights, theta }
    }

    /// Convenience constructor from machine integers; theta is `p/q`.
    pub fn from_i64(weights: &[i64], theta_num: i64, theta_den: i64) -> Self {
        Ltf {
            weights: weights.iter().map(|&w| BigInt::from(w)).collect(),
            theta: BigRational::new(BigInt::from(theta_num), BigInt::from(theta_den)),
        }
    }

    pub fn arity(&self) -> usize {
        self.weights.len()
    }

    /// Number of wires: weights that are not identically zero.
    pub fn fan_in(&self) -> usize {
        self.weights.iter().filter(|w| !w.is_zero()).count()
    }

    /// `<w, x>` as an exact integer.
    pub fn dot(&self, x: &[i8]) -> BigInt {
        debug_assert_eq!(x.len(), self.weights.len());
        if let Some(small) = dot_small(&self.weights, x) {
            return BigInt::from(small);
        }
        let mut acc = BigInt::zero();
        for (w, &xi) in self.weights.iter().zip(x) {
            if xi == 1 {
                acc += w;
            } else {
                acc -= w;
            }
        }
        acc
    }

    /// Evaluate the threshold function; ties (`<w,x> = theta`) give `+1`.
    pub fn eval(&self, x: &[i8]) -> i8 {
        // Fast path: small weights and a small threshold stay in machine words.
        if let Some(sum) = dot_small(&self.weights, x) {
            if let (Some(p), Some(q)) = (self.theta.numer().to_i64(), self.theta.denom().to_i64())
            {
                // q > 0 by BigRational normalization; sum*q is exact in i128.
                let lhs = sum * q as i128;
                return if lhs >= p as i128 { 1 } else { -1 };
            }
        }
        let sum = BigRational::from_integer(self.dot(x));
        if sum >= self.theta {
            1
        } else {
            -1
        }
    }

    /// The function restricted by `rho`: live weights survive in ascending
    /// variable order, fixed variables are absorbed into the threshold
    /// (`theta' = theta - <w_fixed, z_fixed>`).
    pub fn restrict(&self, rho: &Restriction) -> Result<Ltf, CircuitError> {
        if rho.cells.len() != self.weights.len() {
            return Err(CircuitError::RestrictionLength {
                expected: self.weights.len(),
                got: rho.cells.len(),
            });
        }
        let mut live = Vec::new();
        let mut absorbed = BigInt::zero();
        for (w, &cell) in self.weights.iter().zip(&rho.cells) {
            match cell {
                0 => live.push(w.clone()),
                1 => absorbed += w,
                -1 => absorbed -= w,
                _ => unreachable!("validated on construction"),
            }
        }
        Ok(Ltf {
            weights: live,
            theta: &self.theta - BigRational::from_integer(absorbed),
        })
    }
}

/// Fast exact dot product when every weight fits in an `i64`.
fn dot_small(weights: &[BigInt], x: &[i8]) -> Option<i128> {
    let mut acc: i128 = 0;
    for (w, &xi) in weights.iter().zip(x) {
        let v = w.to_i64()?;
        acc += v as i128 * xi as i128;
    }
    Some(acc)
}

/// A layered threshold circuit. Layer `0` gates read the circuit inputs;
/// gates in layer `k > 0` read exactly the outputs of layer `k - 1`.
/// Decision circuits have a single gate in the top layer and *accept* an
/// input when that gate outputs `-1`; encoder networks may expose several
/// top-layer gates as parallel outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThresholdCircuit {
    pub n: usize,
    pub layers: Vec<Vec<Ltf>>,
}

impl ThresholdCircuit {
    pub fn new(n: usize, layers: Vec<Vec<Ltf>>) -> Result<Self, CircuitError> {
        let c = ThresholdCircuit { n, layers };
        c.validate()?;
        Ok(c)
    }

    /// A depth-1 decision circuit holding a single threshold function.
    pub fn from_ltf(ltf: Ltf) -> Self {
        ThresholdCircuit {
            n: ltf.arity(),
            layers: vec![vec![ltf]],
        }
    }

    /// Serial composition: feed this circuit's outputs into `next`.
    /// `next.n` must equal `self.outputs()`.
    pub fn then(&self, next: &ThresholdCircuit) -> Result<ThresholdCircuit, CircuitError> {
        let mut layers = self.layers.clone();
        layers.extend(next.layers.iter().cloned());
        ThresholdCircuit::new(self.n, layers)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.len())
    }

    /// Total number of wires (nonzero weights over all gates).
    pub fn wire_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.iter())
            .map(Ltf::fan_in)
            .sum()
    }

    pub fn gate_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    /// Structural well-formedness: at least one nonempty layer and each
    /// gate's arity equal to the width of the layer below it.
    pub fn validate(&self) -> Result<(), CircuitError> {
        if self.layers.is_empty() {
            return Err(CircuitError::NoLayers);
        }
        let mut expected = self.n;
        for (li, layer) in self.layers.iter().enumerate() {
            if layer.is_empty() {
                return Err(CircuitError::EmptyLayer { layer: li });
            }
            for (gi, gate) in layer.iter().enumerate() {
                if gate.arity() != expected {
                    return Err(CircuitError::ArityMismatch {
                        layer: li,
                        gate: gi,
                        expected,
                        got: gate.arity(),
                    });
                }
            }
            expected = layer.len();
        }
        Ok(())
    }

    /// Additionally require a single output gate.
    pub fn validate_decision(&self) -> Result<(), CircuitError> {
        self.validate()?;
        if self.outputs() != 1 {
            return Err(CircuitError::NotDecision {
                outputs: self.outputs(),
            });
        }
        Ok(())
    }

    /// Outputs of every top-layer gate on input `x`.
    pub fn eval_outputs(&self, x: &[i8]) -> Result<Vec<i8>, CircuitError> {
        if x.len() != self.n {
            return Err(CircuitError::InputLength {
                expected: self.n,
                got: x.len(),
            });
        }
        let mut current: Vec<i8> = x.to_vec();
        for layer in &self.layers {
            current = layer.iter().map(|g| g.eval(&current)).collect();
        }
        Ok(current)
    }

    /// Output of a decision circuit on `x` (`-1` = accept).
    pub fn eval(&self, x: &[i8]) -> Result<i8, CircuitError> {
        if self.outputs() != 1 {
            return Err(CircuitError::NotDecision {
                outputs: self.outputs(),
            });
        }
        Ok(self.eval_outputs(x)?[0])
    }

    /// Restrict the circuit's input variables by `rho`: layer-0 gates absorb
    /// the fixed variables, upper layers are untouched. The result reads the
    /// live variables in ascending original order.
    pub fn restrict(&self, rho: &Restriction) -> Result<ThresholdCircuit, CircuitError> {
        if rho.cells.len() != self.n {
            return Err(CircuitError::RestrictionLength {
                expected: self.n,
                got: rho.cells.len(),
            });
        }
        let mut layers = self.layers.clone();
        if let Some(bottom) = layers.first_mut() {
            for gate in bottom.iter_mut() {
                *gate = gate.restrict(rho)?;
            }
        }
        Ok(ThresholdCircuit {
            n: rho.live_count(),
            layers,
        })
    }
}

/// Number of accepted inputs (output `-1`) over all `2^n` assignments.
/// Refuses to enumerate beyond `budget`.
pub fn acceptance_count(circuit: &ThresholdCircuit, budget: u64) -> Result<u64, CircuitError> {
    circuit.validate_decision()?;
    let needed = check_enumeration(circuit.n, budget)?;
    let mut accepted = 0u64;
    for mask in 0..needed {
        let x = signs_from_mask(circuit.n, mask);
        if circuit.eval(&x)? == -1 {
            accepted += 1;
        }
    }
    Ok(accepted)
}

/// Exact fraction of points of `{-1,+1}^n` where `f` and `g` agree.
pub fn closeness_fn<F, G>(
    n: usize,
    budget: u64,
    mut f: F,
    mut g: G,
) -> Result<BigRational, CircuitError>
where
    F: FnMut(&[i8]) -> i8,
    G: FnMut(&[i8]) -> i8,
{
    let total = check_enumeration(n, budget)?;
    let mut agree = 0u64;
    for mask in 0..total {
        let x = signs_from_mask(n, mask);
        if f(&x) == g(&x) {
            agree += 1;
        }
    }
    Ok(BigRational::new(BigInt::from(agree), BigInt::from(total)))
}

/// Exact agreement fraction of two decision circuits over the same inputs.
pub fn closeness(
    a: &ThresholdCircuit,
    b: &ThresholdCircuit,
    budget: u64,
) -> Result<BigRational, CircuitError> {
    if a.n != b.n {
        return Err(CircuitError::ArityDiffers { left: a.n, right: b.n });
    }
    a.validate_decision()?;
    b.validate_decision()?;
    closeness_fn(a.n, budget, |x| a.eval(x).unwrap(), |x| b.eval(x).unwrap())
}

/// Check that `2^n` states fit in the budget and return `2^n`.
pub fn check_enumeration(n: usize, budget: u64) -> Result<u64, CircuitError> {
    let needed: u128 = 1u128
        .checked_shl(n as u32)
        .filter(|_| n < 128)
        .ok_or(CircuitError::BudgetExceeded {
            needed: u128::MAX,
            budget,
        })?;
    if needed > budget as u128 {
        return Err(CircuitError::BudgetExceeded { needed, budget });
    }
    Ok(needed as u64)
}

/// A restriction over `n` variables: each cell is `-1` or `+1` (fixed) or
/// `0` (free / live).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Restriction {
    cells: Vec<i8>,
}

impl Restriction {
    /// All-free restriction.
    pub fn identity(n: usize) -> Self {
        Restriction { cells: vec![0; n] }
    }

    pub fn from_cells(cells: Vec<i8>) -> Result<Self, CircuitError> {
        for (i, &c) in cells.iter().enumerate() {
            if !(-1..=1).contains(&c) {
                return Err(CircuitError::BadRestrictionCell { index: i, value: c });
            }
        }
        Ok(Restriction { cells })
    }

    pub fn cells(&self) -> &[i8] {
        &self.cells
    }

    pub fn n(&self) -> usize {
        self.cells.len()
    }

    pub fn is_live(&self, i: usize) -> bool {
        self.cells[i] == 0
    }

    /// Indices of live variables, ascending.
    pub fn live(&self) -> Vec<usize> {
        (0..self.cells.len()).filter(|&i| self.cells[i] == 0).collect()
    }

    pub fn live_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c == 0).count()
    }

    /// Fix variable `i` to `value`; `i` must currently be live.
    pub fn fix(&mut self, i: usize, value: i8) {
        assert!(matches!(value, -1 | 1), "fix value must be a sign");
        assert_eq!(self.cells[i], 0, "variable {i} is already fixed");
        self.cells[i] = value;
    }

    /// Complete the restriction into a full assignment by filling the live
    /// positions with `live_values` (given in ascending live order).
    pub fn extend(&self, live_values: &[i8]) -> Result<Vec<i8>, CircuitError> {
        if live_values.len() != self.live_count() {
            return Err(CircuitError::InputLength {
                expected: self.live_count(),
                got: live_values.len(),
            });
        }
        let mut out = Vec::with_capacity(self.cells.len());
        let mut next = 0;
        for &c in &self.cells {
            if c == 0 {
                out.push(live_values[next]);
                next += 1;
            } else {
                out.push(c);
            }
        }
        Ok(out)
    }

    /// Compose with a second restriction given over this one's live
    /// variables: the result acts on the original variable set and fixes
    /// everything either restriction fixes.
    pub fn compose(&self, inner: &Restriction) -> Result<Restriction, CircuitError> {
        if inner.cells.len() != self.live_count() {
            return Err(CircuitError::RestrictionLength {
                expected: self.live_count(),
                got: inner.cells.len(),
            });
        }
        let mut cells = self.cells.clone();
        for (slot, live_idx) in self.live().into_iter().enumerate() {
            cells[live_idx] = inner.cells[slot];
        }
        Ok(Restriction { cells })
    }
}
