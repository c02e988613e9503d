//! Structural analysis of threshold functions: regularity of weight vectors,
//! critical index, and threshold balance. All comparisons are exact; the
//! squared form of each inequality keeps everything in integers/rationals.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use crate::circuit::Ltf;
use crate::exact::{ratio_pow, sum_of_squares};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("weight vector is empty")]
    EmptyWeights,
    #[error("the threshold is zero, so the function has no majority value")]
    ZeroThreshold,
}

/// Outcome of a regularity check. `witness` names a violating coordinate
/// (the first one in index order) exactly when the vector is not regular.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegularityReport {
    pub regular: bool,
    pub witness: Option<usize>,
}

/// A vector is `eps`-regular when every coordinate satisfies
/// `w_i^2 <= eps^2 * sum_j w_j^2`. Empty and all-zero vectors are regular
/// (every comparison is vacuous or `0 <= 0`).
pub fn is_regular(weights: &[BigInt], eps: &BigRational) -> RegularityReport {
    let total = BigRational::from_integer(sum_of_squares(weights));
    let bound = ratio_pow(eps, 2) * &total;
    for (i, w) in weights.iter().enumerate() {
        if BigRational::from_integer(w * w) > bound {
            return RegularityReport {
                regular: false,
                witness: Some(i),
            };
        }
    }
    RegularityReport {
        regular: true,
        witness: None,
    }
}

/// Result of a critical-index computation. `order` lists the original
/// indices sorted by decreasing `|w|` (ties broken by ascending original
/// index); `h` is 1-based: the first `h` entries of `order` are the head,
/// the rest form the regular tail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CriticalIndexResult {
    pub h: usize,
    pub order: Vec<usize>,
}

/// The `eps`-critical index: the smallest `h >= 1` such that after sorting
/// by decreasing magnitude, the suffix strictly beyond position `h` is
/// `eps`-regular. The empty suffix is regular, so `h = n` always works and
/// the search starts at `h = 1` even for vectors that are regular outright.
pub fn critical_index(weights: &[BigInt], eps: &BigRational) -> Result<CriticalIndexResult, AnalysisError> {
    let n = weights.len();
    if n == 0 {
        return Err(AnalysisError::EmptyWeights);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ma = weights[a].magnitude();
        let mb = weights[b].magnitude();
        mb.cmp(ma).then(a.cmp(&b))
    });
    // suffix_sq[h] = sum of squares of the sorted entries at positions >= h
    let mut suffix_sq = vec![BigInt::zero(); n + 1];
    for h in (0..n).rev() {
        let w = &weights[order[h]];
        suffix_sq[h] = &suffix_sq[h + 1] + w * w;
    }
    let eps_sq = ratio_pow(eps, 2);
    for h in 1..=n {
        if h == n {
            break; // empty suffix is always regular
        }
        // The suffix is sorted by decreasing magnitude, so it is regular
        // iff its leading entry passes the check.
        let lead = &weights[order[h]];
        let lhs = BigRational::from_integer(lead * lead);
        let rhs = &eps_sq * BigRational::from_integer(suffix_sq[h].clone());
        if lhs <= rhs {
            return Ok(CriticalIndexResult { h, order });
        }
    }
    Ok(CriticalIndexResult { h: n, order })
}

/// A threshold function is `t`-balanced when `theta^2 <= t^2 * sum_j w_j^2`.
pub fn is_t_balanced(ltf: &Ltf, t: &BigRational) -> bool {
    let norm_sq = BigRational::from_integer(sum_of_squares(&ltf.weights));
    ratio_pow(&ltf.theta, 2) <= ratio_pow(t, 2) * norm_sq
}

/// Most probable output of a threshold function whose threshold dominates
/// its weights: `-sign(theta)`. A zero threshold has no such value (the
/// function is balanced for every `t >= 0`).
pub fn imbalanced_majority_value(ltf: &Ltf) -> Result<i8, AnalysisError> {
    if ltf.theta.is_zero() {
        return Err(AnalysisError::ZeroThreshold);
    }
    Ok(if ltf.theta > BigRational::zero() { -1 } else { 1 })
}
