//! Weak combinatorial designs: families of equal-size subsets of a ground
//! set whose pairwise overlaps are small in an amortized sense. Set `i`
//! must satisfy `sum_{j<i} 2^|S_i ∩ S_j| <= i * rho` (counting previous
//! sets), which is the per-prefix form of the usual weak-design condition.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use std::str::FromStr;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DesignError {
    #[error("m must be at least 1")]
    EmptyFamily,
    #[error("ell must be at least 1")]
    EmptySets,
    #[error("alpha = {0} is outside the open interval (0, 1/4)")]
    AlphaOutOfRange(String),
    #[error("(1 - alpha) * ell = {0} is not an integer, so rho is not a power of two")]
    RhoNotIntegral(String),
    #[error("ground set of size t = {t} exceeds the supported width of 128")]
    GroundSetTooWide { t: usize },
    #[error("selection space 2^{bits} is too large to enumerate")]
    SelectionSpaceTooWide { bits: usize },
    #[error("no selection satisfies the overlap bound for set {index}")]
    NoSelection { index: usize },
    #[error("set {index} has size {got}, expected ell = {expected}")]
    WrongSetSize {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("set {index} is not sorted strictly ascending within [0, t)")]
    MalformedSet { index: usize },
    #[error("prefix bound fails at set {index}: overlap cost {cost} > {bound}")]
    OverlapTooLarge {
        index: usize,
        cost: String,
        bound: String,
    },
    #[error("document is not valid JSON: {0}")]
    Json(String),
    #[error("bad field {field}: {text}")]
    BadField { field: &'static str, text: String },
}

/// A weak design: `m` subsets of `{0, ..., t-1}`, each of size `ell`,
/// satisfying the per-prefix overlap bound with parameter `rho`.
/// `alpha` records the rate parameter when the design came from the
/// standard construction (`rho = 2^((1-alpha) * ell)`); hand-built designs
/// carry `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeakDesign {
    pub m: usize,
    pub ell: usize,
    pub t: usize,
    pub alpha: Option<BigRational>,
    pub rho: BigUint,
    pub sets: Vec<Vec<u32>>,
}

impl WeakDesign {
    /// Validate an externally supplied design (sizes, ranges, overlap bound).
    pub fn from_parts(
        m: usize,
        ell: usize,
        t: usize,
        rho: BigUint,
        sets: Vec<Vec<u32>>,
    ) -> Result<Self, DesignError> {
        let d = WeakDesign {
            m,
            ell,
            t,
            alpha: None,
            rho,
            sets,
        };
        verify_weak_design(&d)?;
        Ok(d)
    }

    fn masks(&self) -> Vec<u128> {
        self.sets
            .iter()
            .map(|s| s.iter().fold(0u128, |acc, &i| acc | 1u128 << i))
            .collect()
    }
}

/// Build the block design: the ground set `[t]` is split into `t - ell`
/// two-element blocks followed by `2*ell - t` singletons; each set picks one
/// element per block, scanning the `2^(t-ell)` selections in lexicographic
/// order (selection bit `j` picks the upper element of block `j`) and taking
/// the first one whose overlap cost against the previous sets is within the
/// prefix bound.
pub fn build_weak_design(
    m: usize,
    ell: usize,
    alpha: &BigRational,
) -> Result<WeakDesign, DesignError> {
    if m < 1 {
        return Err(DesignError::EmptyFamily);
    }
    if ell < 1 {
        return Err(DesignError::EmptySets);
    }
    let zero = BigRational::zero();
    let quarter = BigRational::new(BigInt::one(), BigInt::from(4));
    if *alpha <= zero || *alpha >= quarter {
        return Err(DesignError::AlphaOutOfRange(alpha.to_string()));
    }
    // rho = 2^((1 - alpha) * ell) must be an exact power of two
    let exponent = (BigRational::one() - alpha) * BigRational::from_integer(BigInt::from(ell));
    if !exponent.is_integer() {
        return Err(DesignError::RhoNotIntegral(exponent.to_string()));
    }
    let exp_u = exponent
        .to_integer()
        .try_into()
        .map_err(|_| DesignError::RhoNotIntegral(exponent.to_string()))?;
    let rho = BigUint::one() << std::cmp::min(exp_u, 1usize << 20);
    // t = ceil((1 + 4*alpha) * ell)
    let t_exact = (BigRational::one() + BigRational::from_integer(BigInt::from(4)) * alpha)
        * BigRational::from_integer(BigInt::from(ell));
    let t: usize = t_exact
        .ceil()
        .to_integer()
        .try_into()
        .expect("t is small and positive");
    if t > 128 {
        return Err(DesignError::GroundSetTooWide { t });
    }
    let pairs = t - ell; // two-element blocks; 4*alpha < 1 gives pairs < ell
    if pairs >= 32 {
        return Err(DesignError::SelectionSpaceTooWide { bits: pairs });
    }
    let singles: Vec<u32> = (2 * pairs..t).map(|v| v as u32).collect();

    let mut sets: Vec<Vec<u32>> = Vec::with_capacity(m);
    let mut masks: Vec<u128> = Vec::with_capacity(m);
    for i in 0..m {
        let bound = &rho * BigUint::from(i);
        let mut chosen: Option<(Vec<u32>, u128)> = None;
        'selection: for b in 0u32..1 << pairs {
            let mut set: Vec<u32> = (0..pairs)
                .map(|j| (2 * j + (b >> j & 1) as usize) as u32)
                .collect();
            set.extend_from_slice(&singles);
            let mask = set.iter().fold(0u128, |acc, &v| acc | 1u128 << v);
            let mut cost = BigUint::zero();
            for prev in &masks {
                cost += BigUint::one() << (mask & prev).count_ones() as usize;
                if cost > bound {
                    continue 'selection;
                }
            }
            chosen = Some((set, mask));
            break;
        }
        match chosen {
            Some((set, mask)) => {
                sets.push(set);
                masks.push(mask);
            }
            None => return Err(DesignError::NoSelection { index: i }),
        }
    }
    Ok(WeakDesign {
        m,
        ell,
        t,
        alpha: Some(alpha.clone()),
        rho,
        sets,
    })
}

/// Re-check every stated property of a design: set sizes, membership in the
/// ground set, sortedness, and the per-prefix overlap bound.
pub fn verify_weak_design(design: &WeakDesign) -> Result<(), DesignError> {
    if design.m < 1 || design.sets.len() != design.m {
        return Err(DesignError::EmptyFamily);
    }
    if design.ell < 1 {
        return Err(DesignError::EmptySets);
    }
    if design.t > 128 {
        return Err(DesignError::GroundSetTooWide { t: design.t });
    }
    for (i, set) in design.sets.iter().enumerate() {
        if set.len() != design.ell {
            return Err(DesignError::WrongSetSize {
                index: i,
                expected: design.ell,
                got: set.len(),
            });
        }
        let sorted = set.windows(2).all(|w| w[0] < w[1]);
        let in_range = set.iter().all(|&v| (v as usize) < design.t);
        if !sorted || !in_range {
            return Err(DesignError::MalformedSet { index: i });
        }
    }
    let masks = design.masks();
    for i in 0..design.m {
        let mut cost = BigUint::zero();
        for j in 0..i {
            cost += BigUint::one() << (masks[i] & masks[j]).count_ones() as usize;
        }
        let bound = &design.rho * BigUint::from(i);
        if cost > bound {
            return Err(DesignError::OverlapTooLarge {
                index: i,
                cost: cost.to_string(),
                bound: bound.to_string(),
            });
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct DesignDoc {
    m: usize,
    ell: usize,
    t: usize,
    alpha: Option<String>,
    rho: String,
    sets: Vec<Vec<u32>>,
}

/// Serialize to the canonical interchange text (JSON, sorted index lists).
pub fn design_to_text(design: &WeakDesign) -> String {
    let doc = DesignDoc {
        m: design.m,
        ell: design.ell,
        t: design.t,
        alpha: design
            .alpha
            .as_ref()
            .map(|a| format!("{}/{}", a.numer(), a.denom())),
        rho: design.rho.to_string(),
        sets: design.sets.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("design serialization");
    text.push('\n');
    text
}

/// Parse and fully re-verify a design document.
pub fn design_from_text(text: &str) -> Result<WeakDesign, DesignError> {
    let doc: DesignDoc = serde_json::from_str(text).map_err(|e| DesignError::Json(e.to_string()))?;
    let alpha = match &doc.alpha {
        None => None,
        Some(a) => {
            let (p, q) = a.split_once('/').ok_or(DesignError::BadField {
                field: "alpha",
                text: a.clone(),
            })?;
            let p = BigInt::from_str(p).map_err(|_| DesignError::BadField {
                field: "alpha",
                text: a.clone(),
            })?;
            let q = BigInt::from_str(q).map_err(|_| DesignError::BadField {
                field: "alpha",
                text: a.clone(),
            })?;
            Some(BigRational::new(p, q))
        }
    };
    let rho = BigUint::from_str(&doc.rho).map_err(|_| DesignError::BadField {
        field: "rho",
        text: doc.rho.clone(),
    })?;
    let design = WeakDesign {
        m: doc.m,
        ell: doc.ell,
        t: doc.t,
        alpha,
        rho,
        sets: doc.sets,
    };
    verify_weak_design(&design)?;
    Ok(design)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::ratio;

    /// Oracle: the overlap condition checked directly from set vectors,
    /// with no bitmask tricks.
    fn prefix_condition_naive(design: &WeakDesign) -> bool {
        for i in 0..design.m {
            let mut cost = BigUint::zero();
            for j in 0..i {
                let inter = design.sets[i]
                    .iter()
                    .filter(|v| design.sets[j].contains(v))
                    .count();
                cost += BigUint::one() << inter;
            }
            if cost > &design.rho * BigUint::from(i) {
                return false;
            }
        }
        true
    }

    #[test]
    fn two_sets_at_ell_five() {
        let d = build_weak_design(2, 5, &ratio(1, 5)).unwrap();
        assert_eq!(d.t, 9);
        assert_eq!(d.rho, BigUint::from(16u32));
        // First selection takes the lower element of each pair block.
        assert_eq!(d.sets[0], vec![0, 2, 4, 6, 8]);
        // The all-lower selection overlaps in 5 points (cost 32 > 16), so the
        // second set flips exactly the first block.
        assert_eq!(d.sets[1], vec![1, 2, 4, 6, 8]);
        let inter = d.sets[0].iter().filter(|v| d.sets[1].contains(v)).count();
        assert_eq!(inter, 4);
        verify_weak_design(&d).unwrap();
        assert!(prefix_condition_naive(&d));
    }

    #[test]
    fn rho_must_be_a_power_of_two() {
        // (1 - 1/5) * 4 = 16/5 is not an integer
        assert!(matches!(
            build_weak_design(2, 4, &ratio(1, 5)),
            Err(DesignError::RhoNotIntegral(_))
        ));
        // (1 - 1/8) * 8 = 7 is
        assert!(build_weak_design(2, 8, &ratio(1, 8)).is_ok());
    }

    #[test]
    fn alpha_interval_is_open() {
        assert!(matches!(
            build_weak_design(1, 8, &ratio(1, 4)),
            Err(DesignError::AlphaOutOfRange(_))
        ));
        assert!(matches!(
            build_weak_design(1, 8, &ratio(0, 1)),
            Err(DesignError::AlphaOutOfRange(_))
        ));
    }

    #[test]
    fn grid_feasibility_matches_integrality() {
        let feasible = |ell: usize, a: (i64, i64)| build_weak_design(2, ell, &ratio(a.0, a.1)).is_ok();
        assert!(!feasible(4, (1, 5)));
        assert!(!feasible(4, (1, 8)));
        assert!(feasible(5, (1, 5)));
        assert!(!feasible(5, (1, 8)));
        assert!(!feasible(8, (1, 5)));
        assert!(feasible(8, (1, 8)));
        assert!(feasible(10, (1, 5)));
        assert!(!feasible(10, (1, 8)));
    }

    #[test]
    fn larger_families_verify_and_match_oracle() {
        for (ell, a) in [(5usize, (1i64, 5i64)), (8, (1, 8)), (10, (1, 5))] {
            let d = build_weak_design(16, ell, &ratio(a.0, a.1)).unwrap();
            verify_weak_design(&d).unwrap();
            assert!(prefix_condition_naive(&d));
            assert_eq!(d.sets.len(), 16);
        }
    }

    #[test]
    fn verify_rejects_oversized_overlap() {
        // two identical sets: cost 2^ell > rho for any rho < 2^ell
        let sets = vec![vec![0, 1, 2], vec![0, 1, 2]];
        let err = WeakDesign::from_parts(2, 3, 6, BigUint::from(4u32), sets).unwrap_err();
        assert!(matches!(err, DesignError::OverlapTooLarge { index: 1, .. }));
    }

    #[test]
    fn verify_rejects_malformed_sets() {
        let sets = vec![vec![2, 1, 0]];
        assert!(matches!(
            WeakDesign::from_parts(1, 3, 6, BigUint::from(4u32), sets),
            Err(DesignError::MalformedSet { index: 0 })
        ));
        let sets = vec![vec![0, 1, 9]];
        assert!(matches!(
            WeakDesign::from_parts(1, 3, 6, BigUint::from(4u32), sets),
            Err(DesignError::MalformedSet { index: 0 })
        ));
    }

    #[test]
    fn hand_built_design_passes_from_parts() {
        // S1 = {0..4}, S2 = {3..7}, S3 = {0,1,5,6,7}: pairwise overlaps 2, 2, 3.
        let sets = vec![
            vec![0, 1, 2, 3, 4],
            vec![3, 4, 5, 6, 7],
            vec![0, 1, 5, 6, 7],
        ];
        let d = WeakDesign::from_parts(3, 5, 8, BigUint::from(8u32), sets).unwrap();
        assert_eq!(d.alpha, None);
        verify_weak_design(&d).unwrap();
    }

    #[test]
    fn serialization_round_trips_and_reverifies() {
        let d = build_weak_design(8, 8, &ratio(1, 8)).unwrap();
        let text = design_to_text(&d);
        let back = design_from_text(&text).unwrap();
        assert_eq!(back, d);
        // canonical: a second round gives identical text
        assert_eq!(design_to_text(&back), text);
    }

    #[test]
    fn tampered_documents_fail_verification() {
        let d = build_weak_design(4, 5, &ratio(1, 5)).unwrap();
        let text = design_to_text(&d).replace("\"rho\": \"16\"", "\"rho\": \"1\"");
        assert!(matches!(
            design_from_text(&text),
            Err(DesignError::OverlapTooLarge { .. })
        ));
    }
}
