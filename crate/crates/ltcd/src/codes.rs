//! Linear codes whose encoders are sparse threshold circuits: an
//! exhaustively certified base code, its tensor powers, expander-walk
//! distance amplification, the composed balanced code, and emission of any
//! GF(2)-linear map as a depth-2 layer of threshold parity gadgets.
//!
//! Messages and codewords are `Vec<bool>` (false = 0).  Emitted circuits
//! use the sign convention of the rest of the crate: bit b is the sign
//! (-1)^b, so a parity output is the product of its input signs.

use crate::circuit::{CircuitError, Ltf, ThresholdCircuit};
use crate::exact::ratio;
use crate::format::{rational_from_text, rational_to_text};
use crate::sources::seed_stream;
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard cap on the walk length search so an unreachable accuracy target
/// fails loudly instead of looping.
pub const WALK_LENGTH_CAP: usize = 64;

/// Numeric slack allowed when checking a stored eigenvalue bound against
/// the floating-point spectrum of a circulant graph.
pub const LAMBDA_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CodesError {
    #[error("message length must be in 1..=63, got {got}")]
    MessageTooWide { got: usize },
    #[error("expected {expected} generator masks, got {got}")]
    MaskCount { expected: usize, got: usize },
    #[error("generator mask {index} uses bits beyond the message length")]
    MaskOutOfRange { index: usize },
    #[error("claimed relative distance must lie in (0, 1], got {0}")]
    BadDistance(String),
    #[error(
        "distance violated: message {message:#b} has relative weight {weight}/{len}, below {claimed}"
    )]
    DistanceViolated {
        message: u64,
        weight: usize,
        len: usize,
        claimed: String,
    },
    #[error("enumeration of {needed} items exceeds budget {budget}")]
    Budget { needed: u128, budget: u64 },
    #[error("message length {got} exceeds code capacity {capacity}")]
    MessageLength { got: usize, capacity: usize },
    #[error("tensor order must be at least 1")]
    BadOrder,
    #[error("no generator matrix found after {attempts} seeded attempts")]
    SearchFailed { attempts: usize },
    #[error("circulant graph needs >= 3 vertices and a nonempty symmetric connection set without 0")]
    BadCirculant,
    #[error("stored eigenvalue bound {stored} is below the computed second eigenvalue {computed}")]
    LambdaNotCertified { stored: String, computed: f64 },
    #[error("accuracy must be positive, got {0}")]
    BadEps(String),
    #[error("density must satisfy 0 < rho <= 1, got {0}")]
    BadRho(String),
    #[error("no walk length up to {cap} achieves the accuracy target")]
    WalkBudget { cap: usize },
    #[error("input length {got} does not match the {expected} graph vertices")]
    PositionsMismatch { got: usize, expected: usize },
    #[error("expander must have one vertex per tensor output: expected {expected}, got {got}")]
    GraphSizeMismatch { expected: usize, got: usize },
    #[error("base code distance {got} is below the required 1/3")]
    BaseDistanceTooSmall { got: String },
    #[error("list-decoding delta must lie in (0, 1/2), got {0}")]
    BadDelta(String),
    #[error("linear map output {index} is not a strictly increasing list of inputs below {n_in}")]
    MalformedOutput { index: usize, n_in: usize },
    #[error("circuit assembly failed: {0}")]
    Circuit(#[from] CircuitError),
    #[error("document is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad field `{0}`")]
    BadField(&'static str),
}

// ---------------------------------------------------------------------------
// Base codes
// ---------------------------------------------------------------------------

/// A binary linear code described by one parity mask per output bit.
/// Construction certifies the stored relative distance by enumerating every
/// nonzero message, so a value of this type is proof that the bound holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearCode {
    r: usize,
    r_bar: usize,
    masks: Vec<u64>,
    distance: BigRational,
}

impl LinearCode {
    /// Build a code from generator masks, verifying `claimed` against every
    /// nonzero message (2^r - 1 of them, guarded by `budget`).
    pub fn certify(
        r: usize,
        masks: Vec<u64>,
        claimed: BigRational,
        budget: u64,
    ) -> Result<LinearCode, CodesError> {
        if r == 0 || r > 63 {
            return Err(CodesError::MessageTooWide { got: r });
        }
        if claimed <= BigRational::zero() || claimed > BigRational::one() {
            return Err(CodesError::BadDistance(rational_to_text(&claimed)));
        }
        let full = (1u64 << r) - 1;
        for (index, &m) in masks.iter().enumerate() {
            if m & !full != 0 {
                return Err(CodesError::MaskOutOfRange { index });
            }
        }
        let needed = 1u128 << r;
        if needed > budget as u128 {
            return Err(CodesError::Budget {
                needed,
                budget,
            });
        }
        let r_bar = masks.len();
        let len = r_bar;
        for message in 1..=full {
            let weight = masks
                .iter()
                .filter(|&&mask| (message & mask).count_ones() % 2 == 1)
                .count();
            if ratio(weight as i64, len as i64) < claimed {
                return Err(CodesError::DistanceViolated {
                    message,
                    weight,
                    len,
                    claimed: rational_to_text(&claimed),
                });
            }
        }
        Ok(LinearCode {
            r,
            r_bar,
            masks,
            distance: claimed,
        })
    }

    /// Message length.
    pub fn message_len(&self) -> usize {
        self.r
    }

    /// Block length.
    pub fn block_len(&self) -> usize {
        self.r_bar
    }

    pub fn masks(&self) -> &[u64] {
        &self.masks
    }

    /// The certified relative distance (a lower bound on every nonzero
    /// codeword's relative weight; verified at construction).
    pub fn distance(&self) -> &BigRational {
        &self.distance
    }

    pub fn encode_mask(&self, message: u64) -> Vec<bool> {
        self.masks
            .iter()
            .map(|&mask| (message & mask).count_ones() % 2 == 1)
            .collect()
    }

    pub fn encode(&self, x: &[bool]) -> Result<Vec<bool>, CodesError> {
        if x.len() != self.r {
            return Err(CodesError::MessageLength {
                got: x.len(),
                capacity: self.r,
            });
        }
        let mut message = 0u64;
        for (i, &b) in x.iter().enumerate() {
            if b {
                message |= 1 << i;
            }
        }
        Ok(self.encode_mask(message))
    }

    /// Exact minimum relative weight over nonzero messages (costs 2^r).
    pub fn min_relative_weight(&self) -> BigRational {
        let mut best: Option<usize> = None;
        for message in 1..(1u64 << self.r) {
            let weight = self
                .masks
                .iter()
                .filter(|&&mask| (message & mask).count_ones() % 2 == 1)
                .count();
            best = Some(best.map_or(weight, |b| b.min(weight)));
        }
        ratio(best.unwrap_or(0) as i64, self.r_bar as i64)
    }

    /// The default base code: 3 message bits, 6 outputs
    /// (x0, x1, x2, x0^x1, x1^x2, x0^x2), certified distance 1/3
    /// (its exact minimum relative weight is 1/2).
    pub fn base_6_3() -> LinearCode {
        LinearCode::certify(
            3,
            vec![0b001, 0b010, 0b100, 0b011, 0b110, 0b101],
            ratio(1, 3),
            1 << 10,
        )
        .expect("built-in base code certifies")
    }

    /// Reproducible code for a given shape: identity prefix plus seeded
    /// random nonzero masks, certified at its exact minimum relative
    /// weight.  Used for desk instances where the shape, not the distance,
    /// is the driving constraint.
    pub fn random_systematic(
        r: usize,
        block: usize,
        seed: u64,
        budget: u64,
    ) -> Result<LinearCode, CodesError> {
        if r == 0 || r > 63 {
            return Err(CodesError::MessageTooWide { got: r });
        }
        if block < r {
            return Err(CodesError::MaskCount {
                got: block,
                expected: r,
            });
        }
        let mut rng = seed_stream(seed);
        let mut masks: Vec<u64> = (0..r).map(|i| 1u64 << i).collect();
        while masks.len() < block {
            masks.push(rng.gen_range(1..1u64 << r));
        }
        let probe = LinearCode::certify(r, masks.clone(), ratio(1, (2 * block) as i64), budget)?;
        let actual = probe.min_relative_weight();
        LinearCode::certify(r, masks, actual, budget)
    }
}

/// Seeded randomized search for the smallest block length admitting a
/// systematic generator of certified distance `target`: block lengths are
/// tried in increasing order, each with `attempts` random completions of
/// the identity prefix.
pub fn find_base_code(
    r: usize,
    target: &BigRational,
    seed: u64,
    attempts: usize,
    max_block: usize,
    budget: u64,
) -> Result<LinearCode, CodesError> {
    if r == 0 || r > 63 {
        return Err(CodesError::MessageTooWide { got: r });
    }
    let mut rng = seed_stream(seed);
    let full = (1u64 << r) - 1;
    for r_bar in r..=max_block {
        for _ in 0..attempts {
            let mut masks: Vec<u64> = (0..r).map(|i| 1u64 << i).collect();
            while masks.len() < r_bar {
                let m = rng.gen::<u64>() & full;
                if m != 0 {
                    masks.push(m);
                }
            }
            match LinearCode::certify(r, masks, target.clone(), budget) {
                Ok(code) => return Ok(code),
                Err(CodesError::DistanceViolated { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    Err(CodesError::SearchFailed { attempts })
}

// ---------------------------------------------------------------------------
// Tensor construction
// ---------------------------------------------------------------------------

fn tensor_capacity(r: usize, d: u32) -> Result<usize, CodesError> {
    let mut cap = 1u128;
    for _ in 0..d {
        cap = cap.checked_mul(r as u128).ok_or(CodesError::Budget {
            needed: u128::MAX,
            budget: 0,
        })?;
        if cap > (1 << 26) {
            return Err(CodesError::Budget {
                needed: cap,
                budget: 1 << 26,
            });
        }
    }
    Ok(cap as usize)
}

/// One axis-encoding pass: every line of the tensor along `axis` (which
/// currently has extent `base.message_len()`) is replaced by its encoding.
fn tensor_pass(
    data: &[bool],
    dims: &mut [usize],
    axis: usize,
    base: &LinearCode,
) -> Vec<bool> {
    let r = base.message_len();
    let rb = base.block_len();
    debug_assert_eq!(dims[axis], r);
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let mut out = vec![false; outer * rb * inner];
    let mut msg = vec![false; r];
    for o in 0..outer {
        for i in 0..inner {
            for (k, slot) in msg.iter_mut().enumerate() {
                *slot = data[(o * r + k) * inner + i];
            }
            let enc = base.encode(&msg).expect("line length matches");
            for (k, &bit) in enc.iter().enumerate() {
                out[(o * rb + k) * inner + i] = bit;
            }
        }
    }
    dims[axis] = rb;
    out
}

/// Encode `x` by the d-fold tensor power of `base`: view the message as a
/// d-dimensional array of side `r` (padding with zeros up to r^d) and apply
/// the base code along each axis in turn.  Output length is block_len^d,
/// laid out row-major.
pub fn tensor_encode(x: &[bool], base: &LinearCode, d: u32) -> Result<Vec<bool>, CodesError> {
    if d == 0 {
        return Err(CodesError::BadOrder);
    }
    let capacity = tensor_capacity(base.message_len(), d)?;
    tensor_capacity(base.block_len(), d)?;
    if x.len() > capacity {
        return Err(CodesError::MessageLength {
            got: x.len(),
            capacity,
        });
    }
    let mut data = x.to_vec();
    data.resize(capacity, false);
    let mut dims = vec![base.message_len(); d as usize];
    for axis in 0..d as usize {
        data = tensor_pass(&data, &mut dims, axis, base);
    }
    Ok(data)
}

// ---------------------------------------------------------------------------
// Expanders and walk amplification
// ---------------------------------------------------------------------------

/// A regular graph given as a circulant (vertex v is adjacent to v + s for
/// each shift s), carrying a certified upper bound on the normalized second
/// eigenvalue.  Construction checks the bound against the exact circulant
/// spectrum computed in floating point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpanderSpec {
    vertices: usize,
    shifts: Vec<usize>,
    lambda: BigRational,
}

impl ExpanderSpec {
    pub fn circulant(
        vertices: usize,
        mut shifts: Vec<usize>,
        lambda: BigRational,
    ) -> Result<ExpanderSpec, CodesError> {
        shifts.sort_unstable();
        shifts.dedup();
        if vertices < 3
            || shifts.is_empty()
            || shifts.iter().any(|&s| s == 0 || s >= vertices)
        {
            return Err(CodesError::BadCirculant);
        }
        // Undirected regularity: the connection set must be symmetric.
        if shifts
            .iter()
            .any(|&s| !shifts.contains(&((vertices - s) % vertices)))
        {
            return Err(CodesError::BadCirculant);
        }
        if lambda < BigRational::zero() || lambda >= BigRational::one() {
            return Err(CodesError::LambdaNotCertified {
                stored: rational_to_text(&lambda),
                computed: f64::NAN,
            });
        }
        let spec = ExpanderSpec {
            vertices,
            shifts,
            lambda,
        };
        let computed = spec.second_eigenvalue_numeric();
        let stored = spec.lambda.numer().to_f64().unwrap_or(f64::INFINITY)
            / spec.lambda.denom().to_f64().unwrap_or(1.0);
        if computed > stored + LAMBDA_TOLERANCE {
            return Err(CodesError::LambdaNotCertified {
                stored: rational_to_text(&spec.lambda),
                computed,
            });
        }
        Ok(spec)
    }

    /// The complete graph on `vertices` vertices; its normalized second
    /// eigenvalue is exactly 1/(vertices - 1).
    pub fn complete(vertices: usize) -> Result<ExpanderSpec, CodesError> {
        if vertices < 3 {
            return Err(CodesError::BadCirculant);
        }
        ExpanderSpec::circulant(
            vertices,
            (1..vertices).collect(),
            ratio(1, vertices as i64 - 1),
        )
    }

    pub fn vertices(&self) -> usize {
        self.vertices
    }

    pub fn degree(&self) -> usize {
        self.shifts.len()
    }

    pub fn shifts(&self) -> &[usize] {
        &self.shifts
    }

    pub fn lambda(&self) -> &BigRational {
        &self.lambda
    }

    pub fn neighbor(&self, v: usize, k: usize) -> usize {
        (v + self.shifts[k]) % self.vertices
    }

    /// max_{j != 0} |eigenvalue_j| / degree for the circulant adjacency
    /// matrix, whose eigenvalues are sums of cosines.
    pub fn second_eigenvalue_numeric(&self) -> f64 {
        let n = self.vertices as f64;
        let mut worst = 0.0f64;
        for j in 1..self.vertices {
            let eig: f64 = self
                .shifts
                .iter()
                .map(|&s| (std::f64::consts::TAU * j as f64 * s as f64 / n).cos())
                .sum();
            worst = worst.max(eig.abs() / self.degree() as f64);
        }
        worst
    }

    /// Number of walks of `ell` vertices: vertices * degree^(ell-1).
    pub fn walk_count(&self, ell: usize) -> BigUint {
        let mut total = BigUint::from(self.vertices);
        for _ in 1..ell {
            total *= BigUint::from(self.degree());
        }
        total
    }
}

/// Smallest walk length ell >= 1 with (1 - rho(1 - lambda))^(ell-1) <= eps,
/// computed in exact rational arithmetic; the miss factor per step is the
/// expander hitting bound for sets of density rho.
pub fn walk_length(
    graph: &ExpanderSpec,
    eps: &BigRational,
    rho: &BigRational,
) -> Result<usize, CodesError> {
    if *eps <= BigRational::zero() {
        return Err(CodesError::BadEps(rational_to_text(eps)));
    }
    if *rho <= BigRational::zero() || *rho > BigRational::one() {
        return Err(CodesError::BadRho(rational_to_text(rho)));
    }
    let q = BigRational::one() - rho * (BigRational::one() - graph.lambda());
    let mut value = BigRational::one();
    for ell in 1..=WALK_LENGTH_CAP {
        if value <= *eps {
            return Ok(ell);
        }
        value *= &q;
    }
    Err(CodesError::WalkBudget {
        cap: WALK_LENGTH_CAP,
    })
}

/// Materialize the amplified codeword for a fixed walk length.  Coordinates
/// are ordered lexicographically by (start vertex, step choices with the
/// first step most significant, subset bitmask with bit j selecting walk
/// position j).  Coordinate value = parity of `xhat` over the selected walk
/// positions.
pub fn amplify_encode_with_length(
    xhat: &[bool],
    graph: &ExpanderSpec,
    ell: usize,
    budget: u64,
) -> Result<Vec<bool>, CodesError> {
    if xhat.len() != graph.vertices() {
        return Err(CodesError::PositionsMismatch {
            got: xhat.len(),
            expected: graph.vertices(),
        });
    }
    assert!((1..=WALK_LENGTH_CAP).contains(&ell));
    let walks = graph.walk_count(ell);
    let total = (walks.clone() << ell)
        .to_u128()
        .unwrap_or(u128::MAX);
    if total > budget as u128 {
        return Err(CodesError::Budget {
            needed: total,
            budget,
        });
    }
    let deg = graph.degree();
    let subsets = 1u64 << ell;
    let mut bits = Vec::with_capacity(total as usize);
    let mut steps = vec![0usize; ell - 1];
    for start in 0..graph.vertices() {
        loop {
            // Value mask of the walk: bit j set iff xhat is 1 at position j.
            let mut vmask = 0u64;
            let mut v = start;
            if xhat[v] {
                vmask |= 1;
            }
            for (j, &k) in steps.iter().enumerate() {
                v = graph.neighbor(v, k);
                if xhat[v] {
                    vmask |= 1 << (j + 1);
                }
            }
            for s in 0..subsets {
                bits.push((vmask & s).count_ones() % 2 == 1);
            }
            // Advance the step odometer (last step fastest).
            let mut pos = ell - 1;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                steps[pos] += 1;
                if steps[pos] < deg {
                    break;
                }
                steps[pos] = 0;
                if pos == 0 {
                    break;
                }
            }
            if steps.iter().all(|&s| s == 0) {
                break;
            }
        }
    }
    debug_assert_eq!(bits.len() as u128, total);
    Ok(bits)
}

/// Exact Hamming weight of the amplified codeword, without materializing
/// it: a coordinate (W, S) is nonzero iff S selects an odd number of
/// 1-positions of the walk, and a walk that meets the support of `xhat`
/// contributes exactly 2^(ell-1) such subsets while a walk that misses it
/// contributes none.  Walks missing the support are counted by dynamic
/// programming over the graph restricted to the complement.
/// Returns (ones, total length).
pub fn amplify_weight_with_length(
    xhat: &[bool],
    graph: &ExpanderSpec,
    ell: usize,
) -> Result<(BigUint, BigUint), CodesError> {
    if xhat.len() != graph.vertices() {
        return Err(CodesError::PositionsMismatch {
            got: xhat.len(),
            expected: graph.vertices(),
        });
    }
    assert!((1..=WALK_LENGTH_CAP).contains(&ell));
    let n = graph.vertices();
    let total_walks = graph.walk_count(ell);
    let length = total_walks.clone() << ell;
    let mut cur: Vec<BigUint> = (0..n)
        .map(|v| {
            if xhat[v] {
                BigUint::zero()
            } else {
                BigUint::one()
            }
        })
        .collect();
    for _ in 1..ell {
        let mut next = vec![BigUint::zero(); n];
        for (v, count) in cur.iter().enumerate() {
            if count.is_zero() {
                continue;
            }
            for &s in graph.shifts() {
                let u = (v + s) % n;
                if !xhat[u] {
                    next[u] += count;
                }
            }
        }
        cur = next;
    }
    let avoiding: BigUint = cur.into_iter().sum();
    let hits = total_walks - avoiding;
    let ones = if ell == 1 { hits } else { hits << (ell - 1) };
    Ok((ones, length))
}

/// Distance amplification with the walk length chosen from (eps, rho):
/// returns the chosen length together with the materialized codeword.
pub fn amplify_encode(
    xhat: &[bool],
    graph: &ExpanderSpec,
    eps: &BigRational,
    rho: &BigRational,
    budget: u64,
) -> Result<(usize, Vec<bool>), CodesError> {
    let ell = walk_length(graph, eps, rho)?;
    let bits = amplify_encode_with_length(xhat, graph, ell, budget)?;
    Ok((ell, bits))
}

// ---------------------------------------------------------------------------
// The composed balanced code
// ---------------------------------------------------------------------------

/// Tensor-then-amplify composition: messages of length r^d are tensor
/// encoded (guaranteed relative weight at least 3^-d for a base of
/// distance at least 1/3), then walk-amplified with density parameter
/// rho = 3^-d so that every nonzero codeword has relative weight in
/// [1/2 - eps, 1/2].
#[derive(Debug, Clone)]
pub struct BalancedCodeSpec {
    pub base: LinearCode,
    pub d: u32,
    pub graph: ExpanderSpec,
    pub eps: BigRational,
    pub rho: BigRational,
    pub ell: usize,
}

impl BalancedCodeSpec {
    pub fn new(
        base: LinearCode,
        d: u32,
        graph: ExpanderSpec,
        eps: BigRational,
    ) -> Result<BalancedCodeSpec, CodesError> {
        if d == 0 {
            return Err(CodesError::BadOrder);
        }
        if *base.distance() < ratio(1, 3) {
            return Err(CodesError::BaseDistanceTooSmall {
                got: rational_to_text(base.distance()),
            });
        }
        let nhat = tensor_capacity(base.block_len(), d)?;
        if graph.vertices() != nhat {
            return Err(CodesError::GraphSizeMismatch {
                expected: nhat,
                got: graph.vertices(),
            });
        }
        let third = ratio(1, 3);
        let mut rho = BigRational::one();
        for _ in 0..d {
            rho *= &third;
        }
        let ell = walk_length(&graph, &eps, &rho)?;
        Ok(BalancedCodeSpec {
            base,
            d,
            graph,
            eps,
            rho,
            ell,
        })
    }

    pub fn message_len(&self) -> usize {
        tensor_capacity(self.base.message_len(), self.d).expect("checked at construction")
    }

    pub fn output_len(&self) -> BigUint {
        self.graph.walk_count(self.ell) << self.ell
    }

    pub fn encode(&self, x: &[bool], budget: u64) -> Result<Vec<bool>, CodesError> {
        let xhat = tensor_encode(x, &self.base, self.d)?;
        amplify_encode_with_length(&xhat, &self.graph, self.ell, budget)
    }

    /// Exact (ones, length) of the codeword of `x`, via the walk-hit
    /// weight identity.
    pub fn weight(&self, x: &[bool]) -> Result<(BigUint, BigUint), CodesError> {
        let xhat = tensor_encode(x, &self.base, self.d)?;
        amplify_weight_with_length(&xhat, &self.graph, self.ell)
    }
}

// ---------------------------------------------------------------------------
// Johnson-bound parameters
// ---------------------------------------------------------------------------

/// List-decoding parameters implied by the Johnson bound for a code of
/// distance 1/2 - eps with eps = delta^2: every Hamming ball of relative
/// radius 1/2 - delta contains at most ceil(1/delta^2) codewords.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JohnsonParams {
    pub delta: BigRational,
    pub eps: BigRational,
    pub ball_radius: BigRational,
    pub list_bound: BigUint,
}

pub fn johnson_params(delta: &BigRational) -> Result<JohnsonParams, CodesError> {
    if *delta <= BigRational::zero() || *delta >= ratio(1, 2) {
        return Err(CodesError::BadDelta(rational_to_text(delta)));
    }
    let eps = delta * delta;
    let ball_radius = ratio(1, 2) - delta;
    let p2 = (delta.numer() * delta.numer())
        .to_biguint()
        .expect("delta positive");
    let q2 = (delta.denom() * delta.denom())
        .to_biguint()
        .expect("denominator positive");
    let list_bound = (&q2 + &p2 - BigUint::one()) / &p2;
    Ok(JohnsonParams {
        delta: delta.clone(),
        eps,
        ball_radius,
        list_bound,
    })
}

// ---------------------------------------------------------------------------
// Threshold-circuit emission of linear maps
// ---------------------------------------------------------------------------

/// A GF(2)-linear map, one output at a time: each output is the XOR of a
/// strictly increasing list of input positions.  (Nonlinear maps are not
/// representable, which is the point.)
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearMap {
    pub n_in: usize,
    pub outputs: Vec<Vec<usize>>,
}

impl LinearMap {
    pub fn validate(&self) -> Result<(), CodesError> {
        for (index, out) in self.outputs.iter().enumerate() {
            let increasing = out.windows(2).all(|w| w[0] < w[1]);
            if !increasing || out.iter().any(|&i| i >= self.n_in) {
                return Err(CodesError::MalformedOutput {
                    index,
                    n_in: self.n_in,
                });
            }
        }
        Ok(())
    }

    pub fn apply(&self, x: &[bool]) -> Result<Vec<bool>, CodesError> {
        if x.len() != self.n_in {
            return Err(CodesError::MessageLength {
                got: x.len(),
                capacity: self.n_in,
            });
        }
        self.validate()?;
        Ok(self
            .outputs
            .iter()
            .map(|out| out.iter().filter(|&&i| x[i]).count() % 2 == 1)
            .collect())
    }
}

fn pass_gate(arity: usize, input: usize) -> Ltf {
    let mut w = vec![BigInt::zero(); arity];
    w[input] = BigInt::one();
    Ltf::new(w, BigRational::zero())
}

fn constant_plus_gate(arity: usize) -> Ltf {
    Ltf::new(vec![BigInt::zero(); arity], -BigRational::one())
}

/// Counting gate j for a parity block over `positions` (all weights 1,
/// threshold k - 2j + 1): outputs -1 exactly when at least j of the
/// positions carry sign -1.  The threshold parity differs from any
/// achievable sum, so no ties arise.
fn counting_gate(arity: usize, positions: &[usize], j: usize) -> Ltf {
    let mut w = vec![BigInt::zero(); arity];
    for &p in positions {
        w[p] = BigInt::one();
    }
    let k = positions.len() as i64;
    Ltf::new(w, BigRational::from_integer(BigInt::from(k - 2 * j as i64 + 1)))
}

/// Top gate of a parity block: alternating +-1 weights over that block's k
/// counting gates, threshold (k mod 2) - 1.  Evaluates to the product of
/// the block's input signs.
fn parity_top_gate(width: usize, offset: usize, k: usize) -> Ltf {
    let mut w = vec![BigInt::zero(); width];
    for j in 1..=k {
        w[offset + j - 1] = if j % 2 == 1 { BigInt::one() } else { -BigInt::one() };
    }
    let a = (k % 2) as i64;
    Ltf::new(w, BigRational::from_integer(BigInt::from(a - 1)))
}

/// Emit `map` as a threshold circuit over sign inputs.  Outputs that read
/// at most one input each yield a single layer of pass-through/constant
/// gates; otherwise each output becomes a depth-2 parity gadget (k counting
/// gates plus one combining gate, k^2 + k wires).
pub fn emit_linear_circuit(map: &LinearMap) -> Result<ThresholdCircuit, CodesError> {
    map.validate()?;
    if map.outputs.is_empty() {
        return Err(CodesError::MalformedOutput {
            index: 0,
            n_in: map.n_in,
        });
    }
    let n = map.n_in;
    if map.outputs.iter().all(|o| o.len() <= 1) {
        let layer = map
            .outputs
            .iter()
            .map(|o| match o.as_slice() {
                [] => constant_plus_gate(n),
                [i] => pass_gate(n, *i),
                _ => unreachable!(),
            })
            .collect();
        return Ok(ThresholdCircuit::new(n, vec![layer])?);
    }
    let mut bottom = Vec::new();
    let mut spans = Vec::with_capacity(map.outputs.len());
    for out in &map.outputs {
        let k = out.len();
        spans.push((bottom.len(), k));
        for j in 1..=k {
            bottom.push(counting_gate(n, out, j));
        }
    }
    let width = bottom.len();
    let top = spans
        .into_iter()
        .map(|(offset, k)| parity_top_gate(width, offset, k))
        .collect();
    Ok(ThresholdCircuit::new(n, vec![bottom, top])?)
}

/// Exact wire count of `emit_linear_circuit(map)`.
pub fn emitted_wire_count(map: &LinearMap) -> usize {
    if map.outputs.iter().all(|o| o.len() <= 1) {
        map.outputs.iter().map(Vec::len).sum()
    } else {
        map.outputs.iter().map(|o| o.len() * o.len() + o.len()).sum()
    }
}

/// The d axis-encoding stages of the tensor code as linear maps; composing
/// them equals `tensor_encode`.
pub fn tensor_stage_maps(base: &LinearCode, d: u32) -> Result<Vec<LinearMap>, CodesError> {
    if d == 0 {
        return Err(CodesError::BadOrder);
    }
    tensor_capacity(base.block_len(), d)?;
    let r = base.message_len();
    let rb = base.block_len();
    let d = d as usize;
    let mut maps = Vec::with_capacity(d);
    for s in 0..d {
        let dims_in: Vec<usize> = (0..d).map(|a| if a < s { rb } else { r }).collect();
        let inner: usize = dims_in[s + 1..].iter().product();
        let outer: usize = dims_in[..s].iter().product();
        let n_in = outer * r * inner;
        let mut outputs = Vec::with_capacity(outer * rb * inner);
        for o in 0..outer {
            for k in 0..rb {
                let mask = base.masks()[k];
                for i in 0..inner {
                    let list: Vec<usize> = (0..r)
                        .filter(|t| mask >> t & 1 == 1)
                        .map(|t| (o * r + t) * inner + i)
                        .collect();
                    outputs.push(list);
                }
            }
        }
        maps.push(LinearMap { n_in, outputs });
    }
    Ok(maps)
}

/// The full tensor encoder as a threshold circuit (depth 2 per stage when
/// any stage output reads two or more inputs, as every base code with
/// proper parities does).
pub fn tensor_circuit(base: &LinearCode, d: u32) -> Result<ThresholdCircuit, CodesError> {
    let maps = tensor_stage_maps(base, d)?;
    let mut stages = maps.iter().map(emit_linear_circuit);
    let mut circuit = stages.next().expect("d >= 1")?;
    for stage in stages {
        circuit = circuit.then(&stage?)?;
    }
    Ok(circuit)
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CodeDoc {
    r: usize,
    r_bar: usize,
    masks: Vec<String>,
    distance: String,
}

pub fn code_to_text(code: &LinearCode) -> String {
    let doc = CodeDoc {
        r: code.message_len(),
        r_bar: code.block_len(),
        masks: code.masks().iter().map(u64::to_string).collect(),
        distance: rational_to_text(code.distance()),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("document serializes");
    text.push('\n');
    text
}

/// Parse and re-certify: a loaded code is only handed out if the stored
/// distance bound still verifies against full enumeration.
pub fn code_from_text(text: &str, budget: u64) -> Result<LinearCode, CodesError> {
    let doc: CodeDoc = serde_json::from_str(text)?;
    let masks = doc
        .masks
        .iter()
        .map(|s| s.parse::<u64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CodesError::BadField("masks"))?;
    if masks.len() != doc.r_bar {
        return Err(CodesError::BadField("r_bar"));
    }
    let distance = rational_from_text(&doc.distance).ok_or(CodesError::BadField("distance"))?;
    LinearCode::certify(doc.r, masks, distance, budget)
}

#[derive(Serialize, Deserialize)]
struct ExpanderDoc {
    vertices: usize,
    shifts: Vec<usize>,
    lambda: String,
}

pub fn expander_to_text(graph: &ExpanderSpec) -> String {
    let doc = ExpanderDoc {
        vertices: graph.vertices(),
        shifts: graph.shifts().to_vec(),
        lambda: rational_to_text(graph.lambda()),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("document serializes");
    text.push('\n');
    text
}

pub fn expander_from_text(text: &str) -> Result<ExpanderSpec, CodesError> {
    let doc: ExpanderDoc = serde_json::from_str(text)?;
    let lambda = rational_from_text(&doc.lambda).ok_or(CodesError::BadField("lambda"))?;
    ExpanderSpec::circulant(doc.vertices, doc.shifts, lambda)
}

/// Pack bits little-endian into bytes and print lowercase hex (two digits
/// per byte); trailing pad bits of the last byte are zero.
pub fn codeword_to_hex(bits: &[bool]) -> String {
    let mut out = String::with_capacity(bits.len().div_ceil(8) * 2);
    for chunk in bits.chunks(8) {
        let mut byte = 0u8;
        for (i, &b) in chunk.iter().enumerate() {
            if b {
                byte |= 1 << i;
            }
        }
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

pub fn codeword_from_hex(text: &str, len: usize) -> Result<Vec<bool>, CodesError> {
    let expected_bytes = len.div_ceil(8);
    if text.len() != expected_bytes * 2 || !text.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(CodesError::BadField("codeword"));
    }
    let mut bits = Vec::with_capacity(len);
    for i in 0..expected_bytes {
        let byte = u8::from_str_radix(&text[2 * i..2 * i + 2], 16)
            .map_err(|_| CodesError::BadField("codeword"))?;
        for j in 0..8 {
            let idx = 8 * i + j;
            let bit = byte >> j & 1 == 1;
            if idx < len {
                bits.push(bit);
            } else if bit {
                return Err(CodesError::BadField("codeword"));
            }
        }
    }
    Ok(bits)
}
