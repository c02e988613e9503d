//! Seed-enumerable bit sources: the uniform (exhaustive) source, a small-bias
//! powering construction giving delta-almost k-wise independent bits, and a
//! declared-accuracy wrapper for plugging in external threshold-fooling
//! generators. Also: restriction sampling from a selection string plus a
//! value string, and exact fooling / concentration gap computations.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::circuit::{CircuitError, Ltf, Restriction};
use crate::exact::{ratio_pow, sign_from_bit};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SourceError {
    #[error("output length must be positive")]
    EmptyOutput,
    #[error("seed space of 2^{bits} states cannot be addressed with 64-bit seeds")]
    SeedSpaceTooWide { bits: u32 },
    #[error("enumerating {needed} states exceeds budget {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },
    #[error("independence order k={k} exceeds output length {n}")]
    OrderTooLarge { k: usize, n: usize },
    #[error("delta must satisfy 0 < delta < 1, got {0}")]
    BadDelta(String),
    #[error("selection string length {got} is not q*n = {expected}")]
    SelectionLength { expected: usize, got: usize },
    #[error("value string length {got} does not match variable count {expected}")]
    ValueLength { expected: usize, got: usize },
    #[error("circuit error: {0}")]
    Circuit(#[from] CircuitError),
}

/// Serializable description of a source: enough to reconstruct it and to
/// stamp reports with the exact construction used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub kind: String,
    pub n: usize,
    pub params: BTreeMap<String, String>,
    pub seed_len: u32,
    pub construction_id: String,
}

impl SourceDescriptor {
    pub fn to_text(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("descriptor serialization");
        text.push('\n');
        text
    }

    pub fn from_text(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// A deterministic map from a seed to an output bit string. The seed space
/// is `{0, ..., 2^seed_bits - 1}` and is meant to be enumerable (subject to
/// a budget) so that every probability over the source is an exact rational
/// with denominator `2^seed_bits`.
pub trait SeededSource: Sync {
    fn output_len(&self) -> usize;
    fn seed_bits(&self) -> u32;
    fn emit(&self, seed: u64) -> Vec<bool>;
    fn descriptor(&self) -> SourceDescriptor;

    /// Number of seeds, after checking it against the budget.
    fn seed_count(&self, budget: u64) -> Result<u64, SourceError> {
        let bits = self.seed_bits();
        if bits >= 64 {
            return Err(SourceError::SeedSpaceTooWide { bits });
        }
        let needed = 1u128 << bits;
        if needed > budget as u128 {
            return Err(SourceError::BudgetExceeded {
                needed,
                budget,
            });
        }
        Ok(needed as u64)
    }
}

/// The uniform distribution with the identity seed map: seed bit `j` is
/// output bit `j`. Zero-error for every statistical test, at the price of a
/// seed as long as the output.
#[derive(Debug, Clone)]
pub struct UniformSource {
    n: usize,
}

impl UniformSource {
    pub fn new(n: usize) -> Result<Self, SourceError> {
        if n == 0 {
            return Err(SourceError::EmptyOutput);
        }
        if n > 63 {
            return Err(SourceError::SeedSpaceTooWide { bits: n as u32 });
        }
        Ok(UniformSource { n })
    }
}

impl SeededSource for UniformSource {
    fn output_len(&self) -> usize {
        self.n
    }

    fn seed_bits(&self) -> u32 {
        self.n as u32
    }

    fn emit(&self, seed: u64) -> Vec<bool> {
        (0..self.n).map(|j| seed >> j & 1 == 1).collect()
    }

    fn descriptor(&self) -> SourceDescriptor {
        SourceDescriptor {
            kind: "uniform-exhaustive".into(),
            n: self.n,
            params: BTreeMap::new(),
            seed_len: self.n as u32,
            construction_id: "identity-v1".into(),
        }
    }
}

/// Uniform bits of any length, drawn from the deterministic stream cipher
/// behind [`seed_stream`]. The full 64-bit seed space is deliberately not
/// enumerable ([`SeededSource::seed_count`] errors), so this source is for
/// Monte-Carlo harnesses rather than exhaustive averaging; use
/// [`UniformSource`] when exact enumeration is needed and the output fits
/// in 63 bits.
#[derive(Debug, Clone)]
pub struct StreamSource {
    n: usize,
}

impl StreamSource {
    pub fn new(n: usize) -> Result<Self, SourceError> {
        if n == 0 {
            return Err(SourceError::EmptyOutput);
        }
        Ok(StreamSource { n })
    }
}

impl SeededSource for StreamSource {
    fn output_len(&self) -> usize {
        self.n
    }

    fn seed_bits(&self) -> u32 {
        64
    }

    fn emit(&self, seed: u64) -> Vec<bool> {
        let mut rng = seed_stream(seed);
        (0..self.n).map(|_| rng.gen::<bool>()).collect()
    }

    fn descriptor(&self) -> SourceDescriptor {
        SourceDescriptor {
            kind: "uniform-stream".into(),
            n: self.n,
            params: BTreeMap::new(),
            seed_len: 64,
            construction_id: "chacha8-stream-v1".into(),
        }
    }
}

/// Caps the declared seed space of an inner source at `2^bits`, passing
/// seeds through reduced modulo `2^bits`. Exhaustive averaging then sweeps
/// exactly that prefix of the inner seed space, which makes Monte-Carlo
/// sources such as [`StreamSource`] enumerable at desk scale.
#[derive(Debug, Clone)]
pub struct TruncatedSeedSource<S> {
    inner: S,
    bits: u32,
}

impl<S: SeededSource> TruncatedSeedSource<S> {
    pub fn new(inner: S, bits: u32) -> Result<Self, SourceError> {
        if bits == 0 || bits > 63 || bits >= inner.seed_bits() {
            return Err(SourceError::SeedSpaceTooWide { bits });
        }
        Ok(TruncatedSeedSource { inner, bits })
    }
}

impl<S: SeededSource> SeededSource for TruncatedSeedSource<S> {
    fn output_len(&self) -> usize {
        self.inner.output_len()
    }

    fn seed_bits(&self) -> u32 {
        self.bits
    }

    fn emit(&self, seed: u64) -> Vec<bool> {
        self.inner.emit(seed & ((1u64 << self.bits) - 1))
    }

    fn descriptor(&self) -> SourceDescriptor {
        let inner = self.inner.descriptor();
        let mut params = inner.params;
        params.insert("truncated_from".into(), inner.kind.clone());
        params.insert("truncated_seed_len".into(), inner.seed_len.to_string());
        SourceDescriptor {
            kind: "seed-truncated".into(),
            n: inner.n,
            params,
            seed_len: self.bits,
            construction_id: inner.construction_id,
        }
    }
}

// --- GF(2)[x] and GF(2^s) helpers (bit-packed in u64, s <= 32) ---

/// Degree of a polynomial over GF(2), or -1 for the zero polynomial.
fn poly_deg(p: u64) -> i32 {
    63 - p.leading_zeros() as i32
}

/// Carryless product of two polynomials of degree < 32.
fn poly_mul(a: u64, b: u64) -> u64 {
    let mut out = 0u64;
    let mut a = a;
    let mut shift = 0;
    while a != 0 {
        if a & 1 == 1 {
            out ^= b << shift;
        }
        a >>= 1;
        shift += 1;
    }
    out
}

/// Remainder of `a` modulo `f` (f != 0).
fn poly_rem(mut a: u64, f: u64) -> u64 {
    let df = poly_deg(f);
    loop {
        let da = poly_deg(a);
        if da < df {
            return a;
        }
        a ^= f << (da - df) as u32;
    }
}

fn poly_gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let r = poly_rem(a, b);
        a = b;
        b = r;
    }
    a
}

/// Product in GF(2^s) with modulus polynomial `f` of degree `s`.
fn gf_mul(a: u64, b: u64, f: u64) -> u64 {
    poly_rem(poly_mul(a, b), f)
}

/// `x^(2^k) mod f` by repeated squaring of the generator image.
fn frobenius_power(k: u32, f: u64) -> u64 {
    let mut acc = 2u64; // the polynomial "x"
    for _ in 0..k {
        acc = gf_mul(acc, acc, f);
    }
    acc
}

/// A degree-`s` polynomial is irreducible over GF(2) iff it shares no root
/// with `x^(2^k) - x` for any `k <= s/2`, i.e. has no factor of degree <= s/2.
fn poly_irreducible(f: u64) -> bool {
    let s = poly_deg(f);
    if s <= 0 {
        return false;
    }
    for k in 1..=(s as u32 / 2) {
        let xq = frobenius_power(k, f);
        if poly_gcd(f, xq ^ 2) != 1 {
            return false;
        }
    }
    true
}

/// First irreducible polynomial of degree `s` in lexicographic order of the
/// low coefficient bits (the leading bit is fixed).
fn first_irreducible(s: u32) -> u64 {
    assert!((1..=32).contains(&s), "field degree out of range: {s}");
    if s == 1 {
        return 0b10; // x itself
    }
    let top = 1u64 << s;
    // An irreducible polynomial of degree >= 1 needs a nonzero constant term.
    let mut low = 1u64;
    loop {
        let f = top | low;
        if poly_irreducible(f) {
            return f;
        }
        low += 2;
        assert!(low < top, "no irreducible polynomial found for degree {s}");
    }
}

/// Delta-almost k-wise independent bits from the small-bias powering
/// construction: the seed is a pair `(x, y)` of elements of GF(2^s); output
/// bit `i` is the GF(2) inner product `<x^(i+1), y>` of bit representations.
///
/// Every parity over a nonempty set `T` of output positions has bias
/// `Pr_x[sum_{i in T} x^(i+1) = 0] <= n / 2^s`, and any epsilon-biased
/// string is `(2^ceil(k/2) * epsilon)`-close to k-wise independence on every
/// k-coordinate projection. The constructor picks the smallest `s` making
/// that guarantee at most `delta`.
#[derive(Debug, Clone)]
pub struct AlmostKwiseSource {
    n: usize,
    k: usize,
    delta: BigRational,
    s: u32,
    modulus: u64,
}

impl AlmostKwiseSource {
    pub fn new(n: usize, k: usize, delta: BigRational) -> Result<Self, SourceError> {
        if n == 0 {
            return Err(SourceError::EmptyOutput);
        }
        if k == 0 || k > n {
            return Err(SourceError::OrderTooLarge { k, n });
        }
        if delta <= BigRational::zero() || delta >= BigRational::one() {
            return Err(SourceError::BadDelta(delta.to_string()));
        }
        // smallest s with 2^s >= n * 2^ceil(k/2) / delta; the seed is a pair
        // of field elements, so s is capped at 32 to keep seeds in u64.
        let need = BigRational::from_integer(BigInt::from(n) << k.div_ceil(2)) / &delta;
        let mut s = 1u32;
        while BigRational::from_integer(BigInt::from(BigUint::one() << s as usize)) < need {
            s += 1;
            if s > 32 {
                return Err(SourceError::SeedSpaceTooWide { bits: 2 * s });
            }
        }
        Ok(AlmostKwiseSource {
            n,
            k,
            delta,
            s,
            modulus: first_irreducible(s),
        })
    }

    pub fn field_bits(&self) -> u32 {
        self.s
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn delta(&self) -> &BigRational {
        &self.delta
    }

    /// Exact per-projection statistical distances from uniform, for all
    /// projections of at most `k` coordinates, via parity biases.
    ///
    /// For this construction the bias of the parity over `T` is exactly
    /// `r_T / 2^s` where `r_T` counts field elements `x` with
    /// `sum_{i in T} x^(i+1) = 0`; the distribution of a j-coordinate
    /// projection follows by Fourier inversion, so the distances come out
    /// exact without enumerating the seed space.
    pub fn projection_distances(&self, k: usize, budget: u64) -> Result<KwiseReport, SourceError> {
        if k == 0 || k > self.n {
            return Err(SourceError::OrderTooLarge { k, n: self.n });
        }
        if self.s >= 63 || 1u128 << self.s > budget as u128 {
            return Err(SourceError::BudgetExceeded {
                needed: 1u128 << self.s.min(127),
                budget,
            });
        }
        let subsets = nonempty_subsets(self.n, k);
        let mut roots = vec![0u64; subsets.len()];
        let mut powers = vec![0u64; self.n];
        for x in 0..(1u64 << self.s) {
            let mut p = x;
            for slot in powers.iter_mut() {
                *slot = p;
                p = gf_mul(p, x, self.modulus);
            }
            for (si, subset) in subsets.iter().enumerate() {
                let mut acc = 0u64;
                for &i in subset {
                    acc ^= powers[i];
                }
                if acc == 0 {
                    roots[si] += 1;
                }
            }
        }
        // bias of the parity over a sorted subset of positions
        let denom = BigInt::from(1u64) << self.s as usize;
        let bias: BTreeMap<Vec<usize>, BigRational> = subsets
            .iter()
            .zip(&roots)
            .map(|(subset, &r)| {
                (
                    subset.clone(),
                    BigRational::new(BigInt::from(r), denom.clone()),
                )
            })
            .collect();
        let mut worst = BigRational::zero();
        let mut worst_projection = Vec::new();
        for proj in nonempty_subsets(self.n, k) {
            let j = proj.len();
            let cells = 1usize << j;
            let uniform = BigRational::new(BigInt::one(), BigInt::from(cells as u64));
            let mut sd = BigRational::zero();
            for a in 0..cells as u64 {
                // Pr[projection = a] = 2^-j * sum_T (-1)^{|T ∩ a|} bias_T
                let mut p = BigRational::one();
                for (t_mask, t_set) in masked_subsets(&proj) {
                    let b = &bias[&t_set];
                    if (t_mask & a).count_ones() % 2 == 0 {
                        p += b;
                    } else {
                        p -= b;
                    }
                }
                p /= BigRational::from_integer(BigInt::from(cells as u64));
                sd += (p - &uniform).abs();
            }
            sd /= BigRational::from_integer(BigInt::from(2));
            if sd > worst {
                worst = sd;
                worst_projection = proj;
            }
        }
        Ok(KwiseReport {
            worst_distance: worst,
            worst_projection,
        })
    }
}

impl SeededSource for AlmostKwiseSource {
    fn output_len(&self) -> usize {
        self.n
    }

    fn seed_bits(&self) -> u32 {
        2 * self.s
    }

    fn emit(&self, seed: u64) -> Vec<bool> {
        let mask = (1u64 << self.s) - 1;
        let x = seed & mask;
        let y = seed >> self.s & mask;
        let mut out = Vec::with_capacity(self.n);
        let mut power = x;
        for _ in 0..self.n {
            out.push((power & y).count_ones() % 2 == 1);
            power = gf_mul(power, x, self.modulus);
        }
        out
    }

    fn descriptor(&self) -> SourceDescriptor {
        let mut params = BTreeMap::new();
        params.insert("k".into(), self.k.to_string());
        params.insert("delta".into(), format!("{}/{}", self.delta.numer(), self.delta.denom()));
        params.insert("field_bits".into(), self.s.to_string());
        params.insert("modulus".into(), format!("{:#b}", self.modulus));
        SourceDescriptor {
            kind: "almost-kwise".into(),
            n: self.n,
            params,
            seed_len: 2 * self.s,
            construction_id: "smallbias-powering-v1".into(),
        }
    }
}

/// Wraps any source together with a declared threshold-fooling accuracy.
/// The crate does not re-derive the declared value; it is carried into
/// descriptors and reports so external generators can be swapped in.
pub struct DeclaredFoolingSource<S> {
    pub inner: S,
    pub declared_eps: BigRational,
}

impl<S: SeededSource> DeclaredFoolingSource<S> {
    pub fn new(inner: S, declared_eps: BigRational) -> Self {
        DeclaredFoolingSource {
            inner,
            declared_eps,
        }
    }
}

impl DeclaredFoolingSource<UniformSource> {
    /// The uniform source declared as 0-fooling (exactly true).
    pub fn exact_uniform(n: usize) -> Result<Self, SourceError> {
        Ok(DeclaredFoolingSource {
            inner: UniformSource::new(n)?,
            declared_eps: BigRational::zero(),
        })
    }
}

impl<S: SeededSource> SeededSource for DeclaredFoolingSource<S> {
    fn output_len(&self) -> usize {
        self.inner.output_len()
    }

    fn seed_bits(&self) -> u32 {
        self.inner.seed_bits()
    }

    fn emit(&self, seed: u64) -> Vec<bool> {
        self.inner.emit(seed)
    }

    fn descriptor(&self) -> SourceDescriptor {
        let inner = self.inner.descriptor();
        let mut params = inner.params;
        params.insert(
            "declared_eps".into(),
            format!("{}/{}", self.declared_eps.numer(), self.declared_eps.denom()),
        );
        SourceDescriptor {
            kind: "ltf-fooling".into(),
            n: inner.n,
            params,
            seed_len: inner.seed_len,
            construction_id: format!("declared+{}", inner.construction_id),
        }
    }
}

/// Sorted subsets of `{0..n-1}` of size 1..=k, in order of size then lex.
fn nonempty_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn rec(start: usize, n: usize, left: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if !current.is_empty() {
            out.push(current.clone());
        }
        if left == 0 {
            return;
        }
        for i in start..n {
            current.push(i);
            rec(i + 1, n, left - 1, current, out);
            current.pop();
        }
    }
    rec(0, n, k, &mut current, &mut out);
    out.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    out.dedup();
    out
}

/// Nonempty subsets of a projection, each as (bitmask over projection
/// positions, sorted global positions).
fn masked_subsets(proj: &[usize]) -> Vec<(u64, Vec<usize>)> {
    let j = proj.len();
    (1..(1u64 << j))
        .map(|m| {
            let set: Vec<usize> = (0..j).filter(|&b| m >> b & 1 == 1).map(|b| proj[b]).collect();
            (m, set)
        })
        .collect()
}

/// Result of a k-wise independence check: the worst statistical distance
/// over all projections of at most k coordinates, and a projection attaining it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KwiseReport {
    pub worst_distance: BigRational,
    pub worst_projection: Vec<usize>,
}

impl KwiseReport {
    pub fn passes(&self, delta: &BigRational) -> bool {
        self.worst_distance <= *delta
    }
}

/// Check k-wise independence by enumerating the full seed space: for every
/// projection of at most `k` output coordinates, compare the joint
/// distribution against uniform in statistical distance. Exact but costs
/// `2^seed_bits * (number of projections)`.
pub fn check_kwise(
    source: &dyn SeededSource,
    k: usize,
    budget: u64,
) -> Result<KwiseReport, SourceError> {
    let n = source.output_len();
    if k == 0 || k > n {
        return Err(SourceError::OrderTooLarge { k, n });
    }
    let seeds = source.seed_count(budget)?;
    let projections = nonempty_subsets(n, k);
    let mut counts: Vec<Vec<u64>> = projections
        .iter()
        .map(|p| vec![0u64; 1 << p.len()])
        .collect();
    for seed in 0..seeds {
        let bits = source.emit(seed);
        for (proj, count) in projections.iter().zip(counts.iter_mut()) {
            let mut idx = 0usize;
            for (b, &pos) in proj.iter().enumerate() {
                if bits[pos] {
                    idx |= 1 << b;
                }
            }
            count[idx] += 1;
        }
    }
    let total = BigInt::from(seeds);
    let mut worst = BigRational::zero();
    let mut worst_projection = Vec::new();
    for (proj, count) in projections.iter().zip(&counts) {
        let cells = count.len() as u64;
        let uniform = BigRational::new(BigInt::one(), BigInt::from(cells));
        let mut sd = BigRational::zero();
        for &c in count {
            let p = BigRational::new(BigInt::from(c), total.clone());
            sd += (p - &uniform).abs();
        }
        sd /= BigRational::from_integer(BigInt::from(2));
        if sd > worst {
            worst = sd;
            worst_projection = proj.clone();
        }
    }
    Ok(KwiseReport {
        worst_distance: worst,
        worst_projection,
    })
}

/// Build a restriction from a selection string and a value string: variable
/// `i` stays live iff its `q`-bit block of `y` is all ones, otherwise it is
/// fixed to `z[i]`.
pub fn sample_restriction(
    n: usize,
    q: usize,
    y: &[bool],
    z: &[i8],
) -> Result<Restriction, SourceError> {
    if y.len() != n * q {
        return Err(SourceError::SelectionLength {
            expected: n * q,
            got: y.len(),
        });
    }
    if z.len() != n {
        return Err(SourceError::ValueLength {
            expected: n,
            got: z.len(),
        });
    }
    let mut cells = Vec::with_capacity(n);
    for i in 0..n {
        let live = y[i * q..(i + 1) * q].iter().all(|&b| b);
        cells.push(if live { 0 } else { z[i] });
    }
    Ok(Restriction::from_cells(cells)?)
}

/// Map a source output to signs under the crate convention (`1 -> -1`).
pub fn signs_from_bits(bits: &[bool]) -> Vec<i8> {
    bits.iter().map(|&b| sign_from_bit(b)).collect()
}

/// Exact distribution of `<w, z>` when `z` is drawn from the source
/// (output bits mapped to signs): sum value -> number of seeds.
pub fn sum_histogram(
    source: &dyn SeededSource,
    weights: &[BigInt],
    budget: u64,
) -> Result<BTreeMap<BigInt, u64>, SourceError> {
    let seeds = source.seed_count(budget)?;
    let mut hist = BTreeMap::new();
    for seed in 0..seeds {
        let z = signs_from_bits(&source.emit(seed));
        let mut sum = BigInt::zero();
        for (w, &s) in weights.iter().zip(&z) {
            if s == 1 {
                sum += w;
            } else {
                sum -= w;
            }
        }
        *hist.entry(sum).or_insert(0) += 1;
    }
    Ok(hist)
}

/// Exact distribution of `<w, x>` under the uniform distribution on
/// `{-1,+1}^n`, computed by dynamic programming over coordinates; the
/// counts are scaled so they sum to `2^n`.
pub fn sum_histogram_uniform(weights: &[BigInt]) -> BTreeMap<BigInt, BigUint> {
    let mut hist: BTreeMap<BigInt, BigUint> = BTreeMap::new();
    hist.insert(BigInt::zero(), BigUint::one());
    for w in weights {
        let mut next: BTreeMap<BigInt, BigUint> = BTreeMap::new();
        for (sum, count) in &hist {
            *next.entry(sum + w).or_insert_with(BigUint::zero) += count;
            *next.entry(sum - w).or_insert_with(BigUint::zero) += count;
        }
        hist = next;
    }
    hist
}

/// `|Pr_source[f(z) = -1] - Pr_uniform[f(x) = -1]|` for a threshold
/// function, both probabilities exact. The uniform side is computed from the
/// sum distribution, so only the seed space is enumerated.
pub fn ltf_fooling_gap(
    source: &dyn SeededSource,
    ltf: &Ltf,
    budget: u64,
) -> Result<BigRational, SourceError> {
    let n = source.output_len();
    if ltf.arity() != n {
        return Err(SourceError::ValueLength {
            expected: n,
            got: ltf.arity(),
        });
    }
    let seeds = source.seed_count(budget)?;
    let mut accepted = 0u64;
    for seed in 0..seeds {
        let z = signs_from_bits(&source.emit(seed));
        if ltf.eval(&z) == -1 {
            accepted += 1;
        }
    }
    let p_src = BigRational::new(BigInt::from(accepted), BigInt::from(seeds));
    // f(x) = -1 iff <w,x> < theta
    let mut below = BigUint::zero();
    for (sum, count) in sum_histogram_uniform(&ltf.weights) {
        if BigRational::from_integer(sum) < ltf.theta {
            below += count;
        }
    }
    let p_uni = BigRational::new(
        BigInt::from(below),
        BigInt::from(BigUint::one() << n),
    );
    Ok((p_src - p_uni).abs())
}

/// `|Pr_source[<w,z> in [lo, hi]] - Pr_uniform[<w,x> in [lo, hi]]|`, exact.
pub fn concentration_gap(
    source: &dyn SeededSource,
    weights: &[BigInt],
    lo: &BigInt,
    hi: &BigInt,
    budget: u64,
) -> Result<BigRational, SourceError> {
    let n = source.output_len();
    if weights.len() != n {
        return Err(SourceError::ValueLength {
            expected: n,
            got: weights.len(),
        });
    }
    let hist = sum_histogram(source, weights, budget)?;
    let seeds = source.seed_count(budget)?;
    let in_src: u64 = hist
        .iter()
        .filter(|(s, _)| *s >= lo && *s <= hi)
        .map(|(_, c)| *c)
        .sum();
    let p_src = BigRational::new(BigInt::from(in_src), BigInt::from(seeds));
    let mut in_uni = BigUint::zero();
    for (sum, count) in sum_histogram_uniform(weights) {
        if sum >= *lo && sum <= *hi {
            in_uni += count;
        }
    }
    let p_uni = BigRational::new(BigInt::from(in_uni), BigInt::from(BigUint::one() << n));
    Ok((p_src - p_uni).abs())
}

/// Moment tail bound for averages of delta-almost t-wise independent
/// indicator bits with mean about `mu`: for even `t`,
/// `Pr[|avg - mu| >= zeta] < 8 * ((t*mu*n + t^2) / (zeta^2 n^2))^(t/2) + (2n)^t * delta`.
pub fn kwise_tail_bound(
    n: usize,
    t: usize,
    mu: &BigRational,
    zeta: &BigRational,
    delta: &BigRational,
) -> BigRational {
    assert!(t >= 2 && t.is_multiple_of(2), "bound is stated for even t >= 2");
    let nn = BigRational::from_integer(BigInt::from(n));
    let tt = BigRational::from_integer(BigInt::from(t));
    let core = (&tt * mu * &nn + &tt * &tt) / (ratio_pow(zeta, 2) * &nn * &nn);
    let mut main = BigRational::from_integer(BigInt::from(8));
    main *= ratio_pow(&core, (t / 2) as u32);
    let slack = ratio_pow(
        &BigRational::from_integer(BigInt::from(2 * n as u64)),
        t as u32,
    ) * delta;
    main + slack
}

/// Deterministic stream of derived values from a single master seed; every
/// Monte-Carlo harness in the crate draws from this, in documented order.
pub fn seed_stream(master: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(master)
}
