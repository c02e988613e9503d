//! Pseudorandom restriction pipeline for layered threshold circuits.
//!
//! The central operation is a four-stage *layer reduction* that turns a
//! depth-`d` decision circuit into a depth-`d-1` circuit agreeing with the
//! original on most of a pseudorandomly chosen subcube:
//!
//! 1. fix every variable feeding more than `fanout_cap` bottom gates, then
//!    pad (ascending) so exactly `ceil(n/2)` variables stay live;
//! 2. apply a pseudorandom restriction that keeps each variable alive with
//!    probability `p = 2^-q` (live iff its `q`-bit block of an almost
//!    `O(q)`-wise independent selection string is all ones), check that at
//!    least `live_floor` variables survived and that every large-fan-in
//!    gate shrank by the factor `2^(q-1)`, pad down to exactly
//!    `live_floor`, and earmark each surviving large gate that is far from
//!    balance for replacement by its majority output value;
//! 3. fix the remaining support of every balanced large gate;
//! 4. pick a greedy independent set of the live variables so that every
//!    small-fan-in gate reads at most one of them, fix the rest, and splice
//!    the bottom layer away: each bottom gate is now a constant or a
//!    literal and folds into the weights and thresholds of the layer above.
//!
//! Iterating the reduction `d-1` times ([`restrict_full`]) leaves a single
//! threshold function. All cutoffs are exact integer comparisons derived
//! from the accuracy parameter `eps = a/b` (never floating point), every
//! random choice is drawn from seed-enumerable sources, and per-seed
//! failures are reported with the exact stage and condition that broke.
//! How close the reduced circuit is to the original on the subcube is the
//! caller's business: pair these operations with
//! [`crate::circuit::closeness`] at desk scales.
//!
//! Monte-Carlo harnesses for the two statistics driving the analysis (the
//! balance of a single restricted threshold function, and the preservation
//! of a strong bias under restriction) live here too.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

use crate::analysis::{imbalanced_majority_value, is_t_balanced, AnalysisError};
use crate::circuit::{closeness_fn, CircuitError, Ltf, Restriction, ThresholdCircuit};
use crate::exact::{
    ceil_mul_pow, ceil_mul_pow_shifted, ceil_pow, floor_mul_pow, floor_pow, pow2_less_than_pow,
    pow_less_than_pow2, ratio,
};
use crate::format::rational_to_text;
use crate::sources::{
    sample_restriction, seed_stream, signs_from_bits, AlmostKwiseSource, SeededSource,
    SourceError, UniformSource,
};

/// Largest supported live-probability exponent (`p = 2^-q`).
pub const MAX_Q: u32 = 48;

#[derive(Debug, thiserror::Error)]
pub enum RestrictionError {
    #[error("circuit: {0}")]
    Circuit(#[from] CircuitError),
    #[error("source: {0}")]
    Source(#[from] SourceError),
    #[error("analysis: {0}")]
    Analysis(#[from] AnalysisError),
    #[error("variable count {n} outside the supported range 2..=63")]
    VariableCount { n: usize },
    #[error("eps = {eps} unusable: need 0 < eps < 1 with numerator and denominator at most 10000")]
    EpsRange { eps: String },
    #[error("closeness exponent {closeness} must be positive")]
    ClosenessRange { closeness: String },
    #[error("q = {q} outside the supported range 1..={max}", max = MAX_Q)]
    QRange { q: u32 },
    #[error("no integer q satisfies n^(10 eps) < 2^q < n^(12 eps) for n = {n}, eps = {eps}")]
    BetaWindow { n: usize, eps: String },
    #[error("parameters built for {expected} variables applied to a circuit on {got}")]
    ParamsMismatch { expected: usize, got: usize },
    #[error("need depth >= 2 to reduce a layer, got {depth}")]
    DepthPrecondition { depth: usize },
    #[error("circuit has {wires} wires, above the n^(1+eps) cap {cap}")]
    WirePrecondition { wires: usize, cap: usize },
    #[error("stage {stage} failed: {condition}")]
    StageFailed { stage: u8, condition: StageCondition },
    #[error("iterated reduction needs d * 30^(d-1) * eps < 1, got {delta}")]
    DeltaRange { delta: String },
    #[error("final live count {live} below the requirement {needed}")]
    FinalLive { live: usize, needed: usize },
    #[error("variable {var} is not in the live set")]
    UnknownVariable { var: usize },
    #[error("the degree cap kprime must be at least 1")]
    KprimeRange,
    #[error("variable {var} conflicts with {degree} others, above the cap {cap}")]
    DegreeBound { var: usize, degree: usize, cap: usize },
    #[error("independent set has {got} variables, below the guaranteed floor {needed}")]
    IndependentSetSize { got: usize, needed: usize },
    #[error("reduced circuit has {wires} wires on {live} variables, above the (live)^(1+30 eps) bound")]
    WireAccounting { wires: usize, live: usize },
    #[error("{what} emits {got} bits, expected {expected}")]
    SourceLength {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("{what} = {value} must be 1/2^q for an integer q in 1..=63")]
    NotPowerOfTwo { what: &'static str, value: String },
    #[error("{what} = {value} outside [0, 1)")]
    UnitRange { what: &'static str, value: String },
    #[error("the balance parameter t must be nonnegative, got {t}")]
    NegativeT { t: String },
    #[error("need at least one trial")]
    NoTrials,
    #[error("{got} trials exceed the {available} enumerable seeds")]
    TrialsExceedSeeds { got: u64, available: u64 },
    #[error("sigma must be +1 or -1, got {got}")]
    BadSigma { got: i8 },
    #[error(
        "function on {n} variables agrees with {sigma} on a {closeness} fraction of points, \
         not within delta = {delta} of all of them"
    )]
    BiasPrecondition {
        n: usize,
        closeness: String,
        sigma: i8,
        delta: String,
    },
}

/// What a failed stage of the layer reduction observed. Stage failures are
/// ordinary per-seed events for a pseudorandom pipeline, not bugs; sweeps
/// tally them by stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageCondition {
    /// Fewer variables stayed live than the stage's floor demands.
    LiveBelowFloor { live: usize, floor: usize },
    /// A large gate kept too many wires: `restricted * 2^(q-1) > original`.
    FaninNotReduced {
        gate: usize,
        restricted: usize,
        original: usize,
    },
    /// The wires feeding surviving balanced large gates exceed the cap.
    BalancedWiresExceeded { wires: usize, cap: usize },
}

impl fmt::Display for StageCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StageCondition::LiveBelowFloor { live, floor } => {
                write!(f, "kept {live} live variables, below the floor {floor}")
            }
            StageCondition::FaninNotReduced {
                gate,
                restricted,
                original,
            } => write!(
                f,
                "gate {gate} kept {restricted} of {original} wires, above the 2^(1-q) shrink factor"
            ),
            StageCondition::BalancedWiresExceeded { wires, cap } => {
                write!(f, "{wires} wires feed balanced large gates, above the cap {cap}")
            }
        }
    }
}

/// All cutoffs of one layer reduction, derived exactly from `(n, eps)` with
/// `eps = a/b` held as a rational. Every field is public and may be
/// overridden after construction; the derived defaults are:
///
/// * `fanout_cap = floor(2 n^eps)` — stage 1 fixes variables with more
///   bottom-layer wires than this;
/// * `small_fanin_cap = floor(n^(12 eps))` — bottom gates at or below this
///   fan-in count as *small*, the rest as *large*; the classification is
///   made once, on the input circuit;
/// * `q` — live-probability exponent (`p = 2^-q`), chosen so that `2^q`
///   lies strictly between `n^(10 eps)` and `n^(12 eps)` and is nearest to
///   `n^(11 eps)` multiplicatively (ties to the smaller `q`), or supplied
///   explicitly via [`LayerReductionParams::with_q`];
/// * `t = 2^ceil(q/5)` — the balance cutoff for stage 2's classification;
/// * `live_floor = ceil(ceil(n/2) / 2^(q+1))` — stage 2 fails below this
///   many live variables and pads down to exactly this many above it;
/// * `balanced_wire_cap = ceil(4 ceil(log2 n)^2 n^(1+eps) / 2^(q+floor(q/10)))`
///   — stage 2 fails when more wires than this feed balanced large gates;
/// * `kprime = ceil(2 n^(13 eps))` — conflict-degree cap certifying the
///   stage-4 independent set size `ceil(live / kprime)`;
/// * `wire_cap = floor(n^(1+eps))` — precondition on the input circuit;
/// * `y_order`, `y_delta` — the selection string is drawn from an almost
///   `y_order`-wise independent source with error `y_delta` (defaults
///   `4q` and `1/n^2`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerReductionParams {
    pub n: usize,
    pub eps: BigRational,
    /// Target closeness exponent carried for reporting: callers compare the
    /// reduced circuit against `1 - n^(-closeness)` with their own oracle.
    pub closeness: BigRational,
    pub q: u32,
    /// Whether `q` lies in the strict window `n^(10 eps) < 2^q < n^(12 eps)`.
    pub beta_window_ok: bool,
    pub t: u64,
    pub fanout_cap: usize,
    pub small_fanin_cap: usize,
    pub kprime: usize,
    pub wire_cap: usize,
    pub live_floor: usize,
    pub balanced_wire_cap: usize,
    pub y_order: usize,
    pub y_delta: BigRational,
}

impl LayerReductionParams {
    /// Derive all cutoffs from `(n, eps, closeness)`, selecting `q` from the
    /// strict window; errors with [`RestrictionError::BetaWindow`] when the
    /// window contains no integer (which happens at every small `n` unless
    /// `eps` is large).
    pub fn new(
        n: usize,
        eps: BigRational,
        closeness: BigRational,
    ) -> Result<Self, RestrictionError> {
        let (a, b) = eps_parts(&eps)?;
        let q = choose_q(n, a, b, &eps)?;
        Self::build(n, eps, closeness, q, true, a, b)
    }

    /// Derive the cutoffs with an explicit `q`, recording in
    /// `beta_window_ok` whether it lies in the strict window. This keeps
    /// desk-scale instances runnable where the window is empty.
    pub fn with_q(
        n: usize,
        eps: BigRational,
        closeness: BigRational,
        q: u32,
    ) -> Result<Self, RestrictionError> {
        let (a, b) = eps_parts(&eps)?;
        let ok = (1..=MAX_Q).contains(&q)
            && pow_less_than_pow2(n as u64, 10 * a, b, q)
            && pow2_less_than_pow(q, n as u64, 12 * a, b);
        Self::build(n, eps, closeness, q, ok, a, b)
    }

    fn build(
        n: usize,
        eps: BigRational,
        closeness: BigRational,
        q: u32,
        beta_window_ok: bool,
        a: u32,
        b: u32,
    ) -> Result<Self, RestrictionError> {
        if !(2..=63).contains(&n) {
            return Err(RestrictionError::VariableCount { n });
        }
        if !closeness.is_positive() {
            return Err(RestrictionError::ClosenessRange {
                closeness: rational_to_text(&closeness),
            });
        }
        if !(1..=MAX_Q).contains(&q) {
            return Err(RestrictionError::QRange { q });
        }
        let nn = n as u64;
        let n1 = n.div_ceil(2);
        let log2n = u64::from(nn.next_power_of_two().trailing_zeros());
        Ok(LayerReductionParams {
            n,
            q,
            beta_window_ok,
            t: 1u64 << q.div_ceil(5),
            fanout_cap: floor_mul_pow(2, nn, a, b) as usize,
            small_fanin_cap: floor_pow(nn, 12 * a, b) as usize,
            kprime: ceil_mul_pow(2, nn, 13 * a, b) as usize,
            wire_cap: floor_pow(nn, a + b, b) as usize,
            live_floor: n1.div_ceil(1usize << (q + 1)),
            balanced_wire_cap: ceil_mul_pow_shifted(4 * log2n * log2n, nn, a + b, b, q + q / 10)
                as usize,
            y_order: 4 * q as usize,
            y_delta: ratio(1, (n * n) as i64),
            eps,
            closeness,
        })
    }

    /// Stage 1's exact live target, `ceil(n/2)`.
    pub fn n1(&self) -> usize {
        self.n.div_ceil(2)
    }
}

/// `eps` as an exact fraction `a/b` of machine integers.
fn eps_parts(eps: &BigRational) -> Result<(u32, u32), RestrictionError> {
    let bad = || RestrictionError::EpsRange {
        eps: rational_to_text(eps),
    };
    if !eps.is_positive() || *eps >= BigRational::one() {
        return Err(bad());
    }
    let a = eps.numer().to_u32().filter(|&a| a <= 10_000).ok_or_else(bad)?;
    let b = eps.denom().to_u32().filter(|&b| b <= 10_000).ok_or_else(bad)?;
    Ok((a, b))
}

/// The integer `q` (if any) with `n^(10 eps) < 2^q < n^(12 eps)`, both
/// strict, whose `2^q` is multiplicatively nearest to `n^(11 eps)`; ties
/// resolve to the smaller `q`. All comparisons are exact: `2^(q b)` against
/// `n^(10 a)` and friends.
fn choose_q(n: usize, a: u32, b: u32, eps: &BigRational) -> Result<u32, RestrictionError> {
    let nn = n as u64;
    let candidates: Vec<u32> = (1..=MAX_Q)
        .filter(|&q| {
            pow_less_than_pow2(nn, 10 * a, b, q) && pow2_less_than_pow(q, nn, 12 * a, b)
        })
        .collect();
    let (Some(&lo), Some(&hi)) = (candidates.first(), candidates.last()) else {
        return Err(RestrictionError::BetaWindow {
            n,
            eps: rational_to_text(eps),
        });
    };
    // The candidates form a contiguous range. Find the first at or above the
    // target n^(11 eps); it beats the candidate just below iff
    // 2^((2q-1) b) < n^(22 a), exactly.
    let above = candidates
        .iter()
        .copied()
        .find(|&q| !pow2_less_than_pow(q, nn, 11 * a, b));
    Ok(match above {
        None => hi,
        Some(q) if q == lo => q,
        Some(q) => {
            let twice = (BigUint::one() << ((2 * q - 1) as usize * b as usize))
                < BigUint::from(nn).pow(22 * a);
            if twice {
                q
            } else {
                q - 1
            }
        }
    })
}

/// Seeds for one layer reduction: one selection-string seed (stage 2's `y`)
/// and one value seed per stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSeeds {
    pub y: u64,
    pub z: [u64; 4],
}

/// Expand a master seed into per-stage seeds through the deterministic
/// stream: the selection seed first, then the four value seeds in stage
/// order. This fixed derivation is what makes a whole reduction replayable
/// (and its seed space enumerable) from a single number.
pub fn layer_seeds(master: u64) -> LayerSeeds {
    let mut rng = seed_stream(master);
    LayerSeeds {
        y: rng.gen(),
        z: [rng.gen(), rng.gen(), rng.gen(), rng.gen()],
    }
}

/// What one stage did: how many variables it fixed in total, how many of
/// those were padding to hit an exact live target, and what survived.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: u8,
    pub fixed: usize,
    pub padded: usize,
    pub live_after: usize,
    pub wires_after: usize,
}

/// A large gate replaced by its majority output value because the
/// restriction left it far from balance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstifiedGate {
    pub gate: usize,
    pub value: i8,
}

/// Full account of one successful layer reduction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionTrace {
    pub n: usize,
    pub eps: String,
    pub q: u32,
    pub t: u64,
    pub beta_window_ok: bool,
    pub depth_in: usize,
    pub depth_out: usize,
    pub stages: Vec<StageRecord>,
    /// Large gates replaced by a constant, with the constant.
    pub constified: Vec<ConstifiedGate>,
    /// Bottom gates spliced into the layer above (the whole bottom layer).
    pub spliced_gates: usize,
    pub live_final: usize,
    pub wires_final: usize,
}

/// Account of an iterated reduction: one [`ReductionTrace`] per round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FullTrace {
    pub n: usize,
    pub depth: usize,
    pub eps: String,
    /// The total accuracy loss exponent `d * 30^(d-1) * eps`.
    pub delta: String,
    pub live_requirement: usize,
    pub rounds: Vec<ReductionTrace>,
    pub live_final: usize,
}

/// Serialize a layer-reduction trace as pretty JSON with a trailing newline.
pub fn trace_to_text(trace: &ReductionTrace) -> String {
    let mut text = serde_json::to_string_pretty(trace).expect("trace serialization");
    text.push('\n');
    text
}

pub fn trace_from_text(text: &str) -> Result<ReductionTrace, serde_json::Error> {
    serde_json::from_str(text)
}

pub fn full_trace_to_text(trace: &FullTrace) -> String {
    let mut text = serde_json::to_string_pretty(trace).expect("trace serialization");
    text.push('\n');
    text
}

pub fn full_trace_from_text(text: &str) -> Result<FullTrace, serde_json::Error> {
    serde_json::from_str(text)
}

/// Indices of variables a threshold function actually reads.
fn support(gate: &Ltf) -> Vec<usize> {
    gate.weights
        .iter()
        .enumerate()
        .filter(|(_, w)| !w.is_zero())
        .map(|(v, _)| v)
        .collect()
}

/// For each variable, the number of bottom-layer gates reading it.
fn bottom_fanouts(c: &ThresholdCircuit) -> Vec<usize> {
    let mut fanouts = vec![0usize; c.n];
    for gate in &c.layers[0] {
        for v in support(gate) {
            fanouts[v] += 1;
        }
    }
    fanouts
}

/// Fix live cells in ascending variable order until exactly `target` stay
/// live, taking each fixed value from `values`. Returns how many cells this
/// padded. Callers guarantee at least `target` cells are live on entry.
fn pad_to_exact(cells: &mut [i8], target: usize, values: &[i8]) -> usize {
    let mut live = cells.iter().filter(|&&cell| cell == 0).count();
    let mut padded = 0;
    for (v, cell) in cells.iter_mut().enumerate() {
        if live <= target {
            break;
        }
        if *cell == 0 {
            *cell = values[v];
            live -= 1;
            padded += 1;
        }
    }
    padded
}

/// Stage 1 as a standalone operation: fix every variable whose bottom-layer
/// fan-out exceeds `fanout_cap`, taking values from one sample of
/// `z_source` (which must emit `c.n` bits). No padding is applied here;
/// [`reduce_layer`] pads to its exact stage-1 target itself.
pub fn fix_high_fanout(
    c: &ThresholdCircuit,
    fanout_cap: usize,
    z_source: &dyn SeededSource,
    seed: u64,
) -> Result<(Restriction, ThresholdCircuit, StageRecord), RestrictionError> {
    c.validate()?;
    if z_source.output_len() != c.n {
        return Err(RestrictionError::SourceLength {
            what: "value source",
            got: z_source.output_len(),
            expected: c.n,
        });
    }
    let z = signs_from_bits(&z_source.emit(seed));
    let fanouts = bottom_fanouts(c);
    let mut cells = vec![0i8; c.n];
    for v in 0..c.n {
        if fanouts[v] > fanout_cap {
            cells[v] = z[v];
        }
    }
    let rho = Restriction::from_cells(cells)?;
    let fixed = c.n - rho.live_count();
    let restricted = c.restrict(&rho)?;
    let record = StageRecord {
        stage: 1,
        fixed,
        padded: 0,
        live_after: rho.live_count(),
        wires_after: restricted.wire_count(),
    };
    Ok((rho, restricted, record))
}

/// Greedy independent set over the conflict graph in which two live
/// variables are adjacent when some small gate reads both. Variables are
/// visited in ascending order; each pick removes its neighbours. Errors if
/// a gate reads a variable outside `live_vars`, if any conflict degree
/// exceeds `kprime`, or if the greedy set ends below `ceil(m / kprime)`
/// (impossible once degrees are capped, but checked, never assumed).
pub fn greedy_independent_set(
    live_vars: &[usize],
    small_gates: &[Vec<usize>],
    kprime: usize,
) -> Result<Vec<usize>, RestrictionError> {
    if kprime == 0 {
        return Err(RestrictionError::KprimeRange);
    }
    let mut vars = live_vars.to_vec();
    vars.sort_unstable();
    vars.dedup();
    let m = vars.len();
    let index_of = |v: usize| -> Result<usize, RestrictionError> {
        vars.binary_search(&v)
            .map_err(|_| RestrictionError::UnknownVariable { var: v })
    };
    let mut adjacent: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); m];
    for gate in small_gates {
        let members: Vec<usize> = gate
            .iter()
            .map(|&v| index_of(v))
            .collect::<Result<_, _>>()?;
        for (pos, &i) in members.iter().enumerate() {
            for &j in &members[pos + 1..] {
                if i != j {
                    adjacent[i].insert(j);
                    adjacent[j].insert(i);
                }
            }
        }
    }
    for (i, neighbours) in adjacent.iter().enumerate() {
        if neighbours.len() > kprime {
            return Err(RestrictionError::DegreeBound {
                var: vars[i],
                degree: neighbours.len(),
                cap: kprime,
            });
        }
    }
    let mut removed = vec![false; m];
    let mut picked = Vec::new();
    for i in 0..m {
        if removed[i] {
            continue;
        }
        picked.push(vars[i]);
        removed[i] = true;
        for &j in &adjacent[i] {
            removed[j] = true;
        }
    }
    let needed = m.div_ceil(kprime);
    if picked.len() < needed {
        return Err(RestrictionError::IndependentSetSize {
            got: picked.len(),
            needed,
        });
    }
    Ok(picked)
}

/// What a bottom gate of the fully restricted circuit collapses to.
enum BottomFate {
    Constant(i8),
    /// The gate computes `orientation * x_var` exactly.
    Literal { var: usize, orientation: i8 },
}

/// Collapse a bottom gate that reads at most one live variable (or was
/// replaced by a constant) by evaluating it at the one or two relevant
/// points. `sigma` is the replacement value for a constified large gate.
fn bottom_fate(gate: &Ltf, sigma: Option<i8>, live: usize) -> BottomFate {
    if let Some(value) = sigma {
        return BottomFate::Constant(value);
    }
    let sup = support(gate);
    match sup.len() {
        0 => BottomFate::Constant(gate.eval(&vec![1i8; live])),
        1 => {
            let v = sup[0];
            let mut x = vec![1i8; live];
            let at_plus = gate.eval(&x);
            x[v] = -1;
            let at_minus = gate.eval(&x);
            if at_plus == at_minus {
                BottomFate::Constant(at_plus)
            } else {
                // at_plus != at_minus on {-1,+1} forces sgn(x_v * at_plus)
                BottomFate::Literal {
                    var: v,
                    orientation: at_plus,
                }
            }
        }
        _ => unreachable!("a spliced bottom gate reads at most one live variable"),
    }
}

/// Remove the bottom layer of `c`, whose gates must each collapse per
/// `fates`: constants shift the thresholds of the layer above, literals
/// contribute their (signed) weight directly.
fn splice_bottom(
    c: &ThresholdCircuit,
    fates: &[BottomFate],
) -> Result<ThresholdCircuit, CircuitError> {
    let live = c.n;
    let mut new_bottom = Vec::with_capacity(c.layers[1].len());
    for gate in &c.layers[1] {
        let mut weights = vec![BigInt::zero(); live];
        let mut theta = gate.theta.clone();
        for (j, u) in gate.weights.iter().enumerate() {
            match &fates[j] {
                BottomFate::Constant(value) => {
                    theta -= BigRational::from_integer(u * BigInt::from(*value));
                }
                BottomFate::Literal { var, orientation } => {
                    weights[*var] += u * BigInt::from(*orientation);
                }
            }
        }
        new_bottom.push(Ltf::new(weights, theta));
    }
    let mut layers = vec![new_bottom];
    layers.extend_from_slice(&c.layers[2..]);
    ThresholdCircuit::new(live, layers)
}

/// One four-stage layer reduction of a decision circuit of depth >= 2 on
/// `params.n` variables with at most `params.wire_cap` wires. On success,
/// returns the total restriction (over the original variables), the reduced
/// circuit of depth `d - 1` (on the surviving variables, ascending), and a
/// trace of what every stage did.
///
/// Bottom gates are classified small/large once, on the input circuit, by
/// `small_fanin_cap`. Stage conditions are checked in a fixed order (live
/// floor, then per-gate fan-in shrink in gate order, then balanced wires)
/// and the first violation is reported as [`RestrictionError::StageFailed`].
/// All fixed values come from fresh exhaustive-uniform samples, one per
/// stage, derived from `seeds`; the stage-2 selection string comes from an
/// almost `y_order`-wise independent source with error `y_delta`.
pub fn reduce_layer(
    c: &ThresholdCircuit,
    params: &LayerReductionParams,
    seeds: &LayerSeeds,
) -> Result<(Restriction, ThresholdCircuit, ReductionTrace), RestrictionError> {
    c.validate_decision()?;
    if c.n != params.n {
        return Err(RestrictionError::ParamsMismatch {
            expected: params.n,
            got: c.n,
        });
    }
    if c.depth() < 2 {
        return Err(RestrictionError::DepthPrecondition { depth: c.depth() });
    }
    let wires = c.wire_count();
    if wires > params.wire_cap {
        return Err(RestrictionError::WirePrecondition {
            wires,
            cap: params.wire_cap,
        });
    }
    let (a, b) = eps_parts(&params.eps)?;
    let is_small: Vec<bool> = c.layers[0]
        .iter()
        .map(|g| g.fan_in() <= params.small_fanin_cap)
        .collect();

    let n = c.n;
    let n1 = params.n1();
    let q = params.q as usize;

    // Stage 1: fix high-fan-out variables, pad to exactly n1 live.
    let z1 = signs_from_bits(&UniformSource::new(n)?.emit(seeds.z[0]));
    let fanouts = bottom_fanouts(c);
    let mut cells1 = vec![0i8; n];
    for v in 0..n {
        if fanouts[v] > params.fanout_cap {
            cells1[v] = z1[v];
        }
    }
    let live_by_rule = cells1.iter().filter(|&&cell| cell == 0).count();
    if live_by_rule < n1 {
        return Err(RestrictionError::StageFailed {
            stage: 1,
            condition: StageCondition::LiveBelowFloor {
                live: live_by_rule,
                floor: n1,
            },
        });
    }
    let padded1 = pad_to_exact(&mut cells1, n1, &z1);
    let rho1 = Restriction::from_cells(cells1)?;
    let c1 = c.restrict(&rho1)?;
    let stage1 = StageRecord {
        stage: 1,
        fixed: n - n1,
        padded: padded1,
        live_after: n1,
        wires_after: c1.wire_count(),
    };

    // Stage 2: pseudorandom restriction with live probability 2^-q.
    let y_source = AlmostKwiseSource::new(
        n1 * q,
        params.y_order.clamp(1, n1 * q),
        params.y_delta.clone(),
    )?;
    let y = y_source.emit(seeds.y);
    let z2 = signs_from_bits(&UniformSource::new(n1)?.emit(seeds.z[1]));
    let rho2_raw = sample_restriction(n1, q, &y, &z2)?;
    let live_raw = rho2_raw.live_count();
    if live_raw < params.live_floor {
        return Err(RestrictionError::StageFailed {
            stage: 2,
            condition: StageCondition::LiveBelowFloor {
                live: live_raw,
                floor: params.live_floor,
            },
        });
    }
    // Fan-in shrink is judged on the raw restriction, before padding, against
    // the stage-1 circuit: restricted * 2^(q-1) <= original, exactly.
    for (gi, gate) in c1.layers[0].iter().enumerate() {
        if is_small[gi] {
            continue;
        }
        let original = gate.fan_in();
        let restricted = gate.restrict(&rho2_raw)?.fan_in();
        if (restricted as u128) << (q - 1) > original as u128 {
            return Err(RestrictionError::StageFailed {
                stage: 2,
                condition: StageCondition::FaninNotReduced {
                    gate: gi,
                    restricted,
                    original,
                },
            });
        }
    }
    let mut cells2 = rho2_raw.cells().to_vec();
    let padded2 = pad_to_exact(&mut cells2, params.live_floor, &z2);
    let rho2 = Restriction::from_cells(cells2)?;
    let n2 = params.live_floor;
    let c2 = c1.restrict(&rho2)?;
    // Balance is classified on the padded circuit; imbalanced large gates
    // are earmarked for replacement by their majority value at the splice.
    let t_rational = BigRational::from_integer(BigInt::from(params.t));
    let mut balanced_wires = 0usize;
    let mut balanced_large: Vec<usize> = Vec::new();
    let mut constified: Vec<ConstifiedGate> = Vec::new();
    for (gi, gate) in c2.layers[0].iter().enumerate() {
        if is_small[gi] {
            continue;
        }
        if is_t_balanced(gate, &t_rational) {
            balanced_wires += gate.fan_in();
            balanced_large.push(gi);
        } else {
            constified.push(ConstifiedGate {
                gate: gi,
                value: imbalanced_majority_value(gate)?,
            });
        }
    }
    if balanced_wires > params.balanced_wire_cap {
        return Err(RestrictionError::StageFailed {
            stage: 2,
            condition: StageCondition::BalancedWiresExceeded {
                wires: balanced_wires,
                cap: params.balanced_wire_cap,
            },
        });
    }
    let stage2 = StageRecord {
        stage: 2,
        fixed: n1 - n2,
        padded: padded2,
        live_after: n2,
        wires_after: c2.wire_count(),
    };

    // Stage 3: fix the remaining support of every balanced large gate. The
    // gates become constants on the subcube up to their (small) bias, which
    // the caller's closeness oracle accounts for.
    let z3 = signs_from_bits(&UniformSource::new(n2)?.emit(seeds.z[2]));
    let mut cells3 = vec![0i8; n2];
    for &gi in &balanced_large {
        for v in support(&c2.layers[0][gi]) {
            cells3[v] = z3[v];
        }
    }
    let rho3 = Restriction::from_cells(cells3)?;
    let n3 = rho3.live_count();
    if n3 < 1 {
        return Err(RestrictionError::StageFailed {
            stage: 3,
            condition: StageCondition::LiveBelowFloor { live: n3, floor: 1 },
        });
    }
    let c3 = c2.restrict(&rho3)?;
    let stage3 = StageRecord {
        stage: 3,
        fixed: n2 - n3,
        padded: 0,
        live_after: n3,
        wires_after: c3.wire_count(),
    };

    // Stage 4: keep a greedy independent set of the small gates' conflict
    // graph (the whole set — no padding down), fix everything else.
    let small_supports: Vec<Vec<usize>> = c3.layers[0]
        .iter()
        .enumerate()
        .filter(|(gi, _)| is_small[*gi])
        .map(|(_, g)| support(g))
        .collect();
    let live_all: Vec<usize> = (0..n3).collect();
    let picked = greedy_independent_set(&live_all, &small_supports, params.kprime)?;
    let in_set: Vec<bool> = {
        let set: BTreeSet<usize> = picked.iter().copied().collect();
        (0..n3).map(|v| set.contains(&v)).collect()
    };
    let z4 = signs_from_bits(&UniformSource::new(n3)?.emit(seeds.z[3]));
    let mut cells4 = vec![0i8; n3];
    for v in 0..n3 {
        if !in_set[v] {
            cells4[v] = z4[v];
        }
    }
    let rho4 = Restriction::from_cells(cells4)?;
    let n4 = picked.len();
    let c4 = c3.restrict(&rho4)?;
    let stage4 = StageRecord {
        stage: 4,
        fixed: n3 - n4,
        padded: 0,
        live_after: n4,
        wires_after: c4.wire_count(),
    };

    // Splice the bottom layer away and check the exact wire account:
    // wires^b <= n4^(b + 30 a), i.e. wires <= n4^(1 + 30 eps).
    let sigma_of: Vec<Option<i8>> = {
        let mut v = vec![None; c4.layers[0].len()];
        for cg in &constified {
            v[cg.gate] = Some(cg.value);
        }
        v
    };
    let fates: Vec<BottomFate> = c4.layers[0]
        .iter()
        .enumerate()
        .map(|(gi, g)| bottom_fate(g, sigma_of[gi], n4))
        .collect();
    let spliced_gates = c4.layers[0].len();
    let reduced = splice_bottom(&c4, &fates)?;
    let wires_final = reduced.wire_count();
    if BigUint::from(wires_final).pow(b) > BigUint::from(n4).pow(b + 30 * a) {
        return Err(RestrictionError::WireAccounting {
            wires: wires_final,
            live: n4,
        });
    }

    let rho = rho1.compose(&rho2)?.compose(&rho3)?.compose(&rho4)?;
    let trace = ReductionTrace {
        n,
        eps: rational_to_text(&params.eps),
        q: params.q,
        t: params.t,
        beta_window_ok: params.beta_window_ok,
        depth_in: c.depth(),
        depth_out: reduced.depth(),
        stages: vec![stage1, stage2, stage3, stage4],
        constified,
        spliced_gates,
        live_final: n4,
        wires_final,
    };
    Ok((rho, reduced, trace))
}

/// Parameters of an iterated reduction: the round-`i` layer reduction runs
/// with accuracy parameter `30^i * eps` on the current circuit. Optional
/// per-round overrides keep desk-scale instances runnable where the strict
/// `q` window is empty; absent entries mean the strict defaults.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FullReductionPlan {
    pub eps: BigRational,
    pub closeness: BigRational,
    pub q_overrides: Vec<Option<u32>>,
    pub live_floor_overrides: Vec<Option<usize>>,
}

impl FullReductionPlan {
    pub fn new(eps: BigRational, closeness: BigRational) -> Self {
        FullReductionPlan {
            eps,
            closeness,
            q_overrides: Vec::new(),
            live_floor_overrides: Vec::new(),
        }
    }
}

/// Iterate the layer reduction `d - 1` times on a depth-`d` decision
/// circuit, leaving a single threshold function over the surviving
/// variables. Requires `d * 30^(d-1) * eps < 1` (exactly); on success the
/// live count is checked against `n^(1 - d * 30^(d-1) * eps)` rounded up.
/// Per-round seeds derive from `master` through the deterministic stream.
///
/// A depth-1 circuit reduces in zero rounds: the identity restriction and
/// the circuit's only gate.
pub fn restrict_full(
    c: &ThresholdCircuit,
    plan: &FullReductionPlan,
    master: u64,
) -> Result<(Restriction, Ltf, FullTrace), RestrictionError> {
    c.validate_decision()?;
    let n = c.n;
    if !(2..=63).contains(&n) {
        return Err(RestrictionError::VariableCount { n });
    }
    let (a, b) = eps_parts(&plan.eps)?;
    let d = c.depth();
    let scale = BigUint::from(d) * BigUint::from(30u32).pow((d - 1) as u32);
    let delta = BigRational::new(
        BigInt::from(scale.clone()) * plan.eps.numer(),
        plan.eps.denom().clone(),
    );
    if delta >= BigRational::one() {
        return Err(RestrictionError::DeltaRange {
            delta: rational_to_text(&delta),
        });
    }
    // delta < 1 bounds scale * a below b, so the exponent fits a machine word
    let shrink = (scale * a).to_u32().expect("bounded by the delta check");
    let live_requirement = ceil_pow(n as u64, b - shrink, b) as usize;

    let mut rng = seed_stream(master);
    let mut rho = Restriction::identity(n);
    let mut current = c.clone();
    let mut rounds = Vec::new();
    for round in 0..d - 1 {
        let eps_i = &plan.eps * BigRational::from_integer(BigInt::from(30u32).pow(round as u32));
        let q_override = plan.q_overrides.get(round).copied().flatten();
        let mut params = match q_override {
            Some(q) => {
                LayerReductionParams::with_q(current.n, eps_i, plan.closeness.clone(), q)?
            }
            None => LayerReductionParams::new(current.n, eps_i, plan.closeness.clone())?,
        };
        if let Some(floor) = plan.live_floor_overrides.get(round).copied().flatten() {
            params.live_floor = floor;
        }
        let seeds = layer_seeds(rng.gen());
        let (rho_i, next, trace) = reduce_layer(&current, &params, &seeds)?;
        rho = rho.compose(&rho_i)?;
        current = next;
        rounds.push(trace);
    }
    let live_final = rho.live_count();
    if live_final < live_requirement {
        return Err(RestrictionError::FinalLive {
            live: live_final,
            needed: live_requirement,
        });
    }
    let phi = current.layers[0][0].clone();
    let trace = FullTrace {
        n,
        depth: d,
        eps: rational_to_text(&plan.eps),
        delta: rational_to_text(&delta),
        live_requirement,
        rounds,
        live_final,
    };
    Ok((rho, phi, trace))
}

/// Outcome tally of running [`restrict_full`] across a range of master
/// seeds. Per-seed stage failures are expected behaviour, so they are
/// counted rather than propagated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepReport {
    pub runs: u64,
    pub successes: u64,
    /// Stage-indexed failure counts (entry `s-1` is stage `s`).
    pub stage_failures: [u64; 4],
    /// Successful pipelines whose final live count missed the requirement.
    pub live_shortfalls: u64,
    /// Parameter or precondition errors; nonzero means the sweep itself is
    /// ill-posed, since these repeat identically for every seed.
    pub other_failures: u64,
}

pub fn sweep_restriction_seeds(
    c: &ThresholdCircuit,
    plan: &FullReductionPlan,
    masters: std::ops::Range<u64>,
) -> SweepReport {
    let mut report = SweepReport {
        runs: 0,
        successes: 0,
        stage_failures: [0; 4],
        live_shortfalls: 0,
        other_failures: 0,
    };
    for master in masters {
        report.runs += 1;
        match restrict_full(c, plan, master) {
            Ok(_) => report.successes += 1,
            Err(RestrictionError::StageFailed { stage, .. }) => {
                report.stage_failures[(stage as usize).clamp(1, 4) - 1] += 1;
            }
            Err(RestrictionError::FinalLive { .. }) => report.live_shortfalls += 1,
            Err(_) => report.other_failures += 1,
        }
    }
    report
}

/// `q` with `p = 1/2^q`, when `p` has that form with `q` in `1..=63`.
pub fn pow2_log_inverse(p: &BigRational) -> Option<u32> {
    if !p.numer().is_one() {
        return None;
    }
    let denom = p.denom().magnitude();
    if denom.count_ones() != 1 {
        return None;
    }
    let q = denom.trailing_zeros()?;
    if (1..=63).contains(&q) {
        Some(q as u32)
    } else {
        None
    }
}

/// Monte-Carlo estimate of the probability that a single threshold function
/// stays `t`-balanced under a pseudorandom restriction with live
/// probability `p = 2^-q`: variable `i` stays live iff its `q`-bit block of
/// the selection string is all ones, otherwise it is fixed to the value
/// string's sign. Fresh seeds for both sources are drawn per trial from the
/// deterministic stream of `master`; the estimate is the exact rational
/// `balanced / trials`.
pub fn harness_single_ltf_lemma(
    phi: &Ltf,
    p: &BigRational,
    t: &BigRational,
    y_source: &dyn SeededSource,
    z_source: &dyn SeededSource,
    trials: u64,
    master: u64,
) -> Result<BigRational, RestrictionError> {
    if trials == 0 {
        return Err(RestrictionError::NoTrials);
    }
    if t.is_negative() {
        return Err(RestrictionError::NegativeT {
            t: rational_to_text(t),
        });
    }
    let n = phi.arity();
    let q = pow2_log_inverse(p).ok_or_else(|| RestrictionError::NotPowerOfTwo {
        what: "live probability",
        value: rational_to_text(p),
    })? as usize;
    if y_source.output_len() != n * q {
        return Err(RestrictionError::SourceLength {
            what: "selection source",
            got: y_source.output_len(),
            expected: n * q,
        });
    }
    if z_source.output_len() != n {
        return Err(RestrictionError::SourceLength {
            what: "value source",
            got: z_source.output_len(),
            expected: n,
        });
    }
    let mut rng = seed_stream(master);
    let mut balanced = 0u64;
    for _ in 0..trials {
        let y = y_source.emit(rng.gen());
        let z = signs_from_bits(&z_source.emit(rng.gen()));
        let rho = sample_restriction(n, q, &y, &z)?;
        if is_t_balanced(&phi.restrict(&rho)?, t) {
            balanced += 1;
        }
    }
    Ok(BigRational::new(balanced.into(), trials.into()))
}

/// Census of bias preservation: given a function `delta`-close to the
/// constant `sigma` (verified exhaustively before anything runs), fix the
/// variables outside `live` to the signs of `z_source` under seeds
/// `0..trials` in order, and return the exact fraction of seeds for which
/// the restricted function is `delta_prime`-close to `sigma` on the live
/// subcube. Running with `trials` equal to the source's seed count makes
/// the estimate an exact average over the whole seed space.
#[allow(clippy::too_many_arguments)]
pub fn harness_bias_preservation(
    phi: &Ltf,
    sigma: i8,
    delta: &BigRational,
    delta_prime: &BigRational,
    live: &[usize],
    z_source: &dyn SeededSource,
    trials: u64,
    budget: u64,
) -> Result<BigRational, RestrictionError> {
    if trials == 0 {
        return Err(RestrictionError::NoTrials);
    }
    if sigma != 1 && sigma != -1 {
        return Err(RestrictionError::BadSigma { got: sigma });
    }
    for (what, value) in [("delta", delta), ("delta_prime", delta_prime)] {
        if value.is_negative() || *value >= BigRational::one() {
            return Err(RestrictionError::UnitRange {
                what,
                value: rational_to_text(value),
            });
        }
    }
    let n = phi.arity();
    let live_set: BTreeSet<usize> = live.iter().copied().collect();
    if let Some(&var) = live_set.iter().find(|&&v| v >= n) {
        return Err(RestrictionError::UnknownVariable { var });
    }
    let fixed_vars: Vec<usize> = (0..n).filter(|v| !live_set.contains(v)).collect();
    if z_source.output_len() != fixed_vars.len() {
        return Err(RestrictionError::SourceLength {
            what: "value source",
            got: z_source.output_len(),
            expected: fixed_vars.len(),
        });
    }
    let available = z_source.seed_count(budget)?;
    if trials > available {
        return Err(RestrictionError::TrialsExceedSeeds {
            got: trials,
            available,
        });
    }
    let hypothesis = closeness_fn(n, budget, |x| phi.eval(x), |_| sigma)?;
    if BigRational::one() - &hypothesis > *delta {
        return Err(RestrictionError::BiasPrecondition {
            n,
            closeness: rational_to_text(&hypothesis),
            sigma,
            delta: rational_to_text(delta),
        });
    }
    let mut survivors = 0u64;
    for seed in 0..trials {
        let z = signs_from_bits(&z_source.emit(seed));
        let mut cells = vec![0i8; n];
        for (j, &v) in fixed_vars.iter().enumerate() {
            cells[v] = z[j];
        }
        let restricted = phi.restrict(&Restriction::from_cells(cells)?)?;
        let agreement = closeness_fn(live_set.len(), budget, |x| restricted.eval(x), |_| sigma)?;
        if BigRational::one() - agreement <= *delta_prime {
            survivors += 1;
        }
    }
    Ok(BigRational::new(survivors.into(), trials.into()))
}
