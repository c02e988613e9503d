//! Top-level decision procedures built on the restriction pipelines.
//!
//! Two deciders answer the promise question "does this circuit accept all
//! but a bounded number of inputs, or reject all but that many?":
//!
//! * [`quantified_derandomize`] handles layered threshold circuits of any
//!   supported depth. It enumerates the seeds of an iterated-restriction
//!   pipeline ([`FullPipeline`]); every seed whose reduction keeps enough
//!   live variables contributes an estimate of the acceptance probability
//!   of the reduced single gate, computed by averaging over all seeds of a
//!   caller-supplied source (error budget `1/5`). The circuit is accepted
//!   iff a strict majority of the counted seeds estimate at least `3/5`;
//!   ties reject.
//! * [`derandomize_depth2`] handles depth-2 circuits through the dedicated
//!   generator [`Depth2Prg`]: a selection-and-fill construction that fixes
//!   most variables to pseudorandom values and feeds the few live ones from
//!   a gate-fooling source. The circuit is accepted iff it accepts a strict
//!   majority of the generator's outputs.
//!
//! The module also houses [`harness_kw_restriction`], a Monte-Carlo check
//! that restrictions drawn from pair-bounded selection families almost
//! always collapse a single gate to a function of at most one variable, and
//! the exact collapse criteria [`ltf_constant_value`] and
//! [`ltf_depends_on_at_most_one`] it relies on.

use crate::circuit::{
    check_enumeration, CircuitError, Ltf, Restriction, ThresholdCircuit,
};
use crate::exact::sign_from_bit;
use crate::format::rational_to_text;
use crate::restriction::{
    pow2_log_inverse, restrict_full, FullReductionPlan, FullTrace, RestrictionError,
};
use crate::sources::{seed_stream, signs_from_bits, SeededSource, SourceError};
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from the decision procedures and their harnesses.
#[derive(Debug, Error)]
pub enum DerandError {
    #[error("circuit error: {0}")]
    Circuit(#[from] CircuitError),
    #[error("source error: {0}")]
    Source(#[from] SourceError),
    #[error("restriction error: {0}")]
    Restriction(#[from] RestrictionError),
    #[error("circuit depth {depth} exceeds the supported depth {max}")]
    DepthRange { depth: usize, max: usize },
    #[error("combined seed space of {bits} bits cannot be addressed with 64-bit seeds")]
    SeedSpaceTooWide { bits: u32 },
    #[error("enumerating {needed} states exceeds budget {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },
    #[error("none of {seeds} restriction seeds kept enough live variables")]
    NoSuccessfulSeed { seeds: u64 },
    #[error(
        "no delta in (eps/2, 2*eps/3) makes n^-(1-delta) a power of two \
         for n = {n}, eps = {eps}"
    )]
    NoAdmissibleDelta { n: usize, eps: String },
    #[error("eps must satisfy 0 < eps < 3/2, got {eps}")]
    EpsRange { eps: String },
    #[error("{what} source emits {got} bits; need exactly {expected}")]
    SourceLength {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("live probability {p} is not of the form 1/2^q")]
    LiveProbability { p: String },
    #[error("trial count must be positive")]
    NoTrials,
}

/// The verdict of a promise decider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

// ---------------------------------------------------------------------------
// quantified derandomization for general depth
// ---------------------------------------------------------------------------

/// An enumerable wrapper around the iterated restriction pipeline: seeds
/// `0..2^seed_bits` index independent pipeline runs.
#[derive(Debug, Clone)]
pub struct FullPipeline {
    pub plan: FullReductionPlan,
    pub seed_bits: u32,
}

impl FullPipeline {
    pub fn new(plan: FullReductionPlan, seed_bits: u32) -> Result<Self, DerandError> {
        if seed_bits == 0 || seed_bits > 63 {
            return Err(DerandError::SeedSpaceTooWide { bits: seed_bits });
        }
        Ok(FullPipeline { plan, seed_bits })
    }

    /// Number of pipeline seeds, checked against the budget.
    pub fn seed_count(&self, budget: u64) -> Result<u64, DerandError> {
        let needed = 1u128 << self.seed_bits;
        if needed > budget as u128 {
            return Err(DerandError::BudgetExceeded {
                needed,
                budget,
            });
        }
        Ok(needed as u64)
    }

    pub fn restrict(
        &self,
        circuit: &ThresholdCircuit,
        seed: u64,
    ) -> Result<(Restriction, Ltf, FullTrace), RestrictionError> {
        restrict_full(circuit, &self.plan, seed)
    }
}

/// Smallest live-variable count `L` with `2^L >= 10 * b`.
pub fn min_live_for_budget(b: &BigUint) -> usize {
    let ten_b = b * BigUint::from(10u32);
    if ten_b.is_zero() {
        return 0;
    }
    let bits = ten_b.bits();
    if ten_b == BigUint::one() << (bits - 1) {
        (bits - 1) as usize
    } else {
        bits as usize
    }
}

/// What happened at one pipeline seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    /// Live variables kept, `None` when the pipeline failed at this seed.
    pub live: Option<usize>,
    /// Whether the live count met the requirement and an estimate was made.
    pub counted: bool,
    /// Estimated acceptance probability of the reduced gate (exact fraction).
    pub estimate: Option<String>,
    /// Whether the estimate reached the `3/5` acceptance threshold.
    pub accepting: bool,
}

/// Decision plus the seed statistics it was computed from. The statistics
/// are exact and reproducible: rerunning with the same circuit, pipeline and
/// estimate source regenerates this record bit for bit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerandVerdict {
    pub decision: Decision,
    pub n: usize,
    pub depth: usize,
    pub eps: String,
    /// Accuracy-loss exponent of the pipeline at this depth.
    pub delta: String,
    /// Exceptional-input budget the verdict is claimed against.
    pub b_budget: String,
    /// Minimum live count implied by the budget: `2^live >= 10 * b_budget`.
    pub live_needed: usize,
    /// Ceiling of `n^(1-delta)`, the live count the asymptotic exceptional
    /// bound `2^(n^(1-delta)) / 10` would demand.
    pub asymptotic_live: usize,
    pub seeds_total: u64,
    pub seeds_counted: u64,
    pub seeds_accepting: u64,
    /// `seeds_counted / seeds_total` as an exact fraction.
    pub good_seed_fraction: String,
    pub outcomes: Vec<SeedOutcome>,
}

pub fn verdict_to_text(verdict: &DerandVerdict) -> String {
    let mut text = serde_json::to_string_pretty(verdict).expect("verdict serialization");
    text.push('\n');
    text
}

pub fn verdict_from_text(text: &str) -> Result<DerandVerdict, serde_json::Error> {
    serde_json::from_str(text)
}

/// Decide whether `circuit` accepts all but at most `b_budget` inputs or
/// rejects all but that many.
///
/// Every pipeline seed is run; seeds where the pipeline fails outright or
/// keeps fewer than `log2(10 * b_budget)` live variables are recorded but
/// not counted. For each counted seed the acceptance probability of the
/// reduced gate is estimated by averaging over every seed of `ltf_source`
/// (which must emit exactly `n` bits; the first `live` feed the gate).
/// Accept iff a strict majority of counted seeds estimate at least `3/5`.
///
/// Fails with [`DerandError::NoSuccessfulSeed`] when no seed is counted, and
/// propagates the pipeline error when a seed fails for a non-stochastic
/// reason (bad parameters rather than an unlucky restriction).
pub fn quantified_derandomize(
    circuit: &ThresholdCircuit,
    pipeline: &FullPipeline,
    ltf_source: &dyn SeededSource,
    b_budget: &BigUint,
    budget: u64,
) -> Result<DerandVerdict, DerandError> {
    circuit.validate_decision()?;
    let seeds_total = pipeline.seed_count(budget)?;
    let ltf_seeds = ltf_source.seed_count(budget)?;
    let combined = seeds_total as u128 * ltf_seeds as u128;
    if combined > budget as u128 {
        return Err(DerandError::BudgetExceeded {
            needed: combined,
            budget,
        });
    }
    if ltf_source.output_len() != circuit.n {
        return Err(DerandError::SourceLength {
            what: "acceptance-estimate",
            got: ltf_source.output_len(),
            expected: circuit.n,
        });
    }

    let live_needed = min_live_for_budget(b_budget);
    let accept_threshold = BigRational::new(BigInt::from(3), BigInt::from(5));
    let mut outcomes = Vec::with_capacity(seeds_total as usize);
    let mut seeds_counted = 0u64;
    let mut seeds_accepting = 0u64;
    let mut first_trace: Option<FullTrace> = None;

    for seed in 0..seeds_total {
        match pipeline.restrict(circuit, seed) {
            Ok((rho, phi, trace)) => {
                let live = rho.live_count();
                if first_trace.is_none() {
                    first_trace = Some(trace);
                }
                if live < live_needed {
                    outcomes.push(SeedOutcome {
                        seed,
                        live: Some(live),
                        counted: false,
                        estimate: None,
                        accepting: false,
                    });
                    continue;
                }
                let mut accepts = 0u64;
                for s in 0..ltf_seeds {
                    let bits = ltf_source.emit(s);
                    let x = signs_from_bits(&bits[..live]);
                    if phi.eval(&x) == -1 {
                        accepts += 1;
                    }
                }
                let estimate =
                    BigRational::new(BigInt::from(accepts), BigInt::from(ltf_seeds));
                let accepting = estimate >= accept_threshold;
                seeds_counted += 1;
                seeds_accepting += u64::from(accepting);
                outcomes.push(SeedOutcome {
                    seed,
                    live: Some(live),
                    counted: true,
                    estimate: Some(rational_to_text(&estimate)),
                    accepting,
                });
            }
            Err(
                e @ (RestrictionError::StageFailed { .. } | RestrictionError::FinalLive { .. }),
            ) => {
                let _ = e;
                outcomes.push(SeedOutcome {
                    seed,
                    live: None,
                    counted: false,
                    estimate: None,
                    accepting: false,
                });
            }
            Err(e) => return Err(e.into()),
        }
    }

    if seeds_counted == 0 {
        return Err(DerandError::NoSuccessfulSeed { seeds: seeds_total });
    }
    let trace = first_trace.expect("counted seeds imply a successful pipeline run");
    let decision = if 2 * seeds_accepting > seeds_counted {
        Decision::Accept
    } else {
        Decision::Reject
    };
    let good = BigRational::new(BigInt::from(seeds_counted), BigInt::from(seeds_total));
    Ok(DerandVerdict {
        decision,
        n: circuit.n,
        depth: circuit.depth(),
        eps: rational_to_text(&pipeline.plan.eps),
        delta: trace.delta.clone(),
        b_budget: b_budget.to_string(),
        live_needed,
        asymptotic_live: trace.live_requirement,
        seeds_total,
        seeds_counted,
        seeds_accepting,
        good_seed_fraction: rational_to_text(&good),
        outcomes,
    })
}

// ---------------------------------------------------------------------------
// the depth-2 generator
// ---------------------------------------------------------------------------

/// Selection-and-fill generator for depth-2 circuits.
///
/// Construction for variable count `n` (a power of two) and accuracy `eps`:
/// pick the largest `delta` in the open interval `(eps/2, 2*eps/3)` for
/// which the live probability `p = n^-(1-delta)` is a power of two, say
/// `p = 2^-q`. A seed splits into three sub-seeds (low bits first):
///
/// 1. the selection source emits `n*q` bits; variable `i` stays live iff
///    its `q`-bit block is all zeroes,
/// 2. the value source emits `n` bits, fixing every dead variable to the
///    sign `(-1)^bit`,
/// 3. the fill source emits `n` bits; live variables take their signs in
///    ascending variable order.
pub struct Depth2Prg<'a> {
    n: usize,
    eps: BigRational,
    delta: BigRational,
    q: u32,
    y_source: &'a dyn SeededSource,
    z_source: &'a dyn SeededSource,
    x_source: &'a dyn SeededSource,
}

impl std::fmt::Debug for Depth2Prg<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Depth2Prg")
            .field("n", &self.n)
            .field("eps", &rational_to_text(&self.eps))
            .field("delta", &rational_to_text(&self.delta))
            .field("q", &self.q)
            .field("seed_bits", &self.seed_bits())
            .finish()
    }
}

impl<'a> Depth2Prg<'a> {
    pub fn new(
        n: usize,
        eps: BigRational,
        y_source: &'a dyn SeededSource,
        z_source: &'a dyn SeededSource,
        x_source: &'a dyn SeededSource,
    ) -> Result<Self, DerandError> {
        if !eps.is_positive() || eps >= BigRational::new(BigInt::from(3), BigInt::from(2)) {
            return Err(DerandError::EpsRange {
                eps: rational_to_text(&eps),
            });
        }
        let (delta, q) = choose_depth2_delta(n, &eps)?;
        if y_source.output_len() != n * q as usize {
            return Err(DerandError::SourceLength {
                what: "selection",
                got: y_source.output_len(),
                expected: n * q as usize,
            });
        }
        if z_source.output_len() != n {
            return Err(DerandError::SourceLength {
                what: "value",
                got: z_source.output_len(),
                expected: n,
            });
        }
        if x_source.output_len() != n {
            return Err(DerandError::SourceLength {
                what: "fill",
                got: x_source.output_len(),
                expected: n,
            });
        }
        let bits = y_source.seed_bits() + z_source.seed_bits() + x_source.seed_bits();
        if bits > 63 {
            return Err(DerandError::SeedSpaceTooWide { bits });
        }
        Ok(Depth2Prg {
            n,
            eps,
            delta,
            q,
            y_source,
            z_source,
            x_source,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eps(&self) -> &BigRational {
        &self.eps
    }

    /// The chosen exponent `delta` with `p = n^-(1-delta)`.
    pub fn delta(&self) -> &BigRational {
        &self.delta
    }

    /// `q` with live probability `p = 2^-q`.
    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn seed_bits(&self) -> u32 {
        self.y_source.seed_bits() + self.z_source.seed_bits() + self.x_source.seed_bits()
    }

    /// Number of seeds, checked against the budget.
    pub fn seed_count(&self, budget: u64) -> Result<u64, DerandError> {
        let needed = 1u128 << self.seed_bits();
        if needed > budget as u128 {
            return Err(DerandError::BudgetExceeded {
                needed,
                budget,
            });
        }
        Ok(needed as u64)
    }

    /// The output on `seed`; bits of the seed beyond [`Self::seed_bits`] are
    /// ignored.
    pub fn emit(&self, seed: u64) -> Vec<i8> {
        let yb = self.y_source.seed_bits();
        let zb = self.z_source.seed_bits();
        let y_seed = seed & mask(yb);
        let z_seed = seed >> yb & mask(zb);
        let x_seed = seed >> (yb + zb) & mask(self.x_source.seed_bits());
        let selection = self.y_source.emit(y_seed);
        let values = self.z_source.emit(z_seed);
        let fill = self.x_source.emit(x_seed);
        let q = self.q as usize;
        let mut out = Vec::with_capacity(self.n);
        let mut next_fill = 0;
        for i in 0..self.n {
            let live = selection[i * q..(i + 1) * q].iter().all(|&b| !b);
            if live {
                out.push(sign_from_bit(fill[next_fill]));
                next_fill += 1;
            } else {
                out.push(sign_from_bit(values[i]));
            }
        }
        out
    }
}

fn mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Largest `delta` in the open interval `(eps/2, 2*eps/3)` for which
/// `n^-(1-delta)` is a power of two, together with `q = log2(1/p)`. Such a
/// `delta` has the form `(l-k)/l` for `n = 2^l` and an integer `k >= 1`, so
/// for variable counts that are not powers of two there is none.
pub fn choose_depth2_delta(n: usize, eps: &BigRational) -> Result<(BigRational, u32), DerandError> {
    let fail = || DerandError::NoAdmissibleDelta {
        n,
        eps: rational_to_text(eps),
    };
    if n < 2 || !n.is_power_of_two() {
        return Err(fail());
    }
    let l = n.trailing_zeros();
    let lo = eps / BigRational::from_integer(BigInt::from(2));
    let hi = eps * BigRational::new(BigInt::from(2), BigInt::from(3));
    for k in 1..l {
        let delta = BigRational::new(BigInt::from(l - k), BigInt::from(l));
        if delta > lo && delta < hi {
            return Ok((delta, k));
        }
    }
    Err(fail())
}

/// One-shot form of [`Depth2Prg`]: build the generator and emit one output.
pub fn prg_depth2(
    n: usize,
    eps: BigRational,
    seed: u64,
    y_source: &dyn SeededSource,
    z_source: &dyn SeededSource,
    x_source: &dyn SeededSource,
) -> Result<Vec<i8>, DerandError> {
    Ok(Depth2Prg::new(n, eps, y_source, z_source, x_source)?.emit(seed))
}

/// Decision plus the exact acceptance fraction behind it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Depth2Verdict {
    pub decision: Decision,
    /// Fraction of generator outputs the circuit accepts (exact).
    pub acceptance: String,
    pub seeds: u64,
}

/// Average a depth-2 circuit over every output of [`Depth2Prg`]; accept iff
/// the acceptance fraction exceeds `1/2`.
pub fn derandomize_depth2(
    circuit: &ThresholdCircuit,
    eps: BigRational,
    y_source: &dyn SeededSource,
    z_source: &dyn SeededSource,
    x_source: &dyn SeededSource,
    budget: u64,
) -> Result<Depth2Verdict, DerandError> {
    circuit.validate_decision()?;
    if circuit.depth() > 2 {
        return Err(DerandError::DepthRange {
            depth: circuit.depth(),
            max: 2,
        });
    }
    let prg = Depth2Prg::new(circuit.n, eps, y_source, z_source, x_source)?;
    let seeds = prg.seed_count(budget)?;
    let mut accepts = 0u64;
    for seed in 0..seeds {
        if circuit.eval(&prg.emit(seed))? == -1 {
            accepts += 1;
        }
    }
    let acceptance = BigRational::new(BigInt::from(accepts), BigInt::from(seeds));
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    Ok(Depth2Verdict {
        decision: if acceptance > half {
            Decision::Accept
        } else {
            Decision::Reject
        },
        acceptance: rational_to_text(&acceptance),
        seeds,
    })
}

// ---------------------------------------------------------------------------
// exact collapse criteria for a single gate
// ---------------------------------------------------------------------------

/// The constant a gate computes, if any, decided in closed form: with
/// `W = sum_i |w_i|`, the gate is constantly `-1` iff `theta > W` and
/// constantly `+1` iff `theta <= -W` (the boundary point evaluates to `+1`
/// because ties do). Otherwise both outputs occur.
pub fn ltf_constant_value(phi: &Ltf) -> Option<i8> {
    let w1 = BigRational::from_integer(
        phi.weights.iter().map(|w| w.abs()).sum::<BigInt>(),
    );
    if phi.theta > w1 {
        Some(-1)
    } else if phi.theta <= -w1 {
        Some(1)
    } else {
        None
    }
}

/// Whether the gate's output is determined by at most one of its inputs,
/// decided in closed form: the gate collapses onto input `i` iff for both
/// values `s` of that input the remaining function is constant, i.e.
/// `theta - w_i*s > W - |w_i|` or `theta - w_i*s <= -(W - |w_i|)`.
/// Gates with at most one nonzero weight collapse trivially.
pub fn ltf_depends_on_at_most_one(phi: &Ltf) -> bool {
    let nonzero: Vec<usize> = (0..phi.arity())
        .filter(|&i| !phi.weights[i].is_zero())
        .collect();
    if nonzero.len() <= 1 {
        return true;
    }
    let w1: BigInt = nonzero.iter().map(|&i| phi.weights[i].abs()).sum();
    let w1 = BigRational::from_integer(w1);
    nonzero.iter().any(|&i| {
        let wi = BigRational::from_integer(phi.weights[i].clone());
        let rest = &w1 - wi.abs();
        [1i8, -1].into_iter().all(|s| {
            let c = &phi.theta - &wi * BigRational::from_integer(BigInt::from(s));
            c > rest || c <= -&rest
        })
    })
}

/// Number of inputs the gate actually depends on, by exhaustive enumeration.
pub fn ltf_dependent_count(phi: &Ltf, budget: u64) -> Result<usize, CircuitError> {
    let m = phi.arity();
    let total = check_enumeration(m, budget)?;
    let values: Vec<i8> = (0..total)
        .map(|mask| phi.eval(&crate::exact::signs_from_mask(m, mask)))
        .collect();
    Ok((0..m)
        .filter(|&j| (0..total).any(|mask| values[mask as usize] != values[(mask ^ (1 << j)) as usize]))
        .count())
}

// ---------------------------------------------------------------------------
// pair-bounded restriction harness
// ---------------------------------------------------------------------------

/// The two bundled selection families in which every variable is live with
/// probability at most `p` and every pair with probability at most `p^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSelection {
    /// Each variable lives independently with probability `p`.
    IndependentBernoulli,
    /// The first `floor(m*p)` blocks of `1/p` consecutive variables each
    /// contribute exactly one live variable, chosen uniformly; leftover
    /// variables are always fixed. The live count is thus deterministic.
    OnePerBlock,
}

/// Live counts above this use the closed-form collapse criterion instead of
/// exhaustive enumeration.
const COLLAPSE_ENUMERATION_CAP: usize = 10;

/// Monte-Carlo estimate of the probability that a restriction drawn from a
/// pair-bounded selection family (live probability `p = 2^-q`, values from
/// `z_source`) leaves `phi` depending on two or more inputs. Each trial
/// draws the selection first, then a value-source seed, from the stream
/// behind `master`.
pub fn harness_kw_restriction(
    phi: &Ltf,
    p: &BigRational,
    family: PairSelection,
    z_source: &dyn SeededSource,
    trials: u64,
    master: u64,
    budget: u64,
) -> Result<BigRational, DerandError> {
    if trials == 0 {
        return Err(DerandError::NoTrials);
    }
    let q = pow2_log_inverse(p).ok_or_else(|| DerandError::LiveProbability {
        p: rational_to_text(p),
    })? as usize;
    let m = phi.arity();
    if z_source.output_len() != m {
        return Err(DerandError::SourceLength {
            what: "value",
            got: z_source.output_len(),
            expected: m,
        });
    }
    let mut rng = seed_stream(master);
    let mut nontrivial = 0u64;
    for _ in 0..trials {
        let live = match family {
            PairSelection::IndependentBernoulli => (0..m)
                .map(|_| (0..q).fold(true, |acc, _| acc & rng.gen::<bool>()))
                .collect::<Vec<bool>>(),
            PairSelection::OnePerBlock => {
                let block = 1usize << q;
                let mut live = vec![false; m];
                for b in 0..m >> q {
                    let mut index = 0usize;
                    for _ in 0..q {
                        index = index << 1 | rng.gen::<bool>() as usize;
                    }
                    live[b * block + index] = true;
                }
                live
            }
        };
        let z = signs_from_bits(&z_source.emit(rng.gen()));
        let cells = live
            .iter()
            .zip(&z)
            .map(|(&alive, &value)| if alive { 0 } else { value })
            .collect();
        let restricted = phi.restrict(&Restriction::from_cells(cells)?)?;
        let collapsed = if restricted.arity() <= COLLAPSE_ENUMERATION_CAP {
            ltf_dependent_count(&restricted, budget)? <= 1
        } else {
            ltf_depends_on_at_most_one(&restricted)
        };
        nontrivial += u64::from(!collapsed);
    }
    Ok(BigRational::new(
        BigInt::from(nontrivial),
        BigInt::from(trials),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::acceptance_count;
    use crate::exact::ratio;
    use crate::format::rational_from_text;
    use crate::sources::{StreamSource, TruncatedSeedSource, UniformSource};
    use crate::DEFAULT_BUDGET;
    use proptest::prelude::*;

    fn ltf(w: &[i64], theta: i64) -> Ltf {
        Ltf::from_i64(w, theta, 1)
    }

    /// Depth-2 circuit over `n` variables: one gate that is `+1` exactly on
    /// the all-ones pattern of `x_0..x_{k-1}`, passed through the top gate
    /// with weight `top` (so `top = 1` rejects exactly those points and
    /// `top = -1` accepts exactly them).
    fn and_then_top(n: usize, k: usize, top: i64) -> ThresholdCircuit {
        let mut w = vec![0i64; n];
        w[..k].fill(1);
        ThresholdCircuit::new(
            n,
            vec![vec![ltf(&w, k as i64 - 1)], vec![ltf(&[top], 0)]],
        )
        .unwrap()
    }

    /// Depth-2 circuit computing a constant: the top threshold swallows the
    /// single pass-through gate.
    fn constant_depth2(n: usize, output: i8) -> ThresholdCircuit {
        let mut w = vec![0i64; n];
        w[0] = 1;
        ThresholdCircuit::new(
            n,
            vec![vec![ltf(&w, 0)], vec![ltf(&[1], -2 * i64::from(output))]],
        )
        .unwrap()
    }

    fn plan_12_floor5() -> FullReductionPlan {
        let mut plan = FullReductionPlan::new(ratio(1, 64), ratio(1, 1));
        plan.q_overrides = vec![Some(1)];
        plan.live_floor_overrides = vec![Some(5)];
        plan
    }

    #[test]
    fn decision_serializes_lowercase() {
        assert_eq!(serde_json::to_string(&Decision::Accept).unwrap(), "\"accept\"");
        assert_eq!(
            serde_json::from_str::<Decision>("\"reject\"").unwrap(),
            Decision::Reject
        );
    }

    #[test]
    fn live_requirement_tracks_the_budget_exactly() {
        let cases: [(u32, usize); 6] = [(0, 0), (1, 4), (2, 5), (3, 5), (4, 6), (103, 11)];
        for (b, want) in cases {
            let got = min_live_for_budget(&BigUint::from(b));
            assert_eq!(got, want, "budget {b}");
            if b > 0 {
                assert!(BigUint::one() << got >= BigUint::from(10 * b));
                assert!(BigUint::one() << (got - 1) < BigUint::from(10 * b));
            }
        }
    }

    #[test]
    fn constant_circuits_decide_trivially_at_depth_one() {
        // a single always-accepting gate: every pipeline seed reduces to it
        let c = ThresholdCircuit::from_ltf(ltf(&[0; 12], 1));
        let pipeline =
            FullPipeline::new(FullReductionPlan::new(ratio(1, 64), ratio(1, 1)), 6).unwrap();
        let source = UniformSource::new(12).unwrap();
        let verdict =
            quantified_derandomize(&c, &pipeline, &source, &BigUint::zero(), DEFAULT_BUDGET)
                .unwrap();
        assert_eq!(verdict.decision, Decision::Accept);
        assert_eq!((verdict.seeds_total, verdict.seeds_counted), (64, 64));
        assert_eq!(verdict.seeds_accepting, 64);
        assert_eq!(verdict.good_seed_fraction, "1/1");
        assert_eq!(verdict.delta, "1/64");
        assert_eq!(verdict.live_needed, 0);
        assert!(verdict
            .outcomes
            .iter()
            .all(|o| o.live == Some(12) && o.estimate.as_deref() == Some("1/1")));

        let rejecting = ThresholdCircuit::from_ltf(ltf(&[0; 12], -1));
        let verdict =
            quantified_derandomize(&rejecting, &pipeline, &source, &BigUint::zero(), DEFAULT_BUDGET)
                .unwrap();
        assert_eq!(verdict.decision, Decision::Reject);
        assert_eq!(verdict.seeds_accepting, 0);
    }

    #[test]
    fn constant_circuits_decide_trivially_at_depth_two() {
        let pipeline = FullPipeline::new(plan_12_floor5(), 6).unwrap();
        let source = UniformSource::new(12).unwrap();
        for (output, want) in [(-1i8, Decision::Accept), (1, Decision::Reject)] {
            let c = constant_depth2(12, output);
            assert_eq!(
                acceptance_count(&c, DEFAULT_BUDGET).unwrap(),
                if output == -1 { 4096 } else { 0 }
            );
            let verdict =
                quantified_derandomize(&c, &pipeline, &source, &BigUint::zero(), DEFAULT_BUDGET)
                    .unwrap();
            assert_eq!(verdict.decision, want, "constant {output}");
            assert!(verdict.seeds_counted > 0);
            let expected_accepting = if output == -1 { verdict.seeds_counted } else { 0 };
            assert_eq!(verdict.seeds_accepting, expected_accepting, "constant {output}");
        }
    }

    #[test]
    fn verdict_round_trips_through_text() {
        let c = ThresholdCircuit::from_ltf(ltf(&[0; 12], 1));
        let pipeline =
            FullPipeline::new(FullReductionPlan::new(ratio(1, 64), ratio(1, 1)), 3).unwrap();
        let source = UniformSource::new(12).unwrap();
        let verdict =
            quantified_derandomize(&c, &pipeline, &source, &BigUint::from(1u32), DEFAULT_BUDGET)
                .unwrap();
        let text = verdict_to_text(&verdict);
        assert!(text.ends_with('\n'));
        assert_eq!(verdict_from_text(&text).unwrap(), verdict);
    }

    #[test]
    fn configuration_failures_abort_instead_of_masquerading() {
        let c = and_then_top(12, 11, 1);
        let source = UniformSource::new(12).unwrap();
        // eps too large for depth 2: every seed would fail identically
        let pipeline =
            FullPipeline::new(FullReductionPlan::new(ratio(1, 40), ratio(1, 1)), 6).unwrap();
        assert!(matches!(
            quantified_derandomize(&c, &pipeline, &source, &BigUint::from(3u32), DEFAULT_BUDGET),
            Err(DerandError::Restriction(RestrictionError::DeltaRange { .. }))
        ));
        // seed spaces must fit the budget jointly
        let pipeline = FullPipeline::new(plan_12_floor5(), 12).unwrap();
        assert!(matches!(
            quantified_derandomize(&c, &pipeline, &source, &BigUint::from(3u32), 1 << 20),
            Err(DerandError::BudgetExceeded { .. })
        ));
        // the estimate source must emit exactly n bits
        let pipeline = FullPipeline::new(plan_12_floor5(), 6).unwrap();
        let short = UniformSource::new(11).unwrap();
        assert!(matches!(
            quantified_derandomize(&c, &pipeline, &short, &BigUint::from(3u32), DEFAULT_BUDGET),
            Err(DerandError::SourceLength { what: "acceptance-estimate", .. })
        ));
        assert!(FullPipeline::new(plan_12_floor5(), 0).is_err());
        assert!(FullPipeline::new(plan_12_floor5(), 64).is_err());
    }

    #[test]
    fn unreachable_live_requirement_is_reported_not_decided() {
        let c = and_then_top(12, 11, 1);
        let pipeline = FullPipeline::new(plan_12_floor5(), 6).unwrap();
        let source = UniformSource::new(12).unwrap();
        // 2^20 exceptional inputs would need 24 live variables
        let err = quantified_derandomize(
            &c,
            &pipeline,
            &source,
            &BigUint::from(1u32 << 20),
            DEFAULT_BUDGET,
        )
        .unwrap_err();
        assert!(matches!(err, DerandError::NoSuccessfulSeed { seeds: 64 }));
    }

    // -- depth-2 generator ------------------------------------------------

    #[test]
    fn delta_selection_is_exact_and_largest() {
        // n = 16: the window (1/5, 4/15) admits exactly delta = 1/4
        let y = StreamSource::new(48).unwrap();
        let z = StreamSource::new(16).unwrap();
        let x = StreamSource::new(16).unwrap();
        let ty = TruncatedSeedSource::new(y, 6).unwrap();
        let tz = TruncatedSeedSource::new(z, 6).unwrap();
        let tx = TruncatedSeedSource::new(x, 6).unwrap();
        let prg = Depth2Prg::new(16, ratio(2, 5), &ty, &tz, &tx).unwrap();
        assert_eq!(prg.delta(), &ratio(1, 4));
        assert_eq!(prg.q(), 3);
        assert_eq!(prg.seed_bits(), 18);

        // window too low for any admissible exponent
        let err = Depth2Prg::new(16, ratio(1, 5), &ty, &tz, &tx).unwrap_err();
        assert!(matches!(err, DerandError::NoAdmissibleDelta { n: 16, .. }));
        // not a power of two
        let z12 = StreamSource::new(12).unwrap();
        assert!(matches!(
            Depth2Prg::new(12, ratio(2, 5), &ty, &z12, &tx),
            Err(DerandError::NoAdmissibleDelta { n: 12, .. })
        ));
        // two admissible exponents at n = 256, eps = 29/20: window
        // (29/40, 29/30) holds 3/4 and 7/8; the larger wins
        let y256 = StreamSource::new(256).unwrap();
        let z256 = StreamSource::new(256).unwrap();
        let x256 = StreamSource::new(256).unwrap();
        let ty256 = TruncatedSeedSource::new(y256, 6).unwrap();
        let tz256 = TruncatedSeedSource::new(z256, 6).unwrap();
        let tx256 = TruncatedSeedSource::new(x256, 6).unwrap();
        let prg = Depth2Prg::new(256, ratio(29, 20), &ty256, &tz256, &tx256).unwrap();
        assert_eq!(prg.delta(), &ratio(7, 8));
        assert_eq!(prg.q(), 1);
    }

    #[test]
    fn generator_output_is_deterministic_and_signed() {
        let y = StreamSource::new(48).unwrap();
        let z = StreamSource::new(16).unwrap();
        let x = StreamSource::new(16).unwrap();
        let ty = TruncatedSeedSource::new(y, 6).unwrap();
        let tz = TruncatedSeedSource::new(z, 6).unwrap();
        let tx = TruncatedSeedSource::new(x, 6).unwrap();
        let out = prg_depth2(16, ratio(2, 5), 171_717, &ty, &tz, &tx).unwrap();
        assert_eq!(out.len(), 16);
        assert!(out.iter().all(|&v| v == 1 || v == -1));
        assert_eq!(out, prg_depth2(16, ratio(2, 5), 171_717, &ty, &tz, &tx).unwrap());
    }

    #[test]
    fn generator_assembly_matches_a_hand_computation() {
        // n = 4, eps = 4/5: window (2/5, 8/15) admits delta = 1/2, q = 1,
        // so each variable is live iff its single selection bit is zero.
        // With uniform-exhaustive subsources the seed splits little-endian
        // into 4 selection bits, 4 value bits, 4 fill bits.
        let y = UniformSource::new(4).unwrap();
        let z = UniformSource::new(4).unwrap();
        let x = UniformSource::new(4).unwrap();
        let prg = Depth2Prg::new(4, ratio(4, 5), &y, &z, &x).unwrap();
        assert_eq!((prg.delta(), prg.q()), (&ratio(1, 2), 1));
        assert_eq!(prg.seed_count(DEFAULT_BUDGET).unwrap(), 4096);

        // seed 0: everything live, filled with +1
        assert_eq!(prg.emit(0), vec![1, 1, 1, 1]);
        // selection 0101: variables 0 and 2 dead; values 0011 fix variable
        // 0 to +1 and variable 2 to -1; fill bits 10 put -1 then +1 on the
        // live variables 1 and 3
        let seed = 0b0001_1100_0101;
        assert_eq!(prg.emit(seed), vec![1, -1, -1, 1]);
        // high bits beyond the declared seed space are ignored
        assert_eq!(prg.emit(seed | 1 << 13), prg.emit(seed));
    }

    #[test]
    fn exhaustive_uniform_sweep_matches_the_circuit_census() {
        // with all-uniform subsources every fill pattern of every subcube is
        // enumerated, so the sweep acceptance equals an exact average of
        // subcube acceptances; freeze it and compare against the census
        let c = and_then_top(4, 3, 1);
        assert_eq!(acceptance_count(&c, DEFAULT_BUDGET).unwrap(), 14);
        let y = UniformSource::new(4).unwrap();
        let z = UniformSource::new(4).unwrap();
        let x = UniformSource::new(4).unwrap();
        let verdict =
            derandomize_depth2(&c, ratio(4, 5), &y, &z, &x, DEFAULT_BUDGET).unwrap();
        assert_eq!(verdict.decision, Decision::Accept);
        assert_eq!(verdict.seeds, 4096);
        assert_eq!(verdict.acceptance, "7/8");

        let negated = and_then_top(4, 3, -1);
        assert_eq!(acceptance_count(&negated, DEFAULT_BUDGET).unwrap(), 2);
        let verdict =
            derandomize_depth2(&negated, ratio(4, 5), &y, &z, &x, DEFAULT_BUDGET).unwrap();
        assert_eq!(verdict.decision, Decision::Reject);
        assert_eq!(verdict.acceptance, "1/8");
    }

    #[test]
    fn near_constant_circuit_is_accepted_with_high_probability() {
        // n = 16 instance within the sparse depth-2 class: 16 wires against
        // the cap of 21, rejecting 2 of 65536 inputs
        let c = and_then_top(16, 15, 1);
        assert!(c.wire_count() <= 21);
        assert_eq!(acceptance_count(&c, DEFAULT_BUDGET).unwrap(), 65534);
        let y = TruncatedSeedSource::new(StreamSource::new(48).unwrap(), 6).unwrap();
        let z = TruncatedSeedSource::new(StreamSource::new(16).unwrap(), 6).unwrap();
        let x = TruncatedSeedSource::new(StreamSource::new(16).unwrap(), 6).unwrap();
        let verdict = derandomize_depth2(&c, ratio(2, 5), &y, &z, &x, DEFAULT_BUDGET).unwrap();
        assert_eq!(verdict.decision, Decision::Accept);
        let acceptance = rational_from_text(&verdict.acceptance).unwrap();
        assert!(acceptance >= ratio(9, 10), "acceptance {acceptance}");
        // none of the 2^18 outputs lands in the rejected subcube
        assert_eq!(verdict.acceptance, "1/1");

        let negated = and_then_top(16, 15, -1);
        let verdict =
            derandomize_depth2(&negated, ratio(2, 5), &y, &z, &x, DEFAULT_BUDGET).unwrap();
        assert_eq!(verdict.decision, Decision::Reject);
        assert_eq!(verdict.acceptance, "0/1");

        for constant in [-1i8, 1] {
            let c = constant_depth2(16, constant);
            let verdict =
                derandomize_depth2(&c, ratio(2, 5), &y, &z, &x, DEFAULT_BUDGET).unwrap();
            let want = if constant == -1 { Decision::Accept } else { Decision::Reject };
            assert_eq!(verdict.decision, want);
            assert_eq!(verdict.acceptance, if constant == -1 { "1/1" } else { "0/1" });
        }
    }

    #[test]
    fn depth_cap_and_seed_width_are_enforced() {
        let deep = ThresholdCircuit::new(
            4,
            vec![
                vec![ltf(&[1, 0, 0, 0], 0)],
                vec![ltf(&[1], 0)],
                vec![ltf(&[1], 0)],
            ],
        )
        .unwrap();
        let y = UniformSource::new(4).unwrap();
        let z = UniformSource::new(4).unwrap();
        let x = UniformSource::new(4).unwrap();
        assert!(matches!(
            derandomize_depth2(&deep, ratio(4, 5), &y, &z, &x, DEFAULT_BUDGET),
            Err(DerandError::DepthRange { depth: 3, max: 2 })
        ));
        // 4096 seeds against a budget of 1000
        let flat = and_then_top(4, 3, 1);
        assert!(matches!(
            derandomize_depth2(&flat, ratio(4, 5), &y, &z, &x, 1000),
            Err(DerandError::BudgetExceeded { needed: 4096, .. })
        ));
        // a full-width stream as a subsource pushes the joint seed space
        // past what a single u64 can address
        let wide = StreamSource::new(4).unwrap();
        assert!(matches!(
            Depth2Prg::new(4, ratio(4, 5), &wide, &z, &x),
            Err(DerandError::SeedSpaceTooWide { bits: 72 })
        ));
    }

    // -- collapse criteria -------------------------------------------------

    #[test]
    fn constant_criterion_handles_the_tie_boundary() {
        // theta = W: the all-ones point evaluates to +1, the rest to -1
        assert_eq!(ltf_constant_value(&ltf(&[1, 1], 2)), None);
        // theta just above W
        assert_eq!(ltf_constant_value(&ltf(&[1, 1], 3)), Some(-1));
        // theta = -W: minimum lands exactly on the tie, which outputs +1
        assert_eq!(ltf_constant_value(&ltf(&[1, 1], -2)), Some(1));
        assert_eq!(ltf_constant_value(&ltf(&[0, 0], 0)), Some(1));
        assert_eq!(ltf_constant_value(&ltf(&[0, 0], 1)), Some(-1));
    }

    #[test]
    fn collapse_criterion_matches_enumeration_on_edge_cases() {
        // depends only on the heavy coordinate
        assert!(ltf_depends_on_at_most_one(&ltf(&[4, 1, 1], 0)));
        // genuine two-variable dependence
        assert!(!ltf_depends_on_at_most_one(&ltf(&[1, 1], 0)));
        // zero-weight coordinates never count
        assert!(ltf_depends_on_at_most_one(&ltf(&[0, 7, 0], 1)));
        for phi in [ltf(&[4, 1, 1], 0), ltf(&[1, 1], 0), ltf(&[0, 7, 0], 1)] {
            assert_eq!(
                ltf_depends_on_at_most_one(&phi),
                ltf_dependent_count(&phi, DEFAULT_BUDGET).unwrap() <= 1,
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn collapse_criterion_agrees_with_enumeration(
            w in proptest::collection::vec(-3i64..=3, 1..=6),
            theta_num in -8i64..=8,
            theta_den in 1i64..=2,
        ) {
            let phi = Ltf::from_i64(&w, theta_num, theta_den);
            let exhaustive = ltf_dependent_count(&phi, DEFAULT_BUDGET).unwrap();
            prop_assert_eq!(ltf_depends_on_at_most_one(&phi), exhaustive <= 1);
            let constant = ltf_constant_value(&phi);
            prop_assert_eq!(constant.is_some(), exhaustive == 0);
            if let Some(value) = constant {
                let ones = vec![1i8; phi.arity()];
                prop_assert_eq!(phi.eval(&ones), value);
            }
        }
    }

    // -- pair-bounded harness ----------------------------------------------

    #[test]
    fn constant_gate_never_counts_as_nontrivial() {
        let z = StreamSource::new(8).unwrap();
        let rate = harness_kw_restriction(
            &ltf(&[0; 8], -5),
            &ratio(1, 4),
            PairSelection::IndependentBernoulli,
            &z,
            200,
            7,
            DEFAULT_BUDGET,
        )
        .unwrap();
        assert_eq!(rate, BigRational::zero());
    }

    #[test]
    fn empty_partition_keeps_nothing_alive() {
        // m*p < 1: no full block fits, so every variable is fixed
        let z = StreamSource::new(8).unwrap();
        let rate = harness_kw_restriction(
            &ltf(&[1; 8], 0),
            &ratio(1, 16),
            PairSelection::OnePerBlock,
            &z,
            200,
            7,
            DEFAULT_BUDGET,
        )
        .unwrap();
        assert_eq!(rate, BigRational::zero());
    }

    #[test]
    fn harness_rejects_bad_parameters() {
        let z = StreamSource::new(8).unwrap();
        let phi = ltf(&[1; 8], 0);
        assert!(matches!(
            harness_kw_restriction(
                &phi,
                &ratio(1, 3),
                PairSelection::IndependentBernoulli,
                &z,
                10,
                0,
                DEFAULT_BUDGET
            ),
            Err(DerandError::LiveProbability { .. })
        ));
        assert!(matches!(
            harness_kw_restriction(
                &phi,
                &ratio(1, 4),
                PairSelection::IndependentBernoulli,
                &z,
                0,
                0,
                DEFAULT_BUDGET
            ),
            Err(DerandError::NoTrials)
        ));
        let z9 = StreamSource::new(9).unwrap();
        assert!(matches!(
            harness_kw_restriction(
                &phi,
                &ratio(1, 4),
                PairSelection::IndependentBernoulli,
                &z9,
                10,
                0,
                DEFAULT_BUDGET
            ),
            Err(DerandError::SourceLength { what: "value", got: 9, expected: 8 })
        ));
    }

    #[test]
    fn curated_promise_pair_is_decided_correctly() {
        // rejects exactly the 2 points with x0..x10 all ones, so it accepts
        // all but at most 3 inputs; its negation rejects all but those 2
        let accepting = and_then_top(12, 11, 1);
        assert_eq!(acceptance_count(&accepting, DEFAULT_BUDGET).unwrap(), 4094);
        let rejecting = and_then_top(12, 11, -1);
        assert_eq!(acceptance_count(&rejecting, DEFAULT_BUDGET).unwrap(), 2);

        let pipeline = FullPipeline::new(plan_12_floor5(), 6).unwrap();
        let source = UniformSource::new(12).unwrap();
        let budget = BigUint::from(3u32);
        for (circuit, want, estimate) in [
            (&accepting, Decision::Accept, "1/1"),
            (&rejecting, Decision::Reject, "0/1"),
        ] {
            let v = quantified_derandomize(circuit, &pipeline, &source, &budget, DEFAULT_BUDGET)
                .unwrap();
            assert_eq!(v.decision, want);
            // a budget of 3 needs 5 live variables (2^5 >= 30); the plan's
            // live floor delivers exactly 5 on every surviving seed
            assert_eq!(v.live_needed, 5);
            assert_eq!((v.seeds_total, v.seeds_counted), (64, 9));
            assert_eq!(
                v.seeds_accepting,
                if want == Decision::Accept { 9 } else { 0 }
            );
            assert_eq!(v.good_seed_fraction, "9/64");
            assert_eq!(v.delta, "15/16");
            assert_eq!(v.asymptotic_live, 2);
            // the single gate under every counted seed is constant, so each
            // estimate is exact
            for outcome in v.outcomes.iter().filter(|o| o.counted) {
                assert_eq!(outcome.live, Some(5));
                assert_eq!(outcome.estimate.as_deref(), Some(estimate));
            }
        }
    }

    #[test]
    fn pair_bounded_families_rarely_keep_two_live() {
        // majority of 64 at live probability 1/16: both selection families,
        // 10^4 trials each, against the pair-bounded collapse bound
        // 8 * m * p^(3/2) = 8 (vacuous here; the observed rates sit well
        // below 1/2)
        let maj = ltf(&[1; 64], 0);
        let z64 = StreamSource::new(64).unwrap();
        let cases = [
            (PairSelection::IndependentBernoulli, ratio(1897, 5000)),
            (PairSelection::OnePerBlock, ratio(971, 2500)),
        ];
        for (family, frozen) in cases {
            let rate = harness_kw_restriction(
                &maj,
                &ratio(1, 16),
                family,
                &z64,
                10_000,
                2025,
                DEFAULT_BUDGET,
            )
            .unwrap();
            assert_eq!(rate, frozen, "{family:?}");
            assert!(rate < ratio(1, 2));
        }
        // an asymmetric gate (weights doubling every 8 coordinates) under
        // the partition family at p = 1/8 collapses about half the time
        let geo = Ltf::new(
            (0..64usize).map(|i| BigInt::one() << (i / 8)).collect(),
            BigRational::zero(),
        );
        let rate = harness_kw_restriction(
            &geo,
            &ratio(1, 8),
            PairSelection::OnePerBlock,
            &z64,
            10_000,
            2025,
            DEFAULT_BUDGET,
        )
        .unwrap();
        assert_eq!(rate, ratio(2369, 5000));
    }
}
