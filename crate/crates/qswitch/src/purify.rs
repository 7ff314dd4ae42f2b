//! Purification schedules and their yield laws.
//!
//! [`plan_rounds`] turns a protocol, an input state, and a fidelity target
//! into a [`PurificationSpec`]: the number of rounds `L` and the per-round
//! success probabilities. The yield laws then answer "given `x` raw pairs,
//! how many purified pairs come out":
//!
//! * symmetric protocols pair survivors round by round (groups of `κ`,
//!   leftovers discarded), giving a nested-binomial recursion
//!   ([`symmetric_yield`]);
//! * entanglement pumping feeds one primary pair with fresh base pairs and
//!   restarts on failure, a renewal process whose inter-occurrence law
//!   ([`pumping_inter_occurrence`]) drives the yield via convolution
//!   ([`pumping_yield`]).
//!
//! [`monte_carlo_yield_oracle`] replays either procedure literally, pair
//! by pair, as an independent check on the closed-form tables.

use crate::bell::{
    pump_round, round_output_fidelity, round_success_prob, BellDiagonalState, BellError,
    ProtocolId,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use thiserror::Error;

/// Row sums and cross-route mean comparisons are enforced at this tolerance.
pub const PMF_TOL: f64 = 1e-9;
/// Default cap on purification rounds in [`plan_rounds`].
pub const DEFAULT_MAX_ROUNDS: usize = 32;

/// One planned purification round: success probability and the fidelity
/// reached on success.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundStep {
    pub success: f64,
    pub fidelity: f64,
}

/// A fully planned purification schedule.
///
/// `rounds` is the smallest `L` whose fidelity meets `f_target`;
/// `per_round` holds `(r^(l), F^(l))` for `l = 1..=L`. Produced by
/// [`plan_rounds`]; fields are public so synthetic schedules can be built
/// in tests and experiments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PurificationSpec {
    pub proto: ProtocolId,
    pub input_state: BellDiagonalState,
    /// Pairs consumed per symmetric purification operation.
    pub kappa: usize,
    pub f_target: f64,
    pub rounds: usize,
    pub per_round: Vec<RoundStep>,
}

/// Conditional yield table: `P(Y = y | X = x)` for `0 ≤ y ≤ x ≤ x_max`,
/// with the mean `E[Y | X = x]` alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldModel {
    x_max: usize,
    pmf: Vec<Vec<f64>>,
    mean: Vec<f64>,
}

/// Inter-occurrence law of the pumping renewal process: `inter_pmf[i]` is
/// the probability that one fresh output costs exactly `i` raw pairs.
///
/// `feasible[i]` marks pair counts the process can renew at regardless of
/// the round probabilities (the complement is the infeasible set; for a
/// 2:1 single-round scheme that is the odd counts).
#[derive(Debug, Clone, PartialEq)]
pub struct RenewalModel {
    inter_pmf: Vec<f64>,
    feasible: Vec<bool>,
    rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum YieldError {
    #[error(transparent)]
    Bell(#[from] BellError),
    #[error(
        "target fidelity {f_target} unreachable: reached {fidelity_reached} after {rounds} round(s)"
    )]
    TargetUnreachable {
        f_target: f64,
        fidelity_reached: f64,
        rounds: usize,
    },
    #[error("{name} out of range: {value}")]
    Domain { name: &'static str, value: f64 },
    #[error("expected a symmetric protocol, got {proto:?}")]
    NotSymmetric { proto: ProtocolId },
    #[error("expected the pumping protocol, got {proto:?}")]
    NotPumping { proto: ProtocolId },
    #[error("pmf row {x} sums to {sum}, expected 1")]
    RowNotNormalized { x: usize, sum: f64 },
    #[error("yield means disagree at x={x}: pmf route {pmf_mean}, recursion route {recursion_mean}")]
    MeanMismatch {
        x: usize,
        pmf_mean: f64,
        recursion_mean: f64,
    },
}

/// Plans the smallest number of purification rounds that lifts
/// `input_state` to `f_target`.
///
/// Symmetric protocols iterate their own round law; pumping feeds the
/// evolving primary with fresh copies of `input_state`. Fails if the
/// target is not reached within `max_rounds` or the fidelity stops
/// improving (pumping saturates below 1 for imperfect bases).
pub fn plan_rounds(
    proto: ProtocolId,
    input_state: BellDiagonalState,
    f_target: f64,
    max_rounds: usize,
) -> Result<PurificationSpec, YieldError> {
    if !f_target.is_finite() || f_target <= 0.5 || f_target >= 1.0 {
        return Err(YieldError::Domain {
            name: "f_target",
            value: f_target,
        });
    }
    let mut per_round = Vec::new();
    let mut state = input_state;
    while state.fidelity() < f_target {
        if per_round.len() == max_rounds {
            return Err(YieldError::TargetUnreachable {
                f_target,
                fidelity_reached: state.fidelity(),
                rounds: per_round.len(),
            });
        }
        let (success, next) = match proto {
            ProtocolId::Pumping(_) => pump_round(&state, &input_state)?,
            symmetric => (
                round_success_prob(symmetric, &state)?,
                round_output_fidelity(symmetric, &state)?,
            ),
        };
        if next.fidelity() <= state.fidelity() {
            return Err(YieldError::TargetUnreachable {
                f_target,
                fidelity_reached: state.fidelity(),
                rounds: per_round.len(),
            });
        }
        per_round.push(RoundStep {
            success,
            fidelity: next.fidelity(),
        });
        state = next;
    }
    Ok(PurificationSpec {
        proto,
        input_state,
        kappa: 2,
        f_target,
        rounds: per_round.len(),
        per_round,
    })
}

impl PurificationSpec {
    fn round_probs(&self) -> Vec<f64> {
        self.per_round.iter().map(|r| r.success).collect()
    }
}

impl YieldModel {
    /// The identity law `P(Y = x | X = x) = 1` (no purification).
    pub fn identity(x_max: usize) -> Self {
        let pmf: Vec<Vec<f64>> = (0..=x_max)
            .map(|x| {
                let mut row = vec![0.0; x + 1];
                row[x] = 1.0;
                row
            })
            .collect();
        let mean = (0..=x_max).map(|x| x as f64).collect();
        Self { x_max, pmf, mean }
    }

    fn from_pmf(pmf: Vec<Vec<f64>>) -> Result<Self, YieldError> {
        let x_max = pmf.len() - 1;
        for (x, row) in pmf.iter().enumerate() {
            debug_assert_eq!(row.len(), x + 1);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PMF_TOL {
                return Err(YieldError::RowNotNormalized { x, sum });
            }
        }
        let mean = pmf
            .iter()
            .map(|row| row.iter().enumerate().map(|(y, p)| y as f64 * p).sum())
            .collect();
        Ok(Self { x_max, pmf, mean })
    }

    pub fn x_max(&self) -> usize {
        self.x_max
    }

    /// Probability row for `X = x` (indices are `y = 0..=x`).
    pub fn row(&self, x: usize) -> &[f64] {
        &self.pmf[x]
    }

    pub fn prob(&self, x: usize, y: usize) -> f64 {
        if y < self.pmf[x].len() {
            self.pmf[x][y]
        } else {
            0.0
        }
    }

    pub fn mean(&self, x: usize) -> f64 {
        self.mean[x]
    }

    /// Samples `Y` given `X = x` by inverse CDF, consuming one uniform
    /// draw from `rng`.
    pub fn sample<R: Rng>(&self, x: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let row = &self.pmf[x];
        let mut acc = 0.0;
        for (y, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return y;
            }
        }
        row.len() - 1
    }
}

impl RenewalModel {
    /// `P(X̃ = i)`; zero beyond the truncation horizon.
    pub fn inter_prob(&self, i: usize) -> f64 {
        self.inter_pmf.get(i).copied().unwrap_or(0.0)
    }

    pub fn inter_pmf(&self) -> &[f64] {
        &self.inter_pmf
    }

    /// Whether a renewal can occur after exactly `i` consumed pairs.
    pub fn is_feasible(&self, i: usize) -> bool {
        self.feasible.get(i).copied().unwrap_or(false)
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }
}

/// Binomial pmf over `0..=n` successes with per-trial probability `r`.
pub(crate) fn binomial_pmf(n: usize, r: f64) -> Vec<f64> {
    if r >= 1.0 {
        let mut v = vec![0.0; n + 1];
        v[n] = 1.0;
        return v;
    }
    let mut v = Vec::with_capacity(n + 1);
    let mut term = (1.0 - r).powi(n as i32);
    v.push(term);
    for k in 1..=n {
        term *= (n - k + 1) as f64 / k as f64 * (r / (1.0 - r));
        v.push(term);
    }
    v
}

/// Yield law of a symmetric recurrence schedule.
///
/// Round `l` pairs the survivors of round `l−1` into groups of `κ`,
/// discards leftovers, and keeps each group with probability `r^(l)`:
/// a binomial over `⌊z/κ⌋` groups, iterated over the exact support of the
/// previous round. `L = 0` returns the identity law.
pub fn symmetric_yield(spec: &PurificationSpec, x_max: usize) -> Result<YieldModel, YieldError> {
    if matches!(spec.proto, ProtocolId::Pumping(_)) && spec.rounds > 0 {
        return Err(YieldError::NotSymmetric { proto: spec.proto });
    }
    if spec.rounds == 0 {
        return Ok(YieldModel::identity(x_max));
    }
    let probs = spec.round_probs();
    let kappa = spec.kappa;
    let mut pmf = Vec::with_capacity(x_max + 1);
    for x in 0..=x_max {
        // dist[z] = P(z survivors so far); starts as the point mass at x.
        let mut dist = vec![0.0; x + 1];
        dist[x] = 1.0;
        for &r in &probs {
            let mut next = vec![0.0; x + 1];
            for (z, &pz) in dist.iter().enumerate() {
                if pz == 0.0 {
                    continue;
                }
                let groups = z / kappa;
                for (y, &py) in binomial_pmf(groups, r).iter().enumerate() {
                    next[y] += pz * py;
                }
            }
            dist = next;
        }
        pmf.push(dist);
    }
    YieldModel::from_pmf(pmf)
}

/// Absorbing-chain pass over the pumping process.
///
/// States between pair consumptions: "no primary" or "primary has
/// completed ℓ rounds". Each consumed pair either becomes a fresh primary
/// or attempts round ℓ+1; failure discards the primary. Returns the
/// probability (and reachability) of the first renewal at each count.
fn renewal_first_passage(probs: &[f64], x_max: usize) -> (Vec<f64>, Vec<bool>) {
    let rounds = probs.len();
    let mut pmf = vec![0.0; x_max + 1];
    let mut feasible = vec![false; x_max + 1];
    let mut none = 1.0;
    let mut at = vec![0.0; rounds];
    let mut none_reach = true;
    let mut at_reach = vec![false; rounds];
    for i in 1..=x_max {
        let mut next_at = vec![0.0; rounds];
        let mut next_at_reach = vec![false; rounds];
        next_at[0] = none;
        next_at_reach[0] = none_reach;
        for l in 1..rounds {
            next_at[l] = at[l - 1] * probs[l - 1];
            next_at_reach[l] = at_reach[l - 1];
        }
        pmf[i] = at[rounds - 1] * probs[rounds - 1];
        feasible[i] = at_reach[rounds - 1];
        let mut next_none = 0.0;
        let mut next_none_reach = false;
        for l in 0..rounds {
            next_none += at[l] * (1.0 - probs[l]);
            // Failure is only possible when the round can actually fail.
            if at_reach[l] && probs[l] < 1.0 {
                next_none_reach = true;
            }
        }
        none = next_none;
        none_reach = next_none_reach;
        at = next_at;
        at_reach = next_at_reach;
    }
    (pmf, feasible)
}

/// Inter-occurrence law of entanglement pumping: the cost in raw pairs of
/// producing one output at the target fidelity.
pub fn pumping_inter_occurrence(
    spec: &PurificationSpec,
    x_max: usize,
) -> Result<RenewalModel, YieldError> {
    if !matches!(spec.proto, ProtocolId::Pumping(_)) {
        return Err(YieldError::NotPumping { proto: spec.proto });
    }
    if spec.rounds == 0 {
        return Err(YieldError::Domain {
            name: "rounds",
            value: 0.0,
        });
    }
    let (inter_pmf, feasible) = renewal_first_passage(&spec.round_probs(), x_max);
    Ok(RenewalModel {
        inter_pmf,
        feasible,
        rounds: spec.rounds,
    })
}

/// Yield law of entanglement pumping via renewal counting.
///
/// The pmf route convolves the inter-occurrence law (`P(Y=y|x)` is the
/// probability that `y` renewals fit in `x` pairs but `y+1` do not); the
/// mean route runs the renewal recursion directly. The two must agree
/// within [`PMF_TOL`] or construction fails.
pub fn pumping_yield(spec: &PurificationSpec, x_max: usize) -> Result<YieldModel, YieldError> {
    let renewal = pumping_inter_occurrence(spec, x_max)?;
    let inter = renewal.inter_pmf();

    // Mean route: E[Y|x] = Σ_i (1 + E[Y|x−i]) P(X̃=i).
    let mut mean = vec![0.0; x_max + 1];
    for x in (spec.rounds + 1)..=x_max {
        let mut e = 0.0;
        for i in 1..=x {
            let p = inter[i];
            if p > 0.0 {
                e += (1.0 + mean[x - i]) * p;
            }
        }
        mean[x] = e;
    }

    // Pmf route: P(Y ≥ y | x) = P(S̃_y ≤ x) with S̃_y the y-fold
    // convolution of X̃ (S̃_0 is the point mass at 0).
    let min_cost = spec.rounds + 1;
    let y_cap = x_max / min_cost;
    let mut tail = Vec::with_capacity(y_cap + 2);
    let mut s = vec![0.0; x_max + 1];
    s[0] = 1.0;
    tail.push(s.clone());
    for _ in 1..=y_cap + 1 {
        let mut next = vec![0.0; x_max + 1];
        for (i, &pi) in inter.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            for j in 0..=x_max.saturating_sub(i) {
                if s[j] > 0.0 {
                    next[i + j] += s[j] * pi;
                }
            }
        }
        tail.push(next.clone());
        s = next;
    }
    let cdf_at = |k: usize, x: usize| -> f64 {
        if k >= tail.len() {
            return 0.0;
        }
        tail[k][..=x].iter().sum()
    };
    let mut pmf = Vec::with_capacity(x_max + 1);
    for x in 0..=x_max {
        let mut row = vec![0.0; x + 1];
        for (y, v) in row.iter_mut().enumerate() {
            *v = (cdf_at(y, x) - cdf_at(y + 1, x)).max(0.0);
        }
        pmf.push(row);
    }
    let model = YieldModel::from_pmf(pmf)?;
    for (x, &m) in mean.iter().enumerate().take(x_max + 1) {
        if (model.mean(x) - m).abs() > PMF_TOL {
            return Err(YieldError::MeanMismatch {
                x,
                pmf_mean: model.mean(x),
                recursion_mean: m,
            });
        }
    }
    Ok(model)
}

/// Dispatches to the right yield law for `spec`.
pub fn yield_model(spec: &PurificationSpec, x_max: usize) -> Result<YieldModel, YieldError> {
    if spec.rounds == 0 {
        Ok(YieldModel::identity(x_max))
    } else if matches!(spec.proto, ProtocolId::Pumping(_)) {
        pumping_yield(spec, x_max)
    } else {
        symmetric_yield(spec, x_max)
    }
}

/// Procedurally simulates the purification schedule on `x` raw pairs and
/// returns the empirical yield pmf over `0..=x`.
///
/// Symmetric: per round, survivors are grouped `κ` at a time (leftovers
/// discarded) and each group survives with its round probability.
/// Pumping: pairs are consumed one by one, restarting on failure, exactly
/// as the renewal chain describes. Deterministic for a fixed seed.
pub fn monte_carlo_yield_oracle(
    spec: &PurificationSpec,
    x: usize,
    samples: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let probs = spec.round_probs();
    let mut counts = vec![0u64; x + 1];
    for _ in 0..samples {
        let y = match spec.proto {
            ProtocolId::Pumping(_) => {
                let mut outputs = 0usize;
                let mut progress: Option<usize> = None;
                for _ in 0..x {
                    match progress {
                        None => progress = Some(0),
                        Some(l) => {
                            if rng.random_bool(probs[l]) {
                                if l + 1 == spec.rounds {
                                    outputs += 1;
                                    progress = None;
                                } else {
                                    progress = Some(l + 1);
                                }
                            } else {
                                progress = None;
                            }
                        }
                    }
                }
                outputs
            }
            _ => {
                let mut survivors = x;
                for &r in &probs {
                    let groups = survivors / spec.kappa;
                    let mut kept = 0;
                    for _ in 0..groups {
                        if rng.random_bool(r) {
                            kept += 1;
                        }
                    }
                    survivors = kept;
                }
                survivors
            }
        };
        counts[y] += 1;
    }
    counts
        .into_iter()
        .map(|c| c as f64 / samples as f64)
        .collect()
}
