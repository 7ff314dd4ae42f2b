//! Slot-level simulation of the switch under max-weight scheduling.
//!
//! Each slot: requests arrive, links generate raw pairs, the scheduler
//! picks a swap schedule from the currently available pairs, and served
//! requests depart. Under purify-then-swap (PS) the link counts are
//! first pushed through the purification yield and each scheduled swap
//! succeeds with probability `q_ij`; under swap-then-purify (SP) raw
//! pairs are swapped first (`B ~ Binomial(S, q)`) and the purification
//! yield maps `B` to departures. The noise-less baseline is PS with the
//! identity yield.
//!
//! Arrivals enqueue before scheduling, so slot-`n` arrivals are
//! servable in slot `n`: `Q(n+1) = Q(n) + A(n) - D(n)` with
//! `D(n) ≤ Q(n) + A(n)`. Link pairs live for a single slot; leftovers
//! expire.
//!
//! [`estimate_stability`] runs independent replicas and applies a fixed
//! verdict rule to the fitted queue-growth slope, giving an empirical
//! check that max-weight stabilizes every rate point inside the
//! capacity region.

use crate::capacity::{enumerate_schedules, CapacityError, Schedule, ServiceFunction};
use crate::link::{LinkParams, SwapMatrix};
use crate::purify::YieldModel;
use crate::{pairs, par};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::Serialize;
use std::collections::HashMap;
use std::rc::Rc;
use thiserror::Error;

/// Median replica slope below this is condition (a) for "bounded".
pub const SLOPE_BOUNDED: f64 = 1e-3;
/// Median replica slope above this is "unbounded".
pub const SLOPE_UNBOUNDED: f64 = 1e-2;
/// Condition (b) for "bounded": tail mean queue below this multiple of
/// the per-slot arrival mean.
pub const TAIL_QUEUE_FACTOR: f64 = 50.0;
/// Schedule enumeration cap per state; the per-slot search fails loudly
/// rather than degrade.
pub const SCHEDULE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error("{name} out of range: {value}")]
    Domain { name: &'static str, value: f64 },
    #[error("{name} has length {got}, expected {expected}")]
    BadLength {
        name: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("model shape: {reason}")]
    ModelShape { reason: &'static str },
    #[error("instance too large for exact max-weight search: k={k}, alpha_max={alpha_max}")]
    TooLarge { k: usize, alpha_max: usize },
}

/// How request arrivals are drawn each slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ArrivalProcess {
    /// Independent Poisson(λ_ij) per pair per slot.
    Poisson,
    /// Deterministic batches: accumulate λ_ij of credit per slot and
    /// release the integer part. Same mean, zero variance; for tests.
    Deterministic,
}

/// Which pipeline the simulated switch runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimArchitecture {
    NoiseLess,
    PurifySwap,
    SwapPurify,
}

/// Immutable simulation model: link parameters, swap probabilities, and
/// the architecture-specific yield/service data. Shareable across
/// replica threads.
#[derive(Debug, Clone)]
pub struct SimModel {
    architecture: SimArchitecture,
    params: LinkParams,
    swap: SwapMatrix,
    ym: Option<YieldModel>,
    tables: Option<Vec<ServiceFunction>>,
}

impl SimModel {
    pub fn noise_less(params: LinkParams, swap: SwapMatrix) -> Result<Self, SimError> {
        Self::build(SimArchitecture::NoiseLess, params, swap, None, None)
    }

    pub fn purify_swap(
        params: LinkParams,
        swap: SwapMatrix,
        ym: YieldModel,
    ) -> Result<Self, SimError> {
        Self::build(SimArchitecture::PurifySwap, params, swap, Some(ym), None)
    }

    pub fn swap_purify(
        params: LinkParams,
        swap: SwapMatrix,
        ym: YieldModel,
        tables: Vec<ServiceFunction>,
    ) -> Result<Self, SimError> {
        Self::build(
            SimArchitecture::SwapPurify,
            params,
            swap,
            Some(ym),
            Some(tables),
        )
    }

    fn build(
        architecture: SimArchitecture,
        params: LinkParams,
        swap: SwapMatrix,
        ym: Option<YieldModel>,
        tables: Option<Vec<ServiceFunction>>,
    ) -> Result<Self, SimError> {
        params.validate().map_err(|_| SimError::ModelShape {
            reason: "invalid link parameters",
        })?;
        if params.k > 5 || params.alpha_max > 10 {
            return Err(SimError::TooLarge {
                k: params.k,
                alpha_max: params.alpha_max,
            });
        }
        if swap.k() != params.k {
            return Err(SimError::BadLength {
                name: "swap",
                expected: params.k,
                got: swap.k(),
            });
        }
        if let Some(ym) = &ym {
            if ym.x_max() < params.alpha_max {
                return Err(SimError::ModelShape {
                    reason: "yield table shorter than alpha_max",
                });
            }
        }
        if let Some(tables) = &tables {
            if tables.len() != pairs::pair_count(params.k) {
                return Err(SimError::BadLength {
                    name: "tables",
                    expected: pairs::pair_count(params.k),
                    got: tables.len(),
                });
            }
            if tables.iter().any(|t| t.pi_max() < params.alpha_max) {
                return Err(SimError::ModelShape {
                    reason: "service table shorter than alpha_max",
                });
            }
        }
        Ok(Self {
            architecture,
            params,
            swap,
            ym,
            tables,
        })
    }

    pub fn architecture(&self) -> SimArchitecture {
        self.architecture
    }

    pub fn k(&self) -> usize {
        self.params.k
    }

    pub fn pair_count(&self) -> usize {
        pairs::pair_count(self.params.k)
    }
}

/// Independent Poisson arrivals for one slot, in pair order.
pub fn draw_arrivals<R: Rng>(rates: &[f64], rng: &mut R) -> Vec<u32> {
    rates
        .iter()
        .map(|&lam| {
            if lam <= 0.0 {
                0
            } else {
                let d = Poisson::new(lam).expect("positive finite rate");
                d.sample(rng) as u32
            }
        })
        .collect()
}

/// Exact max-weight schedule for the PS pipeline: maximize
/// `Σ π_ij q_ij Q_ij` over schedules feasible for `avail`.
pub fn mw_ps_schedule(
    avail: &[usize],
    queues: &[u32],
    swap: &SwapMatrix,
) -> Result<Schedule, SimError> {
    let k = avail.len();
    best_schedule(avail, |s| {
        s.pair_counts()
            .iter()
            .zip(swap.pair_values())
            .zip(queues)
            .map(|((&pi, &q), &qu)| pi as f64 * q * qu as f64)
            .sum()
    })
    .map(|s| s.unwrap_or_else(|| Schedule::new(k)))
}

/// Exact max-weight schedule for the SP pipeline: maximize
/// `Σ Ĥ_ij(π_ij) Q_ij` over schedules feasible for `avail`.
pub fn mw_sp_schedule(
    avail: &[usize],
    queues: &[u32],
    tables: &[ServiceFunction],
) -> Result<Schedule, SimError> {
    let k = avail.len();
    best_schedule(avail, |s| {
        s.pair_counts()
            .iter()
            .zip(tables)
            .zip(queues)
            .map(|((&pi, t), &qu)| t.get(pi as usize) * qu as f64)
            .sum()
    })
    .map(|s| s.unwrap_or_else(|| Schedule::new(k)))
}

/// Argmax over maximal schedules; sufficient because both weight
/// functions are componentwise nondecreasing in π. Ties resolve to the
/// lexicographically smallest schedule (the enumeration order).
fn best_schedule(
    avail: &[usize],
    weight: impl Fn(&Schedule) -> f64,
) -> Result<Option<Schedule>, SimError> {
    let candidates = enumerate_schedules(avail, true, SCHEDULE_CAP)?;
    let mut best: Option<(f64, Schedule)> = None;
    for s in candidates {
        let w = weight(&s);
        match &best {
            Some((bw, _)) if w <= *bw => {}
            _ => best = Some((w, s)),
        }
    }
    Ok(best.map(|(_, s)| s))
}

/// Mutable per-run simulation state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotState {
    pub n: u64,
    /// Pending requests per unordered pair.
    pub queues: Vec<u32>,
    /// Fractional arrival credit (deterministic arrivals only).
    credit: Vec<f64>,
}

/// Full record of one slot, in draw order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotTrace {
    pub n: u64,
    pub arrivals: Vec<u32>,
    /// Raw link counts T, in link order.
    pub counts: Vec<u32>,
    /// Purified counts (PS only).
    pub purified_counts: Option<Vec<u32>>,
    /// Chosen schedule, flat pair order.
    pub schedule: Vec<u32>,
    /// Swaps actually performed: `min(schedule, queue)` per pair.
    pub swaps: Vec<u32>,
    /// Successful swaps (SP: `B ~ Binomial(swaps, q)`; PS/NL: equals
    /// departures).
    pub successes: Vec<u32>,
    pub departures: Vec<u32>,
    pub queues_after: Vec<u32>,
}

/// One sequential simulation run: owns its state, RNG stream, and
/// schedule cache.
pub struct Simulation<'m> {
    model: &'m SimModel,
    rates: Vec<f64>,
    mode: ArrivalProcess,
    state: SlotState,
    rng: ChaCha12Rng,
    count_dists: Vec<Binomial>,
    cache: ScheduleCache,
}

struct ScheduleCache {
    map: HashMap<Vec<usize>, (u64, Rc<Vec<Schedule>>)>,
    capacity: usize,
    tick: u64,
}

impl ScheduleCache {
    fn new(capacity: usize) -> Self {
        Self {
            map: HashMap::new(),
            capacity,
            tick: 0,
        }
    }

    fn get(&mut self, a: &[usize]) -> Result<Rc<Vec<Schedule>>, SimError> {
        self.tick += 1;
        if let Some((stamp, cached)) = self.map.get_mut(a) {
            *stamp = self.tick;
            return Ok(Rc::clone(cached));
        }
        let computed = Rc::new(enumerate_schedules(a, true, SCHEDULE_CAP)?);
        if self.map.len() >= self.capacity {
            // Evict the least recently used entry.
            if let Some(key) = self
                .map
                .iter()
                .min_by_key(|(_, (stamp, _))| *stamp)
                .map(|(k, _)| k.clone())
            {
                self.map.remove(&key);
            }
        }
        self.map.insert(a.to_vec(), (self.tick, Rc::clone(&computed)));
        Ok(computed)
    }
}

impl<'m> Simulation<'m> {
    pub fn new(
        model: &'m SimModel,
        rates: &[f64],
        mode: ArrivalProcess,
        seed: u64,
    ) -> Result<Self, SimError> {
        let np = model.pair_count();
        if rates.len() != np {
            return Err(SimError::BadLength {
                name: "rates",
                expected: np,
                got: rates.len(),
            });
        }
        for &r in rates {
            if !r.is_finite() || r < 0.0 {
                return Err(SimError::Domain {
                    name: "rates",
                    value: r,
                });
            }
        }
        let count_dists = model
            .params
            .p
            .iter()
            .map(|&p| Binomial::new(model.params.alpha_max as u64, p).expect("valid p"))
            .collect();
        Ok(Self {
            model,
            rates: rates.to_vec(),
            mode,
            state: SlotState {
                n: 0,
                queues: vec![0; np],
                credit: vec![0.0; np],
            },
            rng: ChaCha12Rng::seed_from_u64(seed),
            count_dists,
            cache: ScheduleCache::new(4096),
        })
    }

    pub fn state(&self) -> &SlotState {
        &self.state
    }

    /// Advances one slot. Draw order is fixed for reproducibility:
    /// arrivals (pair order), raw counts (link order), PS purification
    /// samples (link order), swap/purification outcomes (pair order).
    pub fn run_slot(&mut self) -> Result<SlotTrace, SimError> {
        let model = self.model;
        let np = model.pair_count();
        let n = self.state.n;

        let arrivals: Vec<u32> = match self.mode {
            ArrivalProcess::Poisson => draw_arrivals(&self.rates, &mut self.rng),
            ArrivalProcess::Deterministic => self
                .rates
                .iter()
                .zip(&mut self.state.credit)
                .map(|(&lam, credit)| {
                    *credit += lam;
                    let batch = credit.floor();
                    *credit -= batch;
                    batch as u32
                })
                .collect(),
        };
        let queues_eff: Vec<u32> = self
            .state
            .queues
            .iter()
            .zip(&arrivals)
            .map(|(&q, &a)| q + a)
            .collect();

        let counts: Vec<u32> = self
            .count_dists
            .iter()
            .map(|d| d.sample(&mut self.rng) as u32)
            .collect();

        let purified_counts: Option<Vec<u32>> = match model.architecture {
            SimArchitecture::PurifySwap => {
                let ym = model.ym.as_ref().expect("PS has a yield table");
                Some(
                    counts
                        .iter()
                        .map(|&t| ym.sample(t as usize, &mut self.rng) as u32)
                        .collect(),
                )
            }
            _ => None,
        };
        let avail: Vec<usize> = purified_counts
            .as_ref()
            .unwrap_or(&counts)
            .iter()
            .map(|&c| c as usize)
            .collect();

        let schedule = {
            let candidates = self.cache.get(&avail)?;
            let swap = &model.swap;
            let tables = model.tables.as_deref();
            let weight = |s: &Schedule| -> f64 {
                s.pair_counts()
                    .iter()
                    .enumerate()
                    .map(|(ij, &pi)| {
                        let service = match tables {
                            Some(t) => t[ij].get(pi as usize),
                            None => swap.pair_values()[ij] * pi as f64,
                        };
                        service * queues_eff[ij] as f64
                    })
                    .sum()
            };
            let mut best: Option<(f64, &Schedule)> = None;
            for s in candidates.iter() {
                let w = weight(s);
                match &best {
                    Some((bw, _)) if w <= *bw => {}
                    _ => best = Some((w, s)),
                }
            }
            best.map(|(_, s)| s.clone())
                .unwrap_or_else(|| Schedule::new(model.k()))
        };

        let swaps: Vec<u32> = schedule
            .pair_counts()
            .iter()
            .zip(&queues_eff)
            .map(|(&pi, &q)| pi.min(q))
            .collect();

        let (successes, departures) = match model.architecture {
            SimArchitecture::SwapPurify => {
                let ym = model.ym.as_ref().expect("SP has a yield table");
                let successes: Vec<u32> = swaps
                    .iter()
                    .enumerate()
                    .map(|(ij, &s)| {
                        let q = model.swap.pair_values()[ij];
                        Binomial::new(s as u64, q)
                            .expect("valid q")
                            .sample(&mut self.rng) as u32
                    })
                    .collect();
                let departures: Vec<u32> = successes
                    .iter()
                    .map(|&b| ym.sample(b as usize, &mut self.rng) as u32)
                    .collect();
                (successes, departures)
            }
            _ => {
                let departures: Vec<u32> = swaps
                    .iter()
                    .enumerate()
                    .map(|(ij, &s)| {
                        let q = model.swap.pair_values()[ij];
                        Binomial::new(s as u64, q)
                            .expect("valid q")
                            .sample(&mut self.rng) as u32
                    })
                    .collect();
                (departures.clone(), departures)
            }
        };

        for ij in 0..np {
            self.state.queues[ij] = queues_eff[ij] - departures[ij];
        }
        self.state.n = n + 1;

        Ok(SlotTrace {
            n,
            arrivals,
            counts,
            purified_counts,
            schedule: schedule.pair_counts().to_vec(),
            swaps,
            successes,
            departures,
            queues_after: self.state.queues.clone(),
        })
    }
}

/// Totals of one finished replica.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaRun {
    pub seed: u64,
    /// Total queue length after each slot.
    pub queue_totals: Vec<u64>,
    pub cumulative_arrivals: Vec<u64>,
    pub cumulative_departures: Vec<u64>,
    pub final_queues: Vec<u32>,
    /// Per-slot records, when requested.
    pub trace: Option<Vec<SlotTrace>>,
}

/// Runs one replica for `horizon` slots.
pub fn run_replica(
    model: &SimModel,
    rates: &[f64],
    horizon: u64,
    seed: u64,
    mode: ArrivalProcess,
    record_trace: bool,
) -> Result<ReplicaRun, SimError> {
    let mut sim = Simulation::new(model, rates, mode, seed)?;
    let np = model.pair_count();
    let mut queue_totals = Vec::with_capacity(horizon as usize);
    let mut cumulative_arrivals = vec![0u64; np];
    let mut cumulative_departures = vec![0u64; np];
    let mut trace = record_trace.then(Vec::new);
    for _ in 0..horizon {
        let t = sim.run_slot()?;
        for ij in 0..np {
            cumulative_arrivals[ij] += t.arrivals[ij] as u64;
            cumulative_departures[ij] += t.departures[ij] as u64;
        }
        queue_totals.push(t.queues_after.iter().map(|&q| q as u64).sum());
        if let Some(tr) = &mut trace {
            tr.push(t);
        }
    }
    Ok(ReplicaRun {
        seed,
        queue_totals,
        cumulative_arrivals,
        cumulative_departures,
        final_queues: sim.state.queues.clone(),
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Bounded,
    Unbounded,
    Inconclusive,
}

/// Verdict plus the evidence it was derived from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub verdict: Verdict,
    /// Fitted queue growth per slot, one per replica.
    pub slopes: Vec<f64>,
    pub median_slope: f64,
    /// Mean total queue over the tail window, one per replica.
    pub tail_means: Vec<f64>,
    pub median_tail_mean: f64,
    pub total_rate: f64,
    pub horizon: u64,
    pub replicas: usize,
    pub base_seed: u64,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Least-squares slope of `y` against slot index.
fn fitted_slope(y: &[u64]) -> f64 {
    let n = y.len() as f64;
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = y.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &v) in y.iter().enumerate() {
        let dx = i as f64 - x_mean;
        num += dx * (v as f64 - y_mean);
        den += dx * dx;
    }
    num / den
}

/// Empirical stability estimate over independent replicas.
///
/// The slope is fitted and the tail mean taken over the second half of
/// the horizon. Verdict: bounded iff the median slope is below
/// [`SLOPE_BOUNDED`] and the median tail mean stays under
/// [`TAIL_QUEUE_FACTOR`] times the per-slot arrival mean; unbounded iff
/// the median slope exceeds [`SLOPE_UNBOUNDED`]; inconclusive between.
pub fn estimate_stability(
    model: &SimModel,
    rates: &[f64],
    horizon: u64,
    replicas: usize,
    base_seed: u64,
    mode: ArrivalProcess,
) -> Result<StabilityReport, SimError> {
    if horizon < 10_000 {
        return Err(SimError::Domain {
            name: "horizon",
            value: horizon as f64,
        });
    }
    if replicas < 3 {
        return Err(SimError::Domain {
            name: "replicas",
            value: replicas as f64,
        });
    }
    let seeds: Vec<u64> = (0..replicas).map(|i| base_seed + i as u64).collect();
    let runs = par::map(&seeds, |&seed| {
        run_replica(model, rates, horizon, seed, mode, false)
    });
    let mut slopes = Vec::with_capacity(replicas);
    let mut tail_means = Vec::with_capacity(replicas);
    for run in runs {
        let run = run?;
        let tail = &run.queue_totals[run.queue_totals.len() / 2..];
        slopes.push(fitted_slope(tail));
        tail_means.push(tail.iter().map(|&v| v as f64).sum::<f64>() / tail.len() as f64);
    }
    let median_slope = median(&slopes);
    let median_tail_mean = median(&tail_means);
    let total_rate: f64 = rates.iter().sum();
    let verdict = if median_slope < SLOPE_BOUNDED
        && median_tail_mean < TAIL_QUEUE_FACTOR * total_rate + 1e-9
    {
        Verdict::Bounded
    } else if median_slope > SLOPE_UNBOUNDED {
        Verdict::Unbounded
    } else {
        Verdict::Inconclusive
    };
    Ok(StabilityReport {
        verdict,
        slopes,
        median_slope,
        tail_means,
        median_tail_mean,
        total_rate,
        horizon,
        replicas,
        base_seed,
    })
}
