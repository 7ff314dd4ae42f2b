//! Capacity regions of the switch and the LPs that trace them.
//!
//! A slot gives the switch a random count vector `a` of available pairs
//! per link. A schedule `π` assigns swap operations to user pairs
//! subject to `Σ_i π_ij ≤ a_j`. A long-run policy is a fraction
//! `b_{a,π}` of time spent on each schedule in each state, and a rate
//! point `λ` is achievable when every pair's demand is covered by its
//! expected service:
//!
//! ```text
//!   λ_ij ≤ Σ_a P(a) Σ_π b_{a,π} · s_ij(π)
//! ```
//!
//! The service rate `s_ij` depends on the architecture: with
//! purify-then-swap (PS) the counts are purified, so `s_ij = q_ij π_ij`
//! on the purified law; with swap-then-purify (SP) the raw counts are
//! swapped first and the yield is folded into `s_ij = Ĥ_ij(π_ij)` on the
//! raw law; the noise-less baseline is `q_ij π_ij` on the raw law.
//!
//! [`capacity_boundary`] maximizes `λ` along a weight direction,
//! [`membership`] tests a given rate point, [`boundary_sweep`] traces
//! the two-pair boundary used in reports. Reported certificates are
//! cleaned so that they satisfy every constraint by construction;
//! [`certificate_violation`] re-checks them from scratch.

use crate::link::{CountLaw, SwapMatrix};
use crate::numfmt::format_sig;
use crate::purify::{binomial_pmf, YieldModel};
use crate::{pairs, par};
use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};
use serde::Serialize;
use thiserror::Error;

/// Feasibility tolerance for all LP-derived comparisons.
pub const LP_TOL: f64 = 1e-9;
/// Default bound on generated LP columns (state, schedule) pairs.
pub const DEFAULT_COLUMN_CAP: usize = 1_000_000;
/// Default joint-probability cutoff for state enumeration.
pub const DEFAULT_P_CUT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CapacityError {
    #[error("{name} out of range: {value}")]
    Domain { name: &'static str, value: f64 },
    #[error("{name} has length {got}, expected {expected}")]
    BadLength {
        name: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("all weights are zero")]
    ZeroWeights,
    #[error("schedule/column count exceeds cap {cap}")]
    ColumnCapExceeded { cap: usize },
    #[error("service table covers pi <= {pi_max}, need {needed}")]
    TableTooShort { pi_max: usize, needed: usize },
    #[error("solver failed: {status}")]
    Solver { status: String },
}

/// Integer swap schedule over unordered user pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Schedule {
    k: usize,
    pi: Vec<u32>,
}

impl Schedule {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            pi: vec![0; pairs::pair_count(k)],
        }
    }

    pub fn from_pair_entries(k: usize, entries: &[(usize, usize, u32)]) -> Self {
        let mut s = Self::new(k);
        for &(i, j, v) in entries {
            s.pi[pairs::pair_index(k, i, j)] = v;
        }
        s
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.pi[pairs::pair_index(self.k, i, j)]
    }

    /// Flat per-pair counts in [`pairs`] order.
    pub fn pair_counts(&self) -> &[u32] {
        &self.pi
    }

    pub fn total(&self) -> u32 {
        self.pi.iter().sum()
    }

    /// Pairs consumed on user `j`'s link: `Σ_i π_ij`.
    pub fn load(&self, j: usize) -> u32 {
        pairs::pairs(self.k)
            .zip(&self.pi)
            .filter(|((i, l), _)| *i == j || *l == j)
            .map(|(_, &v)| v)
            .sum()
    }

    pub fn is_feasible(&self, a: &[usize]) -> bool {
        (0..self.k).all(|j| self.load(j) as usize <= a[j])
    }

    /// No single swap can be added without violating feasibility.
    pub fn is_maximal(&self, a: &[usize]) -> bool {
        let loads: Vec<usize> = (0..self.k).map(|j| self.load(j) as usize).collect();
        pairs::pairs(self.k).all(|(i, j)| loads[i] >= a[i] || loads[j] >= a[j])
    }
}

/// All feasible schedules for count vector `a`, in lexicographic order
/// of the flat pair counts; optionally only the Pareto-maximal ones.
///
/// Errors if more than `cap` schedules would be returned.
pub fn enumerate_schedules(
    a: &[usize],
    maximal_only: bool,
    cap: usize,
) -> Result<Vec<Schedule>, CapacityError> {
    let k = a.len();
    let pair_list: Vec<(usize, usize)> = pairs::pairs(k).collect();
    let mut rem: Vec<usize> = a.to_vec();
    let mut cur = vec![0u32; pair_list.len()];
    let mut out = Vec::new();

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        t: usize,
        pair_list: &[(usize, usize)],
        rem: &mut [usize],
        cur: &mut [u32],
        maximal_only: bool,
        cap: usize,
        out: &mut Vec<Schedule>,
        k: usize,
    ) -> Result<(), CapacityError> {
        if t == pair_list.len() {
            if !maximal_only || pair_list.iter().all(|&(i, j)| rem[i] == 0 || rem[j] == 0) {
                if out.len() == cap {
                    return Err(CapacityError::ColumnCapExceeded { cap });
                }
                out.push(Schedule {
                    k,
                    pi: cur.to_vec(),
                });
            }
            return Ok(());
        }
        let (i, j) = pair_list[t];
        let vmax = rem[i].min(rem[j]);
        for v in 0..=vmax {
            cur[t] = v as u32;
            rem[i] -= v;
            rem[j] -= v;
            let r = dfs(t + 1, pair_list, rem, cur, maximal_only, cap, out, k);
            rem[i] += v;
            rem[j] += v;
            cur[t] = 0;
            r?;
        }
        Ok(())
    }

    dfs(
        0,
        &pair_list,
        &mut rem,
        &mut cur,
        maximal_only,
        cap,
        &mut out,
        k,
    )?;
    Ok(out)
}

/// Expected purified output per scheduled swap count on one pair:
/// `Ĥ(π) = Σ_l E[Y|X=l] C(π,l) q^l (1-q)^{π-l}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceFunction {
    table: Vec<f64>,
}

impl ServiceFunction {
    pub fn get(&self, pi: usize) -> f64 {
        self.table[pi]
    }

    pub fn pi_max(&self) -> usize {
        self.table.len() - 1
    }
}

/// Builds the swap-then-purify service table for one pair.
pub fn service_function(
    ym: &YieldModel,
    q: f64,
    pi_max: usize,
) -> Result<ServiceFunction, CapacityError> {
    if !q.is_finite() || q <= 0.0 || q > 1.0 {
        return Err(CapacityError::Domain {
            name: "q",
            value: q,
        });
    }
    if ym.x_max() < pi_max {
        return Err(CapacityError::TableTooShort {
            pi_max: ym.x_max(),
            needed: pi_max,
        });
    }
    let table: Vec<f64> = (0..=pi_max)
        .map(|pi| {
            binomial_pmf(pi, q)
                .iter()
                .enumerate()
                .map(|(l, &pl)| pl * ym.mean(l))
                .sum()
        })
        .collect();
    debug_assert!(table[0] == 0.0);
    debug_assert!(table.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    Ok(ServiceFunction { table })
}

/// Which point of the pipeline purifies, fixing both the count law the
/// scheduler sees and the per-swap service rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Architecture {
    /// Raw counts, perfect pairs: scheduling-only upper bound.
    NoiseLess,
    /// Purify links first, then swap: PS.
    PurifySwap,
    /// Swap raw pairs first, then purify: SP.
    SwapPurify,
}

impl Architecture {
    pub fn label(&self) -> &'static str {
        match self {
            Architecture::NoiseLess => "NoiseLess",
            Architecture::PurifySwap => "PS",
            Architecture::SwapPurify => "SP",
        }
    }
}

/// Everything the LPs need: the count law the scheduler observes, swap
/// probabilities, and (for SP) per-pair service tables.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityModel {
    architecture: Architecture,
    law: CountLaw,
    swap: SwapMatrix,
    tables: Option<Vec<ServiceFunction>>,
}

impl CapacityModel {
    pub fn noise_less(raw: CountLaw, swap: SwapMatrix) -> Result<Self, CapacityError> {
        Self::linear(Architecture::NoiseLess, raw, swap)
    }

    /// PS: the scheduler sees purified counts; each swap succeeds with
    /// `q_ij`.
    pub fn purify_swap(purified: CountLaw, swap: SwapMatrix) -> Result<Self, CapacityError> {
        Self::linear(Architecture::PurifySwap, purified, swap)
    }

    fn linear(
        architecture: Architecture,
        law: CountLaw,
        swap: SwapMatrix,
    ) -> Result<Self, CapacityError> {
        if law.k() != swap.k() {
            return Err(CapacityError::BadLength {
                name: "swap",
                expected: law.k(),
                got: swap.k(),
            });
        }
        Ok(Self {
            architecture,
            law,
            swap,
            tables: None,
        })
    }

    /// SP: the scheduler sees raw counts; service folds swap success and
    /// purification yield into per-pair tables.
    pub fn swap_purify(
        raw: CountLaw,
        swap: SwapMatrix,
        tables: Vec<ServiceFunction>,
    ) -> Result<Self, CapacityError> {
        let mut model = Self::linear(Architecture::SwapPurify, raw, swap)?;
        if tables.len() != pairs::pair_count(model.law.k()) {
            return Err(CapacityError::BadLength {
                name: "tables",
                expected: pairs::pair_count(model.law.k()),
                got: tables.len(),
            });
        }
        let needed = model.law.alpha_max();
        for t in &tables {
            if t.pi_max() < needed {
                return Err(CapacityError::TableTooShort {
                    pi_max: t.pi_max(),
                    needed,
                });
            }
        }
        model.tables = Some(tables);
        Ok(model)
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn k(&self) -> usize {
        self.law.k()
    }

    pub fn law(&self) -> &CountLaw {
        &self.law
    }

    pub fn swap(&self) -> &SwapMatrix {
        &self.swap
    }

    /// Expected end-to-end pairs delivered to pair `pair_idx` when the
    /// schedule assigns it `pi` swaps.
    pub fn service(&self, pair_idx: usize, pi: u32) -> f64 {
        match &self.tables {
            Some(tables) => tables[pair_idx].get(pi as usize),
            None => self.swap.pair_values()[pair_idx] * pi as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityOptions {
    pub p_cut: f64,
    pub column_cap: usize,
    /// Restrict columns to maximal schedules (sound for monotone
    /// service; the full set is kept available as a test oracle).
    pub maximal_only: bool,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        Self {
            p_cut: DEFAULT_P_CUT,
            column_cap: DEFAULT_COLUMN_CAP,
            maximal_only: true,
        }
    }
}

/// One time-sharing certificate entry: spend `fraction` of slots in
/// `state` running `schedule`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActiveColumn {
    pub state: Vec<usize>,
    pub schedule: Schedule,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityResult {
    /// Verified boundary value along the weight direction.
    pub lambda_star: f64,
    /// Normalized weights (sum 1).
    pub weights: Vec<f64>,
    /// The boundary rate point `weights * lambda_star`.
    pub rates: Vec<f64>,
    pub active_columns: Vec<ActiveColumn>,
    /// |solver objective - verified lambda_star|.
    pub objective_gap: f64,
    /// Joint probability mass dropped by the `p_cut` state cutoff.
    pub trimmed_mass: f64,
    pub solver_status: String,
}

/// Maximizes `λ` such that the rate point `weights · λ` is achievable.
///
/// The returned `lambda_star` is recomputed from the cleaned certificate
/// (clip to `[0,1]`, rescale any state over-allocation, take the
/// binding ratio), so the certificate covers `weights · lambda_star` by
/// construction; `objective_gap` records the distance to the raw solver
/// optimum.
pub fn capacity_boundary(
    weights: &[f64],
    model: &CapacityModel,
    opts: &CapacityOptions,
) -> Result<CapacityResult, CapacityError> {
    let np = pairs::pair_count(model.k());
    if weights.len() != np {
        return Err(CapacityError::BadLength {
            name: "weights",
            expected: np,
            got: weights.len(),
        });
    }
    for &w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(CapacityError::Domain {
                name: "weights",
                value: w,
            });
        }
    }
    let wsum: f64 = weights.iter().sum();
    if wsum <= 0.0 {
        return Err(CapacityError::ZeroWeights);
    }
    let w: Vec<f64> = weights.iter().map(|x| x / wsum).collect();

    // Columns: per retained state, its schedule set and probability.
    let mut states: Vec<(Vec<usize>, f64, Vec<Schedule>)> = Vec::new();
    let mut kept_mass = 0.0;
    let mut n_columns = 0usize;
    for (a, pa) in model.law.states(opts.p_cut) {
        kept_mass += pa;
        let scheds = enumerate_schedules(&a, opts.maximal_only, opts.column_cap)?;
        let scheds: Vec<Schedule> = scheds.into_iter().filter(|s| s.total() > 0).collect();
        if scheds.is_empty() {
            continue;
        }
        n_columns += scheds.len();
        if n_columns > opts.column_cap {
            return Err(CapacityError::ColumnCapExceeded {
                cap: opts.column_cap,
            });
        }
        states.push((a, pa, scheds));
    }
    let trimmed_mass = (1.0 - kept_mass).max(0.0);

    // LP: max λ  s.t.  w_ij λ − Σ P(a) s_ij(π) b_{a,π} ≤ 0  (w_ij > 0),
    //                  Σ_π b_{a,π} ≤ 1 per state,  b ∈ [0,1].
    let mut pb = Problem::new(OptimizationDirection::Maximize);
    let lam = pb.add_var(1.0, (0.0, f64::INFINITY));
    let mut pair_rows: Vec<Vec<(microlp::Variable, f64)>> = (0..np)
        .map(|ij| if w[ij] > 0.0 { vec![(lam, w[ij])] } else { vec![] })
        .collect();
    let mut col_vars: Vec<Vec<microlp::Variable>> = Vec::with_capacity(states.len());
    for (_, pa, scheds) in &states {
        let mut state_row = Vec::with_capacity(scheds.len());
        let mut vars = Vec::with_capacity(scheds.len());
        for sched in scheds {
            let v = pb.add_var(0.0, (0.0, 1.0));
            state_row.push((v, 1.0));
            vars.push(v);
            for (ij, row) in pair_rows.iter_mut().enumerate() {
                if w[ij] > 0.0 {
                    let s = model.service(ij, sched.pair_counts()[ij]);
                    if s != 0.0 {
                        row.push((v, -pa * s));
                    }
                }
            }
        }
        pb.add_constraint(&state_row, ComparisonOp::Le, 1.0);
        col_vars.push(vars);
    }
    for (ij, row) in pair_rows.into_iter().enumerate() {
        if w[ij] > 0.0 {
            pb.add_constraint(&row, ComparisonOp::Le, 0.0);
        }
    }

    let outcome = pb.solve().map_err(|e| CapacityError::Solver {
        status: format!("{e:?}"),
    })?;
    let sol = match outcome {
        SolveOutcome::Solution(s) => s,
        SolveOutcome::Interrupted(_) => {
            return Err(CapacityError::Solver {
                status: "interrupted".to_string(),
            })
        }
    };
    let lambda_lp = sol.objective();
    let solver_status = format!("{:?}", sol.status());

    // Clean the certificate so feasibility holds by construction.
    let mut active_columns = Vec::new();
    let mut service = vec![0.0; np];
    for ((a, pa, scheds), vars) in states.iter().zip(&col_vars) {
        let mut b: Vec<f64> = vars
            .iter()
            .map(|&v| sol.var_value(v).clamp(0.0, 1.0))
            .collect();
        let total: f64 = b.iter().sum();
        if total > 1.0 {
            for x in &mut b {
                *x /= total;
            }
        }
        for (sched, &frac) in scheds.iter().zip(&b) {
            if frac > 1e-12 {
                for (ij, s) in service.iter_mut().enumerate() {
                    *s += pa * model.service(ij, sched.pair_counts()[ij]) * frac;
                }
                active_columns.push(ActiveColumn {
                    state: a.clone(),
                    schedule: sched.clone(),
                    fraction: frac,
                });
            }
        }
    }
    let lambda_star = w
        .iter()
        .zip(&service)
        .filter(|(&wij, _)| wij > 0.0)
        .map(|(&wij, &sij)| sij / wij)
        .fold(f64::INFINITY, f64::min);
    let lambda_star = if lambda_star.is_finite() {
        lambda_star.max(0.0)
    } else {
        0.0
    };
    let rates = w.iter().map(|&wij| wij * lambda_star).collect();
    Ok(CapacityResult {
        lambda_star,
        weights: w,
        rates,
        active_columns,
        objective_gap: (lambda_lp - lambda_star).abs(),
        trimmed_mass,
        solver_status,
    })
}

/// Re-derives every LP constraint from a result's certificate and
/// returns the worst violation (≤ 0 means fully feasible).
pub fn certificate_violation(model: &CapacityModel, result: &CapacityResult) -> f64 {
    let np = pairs::pair_count(model.k());
    let mut worst = f64::NEG_INFINITY;
    let mut service = vec![0.0; np];
    let mut per_state: std::collections::HashMap<&[usize], f64> = std::collections::HashMap::new();
    for col in &result.active_columns {
        worst = worst.max(-col.fraction);
        worst = worst.max(col.fraction - 1.0);
        if !col.schedule.is_feasible(&col.state) {
            return f64::INFINITY;
        }
        *per_state.entry(col.state.as_slice()).or_default() += col.fraction;
        let pa = model.law().joint(&col.state);
        for (ij, s) in service.iter_mut().enumerate() {
            *s += pa * model.service(ij, col.schedule.pair_counts()[ij]) * col.fraction;
        }
    }
    for (_, total) in per_state {
        worst = worst.max(total - 1.0);
    }
    for (w, s) in result.weights.iter().zip(&service) {
        worst = worst.max(w * result.lambda_star - s);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RegionPosition {
    Interior,
    Boundary,
    Exterior,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipResult {
    pub feasible: bool,
    pub position: RegionPosition,
    /// Boundary value along the ray through the queried point.
    pub lambda_star: f64,
    /// `lambda_star` minus the queried total rate.
    pub margin: f64,
    pub certificate: Vec<ActiveColumn>,
}

/// Tests whether the rate point `rates` lies in the capacity region.
///
/// Solves the boundary problem along the ray through `rates`; the point
/// is achievable iff its total rate does not exceed the boundary value.
/// The returned certificate is the boundary certificate scaled down to
/// the queried point.
pub fn membership(
    rates: &[f64],
    model: &CapacityModel,
    opts: &CapacityOptions,
) -> Result<MembershipResult, CapacityError> {
    let np = pairs::pair_count(model.k());
    if rates.len() != np {
        return Err(CapacityError::BadLength {
            name: "rates",
            expected: np,
            got: rates.len(),
        });
    }
    for &r in rates {
        if !r.is_finite() || r < 0.0 {
            return Err(CapacityError::Domain {
                name: "rates",
                value: r,
            });
        }
    }
    let total: f64 = rates.iter().sum();
    if total == 0.0 {
        return Ok(MembershipResult {
            feasible: true,
            position: RegionPosition::Interior,
            lambda_star: 0.0,
            margin: 0.0,
            certificate: Vec::new(),
        });
    }
    let boundary = capacity_boundary(rates, model, opts)?;
    let lambda_star = boundary.lambda_star;
    let margin = lambda_star - total;
    let position = if margin.abs() <= LP_TOL {
        RegionPosition::Boundary
    } else if margin > 0.0 {
        RegionPosition::Interior
    } else {
        RegionPosition::Exterior
    };
    let feasible = margin >= -LP_TOL;
    let certificate = if feasible && lambda_star > 0.0 {
        let scale = (total / lambda_star).min(1.0);
        boundary
            .active_columns
            .into_iter()
            .map(|mut c| {
                c.fraction *= scale;
                c
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(MembershipResult {
        feasible,
        position,
        lambda_star,
        margin,
        certificate,
    })
}

/// One traced boundary point: weight angle plus the solved result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub angle: f64,
    pub result: CapacityResult,
}

/// Traces the boundary over the two pairs `(0,1)` and `(0,2)` with all
/// other demands zero, at `n_angles` directions uniform in `[0, π/2]`.
///
/// Angle solves run in parallel; output is ordered by angle.
pub fn boundary_sweep(
    n_angles: usize,
    model: &CapacityModel,
    opts: &CapacityOptions,
) -> Result<Vec<SweepPoint>, CapacityError> {
    if n_angles < 2 {
        return Err(CapacityError::Domain {
            name: "n_angles",
            value: n_angles as f64,
        });
    }
    if model.k() < 3 {
        return Err(CapacityError::Domain {
            name: "k",
            value: model.k() as f64,
        });
    }
    let np = pairs::pair_count(model.k());
    let i12 = pairs::pair_index(model.k(), 0, 1);
    let i13 = pairs::pair_index(model.k(), 0, 2);
    let angles: Vec<f64> = (0..n_angles)
        .map(|t| t as f64 / (n_angles - 1) as f64 * std::f64::consts::FRAC_PI_2)
        .collect();
    let solved = par::map(&angles, |&angle| {
        let mut w = vec![0.0; np];
        w[i12] = angle.cos();
        w[i13] = angle.sin();
        // cos(π/2) is not exactly zero; snap so axis points stay axis points.
        if w[i12].abs() < 1e-15 {
            w[i12] = 0.0;
        }
        if w[i13].abs() < 1e-15 {
            w[i13] = 0.0;
        }
        capacity_boundary(&w, model, opts).map(|result| SweepPoint { angle, result })
    });
    solved.into_iter().collect()
}

/// Renders sweep results as the boundary CSV; 12 significant digits,
/// `\n` line endings.
pub fn boundary_csv(architecture: Architecture, protocol: &str, points: &[SweepPoint]) -> String {
    let mut out = String::from("architecture,protocol,w12,w13,lambda_star,lam12,lam13\n");
    // Pairs (0,1) and (0,2) sit at flat indices 0 and 1 for every k.
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            architecture.label(),
            protocol,
            format_sig(p.result.weights[0], 12),
            format_sig(p.result.weights[1], 12),
            format_sig(p.result.lambda_star, 12),
            format_sig(p.result.rates[0], 12),
            format_sig(p.result.rates[1], 12),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::{BellDiagonalState, ProtocolId};
    use crate::link::{raw_link_law, LinkParams};
    use crate::purify::{symmetric_yield, PurificationSpec, RoundStep};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b} (tol {tol:e})");
    }

    fn nl_model(k: usize, alpha_max: usize, p: f64, q: f64) -> CapacityModel {
        let params = LinkParams::new(k, alpha_max, vec![p; k], 0.9).unwrap();
        CapacityModel::noise_less(
            raw_link_law(&params),
            SwapMatrix::from_constant(k, q).unwrap(),
        )
        .unwrap()
    }

    fn one_round_spec(r: f64) -> PurificationSpec {
        PurificationSpec {
            proto: ProtocolId::DejmpsBinary,
            input_state: BellDiagonalState::binary(0.9).unwrap(),
            kappa: 2,
            f_target: 0.95,
            rounds: 1,
            per_round: vec![RoundStep {
                success: r,
                fidelity: 0.99,
            }],
        }
    }

    #[test]
    fn schedule_basics() {
        let s = Schedule::from_pair_entries(3, &[(0, 1, 2), (1, 2, 1)]);
        assert_eq!(s.get(1, 0), 2);
        assert_eq!(s.load(1), 3);
        assert_eq!(s.load(0), 2);
        assert_eq!(s.total(), 3);
        assert!(s.is_feasible(&[2, 3, 1]));
        assert!(!s.is_feasible(&[2, 2, 1]));
        assert!(s.is_maximal(&[2, 3, 1]));
        assert!(!s.is_maximal(&[3, 3, 2]));
    }

    #[test]
    fn enumerate_examples() {
        let m = enumerate_schedules(&[1, 1, 0], true, 1000).unwrap();
        assert_eq!(m, vec![Schedule::from_pair_entries(3, &[(0, 1, 1)])]);

        let m = enumerate_schedules(&[1, 1, 1], true, 1000).unwrap();
        assert_eq!(
            m,
            vec![
                Schedule::from_pair_entries(3, &[(1, 2, 1)]),
                Schedule::from_pair_entries(3, &[(0, 2, 1)]),
                Schedule::from_pair_entries(3, &[(0, 1, 1)]),
            ]
        );

        let m = enumerate_schedules(&[3, 2], true, 1000).unwrap();
        assert_eq!(m, vec![Schedule::from_pair_entries(2, &[(0, 1, 2)])]);

        let all = enumerate_schedules(&[1, 1, 0], false, 1000).unwrap();
        assert_eq!(all.len(), 2);
    }

    #[test]
    fn enumerate_matches_brute_force() {
        let a = [2usize, 1, 3];
        let full = enumerate_schedules(&a, false, 100_000).unwrap();
        let maximal = enumerate_schedules(&a, true, 100_000).unwrap();
        let mut brute_full = Vec::new();
        for x in 0..=3u32 {
            for y in 0..=3u32 {
                for z in 0..=3u32 {
                    let s = Schedule {
                        k: 3,
                        pi: vec![x, y, z],
                    };
                    if s.is_feasible(&a) {
                        brute_full.push(s);
                    }
                }
            }
        }
        assert_eq!(full.len(), brute_full.len());
        for s in &brute_full {
            assert!(full.contains(s));
        }
        let brute_maximal: Vec<_> = brute_full.iter().filter(|s| s.is_maximal(&a)).collect();
        assert_eq!(maximal.len(), brute_maximal.len());
        for s in brute_maximal {
            assert!(maximal.contains(s));
        }
    }

    #[test]
    fn enumerate_cap_guard() {
        assert!(matches!(
            enumerate_schedules(&[3, 3, 3], false, 5),
            Err(CapacityError::ColumnCapExceeded { cap: 5 })
        ));
    }

    #[test]
    fn service_function_examples() {
        let identity = YieldModel::identity(8);
        let f = service_function(&identity, 0.9, 5).unwrap();
        assert_close(f.get(3), 2.7, 1e-12);
        assert_close(f.get(0), 0.0, 1e-15);

        let ym = symmetric_yield(&one_round_spec(0.82), 8).unwrap();
        let f = service_function(&ym, 1.0, 4).unwrap();
        assert_close(f.get(2), 0.82, 1e-12);
        // q < 1 mixes lower counts in.
        let f = service_function(&ym, 0.9, 4).unwrap();
        assert_close(f.get(2), 0.81 * 0.82, 1e-12);
        for pi in 1..=4 {
            assert!(f.get(pi) >= f.get(pi - 1));
        }
        assert!(service_function(&identity, 0.0, 3).is_err());
        assert!(service_function(&identity, 0.9, 20).is_err());
    }

    #[test]
    fn two_user_closed_form() {
        for &(p, q) in &[(1.0, 1.0), (0.3, 0.7), (0.6, 0.9), (0.9, 0.5)] {
            let model = nl_model(2, 1, p, q);
            let r = capacity_boundary(&[1.0], &model, &CapacityOptions::default()).unwrap();
            assert_close(r.lambda_star, p * p * q, LP_TOL);
            assert!(r.objective_gap < 1e-6, "gap {}", r.objective_gap);
            assert!(certificate_violation(&model, &r) <= LP_TOL);
        }
    }

    #[test]
    fn identity_reduction_makes_architectures_agree() {
        let params = LinkParams::new(3, 1, vec![0.8; 3], 0.9).unwrap();
        let raw = raw_link_law(&params);
        let swap = SwapMatrix::from_constant(3, 0.9).unwrap();
        let identity = YieldModel::identity(4);

        let nl = CapacityModel::noise_less(raw.clone(), swap.clone()).unwrap();
        let ps = CapacityModel::purify_swap(
            crate::link::purified_link_law(&raw, &identity).unwrap(),
            swap.clone(),
        )
        .unwrap();
        let tables = (0..3)
            .map(|_| service_function(&identity, 0.9, 1).unwrap())
            .collect();
        let sp = CapacityModel::swap_purify(raw, swap, tables).unwrap();

        let w = vec![0.5, 0.5, 0.0];
        let opts = CapacityOptions::default();
        let l_nl = capacity_boundary(&w, &nl, &opts).unwrap().lambda_star;
        let l_ps = capacity_boundary(&w, &ps, &opts).unwrap().lambda_star;
        let l_sp = capacity_boundary(&w, &sp, &opts).unwrap().lambda_star;
        assert_close(l_nl, l_ps, LP_TOL);
        assert_close(l_nl, l_sp, LP_TOL);
    }

    #[test]
    fn maximal_restriction_is_lossless() {
        let model = nl_model(3, 2, 0.7, 0.9);
        let weights = [0.5, 0.3, 0.2];
        let full = capacity_boundary(
            &weights,
            &model,
            &CapacityOptions {
                maximal_only: false,
                ..Default::default()
            },
        )
        .unwrap();
        let maximal = capacity_boundary(&weights, &model, &CapacityOptions::default()).unwrap();
        assert_close(full.lambda_star, maximal.lambda_star, LP_TOL);
    }

    #[test]
    fn membership_scalings() {
        let model = nl_model(3, 2, 0.9, 0.9);
        let opts = CapacityOptions::default();
        let boundary = capacity_boundary(&[0.5, 0.5, 0.0], &model, &opts).unwrap();
        let scale = |f: f64| -> Vec<f64> { boundary.rates.iter().map(|r| r * f).collect() };

        let inside = membership(&scale(0.99), &model, &opts).unwrap();
        assert!(inside.feasible);
        assert_eq!(inside.position, RegionPosition::Interior);
        assert!(!inside.certificate.is_empty());

        let outside = membership(&scale(1.01), &model, &opts).unwrap();
        assert!(!outside.feasible);
        assert_eq!(outside.position, RegionPosition::Exterior);
        assert!(outside.certificate.is_empty());

        let edge = membership(&boundary.rates, &model, &opts).unwrap();
        assert_eq!(edge.position, RegionPosition::Boundary);

        let zero = membership(&[0.0, 0.0, 0.0], &model, &opts).unwrap();
        assert!(zero.feasible);
        assert_eq!(zero.position, RegionPosition::Interior);
    }

    #[test]
    fn scaled_certificate_covers_queried_point() {
        let model = nl_model(3, 2, 0.9, 0.9);
        let opts = CapacityOptions::default();
        let boundary = capacity_boundary(&[0.6, 0.4, 0.0], &model, &opts).unwrap();
        let rates: Vec<f64> = boundary.rates.iter().map(|r| r * 0.95).collect();
        let m = membership(&rates, &model, &opts).unwrap();
        // Certificate service must cover the queried rates themselves.
        let np = 3;
        let mut service = vec![0.0; np];
        for col in &m.certificate {
            let pa = model.law().joint(&col.state);
            for (ij, s) in service.iter_mut().enumerate() {
                *s += pa * model.service(ij, col.schedule.pair_counts()[ij]) * col.fraction;
            }
        }
        for (ij, (s, r)) in service.iter().zip(&rates).enumerate() {
            assert!(s + LP_TOL >= *r, "pair {ij}");
        }
    }

    #[test]
    fn sweep_symmetry_and_consistency() {
        let model = nl_model(3, 2, 0.8, 0.9);
        let opts = CapacityOptions::default();
        let points = boundary_sweep(5, &model, &opts).unwrap();
        assert_eq!(points.len(), 5);
        // Users 2 and 3 are exchangeable, so the axis intercepts agree.
        assert_close(
            points[0].result.lambda_star,
            points[4].result.lambda_star,
            LP_TOL,
        );
        for p in &points {
            let shrunk: Vec<f64> = p.result.rates.iter().map(|r| r * 0.99).collect();
            assert!(membership(&shrunk, &model, &opts).unwrap().feasible);
            assert!(certificate_violation(&model, &p.result) <= LP_TOL);
        }
        // Angles strictly increase.
        for w in points.windows(2) {
            assert!(w[1].angle > w[0].angle);
        }
    }

    #[test]
    fn purification_cost_shows_in_boundary() {
        let params = LinkParams::new(3, 2, vec![0.9; 3], 0.9).unwrap();
        let raw = raw_link_law(&params);
        let swap = SwapMatrix::from_constant(3, 0.9).unwrap();
        let ym = symmetric_yield(&one_round_spec(0.82), 4).unwrap();

        let nl = CapacityModel::noise_less(raw.clone(), swap.clone()).unwrap();
        let ps = CapacityModel::purify_swap(
            crate::link::purified_link_law(&raw, &ym).unwrap(),
            swap.clone(),
        )
        .unwrap();
        let tables = (0..3)
            .map(|_| service_function(&ym, 0.9, 2).unwrap())
            .collect();
        let sp = CapacityModel::swap_purify(raw, swap, tables).unwrap();

        let w = vec![0.5, 0.5, 0.0];
        let opts = CapacityOptions::default();
        let l_nl = capacity_boundary(&w, &nl, &opts).unwrap().lambda_star;
        let l_ps = capacity_boundary(&w, &ps, &opts).unwrap().lambda_star;
        let l_sp = capacity_boundary(&w, &sp, &opts).unwrap().lambda_star;
        assert!(l_nl > l_ps, "noise-less {l_nl} vs PS {l_ps}");
        assert!(l_ps >= l_sp - LP_TOL, "PS {l_ps} vs SP {l_sp}");
    }

    #[test]
    fn monotone_in_parameters() {
        let opts = CapacityOptions::default();
        let w = [0.5, 0.5, 0.0];
        let lam = |p: f64, q: f64, alpha: usize| {
            capacity_boundary(&w, &nl_model(3, alpha, p, q), &opts)
                .unwrap()
                .lambda_star
        };
        let by_p: Vec<f64> = [0.5, 0.7, 0.9].iter().map(|&p| lam(p, 0.9, 2)).collect();
        assert!(by_p[0] < by_p[1] && by_p[1] < by_p[2]);
        let by_q: Vec<f64> = [0.5, 0.7, 0.9].iter().map(|&q| lam(0.8, q, 2)).collect();
        assert!(by_q[0] < by_q[1] && by_q[1] < by_q[2]);
        let by_a: Vec<f64> = [1, 2, 3].iter().map(|&a| lam(0.8, 0.9, a)).collect();
        assert!(by_a[0] < by_a[1] && by_a[1] < by_a[2]);
    }

    #[test]
    fn csv_shape() {
        let model = nl_model(3, 1, 0.9, 0.9);
        let points = boundary_sweep(3, &model, &CapacityOptions::default()).unwrap();
        let csv = boundary_csv(Architecture::NoiseLess, "none", &points);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "architecture,protocol,w12,w13,lambda_star,lam12,lam13");
        assert!(lines[1].starts_with("NoiseLess,none,1.00000000000,0,"));
        // Byte-identical across runs.
        let again = boundary_csv(
            Architecture::NoiseLess,
            "none",
            &boundary_sweep(3, &model, &CapacityOptions::default()).unwrap(),
        );
        assert_eq!(csv, again);
    }
}
