//! The relax-reflect-reflect iteration on the divide-and-concur state.
//!
//! The iterate holds one copy `x_ij` of sphere center `i` for every other
//! sphere `j`, so `N(N-1)` copies of dimension `n`. One step is
//!
//! ```text
//! x' = x + beta [P_B(R_A(x)) - P_A(x)]_w,    R_A(x) = x + 2 [P_A(x) - x]_w
//! ```
//!
//! where `P_A` separates each pair `(x_ij, x_ji)` and `P_B` replaces every copy
//! of a sphere by their weighted concurrence.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{Packing, PackingInstance};
use crate::projection::{concur_scalar, separate_in_place};
use crate::torus::{reduce, reduce_scalar, TorusConfig, TorusVector};

/// Parameters of one RRR run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrrParams {
    pub beta: f64,
    pub gamma: f64,
    pub eps_stop: f64,
    pub max_iter: u64,
    /// `0` disables the monotonicity monitor.
    pub monotonicity: u32,
    pub seed: u64,
}

impl Default for RrrParams {
    fn default() -> Self {
        Self {
            beta: 0.5,
            gamma: 1e-3,
            eps_stop: 1e-4,
            max_iter: 1_000_000,
            monotonicity: 0,
            seed: 0,
        }
    }
}

impl RrrParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(invalid("beta", format!("must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma", format!("must be non-negative, got {}", self.gamma)));
        }
        if !(self.eps_stop > 0.0 && self.eps_stop.is_finite()) {
            return Err(invalid("eps_stop", format!("must be positive, got {}", self.eps_stop)));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be at least 1"));
        }
        Ok(())
    }
}

/// Index of the unordered pair `{i, j}`, `i != j`, among `N(N-1)/2` pairs.
#[inline]
pub fn pair_index(count: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    a * count - a * (a + 1) / 2 + (b - a - 1)
}

/// The replicated iterate `x_ij` and the metric weights `g_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicatedState {
    torus: TorusConfig,
    count: usize,
    radius: f64,
    copies: Vec<f64>,
    weights: Vec<f64>,
}

impl ReplicatedState {
    /// State in which every copy of sphere `i` sits at `centers[i]` and all
    /// weights are one.
    pub fn from_centers(centers: &[TorusVector], torus: TorusConfig, radius: f64) -> Result<Self> {
        let count = centers.len();
        if count < 2 {
            return Err(invalid("count", "the replicated state needs at least two spheres"));
        }
        for c in centers {
            crate::error::check_dim(torus.dim, c.dim())?;
        }
        let n = torus.dim;
        let mut copies = Vec::with_capacity(count * (count - 1) * n);
        for (i, c) in centers.iter().enumerate() {
            for j in 0..count {
                if j != i {
                    copies.extend_from_slice(&c.0);
                }
            }
        }
        Ok(Self {
            torus,
            count,
            radius,
            copies,
            weights: vec![1.0; count * (count - 1) / 2],
        })
    }

    /// Concurred state with centers drawn uniformly from the torus.
    pub fn random<R: Rng + ?Sized>(instance: &PackingInstance, rng: &mut R) -> Result<Self> {
        let half = 0.5 * instance.width;
        let centers: Vec<TorusVector> = (0..instance.count)
            .map(|_| TorusVector((0..instance.dim).map(|_| rng.random_range(-half..half)).collect()))
            .collect();
        Self::from_centers(&centers, instance.torus(), instance.radius)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.torus.dim
    }

    pub fn torus(&self) -> TorusConfig {
        self.torus
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Number of stored copies, always `N(N-1)`.
    pub fn copy_count(&self) -> usize {
        self.count * (self.count - 1)
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i != j);
        i * (self.count - 1) + if j > i { j - 1 } else { j }
    }

    /// Copy of sphere center `i` that enforces the constraint with sphere `j`.
    pub fn copy(&self, i: usize, j: usize) -> &[f64] {
        let n = self.torus.dim;
        let s = self.slot(i, j) * n;
        &self.copies[s..s + n]
    }

    /// All replicated coordinates, `N(N-1) n` of them.
    pub fn coordinates(&self) -> &[f64] {
        &self.copies
    }

    /// Metric weight of the pair `{i, j}`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[pair_index(self.count, i, j)]
    }

    /// Weights indexed by [`pair_index`].
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }
}

/// Buffers reused from one step to the next.
#[derive(Debug, Clone, Default)]
pub struct StepWorkspace {
    proj_a: Vec<f64>,
    reflected: Vec<f64>,
    centers_b: Vec<f64>,
    scratch: Vec<(f64, f64)>,
    diff: Vec<f64>,
    separated: Vec<f64>,
    clamped: Vec<bool>,
    discrepancies: Vec<f64>,
}

impl StepWorkspace {
    pub fn new(state: &ReplicatedState) -> Self {
        let n = state.dim();
        Self {
            proj_a: vec![0.0; state.copies.len()],
            reflected: vec![0.0; state.copies.len()],
            centers_b: vec![0.0; state.count * n],
            scratch: Vec::with_capacity(state.count),
            diff: vec![0.0; n],
            separated: vec![0.0; n],
            clamped: vec![false; n],
            discrepancies: vec![0.0; state.weights.len()],
        }
    }

    /// Concurred centers `P_B(R_A(x))` from the last step, reduced.
    pub fn concurred_centers(&self, dim: usize) -> Vec<TorusVector> {
        self.centers_b.chunks(dim).map(|c| TorusVector(c.to_vec())).collect()
    }

    /// Per-pair discrepancies `eps_ij^2` from the last step.
    pub fn discrepancies(&self) -> &[f64] {
        &self.discrepancies
    }
}

/// Performs one RRR update in place and returns the normalized error
/// `|x' - x| / sqrt(N)`. Per-pair discrepancies for the metric update are left
/// in `ws`.
pub fn rrr_step<R: Rng + ?Sized>(
    state: &mut ReplicatedState,
    beta: f64,
    ws: &mut StepWorkspace,
    rng: &mut R,
) -> Result<f64> {
    let n = state.torus.dim;
    let w = state.torus.width;
    let count = state.count;
    let radius = state.radius;

    // P_A, pair by pair in a fixed order.
    ws.proj_a.copy_from_slice(&state.copies);
    for i in 0..count {
        for j in i + 1..count {
            let si = state.slot(i, j) * n;
            let sj = state.slot(j, i) * n;
            for k in 0..n {
                ws.diff[k] = reduce_scalar(state.copies[si + k] - state.copies[sj + k], w);
            }
            ws.separated.copy_from_slice(&ws.diff);
            if separate_in_place(&mut ws.separated, &mut ws.clamped, radius, w, rng) {
                for k in 0..n {
                    let half_shift = 0.5 * (ws.separated[k] - ws.diff[k]);
                    ws.proj_a[si + k] += half_shift;
                    ws.proj_a[sj + k] -= half_shift;
                }
            }
        }
    }

    // R_A
    for ((r, &x), &a) in ws.reflected.iter_mut().zip(&state.copies).zip(&ws.proj_a) {
        *r = x + 2.0 * reduce_scalar(a - x, w);
    }

    // P_B applied to R_A(x)
    for i in 0..count {
        for k in 0..n {
            ws.scratch.clear();
            for j in 0..count {
                if j != i {
                    let s = state.slot(i, j) * n + k;
                    ws.scratch.push((ws.reflected[s], state.weights[pair_index(count, i, j)]));
                }
            }
            ws.centers_b[i * n + k] = concur_scalar(&mut ws.scratch, w);
        }
    }

    // x' = x + beta [P_B(R_A(x)) - P_A(x)]_w
    ws.discrepancies.iter_mut().for_each(|d| *d = 0.0);
    let mut moved_sq = 0.0;
    for i in 0..count {
        for j in 0..count {
            if j == i {
                continue;
            }
            let s = state.slot(i, j) * n;
            let mut disc = 0.0;
            for k in 0..n {
                let d = reduce_scalar(ws.centers_b[i * n + k] - ws.proj_a[s + k], w);
                let step = beta * d;
                state.copies[s + k] += step;
                moved_sq += step * step;
                disc += d * d;
            }
            ws.discrepancies[pair_index(count, i, j)] += disc;
        }
    }
    let eps = (moved_sq / count as f64).sqrt();
    if !eps.is_finite() {
        return Err(Error::NonFinite { iteration: 0 });
    }
    Ok(eps)
}

/// Metric update `g' = g + gamma (eps2 / <eps2> - g)`, where `<eps2>` is the
/// mean over all pairs. Weights are untouched when every discrepancy is zero.
pub fn metric_update(weights: &mut [f64], discrepancies: &[f64], gamma: f64) -> Result<()> {
    crate::error::check_dim(weights.len(), discrepancies.len())?;
    if !(gamma >= 0.0) {
        return Err(invalid("gamma", format!("must be non-negative, got {gamma}")));
    }
    if gamma == 0.0 || weights.is_empty() {
        return Ok(());
    }
    let mean = discrepancies.iter().sum::<f64>() / discrepancies.len() as f64;
    if mean == 0.0 {
        return Ok(());
    }
    for (g, e) in weights.iter_mut().zip(discrepancies) {
        // Floor keeps long stretches of zero discrepancy from underflowing to 0.
        *g = (*g + gamma * (e / mean - *g)).max(f64::MIN_POSITIVE);
    }
    Ok(())
}

/// Verdict of the monotonicity monitor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonitorVerdict {
    Continue,
    Violation,
}

/// Enforces `eps_{i+m} < eps_i` from the running error maximum onward.
///
/// The initial transient is skipped by anchoring enforcement at the index of
/// the running maximum. Every new maximum moves the anchor, so a rise above
/// all earlier errors restarts enforcement instead of ending the run. Runs
/// with small `m` otherwise die on the early rise that follows the first
/// pair crossings.
#[derive(Debug, Clone)]
pub struct MonotoneMonitor {
    m: usize,
    window: VecDeque<f64>,
    index: u64,
    peak: f64,
    peak_index: u64,
}

impl MonotoneMonitor {
    /// `m = 0` yields a monitor that never reports a violation.
    pub fn new(m: u32) -> Self {
        Self {
            m: m as usize,
            window: VecDeque::with_capacity(m as usize + 1),
            index: 0,
            peak: f64::NEG_INFINITY,
            peak_index: 0,
        }
    }

    pub fn observe(&mut self, eps: f64) -> MonitorVerdict {
        if self.m == 0 {
            return MonitorVerdict::Continue;
        }
        let k = self.index;
        self.index += 1;
        if eps > self.peak {
            self.peak = eps;
            self.peak_index = k;
        }
        let mut verdict = MonitorVerdict::Continue;
        if self.window.len() == self.m && k >= self.peak_index + self.m as u64 && eps >= self.window[0] {
            verdict = MonitorVerdict::Violation;
        }
        self.window.push_back(eps);
        if self.window.len() > self.m {
            self.window.pop_front();
        }
        verdict
    }
}

/// Stored error value for one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: u64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrialStatus {
    Solved,
    MonotoneViolation,
    IterationCap,
}

/// Result of one RRR run from a random start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub status: TrialStatus,
    pub iterations: u64,
    pub final_eps: f64,
    pub packing: Option<Packing>,
    /// Largest center displacement applied by [`repair_overlaps`] to the
    /// solved packing; zero for unsolved trials.
    pub repair_shift: f64,
    /// `error_series[k]` is the error after iteration `k + 1`.
    pub error_series: Vec<f64>,
}

impl TrialOutcome {
    pub fn solved(&self) -> bool {
        self.status == TrialStatus::Solved
    }

    pub fn records(&self) -> impl Iterator<Item = IterationRecord> + '_ {
        self.error_series.iter().enumerate().map(|(k, &eps)| IterationRecord {
            iter: k as u64 + 1,
            eps,
        })
    }
}

/// Iterator-style driver that owns the state, workspace and RNG of one run.
#[derive(Debug, Clone)]
pub struct RrrSolver {
    state: ReplicatedState,
    params: RrrParams,
    ws: StepWorkspace,
    rng: ChaCha8Rng,
    iteration: u64,
}

impl RrrSolver {
    /// Random concurred start for `instance`, seeded by `params.seed`.
    pub fn new(instance: &PackingInstance, params: RrrParams) -> Result<Self> {
        params.validate()?;
        check_instance(instance)?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let state = ReplicatedState::random(instance, &mut rng)?;
        Ok(Self::from_state(state, params, rng))
    }

    pub fn from_state(state: ReplicatedState, params: RrrParams, rng: ChaCha8Rng) -> Self {
        let ws = StepWorkspace::new(&state);
        Self {
            state,
            params,
            ws,
            rng,
            iteration: 0,
        }
    }

    pub fn state(&self) -> &ReplicatedState {
        &self.state
    }

    pub fn workspace(&self) -> &StepWorkspace {
        &self.ws
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// One RRR step followed by the metric update; returns the error.
    pub fn step(&mut self) -> Result<f64> {
        self.iteration += 1;
        let eps = rrr_step(&mut self.state, self.params.beta, &mut self.ws, &mut self.rng).map_err(|e| match e {
            Error::NonFinite { .. } => Error::NonFinite {
                iteration: self.iteration,
            },
            other => other,
        })?;
        metric_update(&mut self.state.weights, &self.ws.discrepancies, self.params.gamma)?;
        Ok(eps)
    }

    /// Concurred centers of the last step, after [`repair_overlaps`], and the
    /// largest displacement the repair applied.
    pub fn repaired_packing(&mut self) -> (Packing, f64) {
        let mut packing = self.packing();
        let shift = repair_overlaps(&mut packing.centers, self.state.radius, packing.width, &mut self.rng);
        (packing, shift)
    }

    /// Concurred centers of the last step as a packing.
    pub fn packing(&self) -> Packing {
        let torus = self.state.torus;
        Packing {
            dim: torus.dim,
            width: torus.width,
            seed: self.params.seed,
            centers: self
                .ws
                .concurred_centers(torus.dim)
                .into_iter()
                .map(|c| reduce(&c.0, torus.width))
                .collect(),
        }
    }
}

/// Removes residual overlaps from a nearly valid packing by sweeping over
/// all pairs and separating each overlapping pair with the pair projection,
/// until every pair is at least `2r` apart or `MAX_SWEEPS` sweeps have run.
/// Returns the largest displacement of any center.
///
/// A converged RRR run leaves overlaps of the order of the stopping error;
/// this turns them into an exactly valid packing.
pub fn repair_overlaps<R: Rng + ?Sized>(centers: &mut [TorusVector], radius: f64, width: f64, rng: &mut R) -> f64 {
    const MAX_SWEEPS: usize = 1000;
    let originals: Vec<TorusVector> = centers.to_vec();
    let n = centers.first().map_or(0, TorusVector::dim);
    let min_sq = 4.0 * radius * radius;
    let mut diff = vec![0.0; n];
    let mut separated = vec![0.0; n];
    let mut clamped = vec![false; n];
    for _ in 0..MAX_SWEEPS {
        let mut any = false;
        for i in 0..centers.len() {
            for j in i + 1..centers.len() {
                if crate::torus::distance_sq_unchecked(&centers[i].0, &centers[j].0, width) >= min_sq {
                    continue;
                }
                for k in 0..n {
                    diff[k] = reduce_scalar(centers[i].0[k] - centers[j].0[k], width);
                }
                separated.copy_from_slice(&diff);
                if separate_in_place(&mut separated, &mut clamped, radius, width, rng) {
                    any = true;
                    for k in 0..n {
                        let half_shift = 0.5 * (separated[k] - diff[k]);
                        centers[i].0[k] += half_shift;
                        centers[j].0[k] -= half_shift;
                    }
                }
            }
        }
        if !any {
            break;
        }
    }
    let mut shift: f64 = 0.0;
    for (c, o) in centers.iter_mut().zip(&originals) {
        shift = shift.max(crate::torus::distance_sq_unchecked(&c.0, &o.0, width).sqrt());
        *c = reduce(&c.0, width);
    }
    shift
}

fn check_instance(instance: &PackingInstance) -> Result<()> {
    if instance.count < 2 {
        return Err(invalid("count", "a trial needs at least two spheres"));
    }
    if instance.torus().max_distance() < 2.0 * instance.radius {
        return Err(invalid(
            "dim",
            format!(
                "two spheres of diameter {} do not fit in the {}-torus of width {}",
                2.0 * instance.radius,
                instance.dim,
                instance.width
            ),
        ));
    }
    Ok(())
}

/// Runs RRR from a random concurred start until the error drops below
/// `eps_stop`, the monotonicity criterion fails, or `max_iter` is reached.
pub fn run_trial(instance: &PackingInstance, params: &RrrParams) -> Result<TrialOutcome> {
    let mut solver = RrrSolver::new(instance, *params)?;
    let mut monitor = MonotoneMonitor::new(params.monotonicity);
    let mut series = Vec::new();
    let mut status = TrialStatus::IterationCap;
    let mut final_eps = f64::INFINITY;
    while solver.iteration() < params.max_iter {
        let eps = solver.step()?;
        series.push(eps);
        final_eps = eps;
        if eps < params.eps_stop {
            status = TrialStatus::Solved;
            break;
        }
        if monitor.observe(eps) == MonitorVerdict::Violation {
            status = TrialStatus::MonotoneViolation;
            break;
        }
    }
    let iterations = solver.iteration();
    let (packing, repair_shift) = if status == TrialStatus::Solved {
        let (p, shift) = solver.repaired_packing();
        (Some(p), shift)
    } else {
        (None, 0.0)
    };
    Ok(TrialOutcome {
        status,
        iterations,
        final_eps,
        packing,
        repair_shift,
        error_series: series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::torus_distance;

    fn unit_instance(dim: usize, count: usize) -> PackingInstance {
        PackingInstance::new(dim, count, 1.0).unwrap()
    }

    #[test]
    fn pair_index_is_a_bijection() {
        let count = 7;
        let mut seen = vec![false; count * (count - 1) / 2];
        for i in 0..count {
            for j in i + 1..count {
                let p = pair_index(count, i, j);
                assert_eq!(p, pair_index(count, j, i));
                assert!(!seen[p]);
                seen[p] = true;
            }
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn state_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = ReplicatedState::random(&unit_instance(5, 6), &mut rng).unwrap();
        assert_eq!(s.copy_count(), 30);
        assert_eq!(s.coordinates().len(), 30 * 5);
        assert_eq!(s.weights().len(), 15);
        assert_eq!(s.copy(2, 4), s.copy(2, 0));
    }

    #[test]
    fn solution_is_a_fixed_point() {
        let centers = vec![TorusVector(vec![0.0; 4]), TorusVector(vec![0.5; 4])];
        let mut state = ReplicatedState::from_centers(&centers, TorusConfig::unit(4), 0.5).unwrap();
        let before = state.clone();
        let mut ws = StepWorkspace::new(&state);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let eps = rrr_step(&mut state, 0.5, &mut ws, &mut rng).unwrap();
        assert_eq!(eps, 0.0);
        assert_eq!(state, before);
    }

    #[test]
    fn coincident_pair_separates() {
        let centers = vec![TorusVector(vec![0.0; 4]), TorusVector(vec![0.0; 4])];
        let mut state = ReplicatedState::from_centers(&centers, TorusConfig::unit(4), 0.5).unwrap();
        let mut ws = StepWorkspace::new(&state);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let eps = rrr_step(&mut state, 0.5, &mut ws, &mut rng).unwrap();
        assert!(eps > 0.0);
        // In four dimensions the only difference vectors of length 1 inside
        // the box are the corners (±1/2, ..., ±1/2), so P_A moves each copy by
        // 1/4 per coordinate. With one copy per sphere, P_B(R_A) is the
        // reflected copy, and the half step leaves the copies 1/2 apart.
        let d = torus_distance(state.copy(0, 1), state.copy(1, 0), 1.0).unwrap();
        assert!((d - 0.5).abs() < 1e-12, "d = {d}");
        for c in state.copy(0, 1) {
            assert!((c.abs() - 0.125).abs() < 1e-12);
        }
    }

    #[test]
    fn metric_update_examples() {
        let mut g = vec![1.0; 3];
        metric_update(&mut g, &[2.0, 2.0, 2.0], 0.1).unwrap();
        assert_eq!(g, vec![1.0; 3]);

        let mut g = vec![1.3, 0.7];
        metric_update(&mut g, &[5.0, 0.1], 0.0).unwrap();
        assert_eq!(g, vec![1.3, 0.7]);

        let mut g = vec![1.0, 1.0];
        metric_update(&mut g, &[3.0, 1.0], 0.1).unwrap();
        assert!((g[0] - 1.05).abs() < 1e-15 && (g[1] - 0.95).abs() < 1e-15);

        let mut g = vec![1.0, 2.0];
        metric_update(&mut g, &[0.0, 0.0], 0.5).unwrap();
        assert_eq!(g, vec![1.0, 2.0]);
        assert!(metric_update(&mut g, &[0.0], 0.5).is_err());
    }

    #[test]
    fn metric_weights_stay_positive() {
        let mut g = vec![1.0; 4];
        for step in 0..5000 {
            let disc = [0.0, 1e-9 * step as f64, 3.0, 1e3];
            metric_update(&mut g, &disc, 0.9).unwrap();
            assert!(g.iter().all(|x| *x > 0.0));
        }
    }

    fn run_monitor(m: u32, series: &[f64]) -> Vec<MonitorVerdict> {
        let mut mon = MonotoneMonitor::new(m);
        series.iter().map(|&e| mon.observe(e)).collect()
    }

    #[test]
    fn monitor_decreasing_series() {
        let series: Vec<f64> = (0..500).map(|k| 1.0 / (k as f64 + 1.0)).collect();
        for m in [1, 2, 10, 100] {
            assert!(run_monitor(m, &series).iter().all(|v| *v == MonitorVerdict::Continue));
        }
    }

    #[test]
    fn monitor_detects_violation() {
        let v = run_monitor(2, &[1.0, 0.9, 1.0]);
        assert_eq!(v, vec![MonitorVerdict::Continue, MonitorVerdict::Continue, MonitorVerdict::Violation]);
    }

    #[test]
    fn monitor_skips_transient_rise() {
        let v = run_monitor(1, &[0.5, 0.6, 0.55, 0.5, 0.45]);
        assert!(v.iter().all(|x| *x == MonitorVerdict::Continue));
        let v = run_monitor(1, &[0.5, 0.6, 0.55, 0.56]);
        assert_eq!(v[3], MonitorVerdict::Violation);
        // A later rise above every earlier error moves the anchor.
        let v = run_monitor(1, &[0.5, 0.45, 0.7, 0.6, 0.6]);
        assert_eq!(v[..4], [MonitorVerdict::Continue; 4]);
        assert_eq!(v[4], MonitorVerdict::Violation);
        // A rise that stays below the maximum is still a violation.
        let v = run_monitor(1, &[0.5, 0.45, 0.48]);
        assert_eq!(v[2], MonitorVerdict::Violation);
        let v = run_monitor(3, &[1.0, 0.9, 0.8, 2.0, 1.9, 1.8, 1.7, 1.85, 1.6]);
        assert_eq!(v[7], MonitorVerdict::Continue);
        assert_eq!(run_monitor(3, &[1.0, 0.9, 0.8, 2.0, 1.9, 1.8, 2.0])[6], MonitorVerdict::Violation);
        assert!(run_monitor(0, &[1.0, 2.0, 3.0]).iter().all(|x| *x == MonitorVerdict::Continue));
    }

    #[test]
    fn params_validation() {
        assert!(RrrParams::default().validate().is_ok());
        for bad in [
            RrrParams { beta: 0.0, ..Default::default() },
            RrrParams { beta: 1.5, ..Default::default() },
            RrrParams { gamma: -1.0, ..Default::default() },
            RrrParams { eps_stop: 0.0, ..Default::default() },
            RrrParams { max_iter: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn trial_rejects_infeasible_instances() {
        let p = RrrParams::default();
        assert!(run_trial(&unit_instance(3, 2), &p).is_err());
        assert!(run_trial(&unit_instance(5, 1), &p).is_err());
    }

    #[test]
    fn two_spheres_in_four_dimensions() {
        let params = RrrParams { seed: 5, ..Default::default() };
        let out = run_trial(&unit_instance(4, 2), &params).unwrap();
        assert_eq!(out.status, TrialStatus::Solved);
        assert!(out.final_eps < 1e-4);
        let p = out.packing.unwrap();
        let d = torus_distance(&p.centers[0].0, &p.centers[1].0, 1.0).unwrap();
        assert!((d - 1.0).abs() < 2e-4, "d = {d}");
        assert!(out.repair_shift < 2e-4);
    }

    #[test]
    fn repair_removes_small_overlaps() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut centers = vec![
            TorusVector(vec![0.0; 8]),
            TorusVector(vec![0.4999, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0]),
            TorusVector(vec![0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 0.5]),
        ];
        let shift = repair_overlaps(&mut centers, 0.5, 1.0, &mut rng);
        assert!(shift > 0.0 && shift < 1e-3);
        for i in 0..3 {
            for j in i + 1..3 {
                assert!(torus_distance(&centers[i].0, &centers[j].0, 1.0).unwrap() >= 1.0 - 1e-12);
            }
        }
        let before = centers.clone();
        assert_eq!(repair_overlaps(&mut centers, 0.5, 1.0, &mut rng), 0.0);
        assert_eq!(centers, before);
    }

    #[test]
    fn gamma_zero_trajectory_is_reproducible() {
        let params = RrrParams {
            gamma: 0.0,
            seed: 42,
            max_iter: 200,
            ..Default::default()
        };
        let a = run_trial(&unit_instance(6, 5), &params).unwrap();
        let b = run_trial(&unit_instance(6, 5), &params).unwrap();
        assert_eq!(a, b);
    }
}

