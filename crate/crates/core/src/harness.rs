//! Multi-trial campaigns, success probabilities and the search for the
//! `m`-monotone difficulty `N(n, m)`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::io::{read_checkpoint, CheckpointHeader, CheckpointRecord, CheckpointWriter};
use crate::model::{double_ball_instance, PackingInstance};
use crate::rrr::{run_trial, RrrParams, TrialOutcome};

/// SplitMix64 finalizer, a bijection on `u64`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `index`: distinct indices give distinct seeds.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    master ^ splitmix64(index)
}

/// Mean and spread of the iteration counts of solved trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
    pub normalized_spread: f64,
    pub samples: usize,
}

impl IterationStats {
    /// `None` when there are no counts.
    pub fn from_counts(counts: impl IntoIterator<Item = u64>) -> Option<Self> {
        let counts: Vec<f64> = counts.into_iter().map(|c| c as f64).collect();
        if counts.is_empty() {
            return None;
        }
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<f64>() / n;
        let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
        let std_dev = var.sqrt();
        Some(Self {
            mean,
            std_dev,
            normalized_spread: std_dev / mean,
            samples: counts.len(),
        })
    }

    pub fn from_outcomes(outcomes: &[TrialOutcome]) -> Option<Self> {
        Self::from_counts(outcomes.iter().filter(|o| o.solved()).map(|o| o.iterations))
    }
}

/// `p = S/T` with standard uncertainty `sqrt(p(1-p)/T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessEstimate {
    pub count: usize,
    pub successes: usize,
    pub trials: usize,
    pub p: f64,
    pub sigma: f64,
}

impl SuccessEstimate {
    pub fn new(count: usize, successes: usize, trials: usize) -> Self {
        let p = successes as f64 / trials as f64;
        Self {
            count,
            successes,
            trials,
            p,
            sigma: (p * (1.0 - p) / trials as f64).sqrt(),
        }
    }
}

/// `T` independent trials of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSpec {
    pub instance: PackingInstance,
    /// The `seed` field is ignored; trial seeds derive from `master_seed`.
    pub params: RrrParams,
    pub trials: usize,
    pub master_seed: u64,
    /// Worker threads; `0` lets the pool choose.
    pub threads: usize,
    pub checkpoint: Option<PathBuf>,
    /// Keep the per-iteration error series of every trial.
    pub keep_series: bool,
}

impl CampaignSpec {
    pub fn new(instance: PackingInstance, params: RrrParams, trials: usize, master_seed: u64) -> Self {
        Self {
            instance,
            params,
            trials,
            master_seed,
            threads: 0,
            checkpoint: None,
            keep_series: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    /// Indexed by trial.
    pub outcomes: Vec<TrialOutcome>,
    pub estimate: SuccessEstimate,
    pub stats: Option<IterationStats>,
    /// Trials taken from the checkpoint instead of being run.
    pub resumed: usize,
    /// Set when checkpointing failed and the campaign continued in memory.
    pub checkpoint_error: Option<String>,
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid("threads", e.to_string()))
}

/// Runs the trials of `spec` in parallel. Trial `t` uses the seed
/// [`trial_seed`]`(master_seed, t)`, so results do not depend on the thread
/// count. With a checkpoint path, finished trials are appended to that file
/// and trials already listed there are not rerun.
pub fn run_campaign(spec: &CampaignSpec) -> Result<CampaignResult> {
    if spec.trials == 0 {
        return Err(invalid("trials", "need at least one trial"));
    }
    spec.params.validate()?;
    let header = CheckpointHeader {
        instance: spec.instance,
        params: spec.params,
        master_seed: spec.master_seed,
    };
    let mut done: BTreeMap<usize, TrialOutcome> = BTreeMap::new();
    let mut checkpoint_error = None;
    if let Some(path) = &spec.checkpoint {
        match read_checkpoint(path) {
            Ok(Some((h, records))) => {
                if h != header {
                    return Err(invalid(
                        "checkpoint",
                        format!("{} belongs to a different campaign", path.display()),
                    ));
                }
                done.extend(records.into_iter().filter(|r| r.index < spec.trials).map(|r| (r.index, r.outcome)));
            }
            Ok(None) => {}
            Err(e) => checkpoint_error = Some(e.to_string()),
        }
    }
    let resumed = done.len();
    let writer = match (&spec.checkpoint, &checkpoint_error) {
        (Some(path), None) => match CheckpointWriter::open(path, &header) {
            Ok(w) => Some(w),
            Err(e) => {
                checkpoint_error = Some(e.to_string());
                None
            }
        },
        _ => None,
    };
    let writer = Mutex::new(writer);
    let write_error = Mutex::new(None);
    let pending: Vec<usize> = (0..spec.trials).filter(|t| !done.contains_key(t)).collect();
    let fresh = thread_pool(spec.threads)?.install(|| {
        pending
            .par_iter()
            .map(|&t| {
                let params = RrrParams {
                    seed: trial_seed(spec.master_seed, t as u64),
                    ..spec.params
                };
                let mut outcome = run_trial(&spec.instance, &params)?;
                if !spec.keep_series {
                    outcome.error_series = Vec::new();
                }
                let mut guard = writer.lock().unwrap_or_else(|e| e.into_inner());
                if let Some(w) = guard.as_mut() {
                    let record = CheckpointRecord {
                        index: t,
                        outcome: outcome.clone(),
                    };
                    if let Err(e) = w.append(&record) {
                        *write_error.lock().unwrap_or_else(|e| e.into_inner()) = Some(e.to_string());
                        *guard = None;
                    }
                }
                Ok((t, outcome))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    done.extend(fresh);
    if let Some(e) = write_error.into_inner().unwrap_or_else(|e| e.into_inner()) {
        checkpoint_error = Some(e);
    }
    let outcomes: Vec<TrialOutcome> = done.into_values().collect();
    let successes = outcomes.iter().filter(|o| o.solved()).count();
    Ok(CampaignResult {
        estimate: SuccessEstimate::new(spec.instance.count, successes, spec.trials),
        stats: IterationStats::from_outcomes(&outcomes),
        outcomes,
        resumed,
        checkpoint_error,
    })
}

/// Search for `N(n, m)` at fixed `n`, `w` and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DifficultySpec {
    pub dim: usize,
    pub width: f64,
    /// `params.monotonicity` is the `m` being measured.
    pub params: RrrParams,
    /// Trials per candidate.
    pub trials: usize,
    pub master_seed: u64,
    pub threads: usize,
    /// Grid spacing for the refinement; `None` picks 1 for `n <= 13` and about
    /// 1% of the bracket otherwise.
    pub step: Option<usize>,
    /// Largest candidate the search may try.
    pub max_count: usize,
}

impl DifficultySpec {
    pub fn new(dim: usize, params: RrrParams, trials: usize, master_seed: u64) -> Self {
        Self {
            dim,
            width: 1.0,
            params,
            trials,
            master_seed,
            threads: 0,
            step: None,
            max_count: 1 << 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateResult {
    pub estimate: SuccessEstimate,
    pub stats: Option<IterationStats>,
    /// Error series are dropped.
    pub outcomes: Vec<TrialOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyResult {
    pub dim: usize,
    pub monotonicity: u32,
    /// Largest candidate with `p > 1/2` in the neighborhood of the transition.
    pub central: usize,
    /// Largest candidate with `p + σ > 1/2`.
    pub upper: usize,
    /// Largest candidate with `p - σ > 1/2`.
    pub lower: usize,
    /// Half of `upper - lower`.
    pub uncertainty: f64,
    /// The largest allowed candidate still succeeded with `p > 1/2`.
    pub lower_bound_only: bool,
    /// An all-success candidate lies above an all-failure candidate
    /// (checked only for `T >= 20`).
    pub fluctuation_flag: bool,
    /// Every candidate evaluated, by increasing `N`.
    pub candidates: Vec<CandidateResult>,
}

impl DifficultyResult {
    pub fn candidate(&self, count: usize) -> Option<&CandidateResult> {
        self.candidates.iter().find(|c| c.estimate.count == count)
    }
}

/// Master seed of the campaign at candidate `count`.
pub fn candidate_seed(master: u64, count: usize) -> u64 {
    splitmix64(master ^ ((count as u64) << 32))
}

struct Search<'a> {
    spec: &'a DifficultySpec,
    results: BTreeMap<usize, CandidateResult>,
}

impl Search<'_> {
    fn eval(&mut self, count: usize) -> Result<SuccessEstimate> {
        if let Some(c) = self.results.get(&count) {
            return Ok(c.estimate);
        }
        let instance = PackingInstance::new(self.spec.dim, count, self.spec.width)?;
        let campaign = CampaignSpec {
            threads: self.spec.threads,
            ..CampaignSpec::new(instance, self.spec.params, self.spec.trials, candidate_seed(self.spec.master_seed, count))
        };
        let r = run_campaign(&campaign)?;
        self.results.insert(
            count,
            CandidateResult {
                estimate: r.estimate,
                stats: r.stats,
                outcomes: r.outcomes,
            },
        );
        Ok(r.estimate)
    }
}

fn above_half(e: &SuccessEstimate) -> bool {
    e.p > 0.5
}

/// Brackets the transition by doubling from `N = 2`, bisects it down to the
/// grid step, then scans the neighbors for the `p ± σ` extremes.
pub fn estimate_difficulty(spec: &DifficultySpec) -> Result<DifficultyResult> {
    if spec.params.monotonicity == 0 {
        return Err(invalid("monotonicity", "the difficulty search needs m >= 1"));
    }
    if spec.trials == 0 {
        return Err(invalid("trials", "need at least one trial"));
    }
    if spec.max_count < 2 {
        return Err(invalid("max_count", "must be at least 2"));
    }
    let mut search = Search {
        spec,
        results: BTreeMap::new(),
    };

    let mut lo = 1;
    let mut hi = 2;
    let mut lower_bound_only = false;
    loop {
        let e = search.eval(hi)?;
        if !above_half(&e) {
            break;
        }
        lo = hi;
        if hi == spec.max_count {
            lower_bound_only = true;
            break;
        }
        hi = (2 * hi).min(spec.max_count);
    }

    let step = spec
        .step
        .unwrap_or(if spec.dim <= 13 { 1 } else { ((lo as f64) * 0.01).round().max(1.0) as usize })
        .max(1);
    if !lower_bound_only {
        while hi - lo > step {
            let mid = lo + ((hi - lo) / 2).div_ceil(step).max(1) * step;
            let mid = if mid >= hi { lo + step } else { mid };
            if above_half(&search.eval(mid)?) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }

    // `lo` passes (or is the trivial single sphere).
    let mut upper = lo;
    if !lower_bound_only {
        let mut c = lo + step;
        while c <= spec.max_count {
            let e = search.eval(c)?;
            if e.p + e.sigma > 0.5 {
                upper = c;
                c += step;
            } else {
                break;
            }
        }
    }
    let mut lower = 1;
    let mut c = lo;
    while c >= 2 {
        let e = search.eval(c)?;
        if e.p - e.sigma > 0.5 {
            lower = c;
            break;
        }
        if c < 2 + step {
            break;
        }
        c -= step;
    }
    let central = search
        .results
        .range(lower..=upper)
        .filter(|(_, r)| above_half(&r.estimate))
        .map(|(&n, _)| n)
        .max()
        .unwrap_or(lo);

    let candidates: Vec<CandidateResult> = search.results.into_values().collect();
    Ok(DifficultyResult {
        dim: spec.dim,
        monotonicity: spec.params.monotonicity,
        central,
        upper,
        lower,
        uncertainty: 0.5 * (upper - lower) as f64,
        lower_bound_only,
        fluctuation_flag: spec.trials >= 20 && !success_is_ordered(&candidates),
        candidates,
    })
}

/// The largest all-success candidate lies at or below the smallest
/// all-failure candidate.
pub fn success_is_ordered(candidates: &[CandidateResult]) -> bool {
    let all_success = candidates
        .iter()
        .filter(|c| c.estimate.successes == c.estimate.trials)
        .map(|c| c.estimate.count)
        .max();
    let all_failure = candidates
        .iter()
        .filter(|c| c.estimate.successes == 0)
        .map(|c| c.estimate.count)
        .min();
    match (all_success, all_failure) {
        (Some(s), Some(f)) => s <= f,
        _ => true,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoubleBallRow {
    pub instance: PackingInstance,
    pub density: f64,
    pub ball_bound: f64,
    pub estimate: SuccessEstimate,
    pub stats: Option<IterationStats>,
    /// Error series are dropped.
    pub outcomes: Vec<TrialOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoubleBallStudy {
    pub rows: Vec<DoubleBallRow>,
    /// `Ī_{n+1} / Ī_n` for consecutive rows; `None` where a mean is missing.
    pub ratios: Vec<Option<f64>>,
}

/// Packs each dimension at twice Ball's density with the monotonicity
/// monitor disabled.
pub fn double_ball_study(
    dims: std::ops::RangeInclusive<usize>,
    params: &RrrParams,
    trials: usize,
    master_seed: u64,
    threads: usize,
) -> Result<DoubleBallStudy> {
    let params = RrrParams {
        monotonicity: 0,
        ..*params
    };
    let mut rows = Vec::new();
    for n in dims {
        let instance = double_ball_instance(n)?;
        let spec = CampaignSpec {
            threads,
            ..CampaignSpec::new(instance, params, trials, candidate_seed(master_seed, n))
        };
        let r = run_campaign(&spec)?;
        let report = instance.report();
        rows.push(DoubleBallRow {
            instance,
            density: report.density,
            ball_bound: report.ball_bound,
            estimate: r.estimate,
            stats: r.stats,
            outcomes: r.outcomes,
        });
    }
    let ratios = rows
        .windows(2)
        .map(|w| match (&w[0].stats, &w[1].stats) {
            (Some(a), Some(b)) => Some(b.mean / a.mean),
            _ => None,
        })
        .collect();
    Ok(DoubleBallStudy { rows, ratios })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rrr::TrialStatus;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn outcome(status: TrialStatus, iterations: u64) -> TrialOutcome {
        TrialOutcome {
            status,
            iterations,
            final_eps: 0.0,
            packing: None,
            repair_shift: 0.0,
            error_series: Vec::new(),
        }
    }

    #[test]
    fn single_trial_stats() {
        let s = IterationStats::from_outcomes(&[outcome(TrialStatus::Solved, 42)]).unwrap();
        assert_eq!((s.mean, s.std_dev, s.samples), (42.0, 0.0, 1));
    }

    #[test]
    fn stats_ignore_unsolved_trials() {
        let outs = [
            outcome(TrialStatus::Solved, 10),
            outcome(TrialStatus::MonotoneViolation, 1000),
            outcome(TrialStatus::Solved, 30),
            outcome(TrialStatus::IterationCap, 5),
        ];
        let s = IterationStats::from_outcomes(&outs).unwrap();
        assert_eq!((s.mean, s.std_dev, s.samples), (20.0, 10.0, 2));
        assert_eq!(s.normalized_spread, 0.5);
        assert!(IterationStats::from_outcomes(&outs[1..2]).is_none());
    }

    #[test]
    fn success_estimate() {
        let e = SuccessEstimate::new(8, 30, 40);
        assert_eq!(e.p, 0.75);
        assert!((e.sigma - (0.75f64 * 0.25 / 40.0).sqrt()).abs() < 1e-15);
        assert_eq!(SuccessEstimate::new(8, 0, 10).sigma, 0.0);
    }

    #[test]
    fn seeds_do_not_collide() {
        let seeds: HashSet<u64> = (0..100_000).map(|t| trial_seed(12345, t)).collect();
        assert_eq!(seeds.len(), 100_000);
    }

    fn small_spec(trials: usize) -> CampaignSpec {
        let params = RrrParams {
            monotonicity: 100,
            max_iter: 5000,
            ..RrrParams::default()
        };
        CampaignSpec::new(PackingInstance::new(6, 4, 1.0).unwrap(), params, trials, 99)
    }

    #[test]
    fn campaign_is_independent_of_thread_count() {
        let one = run_campaign(&CampaignSpec {
            threads: 1,
            ..small_spec(12)
        })
        .unwrap();
        let four = run_campaign(&CampaignSpec {
            threads: 4,
            ..small_spec(12)
        })
        .unwrap();
        assert_eq!(one, four);
        assert_eq!(one.outcomes.len(), 12);
        assert!(one.estimate.successes > 6);
    }

    #[test]
    fn campaign_resumes_from_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.jsonl");
        let full = run_campaign(&small_spec(10)).unwrap();
        let first = run_campaign(&CampaignSpec {
            checkpoint: Some(path.clone()),
            ..small_spec(4)
        })
        .unwrap();
        assert_eq!(first.checkpoint_error, None);
        let resumed = run_campaign(&CampaignSpec {
            checkpoint: Some(path.clone()),
            ..small_spec(10)
        })
        .unwrap();
        assert_eq!(resumed.resumed, 4);
        assert_eq!(resumed.outcomes, full.outcomes);
        assert_eq!(resumed.stats, full.stats);

        // Statistics recomputed from the persisted records match.
        let (_, records) = read_checkpoint(&path).unwrap().unwrap();
        let mut records = records;
        records.sort_by_key(|r| r.index);
        let persisted: Vec<TrialOutcome> = records.into_iter().map(|r| r.outcome).collect();
        assert_eq!(IterationStats::from_outcomes(&persisted), full.stats);

        let other = CampaignSpec {
            master_seed: 1,
            checkpoint: Some(path),
            ..small_spec(10)
        };
        assert!(run_campaign(&other).is_err());
    }

    #[test]
    fn unwritable_checkpoint_is_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_campaign(&CampaignSpec {
            checkpoint: Some(dir.path().join("missing").join("ck.jsonl")),
            ..small_spec(2)
        })
        .unwrap();
        assert!(r.checkpoint_error.is_some());
        assert_eq!(r.outcomes.len(), 2);
    }

    #[test]
    fn campaign_rejects_zero_trials() {
        assert!(run_campaign(&small_spec(0)).is_err());
    }

    #[test]
    fn difficulty_in_six_dimensions() {
        let params = RrrParams {
            monotonicity: 100,
            ..RrrParams::default()
        };
        let spec = DifficultySpec {
            threads: 0,
            ..DifficultySpec::new(6, params, 40, 7)
        };
        let r = estimate_difficulty(&spec).unwrap();
        assert_eq!(r.central, 4);
        assert!(r.lower <= r.central && r.central <= r.upper);
        assert_eq!(r.uncertainty, 0.5 * (r.upper - r.lower) as f64);
        assert!(!r.lower_bound_only);
        let again = estimate_difficulty(&spec).unwrap();
        assert_eq!(again.central, r.central);
        assert_eq!(again.candidates, r.candidates);
    }

    #[test]
    fn difficulty_lower_bound_when_not_bracketed() {
        let params = RrrParams {
            monotonicity: 100,
            ..RrrParams::default()
        };
        let spec = DifficultySpec {
            max_count: 3,
            ..DifficultySpec::new(8, params, 10, 7)
        };
        let r = estimate_difficulty(&spec).unwrap();
        assert!(r.lower_bound_only);
        assert_eq!(r.central, 3);
        let spec = DifficultySpec::new(8, RrrParams::default(), 10, 7);
        assert!(estimate_difficulty(&spec).is_err());
    }

    #[test]
    fn ordering_flag() {
        let cand = |count, successes| CandidateResult {
            estimate: SuccessEstimate::new(count, successes, 20),
            stats: None,
            outcomes: Vec::new(),
        };
        assert!(success_is_ordered(&[cand(4, 20), cand(5, 10), cand(6, 0)]));
        assert!(!success_is_ordered(&[cand(4, 0), cand(5, 20)]));
    }

    #[test]
    fn double_ball_small_dims() {
        let params = RrrParams {
            max_iter: 200_000,
            ..RrrParams::default()
        };
        let study = double_ball_study(6..=7, &params, 2, 3, 0).unwrap();
        assert_eq!(study.rows.len(), 2);
        assert_eq!(study.ratios.len(), 1);
        for row in &study.rows {
            assert!((row.density / row.ball_bound - 2.0).abs() < 1e-12);
            assert_eq!(row.estimate.successes, 2);
            for o in &row.outcomes {
                let p = o.packing.as_ref().unwrap();
                let v = crate::analysis::validate_packing(p, 0.5, 2.0 * params.eps_stop).unwrap();
                assert!(v.valid);
            }
        }
    }

    proptest! {
        #[test]
        fn splitmix_is_injective_on_samples(a in any::<u64>(), b in any::<u64>()) {
            prop_assume!(a != b);
            prop_assert_ne!(trial_seed(7, a), trial_seed(7, b));
        }
    }
}
