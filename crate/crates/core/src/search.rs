//! The branch-and-probability-bound search loop.
//!
//! Each iteration draws `K` points from the current sampling distribution,
//! merges them into the pool of evaluated points, and then shrinks the
//! feasible set to a union of Hamming balls around the best pool points.
//! Balls are added greedily, best point first, until the criterion of the
//! remaining complement falls below `delta`; the complement is dropped. The
//! next distribution is a mixture of uniform distributions over the retained
//! balls, weighted by each ball's criterion.
//!
//! The radius starts at `R` and shrinks by one per iteration down to 1. At
//! radius 1 the search stops as soon as every Hamming neighbour of the best
//! point has been evaluated.
//!
//! When a complement holds fewer than 10 pool points the criterion cannot be
//! evaluated, so the iteration draws another `K` points from the same
//! distribution and retries the reduction with the radius unchanged. If such
//! a round adds no new point at all, the complement is taken as exhausted and
//! the reduction closes with the balls chosen so far.

use std::time::{Duration, Instant};

use indexmap::IndexMap;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use thiserror::Error;

use crate::criterion::{self, criterion_over, InsufficientSample, OrderedSample, MIN_SAMPLE};
use crate::lanes::{self, DrawRng};
use crate::objectives::{Evaluation, ObjectiveError, ObjectiveSpec};
use crate::parallel::{DrawTask, EngineError, SampleRequest};
use crate::perf::TimingLedger;
use crate::space::{enumerate_ball, Point, Region, SpaceSpec, DEFAULT_ENUMERATION_CAP};

/// Tail exponent used while no estimate is available (fewer than 100 points
/// were sampled in the first iteration).
pub const FALLBACK_ALPHA: f64 = 1.0;
pub const DEFAULT_MAX_ITERATIONS: u64 = 10_000;
pub const DEFAULT_MAX_EVALUATIONS: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub space: SpaceSpec,
    /// Points drawn per sampling round (`K`).
    pub sample_size: usize,
    /// Radius of the first reduction plus one (`R`).
    pub initial_radius: usize,
    /// Criterion bound below which a complement is removed.
    pub delta: f64,
    pub seed: u64,
    pub max_iterations: u64,
    pub max_evaluations: u64,
}

impl SearchConfig {
    pub fn new(
        space: SpaceSpec,
        sample_size: usize,
        initial_radius: usize,
        delta: f64,
        seed: u64,
    ) -> Result<Self, SearchError> {
        let config = SearchConfig {
            space,
            sample_size,
            initial_radius,
            delta,
            seed,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            max_evaluations: DEFAULT_MAX_EVALUATIONS,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_caps(mut self, max_iterations: u64, max_evaluations: u64) -> Self {
        self.max_iterations = max_iterations;
        self.max_evaluations = max_evaluations;
        self
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.sample_size == 0 {
            return Err(SearchError::Config("sample size K must be at least 1".into()));
        }
        if self.initial_radius == 0 || self.initial_radius > self.space.n() {
            return Err(SearchError::Config(format!(
                "initial radius R must lie in 1..={}, got {}",
                self.space.n(),
                self.initial_radius
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(SearchError::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.max_iterations == 0 || self.max_evaluations == 0 {
            return Err(SearchError::Config("safety caps must be positive".into()));
        }
        Ok(())
    }
}

/// Evaluated points keyed by point, in insertion order.
#[derive(Debug, Clone, Default)]
pub struct SamplePool {
    entries: IndexMap<Point, f64>,
}

impl SamplePool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a value; returns `false` (and keeps the old value) when the
    /// point is already present.
    pub fn insert(&mut self, point: Point, value: f64) -> bool {
        match self.entries.entry(point) {
            indexmap::map::Entry::Occupied(_) => false,
            indexmap::map::Entry::Vacant(v) => {
                v.insert(value);
                true
            }
        }
    }

    pub fn get(&self, x: &Point) -> Option<f64> {
        self.entries.get(x).copied()
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.entries.contains_key(x)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, f64)> + '_ {
        self.entries.iter().map(|(p, &v)| (p, v))
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.values().copied()
    }

    /// Minimum value and its point; ties go to the earliest insertion.
    pub fn best(&self) -> Option<(&Point, f64)> {
        let mut best: Option<(&Point, f64)> = None;
        for (p, &v) in &self.entries {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((p, v));
            }
        }
        best
    }

    /// Keeps only the points covered by `partition`.
    pub fn restrict_to(&mut self, partition: &Partition) {
        self.entries.retain(|p, _| partition.contains(p));
    }

    pub fn ordered_values(&self) -> OrderedSample {
        self.values().collect()
    }
}

/// The feasible set as a union of equal-radius balls, with sampling weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub regions: Vec<Region>,
    pub probabilities: Vec<f64>,
    /// Complement criterion recorded as each region was added. The value is
    /// 0 for a complement closed because it was exhausted.
    pub gammas: Vec<f64>,
}

impl Partition {
    pub fn radius(&self) -> usize {
        self.regions.first().map_or(0, |r| r.radius)
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.regions.iter().any(|r| r.contains(x))
    }
}

/// The pool does not support the criterion on the current complement; the
/// sample has to grow before the reduction can proceed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("complement holds {have} sample points, {need} needed")]
pub struct ExpandSample {
    pub have: usize,
    pub need: usize,
}

impl From<InsufficientSample> for ExpandSample {
    fn from(e: InsufficientSample) -> Self {
        ExpandSample { have: e.have, need: e.need }
    }
}

/// True iff `radius` is 1 and every point within Hamming distance 1 of
/// `best` is already in the pool.
pub fn stop_check(space: &SpaceSpec, radius: usize, best: &Point, pool: &SamplePool) -> bool {
    if radius != 1 || !pool.contains(best) {
        return false;
    }
    let c = best.coords();
    let mut probe = c.to_vec();
    for j in 0..c.len() {
        for v in 1..=space.m() as u16 {
            if v == c[j] {
                continue;
            }
            probe[j] = v;
            let hit = pool.contains(&Point::from_coords(probe.clone()));
            probe[j] = c[j];
            if !hit {
                return false;
            }
        }
    }
    true
}

/// Greedy reduction of the feasible set to balls of `radius` around the best
/// uncovered pool points.
///
/// The pool is assumed to lie inside the current feasible set, so the
/// complement of the chosen balls is represented by the uncovered pool
/// points. With `exhausted` set, a complement too small for the criterion is
/// dropped instead of triggering [`ExpandSample`].
pub fn reduce_and_partition(
    pool: &SamplePool,
    radius: usize,
    delta: f64,
    alpha: f64,
    exhausted: bool,
) -> Result<Partition, ExpandSample> {
    let Some((_, y_star)) = pool.best() else {
        return Err(ExpandSample { have: 0, need: MIN_SAMPLE });
    };
    let points: Vec<(&Point, f64)> = pool.iter().collect();
    let mut covered = vec![false; points.len()];
    let mut regions = Vec::new();
    let mut gammas = Vec::new();
    loop {
        let mut next: Option<(usize, f64)> = None;
        for (i, &(_, v)) in points.iter().enumerate() {
            if !covered[i] && next.is_none_or(|(_, b)| v < b) {
                next = Some((i, v));
            }
        }
        let Some((zi, _)) = next else {
            // every pool point is covered; only reachable for an exhausted pool
            break;
        };
        let region = Region::new(points[zi].0.clone(), radius);
        for (i, &(p, _)) in points.iter().enumerate() {
            if !covered[i] && region.contains(p) {
                covered[i] = true;
            }
        }
        regions.push(region);
        let outside = points.iter().zip(&covered).filter(|(_, c)| !**c).map(|(&(_, v), _)| v);
        match criterion_over(outside, y_star, alpha) {
            Ok(gamma) => {
                gammas.push(gamma);
                if gamma < delta {
                    break;
                }
            }
            Err(_) if exhausted => {
                gammas.push(0.0);
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    let k = regions.len();
    Ok(Partition { regions, probabilities: vec![1.0 / k as f64; k], gammas })
}

/// Sets the sampling weight of each region from the criterion of the pool
/// points inside it (or `delta` when it holds fewer than 10).
pub fn reweight(mut partition: Partition, pool: &SamplePool, delta: f64, alpha: f64) -> Partition {
    let y_star = pool.best().map_or(0.0, |(_, v)| v);
    let mut q: Vec<f64> = partition
        .regions
        .iter()
        .map(|region| {
            let inside: Vec<f64> = pool.iter().filter(|(p, _)| region.contains(p)).map(|(_, v)| v).collect();
            if inside.len() >= MIN_SAMPLE {
                criterion_over(inside, y_star, alpha).unwrap_or(delta)
            } else {
                delta
            }
        })
        .collect();
    if q.iter().all(|&v| v == 0.0) {
        q.iter_mut().for_each(|v| *v = 1.0);
    }
    let total: f64 = q.iter().sum();
    partition.probabilities = q.into_iter().map(|v| v / total).collect();
    partition
}

/// Multinomial allocation of `k` draws over regions with the given
/// probabilities.
pub fn allocate_draws<R: Rng + ?Sized>(probabilities: &[f64], k: usize, rng: &mut R) -> Vec<usize> {
    let mut counts = vec![0; probabilities.len()];
    if probabilities.len() == 1 {
        counts[0] = k;
        return counts;
    }
    let dist = WeightedIndex::new(probabilities).expect("probabilities with a positive sum");
    for _ in 0..k {
        counts[dist.sample(rng)] += 1;
    }
    counts
}

/// Output of one sampling round.
#[derive(Debug, Clone, Default)]
pub struct RoundOutput {
    /// Evaluations in request order (global draw order).
    pub evaluations: Vec<Evaluation>,
    pub sampling: Duration,
    pub communication: Duration,
}

/// Executes the draws of one sampling round.
pub trait SamplingEngine {
    fn sample(&mut self, request: &SampleRequest) -> Result<RoundOutput, EngineError>;
}

impl<E: SamplingEngine + ?Sized> SamplingEngine for Box<E> {
    fn sample(&mut self, request: &SampleRequest) -> Result<RoundOutput, EngineError> {
        (**self).sample(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopReason {
    LocalMinimumConfirmed,
    MaxIterations,
    MaxEvaluations,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::LocalMinimumConfirmed => "local_minimum_confirmed",
            StopReason::MaxIterations => "max_iterations",
            StopReason::MaxEvaluations => "max_evaluations",
        }
    }
}

/// Per-iteration record.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub iteration: u64,
    pub radius: usize,
    /// Regions after the reduction (0 when the iteration stopped first).
    pub regions: usize,
    pub pool_size: usize,
    pub best_value: f64,
    /// Cumulative drawn points.
    pub evaluations: u64,
    /// Sampling rounds run by this iteration (more than one after expansions).
    pub rounds: u32,
    pub sampling: Duration,
    pub algorithm: Duration,
    pub communication: Duration,
}

/// Snapshot handed to observers at the end of every iteration.
#[derive(Debug, Clone)]
pub struct SearchState<'a> {
    pub iteration: u64,
    pub radius: usize,
    pub partition: Option<&'a Partition>,
    pub best: (&'a Point, f64),
    pub alpha: Option<f64>,
}

/// Hooks into a running search.
pub trait SearchObserver {
    fn on_round(&mut self, _iteration: u64, _evaluations: &[Evaluation]) {}
    fn on_iteration(&mut self, _trace: &IterationTrace, _state: &SearchState<'_>) {}
}

impl SearchObserver for () {}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best_point: Point,
    pub best_value: f64,
    pub iterations: u64,
    /// Drawn sample points, duplicates included.
    pub evaluations: u64,
    pub stop_reason: StopReason,
    pub alpha: Option<f64>,
    pub timing: TimingLedger,
    pub trace: Vec<IterationTrace>,
}

/// Builds the request for one sampling round.
fn round_request(config: &SearchConfig, partition: Option<&Partition>, round: u64) -> SampleRequest {
    let lane = lanes::round_lane(config.seed, round);
    let k = config.sample_size;
    match partition {
        None => SampleRequest {
            radius: config.space.n(),
            seed_lane: lane,
            tasks: vec![DrawTask { center: Point::from_coords(vec![1; config.space.n()]), count: k }],
        },
        Some(part) => {
            let mut rng = DrawRng::seed_from_u64(lanes::allocation_seed(config.seed, round));
            let counts = allocate_draws(&part.probabilities, k, &mut rng);
            let tasks = part
                .regions
                .iter()
                .zip(counts)
                .filter(|(_, c)| *c > 0)
                .map(|(r, count)| DrawTask { center: r.center.clone(), count })
                .collect();
            SampleRequest { radius: part.radius(), seed_lane: lane, tasks }
        }
    }
}

/// Runs the search to completion.
pub fn run<E: SamplingEngine + ?Sized>(
    config: &SearchConfig,
    objective: &ObjectiveSpec,
    engine: &mut E,
) -> Result<SearchResult, SearchError> {
    run_observed(config, objective, engine, &mut ())
}

/// [`run`] with an observer.
pub fn run_observed<E, O>(
    config: &SearchConfig,
    objective: &ObjectiveSpec,
    engine: &mut E,
    observer: &mut O,
) -> Result<SearchResult, SearchError>
where
    E: SamplingEngine + ?Sized,
    O: SearchObserver + ?Sized,
{
    config.validate()?;
    if objective.space() != &config.space {
        return Err(SearchError::Config(format!(
            "objective space {:?} differs from search space {:?}",
            objective.space(),
            config.space
        )));
    }

    let mut pool = SamplePool::new();
    let mut partition: Option<Partition> = None;
    let mut alpha: Option<f64> = None;
    let mut ledger = TimingLedger::default();
    let mut trace = Vec::new();
    let mut previous_radius = config.initial_radius;
    let mut iteration: u64 = 1;
    let mut round: u64 = 0;
    let mut drawn: u64 = 0;

    let stop = loop {
        if iteration > config.max_iterations {
            break StopReason::MaxIterations;
        }
        let started = Instant::now();
        let radius = previous_radius.saturating_sub(1).max(1);
        let mut rounds = 0u32;
        let mut engine_time = Duration::ZERO;
        let mut sampling = Duration::ZERO;
        let mut communication = Duration::ZERO;

        let outcome = loop {
            let request = round_request(config, partition.as_ref(), round);
            round += 1;
            rounds += 1;
            let engine_started = Instant::now();
            let out = engine.sample(&request)?;
            engine_time += engine_started.elapsed();
            sampling += out.sampling;
            communication += out.communication;
            drawn += out.evaluations.len() as u64;
            observer.on_round(iteration, &out.evaluations);
            let mut fresh = 0usize;
            for ev in out.evaluations {
                fresh += usize::from(pool.insert(ev.point, ev.value));
            }

            if iteration == 1 {
                if let Ok(a) = criterion::estimate_alpha(&pool.ordered_values()) {
                    alpha = Some(a);
                }
            }
            if drawn >= config.max_evaluations {
                break Err(StopReason::MaxEvaluations);
            }
            let (best, _) = pool.best().expect("pool holds the sampled points");
            if stop_check(&config.space, radius, best, &pool) {
                break Err(StopReason::LocalMinimumConfirmed);
            }
            let a = alpha.unwrap_or(FALLBACK_ALPHA);
            match reduce_and_partition(&pool, radius, config.delta, a, fresh == 0) {
                Ok(p) => break Ok(p),
                Err(ExpandSample { .. }) => continue,
            }
        };

        let stopped = outcome.as_ref().err().copied();
        let regions = match outcome {
            Ok(reduced) => {
                pool.restrict_to(&reduced);
                let weighted = reweight(reduced, &pool, config.delta, alpha.unwrap_or(FALLBACK_ALPHA));
                let k = weighted.len();
                partition = Some(weighted);
                k
            }
            Err(_) => 0,
        };

        let algorithm = started.elapsed().saturating_sub(engine_time);
        ledger.sampling += sampling;
        ledger.communication += communication;
        ledger.algorithm += algorithm;
        ledger.points = drawn;
        let (best_point, best_value) = pool.best().expect("pool is never emptied");
        let record = IterationTrace {
            iteration,
            radius,
            regions,
            pool_size: pool.len(),
            best_value,
            evaluations: drawn,
            rounds,
            sampling,
            algorithm,
            communication,
        };
        observer.on_iteration(
            &record,
            &SearchState {
                iteration,
                radius,
                partition: if regions > 0 { partition.as_ref() } else { None },
                best: (best_point, best_value),
                alpha,
            },
        );
        trace.push(record);

        if let Some(reason) = stopped {
            break reason;
        }
        previous_radius = radius;
        iteration += 1;
    };

    let (best_point, best_value) = pool.best().map(|(p, v)| (p.clone(), v)).expect("non-empty pool");
    Ok(SearchResult {
        best_point,
        best_value,
        iterations: iteration.min(config.max_iterations),
        evaluations: drawn,
        stop_reason: stop,
        alpha,
        timing: ledger,
        trace,
    })
}

/// All points of `B_1(best)`; handy for building test pools.
pub fn unit_ball(space: &SpaceSpec, best: &Point) -> Vec<Point> {
    enumerate_ball(space, best, 1, DEFAULT_ENUMERATION_CAP).expect("unit balls are small")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criterion::prospectiveness;
    use crate::objectives::ObjectiveKind;
    use crate::parallel::SerialEngine;

    fn pool_of(points: &[(Vec<u16>, f64)]) -> SamplePool {
        let mut pool = SamplePool::new();
        for (c, v) in points {
            pool.insert(Point::from_coords(c.clone()), *v);
        }
        pool
    }

    #[test]
    fn config_validation() {
        let s = SpaceSpec::new(10, 6).unwrap();
        assert!(SearchConfig::new(s, 100, 5, 0.1, 1).is_ok());
        assert!(SearchConfig::new(s, 0, 5, 0.1, 1).is_err());
        assert!(SearchConfig::new(s, 100, 0, 0.1, 1).is_err());
        assert!(SearchConfig::new(s, 100, 11, 0.1, 1).is_err());
        assert!(SearchConfig::new(s, 100, 5, 0.0, 1).is_err());
        assert!(SearchConfig::new(s, 100, 5, 1.0, 1).is_err());
    }

    #[test]
    fn pool_deduplicates_and_breaks_ties_by_insertion() {
        let mut pool = SamplePool::new();
        assert!(pool.insert(Point::from_coords(vec![1, 2]), 3.0));
        assert!(pool.insert(Point::from_coords(vec![2, 2]), 1.0));
        assert!(pool.insert(Point::from_coords(vec![2, 1]), 1.0));
        assert!(!pool.insert(Point::from_coords(vec![1, 2]), 0.0));
        assert_eq!(pool.len(), 3);
        assert_eq!(pool.get(&Point::from_coords(vec![1, 2])), Some(3.0));
        assert_eq!(pool.best().unwrap().0.coords(), &[2, 2]);
    }

    #[test]
    fn stop_check_cases() {
        let s = SpaceSpec::new(3, 3).unwrap();
        let best = s.constant_point(2).unwrap();
        let mut pool = SamplePool::new();
        for p in unit_ball(&s, &best) {
            pool.insert(p, 1.0);
        }
        assert!(!stop_check(&s, 3, &best, &pool));
        assert!(stop_check(&s, 1, &best, &pool));
        let mut missing = SamplePool::new();
        let ball = unit_ball(&s, &best);
        for p in ball.iter().skip(1).take(ball.len() - 2).chain(std::iter::once(&ball[0])) {
            missing.insert(p.clone(), 1.0);
        }
        assert_eq!(missing.len(), ball.len() - 1);
        assert!(!stop_check(&s, 1, &best, &missing));
    }

    #[test]
    fn reduction_asks_for_more_points_when_the_complement_is_thin() {
        // 12 points inside B_2((1,1,1,1)), 3 outside
        let mut pts = Vec::new();
        for a in 1..=3u16 {
            for b in 1..=4u16 {
                pts.push((vec![a, b, 1, 1], f64::from(a + b)));
            }
        }
        pts.push((vec![4, 4, 4, 4], 50.0));
        pts.push((vec![3, 4, 4, 4], 51.0));
        pts.push((vec![4, 3, 4, 4], 52.0));
        let pool = pool_of(&pts);
        assert_eq!(reduce_and_partition(&pool, 2, 0.1, 1.0, false), Err(ExpandSample { have: 3, need: 10 }));
        let closed = reduce_and_partition(&pool, 2, 0.1, 1.0, true).unwrap();
        assert_eq!(closed.len(), 1);
        assert_eq!(closed.gammas, vec![0.0]);
    }

    #[test]
    fn one_deep_basin_gives_a_single_region() {
        // basin around (1,1,1,1,1,1) with values 0..; bad points far away
        let mut pts = vec![(vec![1, 1, 1, 1, 1, 1], 0.0)];
        for j in 0..6 {
            let mut c = vec![1; 6];
            c[j] = 2;
            pts.push((c, 1.0));
        }
        let bad: Vec<Vec<u16>> = (0..12)
            .map(|i| {
                let mut c = vec![4u16; 6];
                c[i % 6] = 3;
                c[(i + 1) % 6] = if i < 6 { 4 } else { 3 };
                c
            })
            .collect();
        for (i, c) in bad.iter().enumerate() {
            pts.push((c.clone(), 100.0 + i as f64));
        }
        let pool = pool_of(&pts);
        let outside: Vec<f64> =
            pool.iter().filter(|(p, _)| p.coords().iter().all(|&c| c >= 3)).map(|(_, v)| v).collect();
        assert!(outside.len() >= 10);
        let sub = OrderedSample::new(outside.clone()).unwrap();
        let k = criterion::select_k(sub.len()).unwrap();
        let gamma = prospectiveness(&sub, 0.0, k, 1.0).unwrap();
        assert!(gamma < 0.1, "{gamma}");
        let part = reduce_and_partition(&pool, 2, 0.1, 1.0, false).unwrap();
        assert_eq!(part.len(), 1);
        assert_eq!(part.regions[0].center.coords(), &[1, 1, 1, 1, 1, 1]);
        assert!((part.gammas[0] - gamma).abs() < 1e-15);
    }

    #[test]
    fn two_equal_basins_give_two_regions() {
        let n = 6;
        let mut pts = Vec::new();
        for (base, shift) in [(1u16, 0.0), (4u16, 0.0)] {
            pts.push((vec![base; n], shift));
            for j in 0..n {
                for step in [1u16, 2] {
                    let mut c = vec![base; n];
                    c[j] = if base == 1 { base + step } else { base - step };
                    pts.push((c, f64::from(step)));
                }
            }
        }
        // poor points at distance 6 from both basins
        for i in 0..12u16 {
            let c: Vec<u16> = (0..n).map(|j| 2 + ((i >> j) & 1)).collect();
            pts.push((c, 100.0 + f64::from(i)));
        }
        let pool = pool_of(&pts);
        let part = reduce_and_partition(&pool, 1, 0.1, 1.0, false).unwrap();
        assert_eq!(part.len(), 2);
        let centers: Vec<&[u16]> = part.regions.iter().map(|r| r.center.coords()).collect();
        assert_eq!(centers, vec![&[1u16; 6][..], &[4u16; 6][..]]);
        assert!(part.gammas[0] >= 0.1);
    }

    #[test]
    fn reweight_cases() {
        let s = SpaceSpec::new(4, 4).unwrap();
        let best = s.constant_point(1).unwrap();
        let mut pool = SamplePool::new();
        for (i, p) in unit_ball(&s, &best).into_iter().enumerate() {
            pool.insert(p, i as f64);
        }
        let single =
            Partition { regions: vec![Region::new(best.clone(), 1)], probabilities: vec![1.0], gammas: vec![0.0] };
        assert_eq!(reweight(single, &pool, 0.1, 1.0).probabilities, vec![1.0]);

        let far = s.constant_point(4).unwrap();
        let two = Partition {
            regions: vec![Region::new(best.clone(), 1), Region::new(far, 1)],
            probabilities: vec![0.5, 0.5],
            gammas: vec![0.5, 0.0],
        };
        let p = reweight(two, &pool, 0.1, 1.0).probabilities;
        assert!((p[0] - 1.0 / 1.1).abs() < 1e-12 && (p[1] - 0.1 / 1.1).abs() < 1e-12, "{p:?}");

        // both regions hold ten equal values above the record: all q = 0
        let mut flat = SamplePool::new();
        flat.insert(s.point(vec![2, 2, 2, 2]).unwrap(), 0.0);
        let a = s.constant_point(1).unwrap();
        let b = s.constant_point(4).unwrap();
        for center in [&a, &b] {
            for p in unit_ball(&s, center).into_iter().take(10) {
                flat.insert(p, 5.0);
            }
        }
        let regions = vec![Region::new(a, 1), Region::new(b, 1)];
        let part = Partition { regions, probabilities: vec![0.5, 0.5], gammas: vec![1.0, 0.0] };
        assert_eq!(reweight(part, &flat, 0.1, 1.0).probabilities, vec![0.5, 0.5]);
    }

    #[test]
    fn allocation_cases() {
        let mut rng = DrawRng::seed_from_u64(5);
        assert_eq!(allocate_draws(&[1.0], 37, &mut rng), vec![37]);
        assert_eq!(allocate_draws(&[1.0, 0.0], 50, &mut rng), vec![50, 0]);
        let k = 100_000;
        let c = allocate_draws(&[0.5, 0.5], k, &mut rng);
        assert_eq!(c.iter().sum::<usize>(), k);
        let sigma = (k as f64 * 0.25).sqrt();
        assert!((c[0] as f64 - 50_000.0).abs() <= 3.0 * sigma, "{c:?}");
    }

    fn dejong_search(n: usize, m: u32, k: usize, r: usize, seed: u64) -> (SearchConfig, ObjectiveSpec) {
        let s = SpaceSpec::new(n, m).unwrap();
        let cfg = SearchConfig::new(s, k, r, 0.1, seed).unwrap();
        (cfg, ObjectiveSpec::new(ObjectiveKind::DeJong, s).unwrap())
    }

    #[test]
    fn finds_the_dejong_optimum() {
        let (cfg, obj) = dejong_search(10, 6, 100, 5, 1);
        let mut engine = SerialEngine::new(&obj).unwrap();
        let res = run(&cfg, &obj, &mut engine).unwrap();
        assert_eq!(res.best_value, 0.0);
        assert_eq!(res.stop_reason, StopReason::LocalMinimumConfirmed);
        assert_eq!(res.best_point, cfg.space.constant_point(3).unwrap());
        assert!(res.alpha.is_some());
    }

    #[test]
    fn evaluation_cap_stops_at_the_first_round_boundary() {
        let (cfg, obj) = dejong_search(40, 10, 30, 20, 3);
        let cfg = cfg.with_caps(DEFAULT_MAX_ITERATIONS, 50);
        let mut engine = SerialEngine::new(&obj).unwrap();
        let res = run(&cfg, &obj, &mut engine).unwrap();
        assert_eq!(res.stop_reason, StopReason::MaxEvaluations);
        assert_eq!(res.evaluations, 60);
    }

    #[test]
    fn iteration_cap() {
        let (cfg, obj) = dejong_search(40, 10, 50, 30, 3);
        let cfg = cfg.with_caps(3, DEFAULT_MAX_EVALUATIONS);
        let mut engine = SerialEngine::new(&obj).unwrap();
        let res = run(&cfg, &obj, &mut engine).unwrap();
        assert_eq!(res.stop_reason, StopReason::MaxIterations);
        assert_eq!(res.trace.len(), 3);
    }

    #[derive(Default)]
    struct Recorder {
        radii: Vec<usize>,
        best: Vec<f64>,
        rounds: Vec<Vec<(Point, f64)>>,
        first_centers: Vec<Point>,
    }

    impl SearchObserver for Recorder {
        fn on_round(&mut self, _iteration: u64, evaluations: &[Evaluation]) {
            self.rounds.push(evaluations.iter().map(|e| (e.point.clone(), e.value)).collect());
        }
        fn on_iteration(&mut self, trace: &IterationTrace, state: &SearchState<'_>) {
            self.radii.push(trace.radius);
            self.best.push(trace.best_value);
            if let Some(p) = state.partition {
                assert_eq!(&p.regions[0].center, state.best.0);
                assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(p.regions.iter().all(|r| r.radius == trace.radius));
                self.first_centers.push(p.regions[0].center.clone());
            }
        }
    }

    #[test]
    fn trace_invariants_and_reproducibility() {
        let s = SpaceSpec::new(12, 6).unwrap();
        let obj = ObjectiveSpec::new(ObjectiveKind::Rastrigin { k: 2 }, s).unwrap();
        let cfg = SearchConfig::new(s, 60, 6, 0.1, 99).unwrap();
        let mut rec = Recorder::default();
        let res = run_observed(&cfg, &obj, &mut SerialEngine::new(&obj).unwrap(), &mut rec).unwrap();
        assert!(rec.best.windows(2).all(|w| w[1] <= w[0]), "{:?}", rec.best);
        let expected: Vec<usize> = (0..rec.radii.len()).map(|i| (5usize.saturating_sub(i)).max(1)).collect();
        assert_eq!(rec.radii, expected);
        let mut again = Recorder::default();
        let res2 = run_observed(&cfg, &obj, &mut SerialEngine::new(&obj).unwrap(), &mut again).unwrap();
        assert_eq!(rec.rounds, again.rounds);
        assert_eq!(res.best_point, res2.best_point);
        assert_eq!(res.evaluations, res2.evaluations);
        let ledger_sum: Duration = res.trace.iter().map(|t| t.sampling).sum();
        assert_eq!(ledger_sum, res.timing.sampling);
    }
}
