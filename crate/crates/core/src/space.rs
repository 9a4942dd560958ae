//! Geometry of the feasible set `{1..m}^n`: metrics, exact sphere and ball
//! cardinalities, and exact uniform sampling over Hamming spheres and balls.
//!
//! Ball sampling is a two-stage procedure. A sphere radius is first chosen
//! with probability proportional to the sphere's cardinality
//! ([`RadiusTable`]), then a point is drawn uniformly on that sphere
//! ([`sample_on_sphere`]).

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use thiserror::Error;

/// Default upper bound on the size of a ball that [`enumerate_ball`] will
/// materialise.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpaceError {
    #[error("invalid space: n = {n}, m = {m} (need n >= 1 and 2 <= m <= 65535, n <= 65535)")]
    InvalidSpace { n: usize, m: u32 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("radius {radius} exceeds the space dimension {n}")]
    RadiusOutOfRange { radius: usize, n: usize },
    #[error("coordinate {index} has value {value}, outside 1..={m}")]
    CoordinateOutOfRange { index: usize, value: u32, m: u32 },
    #[error("ball holds {count} points, more than the enumeration cap of {cap}")]
    EnumerationCap { count: BigUint, cap: u64 },
}

/// The space `{1..m}^n`.
///
/// Coordinates are stored as `u16`, which bounds both `n` and `m` by 65535
/// (the wire format carries them in the same width).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpaceSpec {
    n: usize,
    m: u32,
}

impl SpaceSpec {
    pub fn new(n: usize, m: u32) -> Result<Self, SpaceError> {
        if n == 0 || n > u16::MAX as usize || m < 2 || m > u16::MAX as u32 {
            return Err(SpaceError::InvalidSpace { n, m });
        }
        Ok(SpaceSpec { n, m })
    }

    /// Vector dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Alphabet size per coordinate.
    pub fn m(&self) -> u32 {
        self.m
    }

    /// `m^n`, exactly.
    pub fn cardinality(&self) -> BigUint {
        BigUint::from(self.m).pow(self.n as u32)
    }

    /// `n ln m`, usable when the exact cardinality is unwieldy.
    pub fn log_cardinality(&self) -> f64 {
        self.n as f64 * (self.m as f64).ln()
    }

    /// Validates `coords` against this space and wraps them in a [`Point`].
    pub fn point(&self, coords: Vec<u16>) -> Result<Point, SpaceError> {
        if coords.len() != self.n {
            return Err(SpaceError::DimensionMismatch { left: coords.len(), right: self.n });
        }
        for (index, &c) in coords.iter().enumerate() {
            if c == 0 || u32::from(c) > self.m {
                return Err(SpaceError::CoordinateOutOfRange { index, value: c.into(), m: self.m });
            }
        }
        Ok(Point(coords))
    }

    /// The point `(v, …, v)`.
    pub fn constant_point(&self, v: u16) -> Result<Point, SpaceError> {
        self.point(vec![v; self.n])
    }

    pub fn contains(&self, x: &Point) -> bool {
        x.dim() == self.n && x.0.iter().all(|&c| c >= 1 && u32::from(c) <= self.m)
    }

    fn check_radius(&self, radius: usize) -> Result<(), SpaceError> {
        if radius > self.n {
            return Err(SpaceError::RadiusOutOfRange { radius, n: self.n });
        }
        Ok(())
    }
}

/// A candidate solution: an integer vector with components in `1..=m`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point(Vec<u16>);

impl Point {
    /// Wraps coordinates without range checks. Prefer [`SpaceSpec::point`].
    pub fn from_coords(coords: Vec<u16>) -> Self {
        Point(coords)
    }

    pub fn coords(&self) -> &[u16] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_coords(self) -> Vec<u16> {
        self.0
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Point{:?}", self.0)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// A Hamming ball `B_radius(center)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Region {
    pub center: Point,
    pub radius: usize,
}

impl Region {
    pub fn new(center: Point, radius: usize) -> Self {
        Region { center, radius }
    }

    /// Membership by Hamming distance. Panics on dimension mismatch.
    pub fn contains(&self, x: &Point) -> bool {
        hamming_within(&self.center, x, self.radius)
    }
}

fn check_dims(x: &Point, y: &Point) -> Result<(), SpaceError> {
    if x.dim() != y.dim() {
        return Err(SpaceError::DimensionMismatch { left: x.dim(), right: y.dim() });
    }
    Ok(())
}

/// Number of coordinates in which `x` and `y` differ.
pub fn hamming_distance(x: &Point, y: &Point) -> Result<usize, SpaceError> {
    check_dims(x, y)?;
    Ok(x.0.iter().zip(&y.0).filter(|(a, b)| a != b).count())
}

/// `hamming_distance(x, y) <= radius`, stopping early once exceeded.
pub(crate) fn hamming_within(x: &Point, y: &Point, radius: usize) -> bool {
    assert_eq!(x.dim(), y.dim(), "points from different spaces");
    let mut d = 0;
    for (a, b) in x.0.iter().zip(&y.0) {
        if a != b {
            d += 1;
            if d > radius {
                return false;
            }
        }
    }
    true
}

/// `max |x_i - y_i|`.
pub fn chebyshev_distance(x: &Point, y: &Point) -> Result<u32, SpaceError> {
    check_dims(x, y)?;
    Ok(x.0.iter().zip(&y.0).map(|(&a, &b)| a.abs_diff(b) as u32).max().unwrap_or(0))
}

/// `sum |x_i - y_i|`.
pub fn manhattan_distance(x: &Point, y: &Point) -> Result<u64, SpaceError> {
    check_dims(x, y)?;
    Ok(x.0.iter().zip(&y.0).map(|(&a, &b)| a.abs_diff(b) as u64).sum())
}

fn binomial(n: usize, k: usize) -> BigUint {
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// `(m-1)^i * C(n, i)`: the number of points at Hamming distance exactly `i`
/// from any center.
pub fn sphere_count(spec: &SpaceSpec, i: usize) -> Result<BigUint, SpaceError> {
    spec.check_radius(i)?;
    Ok(BigUint::from(spec.m - 1).pow(i as u32) * binomial(spec.n, i))
}

/// Number of points within Hamming distance `r` of any center.
pub fn ball_count(spec: &SpaceSpec, r: usize) -> Result<BigUint, SpaceError> {
    spec.check_radius(r)?;
    let mut total = BigUint::zero();
    for i in 0..=r {
        total += sphere_count(spec, i)?;
    }
    Ok(total)
}

/// `a / b` for `a <= b`, with absolute error below `2^-64` whatever the
/// magnitude of the operands.
fn big_ratio(a: &BigUint, b: &BigUint) -> f64 {
    debug_assert!(!b.is_zero());
    if a == b {
        return 1.0;
    }
    let shift = 64u64;
    let q: BigUint = (a << shift) / b;
    q.to_f64().unwrap_or(f64::INFINITY) / 2f64.powi(shift as i32)
}

/// Cumulative sphere-selection probabilities for balls of one radius.
///
/// `cumulative[i] = (N_0 + … + N_i) / N` with exact integer counts; the last
/// entry is exactly `1.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusTable {
    cumulative: Vec<f64>,
}

impl RadiusTable {
    pub fn new(spec: &SpaceSpec, r: usize) -> Result<Self, SpaceError> {
        spec.check_radius(r)?;
        let counts: Vec<BigUint> = (0..=r).map(|i| sphere_count(spec, i)).collect::<Result<_, _>>()?;
        let total: BigUint = counts.iter().sum();
        let mut running = BigUint::zero();
        let cumulative = counts
            .iter()
            .map(|c| {
                running += c;
                big_ratio(&running, &total)
            })
            .collect();
        Ok(RadiusTable { cumulative })
    }

    pub fn radius(&self) -> usize {
        self.cumulative.len() - 1
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Smallest `i` with `P_i >= u`.
    pub fn select(&self, u: f64) -> usize {
        self.cumulative.partition_point(|&p| p < u).min(self.radius())
    }

    /// Draws a sphere radius `j` with probability `N_j / N`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.select(u)
    }
}

/// Draws a sphere radius inside a ball of radius `r`.
pub fn sample_sphere_radius<R: Rng + ?Sized>(spec: &SpaceSpec, r: usize, rng: &mut R) -> Result<usize, SpaceError> {
    Ok(RadiusTable::new(spec, r)?.sample(rng))
}

/// Uniform point at exactly Hamming distance `radius` from `center`.
///
/// `radius` distinct coordinates are chosen without replacement by a partial
/// Fisher–Yates shuffle; each gets a value drawn uniformly from
/// `{1..m} \ {center_j}`.
pub fn sample_on_sphere<R: Rng + ?Sized>(
    spec: &SpaceSpec,
    center: &Point,
    radius: usize,
    rng: &mut R,
) -> Result<Point, SpaceError> {
    spec.check_radius(radius)?;
    if center.dim() != spec.n {
        return Err(SpaceError::DimensionMismatch { left: center.dim(), right: spec.n });
    }
    let mut x = center.0.clone();
    if radius == 0 {
        return Ok(Point(x));
    }
    let mut indices: Vec<usize> = (0..spec.n).collect();
    for t in 0..radius {
        let pick = rng.gen_range(t..spec.n);
        indices.swap(t, pick);
        let j = indices[t];
        let z = u32::from(center.0[j]);
        // uniform over {1..m} minus z
        let mut v = rng.gen_range(1..spec.m);
        if v >= z {
            v += 1;
        }
        x[j] = v as u16;
    }
    Ok(Point(x))
}

/// Uniform point of the ball `B_r(center)`.
pub fn sample_ball<R: Rng + ?Sized>(
    spec: &SpaceSpec,
    center: &Point,
    r: usize,
    rng: &mut R,
) -> Result<Point, SpaceError> {
    let table = RadiusTable::new(spec, r)?;
    sample_ball_with(spec, &table, center, rng)
}

/// [`sample_ball`] with a precomputed radius table.
pub fn sample_ball_with<R: Rng + ?Sized>(
    spec: &SpaceSpec,
    table: &RadiusTable,
    center: &Point,
    rng: &mut R,
) -> Result<Point, SpaceError> {
    let j = table.sample(rng);
    sample_on_sphere(spec, center, j, rng)
}

/// Uniform point of the whole space, one independent coordinate at a time.
pub fn sample_uniform_space<R: Rng + ?Sized>(spec: &SpaceSpec, rng: &mut R) -> Point {
    Point((0..spec.n).map(|_| rng.gen_range(1..=spec.m) as u16).collect())
}

/// Every point of `B_r(center)`, in lexicographic order of changed positions.
///
/// Refuses when the ball holds more than `cap` points.
pub fn enumerate_ball(spec: &SpaceSpec, center: &Point, r: usize, cap: u64) -> Result<Vec<Point>, SpaceError> {
    let count = ball_count(spec, r)?;
    if center.dim() != spec.n {
        return Err(SpaceError::DimensionMismatch { left: center.dim(), right: spec.n });
    }
    if count > BigUint::from(cap) {
        return Err(SpaceError::EnumerationCap { count, cap });
    }
    let mut out = Vec::with_capacity(count.to_usize().unwrap_or(0));
    let mut scratch = center.0.clone();
    enumerate_rec(spec, &center.0, &mut scratch, 0, r, &mut out);
    Ok(out)
}

fn enumerate_rec(
    spec: &SpaceSpec,
    center: &[u16],
    scratch: &mut Vec<u16>,
    start: usize,
    budget: usize,
    out: &mut Vec<Point>,
) {
    out.push(Point(scratch.clone()));
    if budget == 0 {
        return;
    }
    for j in start..spec.n {
        let original = center[j];
        for v in 1..=spec.m as u16 {
            if v == original {
                continue;
            }
            scratch[j] = v;
            enumerate_rec(spec, center, scratch, j + 1, budget - 1, out);
        }
        scratch[j] = original;
    }
}

/// All `m^n` points of the space. Test and oracle helper for tiny spaces.
pub fn enumerate_space(spec: &SpaceSpec, cap: u64) -> Result<Vec<Point>, SpaceError> {
    let center = spec.constant_point(1)?;
    enumerate_ball(spec, &center, spec.n, cap)
}
