//! Divide-and-concur projectors.
//!
//! `A` is the set where every pair of sphere-center copies `(x_ij, x_ji)` is
//! at torus distance at least `2r`; `B` is the set where all copies of each
//! sphere agree. Both are computed with respect to the torus distance.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::torus::{reduce_scalar, TorusVector};

/// Output of [`project_disjoint`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairProjectionResult {
    pub first: TorusVector,
    pub second: TorusVector,
    pub moved: bool,
}

/// Positive per-copy weights used by the concur projection of one sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcurWeights(Vec<f64>);

impl ConcurWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(bad) = weights.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(invalid("weights", format!("must be positive and finite, got {bad}")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(len: usize) -> Self {
        Self(vec![1.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Replaces a reduced pair difference `u` by the nearest `u'` with
/// `|u'|_inf <= w/2` and `|u'|_2 >= 2r`. Returns `false` and leaves `u`
/// untouched when it is already feasible.
///
/// Components whose rescaled magnitude would leave the box are pinned to
/// `±w/2` and the remaining block is solved again with the reduced norm
/// target; for `w >= 2r` at most four rounds ever pin anything. A zero free
/// block with a positive target gets a random direction from `rng`.
pub(crate) fn separate_in_place<R: Rng + ?Sized>(
    u: &mut [f64],
    clamped: &mut [bool],
    radius: f64,
    width: f64,
    rng: &mut R,
) -> bool {
    let half = 0.5 * width;
    let mut target = 4.0 * radius * radius;
    let norm_sq: f64 = u.iter().map(|c| c * c).sum();
    if norm_sq >= target {
        return false;
    }
    clamped.iter_mut().for_each(|c| *c = false);

    loop {
        if target <= 0.0 {
            break;
        }
        let mut free_sq = 0.0;
        let mut free_count = 0usize;
        for (c, &pinned) in u.iter().zip(clamped.iter()) {
            if !pinned {
                free_sq += c * c;
                free_count += 1;
            }
        }
        if free_count == 0 || free_sq >= target {
            break;
        }
        if free_sq == 0.0 {
            // Degenerate: every direction in the free block is a nearest point.
            // The sampled direction is shrunk so the rescaling below, not the
            // sample's own length, sets the final norm.
            while free_sq == 0.0 {
                for (c, &pinned) in u.iter_mut().zip(clamped.iter()) {
                    if !pinned {
                        *c = rng.sample::<f64, _>(StandardNormal);
                        free_sq += *c * *c;
                    }
                }
            }
            let shrink = 1e-6 * (target / free_sq).sqrt();
            for (c, &pinned) in u.iter_mut().zip(clamped.iter()) {
                if !pinned {
                    *c *= shrink;
                }
            }
            free_sq *= shrink * shrink;
        }
        let scale = (target / free_sq).sqrt();
        let mut pinned_any = false;
        for (c, pinned) in u.iter_mut().zip(clamped.iter_mut()) {
            if !*pinned && c.abs() * scale > half {
                *c = half.copysign(*c);
                *pinned = true;
                target -= half * half;
                pinned_any = true;
            }
        }
        if !pinned_any {
            for (c, &pinned) in u.iter_mut().zip(clamped.iter()) {
                if !pinned {
                    *c *= scale;
                }
            }
            break;
        }
    }
    true
}

/// Moves two sphere centers apart, symmetrically and by the least distance,
/// until their spheres of radius `radius` no longer overlap on the torus.
pub fn project_disjoint<R: Rng + ?Sized>(
    x1: &[f64],
    x2: &[f64],
    radius: f64,
    width: f64,
    rng: &mut R,
) -> Result<PairProjectionResult> {
    check_dim(x1.len(), x2.len())?;
    if !(radius > 0.0) {
        return Err(invalid("radius", "must be positive"));
    }
    if 2.0 * radius > width {
        return Err(invalid("radius", format!("diameter {} exceeds torus width {width}", 2.0 * radius)));
    }
    let original: Vec<f64> = x1.iter().zip(x2).map(|(a, b)| reduce_scalar(a - b, width)).collect();
    let mut u = original.clone();
    let mut clamped = vec![false; u.len()];
    if !separate_in_place(&mut u, &mut clamped, radius, width, rng) {
        return Ok(PairProjectionResult {
            first: TorusVector(x1.to_vec()),
            second: TorusVector(x2.to_vec()),
            moved: false,
        });
    }
    let mut first = x1.to_vec();
    let mut second = x2.to_vec();
    for k in 0..u.len() {
        let half_shift = 0.5 * (u[k] - original[k]);
        first[k] += half_shift;
        second[k] -= half_shift;
    }
    Ok(PairProjectionResult {
        first: TorusVector(first),
        second: TorusVector(second),
        moved: true,
    })
}

/// Maps `y` into `[0, w)`.
#[inline]
fn wrap_positive(y: f64, width: f64) -> f64 {
    let t = y - width * (y / width).floor();
    if t >= width {
        t - width
    } else {
        t
    }
}

/// Sorts `(coordinate, weight)` pairs on the circle and returns the index of
/// the cheapest cut together with the weighted mean for that cut.
///
/// `scratch` holds the pairs on entry and is left sorted with coordinates in
/// `[0, w)`.
fn best_cut(scratch: &mut [(f64, f64)], width: f64) -> (usize, f64) {
    for p in scratch.iter_mut() {
        p.0 = wrap_positive(p.0, width);
    }
    scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    let mut total = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &(t, g) in scratch.iter() {
        total += g;
        s1 += g * t;
        s2 += g * t * t;
    }
    let mut best = (0usize, s2 - s1 * s1 / total, s1);
    for k in 1..scratch.len() {
        // Cut k: the first k sorted points wrap around to the top of the circle.
        let (t, g) = scratch[k - 1];
        s1 += g * width;
        s2 += g * width * (2.0 * t + width);
        let cost = s2 - s1 * s1 / total;
        if cost < best.1 {
            best = (k, cost, s1);
        }
    }
    (best.0, best.2 / total)
}

/// Weighted concurrence on one circle coordinate, returning the reduced mean.
/// `scratch` is overwritten.
#[inline]
pub(crate) fn concur_scalar(scratch: &mut [(f64, f64)], width: f64) -> f64 {
    let (_, mean) = best_cut(scratch, width);
    reduce_scalar(mean, width)
}

/// Costs `sum_j g_j (ybar_k - y_j)^2` of the unwrapped quadratic for every cut
/// of the circle, in sorted order, computed incrementally.
pub fn concur_cut_costs(ys: &[f64], weights: &[f64], width: f64) -> Result<Vec<f64>> {
    check_concur_input(ys, weights)?;
    let mut pts: Vec<(f64, f64)> = ys.iter().map(|&y| wrap_positive(y, width)).zip(weights.iter().copied()).collect();
    pts.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = weights.iter().sum();
    let mut s1: f64 = pts.iter().map(|(t, g)| g * t).sum();
    let mut s2: f64 = pts.iter().map(|(t, g)| g * t * t).sum();
    let mut costs = Vec::with_capacity(pts.len());
    costs.push(s2 - s1 * s1 / total);
    for k in 1..pts.len() {
        let (t, g) = pts[k - 1];
        s1 += g * width;
        s2 += g * width * (2.0 * t + width);
        costs.push(s2 - s1 * s1 / total);
    }
    Ok(costs)
}

fn check_concur_input(ys: &[f64], weights: &[f64]) -> Result<()> {
    if ys.is_empty() {
        return Err(Error::Empty("concur needs at least one copy"));
    }
    check_dim(ys.len(), weights.len())?;
    if let Some(bad) = weights.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
        return Err(invalid("weights", format!("must be positive and finite, got {bad}")));
    }
    Ok(())
}

/// Weighted torus cost `sum_j g_j [ybar - y_j]_w^2`.
pub fn concur_cost(ybar: f64, ys: &[f64], weights: &[f64], width: f64) -> f64 {
    ys.iter()
        .zip(weights)
        .map(|(&y, &g)| {
            let d = reduce_scalar(ybar - y, width);
            g * d * d
        })
        .sum()
}

/// Point on the circle of width `w` minimizing the weighted squared torus
/// distance to `ys`. Returns the minimizer (reduced) and its cost.
pub fn project_concur_1d(ys: &[f64], weights: &[f64], width: f64) -> Result<(f64, f64)> {
    check_concur_input(ys, weights)?;
    let mut scratch: Vec<(f64, f64)> = ys.iter().copied().zip(weights.iter().copied()).collect();
    let ybar = concur_scalar(&mut scratch, width);
    Ok((ybar, concur_cost(ybar, ys, weights, width)))
}

/// Concurred center of a set of copies; the dimensions are independent.
pub fn project_concur(copies: &[TorusVector], weights: &ConcurWeights, width: f64) -> Result<TorusVector> {
    let first = copies.first().ok_or(Error::Empty("concur needs at least one copy"))?;
    check_dim(copies.len(), weights.len())?;
    let dim = first.dim();
    for c in copies {
        check_dim(dim, c.dim())?;
    }
    let mut scratch = Vec::with_capacity(copies.len());
    let center = (0..dim)
        .map(|d| {
            scratch.clear();
            scratch.extend(copies.iter().zip(weights.as_slice()).map(|(c, &g)| (c.0[d], g)));
            concur_scalar(&mut scratch, width)
        })
        .collect();
    Ok(TorusVector(center))
}
