//! Diagnostics for finished packings and the torus-restricted tangency volume.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{ball_volume, sphere_surface_volume, Packing};
use crate::special::cube_quadrature;
use crate::torus::{distance_sq_unchecked, reduce_scalar, TorusConfig};

/// `C(n, k)` in exact integer arithmetic.
pub fn binomial(n: u64, k: u64) -> i128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: i128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as i128 / (i + 1) as i128;
    }
    acc
}

/// Combinatorial factor `b(n, k) = Σ_{l=k}^{3} (-1)^l C(l, k) C(n, l)`.
pub fn combinatorial_factor(n: u64, k: u64) -> i128 {
    (k..=3)
        .map(|l| {
            let sign = if l % 2 == 0 { 1 } else { -1 };
            sign * binomial(l, k) * binomial(n, l)
        })
        .sum()
}

fn check_restricted_dim(n: usize) -> Result<()> {
    if n <= 3 {
        return Err(invalid("n", format!("the restricted volume formula needs n > 3, got {n}")));
    }
    Ok(())
}

/// `c(n, k)`: integral of `(1 - |z|^2)^((n-2-k)/2)` over the centered unit
/// `k`-cube, by Gauss–Legendre with the node count doubled until two
/// successive values agree to `1e-10` relative.
pub fn cube_integral_c(n: usize, k: usize) -> Result<f64> {
    check_restricted_dim(n)?;
    if k > 3 {
        return Err(invalid("k", format!("must be at most 3, got {k}")));
    }
    if k == 0 {
        return Ok(1.0);
    }
    let power = (n as f64 - 2.0 - k as f64) / 2.0;
    let f = |z: &[f64]| (1.0 - z.iter().map(|t| t * t).sum::<f64>()).powf(power);
    let mut m = 4;
    let mut prev = cube_quadrature(f, k, -0.5, 0.5, m);
    while m < 512 {
        m *= 2;
        let next = cube_quadrature(f, k, -0.5, 0.5, m);
        if (next - prev).abs() <= 1e-10 * next.abs() {
            return Ok(next);
        }
        prev = next;
    }
    Err(invalid("n", format!("c({n}, {k}) quadrature did not converge")))
}

/// Volume of the unit sphere restricted to the centered unit cube, and its
/// fraction of the full sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestrictedVolumeReport {
    pub n: usize,
    pub restricted: f64,
    pub full: f64,
    pub fraction: f64,
}

pub fn restricted_sphere_volume(n: usize) -> Result<RestrictedVolumeReport> {
    check_restricted_dim(n)?;
    let mut restricted = 0.0;
    for k in 0..=3usize {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let b = combinatorial_factor(n as u64, k as u64) as f64;
        restricted += sign * sphere_surface_volume(n - k) * b * cube_integral_c(n, k)?;
    }
    // At n = 4 the cube meets the sphere only at its corners and the terms
    // cancel to rounding error.
    let restricted = restricted.max(0.0);
    let full = sphere_surface_volume(n);
    Ok(RestrictedVolumeReport {
        n,
        restricted,
        full,
        fraction: restricted / full,
    })
}

/// Outcome of [`validate_packing`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub count: usize,
    /// Smallest pairwise torus distance; `None` with fewer than two centers.
    pub min_distance: Option<f64>,
    pub valid: bool,
    /// Largest radius at which the centers form a valid packing.
    pub effective_radius: f64,
    pub effective_density: f64,
}

/// Smallest pairwise torus distance, `None` for fewer than two centers.
pub fn min_pair_distance(packing: &Packing) -> Option<f64> {
    let c = &packing.centers;
    let w = packing.width;
    (0..c.len())
        .into_par_iter()
        .flat_map_iter(|i| (i + 1..c.len()).map(move |j| distance_sq_unchecked(&c[i].0, &c[j].0, w)))
        .min_by(f64::total_cmp)
        .map(f64::sqrt)
}

/// Checks that all centers are at least `2 radius - tol` apart.
pub fn validate_packing(packing: &Packing, radius: f64, tol: f64) -> Result<ValidationReport> {
    if !(tol >= 0.0) {
        return Err(invalid("tol", format!("must be nonnegative, got {tol}")));
    }
    let count = packing.count();
    let min_distance = min_pair_distance(packing);
    let (valid, effective_radius) = match min_distance {
        Some(d) => (d >= 2.0 * radius - tol, 0.5 * d),
        None => (true, radius),
    };
    let effective_density = count as f64 * ball_volume(packing.dim, effective_radius) / packing.width.powi(packing.dim as i32);
    Ok(ValidationReport {
        count,
        min_distance,
        valid,
        effective_radius,
        effective_density,
    })
}

/// Binary code read off a packing in the unit torus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CodeDetection {
    Code {
        words: Vec<Vec<u8>>,
        /// `None` for a single word.
        min_hamming: Option<usize>,
    },
    NotACode,
}

pub const DEFAULT_ROUND_TOL: f64 = 0.1;

fn check_unit_width(w: f64) -> Result<()> {
    if w != 1.0 {
        return Err(invalid("width", format!("only defined for the unit torus, got w = {w}")));
    }
    Ok(())
}

/// Phase of `Σ_j exp(i 4π x_j)` over the coordinate `d` of every center, and
/// the normalized magnitude of that sum.
fn frequency_two(packing: &Packing, d: usize) -> (f64, f64) {
    let (mut re, mut im) = (0.0, 0.0);
    for c in &packing.centers {
        let t = 4.0 * PI * c.0[d];
        re += t.cos();
        im += t.sin();
    }
    (im.atan2(re), re.hypot(im) / packing.count() as f64)
}

/// Shift maximizing `Σ_j cos 4π(x_j + s)` for each coordinate.
pub fn optimal_shifts(packing: &Packing) -> Vec<f64> {
    (0..packing.dim).map(|d| -frequency_two(packing, d).0 / (4.0 * PI)).collect()
}

/// Reads the centers as a binary code: each coordinate is shifted by its
/// optimal shift (a translation of the packing), then every coordinate must
/// lie within `round_tol` of a multiple of `1/2`, and `2x mod 2` gives the bit.
pub fn detect_binary_code(packing: &Packing, round_tol: f64) -> Result<CodeDetection> {
    check_unit_width(packing.width)?;
    let shifts = optimal_shifts(packing);
    let mut words = Vec::with_capacity(packing.count());
    for c in &packing.centers {
        let mut word = Vec::with_capacity(packing.dim);
        for (x, s) in c.0.iter().zip(&shifts) {
            let y = 2.0 * reduce_scalar(x + s, 1.0);
            let nearest = y.round();
            if (y - nearest).abs() > 2.0 * round_tol {
                return Ok(CodeDetection::NotACode);
            }
            word.push(nearest.rem_euclid(2.0) as u8);
        }
        words.push(word);
    }
    let min_hamming = (0..words.len())
        .flat_map(|i| (i + 1..words.len()).map(move |j| (i, j)))
        .map(|(i, j)| words[i].iter().zip(&words[j]).filter(|(a, b)| a != b).count())
        .min();
    Ok(CodeDetection::Code { words, min_hamming })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionModulation {
    pub packing: usize,
    pub dim: usize,
    pub shift: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationReport {
    pub dimensions: Vec<DimensionModulation>,
    /// `bins + 1` edges spanning `[-1/2, 1/2]`.
    pub bin_edges: Vec<f64>,
    /// Pooled histogram of the aligned coordinates.
    pub histogram: Vec<u64>,
    /// Mean of the per-dimension amplitudes.
    pub amplitude: f64,
}

pub const DEFAULT_MODULATION_BINS: usize = 50;

/// Aligns every coordinate of every packing by its optimal shift and pools
/// the aligned coordinates into one histogram.
pub fn coordinate_modulation(packings: &[Packing], bins: usize) -> Result<ModulationReport> {
    if packings.is_empty() {
        return Err(Error::Empty("packings"));
    }
    if bins == 0 {
        return Err(invalid("bins", "need at least one bin"));
    }
    let mut dimensions = Vec::new();
    let mut histogram = vec![0u64; bins];
    for (p, packing) in packings.iter().enumerate() {
        check_unit_width(packing.width)?;
        if packing.count() == 0 {
            return Err(Error::Empty("centers"));
        }
        for d in 0..packing.dim {
            let (phase, amplitude) = frequency_two(packing, d);
            let shift = -phase / (4.0 * PI);
            for c in &packing.centers {
                let y = reduce_scalar(c.0[d] + shift, 1.0) + 0.5;
                let b = ((y * bins as f64) as usize).min(bins - 1);
                histogram[b] += 1;
            }
            dimensions.push(DimensionModulation {
                packing: p,
                dim: d,
                shift,
                amplitude,
            });
        }
    }
    let amplitude = dimensions.iter().map(|d| d.amplitude).sum::<f64>() / dimensions.len() as f64;
    let bin_edges = (0..=bins).map(|b| b as f64 / bins as f64 - 0.5).collect();
    Ok(ModulationReport {
        dimensions,
        bin_edges,
        histogram,
        amplitude,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Report {
    pub bin_edges: Vec<f64>,
    pub packing_counts: Vec<u64>,
    /// Mean over the uniform resamples.
    pub reference_counts: Vec<f64>,
    /// `None` where the reference count is zero.
    pub ratio: Vec<Option<f64>>,
    pub pair_count: u64,
}

impl G2Report {
    /// Packing pairs in bins lying entirely below `r`.
    pub fn pairs_below(&self, r: f64) -> u64 {
        self.packing_counts
            .iter()
            .zip(self.bin_edges.windows(2))
            .filter(|(_, e)| e[1] <= r)
            .map(|(c, _)| c)
            .sum()
    }
}

pub const DEFAULT_G2_BIN_FRACTION: f64 = 0.02;
pub const DEFAULT_G2_RESAMPLES: usize = 100;

fn distance_histogram(centers: &[&[f64]], width: f64, bin_width: f64, bins: usize) -> Vec<u64> {
    (0..centers.len())
        .into_par_iter()
        .fold(
            || vec![0u64; bins],
            |mut h, i| {
                for j in i + 1..centers.len() {
                    let r = distance_sq_unchecked(centers[i], centers[j], width).sqrt();
                    h[((r / bin_width) as usize).min(bins - 1)] += 1;
                }
                h
            },
        )
        .reduce(
            || vec![0u64; bins],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

/// Pairwise-distance histogram of the packing over `[0, w√n/2]` divided by the
/// mean histogram of `resamples` uniform configurations of the same size.
pub fn pair_correlation<R: Rng + ?Sized>(
    packing: &Packing,
    bin_width: f64,
    resamples: usize,
    rng: &mut R,
) -> Result<G2Report> {
    if !(bin_width > 0.0) {
        return Err(invalid("bin_width", format!("must be positive, got {bin_width}")));
    }
    if resamples == 0 {
        return Err(invalid("resamples", "need at least one"));
    }
    let torus = TorusConfig::new(packing.dim, packing.width)?;
    let w = torus.width;
    let bins = (torus.max_distance() / bin_width).ceil().max(1.0) as usize;
    let bin_edges = (0..=bins).map(|b| b as f64 * bin_width).collect();
    let views: Vec<&[f64]> = packing.centers.iter().map(|c| c.as_slice()).collect();
    let packing_counts = distance_histogram(&views, w, bin_width, bins);
    let mut reference = vec![0u64; bins];
    let mut sample = vec![0.0; packing.count() * packing.dim];
    for _ in 0..resamples {
        sample.iter_mut().for_each(|x| *x = rng.random_range(-0.5 * w..0.5 * w));
        let views: Vec<&[f64]> = sample.chunks(packing.dim.max(1)).collect();
        let h = distance_histogram(&views, w, bin_width, bins);
        reference.iter_mut().zip(h).for_each(|(a, b)| *a += b);
    }
    let reference_counts: Vec<f64> = reference.iter().map(|&c| c as f64 / resamples as f64).collect();
    let ratio = packing_counts
        .iter()
        .zip(&reference_counts)
        .map(|(&p, &r)| (r > 0.0).then(|| p as f64 / r))
        .collect();
    let n = packing.count() as u64;
    Ok(G2Report {
        bin_edges,
        packing_counts,
        reference_counts,
        ratio,
        pair_count: n * n.saturating_sub(1) / 2,
    })
}
