//! Packing instances and density bookkeeping.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::special::{ln_gamma_half_plus_one, zeta};
use crate::torus::TorusConfig;

/// Radius of the unit-diameter spheres being packed.
pub const UNIT_RADIUS: f64 = 0.5;

/// `N` unit-diameter spheres in the `n`-torus of width `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PackingInstance {
    pub dim: usize,
    pub count: usize,
    pub width: f64,
    pub radius: f64,
}

impl PackingInstance {
    pub fn new(dim: usize, count: usize, width: f64) -> Result<Self> {
        TorusConfig::new(dim, width)?;
        if count == 0 {
            return Err(invalid("count", "need at least one sphere"));
        }
        if width < 2.0 * UNIT_RADIUS {
            return Err(invalid("width", format!("{width} is smaller than the sphere diameter")));
        }
        Ok(Self {
            dim,
            count,
            width,
            radius: UNIT_RADIUS,
        })
    }

    pub fn torus(&self) -> TorusConfig {
        TorusConfig {
            dim: self.dim,
            width: self.width,
        }
    }

    pub fn density(&self) -> f64 {
        density(self.dim, self.count, self.width)
    }

    pub fn report(&self) -> GeometryReport {
        GeometryReport::new(self)
    }
}

/// Volume of the `n`-ball of radius `r`.
pub fn ball_volume(n: usize, r: f64) -> f64 {
    let nf = n as f64;
    (0.5 * nf * PI.ln() + nf * r.ln() - ln_gamma_half_plus_one(n as u32)).exp()
}

/// Surface volume `a_m = m v_m(1)` of the unit sphere in `R^m`.
pub fn sphere_surface_volume(m: usize) -> f64 {
    m as f64 * ball_volume(m, 1.0)
}

/// Density `N v_n(1/2) / w^n` of the periodic packing.
pub fn density(n: usize, count: usize, width: f64) -> f64 {
    count as f64 * ball_volume(n, UNIT_RADIUS) / width.powi(n as i32)
}

/// Ball's lower bound `(n-1) 2^(1-n) ζ(n)`.
pub fn ball_bound(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(invalid("n", format!("Ball's bound needs n >= 2, got {n}")));
    }
    Ok((n as f64 - 1.0) * 2f64.powi(1 - n as i32) * zeta(n as u32))
}

/// Instance whose density is exactly `ratio` times Ball's bound: the
/// fractional sphere count at `w = 1` is rounded up and the width grown to
/// compensate.
pub fn density_target_instance(n: usize, ratio: f64) -> Result<PackingInstance> {
    if n < 4 {
        return Err(invalid("n", format!("density targets need n >= 4, got {n}")));
    }
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(invalid("ratio", format!("must be positive, got {ratio}")));
    }
    let target = ratio * ball_bound(n)?;
    let unit = ball_volume(n, UNIT_RADIUS);
    let count = (target / unit).ceil().max(1.0) as usize;
    let width = (count as f64 * unit / target).powf(1.0 / n as f64);
    PackingInstance::new(n, count, width)
}

/// Instance at twice Ball's density.
pub fn double_ball_instance(n: usize) -> Result<PackingInstance> {
    density_target_instance(n, 2.0)
}

/// Volumes and densities of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub sphere_volume: f64,
    pub density: f64,
    pub ball_bound: f64,
    pub ratio: f64,
}

impl GeometryReport {
    pub fn new(instance: &PackingInstance) -> Self {
        let density = instance.density();
        let bound = ball_bound(instance.dim).unwrap_or(f64::NAN);
        Self {
            sphere_volume: ball_volume(instance.dim, instance.radius),
            density,
            ball_bound: bound,
            ratio: density / bound,
        }
    }
}

/// Sphere centers of a finished packing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Packing {
    pub dim: usize,
    pub width: f64,
    pub seed: u64,
    pub centers: Vec<crate::torus::TorusVector>,
}

impl Packing {
    pub fn count(&self) -> usize {
        self.centers.len()
    }

    pub fn torus(&self) -> TorusConfig {
        TorusConfig {
            dim: self.dim,
            width: self.width,
        }
    }

    pub fn density(&self) -> f64 {
        density(self.dim, self.count(), self.width)
    }

    /// Copy with every center shifted by `shift` and reduced.
    pub fn translated(&self, shift: &[f64]) -> Self {
        let centers = self
            .centers
            .iter()
            .map(|c| {
                let moved: Vec<f64> = c.0.iter().zip(shift).map(|(a, b)| a + b).collect();
                crate::torus::reduce(&moved, self.width)
            })
            .collect();
        Self {
            centers,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(k: u32) -> f64 {
        (1..=k).map(f64::from).product()
    }

    #[test]
    fn ball_volume_examples() {
        assert!((ball_volume(2, 1.0) - PI).abs() < 1e-14);
        assert!((ball_volume(3, 0.5) - PI / 6.0).abs() < 1e-15);
        let v14 = PI.powi(7) / (factorial(7) * 2f64.powi(14));
        assert!((ball_volume(14, 0.5) / v14 - 1.0).abs() < 1e-13);
        assert!((ball_volume(14, 0.5) - 3.6576e-5).abs() < 1e-8);
    }

    #[test]
    fn ball_volume_recurrence() {
        for n in 3..=30 {
            let lhs = ball_volume(n, 1.0);
            let rhs = ball_volume(n - 2, 1.0) * 2.0 * PI / n as f64;
            assert!((lhs / rhs - 1.0).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn surface_volumes() {
        assert!((sphere_surface_volume(2) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_surface_volume(3) - 4.0 * PI).abs() < 1e-13);
        let a10 = 10.0 * PI.powi(5) / factorial(5);
        assert!((sphere_surface_volume(10) - a10).abs() < 1e-12);
        assert!((a10 - 25.5016).abs() < 1e-4);
    }

    #[test]
    fn density_examples() {
        for n in 1..12 {
            assert_eq!(density(n, 1, 1.0), ball_volume(n, 0.5));
        }
        let best = 40.0 * PI.powi(5) / (factorial(5) * 2f64.powi(10));
        assert!((density(10, 40, 1.0) / best - 1.0).abs() < 1e-13);
        assert!((best - 0.09962).abs() < 1e-5);
        let ratio = density(14, 115, 1.0) / ball_bound(14).unwrap();
        assert!((ratio - 2.651).abs() < 1e-3, "ratio {ratio}");
    }

    #[test]
    fn density_monotonicity() {
        assert!(density(8, 10, 1.0) < density(8, 11, 1.0));
        assert!(density(8, 10, 1.01) < density(8, 10, 1.0));
    }

    #[test]
    fn ball_bound_examples() {
        assert!((ball_bound(2).unwrap() - PI * PI / 12.0).abs() < 1e-14);
        assert!((ball_bound(14).unwrap() - 1.5870e-3).abs() < 1e-7);
        let big = ball_bound(60).unwrap() / (59.0 * 2f64.powi(-59));
        assert!((big - 1.0).abs() < 1e-15);
        assert!(ball_bound(1).is_err());
    }

    #[test]
    fn double_ball_instances() {
        for n in 4..=24 {
            let inst = double_ball_instance(n).unwrap();
            let ratio = inst.density() / ball_bound(n).unwrap();
            assert!((ratio / 2.0 - 1.0).abs() < 1e-12, "n = {n}");
            assert!(inst.width >= 1.0);
            if n >= 6 {
                assert!(inst.width < 1.05, "n = {n}, w = {}", inst.width);
            }
        }
        assert_eq!(double_ball_instance(22).unwrap().count, 11397);
        let i14 = double_ball_instance(14).unwrap();
        assert_eq!(i14.count, 87);
        assert!((i14.width - 1.00018).abs() < 1e-5, "w = {}", i14.width);
        assert!(double_ball_instance(3).is_err());
    }

    #[test]
    fn instance_validation() {
        assert!(PackingInstance::new(4, 0, 1.0).is_err());
        assert!(PackingInstance::new(4, 2, 0.9).is_err());
        let r = PackingInstance::new(14, 115, 1.0).unwrap().report();
        assert!(r.sphere_volume > 0.0 && r.ratio > 2.6);
    }
}
