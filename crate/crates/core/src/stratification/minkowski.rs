//! Tube volumes `Vol(B_r(S) ∩ B_1)` and their log-log slope.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{dist_pad, Lattice};
use crate::numeric::linear_fit;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinkowskiFit {
    pub radii: Vec<f64>,
    pub volumes: Vec<f64>,
    /// Slope of `log Vol` against `log r`.
    pub exponent: f64,
    pub intercept: f64,
}

impl MinkowskiFit {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,volume\n");
        for (r, v) in self.radii.iter().zip(&self.volumes) {
            s.push_str(&format!("{r},{v}\n"));
        }
        s
    }
}

/// Lattice volume of the `r`-neighbourhood of `points` for each radius.
pub fn tube_volumes(lattice: &Lattice, points: &[Vec<f64>], radii: &[f64]) -> Vec<f64> {
    let r_max = radii.iter().copied().fold(0.0, f64::max);
    let mut nearest = vec![f64::INFINITY; lattice.len()];
    for s in points {
        lattice.for_each_near(s, r_max, |n, p| {
            let d = dist_pad(&p, s);
            if d < nearest[n] {
                nearest[n] = d;
            }
        });
    }
    radii
        .iter()
        .map(|&r| {
            let w: f64 = (0..lattice.len())
                .filter(|&n| nearest[n].is_finite())
                .map(|n| lattice.ramp(nearest[n], r) * lattice.domain_weight(n))
                .sum();
            w * lattice.cell_volume()
        })
        .collect()
}

/// Fits `Vol(B_r(S)) ~ C r^exponent` over at least four radii spanning a decade.
pub fn minkowski_fit(lattice: &Lattice, points: &[Vec<f64>], radii: &[f64]) -> Result<MinkowskiFit> {
    if points.is_empty() {
        return Err(Error::DegenerateFit("empty point set".into()));
    }
    if radii.len() < 4 {
        return Err(Error::invalid("Minkowski fit needs at least four radii"));
    }
    let (lo, hi) = radii.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    if !(lo > 0.0) || hi / lo < 10.0 * (1.0 - 1e-9) {
        return Err(Error::invalid("Minkowski radii must be positive and span at least one decade"));
    }
    let volumes = tube_volumes(lattice, points, radii);
    if volumes.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::DegenerateFit("zero tube volume at some radius".into()));
    }
    let lx: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ly: Vec<f64> = volumes.iter().map(|v| v.ln()).collect();
    let (exponent, intercept) = linear_fit(&lx, &ly);
    Ok(MinkowskiFit { radii: radii.to_vec(), volumes, exponent, intercept })
}

/// `count` radii geometrically spaced on `[lo, hi]`.
pub fn radii_ladder(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let q = (hi / lo).powf(1.0 / (count.max(2) - 1) as f64);
    (0..count).map(|i| lo * q.powi(i as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_scales_like_volume() {
        let lat = Lattice::new(3, 32).unwrap();
        let fit = minkowski_fit(&lat, &[vec![0.0; 3]], &radii_ladder(0.05, 0.5, 6)).unwrap();
        assert!((fit.exponent - 3.0).abs() < 0.2, "{}", fit.exponent);
    }

    #[test]
    fn segment_scales_like_area() {
        let lat = Lattice::new(3, 32).unwrap();
        let pts: Vec<Vec<f64>> = (0..=200).map(|i| vec![-1.0 + i as f64 / 100.0, 0.0, 0.0]).collect();
        let fit = minkowski_fit(&lat, &pts, &radii_ladder(0.05, 0.5, 6)).unwrap();
        assert!((fit.exponent - 2.0).abs() < 0.2, "{}", fit.exponent);
    }

    #[test]
    fn degenerate_inputs() {
        let lat = Lattice::new(2, 8).unwrap();
        assert!(matches!(minkowski_fit(&lat, &[], &radii_ladder(0.05, 0.5, 4)), Err(Error::DegenerateFit(_))));
        assert!(minkowski_fit(&lat, &[vec![0.0; 2]], &[0.1, 0.2, 0.3]).is_err());
    }
}
