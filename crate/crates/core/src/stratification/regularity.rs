//! Scale-invariant C^{1,alpha} norms and the regularity scale.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{GradientField, Lattice};
use crate::map::JacobianSource;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularityConfig {
    pub alpha: f64,
    /// Hölder pairs evaluated per sublattice level.
    pub max_pairs: usize,
    /// Upper cap for the regularity scale (the domain radius).
    pub cap: f64,
    /// Relative bracket width at which bisection stops.
    pub rel_tol: f64,
}

impl Default for RegularityConfig {
    fn default() -> Self {
        Self { alpha: 0.25, max_pairs: 10_000, cap: 1.0, rel_tol: 0.005 }
    }
}

impl RegularityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("Hölder exponent must lie in (0,1), got {}", self.alpha)));
        }
        if !(self.cap > 0.0 && self.rel_tol > 0.0) || self.max_pairs == 0 {
            return Err(Error::invalid("regularity cap, tolerance and pair budget must be positive"));
        }
        Ok(())
    }
}

/// Gradients and their norms, shared by all norm evaluations.
pub struct RegularityProbe {
    grads: GradientField,
    norms: Vec<f64>,
    cfg: RegularityConfig,
    /// `|y - z|^{-alpha} = (h^2 q)^{-alpha/2}` for integer squared offsets `q`.
    inv_dist_pow: Vec<f64>,
}

const DIST_TABLE_MAX: usize = 1 << 20;

impl RegularityProbe {
    pub fn new(src: &dyn JacobianSource, cfg: RegularityConfig) -> Result<Self> {
        cfg.validate()?;
        let lat = src.lattice().clone();
        let stride = lat.dim() * src.ncomp();
        let mut data = vec![0.0; lat.len() * stride];
        for n in 0..lat.len() {
            src.jacobian_into(n, &mut data[n * stride..(n + 1) * stride]);
        }
        let grads = GradientField { lattice: lat, ncomp: src.ncomp(), data };
        let norms = grads.norms();
        let side = 2 * grads.lattice.resolution();
        let qmax = (grads.lattice.dim() * side * side).min(DIST_TABLE_MAX);
        let h2 = grads.lattice.h().powi(2);
        let inv_dist_pow = (0..=qmax).map(|q| if q == 0 { 0.0 } else { (h2 * q as f64).powf(-0.5 * cfg.alpha) }).collect();
        Ok(Self { grads, norms, cfg, inv_dist_pow })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.grads.lattice
    }

    pub fn config(&self) -> &RegularityConfig {
        &self.cfg
    }

    pub fn gradient_norm(&self, node: usize) -> f64 {
        self.norms[node]
    }

    fn ball_max(&self, x: &[f64], r: f64) -> Option<f64> {
        let mut gmax = 0.0f64;
        let mut any = false;
        self.lattice().for_each_near(x, r, |n, p| {
            if crate::lattice::dist_pad(&p, x) <= r {
                gmax = gmax.max(self.norms[n]);
                any = true;
            }
        });
        any.then_some(gmax)
    }

    /// `r sup |grad f| + r^{1+alpha} [grad f]_{alpha}` over lattice nodes in `B_r(x)`.
    pub fn norm_at(&self, x: &[f64], r: f64) -> f64 {
        match self.ball_max(x, r) {
            None => 0.0,
            Some(g) => r * g + r.powf(1.0 + self.cfg.alpha) * self.holder(x, r, f64::INFINITY),
        }
    }

    /// Whether `norm_at(x, r) > threshold`, skipping the pair scan when a bound decides.
    pub fn exceeds(&self, x: &[f64], r: f64, threshold: f64) -> bool {
        let Some(g) = self.ball_max(x, r) else { return 0.0 > threshold };
        let first = r * g;
        if first > threshold {
            return true;
        }
        // Pairs are at least one cell apart and differ by at most 2g.
        let weight = r.powf(1.0 + self.cfg.alpha);
        let h = self.lattice().h();
        if first + weight * 2.0 * g * h.powf(-self.cfg.alpha) <= threshold {
            return false;
        }
        let limit = (threshold - first) / weight;
        self.holder(x, r, limit) > limit
    }

    /// Hölder quotient of the gradient over pairs in `B_r(x)`.
    ///
    /// Level `l` uses the sublattice of stride `2^l` inside a ball holding about
    /// `sqrt(2 max_pairs)` nodes; every level's ball grows with `r`, so the estimate
    /// is monotone in `r`.
    /// Stops as soon as the quotient exceeds `limit`.
    fn holder(&self, x: &[f64], r: f64, limit: f64) -> f64 {
        let lat = self.lattice();
        let m = lat.dim();
        let h = lat.h();
        let per_level = ((2 * self.cfg.max_pairs) as f64).sqrt();
        let base = h * (per_level / crate::numeric::unit_ball_volume(m)).powf(1.0 / m as f64);
        let mut best = 0.0f64;
        let mut stride = 1usize;
        let mut nodes = Vec::new();
        loop {
            let reach = base * stride as f64;
            let rr = r.min(reach);
            nodes.clear();
            lat.for_each_near(x, rr, |n, p| {
                let c = lat.cell_index(n);
                if (0..m).all(|k| c[k] as usize % stride == 0) && crate::lattice::dist_pad(&p, x) <= rr {
                    nodes.push(n);
                }
            });
            best = best.max(self.pair_max(&nodes, limit));
            if best > limit || r <= reach || stride > 2 * lat.resolution() {
                return best;
            }
            stride *= 2;
        }
    }

    fn pair_max(&self, nodes: &[usize], limit: f64) -> f64 {
        let lat = self.lattice();
        let ncol = self.grads.lattice.dim() * self.grads.ncomp;
        let cells: Vec<[i64; 3]> = nodes
            .iter()
            .map(|&n| {
                let c = lat.cell_index(n);
                [c[0] as i64, c[1] as i64, c[2] as i64]
            })
            .collect();
        // Compare squared quotients; `limit` is converted accordingly.
        let limit2 = if limit.is_finite() { limit * limit } else { f64::INFINITY };
        let mut best2 = 0.0f64;
        for (i, &a) in nodes.iter().enumerate() {
            let ga = self.grads.at(a);
            for (j, &b) in nodes.iter().enumerate().skip(i + 1) {
                let gb = self.grads.at(b);
                let mut diff2 = 0.0;
                for c in 0..ncol {
                    let d = ga[c] - gb[c];
                    diff2 += d * d;
                }
                if diff2 == 0.0 {
                    continue;
                }
                let q = ((cells[i][0] - cells[j][0]).pow(2) + (cells[i][1] - cells[j][1]).pow(2) + (cells[i][2] - cells[j][2]).pow(2))
                    as usize;
                let w = match self.inv_dist_pow.get(q) {
                    Some(&w) => w,
                    None => (lat.h().powi(2) * q as f64).powf(-0.5 * self.cfg.alpha),
                };
                let v = diff2 * w * w;
                if v > best2 {
                    best2 = v;
                    if best2 > limit2 {
                        return best2.sqrt();
                    }
                }
            }
        }
        best2.sqrt()
    }

    /// Regularity scale at a node: largest `r <= cap` with `norm_at(x, r) <= 1`.
    pub fn scale_at(&self, node: usize) -> f64 {
        let lat = self.lattice();
        let x = lat.point(node);
        let g = self.norms[node];
        // The gradient term alone forces r <= 1/|grad f(x)|.
        let mut hi = if g > 0.0 { (1.0 / g).min(self.cfg.cap) } else { self.cfg.cap };
        if !self.exceeds(&x, hi, 1.0) {
            return hi;
        }
        let mut lo = 0.25 * lat.h();
        if self.exceeds(&x, lo, 1.0) {
            return 0.0;
        }
        while hi / lo > 1.0 + self.cfg.rel_tol {
            let mid = (lo * hi).sqrt();
            if !self.exceeds(&x, mid, 1.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Nodes whose regularity scale is below `r`, i.e. `norm_at(x, r) > 1`.
    pub fn below(&self, r: f64) -> Vec<usize> {
        let lat = self.lattice();
        (0..lat.len()).filter(|&n| self.exceeds(&lat.point(n), r, 1.0)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityScaleField {
    pub alpha: f64,
    pub h: f64,
    /// Regularity scale per node.
    pub scales: Vec<f64>,
}

impl RegularityScaleField {
    /// `B_r(f) = {x : r_f(x) < r}` as node indices.
    pub fn bad_set(&self, r: f64) -> Vec<usize> {
        (0..self.scales.len()).filter(|&n| self.scales[n] < r).collect()
    }
}

/// Regularity scale at every node, by bisection on the monotone map `r -> ||f||_{x,r}`.
///
/// The cost grows with the ball size, so this is meant for moderate lattices;
/// `RegularityProbe::below` answers single-radius queries more cheaply.
pub fn regularity_scale(src: &dyn JacobianSource, cfg: RegularityConfig) -> Result<RegularityScaleField> {
    let probe = RegularityProbe::new(src, cfg)?;
    let lat = probe.lattice();
    let scales = (0..lat.len()).map(|n| probe.scale_at(n)).collect();
    Ok(RegularityScaleField { alpha: cfg.alpha, h: lat.h(), scales })
}
