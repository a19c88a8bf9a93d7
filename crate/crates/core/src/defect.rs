//! Energy measures of map sequences, concentration sets and defect masses.

use std::sync::Arc;

use serde::Serialize;

use crate::energy::EnergyDensity;
use crate::error::{Error, Result};
use crate::lattice::{GradientField, Lattice, Region};
use crate::map::JacobianSource;
use crate::numeric::{dist, norm};
use crate::stratification::census::components;
use crate::stratification::minkowski::tube_volumes;

/// Nodal density of `|grad u|^p dV`, optionally with the Jacobians it came from.
#[derive(Debug, Clone)]
pub struct EnergyMeasure {
    lattice: Arc<Lattice>,
    p: f64,
    density: Vec<f64>,
    gradients: Option<GradientField>,
}

impl EnergyMeasure {
    pub fn from_source(src: &dyn JacobianSource, p: f64) -> Result<Self> {
        let density = EnergyDensity::new(src, p)?.values().to_vec();
        let lat = src.lattice().clone();
        let stride = lat.dim() * src.ncomp();
        let mut data = vec![0.0; lat.len() * stride];
        for n in 0..lat.len() {
            src.jacobian_into(n, &mut data[n * stride..(n + 1) * stride]);
        }
        let gradients = Some(GradientField { lattice: lat.clone(), ncomp: src.ncomp(), data });
        Ok(Self { lattice: lat, p, density, gradients })
    }

    /// Synthetic measure from a nonnegative nodal density.
    pub fn from_density(lattice: Arc<Lattice>, p: f64, density: Vec<f64>) -> Result<Self> {
        if density.len() != lattice.len() {
            return Err(Error::DimensionMismatch { expected: lattice.len(), got: density.len() });
        }
        if density.iter().any(|&d| !(d >= 0.0)) {
            return Err(Error::invalid("measure densities must be nonnegative"));
        }
        Ok(Self { lattice, p, density, gradients: None })
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Per-node masses `density * domain weight * cell volume`.
    pub fn cell_masses(&self) -> Vec<f64> {
        let v = self.lattice.cell_volume();
        (0..self.lattice.len()).map(|n| self.density[n] * self.lattice.domain_weight(n) * v).collect()
    }

    pub fn mass(&self, region: &Region) -> Result<f64> {
        self.lattice.integrate_values(&self.density, region)
    }

    pub fn total(&self) -> f64 {
        self.mass(&Region::Domain).unwrap_or(0.0)
    }

    /// `r^{p-m} mu(B_r(x))`.
    pub fn theta(&self, x: &[f64], r: f64) -> Result<f64> {
        self.lattice.check_ball(x, r)?;
        let m = self.lattice.dim() as f64;
        Ok(r.powf(self.p - m) * self.mass(&Region::Ball { center: x.to_vec(), radius: r })?)
    }

    /// `r^{p-m} int_{s < |y-x| < r} |grad u|^{p-2} |d_r u|^2`, zero without Jacobians.
    pub fn radial_energy(&self, x: &[f64], inner: f64, outer: f64) -> Result<f64> {
        let Some(g) = &self.gradients else { return Ok(0.0) };
        let lat = &self.lattice;
        let m = lat.dim();
        let ncomp = g.ncomp;
        let region = Region::Annulus { center: x.to_vec(), inner, outer };
        lat.check_region(&region)?;
        let mut vals = vec![0.0; lat.len()];
        lat.for_each_near(x, outer, |n, pos| {
            let mut dir = [0.0; 3];
            for k in 0..m {
                dir[k] = pos[k] - x[k];
            }
            let d = norm(&dir[..m]);
            if d == 0.0 {
                return;
            }
            let jac = g.at(n);
            let mut radial2 = 0.0;
            for a in 0..ncomp {
                let v: f64 = (0..m).map(|i| jac[i * ncomp + a] * dir[i] / d).sum();
                radial2 += v * v;
            }
            let g2: f64 = jac.iter().map(|v| v * v).sum();
            vals[n] = if g2 > 0.0 { g2.powf(0.5 * (self.p - 2.0)) * radial2 } else { 0.0 };
        });
        Ok(outer.powf(self.p - m as f64) * lat.integrate_values(&vals, &region)?)
    }
}

/// Energy measures of a sequence and of its limit candidate.
#[derive(Debug, Clone)]
pub struct Accumulation {
    pub measures: Vec<EnergyMeasure>,
    pub limit: EnergyMeasure,
}

fn same_lattice(a: &Lattice, b: &Lattice) -> bool {
    a.dim() == b.dim() && a.resolution() == b.resolution() && a.len() == b.len()
}

/// Measures of every map; the limit is `limit` if given, else the last map.
pub fn accumulate(seq: &[&dyn JacobianSource], p: f64, limit: Option<&dyn JacobianSource>) -> Result<Accumulation> {
    let first = seq.first().ok_or_else(|| Error::invalid("empty map sequence"))?;
    let lat = first.lattice().clone();
    for (i, f) in seq.iter().enumerate().skip(1) {
        if !same_lattice(&lat, f.lattice()) {
            return Err(Error::MismatchedLattices(format!("map {i} lives on a different lattice")));
        }
    }
    if let Some(l) = limit {
        if !same_lattice(&lat, l.lattice()) {
            return Err(Error::MismatchedLattices("limit map lives on a different lattice".into()));
        }
    }
    let measures = seq.iter().map(|f| EnergyMeasure::from_source(*f, p)).collect::<Result<Vec<_>>>()?;
    let limit = match limit {
        Some(l) => EnergyMeasure::from_source(l, p)?,
        None => measures.last().cloned().expect("non-empty"),
    };
    Ok(Accumulation { measures, limit })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefectConfig {
    /// Density threshold for the concentration set.
    pub eps: f64,
    /// Ladder radii tested at every candidate point.
    pub radii: Vec<f64>,
    /// Number of trailing measures whose minimum stands in for the liminf.
    pub tail: usize,
}

impl Default for DefectConfig {
    fn default() -> Self {
        Self { eps: 2.0 * std::f64::consts::PI, radii: vec![0.125, 0.25, 0.5], tail: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaCluster {
    pub nodes: Vec<usize>,
    pub center: Vec<f64>,
    /// Node with the largest tail-min density at the smallest ladder radius.
    pub peak: usize,
    /// Largest distance from the center to a cluster node.
    pub extent: f64,
    /// Ball radius used for the cluster's defect mass.
    pub radius: f64,
    pub defect_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub sigma_nodes: Vec<usize>,
    /// Tail-min density at the smallest ladder radius, per sigma node.
    pub densities: Vec<f64>,
    pub clusters: Vec<SigmaCluster>,
    /// `min_tail mu_i(B_1) - mu_lim(B_1)`.
    pub defect_mass: f64,
    pub limit_energy: f64,
    /// Smallest per-node tail-min mass minus limit mass (mass accounting check).
    pub min_cell_defect: f64,
    /// Defect mass per detected point when `m = p` (zero-dimensional support).
    pub density_ratio: Option<f64>,
    /// `(r, Vol(B_r(Sigma)))` over the ladder.
    pub tube_volumes: Vec<(f64, f64)>,
}

impl ConcentrationReport {
    pub fn contains(&self, lattice: &Lattice, x: &[f64]) -> bool {
        self.sigma_nodes.iter().any(|&n| dist(&lattice.point(n), x) <= lattice.h())
    }
}

/// Upper bounds for ball masses via summed box sums on the full grid.
struct BoxSums {
    side: usize,
    dim: usize,
    table: Vec<f64>,
}

impl BoxSums {
    fn new(lat: &Lattice, masses: &[f64]) -> Self {
        let dim = lat.dim();
        let side = 2 * lat.resolution();
        let s1 = side + 1;
        let size = if dim == 2 { s1 * s1 } else { s1 * s1 * s1 };
        let mut table = vec![0.0; size];
        let idx = |i: usize, j: usize, k: usize| i + s1 * (j + s1 * k);
        for (n, &v) in masses.iter().enumerate() {
            let c = lat.cell_index(n);
            let k = if dim == 2 { 0 } else { c[2] as usize + 1 };
            table[idx(c[0] as usize + 1, c[1] as usize + 1, k)] += v;
        }
        let kmax = if dim == 2 { 1 } else { s1 };
        for k in 0..kmax {
            for j in 0..s1 {
                for i in 0..s1 {
                    let mut v = table[idx(i, j, k)];
                    if i > 0 {
                        v += table[idx(i - 1, j, k)];
                    }
                    if j > 0 {
                        v += table[idx(i, j - 1, k)];
                    }
                    if i > 0 && j > 0 {
                        v -= table[idx(i - 1, j - 1, k)];
                    }
                    table[idx(i, j, k)] = v;
                }
            }
        }
        if dim == 3 {
            for k in 1..s1 {
                for j in 0..s1 {
                    for i in 0..s1 {
                        table[idx(i, j, k)] += table[idx(i, j, k - 1)];
                    }
                }
            }
        }
        Self { side, dim, table }
    }

    /// Sum over cells with index in `[lo, hi]` per axis (inclusive, clamped).
    fn sum(&self, lo: [i64; 3], hi: [i64; 3]) -> f64 {
        let s1 = self.side + 1;
        let clamp = |v: i64| v.clamp(0, self.side as i64) as usize;
        let (a0, a1) = (clamp(lo[0]), clamp(hi[0] + 1));
        let (b0, b1) = (clamp(lo[1]), clamp(hi[1] + 1));
        let t = |i: usize, j: usize, k: usize| self.table[i + s1 * (j + s1 * k)];
        if self.dim == 2 {
            return t(a1, b1, 0) - t(a0, b1, 0) - t(a1, b0, 0) + t(a0, b0, 0);
        }
        let (c0, c1) = (clamp(lo[2]), clamp(hi[2] + 1));
        t(a1, b1, c1) - t(a0, b1, c1) - t(a1, b0, c1) + t(a0, b0, c1) - t(a1, b1, c0) + t(a0, b1, c0) + t(a1, b0, c0)
            - t(a0, b0, c0)
    }

    fn ball_bound(&self, lat: &Lattice, node: usize, r: f64) -> f64 {
        let c = lat.cell_index(node);
        let reach = (r / lat.h()).ceil() as i64 + 1;
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        for k in 0..self.dim {
            lo[k] = c[k] as i64 - reach;
            hi[k] = c[k] as i64 + reach;
        }
        self.sum(lo, hi)
    }
}

/// Concentration set: nodes whose tail-minimum density exceeds `eps` at every ladder radius.
pub fn detect_sigma(acc: &Accumulation, cfg: &DefectConfig) -> Result<ConcentrationReport> {
    if cfg.tail == 0 || acc.measures.len() < cfg.tail.max(3) {
        return Err(Error::invalid(format!(
            "concentration detection needs at least {} measures, got {}",
            cfg.tail.max(3),
            acc.measures.len()
        )));
    }
    if cfg.radii.is_empty() {
        return Err(Error::invalid("empty radius ladder"));
    }
    let lat = acc.limit.lattice().clone();
    let m = lat.dim() as f64;
    let p = acc.limit.p();
    let r_lo = cfg.radii.iter().copied().fold(f64::INFINITY, f64::min);
    let r_hi = cfg.radii.iter().copied().fold(0.0, f64::max);
    if r_lo < lat.min_scale() * (1.0 - 1e-12) {
        return Err(Error::ScaleUnderresolved { radius: r_lo, floor: lat.min_scale() });
    }
    let mut radii = cfg.radii.clone();
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let tail = &acc.measures[acc.measures.len() - cfg.tail..];
    let boxes: Vec<BoxSums> = tail.iter().map(|mu| BoxSums::new(&lat, &mu.cell_masses())).collect();
    let mut sigma = Vec::new();
    let mut densities = Vec::new();
    for n in 0..lat.len() {
        let x = lat.point(n);
        if norm(&x) + r_hi > 1.0 {
            continue;
        }
        let mut inside = true;
        let mut floor_density = f64::INFINITY;
        'radii: for &r in &radii {
            let scale = r.powf(p - m);
            for (mu, bx) in tail.iter().zip(&boxes) {
                // The box sum bounds the ball mass from above.
                if scale * bx.ball_bound(&lat, n, r).max(0.0) <= cfg.eps {
                    inside = false;
                    break 'radii;
                }
                let t = mu.theta(&x, r)?;
                if t <= cfg.eps {
                    inside = false;
                    break 'radii;
                }
                if r == radii[0] {
                    floor_density = floor_density.min(t);
                }
            }
        }
        if inside {
            sigma.push(n);
            densities.push(floor_density);
        }
    }
    let tail_min_total = tail.iter().map(|mu| mu.total()).fold(f64::INFINITY, f64::min);
    let limit_energy = acc.limit.total();
    let defect_mass = tail_min_total - limit_energy;
    let lim_cells = acc.limit.cell_masses();
    let tail_cells: Vec<Vec<f64>> = tail.iter().map(|mu| mu.cell_masses()).collect();
    let min_cell_defect = (0..lat.len())
        .map(|n| tail_cells.iter().map(|c| c[n]).fold(f64::INFINITY, f64::min) - lim_cells[n])
        .fold(f64::INFINITY, f64::min);
    let comps = components(&lat, &sigma);
    let density_of = |n: usize| sigma.binary_search(&n).map(|i| densities[i]).unwrap_or(0.0);
    let centers: Vec<Vec<f64>> = comps
        .iter()
        .map(|nodes| {
            let mut c = vec![0.0; lat.dim()];
            for &n in nodes {
                for (k, v) in lat.point(n).iter().enumerate() {
                    c[k] += v / nodes.len() as f64;
                }
            }
            c
        })
        .collect();
    let mut clusters = Vec::with_capacity(comps.len());
    for (i, nodes) in comps.into_iter().enumerate() {
        let c = &centers[i];
        let sep = centers
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, o)| 0.5 * dist(o, c))
            .fold(f64::INFINITY, f64::min);
        let radius = (1.0 - norm(c)).min(sep).max(lat.min_scale());
        let ball = Region::Ball { center: c.clone(), radius };
        let tail_min = tail.iter().map(|mu| mu.mass(&ball)).collect::<Result<Vec<_>>>()?.into_iter().fold(f64::INFINITY, f64::min);
        let defect_mass = tail_min - acc.limit.mass(&ball)?;
        let peak = nodes.iter().copied().fold(nodes[0], |b, n| if density_of(n) > density_of(b) { n } else { b });
        let extent = nodes.iter().map(|&n| dist(&lat.point(n), c)).fold(0.0, f64::max);
        clusters.push(SigmaCluster { nodes, center: c.clone(), peak, extent, radius, defect_mass });
    }
    let density_ratio = (lat.dim() as f64 == p && !clusters.is_empty()).then(|| defect_mass / clusters.len() as f64);
    let points: Vec<Vec<f64>> = sigma.iter().map(|&n| lat.point(n)).collect();
    let vols = if points.is_empty() { vec![0.0; radii.len()] } else { tube_volumes(&lat, &points, &radii) };
    Ok(ConcentrationReport {
        sigma_nodes: sigma,
        densities,
        clusters,
        defect_mass,
        limit_energy,
        min_cell_defect,
        density_ratio,
        tube_volumes: radii.into_iter().zip(vols).collect(),
    })
}

/// Deviation from homogeneity of a measure about `x`: the spread of `theta` over the
/// ladder plus the largest normalized radial energy between consecutive radii, both
/// relative to `max(max theta, 1)`.
pub fn homogeneity_deviation(measure: &EnergyMeasure, x: &[f64], scales: &[f64]) -> Result<f64> {
    let mut s = scales.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let thetas = s.iter().map(|&r| measure.theta(x, r)).collect::<Result<Vec<_>>>()?;
    let spread = thetas.iter().copied().fold(f64::NEG_INFINITY, f64::max) - thetas.iter().copied().fold(f64::INFINITY, f64::min);
    let mut radial = 0.0f64;
    for w in s.windows(2) {
        radial = radial.max(measure.radial_energy(x, w[0], w[1])?);
    }
    let scale = thetas.iter().copied().fold(1.0, f64::max);
    Ok((spread.max(0.0) + radial) / scale)
}

/// `homogeneity_deviation` restricted to points of the detected concentration set.
pub fn homogeneity_check(report: &ConcentrationReport, measure: &EnergyMeasure, x: &[f64], scales: &[f64]) -> Result<f64> {
    if !report.contains(measure.lattice(), x) {
        return Err(Error::NotInSigma { point: x.to_vec() });
    }
    homogeneity_deviation(measure, x, scales)
}
