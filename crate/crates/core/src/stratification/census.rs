//! Isolated-singularity census from the regularity-scale proxy.

use serde::Serialize;

use crate::energy::EnergyDensity;
use crate::error::Result;
use crate::lattice::Lattice;
use crate::map::JacobianSource;
use crate::numeric::{dist, norm};

use super::regularity::{RegularityConfig, RegularityProbe};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CensusConfig {
    /// Nodes with regularity scale below this radius are flagged.
    pub r_cut: f64,
    /// Clusters centered within this radius are counted.
    pub count_radius: f64,
    /// Inner annulus radius in multiples of `r_cut`.
    pub annulus_factor: f64,
    /// Relative energy pinching `|theta(2 rho) - theta(rho)| / max(theta(2 rho), 1)`.
    pub pinch_tol: f64,
    pub regularity: RegularityConfig,
}

impl Default for CensusConfig {
    fn default() -> Self {
        Self { r_cut: 0.1, count_radius: 0.5, annulus_factor: 2.0, pinch_tol: 0.05, regularity: RegularityConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cluster {
    pub nodes: Vec<usize>,
    pub center: Vec<f64>,
    pub interior: bool,
    /// `(theta(rho), theta(2 rho))` around the center, when the annulus fits in the domain.
    pub annulus_theta: Option<(f64, f64)>,
    pub pinched: bool,
    /// False when the annulus is pinched yet contains another cluster center.
    pub annulus_clear: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensusReport {
    pub count: usize,
    pub clusters: Vec<Cluster>,
    /// Index pairs of clusters closer than three cells.
    pub unresolved_pairs: Vec<(usize, usize)>,
    /// Whether `m = floor(p) + 1`.
    pub borderline: bool,
    pub r_cut: f64,
    pub h: f64,
}

impl CensusReport {
    pub fn centers(&self) -> Vec<Vec<f64>> {
        self.clusters.iter().filter(|c| c.interior).map(|c| c.center.clone()).collect()
    }
}

/// Connected components (over the full 3^m - 1 neighbourhood) of a node set.
pub fn components(lattice: &Lattice, nodes: &[usize]) -> Vec<Vec<usize>> {
    let mut flagged = vec![false; lattice.len()];
    for &n in nodes {
        flagged[n] = true;
    }
    let m = lattice.dim();
    let offsets: Vec<[i64; 3]> = (0..3i64.pow(m as u32))
        .map(|c| {
            let mut o = [0i64; 3];
            let mut c = c;
            for slot in o.iter_mut().take(m) {
                *slot = c % 3 - 1;
                c /= 3;
            }
            o
        })
        .filter(|o| o.iter().any(|&v| v != 0))
        .collect();
    let mut seen = vec![false; lattice.len()];
    let mut out = Vec::new();
    for &start in nodes {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut i = 0;
        while i < comp.len() {
            let n = comp[i];
            for o in &offsets {
                if let Some(q) = lattice.offset_node(n, *o) {
                    if flagged[q] && !seen[q] {
                        seen[q] = true;
                        comp.push(q);
                    }
                }
            }
            i += 1;
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Counts clusters of `{r_f < r_cut}` and checks energy pinching around each.
pub fn singularity_census(src: &dyn JacobianSource, p: f64, cfg: &CensusConfig) -> Result<CensusReport> {
    let probe = RegularityProbe::new(src, cfg.regularity)?;
    let lat = src.lattice();
    let m = lat.dim();
    let flagged = probe.below(cfg.r_cut);
    let comps = components(lat, &flagged);
    let density = EnergyDensity::new(src, p)?;
    let mut clusters: Vec<Cluster> = comps
        .into_iter()
        .map(|nodes| {
            let mut c = vec![0.0; m];
            for &n in &nodes {
                for (k, v) in lat.point(n).iter().enumerate() {
                    c[k] += v / nodes.len() as f64;
                }
            }
            let interior = norm(&c) <= cfg.count_radius + 1e-12;
            Cluster { nodes, center: c, interior, annulus_theta: None, pinched: false, annulus_clear: true }
        })
        .collect();
    let rho = cfg.annulus_factor * cfg.r_cut;
    let centers: Vec<Vec<f64>> = clusters.iter().map(|c| c.center.clone()).collect();
    for (i, cl) in clusters.iter_mut().enumerate() {
        if norm(&cl.center) + 2.0 * rho > 1.0 || rho < lat.min_scale() {
            continue;
        }
        let inner = density.theta(&cl.center, rho)?;
        let outer = density.theta(&cl.center, 2.0 * rho)?;
        cl.annulus_theta = Some((inner, outer));
        cl.pinched = (outer - inner).abs() <= cfg.pinch_tol * outer.max(1.0);
        if cl.pinched {
            cl.annulus_clear = centers.iter().enumerate().all(|(j, c)| {
                let d = dist(c, &cl.center);
                j == i || d <= rho || d >= 2.0 * rho
            });
        }
    }
    let mut unresolved = Vec::new();
    let reach = 3.0 * lat.h();
    for i in 0..clusters.len() {
        for j in i + 1..clusters.len() {
            let close = clusters[i].nodes.iter().any(|&a| {
                let pa = lat.point(a);
                clusters[j].nodes.iter().any(|&b| dist(&pa, &lat.point(b)) <= reach)
            });
            if close {
                unresolved.push((i, j));
            }
        }
    }
    let count = clusters.iter().filter(|c| c.interior).count();
    Ok(CensusReport {
        count,
        clusters,
        unresolved_pairs: unresolved,
        borderline: m == p.floor() as usize + 1,
        r_cut: cfg.r_cut,
        h: lat.h(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{AnalyticMap, DiscreteMap};

    #[test]
    fn constant_map_has_no_singularities() {
        let lat = Lattice::shared(2, 16).unwrap();
        let f = DiscreteMap::from_sampler(lat, &AnalyticMap::north_pole(2, 3)).unwrap();
        let rep = singularity_census(&f, 2.0, &CensusConfig::default()).unwrap();
        assert_eq!(rep.count, 0);
        assert!(!rep.borderline);
    }

    #[test]
    fn radial_map_has_one() {
        let lat = Lattice::shared(3, 16).unwrap();
        let f = DiscreteMap::from_sampler(lat, &AnalyticMap::Radial { dim: 3 }).unwrap();
        let rep = singularity_census(&f, 2.0, &CensusConfig::default()).unwrap();
        assert_eq!(rep.count, 1, "{:?}", rep.clusters.iter().map(|c| &c.center).collect::<Vec<_>>());
        assert!(norm(&rep.clusters[0].center) < 0.02);
        assert!(rep.borderline);
    }

    #[test]
    fn components_split() {
        let lat = Lattice::new(2, 8).unwrap();
        let a = lat.node_containing(&[0.01, 0.01]).unwrap();
        let b = lat.offset_node(a, [1, 1, 0]).unwrap();
        let c = lat.node_containing(&[-0.5, -0.5]).unwrap();
        let comps = components(&lat, &[a, b, c]);
        assert_eq!(comps.len(), 2);
    }
}
