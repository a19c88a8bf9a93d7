//! Inductive ball coverings of a quantitative stratum, refined level by level
//! and split into families by the scale tuple.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{dist, symmetric_eigen3};

use super::strata::StrataField;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoveringBall {
    pub level: usize,
    pub center: Vec<f64>,
    pub radius: f64,
    pub tuple: Vec<u8>,
    pub parent: Option<usize>,
    /// Classified points assigned to this ball.
    pub members: Vec<usize>,
}

/// Balls of one tuple family inside one parent ball.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyStats {
    pub level: usize,
    pub parent: usize,
    pub tuple: Vec<u8>,
    pub balls: usize,
    /// Whether the last tuple bit marks a non-homogeneous scale.
    pub bad: bool,
    /// Largest distance of a member to the members' best-fit k-plane.
    pub tube_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoveringTree {
    pub k: usize,
    pub gamma: f64,
    pub depth: usize,
    pub balls: Vec<CoveringBall>,
    pub families: Vec<FamilyStats>,
    pub c0: f64,
    pub c1: f64,
    pub d: usize,
    pub bound: f64,
}

impl CoveringTree {
    pub fn leaves(&self) -> impl Iterator<Item = &CoveringBall> {
        self.balls.iter().filter(move |b| b.level == self.depth)
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().count()
    }

    /// Points of the covered set that lie in no leaf ball.
    pub fn uncovered(&self, field: &StrataField) -> Vec<usize> {
        let leaves: Vec<&CoveringBall> = self.leaves().collect();
        covered_set(field, self.k, self.depth)
            .into_iter()
            .filter(|&i| {
                let x = &field.labels[i].point;
                !leaves.iter().any(|b| dist(x, &b.center) <= b.radius * (1.0 + 1e-12))
            })
            .collect()
    }

    pub fn within_bound(&self) -> bool {
        self.leaf_count() as f64 <= self.bound * (1.0 + 1e-12)
    }

    /// Largest distance from the origin of a leaf center.
    pub fn leaf_extent(&self) -> f64 {
        self.leaves().map(|b| crate::numeric::norm(&b.center)).fold(0.0, f64::max)
    }

    /// JSON rows `(level, center, radius, tuple, parent)`.
    pub fn to_json(&self) -> serde_json::Value {
        let balls: Vec<serde_json::Value> = self
            .balls
            .iter()
            .map(|b| {
                serde_json::json!({
                    "level": b.level,
                    "center": b.center,
                    "radius": b.radius,
                    "tuple": b.tuple.iter().map(|v| v.to_string()).collect::<String>(),
                    "parent": b.parent,
                })
            })
            .collect();
        serde_json::json!({
            "k": self.k,
            "gamma": self.gamma,
            "depth": self.depth,
            "c0": self.c0,
            "c1": self.c1,
            "D": self.d,
            "bound": self.bound,
            "leaf_count": self.leaf_count(),
            "balls": balls,
        })
    }
}

/// Points of `S^k_{eta, gamma^depth}` inside `B_{1/2}`.
fn covered_set(field: &StrataField, k: usize, depth: usize) -> Vec<usize> {
    field
        .members(k, depth)
        .into_iter()
        .filter(|&i| crate::numeric::norm(&field.labels[i].point) <= 0.5 + 1e-12)
        .collect()
}

/// Farthest-point cover: start from the first member, then repeatedly add the member
/// farthest from all chosen centers until everything lies within `radius`.
fn greedy_centers(points: &[&[f64]], radius: f64) -> Vec<usize> {
    if points.is_empty() {
        return vec![];
    }
    let mut centers = vec![0];
    let mut nearest: Vec<f64> = points.iter().map(|p| dist(p, points[0])).collect();
    loop {
        let (far, d) = nearest
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
        if d <= radius {
            return centers;
        }
        centers.push(far);
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(dist(p, points[far]));
        }
    }
}

/// Largest distance to the best-fit affine k-plane through the centroid.
fn tube_width(points: &[&[f64]], k: usize) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let m = points[0].len();
    let mut c = [0.0; 3];
    for p in points {
        for i in 0..m {
            c[i] += p[i] / points.len() as f64;
        }
    }
    let mut cov = [[0.0; 3]; 3];
    for p in points {
        for i in 0..m {
            for j in 0..m {
                cov[i][j] += (p[i] - c[i]) * (p[j] - c[j]);
            }
        }
    }
    let (_, vecs) = symmetric_eigen3(cov);
    // Eigenvectors of the padded third axis have no weight in 2-D.
    let plane: Vec<[f64; 3]> = vecs.iter().copied().filter(|v| m == 3 || v[2].abs() < 0.5).take(k).collect();
    points
        .iter()
        .map(|p| {
            let mut d = [0.0; 3];
            for i in 0..m {
                d[i] = p[i] - c[i];
            }
            for v in &plane {
                let s: f64 = (0..3).map(|i| d[i] * v[i]).sum();
                for i in 0..3 {
                    d[i] -= s * v[i];
                }
            }
            crate::numeric::norm(&d)
        })
        .fold(0.0, f64::max)
}

/// Covers `S^k_{eta, gamma^depth} ∩ B_{1/2}` level by level.
///
/// At level `a` the points assigned to each level `(a-1)` ball are split by the
/// `a`-th tuple bit and each family is covered by balls of radius `gamma^a`
/// centered at classified points. `d` is the number of bad scales allowed in the
/// cardinality bound; it is raised to the largest tuple weight seen if smaller.
pub fn build_covering(field: &StrataField, k: usize, depth: usize, d: usize) -> Result<CoveringTree> {
    if depth > field.depth {
        return Err(Error::invalid(format!("covering depth {depth} exceeds classified depth {}", field.depth)));
    }
    if k > field.config.k_max {
        return Err(Error::invalid(format!("stratum {k} was not classified (k_max = {})", field.config.k_max)));
    }
    let gamma = field.config.gamma;
    let m = field.labels.first().map_or(3, |l| l.point.len());
    let set = covered_set(field, k, depth);
    let mut balls = vec![CoveringBall {
        level: 0,
        center: vec![0.0; m],
        radius: 1.0,
        tuple: vec![],
        parent: None,
        members: set.clone(),
    }];
    let mut families = Vec::new();
    let mut frontier = if set.is_empty() { vec![] } else { vec![0usize] };
    for a in 1..=depth {
        let radius = gamma.powi(a as i32);
        let mut next = Vec::new();
        for &pid in &frontier {
            let parent_tuple = balls[pid].tuple.clone();
            let members = balls[pid].members.clone();
            for bit in [0u8, 1u8] {
                let fam: Vec<usize> = members.iter().copied().filter(|&i| field.labels[i].tuple[a - 1] == bit).collect();
                if fam.is_empty() {
                    continue;
                }
                let pts: Vec<&[f64]> = fam.iter().map(|&i| field.labels[i].point.as_slice()).collect();
                let centers = greedy_centers(&pts, radius);
                let mut tuple = parent_tuple.clone();
                tuple.push(bit);
                let first = balls.len();
                for &c in &centers {
                    balls.push(CoveringBall {
                        level: a,
                        center: pts[c].to_vec(),
                        radius,
                        tuple: tuple.clone(),
                        parent: Some(pid),
                        members: vec![],
                    });
                }
                for (j, &i) in fam.iter().enumerate() {
                    let best = centers
                        .iter()
                        .enumerate()
                        .map(|(ci, &c)| (ci, dist(pts[j], pts[c])))
                        .fold((0, f64::INFINITY), |acc, (ci, d)| if d < acc.1 { (ci, d) } else { acc });
                    balls[first + best.0].members.push(i);
                }
                families.push(FamilyStats {
                    level: a,
                    parent: pid,
                    tuple,
                    balls: centers.len(),
                    bad: bit == 1,
                    tube_width: tube_width(&pts, k),
                });
                next.extend(first..balls.len());
            }
        }
        frontier = next;
    }
    let max_count = |bad: Option<bool>| {
        families.iter().filter(|f| bad.map_or(true, |b| f.bad == b)).map(|f| f.balls).max().unwrap_or(1) as f64
    };
    let c1 = max_count(None) * gamma.powi(m as i32);
    let c0 = max_count(Some(false)) * gamma.powi(k as i32);
    let d = d.max(field.max_ones()).min(depth);
    let bound = (depth as f64).powi(d as i32)
        * (c1 * gamma.powi(-(m as i32))).powi(d as i32)
        * (c0 * gamma.powi(-(k as i32))).powi((depth - d) as i32);
    Ok(CoveringTree { k, gamma, depth, balls, families, c0, c1, d, bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stratification::strata::{StrataConfig, StrataLabel};

    fn field(points: Vec<Vec<f64>>, depth: usize) -> StrataField {
        let labels = points
            .into_iter()
            .map(|p| StrataLabel {
                point: p,
                tuple: vec![0; depth],
                tuple_defects: vec![0.0; depth],
                membership: vec![vec![true; depth]],
            })
            .collect();
        StrataField { config: StrataConfig::default(), depth, truncated: false, labels }
    }

    #[test]
    fn empty_stratum_gives_root_only() {
        let f = field(vec![], 3);
        let t = build_covering(&f, 0, 3, 0).unwrap();
        assert_eq!(t.balls.len(), 1);
        assert_eq!(t.leaf_count(), 0);
    }

    #[test]
    fn segment_cover_is_sound_and_linear() {
        let pts: Vec<Vec<f64>> = (0..101).map(|i| vec![-0.5 + i as f64 / 100.0, 0.0, 0.0]).collect();
        let f = field(pts, 4);
        let t = build_covering(&f, 0, 4, 0).unwrap();
        assert!(t.uncovered(&f).is_empty());
        // Unit-length segment, radius 1/16: between 8 and 17 balls.
        assert!((8..=17).contains(&t.leaf_count()), "{}", t.leaf_count());
        assert!(t.within_bound());
        let fam = t.families.last().unwrap();
        assert!(tube_width(&[&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0]], 1) < 1e-12);
        assert!(fam.tube_width >= 0.0);
    }

    #[test]
    fn greedy_is_separated() {
        let pts: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64 * 0.37).sin() * 0.4, (i as f64 * 0.91).cos() * 0.4]).collect();
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let c = greedy_centers(&refs, 0.1);
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                assert!(dist(refs[c[i]], refs[c[j]]) > 0.1);
            }
        }
        for p in &refs {
            assert!(c.iter().any(|&k| dist(p, refs[k]) <= 0.1));
        }
    }
}
