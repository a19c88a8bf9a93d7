//! Maps from the unit ball into a target: lattice samples and closed-form presets.

use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{GradientField, Lattice, VectorField};
use crate::target::Target;

/// Point evaluation of a map `B_1 -> N`.
pub trait MapSampler: Sync {
    fn dim(&self) -> usize;
    fn target(&self) -> Target;
    /// Cell width of the underlying lattice; `None` for closed-form maps.
    fn cell_width(&self) -> Option<f64>;
    fn sample(&self, x: &[f64], out: &mut [f64]) -> Result<()>;
}

/// Per-node Jacobians `out[i * ncomp + a] = d_i f^a` on a lattice.
pub trait JacobianSource: Sync {
    fn lattice(&self) -> &Arc<Lattice>;
    fn ncomp(&self) -> usize;
    fn jacobian_into(&self, node: usize, out: &mut [f64]);

    /// Cell value of `|grad f|^p` used by energy quadrature; defaults to the nodal value.
    fn cell_density(&self, node: usize, p: f64, scratch: &mut [f64]) -> f64 {
        self.jacobian_into(node, scratch);
        power_of_norm(scratch, p)
    }
}

#[inline]
pub(crate) fn power_of_norm(jac: &[f64], p: f64) -> f64 {
    let g2: f64 = jac.iter().map(|v| v * v).sum();
    if g2 == 0.0 {
        0.0
    } else {
        g2.powf(0.5 * p)
    }
}

impl JacobianSource for GradientField {
    fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }
    fn ncomp(&self) -> usize {
        self.ncomp
    }
    fn jacobian_into(&self, node: usize, out: &mut [f64]) {
        out.copy_from_slice(self.at(node));
    }
}

/// Lattice samples of a map together with its target.
#[derive(Debug, Clone)]
pub struct DiscreteMap {
    pub field: VectorField,
    pub target: Target,
}

impl DiscreteMap {
    pub fn new(field: VectorField, target: Target) -> Result<Self> {
        if field.ncomp != target.ambient_dim() {
            return Err(Error::DimensionMismatch { expected: target.ambient_dim(), got: field.ncomp });
        }
        Ok(Self { field, target })
    }

    /// Samples `map` at every node of `lattice`.
    pub fn from_sampler(lattice: Arc<Lattice>, map: &dyn MapSampler) -> Result<Self> {
        let nc = map.target().ambient_dim();
        let m = lattice.dim();
        let mut values = vec![0.0; lattice.len() * nc];
        for n in 0..lattice.len() {
            map.sample(&lattice.position(n)[..m], &mut values[n * nc..(n + 1) * nc])?;
        }
        Self::new(VectorField::new(lattice, nc, values)?, map.target())
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.field.lattice
    }

    pub fn value(&self, node: usize) -> &[f64] {
        self.field.value(node)
    }

    /// Largest deviation of `|f| - 1` over the nodes (zero for flat targets).
    pub fn constraint_violation(&self) -> f64 {
        if !self.target.is_sphere() {
            return 0.0;
        }
        (0..self.lattice().len())
            .map(|n| (crate::numeric::norm(self.value(n)) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn gradient_field(&self) -> GradientField {
        self.field.gradient_field()
    }
}

impl JacobianSource for DiscreteMap {
    fn lattice(&self) -> &Arc<Lattice> {
        &self.field.lattice
    }
    fn ncomp(&self) -> usize {
        self.field.ncomp
    }
    fn jacobian_into(&self, node: usize, out: &mut [f64]) {
        self.field.lattice.gradient_into(&self.field.values, self.field.ncomp, node, out);
    }
}

impl MapSampler for DiscreteMap {
    fn dim(&self) -> usize {
        self.lattice().dim()
    }
    fn target(&self) -> Target {
        self.target
    }
    fn cell_width(&self) -> Option<f64> {
        Some(self.lattice().h())
    }
    fn sample(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.field.sample(x, out)?;
        if self.target.project_in_place(out).is_err() {
            // Interpolated unit vectors can cancel at a singular corner; fall back
            // to the value of the containing cell.
            let node = self
                .lattice()
                .node_containing(x)
                .ok_or_else(|| Error::BlowupOutOfDomain { point: x.to_vec() })?;
            out.copy_from_slice(self.value(node));
        }
        Ok(())
    }
}

/// Closed-form maps used as oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnalyticMap {
    /// `x/|x|` into S^{m-1}.
    Radial { dim: usize },
    /// Inverse stereographic projection of `lambda * x`, R^2 -> S^2.
    Bubble { lambda: f64 },
    /// Degree-two rational map with bubbles of scale `1/lambda` at `±separation * e_1`.
    TwoBubble { lambda: f64, separation: f64 },
    /// `(0, x_2, x_3)/|(x_2, x_3)|`, invariant along e_1, R^3 -> S^2.
    Axial,
    /// Projection of `(1-t) x/|x| + t (0, x_2, x_3)/|(x_2, x_3)|`, R^3 -> S^2.
    Blend { t: f64 },
    Constant { dim: usize, value: Vec<f64> },
    /// `x -> matrix * x + offset` into flat R^N; `matrix` is N x m row-major.
    Linear { dim: usize, matrix: Vec<f64>, offset: Vec<f64> },
}

impl AnalyticMap {
    /// Ambient pre-image `g` and its Jacobian (`jac[i * n + a] = d_i g^a`); the map is `Pi(g)`.
    fn raw(&self, x: &[f64], g: &mut [f64], jac: &mut [f64]) {
        jac.iter_mut().for_each(|v| *v = 0.0);
        match self {
            AnalyticMap::Radial { dim } => {
                let r = norm(x);
                let m = *dim;
                for a in 0..m {
                    g[a] = x[a] / r;
                    for i in 0..m {
                        let kron = if i == a { 1.0 } else { 0.0 };
                        jac[i * m + a] = (kron - x[i] * x[a] / (r * r)) / r;
                    }
                }
            }
            AnalyticMap::Bubble { lambda } => {
                let l = *lambda;
                let s = l * l * (x[0] * x[0] + x[1] * x[1]);
                g[0] = 2.0 * l * x[0];
                g[1] = 2.0 * l * x[1];
                g[2] = s - 1.0;
                jac[0] = 2.0 * l;
                jac[3 + 1] = 2.0 * l;
                jac[2] = 2.0 * l * l * x[0];
                jac[3 + 2] = 2.0 * l * l * x[1];
            }
            AnalyticMap::TwoBubble { lambda, separation } => {
                let (l, a) = (*lambda, *separation);
                // w = lambda (z^2 - a^2) / (2a), dw/dz = lambda z / a.
                let (zr, zi) = (x[0], x[1]);
                let k = l / (2.0 * a);
                let wr = k * (zr * zr - zi * zi - a * a);
                let wi = k * 2.0 * zr * zi;
                let dr = l * zr / a;
                let di = l * zi / a;
                g[0] = 2.0 * wr;
                g[1] = 2.0 * wi;
                g[2] = wr * wr + wi * wi - 1.0;
                // d/dx w = w', d/dy w = i w'.
                let dx = (dr, di);
                let dy = (-di, dr);
                for (i, (er, ei)) in [dx, dy].into_iter().enumerate() {
                    jac[i * 3] = 2.0 * er;
                    jac[i * 3 + 1] = 2.0 * ei;
                    jac[i * 3 + 2] = 2.0 * (wr * er + wi * ei);
                }
            }
            AnalyticMap::Axial => axial_raw(x, g, jac),
            AnalyticMap::Blend { t } => {
                let mut ga = [0.0; 3];
                let mut ja = [0.0; 9];
                axial_raw(x, &mut ga, &mut ja);
                let mut gr = [0.0; 3];
                let mut jr = [0.0; 9];
                AnalyticMap::Radial { dim: 3 }.raw(x, &mut gr, &mut jr);
                for a in 0..3 {
                    g[a] = (1.0 - t) * gr[a] + t * ga[a];
                }
                for k in 0..9 {
                    jac[k] = (1.0 - t) * jr[k] + t * ja[k];
                }
            }
            AnalyticMap::Constant { value, .. } => g.copy_from_slice(value),
            AnalyticMap::Linear { dim, matrix, offset } => {
                let n = offset.len();
                for a in 0..n {
                    g[a] = offset[a] + (0..*dim).map(|i| matrix[a * dim + i] * x[i]).sum::<f64>();
                    for i in 0..*dim {
                        jac[i * n + a] = matrix[a * dim + i];
                    }
                }
            }
        }
    }

    /// Closed-form Jacobian of the projected map at `x`.
    pub fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        let n = self.target().ambient_dim();
        let m = self.dim();
        let mut g = [0.0; 8];
        self.raw(x, &mut g[..n], out);
        if !self.target().is_sphere() {
            return;
        }
        let r = norm(&g[..n]);
        if r == 0.0 {
            return;
        }
        let f: Vec<f64> = g[..n].iter().map(|v| v / r).collect();
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            let d: f64 = row.iter().zip(&f).map(|(a, b)| a * b).sum();
            for a in 0..n {
                row[a] = (row[a] - d * f[a]) / r;
            }
        }
    }

    /// Constant map with value `e_N` into S^{N-1}.
    pub fn north_pole(dim: usize, ambient: usize) -> Self {
        let mut value = vec![0.0; ambient];
        value[ambient - 1] = 1.0;
        AnalyticMap::Constant { dim, value }
    }

    /// Lattice Jacobians of this map, evaluated from the closed form.
    pub fn on_lattice(&self, lattice: Arc<Lattice>) -> Result<AnalyticField> {
        if lattice.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: lattice.dim() });
        }
        Ok(AnalyticField { map: self.clone(), lattice })
    }

    /// Exact `|grad u|^2` of the bubble, `8 l^2 / (1 + l^2 |x|^2)^2`.
    pub fn bubble_density(lambda: f64, r: f64) -> f64 {
        let s = 1.0 + lambda * lambda * r * r;
        8.0 * lambda * lambda / (s * s)
    }

    /// Exact Dirichlet energy of the bubble in `B_rho(0)`.
    pub fn bubble_energy(lambda: f64, rho: f64) -> f64 {
        let s = lambda * lambda * rho * rho;
        8.0 * std::f64::consts::PI * s / (1.0 + s)
    }
}

fn axial_raw(x: &[f64], g: &mut [f64], jac: &mut [f64]) {
    let rho2 = x[1] * x[1] + x[2] * x[2];
    g[0] = 0.0;
    if rho2 == 0.0 {
        g[1] = 1.0;
        g[2] = 0.0;
        return;
    }
    let rho = rho2.sqrt();
    g[1] = x[1] / rho;
    g[2] = x[2] / rho;
    for i in 1..3 {
        for a in 1..3 {
            let kron = if i == a { 1.0 } else { 0.0 };
            jac[i * 3 + a] = (kron - x[i] * x[a] / rho2) / rho;
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    crate::numeric::norm(v)
}

impl MapSampler for AnalyticMap {
    fn dim(&self) -> usize {
        match self {
            AnalyticMap::Radial { dim } | AnalyticMap::Constant { dim, .. } | AnalyticMap::Linear { dim, .. } => *dim,
            AnalyticMap::Bubble { .. } | AnalyticMap::TwoBubble { .. } => 2,
            AnalyticMap::Axial | AnalyticMap::Blend { .. } => 3,
        }
    }

    fn target(&self) -> Target {
        match self {
            AnalyticMap::Radial { dim } => Target::sphere(*dim),
            AnalyticMap::Bubble { .. } | AnalyticMap::TwoBubble { .. } | AnalyticMap::Axial | AnalyticMap::Blend { .. } => {
                Target::sphere(3)
            }
            AnalyticMap::Constant { value, .. } => {
                if (norm(value) - 1.0).abs() < 1e-12 {
                    Target::sphere(value.len())
                } else {
                    Target::flat(value.len())
                }
            }
            AnalyticMap::Linear { offset, .. } => Target::flat(offset.len()),
        }
    }

    fn cell_width(&self) -> Option<f64> {
        None
    }

    fn sample(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let mut jac = [0.0; 24];
        let n = out.len();
        self.raw(x, out, &mut jac[..self.dim() * n]);
        self.target().project_in_place(out)
    }
}

impl FromStr for AnalyticMap {
    type Err = Error;

    /// Names: `radial:m`, `bubble:lambda`, `two-bubble:lambda`, `axial`, `blend:t`,
    /// `constant:m:n` (north pole of S^{n-1}).
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .and_then(|v| crate::numeric::parse_ratio(v))
                .ok_or_else(|| Error::invalid(format!("analytic preset '{s}' is missing a numeric argument")))
        };
        match parts[0] {
            "radial" => Ok(AnalyticMap::Radial { dim: if parts.len() > 1 { num(1)? as usize } else { 3 } }),
            "bubble" => Ok(AnalyticMap::Bubble { lambda: num(1)? }),
            "two-bubble" => Ok(AnalyticMap::TwoBubble { lambda: num(1)?, separation: 0.4 }),
            "axial" => Ok(AnalyticMap::Axial),
            "blend" => Ok(AnalyticMap::Blend { t: num(1)? }),
            "constant" => Ok(AnalyticMap::north_pole(num(1)? as usize, num(2)? as usize)),
            _ => Err(Error::invalid(format!("unknown analytic preset '{s}'"))),
        }
    }
}

/// A closed-form map viewed on a lattice: Jacobians are exact at the nodes.
#[derive(Debug, Clone)]
pub struct AnalyticField {
    pub map: AnalyticMap,
    pub lattice: Arc<Lattice>,
}

impl AnalyticField {
    pub fn discretize(&self) -> Result<DiscreteMap> {
        DiscreteMap::from_sampler(self.lattice.clone(), &self.map)
    }
}

impl JacobianSource for AnalyticField {
    fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }
    fn ncomp(&self) -> usize {
        self.map.target().ambient_dim()
    }
    fn jacobian_into(&self, node: usize, out: &mut [f64]) {
        let m = self.lattice.dim();
        self.map.jacobian(&self.lattice.position(node)[..m], out);
    }

    /// Two-point Gauss rule per axis inside the cell, which keeps the quadrature
    /// accurate next to point singularities sitting on cell corners.
    fn cell_density(&self, node: usize, p: f64, scratch: &mut [f64]) -> f64 {
        let m = self.lattice.dim();
        let c = self.lattice.position(node);
        let off = 0.5 * self.lattice.h() / 3f64.sqrt();
        let corners = 1usize << m;
        let mut acc = 0.0;
        let mut x = [0.0; 3];
        for k in 0..corners {
            for i in 0..m {
                x[i] = c[i] + if (k >> i) & 1 == 1 { off } else { -off };
            }
            self.map.jacobian(&x[..m], scratch);
            acc += power_of_norm(scratch, p);
        }
        acc / corners as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_jacobian(map: &AnalyticMap, x: &[f64]) -> Vec<f64> {
        let m = map.dim();
        let n = map.target().ambient_dim();
        let mut out = vec![0.0; m * n];
        let step = 1e-6;
        for i in 0..m {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += step;
            xm[i] -= step;
            let mut fp = vec![0.0; n];
            let mut fm = vec![0.0; n];
            map.sample(&xp, &mut fp).unwrap();
            map.sample(&xm, &mut fm).unwrap();
            for a in 0..n {
                out[i * n + a] = (fp[a] - fm[a]) / (2.0 * step);
            }
        }
        out
    }

    #[test]
    fn closed_form_jacobians_match_differences() {
        let maps = [
            (AnalyticMap::Radial { dim: 3 }, vec![0.3, -0.2, 0.1]),
            (AnalyticMap::Radial { dim: 2 }, vec![0.3, -0.2]),
            (AnalyticMap::Bubble { lambda: 4.0 }, vec![0.1, 0.05]),
            (AnalyticMap::TwoBubble { lambda: 8.0, separation: 0.4 }, vec![0.35, 0.1]),
            (AnalyticMap::Axial, vec![0.2, 0.3, -0.4]),
            (AnalyticMap::Blend { t: 0.3 }, vec![0.2, 0.3, -0.4]),
        ];
        for (map, x) in maps {
            let n = map.target().ambient_dim();
            let mut exact = vec![0.0; map.dim() * n];
            map.jacobian(&x, &mut exact);
            let fd = fd_jacobian(&map, &x);
            for (a, b) in exact.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()), "{map:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn bubble_density_matches_jacobian() {
        let map = AnalyticMap::Bubble { lambda: 3.0 };
        let x = [0.2, -0.1];
        let mut j = [0.0; 6];
        map.jacobian(&x, &mut j);
        let got: f64 = j.iter().map(|v| v * v).sum();
        let expect = AnalyticMap::bubble_density(3.0, norm(&x));
        assert!((got - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn bubble_energy_closed_form() {
        use std::f64::consts::PI;
        assert!((AnalyticMap::bubble_energy(1.0, 1.0) - 4.0 * PI).abs() < 1e-14);
        assert!((AnalyticMap::bubble_energy(1e6, 1.0) - 8.0 * PI).abs() < 1e-9);
        let ratio = AnalyticMap::bubble_energy(8.0, 0.25) / AnalyticMap::bubble_energy(8.0, 1.0);
        assert!((ratio - 0.8125).abs() < 1e-3, "{ratio}");
        // Pointwise gradient away from the origin vanishes as lambda grows.
        assert!(AnalyticMap::bubble_density(1e4, 0.5) < 2e-6);
    }

    #[test]
    fn sampled_values_are_unit() {
        for s in ["radial:3", "bubble:16", "two-bubble:32", "axial", "blend:0.5", "constant:2:3"] {
            let map: AnalyticMap = s.parse().unwrap();
            let mut out = vec![0.0; map.target().ambient_dim()];
            let x = if map.dim() == 3 { vec![0.1, 0.2, 0.3] } else { vec![0.1, 0.2] };
            map.sample(&x, &mut out).unwrap();
            assert!((norm(&out) - 1.0).abs() < 1e-12, "{s}");
        }
    }

    #[test]
    fn discrete_sampler_survives_cancelling_corners() {
        let lat = Lattice::shared(3, 8).unwrap();
        let f = DiscreteMap::from_sampler(lat, &AnalyticMap::Radial { dim: 3 }).unwrap();
        let mut out = [0.0; 3];
        f.sample(&[0.0, 0.0, 0.0], &mut out).unwrap();
        assert!((norm(&out) - 1.0).abs() < 1e-12);
    }
}
