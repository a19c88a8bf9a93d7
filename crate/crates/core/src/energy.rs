//! p-energy, normalized energy, scale profiles and the first-variation residual.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, Region, VectorField};
use crate::map::JacobianSource;

/// Cached nodal values of `|grad f|^p`.
#[derive(Debug, Clone)]
pub struct EnergyDensity {
    lattice: Arc<Lattice>,
    p: f64,
    values: Vec<f64>,
}

impl EnergyDensity {
    pub fn new(source: &dyn JacobianSource, p: f64) -> Result<Self> {
        if !(p > 1.0) {
            return Err(Error::invalid(format!("exponent p must exceed 1, got {p}")));
        }
        Ok(Self::with_exponent(source, p))
    }

    /// Any positive exponent; used for integrability checks of `|grad f|^q`.
    pub fn with_exponent(source: &dyn JacobianSource, p: f64) -> Self {
        let lattice = source.lattice().clone();
        let stride = lattice.dim() * source.ncomp();
        let mut jac = vec![0.0; stride];
        let values = (0..lattice.len())
            .map(|n| source.cell_density(n, p, &mut jac))
            .collect();
        Self { lattice, p, values }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn energy(&self, region: &Region) -> Result<f64> {
        self.lattice.integrate_values(&self.values, region)
    }

    pub fn total(&self) -> f64 {
        self.lattice.integrate_values(&self.values, &Region::Domain).unwrap_or(0.0)
    }

    /// `r^{p-m} E_p(f; B_r(x))`.
    pub fn theta(&self, x: &[f64], r: f64) -> Result<f64> {
        let e = self.energy(&Region::Ball { center: x.to_vec(), radius: r })?;
        Ok(r.powf(self.p - self.lattice.dim() as f64) * e)
    }

    pub fn scale_profile(&self, x: &[f64], gamma: f64, r_max: f64) -> Result<ScaleProfile> {
        let scales = ladder(r_max, gamma, self.lattice.min_scale())?;
        let theta = scales.iter().map(|&r| self.theta(x, r)).collect::<Result<Vec<_>>>()?;
        Ok(ScaleProfile { base: x.to_vec(), scales, theta, p: self.p, m: self.lattice.dim(), h: self.lattice.h() })
    }
}

/// Geometric ladder `r_max * gamma^i` down to (and including) the floor.
pub fn ladder(r_max: f64, gamma: f64, floor: f64) -> Result<Vec<f64>> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("ladder ratio must lie in (0,1), got {gamma}")));
    }
    if r_max < floor * (1.0 - 1e-12) {
        return Err(Error::ScaleUnderresolved { radius: r_max, floor });
    }
    let mut out = Vec::new();
    let mut r = r_max;
    while r >= floor * (1.0 - 1e-12) {
        out.push(r);
        r *= gamma;
    }
    Ok(out)
}

pub fn p_energy(f: &dyn JacobianSource, p: f64, region: &Region) -> Result<f64> {
    f.lattice().check_region(region)?;
    EnergyDensity::new(f, p)?.energy(region)
}

pub fn theta(f: &dyn JacobianSource, p: f64, x: &[f64], r: f64) -> Result<f64> {
    f.lattice().check_ball(x, r)?;
    EnergyDensity::new(f, p)?.theta(x, r)
}

pub fn scale_profile(f: &dyn JacobianSource, p: f64, x: &[f64], gamma: f64, r_max: f64) -> Result<ScaleProfile> {
    EnergyDensity::new(f, p)?.scale_profile(x, gamma, r_max)
}

/// Normalized energies at one base point over a geometric ladder (largest scale first).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleProfile {
    pub base: Vec<f64>,
    pub scales: Vec<f64>,
    pub theta: Vec<f64>,
    pub p: f64,
    pub m: usize,
    pub h: f64,
}

impl ScaleProfile {
    /// Builds a profile from explicit values, e.g. for synthetic tests.
    pub fn from_values(scales: Vec<f64>, theta: Vec<f64>, p: f64, m: usize) -> Self {
        Self { base: vec![0.0; m], scales, theta, p, m, h: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    /// Pinching `W_{s,r} = theta(r) - theta(s)` between ladder indices (`small` is the finer scale).
    pub fn w(&self, small: usize, large: usize) -> f64 {
        self.theta[large] - self.theta[small]
    }

    pub fn default_tolerance(&self) -> f64 {
        0.05 * self.theta.first().copied().unwrap_or(0.0).max(1.0)
    }

    /// Ladder pairs `r > s >= min_scale` with `theta(r) < theta(s) - tol`.
    pub fn monotonicity_violations(&self, tol: f64, min_scale: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                if self.scales[j] >= min_scale * (1.0 - 1e-12) && self.theta[i] < self.theta[j] - tol {
                    out.push((self.scales[i], self.scales[j]));
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let head: Vec<String> = (1..=self.m).map(|k| format!("x{k}")).collect();
        s.push_str(&format!("{},r,theta\n", head.join(",")));
        let base: Vec<String> = self.base.iter().map(|v| format!("{v}")).collect();
        for (r, t) in self.scales.iter().zip(&self.theta) {
            s.push_str(&format!("{},{r},{t}\n", base.join(",")));
        }
        s
    }
}

/// A vector field on the ball with an exact Jacobian, used as a domain variation.
pub trait TestField: Sync {
    fn dim(&self) -> usize;
    /// `out[i * dim + j] = d_i xi^j` at lattice node `node` located at `x`.
    fn jacobian_at(&self, node: usize, x: &[f64], out: &mut [f64]);
    fn value_at(&self, node: usize, x: &[f64], out: &mut [f64]);
}

/// `xi(x) = (a + B (x - c)) (1 - s)^3` with `s = |x - c|^2 / rho^2`, zero for `s >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpField {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: Vec<f64>,
    /// Row-major `m x m` linear part.
    pub linear: Vec<f64>,
}

impl BumpField {
    /// Random bump whose support stays inside `B_{1-margin}`; centres near the origin.
    pub fn random(rng: &mut impl rand::Rng, dim: usize, margin: f64) -> Self {
        loop {
            let center: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.25..0.25)).collect();
            let cn = crate::numeric::norm(&center);
            let max_r = 1.0 - margin - cn;
            if max_r < 0.3 {
                continue;
            }
            let radius = rng.random_range(0.3..max_r.min(0.65));
            let amplitude = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let linear = (0..dim * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            return Self { center, radius, amplitude, linear };
        }
    }

    fn eval(&self, x: &[f64], value: Option<&mut [f64]>, jac: Option<&mut [f64]>) {
        let m = self.center.len();
        let mut d = [0.0; 3];
        for k in 0..m {
            d[k] = x[k] - self.center[k];
        }
        let rho2 = self.radius * self.radius;
        let s = d[..m].iter().map(|v| v * v).sum::<f64>() / rho2;
        let mut lin = [0.0; 3];
        for j in 0..m {
            lin[j] = self.amplitude[j] + (0..m).map(|k| self.linear[j * m + k] * d[k]).sum::<f64>();
        }
        let (phi, dphi_ds) = if s < 1.0 { ((1.0 - s).powi(3), -3.0 * (1.0 - s).powi(2)) } else { (0.0, 0.0) };
        if let Some(v) = value {
            for j in 0..m {
                v[j] = lin[j] * phi;
            }
        }
        if let Some(out) = jac {
            for i in 0..m {
                let ds = 2.0 * d[i] / rho2;
                for j in 0..m {
                    out[i * m + j] = self.linear[j * m + i] * phi + lin[j] * dphi_ds * ds;
                }
            }
        }
    }
}

impl TestField for BumpField {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn jacobian_at(&self, _node: usize, x: &[f64], out: &mut [f64]) {
        self.eval(x, None, Some(out));
    }
    fn value_at(&self, _node: usize, x: &[f64], out: &mut [f64]) {
        self.eval(x, Some(out), None);
    }
}

impl TestField for VectorField {
    fn dim(&self) -> usize {
        self.ncomp
    }
    fn jacobian_at(&self, node: usize, _x: &[f64], out: &mut [f64]) {
        self.lattice.gradient_into(&self.values, self.ncomp, node, out);
    }
    fn value_at(&self, node: usize, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self.value(node));
    }
}

/// Normalized quadrature of the first variation of `E_p` along the domain variation `xi`:
/// `int |Df|^{p-2} (|Df|^2 delta_ij - p <d_i f, d_j f>) d_i xi^j / (E_p(f) * max |D xi|)`.
pub fn stationarity_residual(f: &dyn JacobianSource, p: f64, xi: &dyn TestField) -> Result<f64> {
    let lat = f.lattice().clone();
    let m = lat.dim();
    if xi.dim() != m {
        return Err(Error::DimensionMismatch { expected: m, got: xi.dim() });
    }
    let nc = f.ncomp();
    let mut jf = vec![0.0; m * nc];
    let mut jx = vec![0.0; m * m];
    let mut val = vec![0.0; m];
    let mut support = 0.0f64;
    let mut grad_xi_max = 0.0f64;
    let mut acc = 0.0;
    let mut energy = 0.0;
    for n in 0..lat.len() {
        let pos = lat.position(n);
        let x = &pos[..m];
        if lat.is_band(n) {
            xi.value_at(n, x, &mut val);
            support = support.max(crate::numeric::norm(&val));
        }
        xi.jacobian_at(n, x, &mut jx);
        grad_xi_max = grad_xi_max.max(crate::numeric::norm(&jx));
        f.jacobian_into(n, &mut jf);
        let g2: f64 = jf.iter().map(|v| v * v).sum();
        let w = lat.domain_weight(n);
        if g2 == 0.0 {
            continue;
        }
        energy += w * g2.powf(0.5 * p);
        let scale = g2.powf(0.5 * p - 1.0);
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                let dij: f64 = (0..nc).map(|a| jf[i * nc + a] * jf[j * nc + a]).sum();
                let kron = if i == j { g2 } else { 0.0 };
                s += (kron - p * dij) * jx[i * m + j];
            }
        }
        acc += w * scale * s;
    }
    if support > 1e-14 {
        return Err(Error::NotCompactlySupported { max_value: support });
    }
    if energy == 0.0 || grad_xi_max == 0.0 {
        return Ok(0.0);
    }
    Ok(acc / (energy * grad_xi_max))
}
