//! Projected gradient descent for discrete p-harmonic maps with fixed boundary trace.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{self, BumpField, EnergyDensity};
use crate::error::{Error, Result};
use crate::lattice::{Lattice, Region, VectorField};
use crate::map::{AnalyticMap, DiscreteMap, MapSampler};
use crate::target::Target;

const NONE: u32 = u32::MAX;
const HARMONIC_LIFT: f64 = 0.25;

/// Boundary trace on the unit sphere, as a function of the direction `omega`.
#[derive(Debug, Clone)]
pub enum Boundary {
    /// `omega` itself, into S^{m-1}.
    Radial,
    /// The pole `e_n`.
    Constant,
    /// `(rho cos k phi, rho sin k phi, omega_3)` with `(rho, phi)` polar in the first two coordinates.
    EquatorWinding(u32),
    /// `Pi(e_n + a omega)`.
    Tilt(f64),
    /// `Pi(e_n + 0.6 (sin k pi omega_1, cos k pi omega_2, 0))`.
    Wave(u32),
    /// Trace read from a supplied map.
    Field(Arc<DiscreteMap>),
}

impl Boundary {
    /// Target implied by the preset when the user does not name one.
    pub fn default_target(&self, dim: usize) -> Target {
        match self {
            Boundary::Radial => Target::sphere(dim),
            Boundary::Field(f) => f.target,
            _ => Target::sphere(3),
        }
    }

    /// Evaluates the trace at direction `omega` (unit, length m) into `out` (length n).
    pub fn eval(&self, omega: &[f64], target: Target, out: &mut [f64]) -> Result<()> {
        let n = target.ambient_dim();
        let m = omega.len();
        out.iter_mut().for_each(|v| *v = 0.0);
        match self {
            Boundary::Radial => {
                if n != m {
                    return Err(Error::invalid(format!("radial boundary needs target sphere:{m}, got {target}")));
                }
                out.copy_from_slice(omega);
            }
            Boundary::Constant => out[n - 1] = 1.0,
            Boundary::EquatorWinding(k) => {
                if n < 3 {
                    return Err(Error::invalid("equator winding needs a target of ambient dimension >= 3"));
                }
                let phi = omega[1].atan2(omega[0]);
                let rho = (omega[0] * omega[0] + omega[1] * omega[1]).sqrt();
                out[0] = rho * (*k as f64 * phi).cos();
                out[1] = rho * (*k as f64 * phi).sin();
                if m == 3 {
                    out[2] = omega[2];
                }
            }
            Boundary::Tilt(a) => {
                for i in 0..m.min(n) {
                    out[i] = a * omega[i];
                }
                out[n - 1] += 1.0;
            }
            Boundary::Wave(k) => {
                let k = *k as f64;
                out[0] = 0.6 * (k * PI * omega[0]).sin();
                if n > 2 {
                    out[1] = 0.6 * (k * PI * omega[1]).cos();
                }
                out[n - 1] += 1.0;
            }
            Boundary::Field(f) => {
                // The supplied field is evaluated just inside the sphere.
                let x: Vec<f64> = omega.iter().map(|v| v * (1.0 - 0.5 * f.lattice().h())).collect();
                f.sample(&x, out)?;
            }
        }
        target.project_in_place(out)
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Radial => write!(f, "radial"),
            Boundary::Constant => write!(f, "constant"),
            Boundary::EquatorWinding(k) => write!(f, "equator-winding:{k}"),
            Boundary::Tilt(a) => write!(f, "tilt:{a}"),
            Boundary::Wave(k) => write!(f, "wave:{k}"),
            Boundary::Field(_) => write!(f, "field"),
        }
    }
}

impl FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let bad = || Error::invalid(format!("bad boundary preset '{s}'"));
        match (name, arg) {
            ("radial", None) => Ok(Boundary::Radial),
            ("constant", None) => Ok(Boundary::Constant),
            ("equator-winding", Some(k)) => Ok(Boundary::EquatorWinding(k.parse().map_err(|_| bad())?)),
            ("tilt", Some(a)) => Ok(Boundary::Tilt(a.parse().map_err(|_| bad())?)),
            ("wave", Some(k)) => Ok(Boundary::Wave(k.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    Fixed,
    Armijo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// `g(x/|x|)`.
    Radial,
    /// Componentwise discrete harmonic extension, projected.
    Harmonic,
    /// Use the field handed to `solve_from`.
    Supplied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub p: f64,
    pub step: StepRule,
    /// Step size for the fixed rule; `None` picks a stable default.
    pub fixed_step: Option<f64>,
    pub max_iter: usize,
    /// Relative energy decrease over `window` iterations below which the solve stops.
    pub tol_energy: f64,
    /// Threshold on the L^2 norm of the projected gradient.
    pub tol_grad: f64,
    pub window: usize,
    pub init: Init,
    pub seed: u64,
    /// Amplitude of a seeded random perturbation applied to the initial interior values.
    pub perturbation: f64,
    pub eps_reg: f64,
    /// Number of random domain variations used for the stationarity residual.
    pub residual_fields: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            p: 2.0,
            step: StepRule::Armijo,
            fixed_step: None,
            max_iter: 4000,
            tol_energy: 1e-9,
            tol_grad: 1e-5,
            window: 20,
            init: Init::Radial,
            seed: 0,
            perturbation: 0.0,
            eps_reg: 1e-6,
            residual_fields: 4,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) {
            return Err(Error::invalid(format!("p must exceed 1, got {}", self.p)));
        }
        if !(self.tol_energy > 0.0 && self.tol_grad > 0.0) || self.window == 0 {
            return Err(Error::invalid("convergence thresholds must be positive"));
        }
        if let Some(t) = self.fixed_step {
            if !(t > 0.0) {
                return Err(Error::invalid("fixed step must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    /// `E_p` of the output measured by the energy module.
    pub energy: f64,
    /// Value of the solver's own discrete functional.
    pub discrete_energy: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Line search could not decrease the energy further.
    pub stalled: bool,
    /// Largest |normalized first-variation residual| over the sampled domain variations.
    pub stationarity_residual: f64,
    /// `theta(0, 1)`.
    pub lambda: f64,
    pub constraint_violation: f64,
    pub monotone: bool,
    pub energy_history: Vec<f64>,
}

struct Stencil {
    dim: usize,
    nc: usize,
    neighbors: Vec<u32>,
    weight: Vec<f64>,
    fixed: Vec<bool>,
    cell: f64,
    h2: f64,
}

impl Stencil {
    fn new(lat: &Lattice, nc: usize) -> Self {
        let m = lat.dim();
        let mut neighbors = vec![NONE; lat.len() * 2 * m];
        for n in 0..lat.len() {
            for k in 0..m {
                if let Some(j) = lat.neighbor(n, k, 1) {
                    neighbors[n * 2 * m + 2 * k] = j as u32;
                }
                if let Some(j) = lat.neighbor(n, k, -1) {
                    neighbors[n * 2 * m + 2 * k + 1] = j as u32;
                }
            }
        }
        let weight = (0..lat.len()).map(|n| lat.domain_weight(n)).collect();
        let fixed = (0..lat.len()).map(|n| lat.is_band(n)).collect();
        Self { dim: m, nc, neighbors, weight, fixed, cell: lat.cell_volume(), h2: lat.h() * lat.h() }
    }

    fn len(&self) -> usize {
        self.weight.len()
    }

    /// Pairs (neighbour, multiplicity) for axis `k` at node `n`; a missing side is
    /// replaced by the other.
    #[inline]
    fn axis_pairs(&self, n: usize, k: usize) -> [(u32, f64); 2] {
        let base = n * 2 * self.dim + 2 * k;
        let (p, q) = (self.neighbors[base], self.neighbors[base + 1]);
        match (p != NONE, q != NONE) {
            (true, true) => [(p, 1.0), (q, 1.0)],
            (true, false) => [(p, 2.0), (NONE, 0.0)],
            (false, true) => [(q, 2.0), (NONE, 0.0)],
            (false, false) => [(NONE, 0.0), (NONE, 0.0)],
        }
    }

    #[inline]
    fn squared_sum(&self, u: &[f64], n: usize) -> f64 {
        let nc = self.nc;
        let mut s = 0.0;
        for k in 0..self.dim {
            for (j, mult) in self.axis_pairs(n, k) {
                if j == NONE {
                    continue;
                }
                let j = j as usize;
                let mut d2 = 0.0;
                for a in 0..nc {
                    let d = u[j * nc + a] - u[n * nc + a];
                    d2 += d * d;
                }
                s += mult * d2;
            }
        }
        0.5 * s / self.h2
    }

    fn energy(&self, u: &[f64], p: f64, eps2: f64) -> f64 {
        let mut e = 0.0;
        for n in 0..self.len() {
            let s = self.squared_sum(u, n) + eps2;
            if s > 0.0 {
                e += self.weight[n] * half_power(s, p);
            }
        }
        e * self.cell
    }

    fn energy_grad(&self, u: &[f64], p: f64, eps2: f64, g: &mut [f64]) -> f64 {
        let nc = self.nc;
        g.iter_mut().for_each(|v| *v = 0.0);
        let mut e = 0.0;
        for n in 0..self.len() {
            let s = self.squared_sum(u, n) + eps2;
            if s <= 0.0 {
                continue;
            }
            let w = self.weight[n] * self.cell;
            e += w * half_power(s, p);
            let coef = w * 0.5 * p * half_power(s, p - 2.0) / self.h2;
            for k in 0..self.dim {
                for (j, mult) in self.axis_pairs(n, k) {
                    if j == NONE {
                        continue;
                    }
                    let j = j as usize;
                    for a in 0..nc {
                        let d = coef * mult * (u[j * nc + a] - u[n * nc + a]);
                        g[j * nc + a] += d;
                        g[n * nc + a] -= d;
                    }
                }
            }
        }
        e
    }
}

/// `s^{q/2}` with the common exponents special-cased.
#[inline]
fn half_power(s: f64, q: f64) -> f64 {
    if q == 2.0 {
        s
    } else if q == 0.0 {
        1.0
    } else {
        s.powf(0.5 * q)
    }
}

/// Minimizes the discrete p-energy with the boundary band fixed to `boundary`.
pub fn solve(
    lattice: Arc<Lattice>,
    boundary: &Boundary,
    target: Target,
    config: &SolveConfig,
) -> Result<(DiscreteMap, SolveReport)> {
    solve_from(lattice, boundary, target, config, None)
}

/// As [`solve`], optionally starting from a supplied map (required for `Init::Supplied`).
pub fn solve_from(
    lattice: Arc<Lattice>,
    boundary: &Boundary,
    target: Target,
    config: &SolveConfig,
    supplied: Option<&DiscreteMap>,
) -> Result<(DiscreteMap, SolveReport)> {
    config.validate()?;
    let m = lattice.dim();
    let nc = target.ambient_dim();
    let mut u = initial_values(&lattice, boundary, target, config, supplied)?;
    let st = Stencil::new(&lattice, nc);
    let p = config.p;
    let eps2 = if p < 2.0 { config.eps_reg * config.eps_reg } else { 0.0 };
    let norm_scale = lattice.h().powf(-0.5 * m as f64);

    let mut g = vec![0.0; u.len()];
    let mut e = st.energy_grad(&u, p, eps2, &mut g);
    tangent_part(&st, target, &u, &mut g);
    let tau0 = config.fixed_step.unwrap_or(lattice.h().powi(2 - m as i32) / (4.0 * m as f64));
    let mut tau = tau0;
    let mut history = vec![e];
    let mut trial = u.clone();
    let mut g_new = vec![0.0; u.len()];
    let mut converged = false;
    let mut stalled = false;
    let mut monotone = true;
    let mut iterations = 0;
    let mut gn = norm_scale * crate::numeric::norm(&g);

    for it in 0..config.max_iter {
        if !e.is_finite() {
            return Err(Error::Divergence { iteration: it });
        }
        gn = norm_scale * crate::numeric::norm(&g);
        if gn <= config.tol_grad {
            converged = true;
            break;
        }
        if history.len() > config.window {
            let old = history[history.len() - 1 - config.window];
            if (old - e) <= config.tol_energy * e.abs().max(1e-300) {
                converged = true;
                break;
            }
        }
        let gg: f64 = g.iter().map(|v| v * v).sum();
        let mut accepted = false;
        let mut e_trial = e;
        match config.step {
            StepRule::Fixed => {
                retract(&st, target, &u, &g, tau0, &mut trial)?;
                e_trial = st.energy(&trial, p, eps2);
                accepted = true;
            }
            StepRule::Armijo => {
                for _ in 0..60 {
                    retract(&st, target, &u, &g, tau, &mut trial)?;
                    e_trial = st.energy(&trial, p, eps2);
                    if !e_trial.is_finite() {
                        return Err(Error::Divergence { iteration: it });
                    }
                    if e_trial <= e - 1e-4 * tau * gg {
                        accepted = true;
                        break;
                    }
                    tau *= 0.5;
                }
            }
        }
        if !e_trial.is_finite() {
            return Err(Error::Divergence { iteration: it });
        }
        if !accepted {
            stalled = true;
            converged = true;
            break;
        }
        let e_next = st.energy_grad(&trial, p, eps2, &mut g_new);
        tangent_part(&st, target, &trial, &mut g_new);
        if e_next > e {
            monotone = false;
        }
        if config.step == StepRule::Armijo {
            // Barzilai-Borwein estimate for the next trial step.
            let mut ss = 0.0;
            let mut sy = 0.0;
            for i in 0..u.len() {
                let s = trial[i] - u[i];
                ss += s * s;
                sy += s * (g_new[i] - g[i]);
            }
            tau = if sy > 0.0 { (ss / sy).clamp(1e-3 * tau0, 1e4 * tau0) } else { (2.0 * tau).min(1e4 * tau0) };
        }
        std::mem::swap(&mut u, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        e = e_next;
        history.push(e);
        iterations = it + 1;
    }
    if !e.is_finite() {
        return Err(Error::Divergence { iteration: iterations });
    }
    if converged && iterations == config.max_iter {
        converged = false;
    }
    let map = DiscreteMap::new(VectorField::new(lattice.clone(), nc, u)?, target)?;
    let density = EnergyDensity::new(&map, p)?;
    let energy = density.total();
    let lambda = density.theta(&vec![0.0; m], 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let mut residual = 0.0f64;
    for _ in 0..config.residual_fields {
        let xi = BumpField::random(&mut rng, m, 2.0 * lattice.h());
        residual = residual.max(energy::stationarity_residual(&map, p, &xi)?.abs());
    }
    let report = SolveReport {
        energy,
        discrete_energy: e,
        iterations,
        grad_norm: gn,
        converged,
        stalled,
        stationarity_residual: residual,
        lambda,
        constraint_violation: map.constraint_violation(),
        monotone,
        energy_history: history,
    };
    Ok((map, report))
}

fn tangent_part(st: &Stencil, target: Target, u: &[f64], g: &mut [f64]) {
    let nc = st.nc;
    for n in 0..st.len() {
        let gs = &mut g[n * nc..(n + 1) * nc];
        if st.fixed[n] {
            gs.iter_mut().for_each(|v| *v = 0.0);
        } else {
            target.tangent_project_in_place(&u[n * nc..(n + 1) * nc], gs);
        }
    }
}

fn retract(st: &Stencil, target: Target, u: &[f64], g: &[f64], tau: f64, out: &mut [f64]) -> Result<()> {
    let nc = st.nc;
    for n in 0..st.len() {
        let o = &mut out[n * nc..(n + 1) * nc];
        for a in 0..nc {
            o[a] = u[n * nc + a] - tau * g[n * nc + a];
        }
        if !st.fixed[n] {
            target.project_in_place(o)?;
        }
    }
    Ok(())
}

fn initial_values(
    lat: &Arc<Lattice>,
    boundary: &Boundary,
    target: Target,
    config: &SolveConfig,
    supplied: Option<&DiscreteMap>,
) -> Result<Vec<f64>> {
    let m = lat.dim();
    let nc = target.ambient_dim();
    let mut u = vec![0.0; lat.len() * nc];
    let mut omega = [0.0; 3];
    let direction = |pos: [f64; 3], omega: &mut [f64; 3]| {
        let r = pos[..m].iter().map(|v| v * v).sum::<f64>().sqrt();
        for k in 0..m {
            omega[k] = pos[k] / r;
        }
    };
    for n in 0..lat.len() {
        direction(lat.position(n), &mut omega);
        boundary.eval(&omega[..m], target, &mut u[n * nc..(n + 1) * nc])?;
    }
    match config.init {
        Init::Radial => {}
        Init::Harmonic => harmonic_extension(lat, nc, target, &mut u)?,
        Init::Supplied => {
            let f = supplied.ok_or_else(|| Error::invalid("init 'supplied' needs an initial field"))?;
            if f.lattice().as_ref() != lat.as_ref() || f.field.ncomp != nc {
                return Err(Error::MismatchedLattices("initial field does not match the solve lattice".into()));
            }
            for n in 0..lat.len() {
                if !lat.is_band(n) {
                    u[n * nc..(n + 1) * nc].copy_from_slice(f.value(n));
                    target.project_in_place(&mut u[n * nc..(n + 1) * nc])?;
                }
            }
        }
    }
    if config.perturbation > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for n in 0..lat.len() {
            if lat.is_band(n) {
                continue;
            }
            let v = &mut u[n * nc..(n + 1) * nc];
            for a in v.iter_mut() {
                *a += config.perturbation * rng.random_range(-1.0..1.0);
            }
            target.project_in_place(v)?;
        }
    }
    Ok(u)
}

/// Conjugate gradients for the componentwise discrete Laplace equation with the
/// band values held fixed; the result is projected onto the target.
fn harmonic_extension(lat: &Lattice, nc: usize, target: Target, u: &mut [f64]) -> Result<()> {
    let m = lat.dim();
    let free: Vec<usize> = (0..lat.len()).filter(|&n| !lat.is_band(n)).collect();
    let mut index = vec![NONE; lat.len()];
    for (i, &n) in free.iter().enumerate() {
        index[n] = i as u32;
    }
    let apply = |x: &[f64], y: &mut [f64]| {
        for (i, &n) in free.iter().enumerate() {
            let mut s = 2.0 * m as f64 * x[i];
            for k in 0..m {
                for off in [-1, 1] {
                    let j = lat.neighbor(n, k, off).expect("interior stencil");
                    if index[j] != NONE {
                        s -= x[index[j] as usize];
                    }
                }
            }
            y[i] = s;
        }
    };
    let nf = free.len();
    for a in 0..nc {
        let mut b = vec![0.0; nf];
        for (i, &n) in free.iter().enumerate() {
            for k in 0..m {
                for off in [-1, 1] {
                    let j = lat.neighbor(n, k, off).expect("interior stencil");
                    if index[j] == NONE {
                        b[i] += u[j * nc + a];
                    }
                }
            }
        }
        let mut x = vec![0.0; nf];
        let mut r = b.clone();
        let mut d = r.clone();
        let mut ad = vec![0.0; nf];
        let mut rr: f64 = r.iter().map(|v| v * v).sum();
        let stop = 1e-20 * rr.max(1e-300);
        for _ in 0..10 * nf.max(1) {
            if rr <= stop {
                break;
            }
            apply(&d, &mut ad);
            let alpha = rr / d.iter().zip(&ad).map(|(p, q)| p * q).sum::<f64>();
            for i in 0..nf {
                x[i] += alpha * d[i];
                r[i] -= alpha * ad[i];
            }
            let rr_new: f64 = r.iter().map(|v| v * v).sum();
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..nf {
                d[i] = r[i] + beta * d[i];
            }
        }
        for (i, &n) in free.iter().enumerate() {
            u[n * nc + a] = x[i];
        }
    }
    for &n in &free {
        let v = &mut u[n * nc..(n + 1) * nc];
        if target.is_sphere() {
            // The componentwise extension can pass through 0 (e.g. for equatorial
            // windings); lift it off the equator so descent is not stuck in a plane.
            v[nc - 1] += HARMONIC_LIFT * (1.0 - lat.radius_of(n));
        }
        target.project_in_place(v)?;
    }
    Ok(())
}

/// `u_lambda(x) = sigma^{-1}(lambda x)` sampled on a planar lattice.
#[derive(Debug, Clone)]
pub struct BubbleSample {
    pub lambda: f64,
    pub map: DiscreteMap,
    /// Concentration scale `1/lambda` is below the resolution floor `3h`.
    pub underresolved: bool,
}

pub fn make_bubble(lattice: Arc<Lattice>, lambda: f64) -> Result<BubbleSample> {
    if lattice.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: lattice.dim() });
    }
    if !(lambda >= 1.0) {
        return Err(Error::invalid(format!("bubble scaling must be >= 1, got {lambda}")));
    }
    let underresolved = 1.0 / lambda < lattice.min_scale();
    if underresolved {
        log::warn!("bubble scale 1/{lambda} is below the resolution floor {}", lattice.min_scale());
    }
    let map = DiscreteMap::from_sampler(lattice, &AnalyticMap::Bubble { lambda })?;
    Ok(BubbleSample { lambda, map, underresolved })
}

/// Bubbles with `lambda_i = base^i`, `i = 0..count`.
pub fn make_bubble_sequence(lattice: Arc<Lattice>, base: f64, count: usize) -> Result<Vec<BubbleSample>> {
    (0..count).map(|i| make_bubble(lattice.clone(), base.powi(i as i32))).collect()
}

/// Energy of the trace's homogeneous extension over `B_1`, a cheap upper reference.
pub fn radial_extension_energy(lattice: Arc<Lattice>, boundary: &Boundary, target: Target, p: f64) -> Result<f64> {
    let cfg = SolveConfig { p, max_iter: 0, residual_fields: 0, ..SolveConfig::default() };
    let (map, _) = solve(lattice, boundary, target, &cfg)?;
    energy::p_energy(&map, p, &Region::Domain)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_are_unit() {
        for s in ["radial", "constant", "equator-winding:2", "tilt:0.5", "wave:2"] {
            let b: Boundary = s.parse().unwrap();
            assert_eq!(b.to_string(), s);
            let t = b.default_target(3);
            let mut out = vec![0.0; t.ambient_dim()];
            let w = [0.48, -0.6, 0.64];
            b.eval(&w, t, &mut out).unwrap();
            assert!((crate::numeric::norm(&out) - 1.0).abs() < 1e-12);
        }
        assert!("wave".parse::<Boundary>().is_err());
    }

    #[test]
    fn constant_boundary_gives_constant_map() {
        let lat = Lattice::shared(3, 8).unwrap();
        let (map, rep) = solve(lat.clone(), &Boundary::Constant, Target::sphere(3), &SolveConfig::default()).unwrap();
        assert_eq!(rep.energy, 0.0);
        assert!(rep.converged);
        for n in 0..lat.len() {
            assert_eq!(map.value(n), &[0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn descent_is_monotone_and_constrained() {
        let lat = Lattice::shared(2, 16).unwrap();
        let cfg = SolveConfig { p: 2.5, max_iter: 300, init: Init::Harmonic, ..SolveConfig::default() };
        let (map, rep) = solve(lat.clone(), &Boundary::Tilt(0.8), Target::sphere(3), &cfg).unwrap();
        assert!(rep.monotone);
        assert!(rep.energy_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(rep.constraint_violation < 1e-12);
        // Band values equal the trace exactly.
        let mut g = [0.0; 3];
        for n in 0..lat.len() {
            if lat.is_band(n) {
                let x = lat.point(n);
                let r = crate::numeric::norm(&x);
                let w: Vec<f64> = x.iter().map(|v| v / r).collect();
                Boundary::Tilt(0.8).eval(&w, Target::sphere(3), &mut g).unwrap();
                assert_eq!(map.value(n), &g);
            }
        }
    }

    #[test]
    fn radial_trace_energy_in_three_dimensions() {
        let lat = Lattice::shared(3, 16).unwrap();
        let cfg = SolveConfig { max_iter: 300, ..SolveConfig::default() };
        let (_, rep) = solve(lat, &Boundary::Radial, Target::sphere(3), &cfg).unwrap();
        let exact = 8.0 * PI;
        assert!((rep.energy / exact - 1.0).abs() < 0.08, "{}", rep.energy);
    }

    #[test]
    fn fixed_step_runs() {
        let lat = Lattice::shared(2, 12).unwrap();
        let cfg = SolveConfig { p: 2.5, step: StepRule::Fixed, max_iter: 50, ..SolveConfig::default() };
        let (_, rep) = solve(lat, &Boundary::Wave(1), Target::sphere(3), &cfg).unwrap();
        assert!(rep.energy.is_finite());
    }

    #[test]
    fn huge_fixed_step_diverges_or_stays_finite() {
        let lat = Lattice::shared(2, 12).unwrap();
        let cfg = SolveConfig { p: 4.0, step: StepRule::Fixed, fixed_step: Some(1e6), max_iter: 20, ..SolveConfig::default() };
        match solve(lat, &Boundary::Wave(2), Target::sphere(3), &cfg) {
            Ok((m, _)) => assert!(m.constraint_violation() < 1e-12),
            Err(e) => assert!(matches!(e, Error::Divergence { .. } | Error::ProjectionUndefined)),
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let lat = Lattice::shared(2, 8).unwrap();
        let cfg = SolveConfig { p: 1.0, ..SolveConfig::default() };
        assert!(solve(lat.clone(), &Boundary::Constant, Target::sphere(3), &cfg).is_err());
        let cfg = SolveConfig { init: Init::Supplied, ..SolveConfig::default() };
        assert!(solve(lat, &Boundary::Constant, Target::sphere(3), &cfg).is_err());
    }

    #[test]
    fn bubble_flags() {
        let lat = Lattice::shared(2, 32).unwrap();
        assert!(!make_bubble(lat.clone(), 8.0).unwrap().underresolved);
        assert!(make_bubble(lat.clone(), 64.0).unwrap().underresolved);
        assert!(make_bubble(lat, 0.5).is_err());
    }
}
