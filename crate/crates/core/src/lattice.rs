//! Regular cell-centred lattice on the unit ball of R^m.
//!
//! Nodes sit at `x_k = -1 + (i_k + 1/2) h` with `h = 1/n`, so the origin is a
//! cell corner and never a node. Only nodes with `|x| <= 1` are kept. Cells of
//! width `h` around each node carry the quadrature weight; balls are clipped
//! with a linear ramp of width `h` in the signed distance to the sphere, which
//! makes ball integrals continuous in both centre and radius.

use std::sync::Arc;

use crate::error::{Error, Result};

const NONE: u32 = u32::MAX;
/// Tolerance used when testing whether a ball or blow-up point stays inside B_1.
pub const DOMAIN_TOL: f64 = 1e-9;
/// Minimum resolved radius in units of the cell width.
pub const MIN_SCALE_CELLS: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct Lattice {
    dim: usize,
    resolution: usize,
    h: f64,
    side: usize,
    slot: Vec<u32>,
    cells: Vec<[u16; 3]>,
}

impl PartialEq for Lattice {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.resolution == other.resolution
    }
}

/// Integration region for quadrature queries.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Domain,
    Ball { center: Vec<f64>, radius: f64 },
    Annulus { center: Vec<f64>, inner: f64, outer: f64 },
}

impl Lattice {
    /// Builds the lattice with `resolution` cells per unit length (`h = 1/resolution`).
    pub fn new(dim: usize, resolution: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::invalid(format!("lattice dimension must be 2 or 3, got {dim}")));
        }
        if !(2..=16_000).contains(&resolution) || (dim == 3 && resolution > 160) {
            return Err(Error::invalid(format!("unsupported resolution {resolution} for m={dim}")));
        }
        let side = 2 * resolution;
        let h = 1.0 / resolution as f64;
        let total = side.pow(dim as u32);
        let mut slot = vec![NONE; total];
        let mut cells = Vec::new();
        let coord = |i: usize| -1.0 + (i as f64 + 0.5) * h;
        let k_range = if dim == 3 { side } else { 1 };
        for k in 0..k_range {
            for j in 0..side {
                for i in 0..side {
                    let mut r2 = coord(i) * coord(i) + coord(j) * coord(j);
                    if dim == 3 {
                        r2 += coord(k) * coord(k);
                    }
                    if r2 <= 1.0 {
                        let b = i + side * (j + side * k);
                        slot[b] = cells.len() as u32;
                        cells.push([i as u16, j as u16, k as u16]);
                    }
                }
            }
        }
        Ok(Self { dim, resolution, h, side, slot, cells })
    }

    /// Builds from a cell width that must be the reciprocal of an integer.
    pub fn with_cell_width(dim: usize, h: f64) -> Result<Self> {
        let n = (1.0 / h).round();
        if !(n >= 1.0) || ((1.0 / n) - h).abs() > 1e-12 * n {
            return Err(Error::invalid(format!("cell width {h} is not 1/n for an integer n")));
        }
        Self::new(dim, n as usize)
    }

    pub fn shared(dim: usize, resolution: usize) -> Result<Arc<Self>> {
        Self::new(dim, resolution).map(Arc::new)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Cell width.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// Smallest radius accepted by scale-indexed queries.
    pub fn min_scale(&self) -> f64 {
        MIN_SCALE_CELLS * self.h
    }

    #[inline]
    fn axis_coord(&self, i: usize) -> f64 {
        -1.0 + (i as f64 + 0.5) * self.h
    }

    /// Coordinate `k` of `node`; bit-reproducible from (m, h, index).
    #[inline]
    pub fn coord(&self, node: usize, k: usize) -> f64 {
        self.axis_coord(self.cells[node][k] as usize)
    }

    /// Position padded with zeros to three components.
    #[inline]
    pub fn position(&self, node: usize) -> [f64; 3] {
        let c = self.cells[node];
        let mut p = [self.axis_coord(c[0] as usize), self.axis_coord(c[1] as usize), 0.0];
        if self.dim == 3 {
            p[2] = self.axis_coord(c[2] as usize);
        }
        p
    }

    pub fn point(&self, node: usize) -> Vec<f64> {
        self.position(node)[..self.dim].to_vec()
    }

    pub fn cell_index(&self, node: usize) -> [u16; 3] {
        self.cells[node]
    }

    pub fn check_node(&self, node: usize) -> Result<()> {
        if node < self.len() {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange { index: node, count: self.len() })
        }
    }

    #[inline]
    fn lookup(&self, i: i64, j: i64, k: i64) -> Option<usize> {
        let s = self.side as i64;
        if i < 0 || j < 0 || k < 0 || i >= s || j >= s || (self.dim == 3 && k >= s) || (self.dim == 2 && k != 0) {
            return None;
        }
        let id = self.slot[(i + s * (j + s * k)) as usize];
        (id != NONE).then_some(id as usize)
    }

    /// Node at integer offset `offset` along `axis`, if it lies in the ball.
    #[inline]
    pub fn neighbor(&self, node: usize, axis: usize, offset: i64) -> Option<usize> {
        let c = self.cells[node];
        let mut idx = [c[0] as i64, c[1] as i64, c[2] as i64];
        idx[axis] += offset;
        self.lookup(idx[0], idx[1], idx[2])
    }

    /// Node at a multi-axis integer offset, if it lies in the ball.
    pub fn offset_node(&self, node: usize, offset: [i64; 3]) -> Option<usize> {
        let c = self.cells[node];
        self.lookup(c[0] as i64 + offset[0], c[1] as i64 + offset[1], c[2] as i64 + offset[2])
    }

    /// Node containing `x` in its cell, if any.
    pub fn node_containing(&self, x: &[f64]) -> Option<usize> {
        let idx: Vec<i64> = (0..3)
            .map(|k| if k < self.dim { ((x[k] + 1.0) / self.h).floor() as i64 } else { 0 })
            .collect();
        self.lookup(idx[0], idx[1], idx[2])
    }

    pub fn radius_of(&self, node: usize) -> f64 {
        let p = self.position(node);
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
    }

    /// Nodes with `|x| >= 1 - h`.
    pub fn is_band(&self, node: usize) -> bool {
        self.radius_of(node) >= 1.0 - self.h
    }

    /// Linear ramp approximating the fraction of the cell inside the ball.
    #[inline]
    pub fn ramp(&self, distance: f64, radius: f64) -> f64 {
        (0.5 + (radius - distance) / self.h).clamp(0.0, 1.0)
    }

    pub fn domain_weight(&self, node: usize) -> f64 {
        self.ramp(self.radius_of(node), 1.0)
    }

    /// Sum of the domain quadrature weights, which approximates the volume of B_1.
    pub fn total_volume(&self) -> f64 {
        (0..self.len()).map(|n| self.domain_weight(n)).sum::<f64>() * self.cell_volume()
    }

    /// Visits every node whose cell may intersect `B_radius(center)`, in scan order.
    pub fn for_each_near(&self, center: &[f64], radius: f64, mut visit: impl FnMut(usize, [f64; 3])) {
        let reach = radius + self.h;
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        for k in 0..self.dim {
            lo[k] = (((center[k] - reach + 1.0) / self.h) - 0.5).floor().max(0.0) as i64;
            hi[k] = ((((center[k] + reach + 1.0) / self.h) - 0.5).ceil() as i64).min(self.side as i64 - 1);
        }
        let s = self.side as i64;
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let id = self.slot[(i + s * (j + s * k)) as usize];
                    if id != NONE {
                        visit(id as usize, self.position(id as usize));
                    }
                }
            }
        }
    }

    /// Quadrature weight of `node` for `region` (without the cell volume factor).
    pub fn region_weight(&self, region: &Region, node: usize) -> f64 {
        let p = self.position(node);
        match region {
            Region::Domain => self.domain_weight(node),
            Region::Ball { center, radius } => self.ramp(dist_pad(&p, center), *radius),
            Region::Annulus { center, inner, outer } => {
                let d = dist_pad(&p, center);
                let inner_w = if *inner > 0.0 { self.ramp(d, *inner) } else { 0.0 };
                self.ramp(d, *outer) - inner_w
            }
        }
    }

    /// Checks the preconditions shared by all ball-indexed quantities.
    pub fn check_ball(&self, center: &[f64], radius: f64) -> Result<()> {
        if center.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: center.len() });
        }
        if radius < self.min_scale() * (1.0 - 1e-12) {
            return Err(Error::ScaleUnderresolved { radius, floor: self.min_scale() });
        }
        let c = crate::numeric::norm(center);
        if c + radius > 1.0 + DOMAIN_TOL {
            return Err(Error::BallOutsideDomain { center: center.to_vec(), radius });
        }
        Ok(())
    }

    pub fn check_region(&self, region: &Region) -> Result<()> {
        match region {
            Region::Domain => Ok(()),
            Region::Ball { center, radius } => self.check_ball(center, *radius),
            Region::Annulus { center, inner, outer } => {
                self.check_ball(center, *outer)?;
                if *inner < 0.0 || *inner > *outer {
                    return Err(Error::invalid(format!("annulus radii {inner} > {outer}")));
                }
                if *inner > 0.0 && *inner < self.min_scale() {
                    return Err(Error::ScaleUnderresolved { radius: *inner, floor: self.min_scale() });
                }
                Ok(())
            }
        }
    }

    /// Weighted quadrature of per-node values over `region`; deterministic scan order.
    pub fn integrate_values(&self, values: &[f64], region: &Region) -> Result<f64> {
        self.check_region(region)?;
        let mut acc = 0.0;
        match region {
            Region::Domain => {
                for (n, v) in values.iter().enumerate() {
                    acc += self.domain_weight(n) * v;
                }
            }
            Region::Ball { center, radius } | Region::Annulus { center, outer: radius, .. } => {
                self.for_each_near(center, *radius, |n, _| {
                    let w = self.region_weight(region, n);
                    if w != 0.0 {
                        acc += w * values[n];
                    }
                });
            }
        }
        Ok(acc * self.cell_volume())
    }

    /// Multilinear interpolation of an `ncomp`-valued nodal array at `x`.
    ///
    /// Corners outside the ball are dropped and the remaining weights renormalised;
    /// if no corner exists the nearest node in the surrounding block is used.
    pub fn interpolate_into(&self, values: &[f64], ncomp: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        let r2: f64 = x.iter().take(self.dim).map(|v| v * v).sum();
        if r2.sqrt() > 1.0 + DOMAIN_TOL {
            return Err(Error::BlowupOutOfDomain { point: x[..self.dim].to_vec() });
        }
        let mut base = [0i64; 3];
        let mut frac = [0.0f64; 3];
        for k in 0..self.dim {
            let u = (x[k] + 1.0) / self.h - 0.5;
            let mut i0 = u.floor();
            let mut t = u - i0;
            if t > 1.0 - 1e-9 {
                i0 += 1.0;
                t = 0.0;
            } else if t < 1e-9 {
                t = 0.0;
            }
            base[k] = i0 as i64;
            frac[k] = t;
        }
        out[..ncomp].iter_mut().for_each(|v| *v = 0.0);
        let mut wsum = 0.0;
        let corners = 1usize << self.dim;
        for c in 0..corners {
            let mut w = 1.0;
            let mut idx = [0i64; 3];
            for k in 0..self.dim {
                let bit = (c >> k) & 1;
                let wk = if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                w *= wk;
                idx[k] = base[k] + bit as i64;
            }
            if w == 0.0 {
                continue;
            }
            if let Some(n) = self.lookup(idx[0], idx[1], idx[2]) {
                wsum += w;
                for a in 0..ncomp {
                    out[a] += w * values[n * ncomp + a];
                }
            }
        }
        if wsum > 0.0 {
            if (wsum - 1.0).abs() > 1e-14 {
                out[..ncomp].iter_mut().for_each(|v| *v /= wsum);
            }
            return Ok(());
        }
        // Fallback: nearest existing node in the 4^m block around the point.
        let mut best: Option<(f64, usize)> = None;
        let span = -1..=2;
        for dk in if self.dim == 3 { span.clone() } else { 0..=0 } {
            for dj in span.clone() {
                for di in span.clone() {
                    let idx = [base[0] + di, base[1] + dj, if self.dim == 3 { base[2] + dk } else { 0 }];
                    if let Some(n) = self.lookup(idx[0], idx[1], idx[2]) {
                        let d = dist_pad(&self.position(n), x);
                        if best.map_or(true, |(bd, _)| d < bd) {
                            best = Some((d, n));
                        }
                    }
                }
            }
        }
        let (_, n) = best.ok_or_else(|| Error::BlowupOutOfDomain { point: x[..self.dim].to_vec() })?;
        out[..ncomp].copy_from_slice(&values[n * ncomp..(n + 1) * ncomp]);
        Ok(())
    }

    /// Finite-difference Jacobian at `node`: `out[i * ncomp + a] = d_i f^a`.
    ///
    /// Central differences where both neighbours exist, second-order one-sided
    /// differences otherwise, first-order as a last resort.
    pub fn gradient_into(&self, values: &[f64], ncomp: usize, node: usize, out: &mut [f64]) {
        let h = self.h;
        let f = |n: usize, a: usize| values[n * ncomp + a];
        for i in 0..self.dim {
            let plus = self.neighbor(node, i, 1);
            let minus = self.neighbor(node, i, -1);
            let row = &mut out[i * ncomp..(i + 1) * ncomp];
            match (minus, plus) {
                (Some(m), Some(p)) => {
                    for a in 0..ncomp {
                        row[a] = (f(p, a) - f(m, a)) / (2.0 * h);
                    }
                }
                (None, Some(p)) => match self.neighbor(node, i, 2) {
                    Some(pp) => {
                        for a in 0..ncomp {
                            row[a] = (-3.0 * f(node, a) + 4.0 * f(p, a) - f(pp, a)) / (2.0 * h);
                        }
                    }
                    None => {
                        for a in 0..ncomp {
                            row[a] = (f(p, a) - f(node, a)) / h;
                        }
                    }
                },
                (Some(m), None) => match self.neighbor(node, i, -2) {
                    Some(mm) => {
                        for a in 0..ncomp {
                            row[a] = (3.0 * f(node, a) - 4.0 * f(m, a) + f(mm, a)) / (2.0 * h);
                        }
                    }
                    None => {
                        for a in 0..ncomp {
                            row[a] = (f(node, a) - f(m, a)) / h;
                        }
                    }
                },
                (None, None) => row.iter_mut().for_each(|v| *v = 0.0),
            }
        }
    }
}

#[inline]
pub(crate) fn dist_pad(p: &[f64; 3], c: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..c.len() {
        let d = p[k] - c[k];
        s += d * d;
    }
    s.sqrt()
}

/// One real number per node.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub lattice: Arc<Lattice>,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(lattice: Arc<Lattice>, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::DimensionMismatch { expected: lattice.len(), got: values.len() });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at node {bad}")));
        }
        Ok(Self { lattice, values })
    }

    pub fn from_fn(lattice: Arc<Lattice>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let m = lattice.dim();
        let values = (0..lattice.len()).map(|n| f(&lattice.position(n)[..m])).collect();
        Self::new(lattice, values)
    }

    pub fn constant(lattice: Arc<Lattice>, c: f64) -> Self {
        let values = vec![c; lattice.len()];
        Self { lattice, values }
    }

    pub fn integrate(&self, region: &Region) -> Result<f64> {
        self.lattice.integrate_values(&self.values, region)
    }
}

/// Cell-clipped quadrature of `field` over `B_radius(center)`.
pub fn integrate_ball(field: &ScalarField, center: &[f64], radius: f64) -> Result<f64> {
    field.integrate(&Region::Ball { center: center.to_vec(), radius })
}

/// `ncomp` real numbers per node, stored node-major.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub lattice: Arc<Lattice>,
    pub ncomp: usize,
    pub values: Vec<f64>,
}

/// Dense m x N matrix of partial derivatives, row `i` = d/dx_i.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Jacobian {
    pub fn get(&self, i: usize, a: usize) -> f64 {
        self.data[i * self.cols + a]
    }

    /// Frobenius norm, the |grad f| of the energy density.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl VectorField {
    pub fn new(lattice: Arc<Lattice>, ncomp: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.len() * ncomp {
            return Err(Error::DimensionMismatch { expected: lattice.len() * ncomp, got: values.len() });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at node {}", bad / ncomp.max(1))));
        }
        Ok(Self { lattice, ncomp, values })
    }

    pub fn from_fn(lattice: Arc<Lattice>, ncomp: usize, f: impl Fn(&[f64], &mut [f64])) -> Result<Self> {
        let m = lattice.dim();
        let mut values = vec![0.0; lattice.len() * ncomp];
        for n in 0..lattice.len() {
            f(&lattice.position(n)[..m], &mut values[n * ncomp..(n + 1) * ncomp]);
        }
        Self::new(lattice, ncomp, values)
    }

    pub fn value(&self, node: usize) -> &[f64] {
        &self.values[node * self.ncomp..(node + 1) * self.ncomp]
    }

    pub fn gradient(&self, node: usize) -> Result<Jacobian> {
        self.lattice.check_node(node)?;
        let m = self.lattice.dim();
        let mut data = vec![0.0; m * self.ncomp];
        self.lattice.gradient_into(&self.values, self.ncomp, node, &mut data);
        Ok(Jacobian { rows: m, cols: self.ncomp, data })
    }

    /// Jacobians at every node.
    pub fn gradient_field(&self) -> GradientField {
        let m = self.lattice.dim();
        let stride = m * self.ncomp;
        let mut data = vec![0.0; self.lattice.len() * stride];
        for n in 0..self.lattice.len() {
            self.lattice.gradient_into(&self.values, self.ncomp, n, &mut data[n * stride..(n + 1) * stride]);
        }
        GradientField { lattice: self.lattice.clone(), ncomp: self.ncomp, data }
    }

    pub fn sample(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.lattice.interpolate_into(&self.values, self.ncomp, x, out)
    }
}

/// Finite-difference gradient of `field` at `node`.
pub fn gradient(field: &VectorField, node: usize) -> Result<Jacobian> {
    field.gradient(node)
}

/// Samples `y -> field(center + radius * y)` on the nodes of `target`.
pub fn resample(field: &VectorField, center: &[f64], radius: f64, target: &Arc<Lattice>) -> Result<VectorField> {
    let m = field.lattice.dim();
    if target.dim() != m || center.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: target.dim().min(center.len()) });
    }
    let nc = field.ncomp;
    let mut values = vec![0.0; target.len() * nc];
    let mut x = [0.0; 3];
    for n in 0..target.len() {
        let y = target.position(n);
        for k in 0..m {
            x[k] = center[k] + radius * y[k];
        }
        field.sample(&x[..m], &mut values[n * nc..(n + 1) * nc])?;
    }
    VectorField::new(target.clone(), nc, values)
}

/// Per-node Jacobians of a vector field.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub lattice: Arc<Lattice>,
    pub ncomp: usize,
    pub data: Vec<f64>,
}

impl GradientField {
    #[inline]
    pub fn at(&self, node: usize) -> &[f64] {
        let s = self.lattice.dim() * self.ncomp;
        &self.data[node * s..(node + 1) * s]
    }

    #[inline]
    pub fn norm_at(&self, node: usize) -> f64 {
        self.at(node).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn norms(&self) -> Vec<f64> {
        (0..self.lattice.len()).map(|n| self.norm_at(n)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::unit_ball_volume;
    use std::f64::consts::PI;

    fn lat(m: usize, n: usize) -> Arc<Lattice> {
        Lattice::shared(m, n).unwrap()
    }

    #[test]
    fn coordinates_are_reproducible() {
        let a = Lattice::new(3, 16).unwrap();
        let b = Lattice::new(3, 16).unwrap();
        assert_eq!(a.len(), b.len());
        for n in (0..a.len()).step_by(97) {
            let c = a.cell_index(n);
            for k in 0..3 {
                let expect = -1.0 + (c[k] as f64 + 0.5) * (1.0 / 16.0);
                assert_eq!(a.coord(n, k).to_bits(), expect.to_bits());
                assert_eq!(a.coord(n, k).to_bits(), b.coord(n, k).to_bits());
            }
        }
    }

    #[test]
    fn interior_nodes_have_full_stencil() {
        for (m, n) in [(2, 20), (3, 12)] {
            let l = Lattice::new(m, n).unwrap();
            for node in 0..l.len() {
                if !l.is_band(node) {
                    for axis in 0..m {
                        assert!(l.neighbor(node, axis, 1).is_some());
                        assert!(l.neighbor(node, axis, -1).is_some());
                    }
                }
            }
        }
    }

    #[test]
    fn weights_sum_to_ball_volume() {
        for (m, n) in [(2, 16), (2, 64), (3, 16), (3, 32)] {
            let l = Lattice::new(m, n).unwrap();
            let v = l.total_volume();
            let exact = unit_ball_volume(m);
            assert!(((v - exact) / exact).abs() <= 2.0 * l.h(), "m={m} n={n}: {v} vs {exact}");
        }
    }

    #[test]
    fn linear_field_has_exact_gradient() {
        let l = lat(3, 10);
        let f = VectorField::from_fn(l.clone(), 1, |x, out| out[0] = x[0]).unwrap();
        for node in 0..l.len() {
            let g = f.gradient(node).unwrap();
            assert!((g.get(0, 0) - 1.0).abs() < 1e-12);
            assert!(g.get(1, 0).abs() < 1e-12 && g.get(2, 0).abs() < 1e-12);
        }
        let c = VectorField::from_fn(l.clone(), 2, |_, out| out.fill(0.3)).unwrap();
        assert!(c.gradient(5).unwrap().norm() < 1e-14);
        assert!(matches!(c.gradient(l.len()), Err(Error::NodeOutOfRange { .. })));
    }

    #[test]
    fn radial_field_gradient_at_half() {
        // |grad(x/|x|)|^2 = (m-1)/|x|^2 = 8 at |x| = 1/2.
        let l = lat(3, 64);
        let f = VectorField::from_fn(l.clone(), 3, |x, out| {
            let r = crate::numeric::norm(x);
            out.iter_mut().zip(x).for_each(|(o, v)| *o = v / r);
        })
        .unwrap();
        // x1 = 0.5 is a cell face; take the node nearest to (0.5, 0, 0).
        let node = (0..l.len())
            .min_by(|&a, &b| {
                let da = dist_pad(&l.position(a), &[0.5, 0.0, 0.0]);
                let db = dist_pad(&l.position(b), &[0.5, 0.0, 0.0]);
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        let g = f.gradient(node).unwrap();
        let r = l.radius_of(node);
        let exact = 2.0 / (r * r);
        let got = g.norm().powi(2);
        assert!(((got - exact) / exact).abs() < 0.03, "{got} vs {exact}");
        assert!((exact - 8.0).abs() / 8.0 < 0.1);
    }

    #[test]
    fn gradient_error_is_second_order() {
        let err = |n: usize| {
            let l = lat(2, n);
            let f = VectorField::from_fn(l.clone(), 1, |x, out| out[0] = (2.0 * x[0]).sin() * x[1].exp()).unwrap();
            let mut worst = 0.0f64;
            for node in 0..l.len() {
                if l.radius_of(node) > 0.8 {
                    continue;
                }
                let p = l.position(node);
                let g = f.gradient(node).unwrap();
                let ex = 2.0 * (2.0 * p[0]).cos() * p[1].exp();
                let ey = (2.0 * p[0]).sin() * p[1].exp();
                worst = worst.max((g.get(0, 0) - ex).abs()).max((g.get(1, 0) - ey).abs());
            }
            worst
        };
        let ratio = err(16) / err(32);
        assert!(ratio >= 3.0, "ratio {ratio}");
    }

    #[test]
    fn constant_over_half_ball() {
        let l = lat(3, 64);
        let one = ScalarField::constant(l.clone(), 1.0);
        let v = integrate_ball(&one, &[0.0, 0.0, 0.0], 0.5).unwrap();
        let exact = 4.0 / 3.0 * PI * 0.125;
        assert!(((v - exact) / exact).abs() < 0.02, "{v}");
        let zero = ScalarField::constant(l.clone(), 0.0);
        assert_eq!(integrate_ball(&zero, &[0.0, 0.0, 0.0], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn constant_quadrature_error_bound() {
        let l = lat(2, 32);
        let one = ScalarField::constant(l.clone(), 1.0);
        for &(cx, r) in &[(0.0, 0.1), (0.3, 0.25), (-0.2, 0.7), (0.05, 0.5)] {
            let v = integrate_ball(&one, &[cx, 0.1], r).unwrap();
            let exact = PI * r * r;
            assert!(((v - exact) / exact).abs() <= 2.0 * l.h() / r, "c={cx} r={r}: {v}");
        }
    }

    #[test]
    fn singular_radial_integral() {
        // int_{B_1/2} 2/|x|^2 = 8 pi * 0.5 in R^3.
        let l = lat(3, 64);
        let f = ScalarField::from_fn(l.clone(), |x| 2.0 / x.iter().map(|v| v * v).sum::<f64>()).unwrap();
        let v = integrate_ball(&f, &[0.0, 0.0, 0.0], 0.5).unwrap();
        let exact = 4.0 * PI;
        assert!(((v - exact) / exact).abs() < 0.03, "{v} vs {exact}");
    }

    #[test]
    fn underresolved_and_outside_balls_are_refused() {
        let l = lat(2, 16);
        let one = ScalarField::constant(l.clone(), 1.0);
        assert!(matches!(integrate_ball(&one, &[0.0, 0.0], 0.1), Err(Error::ScaleUnderresolved { .. })));
        assert!(matches!(integrate_ball(&one, &[0.6, 0.0], 0.5), Err(Error::BallOutsideDomain { .. })));
    }

    #[test]
    fn identity_resample_reproduces_input() {
        let l = lat(3, 12);
        let f = VectorField::from_fn(l.clone(), 2, |x, out| {
            out[0] = (3.0 * x[0]).sin() + x[2];
            out[1] = x[1] * x[1];
        })
        .unwrap();
        let g = resample(&f, &[0.0, 0.0, 0.0], 1.0, &l).unwrap();
        assert_eq!(f.values, g.values);
    }

    #[test]
    fn linear_resample_is_exact() {
        let src = lat(2, 20);
        let dst = lat(2, 8);
        let f = VectorField::from_fn(src, 1, |x, out| out[0] = 2.0 * x[0] - x[1] + 0.5).unwrap();
        let c = [0.2, -0.1];
        let g = resample(&f, &c, 0.5, &dst).unwrap();
        for n in 0..dst.len() {
            let y = dst.position(n);
            let expect = 2.0 * (c[0] + 0.5 * y[0]) - (c[1] + 0.5 * y[1]) + 0.5;
            assert!((g.values[n] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn radial_resample_is_scale_invariant() {
        let src = lat(3, 32);
        let dst = lat(3, 8);
        let f = VectorField::from_fn(src.clone(), 3, |x, out| {
            let r = crate::numeric::norm(x);
            out.iter_mut().zip(x).for_each(|(o, v)| *o = v / r);
        })
        .unwrap();
        let g = resample(&f, &[0.0, 0.0, 0.0], 0.5, &dst).unwrap();
        for n in 0..dst.len() {
            let y = dst.position(n);
            let r = dst.radius_of(n);
            let err = ((g.values[3 * n] - y[0] / r).powi(2)
                + (g.values[3 * n + 1] - y[1] / r).powi(2)
                + (g.values[3 * n + 2] - y[2] / r).powi(2))
            .sqrt();
            assert!(err <= 2.0 * src.h() / (0.5 * r).max(src.h()), "node {n}: {err}");
        }
    }

    #[test]
    fn resample_composes() {
        let src = lat(2, 40);
        let mid = lat(2, 40);
        let dst = lat(2, 10);
        let f = VectorField::from_fn(src, 1, |x, out| out[0] = (2.0 * x[0]).cos() * (1.0 + x[1] * x[1])).unwrap();
        let c = [0.1, 0.2];
        let once = resample(&f, &c, 0.3, &dst).unwrap();
        let first = resample(&f, &c, 0.6, &mid).unwrap();
        let twice = resample(&first, &[0.0, 0.0], 0.5, &dst).unwrap();
        let h = 1.0 / 40.0;
        for n in 0..dst.len() {
            assert!((once.values[n] - twice.values[n]).abs() < 4.0 * h * h, "node {n}");
        }
    }

    #[test]
    fn blowup_outside_domain_is_refused() {
        let l = lat(2, 8);
        let f = VectorField::from_fn(l.clone(), 1, |x, out| out[0] = x[0]).unwrap();
        assert!(matches!(resample(&f, &[0.5, 0.0], 0.8, &l), Err(Error::BlowupOutOfDomain { .. })));
    }
}
