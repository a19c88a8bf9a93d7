//! Target manifolds: round unit spheres in R^n and a flat R^N testing target.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Target {
    /// Unit sphere S^{n-1} in R^n; `ambient` is n.
    Sphere { ambient: usize },
    Flat { dim: usize },
}

impl Target {
    pub fn sphere(ambient: usize) -> Self {
        Target::Sphere { ambient }
    }

    pub fn flat(dim: usize) -> Self {
        Target::Flat { dim }
    }

    /// Dimension of the embedding Euclidean space.
    pub fn ambient_dim(&self) -> usize {
        match *self {
            Target::Sphere { ambient } => ambient,
            Target::Flat { dim } => dim,
        }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self, Target::Sphere { .. })
    }

    /// Nearest-point projection, in place.
    ///
    /// Vectors already unit to within a few ulps are left untouched, so a second
    /// projection is bitwise the identity.
    pub fn project_in_place(&self, v: &mut [f64]) -> Result<()> {
        if let Target::Sphere { .. } = self {
            let n2: f64 = v.iter().map(|x| x * x).sum();
            if n2 == 0.0 || !n2.is_finite() {
                return Err(Error::ProjectionUndefined);
            }
            if (n2 - 1.0).abs() <= 8.0 * f64::EPSILON {
                return Ok(());
            }
            let n = n2.sqrt();
            v.iter_mut().for_each(|x| *x /= n);
        }
        Ok(())
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v.len())?;
        let mut out = v.to_vec();
        self.project_in_place(&mut out)?;
        Ok(out)
    }

    /// Removes the normal component of `v` at `point`, in place.
    pub fn tangent_project_in_place(&self, point: &[f64], v: &mut [f64]) {
        if let Target::Sphere { .. } = self {
            let d: f64 = point.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(point).for_each(|(x, p)| *x -= d * p);
        }
    }

    pub fn tangent_project(&self, point: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        self.tangent_project_in_place(point, &mut out);
        out
    }

    /// Chordal distance.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        crate::numeric::dist(a, b)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.ambient_dim() {
            return Err(Error::DimensionMismatch { expected: self.ambient_dim(), got: len });
        }
        Ok(())
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Sphere { ambient } => write!(f, "sphere:{ambient}"),
            Target::Flat { dim } => write!(f, "flat:{dim}"),
        }
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, n) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("target '{s}' must look like sphere:n or flat:N")))?;
        let n: usize = n.trim().parse().map_err(|_| Error::invalid(format!("bad target dimension in '{s}'")))?;
        match kind.trim() {
            "sphere" if n >= 2 => Ok(Target::Sphere { ambient: n }),
            "flat" if n >= 1 => Ok(Target::Flat { dim: n }),
            _ => Err(Error::invalid(format!("unknown target '{s}'"))),
        }
    }
}

impl From<Target> for String {
    fn from(t: Target) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for Target {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const S2: Target = Target::Sphere { ambient: 3 };

    #[test]
    fn projection_examples() {
        assert_eq!(S2.project(&[2.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(S2.project(&[0.0, 1.0, 0.0]).unwrap(), vec![0.0, 1.0, 0.0]);
        let v = S2.project(&[1.0, 1.0, 0.0]).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((v[0] - s).abs() < 1e-15 && (v[1] - s).abs() < 1e-15 && v[2] == 0.0);
        assert!(matches!(S2.project(&[0.0, 0.0, 0.0]), Err(Error::ProjectionUndefined)));
        assert_eq!(Target::flat(2).project(&[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);
    }

    #[test]
    fn tangent_examples() {
        let e1 = [1.0, 0.0, 0.0];
        assert_eq!(S2.tangent_project(&e1, &[1.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(S2.tangent_project(&e1, &[0.0, 1.0, 0.0]), vec![0.0, 1.0, 0.0]);
        assert_eq!(S2.tangent_project(&e1, &[1.0, 1.0, 0.0]), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn distance_examples() {
        let e1 = [1.0, 0.0, 0.0];
        assert_eq!(S2.distance(&e1, &e1), 0.0);
        assert_eq!(S2.distance(&e1, &[-1.0, 0.0, 0.0]), 2.0);
        assert!((S2.distance(&e1, &[0.0, 1.0, 0.0]) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn parse_round_trip() {
        for s in ["sphere:3", "flat:1", "sphere:2"] {
            let t: Target = s.parse().unwrap();
            assert_eq!(t.to_string(), s);
        }
        assert!("sphere:x".parse::<Target>().is_err());
        assert!("torus:2".parse::<Target>().is_err());
    }

    fn vec3() -> impl Strategy<Value = [f64; 3]> {
        [-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn projection_is_idempotent(v in vec3()) {
            prop_assume!(v.iter().map(|x| x * x).sum::<f64>() > 1e-12);
            let p = S2.project(&v).unwrap();
            let q = S2.project(&p).unwrap();
            prop_assert_eq!(&p, &q);
            let n: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-12);
        }

        #[test]
        fn tangent_is_orthogonal(v in vec3(), w in vec3()) {
            prop_assume!(w.iter().map(|x| x * x).sum::<f64>() > 1e-6);
            let p = S2.project(&w).unwrap();
            let t = S2.tangent_project(&p, &v);
            let d: f64 = t.iter().zip(&p).map(|(a, b)| a * b).sum();
            prop_assert!(d.abs() < 1e-12);
        }

        #[test]
        fn triangle_inequality(a in vec3(), b in vec3(), c in vec3()) {
            for v in [&a, &b, &c] {
                prop_assume!(v.iter().map(|x| x * x).sum::<f64>() > 1e-9);
            }
            let (a, b, c) = (S2.project(&a).unwrap(), S2.project(&b).unwrap(), S2.project(&c).unwrap());
            prop_assert!(S2.distance(&a, &c) <= S2.distance(&a, &b) + S2.distance(&b, &c) + 1e-14);
            prop_assert!((S2.distance(&a, &b) - S2.distance(&b, &a)).abs() == 0.0);
        }
    }
}
