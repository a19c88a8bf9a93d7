//! Experiment configuration: one TOML document holding every module parameter.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::defect::DefectConfig;
use crate::error::{Error, Result};
use crate::field_io;
use crate::lattice::Lattice;
use crate::minimizer::{Boundary, Init, SolveConfig, StepRule};
use crate::stratification::{CensusConfig, RegularityConfig, StrataConfig};
use crate::target::Target;

const CALIBRATION: &str = include_str!("../calibration.toml");

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct Calibration {
    strata: CalStrata,
    cone_splitting: CalCone,
    regularity: CalRegularity,
    defect: CalDefect,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct CalDefect {
    eps: f64,
    radii: Vec<f64>,
    tail: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct CalStrata {
    eps: f64,
    eta: f64,
    gamma: f64,
    delta: f64,
    window: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct CalCone {
    pairs: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct CalRegularity {
    alpha: f64,
    r_cut: f64,
}

fn calibration() -> Calibration {
    toml::from_str(CALIBRATION).expect("embedded calibration file parses")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub step: StepRule,
    pub fixed_step: Option<f64>,
    pub max_iter: usize,
    pub tol_energy: f64,
    pub tol_grad: f64,
    pub window: usize,
    pub init: Init,
    pub perturbation: f64,
    pub eps_reg: f64,
    pub residual_fields: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolveConfig::default();
        Self {
            step: s.step,
            fixed_step: s.fixed_step,
            max_iter: s.max_iter,
            tol_energy: s.tol_energy,
            tol_grad: s.tol_grad,
            window: s.window,
            init: s.init,
            perturbation: s.perturbation,
            eps_reg: s.eps_reg,
            residual_fields: s.residual_fields,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergySection {
    /// Ladder ratio for monotonicity checks; dense enough that several scales
    /// survive the `5h` floor on desk-size lattices.
    pub gamma: f64,
    pub r_max: f64,
    /// Monotonicity slack relative to `max(theta(x, r_max), 1)`.
    pub tol_mono: f64,
    pub base_points: usize,
    pub test_fields: usize,
}

impl Default for EnergySection {
    fn default() -> Self {
        Self { gamma: 0.8, r_max: 0.5, tol_mono: 0.05, base_points: 50, test_fields: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymmetrySection {
    /// Base point; empty means the origin.
    pub x: Vec<f64>,
    pub r: f64,
    pub k: usize,
    pub eps: f64,
}

impl Default for SymmetrySection {
    fn default() -> Self {
        Self { x: Vec::new(), r: 0.5, k: 1, eps: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrataSection {
    pub gamma: f64,
    pub eps: f64,
    pub eta: f64,
    /// Energy-drop threshold for bad scales.
    pub delta: f64,
    /// Window `A` of the bad-scale count (`chi = gamma^A`).
    pub window: usize,
    pub k: usize,
    pub j_max: usize,
    /// Classification points are lattice nodes within this radius.
    pub radius: f64,
    /// Resolution of the classification lattice.
    pub point_resolution: usize,
    /// Externally supplied bound on tuple ones; the covering uses the larger of this and the observed maximum.
    pub d: usize,
}

impl Default for StrataSection {
    fn default() -> Self {
        let c = calibration().strata;
        Self {
            gamma: c.gamma,
            eps: c.eps,
            eta: c.eta,
            delta: c.delta,
            window: c.window,
            k: 0,
            j_max: 4,
            radius: 0.5,
            point_resolution: 24,
            d: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularitySection {
    pub alpha: f64,
    pub r_cut: f64,
    pub max_pairs: usize,
    pub count_radius: f64,
    pub annulus_factor: f64,
    pub pinch_tol: f64,
}

impl Default for RegularitySection {
    fn default() -> Self {
        let c = calibration().regularity;
        let census = CensusConfig::default();
        Self {
            alpha: c.alpha,
            r_cut: c.r_cut,
            max_pairs: RegularityConfig::default().max_pairs,
            count_radius: census.count_radius,
            annulus_factor: census.annulus_factor,
            pinch_tol: census.pinch_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinkowskiSection {
    pub r_lo: f64,
    pub r_hi: f64,
    pub count: usize,
}

impl Default for MinkowskiSection {
    fn default() -> Self {
        Self { r_lo: 0.05, r_hi: 0.5, count: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefectSection {
    pub eps: f64,
    pub radii: Vec<f64>,
    pub tail: usize,
}

impl Default for DefectSection {
    fn default() -> Self {
        let c = calibration().defect;
        Self { eps: c.eps, radii: c.radii, tail: c.tail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConeSection {
    /// Calibrated `(eps_cs, eta_cs)` pairs.
    pub pairs: Vec<[f64; 2]>,
    pub steps: usize,
}

impl Default for ConeSection {
    fn default() -> Self {
        Self { pairs: calibration().cone_splitting.pairs, steps: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub m: usize,
    /// Cells per unit length, `h = 1 / resolution`.
    pub resolution: usize,
    pub p: f64,
    /// Preset name (`radial`, `constant`, `tilt:a`, `wave:k`, `equator-winding:k`) or `file:<path>`.
    pub boundary: String,
    /// `sphere:n` or `flat:N`; defaults to the preset's natural target.
    pub target: Option<String>,
    pub seed: u64,
    pub output: String,
    /// Turn invariant breaches into a failing exit status.
    pub strict: bool,
    pub solver: SolverSection,
    pub energy: EnergySection,
    pub symmetry: SymmetrySection,
    pub strata: StrataSection,
    pub regularity: RegularitySection,
    pub minkowski: MinkowskiSection,
    pub defect: DefectSection,
    pub cone_splitting: ConeSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            m: 3,
            resolution: 32,
            p: 2.0,
            boundary: "radial".into(),
            target: None,
            seed: 0,
            output: "out".into(),
            strict: false,
            solver: SolverSection::default(),
            energy: EnergySection::default(),
            symmetry: SymmetrySection::default(),
            strata: StrataSection::default(),
            regularity: RegularitySection::default(),
            minkowski: MinkowskiSection::default(),
            defect: DefectSection::default(),
            cone_splitting: ConeSection::default(),
        }
    }
}

/// Parses a cell width written as `1/n`, `n` or a decimal, returning the resolution `n`.
pub fn parse_resolution(s: &str) -> Result<usize> {
    let s = s.trim();
    let bad = || Error::Config(format!("cell width '{s}' is not of the form 1/n"));
    if let Some(d) = s.strip_prefix("1/") {
        return d.trim().parse::<usize>().map_err(|_| bad());
    }
    let h: f64 = s.parse().map_err(|_| bad())?;
    let n = (1.0 / h).round();
    if !(n >= 1.0) || (n * h - 1.0).abs() > 1e-9 {
        return Err(bad());
    }
    Ok(n as usize)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Canonical TOML text; the config must have passed `validate`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("validated config serializes")
    }

    /// Hex SHA-256 of the canonical TOML serialization, with the output
    /// directory blanked since it cannot change any result.
    pub fn hash(&self) -> String {
        let canonical = Self { output: String::new(), ..self.clone() };
        hex::encode(Sha256::digest(canonical.to_toml().as_bytes()))
    }

    pub fn stamp(&self) -> field_io::Stamp {
        field_io::Stamp::new(self.hash())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(2..=3).contains(&self.m) {
            return bad(format!("m must be 2 or 3, got {}", self.m));
        }
        if !(self.p > 1.0) {
            return bad(format!("p must exceed 1, got {}", self.p));
        }
        if self.seed > i64::MAX as u64 {
            return bad(format!("seed {} exceeds the TOML integer range", self.seed));
        }
        if self.resolution < 2 {
            return bad(format!("resolution must be at least 2, got {}", self.resolution));
        }
        if let Some(t) = &self.target {
            t.parse::<Target>().map_err(|e| Error::Config(e.to_string()))?;
        }
        if !self.boundary.starts_with("file:") {
            self.boundary.parse::<Boundary>().map_err(|e| Error::Config(e.to_string()))?;
        }
        if !self.symmetry.x.is_empty() && self.symmetry.x.len() != self.m {
            return bad(format!("symmetry.x has {} coordinates for m = {}", self.symmetry.x.len(), self.m));
        }
        self.strata_config().validate(self.m).map_err(|e| Error::Config(e.to_string()))?;
        self.regularity_config().validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.strata.delta <= 0.0 || self.strata.window == 0 {
            return bad("strata.delta and strata.window must be positive".into());
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    pub fn lattice(&self) -> Result<Arc<Lattice>> {
        Lattice::shared(self.m, self.resolution)
    }

    pub fn boundary(&self) -> Result<Boundary> {
        match self.boundary.strip_prefix("file:") {
            Some(path) => Ok(Boundary::Field(Arc::new(field_io::load(Path::new(path))?))),
            None => self.boundary.parse(),
        }
    }

    pub fn target(&self, boundary: &Boundary) -> Result<Target> {
        match &self.target {
            Some(t) => t.parse(),
            None => Ok(boundary.default_target(self.m)),
        }
    }

    pub fn solve_config(&self) -> SolveConfig {
        let s = &self.solver;
        SolveConfig {
            p: self.p,
            step: s.step,
            fixed_step: s.fixed_step,
            max_iter: s.max_iter,
            tol_energy: s.tol_energy,
            tol_grad: s.tol_grad,
            window: s.window,
            init: s.init,
            seed: self.seed,
            perturbation: s.perturbation,
            eps_reg: s.eps_reg,
            residual_fields: s.residual_fields,
        }
    }

    pub fn strata_config(&self) -> StrataConfig {
        let s = &self.strata;
        StrataConfig { gamma: s.gamma, eps: s.eps, eta: s.eta, k_max: s.k, j_max: s.j_max, p: self.p, ..StrataConfig::default() }
    }

    pub fn regularity_config(&self) -> RegularityConfig {
        RegularityConfig { alpha: self.regularity.alpha, max_pairs: self.regularity.max_pairs, ..RegularityConfig::default() }
    }

    pub fn census_config(&self) -> CensusConfig {
        let r = &self.regularity;
        CensusConfig {
            r_cut: r.r_cut,
            count_radius: r.count_radius,
            annulus_factor: r.annulus_factor,
            pinch_tol: r.pinch_tol,
            regularity: self.regularity_config(),
        }
    }

    pub fn defect_config(&self) -> DefectConfig {
        DefectConfig { eps: self.defect.eps, radii: self.defect.radii.clone(), tail: self.defect.tail }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_losslessly() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn awkward_values_round_trip() {
        let mut cfg = ExperimentConfig { p: 2.5, target: Some("sphere:3".into()), seed: i64::MAX as u64, ..Default::default() };
        cfg.symmetry.x = vec![0.1, 1.0 / 3.0, -2e-17];
        cfg.solver.fixed_step = Some(0.1 + 0.2);
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { p: 2.5, ..Default::default() };
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn module_defaults_match_calibration() {
        let cal = calibration();
        let strata = StrataConfig::default();
        assert_eq!((strata.eps, strata.eta, strata.gamma), (cal.strata.eps, cal.strata.eta, cal.strata.gamma));
        let census = CensusConfig::default();
        assert_eq!(census.r_cut, cal.regularity.r_cut);
        assert_eq!(census.regularity.alpha, cal.regularity.alpha);
        assert_eq!(crate::defect::DefectConfig::default(), ExperimentConfig::default().defect_config());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(ExperimentConfig::from_toml("p = 0.5"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml("bogus = 1"), Err(Error::Config(_))));
        assert!(ExperimentConfig::from_toml("boundary = \"spiral\"").is_err());
        assert!(ExperimentConfig::from_toml("m = 3\n[symmetry]\nx = [0.0]").is_err());
    }

    #[test]
    fn cell_widths() {
        assert_eq!(parse_resolution("1/64").unwrap(), 64);
        assert_eq!(parse_resolution("0.125").unwrap(), 8);
        assert!(parse_resolution("0.3").is_err());
    }
}
