//! Reproducible experiment drivers shared by the CLI (`verify`, `reproduce`) and
//! the acceptance tests. Every report is plain data; nothing here reads a clock.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ConeSection, EnergySection, ExperimentConfig, StrataSection};
use crate::defect::{accumulate, detect_sigma, homogeneity_deviation, ConcentrationReport, DefectConfig};
use crate::energy::{ladder, stationarity_residual, BumpField, EnergyDensity};
use crate::error::{Error, Result};
use crate::field_io::Stamp;
use crate::lattice::Lattice;
use crate::map::{AnalyticMap, DiscreteMap, JacobianSource, MapSampler};
use crate::minimizer::{make_bubble_sequence, solve, Boundary, SolveConfig};
use crate::numeric::{linear_fit, norm};
use crate::stratification::{
    build_covering, check_bad_scales, classification_points, classify_strata, minkowski_fit, radii_ladder,
    singularity_census, CensusConfig, CoveringTree, MinkowskiFit, RegularityConfig, RegularityProbe, StrataField,
};
use crate::symmetry::{homogeneous_defect, k_symmetric_defect};
use crate::target::Target;

pub const TOOL: &str = concat!("pstrata ", env!("CARGO_PKG_VERSION"));

/// A named output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'a str,
    config_hash: &'a str,
    kind: &'a str,
    report: &'a T,
}

/// Pretty JSON wrapped with tool version and config hash.
pub fn stamped_json<T: Serialize>(stamp: &Stamp, kind: &str, report: &T) -> String {
    let env = Envelope { tool: &stamp.tool, config_hash: &stamp.config_hash, kind, report };
    serde_json::to_string_pretty(&env).expect("reports serialize") + "\n"
}

/// CSV preceded by `#` lines carrying tool version and config hash.
pub fn stamped_csv(stamp: &Stamp, body: &str) -> String {
    format!("# tool {}\n# config {}\n{body}", stamp.tool, stamp.config_hash)
}

pub fn gradient_max(src: &dyn JacobianSource) -> f64 {
    let mut jac = vec![0.0; src.lattice().dim() * src.ncomp()];
    (0..src.lattice().len())
        .map(|n| {
            src.jacobian_into(n, &mut jac);
            jac.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max)
}

fn radial3() -> AnalyticMap {
    AnalyticMap::Radial { dim: 3 }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaConstancy {
    pub resolution: usize,
    pub radii: Vec<f64>,
    pub theta: Vec<f64>,
    pub reference: f64,
    pub max_rel_err: f64,
}

/// `theta(0, r)` of x/|x| (m = 3, p = 2) against its constant value `8 pi`.
pub fn theta_constancy(resolution: usize) -> Result<ThetaConstancy> {
    let f = radial3().on_lattice(Lattice::shared(3, resolution)?)?;
    let dens = EnergyDensity::new(&f, 2.0)?;
    let radii: Vec<f64> = (0..=8).map(|i| 0.1 + 0.05 * i as f64).collect();
    let theta = radii.iter().map(|&r| dens.theta(&[0.0; 3], r)).collect::<Result<Vec<_>>>()?;
    let reference = 8.0 * PI;
    let max_rel_err = theta.iter().map(|t| (t / reference - 1.0).abs()).fold(0.0, f64::max);
    Ok(ThetaConstancy { resolution, radii, theta, reference, max_rel_err })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityCase {
    pub label: String,
    pub p: f64,
    pub resolution: usize,
    pub points: usize,
    pub pairs: usize,
    pub violations: usize,
    /// Smallest `theta(r) - theta(s) + tol` over all checked pairs.
    pub worst_slack: f64,
    pub bad_scale_points: usize,
    pub bad_scale_violations: usize,
    pub max_bad_scales: usize,
}

/// Seeded base points, uniform in `B_radius(0)`.
pub fn base_points(m: usize, count: usize, radius: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(-radius..radius)).collect();
        if norm(&x) <= radius {
            out.push(x);
        }
    }
    out
}

/// Monotonicity of `theta` on the ladder `r_max gamma^i >= 5h`, plus the bad-scale
/// bound, at seeded base points in `B_{1/2}`.
pub fn monotonicity_case(
    label: &str,
    src: &dyn JacobianSource,
    p: f64,
    energy: &EnergySection,
    strata: &StrataSection,
    seed: u64,
) -> Result<MonotonicityCase> {
    let lat = src.lattice();
    let dens = EnergyDensity::new(src, p)?;
    let floor = 5.0 * lat.h();
    let mut case = MonotonicityCase {
        label: label.to_string(),
        p,
        resolution: lat.resolution(),
        points: 0,
        pairs: 0,
        violations: 0,
        worst_slack: f64::INFINITY,
        bad_scale_points: 0,
        bad_scale_violations: 0,
        max_bad_scales: 0,
    };
    for x in base_points(lat.dim(), energy.base_points, 0.5, seed) {
        let r_max = energy.r_max.min(1.0 - norm(&x));
        let scales = ladder(r_max, energy.gamma, floor)?;
        let theta = scales.iter().map(|&r| dens.theta(&x, r)).collect::<Result<Vec<_>>>()?;
        let tol = energy.tol_mono * theta[0].max(1.0);
        for i in 0..theta.len() {
            for j in i + 1..theta.len() {
                let slack = theta[i] - theta[j] + tol;
                case.pairs += 1;
                case.worst_slack = case.worst_slack.min(slack);
                if slack < 0.0 {
                    case.violations += 1;
                }
            }
        }
        case.points += 1;
        let bad = check_bad_scales(&dens, &x, strata.gamma, strata.delta, strata.window)?;
        case.bad_scale_points += 1;
        case.max_bad_scales = case.max_bad_scales.max(bad.count);
        if !bad.holds {
            case.bad_scale_violations += 1;
        }
    }
    Ok(case)
}

/// Five solver presets in m = 3, p = 2 used by the monotonicity suite.
pub const SOLVER_PRESETS: [&str; 5] = ["radial", "tilt:0.5", "wave:1", "wave:2", "equator-winding:2"];

pub fn solve_preset(m: usize, resolution: usize, p: f64, preset: &str, base: &SolveConfig) -> Result<DiscreteMap> {
    let boundary: Boundary = preset.parse()?;
    let target = boundary.default_target(m);
    let cfg = SolveConfig { p, ..base.clone() };
    let (map, report) = solve(Lattice::shared(m, resolution)?, &boundary, target, &cfg)?;
    if !report.energy.is_finite() {
        return Err(Error::Divergence { iteration: report.iterations });
    }
    Ok(map)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicitySuite {
    pub cases: Vec<MonotonicityCase>,
}

/// x/|x| at `cfg.resolution` plus solver outputs for every preset at `solve_resolution`.
pub fn monotonicity_suite(cfg: &ExperimentConfig, solve_resolution: usize) -> Result<MonotonicitySuite> {
    let f = radial3().on_lattice(Lattice::shared(3, cfg.resolution)?)?;
    let mut cases = vec![monotonicity_case("x/|x|", &f, 2.0, &cfg.energy, &cfg.strata, cfg.seed)?];
    for (i, preset) in SOLVER_PRESETS.iter().enumerate() {
        let map = solve_preset(3, solve_resolution, 2.0, preset, &cfg.solve_config())?;
        cases.push(monotonicity_case(preset, &map, 2.0, &cfg.energy, &cfg.strata, cfg.seed + 1 + i as u64)?);
    }
    Ok(MonotonicitySuite { cases })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityRow {
    pub resolution: usize,
    pub residuals: Vec<f64>,
    pub max_abs: f64,
    pub mean_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityReport {
    pub rows: Vec<StationarityRow>,
    /// `mean_abs` ratio of each resolution to the previous one.
    pub ratios: Vec<f64>,
}

/// First-variation residuals of x/|x| along seeded bump fields, shared across resolutions.
pub fn stationarity(resolutions: &[usize], fields: usize, seed: u64) -> Result<StationarityReport> {
    let coarsest = resolutions.iter().copied().min().ok_or_else(|| Error::invalid("no resolutions"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps: Vec<BumpField> = (0..fields).map(|_| BumpField::random(&mut rng, 3, 4.0 / coarsest as f64)).collect();
    let mut rows = Vec::new();
    for &res in resolutions {
        let f = radial3().on_lattice(Lattice::shared(3, res)?)?;
        let residuals = bumps.iter().map(|xi| stationarity_residual(&f, 2.0, xi)).collect::<Result<Vec<_>>>()?;
        let max_abs = residuals.iter().map(|r| r.abs()).fold(0.0, f64::max);
        let mean_abs = residuals.iter().map(|r| r.abs()).sum::<f64>() / residuals.len().max(1) as f64;
        rows.push(StationarityRow { resolution: res, residuals, max_abs, mean_abs });
    }
    let ratios = rows.windows(2).map(|w| w[1].mean_abs / w[0].mean_abs).collect();
    Ok(StationarityReport { rows, ratios })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryOracles {
    pub resolution: usize,
    pub homogeneous: Vec<(f64, f64)>,
    pub max_homogeneous: f64,
    pub axial_defect: f64,
    pub axis: Vec<f64>,
    pub axis_angle_deg: f64,
}

/// Homogeneous defect of discrete x/|x| at every resolved scale, and the 1-symmetric
/// synthetic's defect and recovered axis.
pub fn symmetry_oracles(resolution: usize) -> Result<SymmetryOracles> {
    let lat = Lattice::shared(3, resolution)?;
    let radial = DiscreteMap::from_sampler(lat.clone(), &radial3())?;
    let mut homogeneous = Vec::new();
    let mut r = crate::symmetry::MIN_BLOWUP_CELLS * lat.h();
    while r <= 1.0 + 1e-12 {
        homogeneous.push((r, homogeneous_defect(&radial, &[0.0; 3], r, 2.0)?.defect));
        r *= 2.0;
    }
    let max_homogeneous = homogeneous.iter().map(|v| v.1).fold(0.0, f64::max);
    let axial = DiscreteMap::from_sampler(lat, &AnalyticMap::Axial)?;
    let rep = k_symmetric_defect(&axial, &[0.0; 3], 0.5, 1, 2.0)?;
    let axis = rep.basis.first().cloned().unwrap_or_default();
    let axis_angle_deg = axis.first().map_or(90.0, |c| c.abs().min(1.0).acos().to_degrees());
    Ok(SymmetryOracles { resolution, homogeneous, max_homogeneous, axial_defect: rep.defect, axis, axis_angle_deg })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeRow {
    pub t: f64,
    pub d0_origin: f64,
    pub d0_offset: f64,
    pub d1_origin: f64,
    pub axis: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConePair {
    pub eps_cs: f64,
    pub eta_cs: f64,
    pub qualifying: usize,
    pub counterexamples: usize,
    pub max_d1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeSplitting {
    pub rows: Vec<ConeRow>,
    pub pairs: Vec<ConePair>,
    /// Shrinking `eps_cs` never raised the largest qualifying 1-defect.
    pub monotone: bool,
}

impl ConeSplitting {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,d0_origin,d0_offset,d1_origin\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.t, r.d0_origin, r.d0_offset, r.d1_origin));
        }
        s
    }
}

/// Sweep of the blended family: 0-defects at 0 and 0.4 e1, 1-defect at 0, all at r = 1/2.
pub fn cone_splitting(section: &ConeSection) -> Result<ConeSplitting> {
    let steps = section.steps.max(2);
    let offset = [0.4, 0.0, 0.0];
    let mut rows = Vec::with_capacity(steps);
    for i in 0..steps {
        let t = i as f64 / (steps - 1) as f64;
        let f = AnalyticMap::Blend { t };
        let d0_origin = homogeneous_defect(&f, &[0.0; 3], 0.5, 2.0)?.defect;
        let d0_offset = homogeneous_defect(&f, &offset, 0.5, 2.0)?.defect;
        let rep = k_symmetric_defect(&f, &[0.0; 3], 0.5, 1, 2.0)?;
        rows.push(ConeRow { t, d0_origin, d0_offset, d1_origin: rep.defect, axis: rep.basis.first().cloned().unwrap_or_default() });
    }
    let mut pairs: Vec<ConePair> = section
        .pairs
        .iter()
        .map(|&[eps_cs, eta_cs]| {
            let q: Vec<&ConeRow> = rows.iter().filter(|r| r.d0_origin < eps_cs && r.d0_offset < eps_cs).collect();
            ConePair {
                eps_cs,
                eta_cs,
                qualifying: q.len(),
                counterexamples: q.iter().filter(|r| r.d1_origin >= eta_cs).count(),
                max_d1: q.iter().map(|r| r.d1_origin).fold(0.0, f64::max),
            }
        })
        .collect();
    pairs.sort_by(|a, b| b.eps_cs.partial_cmp(&a.eps_cs).unwrap_or(std::cmp::Ordering::Equal));
    let monotone = pairs.windows(2).all(|w| w[1].max_d1 <= w[0].max_d1);
    Ok(ConeSplitting { rows, pairs, monotone })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoveringSummary {
    pub points: usize,
    pub depth: usize,
    pub truncated: bool,
    pub stratum_points: usize,
    pub uncovered: usize,
    pub leaves: usize,
    pub bound: f64,
    pub c0: f64,
    pub c1: f64,
    pub d: usize,
    pub max_ones: usize,
    pub leaf_extent: f64,
    /// `2 gamma^depth`.
    pub extent_limit: f64,
}

pub struct CoveringRun {
    pub field: StrataField,
    pub tree: CoveringTree,
    pub summary: CoveringSummary,
}

/// Strata classification on the configured point lattice and the covering of `S^k`.
pub fn strata_covering(f: &dyn MapSampler, cfg: &ExperimentConfig) -> Result<CoveringRun> {
    let s = &cfg.strata;
    let points = classification_points(&Lattice::new(f.dim(), s.point_resolution)?, s.radius);
    let field = classify_strata(f, &points, &cfg.strata_config())?;
    let depth = field.depth;
    let tree = build_covering(&field, s.k, depth, s.d)?;
    let summary = CoveringSummary {
        points: points.len(),
        depth,
        truncated: field.truncated,
        stratum_points: field.members(s.k, depth).len(),
        uncovered: tree.uncovered(&field).len(),
        leaves: tree.leaf_count(),
        bound: tree.bound,
        c0: tree.c0,
        c1: tree.c1,
        d: tree.d,
        max_ones: field.max_ones(),
        leaf_extent: tree.leaf_extent(),
        extent_limit: 2.0 * s.gamma.powi(depth as i32),
    };
    Ok(CoveringRun { field, tree, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularMinkowski {
    pub resolution: usize,
    pub singular_points: Vec<Vec<f64>>,
    pub fit: MinkowskiFit,
}

/// Census of discrete x/|x| and the Minkowski fit of its detected singular set.
pub fn minkowski_xoverx(cfg: &ExperimentConfig) -> Result<SingularMinkowski> {
    let lat = Lattice::shared(3, cfg.resolution)?;
    let f = DiscreteMap::from_sampler(lat.clone(), &radial3())?;
    let census = singularity_census(&f, 2.0, &cfg.census_config())?;
    let singular_points = census.centers();
    let mk = &cfg.minkowski;
    let fit = minkowski_fit(&lat, &singular_points, &radii_ladder(mk.r_lo, mk.r_hi, mk.count))?;
    Ok(SingularMinkowski { resolution: cfg.resolution, singular_points, fit })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub lambda: f64,
    pub r: f64,
    pub nodes: usize,
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BubbleScaling {
    pub resolution: usize,
    pub rows: Vec<ScalingRow>,
    pub slope: f64,
}

/// `Vol(B_r(u_lambda))` along `r = c / lambda`; scaling predicts slope `p = 2`.
pub fn bubble_scaling(resolution: usize, lambdas: &[f64], c: f64, reg: RegularityConfig) -> Result<BubbleScaling> {
    let lat = Lattice::shared(2, resolution)?;
    let mut rows = Vec::new();
    for &lambda in lambdas {
        let f = DiscreteMap::from_sampler(lat.clone(), &AnalyticMap::Bubble { lambda })?;
        let probe = RegularityProbe::new(&f, reg)?;
        let r = c / lambda;
        let nodes = probe.below(r);
        let volume = nodes.iter().map(|&n| lat.domain_weight(n)).sum::<f64>() * lat.cell_volume();
        rows.push(ScalingRow { lambda, r, nodes: nodes.len(), volume });
    }
    if rows.iter().any(|r| r.volume <= 0.0) {
        return Err(Error::DegenerateFit("empty regularity set".into()));
    }
    let lx: Vec<f64> = rows.iter().map(|r| r.r.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.volume.ln()).collect();
    let (slope, _) = linear_fit(&lx, &ly);
    Ok(BubbleScaling { resolution, rows, slope })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensusRow {
    pub label: String,
    pub m: usize,
    pub resolution: usize,
    pub r_cut: f64,
    pub count: usize,
    pub centers: Vec<Vec<f64>>,
}

fn census_row(label: &str, src: &dyn JacobianSource, p: f64, cfg: &CensusConfig) -> Result<CensusRow> {
    let rep = singularity_census(src, p, cfg)?;
    Ok(CensusRow {
        label: label.into(),
        m: src.lattice().dim(),
        resolution: src.lattice().resolution(),
        r_cut: cfg.r_cut,
        count: rep.count,
        centers: rep.centers(),
    })
}

/// Census of x/|x|, constant and smooth traces, and the two-bubble synthetic over
/// two resolutions and `r_cut` scaled by 0.8, 1 and 1.2.
pub fn census_suite(cfg: &ExperimentConfig) -> Result<Vec<CensusRow>> {
    let base = cfg.census_config();
    let cuts: Vec<CensusConfig> = [0.8, 1.0, 1.2].iter().map(|s| CensusConfig { r_cut: base.r_cut * s, ..base }).collect();
    let mut rows = Vec::new();
    for res in [16, 32] {
        let lat = Lattice::shared(3, res)?;
        let radial = DiscreteMap::from_sampler(lat.clone(), &radial3())?;
        let constant = DiscreteMap::from_sampler(lat, &AnalyticMap::north_pole(3, 3))?;
        let smooth = solve_preset(3, res, 2.0, "tilt:0.5", &cfg.solve_config())?;
        for c in &cuts {
            rows.push(census_row("x/|x|", &radial, 2.0, c)?);
            rows.push(census_row("constant", &constant, 2.0, c)?);
            rows.push(census_row("tilt:0.5", &smooth, 2.0, c)?);
        }
    }
    for res in [32, 64] {
        let f = DiscreteMap::from_sampler(Lattice::shared(2, res)?, &AnalyticMap::TwoBubble { lambda: 20.0, separation: 0.4 })?;
        for c in &cuts {
            rows.push(census_row("two-bubble", &f, 2.0, c)?);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BubbleDefect {
    pub resolution: usize,
    pub lambdas: Vec<f64>,
    pub totals: Vec<f64>,
    pub closed_forms: Vec<f64>,
    /// Smallest closed-form `8 pi l^2 / (1 + l^2)` over the sequence tail.
    pub tail_closed_form: f64,
    pub homogeneity: Vec<f64>,
    pub report: ConcentrationReport,
}

/// Bubbles `lambda_i = 2^i` (m = p = 2) converging weakly to the constant pole.
pub fn bubble_defect(resolution: usize, count: usize, defect: &DefectConfig) -> Result<BubbleDefect> {
    let lat = Lattice::shared(2, resolution)?;
    let seq = make_bubble_sequence(lat.clone(), 2.0, count)?;
    let limit = DiscreteMap::from_sampler(lat, &AnalyticMap::north_pole(2, 3))?;
    let maps: Vec<&dyn JacobianSource> = seq.iter().map(|b| &b.map as &dyn JacobianSource).collect();
    let acc = accumulate(&maps, 2.0, Some(&limit))?;
    let report = detect_sigma(&acc, defect)?;
    let lambdas: Vec<f64> = seq.iter().map(|b| b.lambda).collect();
    let closed_forms: Vec<f64> = lambdas.iter().map(|&l| AnalyticMap::bubble_energy(l, 1.0)).collect();
    let tail_closed_form = closed_forms[closed_forms.len().saturating_sub(defect.tail)..].iter().copied().fold(f64::INFINITY, f64::min);
    let homogeneity =
        acc.measures.iter().map(|mu| homogeneity_deviation(mu, &[0.0, 0.0], &defect.radii)).collect::<Result<Vec<_>>>()?;
    Ok(BubbleDefect {
        resolution,
        lambdas,
        totals: acc.measures.iter().map(|mu| mu.total()).collect(),
        closed_forms,
        tail_closed_form,
        homogeneity,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonIntegerDefect {
    pub resolution: usize,
    pub energies: Vec<f64>,
    pub defect_mass: f64,
    pub limit_energy: f64,
    pub relative: f64,
}

/// Perturbed p = 2.5 solves from the radial trace (m = 3); the last one is the limit.
pub fn non_integer_defect(resolution: usize, seeds: u64, base: &SolveConfig) -> Result<NonIntegerDefect> {
    let maps = (0..seeds)
        .map(|seed| {
            let cfg = SolveConfig { p: 2.5, seed, perturbation: 0.3, ..base.clone() };
            Ok(solve(Lattice::shared(3, resolution)?, &Boundary::Radial, Target::sphere(3), &cfg)?.0)
        })
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&dyn JacobianSource> = maps.iter().map(|m| m as &dyn JacobianSource).collect();
    let (limit, seq) = refs.split_last().ok_or_else(|| Error::invalid("need at least one solve"))?;
    let acc = accumulate(seq, 2.5, Some(*limit))?;
    let lat = limit.lattice();
    let radii: Vec<f64> = [0.125, 0.25, 0.5].into_iter().filter(|&r| r >= lat.min_scale()).collect();
    let report = detect_sigma(&acc, &DefectConfig { radii, ..DefectConfig::default() })?;
    Ok(NonIntegerDefect {
        resolution,
        energies: acc.measures.iter().map(|mu| mu.total()).collect(),
        defect_mass: report.defect_mass,
        limit_energy: report.limit_energy,
        relative: report.defect_mass.abs() / report.limit_energy.max(f64::MIN_POSITIVE),
    })
}

/// Smooth traces for the m = 2, p = 2.5 regularity check.
pub const SMOOTH_PRESETS: [&str; 5] = ["tilt:0.5", "tilt:1.5", "wave:1", "wave:2", "wave:3"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityRow {
    pub preset: String,
    pub resolution: usize,
    pub energy: f64,
    pub census: usize,
    pub max_gradient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubcriticalRegularity {
    pub rows: Vec<RegularityRow>,
    /// Per preset, relative change of `max |grad f|` between consecutive resolutions.
    pub gradient_change: Vec<(String, f64)>,
}

pub fn subcritical_regularity(cfg: &ExperimentConfig, resolutions: &[usize]) -> Result<SubcriticalRegularity> {
    let p = 2.5;
    let mut rows = Vec::new();
    let mut gradient_change = Vec::new();
    for preset in SMOOTH_PRESETS {
        let mut last: Option<f64> = None;
        let mut change = 0.0f64;
        for &res in resolutions {
            let map = solve_preset(2, res, p, preset, &cfg.solve_config())?;
            let energy = EnergyDensity::new(&map, p)?.total();
            let census = singularity_census(&map, p, &cfg.census_config())?.count;
            let g = gradient_max(&map);
            if let Some(prev) = last {
                change = change.max((g - prev).abs() / prev.max(1e-12));
            }
            last = Some(g);
            rows.push(RegularityRow { preset: preset.into(), resolution: res, energy, census, max_gradient: g });
        }
        gradient_change.push((preset.to_string(), change));
    }
    Ok(SubcriticalRegularity { rows, gradient_change })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub theta: ThetaConstancy,
    pub monotonicity: MonotonicityCase,
    pub stationarity: StationarityReport,
    pub theta_ok: bool,
    pub monotonicity_ok: bool,
    pub bad_scales_ok: bool,
    pub stationarity_ok: bool,
    pub passed: bool,
}

/// theta-constancy, monotonicity (with bad scales) and stationarity of analytic x/|x|
/// on the configured lattice.
pub fn verify(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    let theta = theta_constancy(cfg.resolution)?;
    let f = radial3().on_lattice(Lattice::shared(3, cfg.resolution)?)?;
    let monotonicity = monotonicity_case("x/|x|", &f, 2.0, &cfg.energy, &cfg.strata, cfg.seed)?;
    let stationarity = stationarity(&[cfg.resolution], cfg.energy.test_fields, cfg.seed)?;
    let theta_ok = theta.max_rel_err <= 0.03;
    let monotonicity_ok = monotonicity.violations == 0;
    let bad_scales_ok = monotonicity.bad_scale_violations == 0;
    let stationarity_ok = stationarity.rows.iter().all(|r| r.max_abs <= 0.05);
    Ok(VerifyReport {
        theta,
        monotonicity,
        stationarity,
        theta_ok,
        monotonicity_ok,
        bad_scales_ok,
        stationarity_ok,
        passed: theta_ok && monotonicity_ok && bad_scales_ok && stationarity_ok,
    })
}

/// Names accepted by [`reproduce`].
pub const EXPERIMENTS: [&str; 12] = [
    "theta-constancy",
    "monotonicity",
    "stationarity",
    "symmetry-oracles",
    "cone-splitting",
    "covering-xoverx",
    "minkowski-xoverx",
    "bubble-scaling",
    "census",
    "bubble-defect",
    "noninteger-defect",
    "subcritical-regularity",
];

fn json_artifact<T: Serialize>(stamp: &Stamp, name: &str, report: &T) -> Artifact {
    Artifact { name: format!("{name}.json"), contents: stamped_json(stamp, name, report) }
}

fn csv_artifact(stamp: &Stamp, name: &str, body: &str) -> Artifact {
    Artifact { name: format!("{name}.csv"), contents: stamped_csv(stamp, body) }
}

/// Runs a named experiment and returns its output files.
pub fn reproduce(name: &str, cfg: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let stamp = cfg.stamp();
    let out = match name {
        "theta-constancy" => {
            let r = theta_constancy(64)?;
            let mut csv = String::from("r,theta\n");
            for (a, b) in r.radii.iter().zip(&r.theta) {
                csv.push_str(&format!("{a},{b}\n"));
            }
            vec![json_artifact(&stamp, name, &r), csv_artifact(&stamp, name, &csv)]
        }
        "monotonicity" => vec![json_artifact(&stamp, name, &monotonicity_suite(cfg, 24)?)],
        "stationarity" => vec![json_artifact(&stamp, name, &stationarity(&[64, 128], cfg.energy.test_fields, cfg.seed)?)],
        "symmetry-oracles" => vec![json_artifact(&stamp, name, &symmetry_oracles(64)?)],
        "cone-splitting" => {
            let r = cone_splitting(&cfg.cone_splitting)?;
            vec![json_artifact(&stamp, name, &r), csv_artifact(&stamp, name, &r.to_csv())]
        }
        "covering-xoverx" => {
            let run = strata_covering(&radial3(), cfg)?;
            vec![
                json_artifact(&stamp, name, &run.summary),
                Artifact { name: format!("{name}-tree.json"), contents: stamped_json(&stamp, "covering-tree", &run.tree.to_json()) },
                csv_artifact(&stamp, &format!("{name}-strata"), &run.field.to_csv()),
            ]
        }
        "minkowski-xoverx" => {
            let r = minkowski_xoverx(cfg)?;
            vec![json_artifact(&stamp, name, &r), csv_artifact(&stamp, name, &r.fit.to_csv())]
        }
        "bubble-scaling" => {
            let r = bubble_scaling(128, &[2.0, 4.0, 8.0, 16.0], 0.25, cfg.regularity_config())?;
            let mut csv = String::from("lambda,r,volume\n");
            for row in &r.rows {
                csv.push_str(&format!("{},{},{}\n", row.lambda, row.r, row.volume));
            }
            vec![json_artifact(&stamp, name, &r), csv_artifact(&stamp, name, &csv)]
        }
        "census" => {
            let rows = census_suite(cfg)?;
            let mut csv = String::from("label,m,resolution,r_cut,count\n");
            for r in &rows {
                csv.push_str(&format!("{},{},{},{},{}\n", r.label, r.m, r.resolution, r.r_cut, r.count));
            }
            vec![json_artifact(&stamp, name, &rows), csv_artifact(&stamp, name, &csv)]
        }
        "bubble-defect" => vec![json_artifact(&stamp, name, &bubble_defect(256, 7, &cfg.defect_config())?)],
        "noninteger-defect" => vec![json_artifact(&stamp, name, &non_integer_defect(16, 4, &cfg.solve_config())?)],
        "subcritical-regularity" => vec![json_artifact(&stamp, name, &subcritical_regularity(cfg, &[32, 64])?)],
        _ => return Err(Error::invalid(format!("unknown experiment '{name}'; known: {}", EXPERIMENTS.join(", ")))),
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_points_are_seeded_and_inside() {
        let a = base_points(3, 20, 0.5, 7);
        assert_eq!(a, base_points(3, 20, 0.5, 7));
        assert!(a.iter().all(|x| norm(x) <= 0.5));
        assert_ne!(a, base_points(3, 20, 0.5, 8));
    }

    #[test]
    fn stamps_lead_every_output() {
        let stamp = Stamp::new("deadbeef");
        let j = stamped_json(&stamp, "x", &vec![1.0, 2.0]);
        assert!(j.contains("\"config_hash\": \"deadbeef\"") && j.contains(TOOL));
        assert!(stamped_csv(&stamp, "a,b\n").starts_with("# tool pstrata"));
    }

    #[test]
    fn unknown_experiment_is_rejected() {
        assert!(reproduce("nope", &ExperimentConfig::default()).is_err());
    }

    #[test]
    fn coarse_theta_constancy_report() {
        let r = theta_constancy(32).unwrap();
        assert_eq!(r.radii.len(), r.theta.len());
        assert!(r.max_rel_err < 0.1, "{}", r.max_rel_err);
    }
}
