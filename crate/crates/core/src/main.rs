use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use pstrata::config::{parse_resolution, ExperimentConfig};
use pstrata::defect::{accumulate, detect_sigma};
use pstrata::experiments::{self, stamped_csv, stamped_json, Artifact, EXPERIMENTS};
use pstrata::field_io;
use pstrata::minimizer::solve;
use pstrata::stratification::{minkowski_fit, radii_ladder, singularity_census};
use pstrata::symmetry::{k_symmetric_defect, SymmetryReport};
use pstrata::{AnalyticMap, DiscreteMap, Error, JacobianSource, MapSampler};

#[derive(Parser)]
#[command(name = "pstrata", version, about = "p-harmonic map stratification lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML experiment config; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Domain dimension.
    #[arg(long)]
    m: Option<usize>,
    /// Cell width, as `1/64` or `0.015625`.
    #[arg(long)]
    h: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Turn invariant breaches into exit code 4.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Clone, Default)]
struct Input {
    /// Field file (binary, or CSV by extension).
    #[arg(long = "in", conflicts_with = "preset")]
    input: Option<PathBuf>,
    /// Closed-form map: radial[:m], bubble:L, two-bubble:L, axial, blend:t, constant:m:n.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the p-energy for a boundary preset; writes field + SolveReport.
    Solve {
        #[command(flatten)]
        common: Common,
        /// radial, constant, equator-winding:k, tilt:a, wave:k, file:<path>.
        #[arg(long)]
        boundary: Option<String>,
        /// sphere:n (defaults per boundary).
        #[arg(long)]
        target: Option<String>,
        /// Field file name inside the output directory (`.csv` selects CSV).
        #[arg(long, default_value = "field.bin")]
        field: String,
    },
    /// theta-constancy, monotonicity, bad-scale and stationarity checks on x/|x|.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// k-symmetric defects of a blow-up for k = 0..=K.
    Symmetry {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
        /// Base point, comma separated (default: origin).
        #[arg(long, value_delimiter = ',')]
        x: Option<Vec<f64>>,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Quantitative strata classification on a point lattice.
    Strata {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
    },
    /// Classification plus the covering tree of S^k.
    Covering {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Tube volumes and fitted exponent of the detected singular set.
    Minkowski {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
    },
    /// Count singularities via the regularity scale.
    Census {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        r_cut: Option<f64>,
    },
    /// Defect measure of a sequence of field files (sorted by name).
    Defect {
        #[command(flatten)]
        common: Common,
        /// Directory of field files.
        #[arg(long)]
        seq: PathBuf,
        /// Weak-limit field; defaults to the last sequence member.
        #[arg(long)]
        limit: Option<PathBuf>,
        /// Concentration threshold on ball masses.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Re-run a named experiment (or `all`).
    Reproduce {
        #[command(flatten)]
        common: Common,
        name: String,
    },
}

enum Failure {
    Lib(Error),
    Strict(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(Error::from(e))
    }
}

type Outcome = Result<(), Failure>;

fn load_config(c: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = c.m {
        cfg.m = m;
    }
    if let Some(h) = &c.h {
        cfg.resolution = parse_resolution(h)?;
    }
    if let Some(p) = c.p {
        cfg.p = p;
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.output = out.display().to_string();
    }
    cfg.strict |= c.strict;
    Ok(cfg)
}

fn finish(cfg: &ExperimentConfig) -> Result<ExperimentConfig, Error> {
    cfg.validate()?;
    Ok(cfg.clone())
}

fn write_artifacts(cfg: &ExperimentConfig, artifacts: &[Artifact]) -> std::io::Result<()> {
    let dir = Path::new(&cfg.output);
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    for a in artifacts {
        std::fs::write(dir.join(&a.name), &a.contents)?;
        println!("wrote {}", dir.join(&a.name).display());
    }
    Ok(())
}

fn breach(cfg: &ExperimentConfig, what: String) -> Outcome {
    if cfg.strict {
        Err(Failure::Strict(what))
    } else {
        warn!("invariant breach: {what}");
        Ok(())
    }
}

enum Source {
    Analytic(AnalyticMap, pstrata::map::AnalyticField),
    Field(DiscreteMap),
}

impl Source {
    fn open(input: &Input, cfg: &mut ExperimentConfig) -> Result<Self, Error> {
        if let Some(path) = &input.input {
            let f = field_io::load(path)?;
            cfg.m = f.lattice().dim();
            cfg.resolution = f.lattice().resolution();
            return Ok(Source::Field(f));
        }
        let name = input.preset.clone().unwrap_or_else(|| format!("radial:{}", cfg.m));
        let map: AnalyticMap = name.parse()?;
        cfg.m = map.dim();
        let field = map.on_lattice(cfg.lattice()?)?;
        Ok(Source::Analytic(map, field))
    }

    fn sampler(&self) -> &dyn MapSampler {
        match self {
            Source::Analytic(m, _) => m,
            Source::Field(f) => f,
        }
    }

    fn jacobians(&self) -> &dyn JacobianSource {
        match self {
            Source::Analytic(_, f) => f,
            Source::Field(f) => f,
        }
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Solve { common, boundary, target, field } => {
            let mut cfg = load_config(&common)?;
            if let Some(b) = boundary {
                cfg.boundary = b;
            }
            if target.is_some() {
                cfg.target = target;
            }
            let cfg = finish(&cfg)?;
            let bd = cfg.boundary()?;
            let tgt = cfg.target(&bd)?;
            info!("solving m={} h=1/{} p={} boundary={}", cfg.m, cfg.resolution, cfg.p, cfg.boundary);
            let (map, report) = solve(cfg.lattice()?, &bd, tgt, &cfg.solve_config())?;
            let stamp = cfg.stamp();
            write_artifacts(&cfg, &[Artifact { name: "solve_report.json".into(), contents: stamped_json(&stamp, "solve", &report) }])?;
            let path = Path::new(&cfg.output).join(&field);
            field_io::save(&path, &map, &stamp)?;
            println!("wrote {}", path.display());
            println!("energy {:.6} iterations {} converged {}", report.energy, report.iterations, report.converged);
            if !report.converged {
                return breach(&cfg, format!("solver stopped after {} iterations without converging", report.iterations));
            }
            if !report.monotone {
                return breach(&cfg, "energy history is not monotone".into());
            }
            Ok(())
        }
        Command::Verify { common } => {
            let cfg = finish(&load_config(&common)?)?;
            let report = experiments::verify(&cfg)?;
            write_artifacts(&cfg, &[Artifact { name: "verify.json".into(), contents: stamped_json(&cfg.stamp(), "verify", &report) }])?;
            for (name, ok) in [
                ("theta-constancy", report.theta_ok),
                ("monotonicity", report.monotonicity_ok),
                ("bad-scales", report.bad_scales_ok),
                ("stationarity", report.stationarity_ok),
            ] {
                println!("{name}: {}", if ok { "pass" } else { "FAIL" });
            }
            if report.passed {
                Ok(())
            } else {
                breach(&cfg, "verify suite failed".into())
            }
        }
        Command::Symmetry { common, input, x, r, k } => {
            let mut cfg = load_config(&common)?;
            let src = Source::open(&input, &mut cfg)?;
            if let Some(x) = x {
                cfg.symmetry.x = x;
            }
            if let Some(r) = r {
                cfg.symmetry.r = r;
            }
            if let Some(k) = k {
                cfg.symmetry.k = k;
            }
            let cfg = finish(&cfg)?;
            let x = if cfg.symmetry.x.is_empty() { vec![0.0; cfg.m] } else { cfg.symmetry.x.clone() };
            let reports = (0..=cfg.symmetry.k)
                .map(|k| k_symmetric_defect(src.sampler(), &x, cfg.symmetry.r, k, cfg.p))
                .collect::<Result<Vec<_>, _>>()?;
            let mut csv = SymmetryReport::csv_header(cfg.m);
            for rep in &reports {
                csv.push_str(&rep.csv_row());
                println!("k={} defect={:.6} symmetric={}", rep.k, rep.defect, rep.defect < cfg.symmetry.eps);
            }
            let stamp = cfg.stamp();
            write_artifacts(
                &cfg,
                &[
                    Artifact { name: "symmetry.csv".into(), contents: stamped_csv(&stamp, &csv) },
                    Artifact { name: "symmetry.json".into(), contents: stamped_json(&stamp, "symmetry", &reports) },
                ],
            )?;
            Ok(())
        }
        Command::Strata { common, input } => covering(common, input, None),
        Command::Covering { common, input, k } => covering(common, input, k),
        Command::Minkowski { common, input } => {
            let mut cfg = load_config(&common)?;
            let src = Source::open(&input, &mut cfg)?;
            let cfg = finish(&cfg)?;
            let census = singularity_census(src.jacobians(), cfg.p, &cfg.census_config())?;
            let mk = &cfg.minkowski;
            let fit = minkowski_fit(src.jacobians().lattice(), &census.centers(), &radii_ladder(mk.r_lo, mk.r_hi, mk.count))?;
            println!("singular points {} exponent {:.4}", census.count, fit.exponent);
            let stamp = cfg.stamp();
            write_artifacts(
                &cfg,
                &[
                    Artifact { name: "minkowski.csv".into(), contents: stamped_csv(&stamp, &fit.to_csv()) },
                    Artifact { name: "minkowski.json".into(), contents: stamped_json(&stamp, "minkowski", &fit) },
                ],
            )?;
            Ok(())
        }
        Command::Census { common, input, r_cut } => {
            let mut cfg = load_config(&common)?;
            if let Some(r) = r_cut {
                cfg.regularity.r_cut = r;
            }
            let src = Source::open(&input, &mut cfg)?;
            let cfg = finish(&cfg)?;
            let census = singularity_census(src.jacobians(), cfg.p, &cfg.census_config())?;
            println!("singularities {}", census.count);
            for c in census.centers() {
                println!("  at {c:?}");
            }
            write_artifacts(&cfg, &[Artifact { name: "census.json".into(), contents: stamped_json(&cfg.stamp(), "census", &census) }])?;
            Ok(())
        }
        Command::Defect { common, seq, limit, eps } => {
            let mut cfg = load_config(&common)?;
            if let Some(e) = eps {
                cfg.defect.eps = e;
            }
            let cfg = finish(&cfg)?;
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&seq)?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .filter(|p| p.is_file())
                .collect();
            paths.sort();
            let maps = paths.iter().map(|p| field_io::load(p)).collect::<Result<Vec<_>, _>>()?;
            let limit = limit.map(|p| field_io::load(&p)).transpose()?;
            let refs: Vec<&dyn JacobianSource> = maps.iter().map(|m| m as &dyn JacobianSource).collect();
            let acc = accumulate(&refs, cfg.p, limit.as_ref().map(|l| l as &dyn JacobianSource))?;
            let report = detect_sigma(&acc, &cfg.defect_config())?;
            println!(
                "maps {} clusters {} defect mass {:.6} limit energy {:.6}",
                maps.len(),
                report.clusters.len(),
                report.defect_mass,
                report.limit_energy
            );
            write_artifacts(&cfg, &[Artifact { name: "defect.json".into(), contents: stamped_json(&cfg.stamp(), "defect", &report) }])?;
            let tol = 1e-6 * report.limit_energy.max(1.0);
            if report.min_cell_defect < -tol {
                return breach(&cfg, format!("negative defect density {}", report.min_cell_defect));
            }
            Ok(())
        }
        Command::Reproduce { common, name } => {
            let cfg = finish(&load_config(&common)?)?;
            let names: Vec<&str> = if name == "all" { EXPERIMENTS.to_vec() } else { vec![name.as_str()] };
            for n in names {
                info!("reproducing {n}");
                let artifacts = experiments::reproduce(n, &cfg)?;
                write_artifacts(&cfg, &artifacts)?;
            }
            Ok(())
        }
    }
}

fn covering(common: Common, input: Input, k: Option<usize>) -> Outcome {
    let mut cfg = load_config(&common)?;
    if let Some(k) = k {
        cfg.strata.k = k;
    }
    let src = Source::open(&input, &mut cfg)?;
    let cfg = finish(&cfg)?;
    let run = experiments::strata_covering(src.sampler(), &cfg)?;
    let stamp = cfg.stamp();
    let s = &run.summary;
    println!(
        "points {} S^{} members {} leaves {} bound {:.1} uncovered {}",
        s.points, cfg.strata.k, s.stratum_points, s.leaves, s.bound, s.uncovered
    );
    write_artifacts(
        &cfg,
        &[
            Artifact { name: "strata.csv".into(), contents: stamped_csv(&stamp, &run.field.to_csv()) },
            Artifact { name: "covering.json".into(), contents: stamped_json(&stamp, "covering", &run.summary) },
            Artifact { name: "covering_tree.json".into(), contents: stamped_json(&stamp, "covering-tree", &run.tree.to_json()) },
        ],
    )?;
    if s.uncovered > 0 {
        return breach(&cfg, format!("{} stratum points left uncovered", s.uncovered));
    }
    if !run.tree.within_bound() {
        return breach(&cfg, format!("{} leaves exceed the bound {}", s.leaves, s.bound));
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) => 2,
        Error::Divergence { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Strict(msg)) => {
            eprintln!("invariant violation: {msg}");
            ExitCode::from(4)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Divergence { iteration: 3 }), 3);
        assert_eq!(exit_code(&Error::ProjectionUndefined), 1);
    }
}
