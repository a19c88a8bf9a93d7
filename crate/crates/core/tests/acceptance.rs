//! Acceptance run: one PASS/FAIL line per criterion. Tolerances are fixed here;
//! calibrated thresholds come from the default config.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use pstrata::config::ExperimentConfig;
use pstrata::experiments::{self, stamped_json, MonotonicityCase};
use pstrata::numeric::norm;
use pstrata::{AnalyticMap, Lattice};

type Verdict = Result<(bool, String), pstrata::Error>;

struct Run {
    failures: usize,
    bad_scale_cases: Vec<MonotonicityCase>,
}

impl Run {
    fn report(&mut self, id: usize, name: &str, verdict: Verdict, elapsed: Duration) {
        let (ok, detail) = verdict.unwrap_or_else(|e| (false, format!("error: {e}")));
        if !ok {
            self.failures += 1;
        }
        println!("criterion {id:>2} {} {name}: {detail} [{:.1}s]", if ok { "PASS" } else { "FAIL" }, elapsed.as_secs_f64());
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn theta_constancy() -> Verdict {
    let t = Instant::now();
    let r = experiments::theta_constancy(64)?;
    let secs = t.elapsed().as_secs_f64();
    Ok((r.max_rel_err <= 0.03 && secs < 10.0, format!("max |theta/8pi - 1| = {:.4} over r in [0.1, 0.5] at h=1/64", r.max_rel_err)))
}

fn monotonicity(cfg: &ExperimentConfig, run: &mut Run) -> Verdict {
    let t = Instant::now();
    let suite = experiments::monotonicity_suite(cfg, 24)?;
    let secs = t.elapsed().as_secs_f64();
    let ok = suite.cases.len() == 6 && suite.cases.iter().all(|c| c.violations == 0 && c.points >= 50) && secs < 300.0;
    let detail = suite
        .cases
        .iter()
        .map(|c| format!("{}: {}/{} pairs violated", c.label, c.violations, c.pairs))
        .collect::<Vec<_>>()
        .join("; ");
    run.bad_scale_cases.extend(suite.cases);
    Ok((ok, detail))
}

fn stationarity(cfg: &ExperimentConfig) -> Verdict {
    let r = experiments::stationarity(&[64, 128], 10, cfg.seed)?;
    let coarse = r.rows[0].max_abs;
    let ratio = r.ratios[0];
    Ok((
        coarse <= 0.05 && (0.25..=0.75).contains(&ratio),
        format!("max residual {coarse:.2e} at h=1/64, mean residual ratio h/2 : h = {ratio:.3}"),
    ))
}

fn symmetry() -> Verdict {
    let r = experiments::symmetry_oracles(64)?;
    Ok((
        r.max_homogeneous <= 1e-3 && r.axial_defect <= 1e-3 && r.axis_angle_deg <= 5.0,
        format!(
            "homogeneous defect <= {:.2e} over {} scales, 1-symmetric defect {:.2e}, axis {:.2} deg from e1",
            r.max_homogeneous,
            r.homogeneous.len(),
            r.axial_defect,
            r.axis_angle_deg
        ),
    ))
}

fn cone_splitting(cfg: &ExperimentConfig) -> Verdict {
    let r = experiments::cone_splitting(&cfg.cone_splitting)?;
    let counter: usize = r.pairs.iter().map(|p| p.counterexamples).sum();
    let qualifying: usize = r.pairs.iter().map(|p| p.qualifying).sum();
    Ok((
        r.rows.len() == 20 && counter == 0 && qualifying > 0,
        format!("{} sweep points, {qualifying} qualifying (point, pair) cases, {counter} counterexamples", r.rows.len()),
    ))
}

fn bad_scales(cfg: &ExperimentConfig, run: &Run) -> Verdict {
    let verify = experiments::verify(cfg)?;
    let cases: Vec<&MonotonicityCase> = run.bad_scale_cases.iter().chain(std::iter::once(&verify.monotonicity)).collect();
    let points: usize = cases.iter().map(|c| c.bad_scale_points).sum();
    let violations: usize = cases.iter().map(|c| c.bad_scale_violations).sum();
    let max = cases.iter().map(|c| c.max_bad_scales).max().unwrap_or(0);
    Ok((points > 0 && violations == 0, format!("{points} points in {} suites, {violations} violations, max count {max}", cases.len())))
}

fn covering(cfg: &ExperimentConfig) -> Verdict {
    let run = experiments::strata_covering(&AnalyticMap::Radial { dim: 3 }, cfg)?;
    let s = &run.summary;
    Ok((
        s.depth == 4 && !s.truncated && s.uncovered == 0 && run.tree.within_bound() && s.leaf_extent <= s.extent_limit,
        format!(
            "{} S^0 points of {}, {} uncovered, {} leaves <= bound {:.0} (c0 {}, c1 {}, D {}), leaf extent {:.3} <= {:.3}",
            s.stratum_points, s.points, s.uncovered, s.leaves, s.bound, s.c0, s.c1, s.d, s.leaf_extent, s.extent_limit
        ),
    ))
}

fn minkowski(cfg: &ExperimentConfig) -> Verdict {
    let r = experiments::minkowski_xoverx(cfg)?;
    let b = experiments::bubble_scaling(128, &[2.0, 4.0, 8.0, 16.0], 0.25, cfg.regularity_config())?;
    Ok((
        r.fit.exponent >= 2.7 && b.slope >= 1.7,
        format!(
            "x/|x| exponent {:.3} from {} singular point(s); bubble B_r volume slope {:.3}",
            r.fit.exponent,
            r.singular_points.len(),
            b.slope
        ),
    ))
}

fn census(cfg: &ExperimentConfig) -> Verdict {
    let rows = experiments::census_suite(cfg)?;
    let expected = |label: &str| match label {
        "x/|x|" => 1,
        "two-bubble" => 2,
        _ => 0,
    };
    let wrong: Vec<String> = rows
        .iter()
        .filter(|r| r.count != expected(&r.label))
        .map(|r| format!("{} h=1/{} r_cut={:.3} -> {}", r.label, r.resolution, r.r_cut, r.count))
        .collect();
    Ok((
        wrong.is_empty(),
        if wrong.is_empty() {
            format!("{} runs (two resolutions x r_cut +-20%): x/|x| 1, constant 0, smooth 0, two-bubble 2", rows.len())
        } else {
            wrong.join("; ")
        },
    ))
}

fn defect(cfg: &ExperimentConfig) -> Verdict {
    let r = experiments::bubble_defect(256, 7, &cfg.defect_config())?;
    let lat = Lattice::new(2, 256)?;
    let h = lat.h();
    let single = r.report.clusters.len() == 1;
    let (centered, peak_ok) = match r.report.clusters.first() {
        Some(c) => (norm(&c.center) <= h, norm(&lat.point(c.peak)) <= h),
        None => (false, false),
    };
    let rel = (r.report.defect_mass / r.tail_closed_form - 1.0).abs();
    let decreasing = r.homogeneity.windows(2).all(|w| w[1] < w[0]);
    let p25 = experiments::non_integer_defect(16, 4, &cfg.solve_config())?;
    Ok((
        single && centered && peak_ok && rel <= 0.05 && decreasing && p25.relative <= 0.01,
        format!(
            "{} cluster(s), origin cell {}, defect mass {:.3} vs closed form {:.3} ({:.1}%), homogeneity decreasing {}, p=2.5 defect/energy {:.1e}",
            r.report.clusters.len(),
            centered && peak_ok,
            r.report.defect_mass,
            r.tail_closed_form,
            100.0 * rel,
            decreasing,
            p25.relative
        ),
    ))
}

fn subcritical(cfg: &ExperimentConfig) -> Verdict {
    let r = experiments::subcritical_regularity(cfg, &[32, 64])?;
    let census_zero = r.rows.iter().all(|row| row.census == 0);
    let worst = r.gradient_change.iter().map(|(_, c)| *c).fold(0.0, f64::max);
    Ok((
        census_zero && worst <= 0.10,
        format!("{} solves, all census 0: {census_zero}, max |grad f| change under h/2 <= {:.1}%", r.rows.len(), 100.0 * worst),
    ))
}

fn determinism(cfg: &ExperimentConfig) -> Verdict {
    let stamp = cfg.stamp();
    let a = stamped_json(&stamp, "verify", &experiments::verify(cfg)?);
    let b = stamped_json(&stamp, "verify", &experiments::verify(cfg)?);
    Ok((a == b, format!("two verify reports, {} bytes, identical {}", a.len(), a == b)))
}

fn main() -> ExitCode {
    let cfg = ExperimentConfig::default();
    let mut run = Run { failures: 0, bad_scale_cases: Vec::new() };

    let (v, t) = timed(theta_constancy);
    run.report(1, "theta-constancy", v, t);
    let (v, t) = timed(|| monotonicity(&cfg, &mut run));
    run.report(2, "monotonicity", v, t);
    let (v, t) = timed(|| stationarity(&cfg));
    run.report(3, "stationarity", v, t);
    let (v, t) = timed(symmetry);
    run.report(4, "symmetry oracles", v, t);
    let (v, t) = timed(|| cone_splitting(&cfg));
    run.report(5, "cone splitting", v, t);
    let (v, t) = timed(|| bad_scales(&cfg, &run));
    run.report(6, "bad-scale bound", v, t);
    let (v, t) = timed(|| covering(&cfg));
    run.report(7, "covering", v, t);
    let (v, t) = timed(|| minkowski(&cfg));
    run.report(8, "minkowski exponent", v, t);
    let (v, t) = timed(|| census(&cfg));
    run.report(9, "census", v, t);
    let (v, t) = timed(|| defect(&cfg));
    run.report(10, "defect measure", v, t);
    let (v, t) = timed(|| subcritical(&cfg));
    run.report(11, "m <= floor(p) regularity", v, t);
    let (v, t) = timed(|| determinism(&cfg));
    run.report(12, "determinism", v, t);

    println!("acceptance: {} of 12 criteria passed", 12 - run.failures);
    if run.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
