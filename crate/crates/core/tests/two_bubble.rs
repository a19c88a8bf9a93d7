//! Concentration at two separated points.

use pstrata::defect::{accumulate, detect_sigma, homogeneity_check, DefectConfig};
use pstrata::numeric::dist;
use pstrata::{AnalyticMap, DiscreteMap, Error, JacobianSource, Lattice};

#[test]
fn two_bubble_sequence_concentrates_at_both_centers() {
    let lat = Lattice::shared(2, 128).unwrap();
    let separation = 0.4;
    let maps: Vec<DiscreteMap> = [4.0, 8.0, 16.0, 32.0, 64.0]
        .iter()
        .map(|&lambda| DiscreteMap::from_sampler(lat.clone(), &AnalyticMap::TwoBubble { lambda, separation }).unwrap())
        .collect();
    let limit = DiscreteMap::from_sampler(lat.clone(), &AnalyticMap::north_pole(2, 3)).unwrap();
    let refs: Vec<&dyn JacobianSource> = maps.iter().map(|m| m as &dyn JacobianSource).collect();
    let acc = accumulate(&refs, 2.0, Some(&limit)).unwrap();
    let cfg = DefectConfig { radii: vec![0.05, 0.1, 0.15], ..DefectConfig::default() };
    let report = detect_sigma(&acc, &cfg).unwrap();
    assert_eq!(report.clusters.len(), 2, "{:?}", report.clusters.iter().map(|c| &c.center).collect::<Vec<_>>());
    for c in &report.clusters {
        let d = dist(&c.center, &[separation, 0.0]).min(dist(&c.center, &[-separation, 0.0]));
        assert!(d < 2.0 * lat.h(), "cluster at {:?}", c.center);
    }
    assert!(report.min_cell_defect >= -1e-9);
    let per = report.density_ratio.expect("m = p");
    assert!(per > 0.8 * 8.0 * std::f64::consts::PI, "defect per cluster {per}");
    let mu = acc.measures.last().unwrap();
    assert!(matches!(homogeneity_check(&report, mu, &[0.0, 0.7], &[0.05, 0.1]), Err(Error::NotInSigma { .. })));
}
