//! Singular set ⊂ bad regularity set ⊂ quantitative stratum, on x/|x| (m = 3, p = 2).

use pstrata::numeric::norm;
use pstrata::stratification::{singularity_census, CensusConfig, RegularityConfig, RegularityProbe};
use pstrata::symmetry::k_symmetric_defect;
use pstrata::{AnalyticMap, DiscreteMap, Lattice};

const ETA: f64 = 0.05;

fn radial(res: usize) -> DiscreteMap {
    DiscreteMap::from_sampler(Lattice::shared(3, res).unwrap(), &AnalyticMap::Radial { dim: 3 }).unwrap()
}

#[test]
fn singular_points_lie_in_the_bad_regularity_set() {
    let f = radial(16);
    let census = singularity_census(&f, 2.0, &CensusConfig::default()).unwrap();
    let probe = RegularityProbe::new(&f, RegularityConfig::default()).unwrap();
    let lat = f.lattice();
    for r in [0.1, 0.2] {
        let bad = probe.below(r);
        for c in census.centers() {
            let node = lat.node_containing(&c).unwrap();
            let near = bad.iter().any(|&n| (0..3).all(|k| (lat.coord(n, k) - lat.coord(node, k)).abs() <= lat.h() * 1.01));
            assert!(near, "singular point {c:?} is not in B_{r}(f)");
        }
    }
}

#[test]
fn bad_regularity_points_fail_one_symmetry_at_some_scale_above_r() {
    let f = radial(16);
    let probe = RegularityProbe::new(&f, RegularityConfig::default()).unwrap();
    let exact = AnalyticMap::Radial { dim: 3 };
    let lat = f.lattice();
    let r = 0.2;
    // Only points whose blow-up balls can reach the origin inside the unit ball.
    let bad: Vec<usize> = probe.below(r).into_iter().filter(|&n| norm(&lat.point(n)) <= 1.0 / 3.0).collect();
    assert!(bad.len() > 8);
    for n in bad {
        let x = lat.point(n);
        let room = 1.0 - norm(&x);
        let mut s = r;
        let mut fails = false;
        while s <= room && !fails {
            fails = k_symmetric_defect(&exact, &x, s, 1, 2.0).unwrap().defect >= ETA;
            s *= 1.2;
        }
        assert!(fails, "{x:?} has r_f < {r} but is (1, {ETA})-symmetric at every scale in [{r}, {room}]");
    }
}

#[test]
fn constant_map_has_no_bad_points() {
    let f = DiscreteMap::from_sampler(Lattice::shared(3, 16).unwrap(), &AnalyticMap::north_pole(3, 3)).unwrap();
    assert!(RegularityProbe::new(&f, RegularityConfig::default()).unwrap().below(0.2).is_empty());
}
