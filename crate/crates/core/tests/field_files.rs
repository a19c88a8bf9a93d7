use pstrata::config::ExperimentConfig;
use pstrata::field_io::{load, save};
use pstrata::minimizer::{solve, Boundary, SolveConfig};
use pstrata::{Lattice, Target};

#[test]
fn solver_output_survives_both_formats() {
    let cfg = SolveConfig { max_iter: 200, ..SolveConfig::default() };
    let (map, _) = solve(Lattice::shared(2, 16).unwrap(), &Boundary::Tilt(0.5), Target::sphere(3), &cfg).unwrap();
    let stamp = ExperimentConfig::default().stamp();
    let dir = tempfile::tempdir().unwrap();
    for name in ["f.bin", "f.csv"] {
        let path = dir.path().join(name);
        save(&path, &map, &stamp).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.field.values, map.field.values, "{name}");
        assert_eq!(back.target, map.target);
        let text = String::from_utf8_lossy(&std::fs::read(&path).unwrap()[..400]).into_owned();
        assert!(text.contains(&stamp.config_hash) && text.contains("pstrata "), "{name} lacks its stamp");
    }
}

#[test]
fn solved_field_can_seed_a_boundary() {
    let cfg = SolveConfig { max_iter: 100, ..SolveConfig::default() };
    let lat = Lattice::shared(2, 16).unwrap();
    let (map, _) = solve(lat.clone(), &Boundary::Wave(1), Target::sphere(3), &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.bin");
    save(&path, &map, &Default::default()).unwrap();
    let toml = format!("m = 2\nresolution = 16\nboundary = \"file:{}\"\n", path.display());
    let exp = ExperimentConfig::from_toml(&toml).unwrap();
    let bd = exp.boundary().map_err(|e| e.to_string()).unwrap();
    let (again, rep) = solve(lat, &bd, exp.target(&bd).unwrap(), &cfg).unwrap();
    assert!(rep.energy.is_finite());
    assert_eq!(again.field.ncomp, 3);
}
