mod common;

use common::*;
use sacasscf::casscf::macro_loop;
use sacasscf::chem_io::read_fcidump;
use sacasscf::scan::{Manifest, Overrides};

fn manifest(name: &str) -> Manifest {
    Manifest::load(&fixture(&format!("../manifests/{name}"))).unwrap()
}

/// Dense lowest energies for each manifest state, with the irrep of every
/// active orbital read from ORBSYM.
fn dense_sector_minima(m: &Manifest, point: &str, n_alpha: usize, n_beta: usize) -> Vec<f64> {
    let p = m.points.iter().find(|p| p.label == point).unwrap();
    let ints = read_fcidump(&m.resolve(&p.fcidump)).unwrap();
    let cas = m.active_space().unwrap();
    let sym = ints.orbsym.clone().unwrap();
    let irreps: Vec<u32> = cas.active.iter().map(|&t| sym[t] - 1).collect();
    let dense = dense_cas(&ints, &cas.core, &cas.active);
    m.states.iter().map(|s| dense.sector_eigen(n_alpha, n_beta, &irreps, s.irrep).0[0]).collect()
}

fn casci(m: &Manifest, point: &str) -> sacasscf::casscf::MacroOutcome {
    let p = m.points.iter().find(|p| p.label == point).unwrap();
    let ints = read_fcidump(&m.resolve(&p.fcidump)).unwrap();
    let problem = m.problem(&ints, &Overrides::default()).unwrap();
    macro_loop(&ints, &problem, m.root_seed).unwrap()
}

#[test]
fn ethylene_fixed_circuits_reach_the_sector_ground_states() {
    let m = manifest("ethylene_casci.toml");
    for point in ["theta050", "theta090", "theta130"] {
        let want = dense_sector_minima(&m, point, 1, 1);
        let out = casci(&m, point);
        for (s, w) in out.last.states.iter().zip(&want) {
            assert!((s.energy - w).abs() < 1e-6, "{point} {}: {} vs {w}", s.label, s.energy);
            assert!((s.rdm_energy.unwrap() - s.energy).abs() < 1e-6);
        }
    }
}

#[test]
fn ethylene_rdms_match_the_dense_ground_states() {
    let m = manifest("ethylene_casci.toml");
    let p = &m.points[4];
    let ints = read_fcidump(&m.resolve(&p.fcidump)).unwrap();
    let cas = m.active_space().unwrap();
    let dense = dense_cas(&ints, &cas.core, &cas.active);
    let out = casci(&m, &p.label);
    for (s, irrep) in out.last.states.iter().zip([0, 1]) {
        let (_, vecs, basis) = dense.sector_eigen(1, 1, &[0, 1], irrep);
        let (g1, g2) = dense.rdms(&basis, &vecs[0]);
        assert!((&s.rdms.one - &g1).amax() < 1e-4, "{}: {} vs {}", s.label, s.rdms.one, g1);
        let err = s.rdms.two.iter().zip(&g2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-4, "{}: two-body error {err}", s.label);
        assert!((s.rdms.trace() - 2.0).abs() < 1e-9);
    }
}

#[test]
fn h3_adaptive_circuits_reach_chemical_accuracy() {
    let m = manifest("h3_casci.toml");
    let want = dense_sector_minima(&m, "z0.500", 2, 1);
    let out = casci(&m, "z0.500");
    for (s, w) in out.last.states.iter().zip(&want) {
        assert!((s.energy - w).abs() < 1.6e-3, "{}: {} vs {w}", s.label, s.energy);
        assert!(s.energy > w - 1e-9, "{}: variational bound violated", s.label);
    }
}

#[test]
fn noiseless_casci_is_reproducible() {
    let m = manifest("ethylene_casci.toml");
    let a = casci(&m, "theta070");
    let b = casci(&m, "theta070");
    assert_eq!(a.last.e_av.to_bits(), b.last.e_av.to_bits());
}
