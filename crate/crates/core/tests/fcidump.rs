mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use sacasscf::chem_io::*;

fn naive_transform(v: &Eri, cs: [&DMatrix<f64>; 4]) -> Vec<f64> {
    let n = v.dim();
    let d: Vec<usize> = cs.iter().map(|c| c.ncols()).collect();
    let mut out = vec![0.0; d[0] * d[1] * d[2] * d[3]];
    for a in 0..d[0] {
        for b in 0..d[1] {
            for c in 0..d[2] {
                for e in 0..d[3] {
                    let mut acc = 0.0;
                    for p in 0..n {
                        for q in 0..n {
                            for r in 0..n {
                                for s in 0..n {
                                    acc += cs[0][(p, a)] * cs[1][(q, b)] * cs[2][(r, c)] * cs[3][(s, e)] * v.get(p, q, r, s);
                                }
                            }
                        }
                    }
                    out[((a * d[1] + b) * d[2] + c) * d[3] + e] = acc;
                }
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn serialization_round_trips(seed in 0u64..10_000, n in 1usize..5) {
        let mut ints = random_integrals(n, 2, seed);
        ints.orbsym = Some((0..n as u32).map(|i| 1 + i % 2).collect());
        let back = parse_fcidump(&serialize_fcidump(&ints)).unwrap();
        prop_assert_eq!(back, ints);
    }

    #[test]
    fn transforms_match_the_naive_contraction(seed in 0u64..10_000, m in prop::collection::vec(-1.0f64..1.0, 36)) {
        let ints = random_integrals(3, 2, seed);
        let a = DMatrix::from_column_slice(3, 2, &m[..6]);
        let b = DMatrix::from_column_slice(3, 3, &m[6..15]);
        let c = DMatrix::from_column_slice(3, 1, &m[15..18]);
        let d = DMatrix::from_column_slice(3, 2, &m[18..24]);
        let got = ints.v.transform_mixed([&a, &b, &c, &d]);
        let want = naive_transform(&ints.v, [&a, &b, &c, &d]);
        for (x, y) in got.iter().zip(&want) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        let sq = DMatrix::from_column_slice(3, 3, &m[24..33]);
        let full = ints.v.transform(&sq);
        let want = naive_transform(&ints.v, [&sq, &sq, &sq, &sq]);
        prop_assert!(full.as_slice().iter().zip(&want).all(|(x, y)| (x - y).abs() < 1e-12));
        prop_assert!(full.symmetry_error() < 1e-12);
    }
}

#[test]
fn fixtures_parse_with_symmetry_labels() {
    let e = read_fcidump(&fixture("ethylene/theta090.fcidump")).unwrap();
    assert_eq!((e.n_orb, e.n_elec, e.ms2), (32, 16, 0));
    assert_eq!(e.orbsym.as_ref().unwrap()[7..9], [1, 2]);
    assert!(e.v.symmetry_error() < 1e-12);
    let h = read_fcidump(&fixture("h3/z0.500.fcidump")).unwrap();
    assert_eq!((h.n_orb, h.n_elec, h.ms2), (15, 3, 1));
}

#[test]
fn fortran_exponents_and_slash_terminators_are_accepted() {
    let text = "&FCI NORB=1, NELEC=2, MS2=0 /\n 0.5D+00 1 1 1 1\n -1.25d0 1 1 0 0\n 0.75 0 0 0 0\n";
    let ints = parse_fcidump(text).unwrap();
    assert_eq!(ints.v.get(0, 0, 0, 0), 0.5);
    assert_eq!(ints.h[(0, 0)], -1.25);
    assert_eq!(ints.e_nuc, 0.75);
    assert_eq!(ints.orbsym, None);
}

#[test]
fn malformed_input_is_rejected() {
    let cases = [
        "NORB=1 NELEC=2 MS2=0 &END\n",
        "&FCI NORB=1,NELEC=2,MS2=0,\n 0.5 1 1 1 1\n",
        "&FCI NELEC=2,MS2=0, &END\n",
        "&FCI NORB=1,NELEC=2,MS2=0, &END\n 0.5 1 1 1\n",
        "&FCI NORB=1,NELEC=2,MS2=0, &END\n 0.5 2 1 1 1\n",
        "&FCI NORB=1,NELEC=2,MS2=0, &END\n abc 1 1 1 1\n",
        "&FCI NORB=2,NELEC=2,MS2=0, &END\n 0.5 1 0 1 1\n",
        "&FCI NORB=2,NELEC=2,MS2=0, &END\n 0.5 1 2 1 1\n 0.6 2 1 1 1\n",
        "&FCI NORB=2,NELEC=2,MS2=0,ORBSYM=1, &END\n",
        "&FCI NORB=1,NELEC=2,MS2=0, &END\n NaN 1 1 0 0\n",
    ];
    for text in cases {
        assert!(parse_fcidump(text).is_err(), "accepted: {text:?}");
    }
    assert!(read_fcidump(std::path::Path::new("/nonexistent/file.fcidump")).is_err());
}

#[test]
fn equivalent_duplicates_are_tolerated() {
    let text = "&FCI NORB=2,NELEC=2,MS2=0, &END\n 0.5 1 2 1 1\n 0.5 2 1 1 1\n 0.5 1 1 2 1\n";
    assert_eq!(parse_fcidump(text).unwrap().v.get(1, 0, 0, 0), 0.5);
}

#[test]
fn core_folding_matches_the_dense_determinant_energy() {
    let ints = random_integrals(4, 4, 21);
    let cas = ActiveSpace { core: vec![0], active: vec![1, 2], n_active_elec: 2 };
    let ah = build_active_hamiltonian(&ints, &cas).unwrap();
    let dense = dense_cas(&ints, &cas.core, &cas.active);
    assert!((ah.e_const - dense.e_const).abs() < 1e-12);
    // Single determinant with the first active orbital doubly occupied.
    let e_det = dense.e_const + dense.matrix[(0b0011, 0b0011)];
    let want = ah.e_const + 2.0 * ah.h_eff[(0, 0)] + ah.v_act.get(0, 0, 0, 0);
    assert!((e_det - want).abs() < 1e-12);
}

#[test]
fn active_spaces_are_validated() {
    let ints = random_integrals(4, 4, 1);
    let bad = [
        ActiveSpace { core: vec![0], active: vec![0, 1], n_active_elec: 2 },
        ActiveSpace { core: vec![], active: vec![4], n_active_elec: 2 },
        ActiveSpace { core: vec![0], active: vec![1], n_active_elec: 3 },
        ActiveSpace { core: vec![], active: vec![], n_active_elec: 0 },
    ];
    for cas in bad {
        assert!(build_active_hamiltonian(&ints, &cas).is_err(), "{cas:?}");
    }
}
