mod common;

use std::collections::BTreeMap;

use common::*;
use num_complex::Complex64;
use proptest::prelude::*;
use sacasscf::chem_io::{build_active_hamiltonian, ActiveSpace};
use sacasscf::fermion::{encode_rdm_observables, EncodingSpec, Scheme};
use sacasscf::rdm::{rdm_energy, RdmPair};
use sacasscf::sim::{exact_expectation, StateVector};

/// Maps an interleaved-order Fock vector to Jordan-Wigner qubits with alpha
/// modes first, tracking the reordering sign of each determinant.
fn to_block_jw(n: usize, basis: &[usize], c: &nalgebra::DVector<f64>) -> StateVector {
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << (2 * n)];
    for (i, &b) in basis.iter().enumerate() {
        let block: Vec<usize> = (0..2 * n).filter(|m| b >> m & 1 == 1).map(|m| if m % 2 == 0 { m / 2 } else { n + m / 2 }).collect();
        let inversions = (0..block.len()).flat_map(|i| (i + 1..block.len()).map(move |j| (i, j))).filter(|&(i, j)| block[i] > block[j]).count();
        let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
        let target: usize = block.iter().map(|m| 1 << m).sum();
        amps[target] = Complex64::new(sign * c[i], 0.0);
    }
    StateVector::from_amplitudes(amps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn measured_elements_rebuild_the_dense_rdms(seed in 0u64..1000, root in 0usize..3) {
        let n = 3;
        let ints = random_integrals(n, 3, seed);
        let dense = dense_cas(&ints, &[], &[0, 1, 2]);
        let (vals, vecs, basis) = dense.sector_eigen(2, 1, &[0, 0, 0], 0);
        let (g1, g2) = dense.rdms(&basis, &vecs[root]);
        let state = to_block_jw(n, &basis, &vecs[root]);
        let spec = EncodingSpec::new(Scheme::JordanWigner, 2 * n);
        let mut values = BTreeMap::new();
        for (idx, obs) in encode_rdm_observables(&spec, n).unwrap() {
            values.insert(idx, exact_expectation(&state, &obs).unwrap());
        }
        let rdm = RdmPair::from_elements(n, &values);
        prop_assert!((&rdm.one - &g1).amax() < 1e-10);
        let err = rdm.two.iter().zip(&g2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-10, "two-body error {err}");
        prop_assert!((rdm.trace() - 3.0).abs() < 1e-10);

        let cas = ActiveSpace { core: vec![], active: vec![0, 1, 2], n_active_elec: 3 };
        let ah = build_active_hamiltonian(&ints, &cas).unwrap();
        prop_assert!((rdm_energy(&ah, &rdm).unwrap() - vals[root]).abs() < 1e-10);
    }
}

#[test]
fn weighted_sums_are_linear() {
    let mut a = RdmPair::zeros(2);
    let mut b = RdmPair::zeros(2);
    a.one[(0, 0)] = 2.0;
    b.one[(1, 1)] = 2.0;
    a.two[0] = 1.0;
    b.two[15] = 3.0;
    let s = RdmPair::weighted_sum(&[(0.25, &a), (0.75, &b)]).unwrap();
    assert_eq!(s.one[(0, 0)], 0.5);
    assert_eq!(s.one[(1, 1)], 1.5);
    assert_eq!((s.two(0, 0, 0, 0), s.two(1, 1, 1, 1)), (0.25, 2.25));
    assert!(RdmPair::weighted_sum(&[]).is_err());
    assert!(RdmPair::weighted_sum(&[(1.0, &a), (1.0, &RdmPair::zeros(3))]).is_err());
}
