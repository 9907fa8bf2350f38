//! Dense reference implementations used as test oracles.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use sacasscf::chem_io::IntegralSet;
use sacasscf::fermion::{FermionOperator, Ladder};
use sacasscf::pauli::{Pauli, PauliString, PauliSum};

pub type CMatrix = DMatrix<Complex64>;

/// Ladder operator on the occupation-number basis; basis index bit `m` is mode `m`.
pub fn ladder_matrix(n_modes: usize, mode: usize, create: bool) -> DMatrix<f64> {
    let d = 1usize << n_modes;
    let mut m = DMatrix::zeros(d, d);
    for b in 0..d {
        let occupied = b >> mode & 1 == 1;
        if occupied == create {
            continue;
        }
        let below = (b & ((1 << mode) - 1)).count_ones();
        let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
        m[(b ^ (1 << mode), b)] = sign;
    }
    m
}

pub fn fermion_matrix(op: &FermionOperator) -> DMatrix<f64> {
    let d = 1usize << op.n_modes;
    let mut out = DMatrix::zeros(d, d);
    for t in &op.terms {
        let mut m = DMatrix::identity(d, d);
        for &(mode, l) in &t.ops {
            m *= ladder_matrix(op.n_modes, mode, l == Ladder::Create);
        }
        out += m * t.coeff;
    }
    out
}

fn single(l: Pauli) -> CMatrix {
    let (o, z, i) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 1.0));
    match l {
        Pauli::I => DMatrix::from_row_slice(2, 2, &[o, z, z, o]),
        Pauli::X => DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        Pauli::Y => DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        Pauli::Z => DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

/// Kronecker product with qubit 0 as the least significant index bit.
pub fn pauli_matrix(p: &PauliString) -> CMatrix {
    let n = p.n_qubits();
    let mut m = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
    for q in (0..n).rev() {
        m = m.kronecker(&single(p.letter(q)));
    }
    m
}

pub fn pauli_sum_matrix(s: &PauliSum) -> CMatrix {
    let d = 1usize << s.n_qubits();
    let mut out = DMatrix::zeros(d, d);
    for (p, c) in s.iter() {
        out += pauli_matrix(p) * Complex64::new(*c, 0.0);
    }
    out
}

pub fn real_to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

pub fn sorted_eigenvalues_real(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

pub fn sorted_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Active-space Hamiltonian built directly from the integrals with interleaved
/// spin orbitals (`2t` alpha, `2t + 1` beta), as a dense Fock-space matrix.
pub struct DenseCas {
    pub n_active: usize,
    pub e_const: f64,
    pub matrix: DMatrix<f64>,
}

pub fn dense_cas(ints: &IntegralSet, core: &[usize], active: &[usize]) -> DenseCas {
    let v = |p: usize, q: usize, r: usize, s: usize| ints.v.get(p, q, r, s);
    let mut e_const = ints.e_nuc;
    for &i in core {
        e_const += 2.0 * ints.h[(i, i)];
        for &j in core {
            e_const += 2.0 * v(i, i, j, j) - v(i, j, j, i);
        }
    }
    let na = active.len();
    let nm = 2 * na;
    let d = 1usize << nm;
    let lad: Vec<[DMatrix<f64>; 2]> = (0..nm).map(|m| [ladder_matrix(nm, m, true), ladder_matrix(nm, m, false)]).collect();
    let mut h = DMatrix::zeros(d, d);
    for (a, &t) in active.iter().enumerate() {
        for (b, &u) in active.iter().enumerate() {
            let mut x = ints.h[(t, u)];
            for &i in core {
                x += 2.0 * v(t, u, i, i) - v(t, i, i, u);
            }
            for s in 0..2 {
                h += &lad[2 * a + s][0] * &lad[2 * b + s][1] * x;
            }
        }
    }
    for (a, &t) in active.iter().enumerate() {
        for (b, &u) in active.iter().enumerate() {
            for (c, &w) in active.iter().enumerate() {
                for (e, &x) in active.iter().enumerate() {
                    let g = v(t, u, w, x);
                    if g == 0.0 {
                        continue;
                    }
                    for s1 in 0..2 {
                        for s2 in 0..2 {
                            let m = &lad[2 * a + s1][0] * &lad[2 * c + s2][0] * &lad[2 * e + s2][1] * &lad[2 * b + s1][1];
                            h += m * (0.5 * g);
                        }
                    }
                }
            }
        }
    }
    DenseCas { n_active: na, e_const, matrix: h }
}

impl DenseCas {
    /// Determinants with the given electron counts and spatial irrep.
    pub fn sector_basis(&self, n_alpha: usize, n_beta: usize, irreps: &[u32], target: u32) -> Vec<usize> {
        (0..1usize << (2 * self.n_active))
            .filter(|&b| {
                let na = (0..self.n_active).filter(|t| b >> (2 * t) & 1 == 1).count();
                let nb = (0..self.n_active).filter(|t| b >> (2 * t + 1) & 1 == 1).count();
                let g = (0..2 * self.n_active).filter(|m| b >> m & 1 == 1).fold(0, |g, m| g ^ irreps[m / 2]);
                na == n_alpha && nb == n_beta && g == target
            })
            .collect()
    }

    pub fn sector_eigen(&self, n_alpha: usize, n_beta: usize, irreps: &[u32], target: u32) -> (Vec<f64>, Vec<DVector<f64>>, Vec<usize>) {
        let basis = self.sector_basis(n_alpha, n_beta, irreps, target);
        let sub = DMatrix::from_fn(basis.len(), basis.len(), |i, j| self.matrix[(basis[i], basis[j])]);
        let eig = sub.symmetric_eigen();
        let mut order: Vec<usize> = (0..basis.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        let vals = order.iter().map(|&k| eig.eigenvalues[k] + self.e_const).collect();
        let vecs = order.iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect();
        (vals, vecs, basis)
    }

    /// Spin-summed `gamma_tu` and chemist-order `Gamma_tuvw` of a sector vector.
    pub fn rdms(&self, basis: &[usize], c: &DVector<f64>) -> (DMatrix<f64>, Vec<f64>) {
        let n = self.n_active;
        let nm = 2 * n;
        let d = 1usize << nm;
        let mut psi = DVector::zeros(d);
        for (i, &b) in basis.iter().enumerate() {
            psi[b] = c[i];
        }
        let lad: Vec<[DMatrix<f64>; 2]> = (0..nm).map(|m| [ladder_matrix(nm, m, true), ladder_matrix(nm, m, false)]).collect();
        let mut g1 = DMatrix::zeros(n, n);
        for t in 0..n {
            for u in 0..n {
                for s in 0..2 {
                    g1[(t, u)] += psi.dot(&(&lad[2 * t + s][0] * (&lad[2 * u + s][1] * &psi)));
                }
            }
        }
        let mut g2 = vec![0.0; n * n * n * n];
        for t in 0..n {
            for u in 0..n {
                for v in 0..n {
                    for w in 0..n {
                        let mut acc = 0.0;
                        for s1 in 0..2 {
                            for s2 in 0..2 {
                                let x = &lad[2 * w + s2][1] * (&lad[2 * u + s1][1] * &psi);
                                let y = &lad[2 * v + s2][1] * (&lad[2 * t + s1][1] * &psi);
                                acc += y.dot(&x);
                            }
                        }
                        g2[((t * n + u) * n + v) * n + w] = acc;
                    }
                }
            }
        }
        (g1, g2)
    }
}

/// A small reproducible integral set with 8-fold symmetric random two-electron integrals.
pub fn random_integrals(n: usize, n_elec: usize, seed: u64) -> IntegralSet {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut h = DMatrix::zeros(n, n);
    for p in 0..n {
        for q in 0..=p {
            let x = if p == q { -2.0 + 0.5 * p as f64 } else { rng.random_range(-0.2..0.2) };
            h[(p, q)] = x;
            h[(q, p)] = x;
        }
    }
    let mut v = sacasscf::chem_io::Eri::zeros(n);
    for p in 0..n {
        for q in 0..=p {
            for r in 0..n {
                for s in 0..=r {
                    if p * (p + 1) / 2 + q < r * (r + 1) / 2 + s {
                        continue;
                    }
                    let x = if p == q && r == s { 0.6 - 0.02 * (p + r) as f64 } else { rng.random_range(-0.05..0.05) };
                    v.set_sym(p, q, r, s, x);
                }
            }
        }
    }
    IntegralSet { n_orb: n, n_elec, ms2: 0, e_nuc: 1.5, h, v, orbsym: None }
}

pub fn fixture(rel: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

/// Random Hermitian operator with one- and two-body terms on `n` modes.
pub fn random_hermitian(n: usize, seed: u64) -> FermionOperator {
    use rand::{Rng, SeedableRng};
    use sacasscf::fermion::{annihilate, create};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut op = FermionOperator::new(n);
    op.constant(rng.random_range(-1.0..1.0));
    for p in 0..n {
        for q in 0..n {
            let c = rng.random_range(-1.0..1.0);
            op.push(c, vec![create(p), annihilate(q)]);
            op.push(c, vec![create(q), annihilate(p)]);
        }
    }
    for p in 0..n {
        for q in 0..n {
            for r in 0..n {
                for s in 0..n {
                    let c = rng.random_range(-0.5..0.5);
                    op.push(c, vec![create(p), create(q), annihilate(r), annihilate(s)]);
                    op.push(c, vec![create(s), create(r), annihilate(q), annihilate(p)]);
                }
            }
        }
    }
    op
}
