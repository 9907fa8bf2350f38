//! Second-quantized operators and their qubit encodings.
//!
//! Jordan-Wigner, parity and Bravyi-Kitaev are all linear maps over GF(2) from
//! occupation numbers to qubit bits, `q = A n`. Every ladder operator is then a
//! product of an X-string on column `j` of `A` and Z-strings built from the
//! rows of `A^{-1}`, which keeps a single code path for the three schemes.
//!
//! Spin orbitals use block ordering: the alpha spin orbital of active orbital
//! `t` is mode `t`, the beta one is mode `n_active + t`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{mul_unchecked, ComplexAccumulator, PauliString, PauliSum, Phase};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ladder {
    Create,
    Annihilate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FermionTerm {
    pub coeff: f64,
    pub ops: Vec<(usize, Ladder)>,
}

/// A real linear combination of products of ladder operators.
#[derive(Clone, Debug, PartialEq)]
pub struct FermionOperator {
    pub n_modes: usize,
    pub terms: Vec<FermionTerm>,
}

impl FermionOperator {
    pub fn new(n_modes: usize) -> FermionOperator {
        FermionOperator { n_modes, terms: Vec::new() }
    }

    pub fn push(&mut self, coeff: f64, ops: Vec<(usize, Ladder)>) {
        self.terms.push(FermionTerm { coeff, ops });
    }

    pub fn constant(&mut self, c: f64) {
        self.push(c, Vec::new());
    }

    /// Adjoint: reversed ladder sequence with creation and annihilation swapped.
    pub fn adjoint(&self) -> FermionOperator {
        let terms = self
            .terms
            .iter()
            .map(|t| FermionTerm {
                coeff: t.coeff,
                ops: t
                    .ops
                    .iter()
                    .rev()
                    .map(|&(m, l)| (m, if l == Ladder::Create { Ladder::Annihilate } else { Ladder::Create }))
                    .collect(),
            })
            .collect();
        FermionOperator { n_modes: self.n_modes, terms }
    }

    pub fn extend(&mut self, other: &FermionOperator) {
        self.terms.extend(other.terms.iter().cloned());
    }

    fn check_indices(&self) -> Result<()> {
        for t in &self.terms {
            for &(m, _) in &t.ops {
                if m >= self.n_modes {
                    return Err(Error::IndexOutOfRange { what: "modes", index: m, limit: self.n_modes });
                }
            }
        }
        Ok(())
    }
}

pub fn create(m: usize) -> (usize, Ladder) {
    (m, Ladder::Create)
}

pub fn annihilate(m: usize) -> (usize, Ladder) {
    (m, Ladder::Annihilate)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    JordanWigner,
    Parity,
    BravyiKitaev,
}

/// Z2 symmetries to taper, the sector eigenvalue of each and the qubit it removes.
///
/// Symmetry `i` must act as Z on `removed[i]` and as the identity on every other
/// removed qubit; [`EncodingSpec::with_number_parity_taper`] builds such a set.
#[derive(Clone, Debug, PartialEq)]
pub struct TaperSpec {
    pub symmetries: Vec<PauliString>,
    pub sector: Vec<i8>,
    pub removed: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodingSpec {
    pub scheme: Scheme,
    pub n_modes: usize,
    pub taper: Option<TaperSpec>,
}

impl EncodingSpec {
    pub fn new(scheme: Scheme, n_modes: usize) -> EncodingSpec {
        EncodingSpec { scheme, n_modes, taper: None }
    }

    /// Tapers the alpha-number parity and total-number parity of a block-ordered
    /// register, removing the last qubit of each spin block. The sector is read
    /// off the reference occupation (bit `m` set when mode `m` is occupied).
    pub fn with_number_parity_taper(scheme: Scheme, n_spatial: usize, reference: u64) -> Result<EncodingSpec> {
        let n_modes = 2 * n_spatial;
        if n_spatial == 0 || n_modes > 64 {
            return Err(Error::Invalid(format!("cannot taper a register of {n_modes} modes")));
        }
        let enc = LinearEncoding::new(scheme, n_modes);
        let mut syms = [0u64; 2];
        for k in 0..n_modes {
            if k < n_spatial {
                syms[0] ^= enc.inv_rows[k];
            }
            syms[1] ^= enc.inv_rows[k];
        }
        let pivots = [n_spatial - 1, n_modes - 1];
        for i in 0..2 {
            let bit = 1u64 << pivots[i];
            if syms[i] & bit == 0 {
                let j = (i + 1..2).find(|&j| syms[j] & bit != 0).ok_or_else(|| {
                    Error::Invalid(format!("no symmetry acts on qubit {}", pivots[i]))
                })?;
                syms[i] ^= syms[j];
            }
            for j in 0..2 {
                if j != i && syms[j] & bit != 0 {
                    syms[j] ^= syms[i];
                }
            }
        }
        let encoded_ref = enc.encode_bits(reference);
        let sector = syms.iter().map(|&m| if (m & encoded_ref).count_ones() % 2 == 0 { 1 } else { -1 }).collect();
        let symmetries = syms.iter().map(|&m| PauliString::z_string(n_modes, m)).collect::<Result<Vec<_>>>()?;
        Ok(EncodingSpec { scheme, n_modes, taper: Some(TaperSpec { symmetries, sector, removed: pivots.to_vec() }) })
    }

    pub fn n_qubits_tapered(&self) -> usize {
        self.n_modes - self.taper.as_ref().map_or(0, |t| t.removed.len())
    }

    /// Encoded qubit bits of an occupation bit pattern (before tapering).
    pub fn encode_occupation(&self, occupation: u64) -> u64 {
        LinearEncoding::new(self.scheme, self.n_modes).encode_bits(occupation)
    }

    /// Encoded and tapered bits of an occupation bit pattern.
    pub fn tapered_occupation(&self, occupation: u64) -> u64 {
        let q = self.encode_occupation(occupation);
        match &self.taper {
            Some(t) => delete_bits(q, self.n_modes, &t.removed),
            None => q,
        }
    }

    /// Occupation pattern of a tapered basis state in the chosen sector.
    pub fn decode_tapered(&self, bits: u64) -> u64 {
        let enc = LinearEncoding::new(self.scheme, self.n_modes);
        let full = match &self.taper {
            None => bits,
            Some(t) => {
                let mut full = insert_zero_bits(bits, self.n_modes, &t.removed);
                for (i, sym) in t.symmetries.iter().enumerate() {
                    let parity = (sym.z_mask() & full).count_ones() % 2;
                    let want = if t.sector[i] == 1 { 0 } else { 1 };
                    if parity != want {
                        full ^= 1u64 << t.removed[i];
                    }
                }
                full
            }
        };
        enc.decode_bits(full)
    }
}

fn delete_bits(q: u64, n: usize, removed: &[usize]) -> u64 {
    let mut out = 0u64;
    let mut k = 0;
    for i in 0..n {
        if removed.contains(&i) {
            continue;
        }
        out |= ((q >> i) & 1) << k;
        k += 1;
    }
    out
}

fn insert_zero_bits(bits: u64, n: usize, removed: &[usize]) -> u64 {
    let mut out = 0u64;
    let mut k = 0;
    for i in 0..n {
        if removed.contains(&i) {
            continue;
        }
        out |= ((bits >> k) & 1) << i;
        k += 1;
    }
    out
}

fn parity(x: u64) -> u64 {
    (x.count_ones() % 2) as u64
}

/// `q = A n` over GF(2); `rows[i]` is row `i` of `A`, `inv_rows[k]` row `k` of `A^{-1}`.
struct LinearEncoding {
    n: usize,
    rows: Vec<u64>,
    inv_rows: Vec<u64>,
}

impl LinearEncoding {
    fn new(scheme: Scheme, n: usize) -> LinearEncoding {
        let rows: Vec<u64> = (0..n)
            .map(|i| match scheme {
                Scheme::JordanWigner => 1u64 << i,
                Scheme::Parity => (0..=i).fold(0, |m, k| m | 1u64 << k),
                Scheme::BravyiKitaev => ((i & (i + 1))..=i).fold(0, |m, k| m | 1u64 << k),
            })
            .collect();
        let inv_rows = gf2_inverse(&rows, n);
        LinearEncoding { n, rows, inv_rows }
    }

    fn encode_bits(&self, occ: u64) -> u64 {
        (0..self.n).fold(0, |q, i| q | parity(self.rows[i] & occ) << i)
    }

    fn decode_bits(&self, q: u64) -> u64 {
        (0..self.n).fold(0, |occ, k| occ | parity(self.inv_rows[k] & q) << k)
    }

    fn column(&self, j: usize) -> u64 {
        (0..self.n).fold(0, |c, i| c | ((self.rows[i] >> j) & 1) << i)
    }

    /// Z mask measuring the parity of modes `0..j` in qubit variables.
    fn prefix_parity(&self, j: usize) -> u64 {
        (0..j).fold(0, |m, k| m ^ self.inv_rows[k])
    }

    /// The ladder operator as two weighted Pauli strings.
    fn ladder(&self, j: usize, l: Ladder) -> [(Complex64, PauliString); 2] {
        let c = self.column(j);
        let p = self.prefix_parity(j);
        let p2 = self.prefix_parity(j + 1);
        let sign = if l == Ladder::Create { 0.5 } else { -0.5 };
        // X^c Z^p = (-i)^{|c & p|} P(c, p)
        let term = |zm: u64, w: f64| {
            let ph = Phase::from_power(4 - (c & zm).count_ones() % 4).to_complex();
            (ph * w, PauliString::from_masks(self.n, c, zm).expect("masks fit the register"))
        };
        [term(p, 0.5), term(p2, sign)]
    }
}

fn gf2_inverse(rows: &[u64], n: usize) -> Vec<u64> {
    let mut a = rows.to_vec();
    let mut inv: Vec<u64> = (0..n).map(|i| 1u64 << i).collect();
    for col in 0..n {
        let bit = 1u64 << col;
        let piv = (col..n).find(|&r| a[r] & bit != 0).expect("encoding matrix is invertible");
        a.swap(col, piv);
        inv.swap(col, piv);
        for r in 0..n {
            if r != col && a[r] & bit != 0 {
                a[r] ^= a[col];
                inv[r] ^= inv[col];
            }
        }
    }
    inv
}

/// Encodes a fermionic operator into Pauli strings with complex weights.
pub fn encode_complex(op: &FermionOperator, scheme: Scheme) -> Result<ComplexAccumulator> {
    op.check_indices()?;
    let enc = LinearEncoding::new(scheme, op.n_modes);
    let mut acc = ComplexAccumulator::new(op.n_modes);
    for t in &op.terms {
        let mut cur: Vec<(Complex64, PauliString)> = vec![(Complex64::new(t.coeff, 0.0), PauliString::identity(op.n_modes))];
        for &(m, l) in &t.ops {
            let lad = enc.ladder(m, l);
            let mut next: Vec<(Complex64, PauliString)> = Vec::with_capacity(cur.len() * 2);
            for (c, p) in &cur {
                for (lc, lp) in &lad {
                    let (ph, q) = mul_unchecked(p, lp);
                    let w = c * lc * ph.to_complex();
                    match next.iter_mut().find(|(_, s)| *s == q) {
                        Some(e) => e.0 += w,
                        None => next.push((w, q)),
                    }
                }
            }
            cur = next;
        }
        for (c, p) in cur {
            acc.add(p, c);
        }
    }
    Ok(acc)
}

/// Encodes a Hermitian fermionic operator on `n_modes` qubits (no tapering).
pub fn encode(op: &FermionOperator, spec: &EncodingSpec) -> Result<PauliSum> {
    if op.n_modes != spec.n_modes {
        return Err(Error::WidthMismatch(op.n_modes, spec.n_modes));
    }
    encode_complex(op, spec.scheme)?.into_real()
}

/// Encodes then tapers.
pub fn encode_tapered(op: &FermionOperator, spec: &EncodingSpec) -> Result<PauliSum> {
    taper(&encode(op, spec)?, spec)
}

fn validate_taper(t: &TaperSpec, n: usize) -> Result<()> {
    if t.symmetries.len() != t.sector.len() || t.symmetries.len() != t.removed.len() {
        return Err(Error::Invalid("taper symmetries, sectors and removed qubits differ in length".into()));
    }
    for (i, s) in t.symmetries.iter().enumerate() {
        if s.n_qubits() != n {
            return Err(Error::WidthMismatch(s.n_qubits(), n));
        }
        if !s.is_diagonal() {
            return Err(Error::Invalid(format!("symmetry {s} is not Z-type")));
        }
        if t.sector[i].abs() != 1 {
            return Err(Error::Invalid(format!("sector value {} is not +-1", t.sector[i])));
        }
        let q = t.removed[i];
        if q >= n {
            return Err(Error::IndexOutOfRange { what: "qubits", index: q, limit: n });
        }
        for (j, r) in t.removed.iter().enumerate() {
            let acts = (s.z_mask() >> r) & 1 == 1;
            if (i == j) != acts {
                return Err(Error::Invalid(format!("symmetry {s} must act on removed qubit {q} and on no other removed qubit")));
            }
        }
    }
    Ok(())
}

/// Removes the tapered qubits of `spec` from a Hamiltonian that commutes with its symmetries.
///
/// Each symmetry `tau` with removed qubit `q` is rotated onto `X_q` by the
/// Clifford `(X_q + tau)/sqrt 2`; `X_q` is then replaced by the sector value.
pub fn taper(ham: &PauliSum, spec: &EncodingSpec) -> Result<PauliSum> {
    let Some(t) = &spec.taper else {
        return Ok(ham.clone());
    };
    if t.removed.is_empty() {
        return Ok(ham.clone());
    }
    let n = ham.n_qubits();
    if n != spec.n_modes {
        return Err(Error::WidthMismatch(n, spec.n_modes));
    }
    validate_taper(t, n)?;
    let mut acc = ComplexAccumulator::new(n - t.removed.len());
    for (p, &c) in ham.iter() {
        let mut w = Complex64::new(c, 0.0);
        let mut cur = *p;
        for (i, sym) in t.symmetries.iter().enumerate() {
            if !cur.commutes(sym) {
                return Err(Error::Anticommuting { term: p.to_string(), symmetry: sym.to_string() });
            }
            let q = t.removed[i];
            if (cur.z_mask() >> q) & 1 == 1 {
                let xq = PauliString::from_masks(n, 1u64 << q, 0)?;
                let (ph1, a) = mul_unchecked(&xq, &cur);
                let (ph2, b) = mul_unchecked(&a, sym);
                w *= ph1.mul(ph2).to_complex();
                cur = b;
            }
        }
        for (i, &q) in t.removed.iter().enumerate() {
            if (cur.x_mask() >> q) & 1 == 1 {
                w *= t.sector[i] as f64;
            }
        }
        acc.add(cur.remove_qubits(&t.removed), w);
    }
    acc.into_real()
}

/// Z-type constraints `(Z_S, s)` on the tapered register that select the
/// spatial irrep `target`. Irreps are XOR-coded bit patterns, one per spatial
/// orbital; each bit of the code contributes one parity constraint.
pub fn spatial_symmetry_constraints(spec: &EncodingSpec, orbital_irreps: &[u32], target: u32) -> Result<Vec<(PauliString, i8)>> {
    let n_spatial = spec.n_modes / 2;
    if orbital_irreps.len() != n_spatial {
        return Err(Error::WidthMismatch(orbital_irreps.len(), n_spatial));
    }
    let enc = LinearEncoding::new(spec.scheme, spec.n_modes);
    let all_bits = orbital_irreps.iter().fold(target, |a, &b| a | b);
    let mut out: Vec<(PauliString, i8)> = Vec::new();
    for bit in 0..32 {
        if all_bits >> bit & 1 == 0 {
            continue;
        }
        let mut mask = 0u64;
        for (t, &g) in orbital_irreps.iter().enumerate() {
            if g >> bit & 1 == 1 {
                mask ^= enc.inv_rows[t] ^ enc.inv_rows[n_spatial + t];
            }
        }
        let want: i8 = if target >> bit & 1 == 1 { -1 } else { 1 };
        let op = PauliSum::from_terms(spec.n_modes, [(PauliString::z_string(spec.n_modes, mask)?, 1.0)])?;
        let tapered = taper(&op, spec)?;
        let (z, c) = tapered.iter().next().map(|(z, c)| (*z, *c)).ok_or_else(|| Error::Numerical("symmetry vanished under tapering".into()))?;
        let s = if c > 0.0 { want } else { -want };
        if z.is_identity() {
            if s != 1 {
                return Err(Error::Invalid(format!("irrep {target} is incompatible with the tapered sector")));
            }
            continue;
        }
        if !out.iter().any(|(p, _)| *p == z) {
            out.push((z, s));
        }
    }
    Ok(out)
}

/// Index of a spin-orbital RDM element: `One(p, q)` is `<a+_p a_q>`,
/// `Two(p, q, r, s)` is `<a+_p a+_q a_s a_r>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RdmIndex {
    One(usize, usize),
    Two(usize, usize, usize, usize),
}

pub fn mode(orbital: usize, beta: bool, n_active: usize) -> usize {
    if beta {
        n_active + orbital
    } else {
        orbital
    }
}

fn is_beta(m: usize, n_active: usize) -> bool {
    m >= n_active
}

/// Canonical spin-orbital RDM elements conserving the spin projection.
pub fn rdm_elements(n_active: usize) -> Vec<RdmIndex> {
    let nm = 2 * n_active;
    let mut out = Vec::new();
    for p in 0..nm {
        for q in p..nm {
            if is_beta(p, n_active) == is_beta(q, n_active) {
                out.push(RdmIndex::One(p, q));
            }
        }
    }
    let pairs: Vec<(usize, usize)> = (0..nm).flat_map(|p| (p + 1..nm).map(move |q| (p, q))).collect();
    let nb = |a: usize, b: usize| is_beta(a, n_active) as u8 + is_beta(b, n_active) as u8;
    for (i, &(p, q)) in pairs.iter().enumerate() {
        for &(r, s) in &pairs[i..] {
            if nb(p, q) == nb(r, s) {
                out.push(RdmIndex::Two(p, q, r, s));
            }
        }
    }
    out
}

/// The Hermitian part of the fermionic operator behind an RDM element.
pub fn rdm_operator(idx: RdmIndex, n_modes: usize) -> FermionOperator {
    let mut op = FermionOperator::new(n_modes);
    match idx {
        RdmIndex::One(p, q) => op.push(1.0, vec![create(p), annihilate(q)]),
        RdmIndex::Two(p, q, r, s) => op.push(1.0, vec![create(p), create(q), annihilate(s), annihilate(r)]),
    }
    let mut herm = op.adjoint();
    herm.extend(&op);
    for t in &mut herm.terms {
        t.coeff *= 0.5;
    }
    herm
}

/// Encoded and tapered observables for every canonical RDM element.
pub fn encode_rdm_observables(spec: &EncodingSpec, n_active: usize) -> Result<Vec<(RdmIndex, PauliSum)>> {
    if spec.n_modes != 2 * n_active {
        return Err(Error::WidthMismatch(spec.n_modes, 2 * n_active));
    }
    rdm_elements(n_active)
        .into_iter()
        .map(|idx| Ok((idx, encode_tapered(&rdm_operator(idx, spec.n_modes), spec)?)))
        .collect()
}

/// Anti-Hermitian generators `T - T+` of all spin-conserving generalized singles
/// and doubles on a block-ordered register.
pub fn excitation_generators(n_active: usize) -> Vec<FermionOperator> {
    let nm = 2 * n_active;
    let mut out = Vec::new();
    let sp = |m: usize| is_beta(m, n_active);
    for p in 0..nm {
        for q in 0..p {
            if sp(p) == sp(q) {
                let mut op = FermionOperator::new(nm);
                op.push(1.0, vec![create(p), annihilate(q)]);
                op.push(-1.0, vec![create(q), annihilate(p)]);
                out.push(op);
            }
        }
    }
    let pairs: Vec<(usize, usize)> = (0..nm).flat_map(|p| (0..p).map(move |q| (p, q))).collect();
    for (i, &(p, q)) in pairs.iter().enumerate() {
        for &(r, s) in &pairs[..i] {
            if p == r || p == s || q == r || q == s {
                continue;
            }
            if sp(p) as u8 + sp(q) as u8 != sp(r) as u8 + sp(s) as u8 {
                continue;
            }
            let mut op = FermionOperator::new(nm);
            op.push(1.0, vec![create(p), create(q), annihilate(s), annihilate(r)]);
            op.push(-1.0, vec![create(r), create(s), annihilate(q), annihilate(p)]);
            out.push(op);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jordan_wigner_number_operator() {
        let mut op = FermionOperator::new(1);
        op.push(1.0, vec![create(0), annihilate(0)]);
        let s = encode(&op, &EncodingSpec::new(Scheme::JordanWigner, 1)).unwrap();
        assert_eq!(s, PauliSum::parse("0.5*I - 0.5*Z0", 1).unwrap());
    }

    #[test]
    fn jordan_wigner_hopping() {
        let mut op = FermionOperator::new(2);
        op.push(1.0, vec![create(1), annihilate(0)]);
        op.push(1.0, vec![create(0), annihilate(1)]);
        let s = encode(&op, &EncodingSpec::new(Scheme::JordanWigner, 2)).unwrap();
        assert_eq!(s, PauliSum::parse("0.5*X1X0 + 0.5*Y1Y0", 2).unwrap());
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let mut op = FermionOperator::new(2);
        op.push(1.0, vec![create(1), annihilate(0)]);
        let r = encode(&op, &EncodingSpec::new(Scheme::Parity, 2));
        assert!(matches!(r, Err(Error::NonHermitian(_))));
    }

    #[test]
    fn mode_index_overflow_is_rejected() {
        let mut op = FermionOperator::new(2);
        op.push(1.0, vec![create(2), annihilate(2)]);
        assert!(matches!(encode(&op, &EncodingSpec::new(Scheme::JordanWigner, 2)), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn inverse_matrices_are_inverses() {
        for scheme in [Scheme::JordanWigner, Scheme::Parity, Scheme::BravyiKitaev] {
            for n in 1..12 {
                let e = LinearEncoding::new(scheme, n);
                for occ in 0..(1u64 << n.min(8)) {
                    assert_eq!(e.decode_bits(e.encode_bits(occ)), occ);
                }
            }
        }
    }

    #[test]
    fn bravyi_kitaev_four_mode_taper_removes_qubits_one_and_three() {
        let spec = EncodingSpec::with_number_parity_taper(Scheme::BravyiKitaev, 2, 0b0101).unwrap();
        let t = spec.taper.as_ref().unwrap();
        assert_eq!(t.removed, vec![1, 3]);
        assert_eq!(spec.tapered_occupation(0b0101), 0b11);
        assert_eq!(spec.tapered_occupation(0b1010), 0b00);
        assert_eq!(spec.tapered_occupation(0b1001), 0b01);
        assert_eq!(spec.tapered_occupation(0b0110), 0b10);
        for occ in [0b0101u64, 0b1010, 0b1001, 0b0110] {
            assert_eq!(spec.decode_tapered(spec.tapered_occupation(occ)), occ);
        }
    }

    #[test]
    fn empty_removal_list_is_identity() {
        let mut spec = EncodingSpec::new(Scheme::Parity, 2);
        spec.taper = Some(TaperSpec { symmetries: vec![], sector: vec![], removed: vec![] });
        let h = PauliSum::parse("0.3*X1X0 - 0.2*Z0", 2).unwrap();
        assert_eq!(taper(&h, &spec).unwrap(), h);
    }

    #[test]
    fn anticommuting_term_is_rejected() {
        let spec = EncodingSpec::with_number_parity_taper(Scheme::Parity, 1, 0b01).unwrap();
        let h = PauliSum::parse("1*X0", 2).unwrap();
        assert!(matches!(taper(&h, &spec), Err(Error::Anticommuting { .. })));
    }
}
