//! Molecular integrals: FCIDUMP input and output, active-space folding and the
//! second-quantized active-space Hamiltonian.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fermion::{annihilate, create, mode, FermionOperator};

/// Two-electron integrals `(pq|rs)` in chemists' notation, stored densely.
#[derive(Clone, Debug, PartialEq)]
pub struct Eri {
    n: usize,
    data: Vec<f64>,
}

impl Eri {
    pub fn zeros(n: usize) -> Eri {
        Eri { n, data: vec![0.0; n * n * n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, p: usize, q: usize, r: usize, s: usize) -> usize {
        ((p * self.n + q) * self.n + r) * self.n + s
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        self.data[self.idx(p, q, r, s)]
    }

    /// Sets `(pq|rs)` and its seven symmetry partners.
    pub fn set_sym(&mut self, p: usize, q: usize, r: usize, s: usize, v: f64) {
        for (a, b, c, d) in [(p, q, r, s), (q, p, r, s), (p, q, s, r), (q, p, s, r), (r, s, p, q), (s, r, p, q), (r, s, q, p), (s, r, q, p)] {
            let i = self.idx(a, b, c, d);
            self.data[i] = v;
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Eri> {
        if data.len() != n * n * n * n {
            return Err(Error::WidthMismatch(data.len(), n * n * n * n));
        }
        Ok(Eri { n, data })
    }

    /// Largest deviation from the 8-fold permutational symmetry.
    pub fn symmetry_error(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for p in 0..n {
            for q in 0..n {
                for r in 0..n {
                    for s in 0..n {
                        let v = self.get(p, q, r, s);
                        worst = worst.max((v - self.get(q, p, r, s)).abs()).max((v - self.get(r, s, p, q)).abs());
                    }
                }
            }
        }
        worst
    }

    /// Four-index transform `(pq|rs)' = sum C_ap C_bq C_cr C_ds (ab|cd)` with
    /// `c` an `n x m` coefficient matrix.
    pub fn transform(&self, c: &DMatrix<f64>) -> Eri {
        let m = c.ncols();
        Eri { n: m, data: self.transform_mixed([c, c, c, c]) }
    }

    /// Transform with a separate coefficient matrix per index; the result is
    /// row-major with dimensions `cs[k].ncols()`.
    pub fn transform_mixed(&self, cs: [&DMatrix<f64>; 4]) -> Vec<f64> {
        let n = self.n;
        assert!(cs.iter().all(|c| c.nrows() == n));
        // Contract the last index and move the new index to the front; four passes.
        let mut cur = self.data.clone();
        let mut dims = [n, n, n, n];
        for pass in 0..4 {
            let c = cs[3 - pass];
            let m = c.ncols();
            let cols: Vec<Vec<f64>> = (0..m).map(|j| c.column(j).iter().copied().collect()).collect();
            let (d0, d1, d2, d3) = (dims[0], dims[1], dims[2], dims[3]);
            let lead = d0 * d1 * d2;
            let mut out = vec![0.0; m * lead];
            for abc in 0..lead {
                let row = &cur[abc * d3..(abc + 1) * d3];
                for sp in 0..m {
                    let col = &cols[sp];
                    let mut acc = 0.0;
                    for s in 0..d3 {
                        acc += row[s] * col[s];
                    }
                    out[sp * lead + abc] = acc;
                }
            }
            cur = out;
            dims = [m, d0, d1, d2];
        }
        cur
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegralSet {
    pub n_orb: usize,
    pub n_elec: usize,
    pub ms2: i64,
    pub e_nuc: f64,
    pub h: DMatrix<f64>,
    pub v: Eri,
    /// Orbital irrep labels as written in the FCIDUMP header, if present.
    pub orbsym: Option<Vec<u32>>,
}

impl IntegralSet {
    pub fn validate(&self) -> Result<()> {
        if self.h.nrows() != self.n_orb || self.h.ncols() != self.n_orb || self.v.dim() != self.n_orb {
            return Err(Error::Invalid("integral dimensions disagree with NORB".into()));
        }
        if !self.e_nuc.is_finite() || self.h.iter().any(|x| !x.is_finite()) || self.v.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite integral".into()));
        }
        if (&self.h - self.h.transpose()).amax() > 1e-10 {
            return Err(Error::Invalid("one-electron integrals are not symmetric".into()));
        }
        Ok(())
    }
}

fn parse_header(header: &str) -> Result<HashMap<String, Vec<String>>> {
    let mut out: HashMap<String, Vec<String>> = HashMap::new();
    let spaced = header.replace('=', " = ").replace(',', " ");
    let toks: Vec<&str> = spaced.split_whitespace().collect();
    let mut key: Option<String> = None;
    let mut i = 0;
    while i < toks.len() {
        if i + 1 < toks.len() && toks[i + 1] == "=" {
            let k = toks[i].to_ascii_uppercase();
            out.insert(k.clone(), Vec::new());
            key = Some(k);
            i += 2;
            continue;
        }
        match &key {
            Some(k) => out.get_mut(k).expect("key inserted").push(toks[i].to_string()),
            None => return Err(Error::Parse(format!("unexpected token '{}' in FCIDUMP header", toks[i]))),
        }
        i += 1;
    }
    Ok(out)
}

fn header_int(h: &HashMap<String, Vec<String>>, key: &str) -> Result<i64> {
    let v = h.get(key).and_then(|v| v.first()).ok_or_else(|| Error::Parse(format!("FCIDUMP header lacks {key}")))?;
    v.parse().map_err(|_| Error::Parse(format!("bad value '{v}' for {key}")))
}

fn parse_value(t: &str) -> Result<f64> {
    t.replace(['D', 'd'], "e").parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{t}'")))
}

/// Parses FCIDUMP text (chemists' notation, 1-based indices).
pub fn parse_fcidump(text: &str) -> Result<IntegralSet> {
    let upper = text.to_ascii_uppercase();
    let start = upper.find("&FCI").ok_or_else(|| Error::Parse("missing &FCI namelist".into()))?;
    let rest = &upper[start + 4..];
    let (end_rel, end_len) = match (rest.find("&END"), rest.find('/')) {
        (Some(a), Some(b)) if b < a => (b, 1),
        (Some(a), _) => (a, 4),
        (None, Some(b)) => (b, 1),
        (None, None) => return Err(Error::Parse("unterminated FCIDUMP namelist".into())),
    };
    let header = parse_header(&rest[..end_rel])?;
    let norb = header_int(&header, "NORB")?;
    let nelec = header_int(&header, "NELEC")?;
    let ms2 = header_int(&header, "MS2")?;
    if norb <= 0 || nelec < 0 {
        return Err(Error::Parse("NORB must be positive and NELEC non-negative".into()));
    }
    let n = norb as usize;
    let orbsym = match header.get("ORBSYM") {
        Some(v) if !v.is_empty() => {
            let syms = v.iter().map(|s| s.parse::<u32>().map_err(|_| Error::Parse(format!("bad ORBSYM entry '{s}'")))).collect::<Result<Vec<_>>>()?;
            if syms.len() != n {
                return Err(Error::Parse(format!("ORBSYM has {} entries for NORB={n}", syms.len())));
            }
            Some(syms)
        }
        _ => None,
    };
    let body = &text[start + 4 + end_rel + end_len..];
    let mut seen: HashMap<(usize, usize, usize, usize), f64> = HashMap::new();
    let mut h = DMatrix::zeros(n, n);
    let mut v = Eri::zeros(n);
    let mut e_nuc = 0.0;
    for (lineno, line) in body.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 5 {
            return Err(Error::Parse(format!("integral line {} has {} fields", lineno + 1, toks.len())));
        }
        let val = parse_value(toks[0])?;
        let mut idx = [0usize; 4];
        for k in 0..4 {
            let x: i64 = toks[k + 1].parse().map_err(|_| Error::Parse(format!("bad index '{}'", toks[k + 1])))?;
            if x < 0 || x > norb {
                return Err(Error::IndexOutOfRange { what: "orbitals", index: x.max(0) as usize, limit: n });
            }
            idx[k] = x as usize;
        }
        let [i, j, k, l] = idx;
        let key = if i == 0 && j == 0 && k == 0 && l == 0 {
            (0, 0, 0, 0)
        } else if k == 0 && l == 0 {
            if i == 0 || j == 0 {
                return Err(Error::Parse(format!("malformed one-electron index on line {}", lineno + 1)));
            }
            (i.max(j), i.min(j), 0, 0)
        } else {
            if i == 0 || j == 0 || k == 0 || l == 0 {
                return Err(Error::Parse(format!("malformed two-electron index on line {}", lineno + 1)));
            }
            let a = (i.max(j), i.min(j));
            let b = (k.max(l), k.min(l));
            let (x, y) = if a >= b { (a, b) } else { (b, a) };
            (x.0, x.1, y.0, y.1)
        };
        if let Some(old) = seen.insert(key, val) {
            if (old - val).abs() > 1e-10 {
                return Err(Error::Parse(format!("conflicting duplicate entry for indices {i} {j} {k} {l}")));
            }
        }
        match key {
            (0, 0, 0, 0) => e_nuc = val,
            (a, b, 0, 0) => {
                h[(a - 1, b - 1)] = val;
                h[(b - 1, a - 1)] = val;
            }
            (a, b, c, d) => v.set_sym(a - 1, b - 1, c - 1, d - 1, val),
        }
    }
    let ints = IntegralSet { n_orb: n, n_elec: nelec as usize, ms2, e_nuc, h, v, orbsym };
    ints.validate()?;
    Ok(ints)
}

pub fn read_fcidump(path: &Path) -> Result<IntegralSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    parse_fcidump(&text)
}

/// Writes FCIDUMP text; nonzero unique entries only, shortest round-trip number format.
pub fn serialize_fcidump(ints: &IntegralSet) -> String {
    let n = ints.n_orb;
    let mut out = String::new();
    let _ = writeln!(out, " &FCI NORB={},NELEC={},MS2={},", n, ints.n_elec, ints.ms2);
    if let Some(sym) = &ints.orbsym {
        let s: Vec<String> = sym.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, "  ORBSYM={},", s.join(","));
    }
    let _ = writeln!(out, "  ISYM=1,\n &END");
    for i in 0..n {
        for j in 0..=i {
            for k in 0..n {
                for l in 0..=k {
                    if (i, j) < (k, l) {
                        continue;
                    }
                    let val = ints.v.get(i, j, k, l);
                    if val != 0.0 {
                        let _ = writeln!(out, "{:e} {} {} {} {}", val, i + 1, j + 1, k + 1, l + 1);
                    }
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..=i {
            let val = ints.h[(i, j)];
            if val != 0.0 {
                let _ = writeln!(out, "{:e} {} {} 0 0", val, i + 1, j + 1);
            }
        }
    }
    let _ = writeln!(out, "{:e} 0 0 0 0", ints.e_nuc);
    out
}

/// Core (doubly occupied) and active orbital indices, 0-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveSpace {
    pub core: Vec<usize>,
    pub active: Vec<usize>,
    pub n_active_elec: usize,
}

impl ActiveSpace {
    pub fn validate(&self, n_orb: usize) -> Result<()> {
        for &i in self.core.iter().chain(&self.active) {
            if i >= n_orb {
                return Err(Error::IndexOutOfRange { what: "orbitals", index: i, limit: n_orb });
            }
        }
        let mut all: Vec<usize> = self.core.iter().chain(&self.active).copied().collect();
        all.sort_unstable();
        all.dedup();
        if all.len() != self.core.len() + self.active.len() {
            return Err(Error::Invalid("core and active orbitals overlap or repeat".into()));
        }
        if self.active.is_empty() {
            return Err(Error::Invalid("active space is empty".into()));
        }
        if self.n_active_elec > 2 * self.active.len() {
            return Err(Error::Invalid(format!("{} electrons do not fit {} active orbitals", self.n_active_elec, self.active.len())));
        }
        Ok(())
    }

    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    /// Orbitals that are neither core nor active.
    pub fn virtuals(&self, n_orb: usize) -> Vec<usize> {
        (0..n_orb).filter(|i| !self.core.contains(i) && !self.active.contains(i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActiveHamiltonian {
    pub e_const: f64,
    pub h_eff: DMatrix<f64>,
    pub v_act: Eri,
}

/// Folds the core into a constant and an effective one-electron operator.
pub fn build_active_hamiltonian(ints: &IntegralSet, cas: &ActiveSpace) -> Result<ActiveHamiltonian> {
    cas.validate(ints.n_orb)?;
    let v = &ints.v;
    let mut e_const = ints.e_nuc;
    for &i in &cas.core {
        e_const += 2.0 * ints.h[(i, i)];
        for &j in &cas.core {
            e_const += 2.0 * v.get(i, i, j, j) - v.get(i, j, j, i);
        }
    }
    let na = cas.n_active();
    let mut h_eff = DMatrix::zeros(na, na);
    for (a, &t) in cas.active.iter().enumerate() {
        for (b, &u) in cas.active.iter().enumerate() {
            let mut x = ints.h[(t, u)];
            for &i in &cas.core {
                x += 2.0 * v.get(t, u, i, i) - v.get(t, i, i, u);
            }
            h_eff[(a, b)] = x;
        }
    }
    let mut v_act = Eri::zeros(na);
    for (a, &t) in cas.active.iter().enumerate() {
        for (b, &u) in cas.active.iter().enumerate() {
            for (c, &w) in cas.active.iter().enumerate() {
                for (d, &x) in cas.active.iter().enumerate() {
                    let i = v_act.idx(a, b, c, d);
                    v_act.data[i] = v.get(t, u, w, x);
                }
            }
        }
    }
    Ok(ActiveHamiltonian { e_const, h_eff, v_act })
}

/// Spin-orbital Hamiltonian `e_const + sum h a+a + 1/2 sum (tu|vw) a+_t a+_v a_w a_u`.
pub fn active_to_fermion(ah: &ActiveHamiltonian) -> FermionOperator {
    let n = ah.h_eff.nrows();
    let mut op = FermionOperator::new(2 * n);
    if ah.e_const != 0.0 {
        op.constant(ah.e_const);
    }
    for t in 0..n {
        for u in 0..n {
            let h = ah.h_eff[(t, u)];
            if h.abs() < 1e-14 {
                continue;
            }
            for beta in [false, true] {
                op.push(h, vec![create(mode(t, beta, n)), annihilate(mode(u, beta, n))]);
            }
        }
    }
    for t in 0..n {
        for u in 0..n {
            for v in 0..n {
                for w in 0..n {
                    let g = ah.v_act.get(t, u, v, w);
                    if g.abs() < 1e-14 {
                        continue;
                    }
                    for s1 in [false, true] {
                        for s2 in [false, true] {
                            let (pt, pu, pv, pw) = (mode(t, s1, n), mode(u, s1, n), mode(v, s2, n), mode(w, s2, n));
                            if pt == pv || pu == pw {
                                continue;
                            }
                            op.push(0.5 * g, vec![create(pt), create(pv), annihilate(pw), annihilate(pu)]);
                        }
                    }
                }
            }
        }
    }
    op
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_ORB: &str = " &FCI NORB=2,NELEC=2,MS2=0,\n  ORBSYM=1,1,\n  ISYM=1,\n &END\n 0.75 1 1 1 1\n -1.25 1 2 0 0\n 0.5 0 0 0 0\n";

    #[test]
    fn single_two_electron_entry() {
        let s = parse_fcidump(TWO_ORB).unwrap();
        assert_eq!(s.v.get(0, 0, 0, 0), 0.75);
        let nonzero = s.v.as_slice().iter().filter(|x| **x != 0.0).count();
        assert_eq!(nonzero, 1);
        assert_eq!(s.h[(0, 1)], -1.25);
        assert_eq!(s.h[(1, 0)], -1.25);
        assert_eq!(s.e_nuc, 0.5);
        assert_eq!(s.orbsym, Some(vec![1, 1]));
    }

    #[test]
    fn missing_header_key_is_an_error() {
        let r = parse_fcidump(" &FCI NORB=2,NELEC=2,\n &END\n 1.0 1 1 0 0\n");
        assert!(matches!(r, Err(Error::Parse(_))));
    }

    #[test]
    fn out_of_range_index_is_an_error() {
        let r = parse_fcidump(" &FCI NORB=1,NELEC=2,MS2=0 &END\n 1.0 2 1 0 0\n");
        assert!(matches!(r, Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn conflicting_duplicates_are_an_error() {
        let r = parse_fcidump(" &FCI NORB=2,NELEC=2,MS2=0 /\n 1.0 1 2 0 0\n 1.5 2 1 0 0\n");
        assert!(matches!(r, Err(Error::Parse(_))));
        assert!(parse_fcidump(" &FCI NORB=2,NELEC=2,MS2=0 /\n 1.0 1 2 0 0\n 1.0 2 1 0 0\n").is_ok());
    }

    #[test]
    fn empty_core_keeps_bare_integrals() {
        let s = parse_fcidump(TWO_ORB).unwrap();
        let cas = ActiveSpace { core: vec![], active: vec![0, 1], n_active_elec: 2 };
        let ah = build_active_hamiltonian(&s, &cas).unwrap();
        assert_eq!(ah.e_const, 0.5);
        assert_eq!(ah.h_eff, s.h);
    }

    #[test]
    fn invalid_partition_is_rejected() {
        let s = parse_fcidump(TWO_ORB).unwrap();
        let cas = ActiveSpace { core: vec![0], active: vec![0, 1], n_active_elec: 2 };
        assert!(build_active_hamiltonian(&s, &cas).is_err());
        let cas = ActiveSpace { core: vec![], active: vec![0], n_active_elec: 3 };
        assert!(build_active_hamiltonian(&s, &cas).is_err());
    }
}
