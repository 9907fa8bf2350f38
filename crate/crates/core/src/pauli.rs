//! Pauli strings over up to 64 qubits and real-weighted sums of them.
//!
//! A string is stored as two bit masks: bit `q` of `x` marks an X component on
//! qubit `q`, bit `q` of `z` a Z component, and both bits together denote Y.
//! Text form lists letters from the highest qubit down, e.g. `X3Y1Z0`, with the
//! identity written `I`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Coefficients smaller than this are dropped from a [`PauliSum`].
pub const PRUNE_TOL: f64 = 1e-14;
/// Imaginary residues up to this size are discarded when converting to real sums.
pub const IMAG_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn rank(self) -> u8 {
        match self {
            Pauli::I => 0,
            Pauli::X => 1,
            Pauli::Y => 2,
            Pauli::Z => 3,
        }
    }

    fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// A power of `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    PlusOne,
    PlusI,
    MinusOne,
    MinusI,
}

impl Phase {
    pub fn from_power(k: u32) -> Phase {
        match k % 4 {
            0 => Phase::PlusOne,
            1 => Phase::PlusI,
            2 => Phase::MinusOne,
            _ => Phase::MinusI,
        }
    }

    pub fn power(self) -> u32 {
        match self {
            Phase::PlusOne => 0,
            Phase::PlusI => 1,
            Phase::MinusOne => 2,
            Phase::MinusI => 3,
        }
    }

    pub fn to_complex(self) -> Complex64 {
        match self {
            Phase::PlusOne => Complex64::new(1.0, 0.0),
            Phase::PlusI => Complex64::new(0.0, 1.0),
            Phase::MinusOne => Complex64::new(-1.0, 0.0),
            Phase::MinusI => Complex64::new(0.0, -1.0),
        }
    }

    pub fn mul(self, other: Phase) -> Phase {
        Phase::from_power(self.power() + other.power())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    n: usize,
    x: u64,
    z: u64,
}

fn width_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

impl PauliString {
    pub fn identity(n_qubits: usize) -> PauliString {
        assert!(n_qubits <= 64, "at most 64 qubits are supported");
        PauliString { n: n_qubits, x: 0, z: 0 }
    }

    /// Builds a string from raw masks; bits above `n_qubits` are an error.
    pub fn from_masks(n_qubits: usize, x: u64, z: u64) -> Result<PauliString> {
        if n_qubits > 64 {
            return Err(Error::Invalid(format!("{n_qubits} qubits exceeds the 64-qubit limit")));
        }
        let m = width_mask(n_qubits);
        if x & !m != 0 || z & !m != 0 {
            return Err(Error::IndexOutOfRange { what: "qubits", index: 63 - (x | z).leading_zeros() as usize, limit: n_qubits });
        }
        Ok(PauliString { n: n_qubits, x, z })
    }

    /// Builds a string from `(qubit, letter)` pairs.
    pub fn from_letters(n_qubits: usize, letters: &[(usize, Pauli)]) -> Result<PauliString> {
        let mut p = PauliString::identity(n_qubits);
        for &(q, l) in letters {
            if q >= n_qubits {
                return Err(Error::IndexOutOfRange { what: "qubits", index: q, limit: n_qubits });
            }
            p.set(q, l);
        }
        Ok(p)
    }

    /// A Z-type string on the qubits set in `mask`.
    pub fn z_string(n_qubits: usize, mask: u64) -> Result<PauliString> {
        PauliString::from_masks(n_qubits, 0, mask)
    }

    pub fn parse(text: &str, n_qubits: usize) -> Result<PauliString> {
        let t = text.trim();
        if t == "I" || t.is_empty() {
            return Ok(PauliString::identity(n_qubits));
        }
        let mut p = PauliString::identity(n_qubits);
        let chars: Vec<char> = t.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let letter = match chars[i] {
                'I' => Pauli::I,
                'X' => Pauli::X,
                'Y' => Pauli::Y,
                'Z' => Pauli::Z,
                c => return Err(Error::Parse(format!("unexpected character '{c}' in Pauli string '{t}'"))),
            };
            i += 1;
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if start == i {
                return Err(Error::Parse(format!("missing qubit index in '{t}'")));
            }
            let idx: usize = chars[start..i].iter().collect::<String>().parse().map_err(|_| Error::Parse(t.to_string()))?;
            if idx >= n_qubits {
                return Err(Error::IndexOutOfRange { what: "qubits", index: idx, limit: n_qubits });
            }
            if p.letter(idx) != Pauli::I {
                return Err(Error::Parse(format!("qubit {idx} repeated in '{t}'")));
            }
            p.set(idx, letter);
        }
        Ok(p)
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn x_mask(&self) -> u64 {
        self.x
    }

    pub fn z_mask(&self) -> u64 {
        self.z
    }

    pub fn support(&self) -> u64 {
        self.x | self.z
    }

    pub fn weight(&self) -> u32 {
        self.support().count_ones()
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    /// True when the string contains only I and Z letters.
    pub fn is_diagonal(&self) -> bool {
        self.x == 0
    }

    pub fn y_count(&self) -> u32 {
        (self.x & self.z).count_ones()
    }

    pub fn letter(&self, q: usize) -> Pauli {
        match ((self.x >> q) & 1, (self.z >> q) & 1) {
            (0, 0) => Pauli::I,
            (1, 0) => Pauli::X,
            (1, 1) => Pauli::Y,
            _ => Pauli::Z,
        }
    }

    pub fn set(&mut self, q: usize, l: Pauli) {
        let bit = 1u64 << q;
        self.x &= !bit;
        self.z &= !bit;
        match l {
            Pauli::I => {}
            Pauli::X => self.x |= bit,
            Pauli::Y => {
                self.x |= bit;
                self.z |= bit
            }
            Pauli::Z => self.z |= bit,
        }
    }

    /// Full (not qubit-wise) commutation.
    pub fn commutes(&self, other: &PauliString) -> bool {
        ((self.x & other.z) ^ (self.z & other.x)).count_ones() % 2 == 0
    }

    /// Removes the listed qubits, shifting higher qubits down.
    pub fn remove_qubits(&self, removed: &[usize]) -> PauliString {
        let mut x = 0u64;
        let mut z = 0u64;
        let mut k = 0;
        for q in 0..self.n {
            if removed.contains(&q) {
                continue;
            }
            x |= ((self.x >> q) & 1) << k;
            z |= ((self.z >> q) & 1) << k;
            k += 1;
        }
        PauliString { n: k, x, z }
    }

    /// Applies the string to a computational basis state: `P|b> = phase |b ^ x>`.
    pub fn apply_to_basis(&self, b: u64) -> (Complex64, u64) {
        let sign = if (b & self.z).count_ones() % 2 == 1 { 2 } else { 0 };
        (Phase::from_power(self.y_count() + sign).to_complex(), b ^ self.x)
    }
}

impl Ord for PauliString {
    fn cmp(&self, other: &Self) -> Ordering {
        self.n.cmp(&other.n).then_with(|| {
            for q in (0..self.n).rev() {
                let o = self.letter(q).rank().cmp(&other.letter(q).rank());
                if o != Ordering::Equal {
                    return o;
                }
            }
            Ordering::Equal
        })
    }
}

impl PartialOrd for PauliString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_identity() {
            return write!(f, "I");
        }
        for q in (0..self.n).rev() {
            let l = self.letter(q);
            if l != Pauli::I {
                write!(f, "{}{}", l.symbol(), q)?;
            }
        }
        Ok(())
    }
}

fn check_width(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::WidthMismatch(a, b));
    }
    Ok(())
}

/// Product `a * b` as a phase and a string.
pub fn pauli_mul(a: &PauliString, b: &PauliString) -> Result<(Phase, PauliString)> {
    check_width(a.n, b.n)?;
    Ok(mul_unchecked(a, b))
}

pub(crate) fn mul_unchecked(a: &PauliString, b: &PauliString) -> (Phase, PauliString) {
    // P(x,z) = i^{|x&z|} X^x Z^z, and Z^z1 X^x2 = (-1)^{|z1&x2|} X^x2 Z^z1.
    let x = a.x ^ b.x;
    let z = a.z ^ b.z;
    let k = a.y_count() + b.y_count() + 2 * (a.z & b.x).count_ones() + 4 - ((x & z).count_ones() % 4);
    (Phase::from_power(k), PauliString { n: a.n, x, z })
}

/// True iff on every qubit the letters agree or one of them is the identity.
pub fn qubit_wise_commutes(a: &PauliString, b: &PauliString) -> Result<bool> {
    check_width(a.n, b.n)?;
    Ok(qwc_unchecked(a, b))
}

pub(crate) fn qwc_unchecked(a: &PauliString, b: &PauliString) -> bool {
    let both = a.support() & b.support();
    both & ((a.x ^ b.x) | (a.z ^ b.z)) == 0
}

/// A real linear combination of Pauli strings on a fixed number of qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliSum {
    n: usize,
    terms: BTreeMap<PauliString, f64>,
}

impl PauliSum {
    pub fn zero(n_qubits: usize) -> PauliSum {
        PauliSum { n: n_qubits, terms: BTreeMap::new() }
    }

    pub fn identity(n_qubits: usize, coeff: f64) -> PauliSum {
        let mut s = PauliSum::zero(n_qubits);
        s.add_term(PauliString::identity(n_qubits), coeff).expect("identity has matching width");
        s
    }

    pub fn from_terms<I: IntoIterator<Item = (PauliString, f64)>>(n_qubits: usize, terms: I) -> Result<PauliSum> {
        let mut s = PauliSum::zero(n_qubits);
        for (p, c) in terms {
            s.add_term(p, c)?;
        }
        Ok(s)
    }

    /// Parses the text form, e.g. `0.5*Z1Z0 - 1.25*X1X0 + 0.1*I`.
    pub fn parse(text: &str, n_qubits: usize) -> Result<PauliSum> {
        let mut s = PauliSum::zero(n_qubits);
        let t = text.trim();
        if t.is_empty() || t == "0" {
            return Ok(s);
        }
        let mut chunks: Vec<String> = Vec::new();
        let mut cur = String::new();
        let chars: Vec<char> = t.chars().collect();
        for (i, &c) in chars.iter().enumerate() {
            let prev = if i == 0 { None } else { chars[..i].iter().rev().find(|c| !c.is_whitespace()).copied() };
            let exponent_sign = matches!(prev, Some('e') | Some('E')) && cur.trim_end().ends_with(['e', 'E']);
            if (c == '+' || c == '-') && i > 0 && !exponent_sign && prev != Some('*') {
                chunks.push(std::mem::take(&mut cur));
            }
            cur.push(c);
        }
        chunks.push(cur);
        for chunk in chunks {
            let c = chunk.replace(' ', "");
            if c.is_empty() {
                continue;
            }
            let (coef, string) = match c.split_once('*') {
                Some((a, b)) => (a.parse::<f64>().map_err(|_| Error::Parse(format!("bad coefficient '{a}'")))?, b.to_string()),
                None => {
                    let (sign, body) = match c.strip_prefix('-') {
                        Some(b) => (-1.0, b),
                        None => (1.0, c.strip_prefix('+').unwrap_or(&c)),
                    };
                    (sign, body.to_string())
                }
            };
            s.add_term(PauliString::parse(&string, n_qubits)?, coef)?;
        }
        Ok(s)
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PauliString, &f64)> {
        self.terms.iter()
    }

    pub fn strings(&self) -> impl Iterator<Item = &PauliString> {
        self.terms.keys()
    }

    pub fn coeff(&self, p: &PauliString) -> f64 {
        self.terms.get(p).copied().unwrap_or(0.0)
    }

    pub fn identity_coeff(&self) -> f64 {
        self.coeff(&PauliString::identity(self.n))
    }

    /// Adds `coeff * p`, merging with an existing term and pruning cancellations.
    pub fn add_term(&mut self, p: PauliString, coeff: f64) -> Result<()> {
        check_width(self.n, p.n)?;
        if !coeff.is_finite() {
            return Err(Error::Numerical(format!("non-finite coefficient for {p}")));
        }
        let e = self.terms.entry(p).or_insert(0.0);
        *e += coeff;
        if e.abs() < PRUNE_TOL {
            self.terms.remove(&p);
        }
        Ok(())
    }

    pub fn scale(&self, k: f64) -> PauliSum {
        let mut s = PauliSum::zero(self.n);
        for (p, c) in &self.terms {
            s.add_term(*p, c * k).expect("same width");
        }
        s
    }

    /// Product of two sums; a genuinely complex result is an error.
    pub fn mul(&self, other: &PauliSum) -> Result<PauliSum> {
        check_width(self.n, other.n)?;
        let mut acc = ComplexAccumulator::new(self.n);
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                let (ph, p) = mul_unchecked(a, b);
                acc.add(p, ph.to_complex() * (ca * cb));
            }
        }
        acc.into_real()
    }

    /// Keeps only the terms for which `keep` returns true.
    pub fn filter(&self, mut keep: impl FnMut(&PauliString) -> bool) -> PauliSum {
        PauliSum { n: self.n, terms: self.terms.iter().filter(|(p, _)| keep(p)).map(|(p, c)| (*p, *c)).collect() }
    }

    /// Largest coefficient magnitude, or zero for an empty sum.
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// Merged sum of two Pauli sums of equal width.
pub fn pauli_sum_add(a: &PauliSum, b: &PauliSum) -> Result<PauliSum> {
    check_width(a.n, b.n)?;
    let mut s = a.clone();
    for (p, c) in &b.terms {
        s.add_term(*p, *c)?;
    }
    Ok(s)
}

impl fmt::Display for PauliSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (p, c)) in self.terms.iter().enumerate() {
            if i == 0 {
                write!(f, "{c}*{p}")?;
            } else if *c < 0.0 {
                write!(f, " - {}*{p}", -c)?;
            } else {
                write!(f, " + {c}*{p}")?;
            }
        }
        Ok(())
    }
}

/// Accumulates complex-weighted strings before conversion to a real [`PauliSum`].
#[derive(Clone, Debug)]
pub struct ComplexAccumulator {
    n: usize,
    terms: HashMap<PauliString, Complex64>,
}

impl ComplexAccumulator {
    pub fn new(n_qubits: usize) -> ComplexAccumulator {
        ComplexAccumulator { n: n_qubits, terms: HashMap::new() }
    }

    pub fn add(&mut self, p: PauliString, c: Complex64) {
        *self.terms.entry(p).or_insert(Complex64::new(0.0, 0.0)) += c;
    }

    pub fn terms(&self) -> impl Iterator<Item = (&PauliString, &Complex64)> {
        self.terms.iter()
    }

    /// Converts to a real sum; imaginary parts above [`IMAG_TOL`] are an error.
    pub fn into_real(self) -> Result<PauliSum> {
        let mut worst: f64 = 0.0;
        let mut s = PauliSum::zero(self.n);
        for (p, c) in self.terms {
            worst = worst.max(c.im.abs());
            if c.re.abs() >= PRUNE_TOL {
                s.terms.insert(p, c.re);
            }
        }
        if worst > IMAG_TOL {
            return Err(Error::NonHermitian(worst));
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ps(t: &str, n: usize) -> PauliString {
        PauliString::parse(t, n).unwrap()
    }

    #[test]
    fn product_of_x_and_y_is_iz() {
        let (ph, p) = pauli_mul(&ps("X1", 2), &ps("Y1", 2)).unwrap();
        assert_eq!(ph, Phase::PlusI);
        assert_eq!(p, ps("Z1", 2));
    }

    #[test]
    fn zz_times_xx_is_minus_yy() {
        let (ph, p) = pauli_mul(&ps("Z1Z0", 2), &ps("X1X0", 2)).unwrap();
        assert_eq!(ph, Phase::MinusOne);
        assert_eq!(p, ps("Y1Y0", 2));
    }

    #[test]
    fn width_mismatch_is_rejected() {
        assert!(pauli_mul(&ps("X0", 1), &ps("X0", 2)).is_err());
        assert!(qubit_wise_commutes(&ps("X0", 1), &ps("X0", 2)).is_err());
    }

    #[test]
    fn text_round_trip() {
        let s = PauliSum::parse("0.5*Z1Z0 + 1.25*X1X0 - 2e-3*Y1 + 1e-2*I", 2).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.coeff(&ps("Y1", 2)), -2e-3);
        let again = PauliSum::parse(&s.to_string(), 2).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn canonical_order_is_lexicographic_from_high_qubit() {
        let s = PauliSum::parse("1*Z1 + 1*X1X0 + 1*I + 1*Y0", 2).unwrap();
        let order: Vec<String> = s.strings().map(|p| p.to_string()).collect();
        assert_eq!(order, vec!["I", "Y0", "X1X0", "Z1"]);
    }

    #[test]
    fn complex_products_are_rejected() {
        let a = PauliSum::parse("1*X0", 1).unwrap();
        let b = PauliSum::parse("1*Z0", 1).unwrap();
        assert!(matches!(a.mul(&b), Err(Error::NonHermitian(_))));
    }
}
