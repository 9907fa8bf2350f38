//! Dense statevector simulation with exact expectations, shot sampling,
//! global depolarizing noise and readout confusion.
//!
//! Qubit 0 is the least significant bit of a basis index.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Serialize, Serializer};

use crate::ansatz::ParamCircuit;
use crate::error::{Error, Result};
use crate::pauli::{Pauli, PauliString, PauliSum};

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Rotation angle: a fixed value or `scale * params[slot]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Angle {
    Fixed(f64),
    Slot(usize),
}

impl Angle {
    pub fn value(&self, params: &[f64]) -> f64 {
        match *self {
            Angle::Fixed(v) => v,
            Angle::Slot(i) => params[i],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Gate {
    X(usize),
    H(usize),
    Ry(usize, Angle),
    Rz(usize, Angle),
    Cnot { control: usize, target: usize },
    Cz(usize, usize),
    /// `exp(-i theta/2 P)`.
    PauliRotation(PauliString, Angle),
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Gate::X(q) | Gate::H(q) | Gate::Ry(q, _) | Gate::Rz(q, _) => vec![*q],
            Gate::Cnot { control, target } => vec![*control, *target],
            Gate::Cz(a, b) => vec![*a, *b],
            Gate::PauliRotation(p, _) => (0..p.n_qubits()).filter(|&q| p.letter(q) != Pauli::I).collect(),
        }
    }

    pub fn angle(&self) -> Option<Angle> {
        match self {
            Gate::Ry(_, a) | Gate::Rz(_, a) | Gate::PauliRotation(_, a) => Some(*a),
            _ => None,
        }
    }

    pub(crate) fn validate(&self, n_qubits: usize, n_params: usize) -> Result<()> {
        let qs = self.qubits();
        for (i, &q) in qs.iter().enumerate() {
            if q >= n_qubits {
                return Err(Error::IndexOutOfRange { what: "qubits", index: q, limit: n_qubits });
            }
            if qs[..i].contains(&q) {
                return Err(Error::Invalid(format!("gate {self} repeats qubit {q}")));
            }
        }
        if let Gate::PauliRotation(p, _) = self {
            if p.n_qubits() != n_qubits {
                return Err(Error::WidthMismatch(p.n_qubits(), n_qubits));
            }
        }
        if let Some(Angle::Slot(s)) = self.angle() {
            if s >= n_params {
                return Err(Error::IndexOutOfRange { what: "parameter slots", index: s, limit: n_params });
            }
        }
        Ok(())
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Angle::Fixed(v) => write!(f, "fixed={v}"),
            Angle::Slot(s) => write!(f, "slot={s}"),
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gate::X(q) => write!(f, "X {q}"),
            Gate::H(q) => write!(f, "H {q}"),
            Gate::Ry(q, a) => write!(f, "RY {q} {a}"),
            Gate::Rz(q, a) => write!(f, "RZ {q} {a}"),
            Gate::Cnot { control, target } => write!(f, "CNOT {control} {target}"),
            Gate::Cz(a, b) => write!(f, "CZ {a} {b}"),
            Gate::PauliRotation(p, a) => write!(f, "PROT {p} {a}"),
        }
    }
}

fn parse_angle(t: &str) -> Result<Angle> {
    if let Some(v) = t.strip_prefix("fixed=") {
        return v.parse().map(Angle::Fixed).map_err(|_| Error::Parse(format!("bad angle '{t}'")));
    }
    if let Some(v) = t.strip_prefix("slot=") {
        return v.parse().map(Angle::Slot).map_err(|_| Error::Parse(format!("bad slot '{t}'")));
    }
    Err(Error::Parse(format!("bad angle '{t}'")))
}

impl Gate {
    /// Parses one line of the circuit text form produced by `Display`.
    pub fn parse(line: &str, n_qubits: usize) -> Result<Gate> {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let q = |i: usize| -> Result<usize> {
            toks.get(i).ok_or_else(|| Error::Parse(format!("truncated gate '{line}'")))?.parse().map_err(|_| Error::Parse(format!("bad qubit in '{line}'")))
        };
        let a = |i: usize| -> Result<Angle> { parse_angle(toks.get(i).ok_or_else(|| Error::Parse(format!("missing angle in '{line}'")))?) };
        let g = match toks.first().copied() {
            Some("X") => Gate::X(q(1)?),
            Some("H") => Gate::H(q(1)?),
            Some("RY") => Gate::Ry(q(1)?, a(2)?),
            Some("RZ") => Gate::Rz(q(1)?, a(2)?),
            Some("CNOT") => Gate::Cnot { control: q(1)?, target: q(2)? },
            Some("CZ") => Gate::Cz(q(1)?, q(2)?),
            Some("PROT") => Gate::PauliRotation(PauliString::parse(toks.get(1).copied().unwrap_or(""), n_qubits)?, a(2)?),
            _ => return Err(Error::Parse(format!("unknown gate '{line}'"))),
        };
        Ok(g)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zero_state(n_qubits: usize) -> StateVector {
        let mut amps = vec![C0; 1usize << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        StateVector { n: n_qubits, amps }
    }

    pub fn basis_state(n_qubits: usize, bits: u64) -> StateVector {
        let mut amps = vec![C0; 1usize << n_qubits];
        amps[bits as usize] = Complex64::new(1.0, 0.0);
        StateVector { n: n_qubits, amps }
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<StateVector> {
        let n = amps.len().trailing_zeros() as usize;
        if amps.len() != 1usize << n {
            return Err(Error::Invalid("amplitude count is not a power of two".into()));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Invalid(format!("state norm {norm} differs from 1")));
        }
        Ok(StateVector { n, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn apply(&mut self, g: &Gate, params: &[f64]) {
        match g {
            Gate::X(q) => {
                let b = 1usize << q;
                for i in 0..self.amps.len() {
                    if i & b == 0 {
                        self.amps.swap(i, i | b);
                    }
                }
            }
            Gate::H(q) => {
                let b = 1usize << q;
                let r = std::f64::consts::FRAC_1_SQRT_2;
                for i in 0..self.amps.len() {
                    if i & b == 0 {
                        let (a0, a1) = (self.amps[i], self.amps[i | b]);
                        self.amps[i] = (a0 + a1) * r;
                        self.amps[i | b] = (a0 - a1) * r;
                    }
                }
            }
            Gate::Ry(q, a) => {
                let t = a.value(params) / 2.0;
                let (s, c) = t.sin_cos();
                let b = 1usize << q;
                for i in 0..self.amps.len() {
                    if i & b == 0 {
                        let (a0, a1) = (self.amps[i], self.amps[i | b]);
                        self.amps[i] = a0 * c - a1 * s;
                        self.amps[i | b] = a0 * s + a1 * c;
                    }
                }
            }
            Gate::Rz(q, a) => {
                let t = a.value(params) / 2.0;
                let m = Complex64::new(t.cos(), -t.sin());
                let p = m.conj();
                let b = 1usize << q;
                for (i, amp) in self.amps.iter_mut().enumerate() {
                    *amp *= if i & b == 0 { m } else { p };
                }
            }
            Gate::Cnot { control, target } => {
                let (c, t) = (1usize << control, 1usize << target);
                for i in 0..self.amps.len() {
                    if i & c != 0 && i & t == 0 {
                        self.amps.swap(i, i | t);
                    }
                }
            }
            Gate::Cz(a, b) => {
                let m = (1usize << a) | (1usize << b);
                for (i, amp) in self.amps.iter_mut().enumerate() {
                    if i & m == m {
                        *amp = -*amp;
                    }
                }
            }
            Gate::PauliRotation(p, a) => {
                let t = a.value(params) / 2.0;
                let (s, c) = t.sin_cos();
                let mut out = vec![C0; self.amps.len()];
                let mi = Complex64::new(0.0, -s);
                for (b, &amp) in self.amps.iter().enumerate() {
                    if amp == C0 {
                        continue;
                    }
                    out[b] += amp * c;
                    let (ph, b2) = p.apply_to_basis(b as u64);
                    out[b2 as usize] += amp * ph * mi;
                }
                self.amps = out;
            }
        }
    }

    /// `obs |psi>` as a raw amplitude vector.
    pub fn apply_pauli_sum(&self, obs: &PauliSum) -> Vec<Complex64> {
        let mut out = vec![C0; self.amps.len()];
        for (p, &c) in obs.iter() {
            for (b, &amp) in self.amps.iter().enumerate() {
                if amp == C0 {
                    continue;
                }
                let (ph, b2) = p.apply_to_basis(b as u64);
                out[b2 as usize] += amp * ph * c;
            }
        }
        out
    }
}

/// Prepares `circuit` at `params` from the all-zero state.
pub fn run_circuit(circuit: &ParamCircuit, params: &[f64]) -> Result<StateVector> {
    if params.len() != circuit.n_params {
        return Err(Error::Invalid(format!("circuit has {} parameter slots, got {} values", circuit.n_params, params.len())));
    }
    let mut s = StateVector::zero_state(circuit.n_qubits);
    for g in &circuit.gates {
        s.apply(g, params);
    }
    Ok(s)
}

pub fn pauli_expectation(state: &StateVector, p: &PauliString) -> f64 {
    let mut acc = C0;
    for (b, &amp) in state.amps.iter().enumerate() {
        if amp == C0 {
            continue;
        }
        let (ph, b2) = p.apply_to_basis(b as u64);
        acc += state.amps[b2 as usize].conj() * ph * amp;
    }
    acc.re
}

/// `<state|obs|state>`.
pub fn exact_expectation(state: &StateVector, obs: &PauliSum) -> Result<f64> {
    if state.n != obs.n_qubits() {
        return Err(Error::WidthMismatch(state.n, obs.n_qubits()));
    }
    Ok(obs.iter().map(|(p, c)| c * pauli_expectation(state, p)).sum())
}

/// Column-stochastic readout map: `T[(i, j)] = P(measure i | prepared j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionMatrix {
    t: DMatrix<f64>,
}

impl ConfusionMatrix {
    pub fn new(t: DMatrix<f64>) -> Result<ConfusionMatrix> {
        if t.nrows() != t.ncols() || !t.nrows().is_power_of_two() {
            return Err(Error::Invalid("confusion matrix must be square with power-of-two dimension".into()));
        }
        if t.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::Invalid("confusion matrix has negative entries".into()));
        }
        for j in 0..t.ncols() {
            if (t.column(j).sum() - 1.0).abs() > 1e-9 {
                return Err(Error::Invalid(format!("confusion column {j} does not sum to 1")));
            }
        }
        Ok(ConfusionMatrix { t })
    }

    pub fn identity(n_qubits: usize) -> ConfusionMatrix {
        ConfusionMatrix { t: DMatrix::identity(1 << n_qubits, 1 << n_qubits) }
    }

    /// Independent symmetric bit flips with rate `flip[q]` on qubit `q`.
    pub fn from_flip_rates(flip: &[f64]) -> Result<ConfusionMatrix> {
        if flip.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Invalid("flip rates must lie in [0, 1]".into()));
        }
        let d = 1usize << flip.len();
        let t = DMatrix::from_fn(d, d, |i, j| {
            flip.iter().enumerate().fold(1.0, |acc, (q, f)| if (i ^ j) >> q & 1 == 1 { acc * f } else { acc * (1.0 - f) })
        });
        ConfusionMatrix::new(t)
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.t
    }
}

/// `y = T x`.
pub fn apply_confusion(x: &[f64], t: &ConfusionMatrix) -> Result<Vec<f64>> {
    if x.len() != t.dim() {
        return Err(Error::WidthMismatch(x.len(), t.dim()));
    }
    let v = &t.t * nalgebra::DVector::from_column_slice(x);
    Ok(v.iter().copied().collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    pub depol_p: f64,
    pub n_layers: usize,
    pub confusion: Option<ConfusionMatrix>,
}

impl NoiseModel {
    pub fn noiseless() -> NoiseModel {
        NoiseModel { depol_p: 0.0, n_layers: 0, confusion: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.depol_p) {
            return Err(Error::Invalid(format!("depolarizing rate {} outside [0, 1]", self.depol_p)));
        }
        Ok(())
    }

    /// Total depolarized weight `P_n = 1 - (1 - p)^n`.
    pub fn p_total(&self) -> f64 {
        1.0 - (1.0 - self.depol_p).powi(self.n_layers as i32)
    }

    pub fn is_noiseless(&self) -> bool {
        self.p_total() == 0.0 && self.confusion.is_none()
    }
}

/// Measurement outcome counts indexed by basis state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Histogram {
    n_qubits: usize,
    counts: Vec<u64>,
}

impl Histogram {
    pub fn new(n_qubits: usize, counts: Vec<u64>) -> Result<Histogram> {
        if counts.len() != 1usize << n_qubits {
            return Err(Error::WidthMismatch(counts.len(), 1usize << n_qubits));
        }
        Ok(Histogram { n_qubits, counts })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn shots(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let s = self.shots().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / s).collect()
    }

    /// Nonzero counts keyed by bit string, qubit 0 rightmost.
    pub fn to_map(&self) -> BTreeMap<String, u64> {
        self.counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(b, &c)| (bit_string(b as u64, self.n_qubits), c)).collect()
    }
}

impl Serialize for Histogram {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_map().serialize(s)
    }
}

pub fn bit_string(b: u64, n: usize) -> String {
    (0..n).rev().map(|q| if (b >> q) & 1 == 1 { '1' } else { '0' }).collect()
}

/// Outcome distribution after basis rotations, depolarization and readout error.
pub fn measured_probabilities(state: &StateVector, basis_rotations: &[Gate], noise: &NoiseModel) -> Result<Vec<f64>> {
    noise.validate()?;
    let mut s = state.clone();
    for g in basis_rotations {
        g.validate(s.n, 0)?;
        s.apply(g, &[]);
    }
    let pn = noise.p_total();
    let d = s.amps.len() as f64;
    let mut p: Vec<f64> = s.probabilities().iter().map(|x| (1.0 - pn) * x + pn / d).collect();
    if let Some(t) = &noise.confusion {
        p = apply_confusion(&p, t)?;
    }
    Ok(p)
}

/// Multinomial draw of `shots` outcomes from `probs` by sequential binomials.
pub fn sample_multinomial(probs: &[f64], shots: u64, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0u64; probs.len()];
    let mut left = shots;
    let mut mass: f64 = probs.iter().map(|p| p.max(0.0)).sum();
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        let p = p.max(0.0);
        if i == probs.len() - 1 || mass <= 0.0 {
            out[i] = left;
            break;
        }
        let q = (p / mass).clamp(0.0, 1.0);
        let k = if q >= 1.0 { left } else if q <= 0.0 { 0 } else { Binomial::new(left, q).expect("valid binomial").sample(&mut rng) };
        out[i] = k;
        left -= k;
        mass -= p;
    }
    out
}

/// Samples `shots` measurement outcomes of `state` in the rotated basis.
pub fn sample_counts(state: &StateVector, basis_rotations: &[Gate], shots: u64, noise: &NoiseModel, seed: u64) -> Result<Histogram> {
    if shots == 0 {
        return Err(Error::Invalid("shots must be at least 1".into()));
    }
    let p = measured_probabilities(state, basis_rotations, noise)?;
    Histogram::new(state.n, sample_multinomial(&p, shots, seed))
}

/// Stable 64-bit FNV-1a hash, used to derive per-run seeds from labels.
pub fn stable_hash(text: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derives a child seed from a parent seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut z = seed ^ stable_hash(label);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hadamard_on_zero() {
        let mut s = StateVector::zero_state(1);
        s.apply(&Gate::H(0), &[]);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.amps[0].re - r).abs() < 1e-15 && (s.amps[1].re - r).abs() < 1e-15);
    }

    #[test]
    fn noiseless_basis_state_sampling_is_deterministic() {
        let s = StateVector::basis_state(2, 0b11);
        let h = sample_counts(&s, &[], 100, &NoiseModel::noiseless(), 5).unwrap();
        assert_eq!(h.to_map(), BTreeMap::from([("11".to_string(), 100)]));
    }

    #[test]
    fn flip_confusion_on_one_qubit() {
        let t = ConfusionMatrix::from_flip_rates(&[0.1]).unwrap();
        let y = apply_confusion(&[1.0, 0.0], &t).unwrap();
        assert!((y[0] - 0.9).abs() < 1e-15 && (y[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn gate_text_round_trip() {
        let p = PauliString::parse("X3Y1", 4).unwrap();
        for g in [Gate::X(1), Gate::Ry(0, Angle::Slot(2)), Gate::Rz(3, Angle::Fixed(-1.5)), Gate::Cnot { control: 0, target: 2 }, Gate::Cz(1, 3), Gate::PauliRotation(p, Angle::Slot(0))] {
            assert_eq!(Gate::parse(&g.to_string(), 4).unwrap(), g);
        }
    }

    #[test]
    fn derived_seeds_differ_by_label() {
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
    }
}
