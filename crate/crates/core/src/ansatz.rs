//! Parameterized circuits: the fixed two-qubit ethylene circuits and
//! qubit-ADAPT construction from a Pauli-string operator pool.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fermion::{encode_complex, excitation_generators, taper, EncodingSpec};
use crate::optimize::{cobyla_minimize_with, CobylaOptions, OptimizerBudget};
use crate::pauli::{Pauli, PauliString, PauliSum};
use crate::sim::{run_circuit, Angle, Gate};

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCircuit {
    pub n_qubits: usize,
    pub gates: Vec<Gate>,
    pub n_params: usize,
    pub label: String,
}

impl ParamCircuit {
    pub fn new(n_qubits: usize, gates: Vec<Gate>, n_params: usize, label: impl Into<String>) -> Result<ParamCircuit> {
        let c = ParamCircuit { n_qubits, gates, n_params, label: label.into() };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let mut used = vec![false; self.n_params];
        for g in &self.gates {
            g.validate(self.n_qubits, self.n_params)?;
            if let Some(Angle::Slot(s)) = g.angle() {
                used[s] = true;
            }
        }
        if let Some(s) = used.iter().position(|u| !u) {
            return Err(Error::Invalid(format!("parameter slot {s} is never used")));
        }
        Ok(())
    }

    /// Circuit depth with Pauli rotations counted as their compiled blocks.
    pub fn depth(&self) -> usize {
        let mut level = vec![0usize; self.n_qubits];
        let place = |qs: &[usize], level: &mut Vec<usize>| {
            let d = qs.iter().map(|&q| level[q]).max().unwrap_or(0) + 1;
            for &q in qs {
                level[q] = d;
            }
        };
        for g in &self.gates {
            match g {
                Gate::PauliRotation(p, a) => {
                    for h in pauli_rotation_block_angle(p, *a).unwrap_or_default() {
                        place(&h.qubits(), &mut level);
                    }
                }
                _ => place(&g.qubits(), &mut level),
            }
        }
        level.into_iter().max().unwrap_or(0)
    }

    /// Text form: a header line then one gate per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("circuit {} qubits={} params={}\n", self.label, self.n_qubits, self.n_params);
        for g in &self.gates {
            s.push_str(&g.to_string());
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<ParamCircuit> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let head = lines.next().ok_or_else(|| Error::Parse("empty circuit text".into()))?;
        let toks: Vec<&str> = head.split_whitespace().collect();
        if toks.len() != 4 || toks[0] != "circuit" {
            return Err(Error::Parse(format!("bad circuit header '{head}'")));
        }
        let field = |t: &str, key: &str| -> Result<usize> {
            t.strip_prefix(key).and_then(|v| v.parse().ok()).ok_or_else(|| Error::Parse(format!("bad header field '{t}'")))
        };
        let n_qubits = field(toks[2], "qubits=")?;
        let n_params = field(toks[3], "params=")?;
        let gates = lines.map(|l| Gate::parse(l, n_qubits)).collect::<Result<Vec<_>>>()?;
        ParamCircuit::new(n_qubits, gates, n_params, toks[1])
    }
}

impl fmt::Display for ParamCircuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EthyleneSector {
    #[serde(rename = "A'")]
    APrime,
    #[serde(rename = "A\"")]
    ADoublePrime,
}

/// One-parameter circuits spanning `{|00>, |11>}` (A') and `{|01>, |10>}` (A'').
pub fn ethylene_sector_circuit(sector: EthyleneSector) -> ParamCircuit {
    let mut gates = Vec::new();
    let label = match sector {
        EthyleneSector::APrime => "A'",
        EthyleneSector::ADoublePrime => {
            gates.push(Gate::X(1));
            "A\""
        }
    };
    gates.push(Gate::Ry(0, Angle::Slot(0)));
    gates.push(Gate::Cnot { control: 0, target: 1 });
    ParamCircuit::new(2, gates, 1, label).expect("fixed circuit is valid")
}

/// Gates implementing `exp(-i theta/2 P)` with `theta = params[slot]`.
pub fn pauli_rotation_block(p: &PauliString, slot: usize) -> Result<Vec<Gate>> {
    pauli_rotation_block_angle(p, Angle::Slot(slot))
}

fn pauli_rotation_block_angle(p: &PauliString, angle: Angle) -> Result<Vec<Gate>> {
    if p.is_identity() {
        return Err(Error::Invalid("identity generator has no rotation block".into()));
    }
    let support: Vec<usize> = (0..p.n_qubits()).filter(|&q| p.letter(q) != Pauli::I).collect();
    let mut pre = Vec::new();
    let mut post = Vec::new();
    for &q in &support {
        match p.letter(q) {
            Pauli::X => {
                pre.push(Gate::H(q));
                post.push(Gate::H(q));
            }
            Pauli::Y => {
                pre.push(Gate::Rz(q, Angle::Fixed(-FRAC_PI_2)));
                pre.push(Gate::H(q));
                post.push(Gate::H(q));
                post.push(Gate::Rz(q, Angle::Fixed(FRAC_PI_2)));
            }
            _ => {}
        }
    }
    let ladder: Vec<Gate> = support.windows(2).map(|w| Gate::Cnot { control: w[0], target: w[1] }).collect();
    let mut gates = pre;
    gates.extend(ladder.iter().cloned());
    gates.push(Gate::Rz(*support.last().expect("non-identity"), angle));
    gates.extend(ladder.into_iter().rev());
    gates.extend(post);
    Ok(gates)
}

/// Pauli-string generators for qubit-ADAPT, each used as `exp(-i theta/2 P)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorPool {
    pub n_qubits: usize,
    pub ops: Vec<PauliString>,
}

impl OperatorPool {
    pub fn new(n_qubits: usize, ops: Vec<PauliString>) -> Result<OperatorPool> {
        for p in &ops {
            if p.n_qubits() != n_qubits {
                return Err(Error::WidthMismatch(p.n_qubits(), n_qubits));
            }
            if p.y_count() % 2 == 0 {
                return Err(Error::Invalid(format!("pool generator {p} has an even number of Y letters")));
            }
        }
        Ok(OperatorPool { n_qubits, ops })
    }

    /// Keeps the generators commuting with every given symmetry string.
    pub fn restrict_commuting(&self, symmetries: &[PauliString]) -> OperatorPool {
        let ops = self.ops.iter().filter(|p| symmetries.iter().all(|s| p.commutes(s))).copied().collect();
        OperatorPool { n_qubits: self.n_qubits, ops }
    }
}

/// Pool from all spin-conserving generalized single and double excitations,
/// encoded and tapered per `spec`, split into strings with odd Y count.
pub fn uccsd_qubit_pool(n_active_elec: usize, n_qubits: usize, spec: &EncodingSpec) -> Result<OperatorPool> {
    if spec.n_modes % 2 != 0 || n_active_elec > spec.n_modes {
        return Err(Error::Invalid(format!("{n_active_elec} electrons in {} modes is inconsistent", spec.n_modes)));
    }
    if spec.n_qubits_tapered() != n_qubits {
        return Err(Error::WidthMismatch(spec.n_qubits_tapered(), n_qubits));
    }
    let mut ops: Vec<PauliString> = Vec::new();
    for g in excitation_generators(spec.n_modes / 2) {
        let acc = encode_complex(&g, spec.scheme)?;
        let mut strings: Vec<PauliString> = acc.terms().filter(|(_, c)| c.norm() > 1e-12).map(|(p, _)| *p).collect();
        strings.sort();
        for s in strings {
            let single = PauliSum::from_terms(spec.n_modes, [(s, 1.0)])?;
            let tapered = taper(&single, spec)?;
            let Some((t, _)) = tapered.iter().next() else { continue };
            if t.y_count() % 2 == 1 && !ops.contains(t) {
                ops.push(*t);
            }
        }
    }
    OperatorPool::new(n_qubits, ops)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptStep {
    pub operator: PauliString,
    pub gradient: f64,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptOutcome {
    pub circuit: ParamCircuit,
    pub params: Vec<f64>,
    pub reference_energy: f64,
    pub energy: f64,
    pub steps: Vec<AdaptStep>,
    pub stop_reason: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptOptions {
    pub eps_grad: f64,
    pub eps_energy: f64,
    pub max_ops: usize,
}

impl Default for AdaptOptions {
    fn default() -> Self {
        AdaptOptions { eps_grad: 1e-3, eps_energy: 1e-6, max_ops: 8 }
    }
}

fn reference_gates(reference: u64, n: usize) -> Vec<Gate> {
    (0..n).filter(|q| (reference >> q) & 1 == 1).map(Gate::X).collect()
}

fn adapt_circuit(reference: u64, ops: &[PauliString], n: usize, label: &str) -> Result<ParamCircuit> {
    let mut gates = reference_gates(reference, n);
    for (i, p) in ops.iter().enumerate() {
        gates.extend(pauli_rotation_block(p, i)?);
    }
    ParamCircuit::new(n, gates, ops.len(), label)
}

fn energy_of(circuit: &ParamCircuit, ham: &PauliSum, params: &[f64]) -> f64 {
    let s = run_circuit(circuit, params).expect("parameter count matches");
    crate::sim::exact_expectation(&s, ham).expect("widths match")
}

/// Greedy qubit-ADAPT: grows the circuit one pool generator at a time.
pub fn adapt_build(ham: &PauliSum, pool: &OperatorPool, reference: u64, opts: &AdaptOptions, label: &str) -> Result<AdaptOutcome> {
    if pool.ops.is_empty() {
        return Err(Error::Invalid("operator pool is empty".into()));
    }
    let n = ham.n_qubits();
    if pool.n_qubits != n {
        return Err(Error::WidthMismatch(pool.n_qubits, n));
    }
    if n < 64 && reference >> n != 0 {
        return Err(Error::Invalid(format!("reference bits exceed {n} qubits")));
    }
    let mut ops: Vec<PauliString> = Vec::new();
    let mut params: Vec<f64> = Vec::new();
    let mut circuit = adapt_circuit(reference, &ops, n, label)?;
    let reference_energy = energy_of(&circuit, ham, &params);
    let mut energy = reference_energy;
    let mut steps = Vec::new();
    let stop_reason = loop {
        if ops.len() >= opts.max_ops {
            break "max_ops".to_string();
        }
        let state = run_circuit(&circuit, &params)?;
        let hpsi = state.apply_pauli_sum(ham);
        let grads: Vec<f64> = pool
            .ops
            .iter()
            .map(|p| {
                let single = PauliSum::from_terms(n, [(*p, 1.0)]).expect("width checked");
                let ppsi = state.apply_pauli_sum(&single);
                let im: f64 = ppsi.iter().zip(&hpsi).map(|(a, b)| (a.conj() * b).im).sum();
                2.0 * im.abs()
            })
            .collect();
        let mut best = 0;
        for (i, g) in grads.iter().enumerate() {
            if *g > grads[best] {
                best = i;
            }
        }
        if grads[best] < opts.eps_grad {
            break "gradient".to_string();
        }
        let mut trial_ops = ops.clone();
        trial_ops.push(pool.ops[best]);
        let trial = adapt_circuit(reference, &trial_ops, n, label)?;
        let mut x0 = params.clone();
        x0.push(0.0);
        let budget = OptimizerBudget { max_evals: 400 * trial_ops.len() + 400, tol: 1e-9, bounds: None };
        let res = cobyla_minimize_with(&mut |x: &[f64]| energy_of(&trial, ham, x), &x0, &budget, &CobylaOptions { rho_begin: 0.3, rho_end: 1e-7 })?;
        let improvement = energy - res.best_value;
        if improvement < opts.eps_energy {
            break "energy".to_string();
        }
        ops = trial_ops;
        params = res.best_params;
        circuit = trial;
        energy = res.best_value;
        steps.push(AdaptStep { operator: pool.ops[best], gradient: grads[best], energy });
    };
    Ok(AdaptOutcome { circuit, params, reference_energy, energy, steps, stop_reason })
}
