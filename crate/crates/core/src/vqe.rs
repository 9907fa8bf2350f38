//! Variational state preparation for each symmetry sector.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::ParamCircuit;
use crate::chem_io::{active_to_fermion, ActiveHamiltonian};
use crate::error::{Error, Result};
use crate::fermion::{encode_tapered, EncodingSpec, RdmIndex};
use crate::measure::{estimate_rdms, measure_plan, MeasurementConfig, MeasurementPlan, SymmetryProjector};
use crate::optimize::{bayes_minimize_with, cobyla_minimize, BayesOptions, OptResult, OptimizerBudget};
use crate::pauli::PauliSum;
use crate::rdm::{rdm_energy, RdmPair};
use crate::sim::{derive_seed, exact_expectation, run_circuit, StateVector};

/// Tapered qubit Hamiltonian with the scalar part held apart.
#[derive(Clone, Debug, PartialEq)]
pub struct QubitHamiltonian {
    pub e_const: f64,
    pub ops: PauliSum,
}

pub fn qubit_hamiltonian(ah: &ActiveHamiltonian, spec: &EncodingSpec) -> Result<QubitHamiltonian> {
    let mut ops = encode_tapered(&active_to_fermion(ah), spec)?;
    let id = crate::pauli::PauliString::identity(ops.n_qubits());
    let c = ops.coeff(&id);
    ops.add_term(id, -c)?;
    Ok(QubitHamiltonian { e_const: c, ops })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cobyla,
    Bayes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    pub method: Method,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Defaults to 2000 for COBYLA and 22 per parameter for Bayesian search.
    #[serde(default)]
    pub max_evals: Option<usize>,
    /// Half-width of the Bayesian search box around the start point.
    #[serde(default = "default_width")]
    pub bayes_width: f64,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_width() -> f64 {
    std::f64::consts::FRAC_PI_2
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings { method: Method::Cobyla, tol: default_tol(), max_evals: None, bayes_width: default_width() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VqeConfig {
    pub optimizer: OptimizerSettings,
    pub measurement: MeasurementConfig,
}

/// One state to optimize: its circuit, sector projector and weight.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpec {
    pub label: String,
    pub weight: f64,
    pub circuit: ParamCircuit,
    pub projector: SymmetryProjector,
    pub x0: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VqeOutcome {
    pub label: String,
    /// Lowest objective value seen, equal to the minimum of the trace.
    pub energy: f64,
    pub params: Vec<f64>,
    pub rdms: RdmPair,
    /// Energy recomputed from `rdms`, when the active Hamiltonian is known.
    pub rdm_energy: Option<f64>,
    pub trace: OptResult,
    pub n_groups: usize,
    pub n_strings: usize,
}

/// Parameters from `{0, pi}^k` whose state best overlaps `reference`; zeros
/// when the circuit has more than ten parameters.
pub fn reference_start(circuit: &ParamCircuit, reference: u64) -> Result<Vec<f64>> {
    let k = circuit.n_params;
    if k > 10 {
        return Ok(vec![0.0; k]);
    }
    let target = StateVector::basis_state(circuit.n_qubits, reference);
    let mut best = (vec![0.0; k], -1.0);
    for mask in 0..1u32 << k {
        let x: Vec<f64> = (0..k).map(|i| if mask >> i & 1 == 1 { std::f64::consts::PI } else { 0.0 }).collect();
        let ov = run_circuit(circuit, &x)?.inner(&target).norm_sqr();
        if ov > best.1 + 1e-12 {
            best = (x, ov);
        }
    }
    Ok(best.0)
}

fn check_state(ham: &QubitHamiltonian, state: &StateSpec) -> Result<()> {
    let n = ham.ops.n_qubits();
    if state.circuit.n_qubits != n {
        return Err(Error::WidthMismatch(state.circuit.n_qubits, n));
    }
    if state.projector.n_qubits != n {
        return Err(Error::WidthMismatch(state.projector.n_qubits, n));
    }
    if state.x0.len() != state.circuit.n_params {
        return Err(Error::WidthMismatch(state.x0.len(), state.circuit.n_params));
    }
    Ok(())
}

/// Minimizes the (mitigated) energy of one state, then measures its RDMs at the optimum.
pub fn run_vqe(ham: &QubitHamiltonian, state: &StateSpec, observables: &[(RdmIndex, PauliSum)], n_active: usize, cfg: &VqeConfig, seed: u64) -> Result<VqeOutcome> {
    check_state(ham, state)?;
    let mcfg = &cfg.measurement;
    let mut obs_refs: Vec<&PauliSum> = vec![&ham.ops];
    obs_refs.extend(observables.iter().map(|(_, o)| o));
    let plan = MeasurementPlan::new(&obs_refs, &state.projector, mcfg.mitigation)?;
    let noise = mcfg.noise_for(&state.circuit)?;
    let exact = mcfg.is_exact();
    let mut k = 0u64;
    let mut failure: Option<Error> = None;
    let mut objective = |x: &[f64]| -> f64 {
        let eval_seed = derive_seed(seed, &format!("eval{k}"));
        k += 1;
        let r = run_circuit(&state.circuit, x).and_then(|s| {
            if exact {
                exact_expectation(&s, &ham.ops)
            } else {
                measure_plan(&s, &plan, mcfg, &noise, eval_seed)?.value(&ham.ops, &plan)
            }
        });
        match r {
            Ok(v) => ham.e_const + v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let opt = &cfg.optimizer;
    let n = state.circuit.n_params;
    let result = if n == 0 {
        let v = objective(&[]);
        Ok(OptResult { best_params: Vec::new(), best_value: v, eval_trace: vec![(Vec::new(), v)], converged: true, reason: crate::optimize::StopReason::Radius })
    } else {
        match opt.method {
            Method::Cobyla => {
                let budget = OptimizerBudget { max_evals: opt.max_evals.unwrap_or(2000), tol: opt.tol, bounds: None };
                cobyla_minimize(&mut objective, &state.x0, &budget)
            }
            Method::Bayes => {
                let bounds = state.x0.iter().map(|x| (x - opt.bayes_width, x + opt.bayes_width)).collect();
                let budget = OptimizerBudget { max_evals: opt.max_evals.unwrap_or(22 * n), tol: opt.tol, bounds: Some(bounds) };
                let bo = BayesOptions { x0: Some(state.x0.clone()), ..BayesOptions::default() };
                bayes_minimize_with(&mut objective, &budget, derive_seed(seed, "bayes"), &bo)
            }
        }
    };
    if let Some(e) = failure {
        return Err(e);
    }
    let trace = result?;
    let rdms = estimate_rdms(&state.circuit, &trace.best_params, observables, n_active, &plan, mcfg, derive_seed(seed, "rdm"))?;
    Ok(VqeOutcome {
        label: state.label.clone(),
        energy: trace.best_value,
        params: trace.best_params.clone(),
        rdm_energy: None,
        rdms,
        trace,
        n_groups: plan.groups.len(),
        n_strings: plan.n_strings(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StateSetOutcome {
    pub states: Vec<VqeOutcome>,
    #[serde(skip)]
    pub averaged: RdmPair,
    pub e_av: f64,
}

/// Runs every state (in parallel) and forms the weighted energy and RDMs.
/// Each state draws from a seed derived from its label.
pub fn run_state_set(ah: &ActiveHamiltonian, ham: &QubitHamiltonian, states: &[StateSpec], observables: &[(RdmIndex, PauliSum)], cfg: &VqeConfig, seed: u64) -> Result<StateSetOutcome> {
    if states.is_empty() {
        return Err(Error::Invalid("no states to optimize".into()));
    }
    let total: f64 = states.iter().map(|s| s.weight).sum();
    if states.iter().any(|s| !(s.weight >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("state weights must be non-negative and sum to 1 (sum {total})")));
    }
    let n_active = ah.h_eff.nrows();
    let outcomes: Vec<VqeOutcome> = states
        .par_iter()
        .map(|s| {
            let mut o = run_vqe(ham, s, observables, n_active, cfg, derive_seed(seed, &s.label))?;
            o.rdm_energy = Some(rdm_energy(ah, &o.rdms)?);
            Ok(o)
        })
        .collect::<Result<_>>()?;
    let items: Vec<(f64, &RdmPair)> = states.iter().zip(&outcomes).map(|(s, o)| (s.weight, &o.rdms)).collect();
    let averaged = RdmPair::weighted_sum(&items)?;
    let e_av = states.iter().zip(&outcomes).map(|(s, o)| s.weight * o.energy).sum();
    Ok(StateSetOutcome { states: outcomes, averaged, e_av })
}

/// Lowest eigenvalue of `ham` on the span of the projector's physical basis states.
pub fn sector_ground_energy(ham: &QubitHamiltonian, projector: &SymmetryProjector) -> Result<f64> {
    let n = ham.ops.n_qubits();
    if projector.n_qubits != n {
        return Err(Error::WidthMismatch(projector.n_qubits, n));
    }
    let basis = &projector.physical;
    let mut m = nalgebra::DMatrix::<num_complex::Complex64>::zeros(basis.len(), basis.len());
    for (j, &b) in basis.iter().enumerate() {
        let col = StateVector::basis_state(n, b).apply_pauli_sum(&ham.ops);
        for (i, &a) in basis.iter().enumerate() {
            m[(i, j)] = col[a as usize];
        }
    }
    let ev = m.symmetric_eigenvalues();
    Ok(ham.e_const + ev.iter().copied().fold(f64::INFINITY, f64::min))
}
