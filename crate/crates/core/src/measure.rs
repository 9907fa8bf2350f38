//! Shot-based estimation of Pauli expectations and RDMs: qubit-wise commuting
//! grouping, symmetry projection (EM1), depolarization recycling (EM2) and
//! readout unfolding.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::ParamCircuit;
use crate::error::{Error, Result};
use crate::fermion::RdmIndex;
use crate::pauli::{mul_unchecked, qwc_unchecked, Pauli, PauliString, PauliSum};
use crate::rdm::RdmPair;
use crate::sim::{derive_seed, exact_expectation, measured_probabilities, run_circuit, sample_multinomial, ConfusionMatrix, Gate, Histogram, NoiseModel, StateVector};

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementGroup {
    pub members: Vec<PauliString>,
    pub basis_rotations: Vec<Gate>,
}

impl MeasurementGroup {
    pub fn new(members: Vec<PauliString>) -> Result<MeasurementGroup> {
        for (i, a) in members.iter().enumerate() {
            for b in &members[i + 1..] {
                if !qwc_unchecked(a, b) {
                    return Err(Error::Invalid(format!("{a} and {b} do not commute qubit-wise")));
                }
            }
        }
        let basis_rotations = basis_rotations(&members);
        Ok(MeasurementGroup { members, basis_rotations })
    }

    pub fn is_diagonal(&self) -> bool {
        self.members.iter().all(|p| p.is_diagonal())
    }
}

/// Single-qubit gates rotating every (mutually QWC) member to Z type.
pub fn basis_rotations(members: &[PauliString]) -> Vec<Gate> {
    let Some(first) = members.first() else { return Vec::new() };
    let mut gates = Vec::new();
    for q in 0..first.n_qubits() {
        match members.iter().map(|p| p.letter(q)).find(|l| *l != Pauli::I) {
            Some(Pauli::X) => gates.push(Gate::H(q)),
            Some(Pauli::Y) => {
                gates.push(Gate::Rz(q, crate::sim::Angle::Fixed(-FRAC_PI_2)));
                gates.push(Gate::H(q));
            }
            _ => {}
        }
    }
    gates
}

/// Greedy coloring of the non-QWC graph, largest degree first with
/// lexicographic tie-break; `Some(seed)` shuffles the node order instead.
pub fn build_qwc_groups(terms: &[PauliString], seed: Option<u64>) -> Result<Vec<MeasurementGroup>> {
    let Some(first) = terms.first() else { return Ok(Vec::new()) };
    let n = first.n_qubits();
    let nodes: Vec<PauliString> = terms.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if let Some(p) = nodes.iter().find(|p| p.n_qubits() != n) {
        return Err(Error::WidthMismatch(p.n_qubits(), n));
    }
    let degree: Vec<usize> = nodes.iter().map(|a| nodes.iter().filter(|b| !qwc_unchecked(a, b)).count()).collect();
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    match seed {
        Some(s) => order.shuffle(&mut ChaCha8Rng::seed_from_u64(s)),
        None => order.sort_by(|&a, &b| degree[b].cmp(&degree[a]).then(nodes[a].cmp(&nodes[b]))),
    }
    let mut colors: Vec<Vec<PauliString>> = Vec::new();
    for i in order {
        let p = nodes[i];
        match colors.iter_mut().find(|c| c.iter().all(|q| qwc_unchecked(&p, q))) {
            Some(c) => c.push(p),
            None => colors.push(vec![p]),
        }
    }
    colors
        .into_iter()
        .map(|mut c| {
            c.sort();
            MeasurementGroup::new(c)
        })
        .collect()
}

/// Projector onto a symmetry sector given as Z-type constraints `Z_S = s`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetryProjector {
    pub label: String,
    pub n_qubits: usize,
    pub constraints: Vec<(PauliString, i8)>,
    pub projector: PauliSum,
    pub physical: Vec<u64>,
}

impl SymmetryProjector {
    pub fn from_constraints(label: impl Into<String>, n_qubits: usize, constraints: Vec<(PauliString, i8)>) -> Result<SymmetryProjector> {
        let mut projector = PauliSum::identity(n_qubits, 1.0);
        for (z, s) in &constraints {
            if z.n_qubits() != n_qubits {
                return Err(Error::WidthMismatch(z.n_qubits(), n_qubits));
            }
            if !z.is_diagonal() || z.is_identity() || s.abs() != 1 {
                return Err(Error::Invalid(format!("constraint {z} = {s} is not a Z-type parity")));
            }
            let factor = PauliSum::from_terms(n_qubits, [(PauliString::identity(n_qubits), 0.5), (*z, 0.5 * *s as f64)])?;
            projector = projector.mul(&factor)?;
        }
        let physical: Vec<u64> = (0..1u64 << n_qubits).filter(|&b| satisfies(&constraints, b)).collect();
        if physical.is_empty() {
            return Err(Error::Invalid("symmetry constraints admit no basis state".into()));
        }
        Ok(SymmetryProjector { label: label.into(), n_qubits, constraints, projector, physical })
    }

    /// The trivial projector (every state physical).
    pub fn trivial(label: impl Into<String>, n_qubits: usize) -> SymmetryProjector {
        SymmetryProjector::from_constraints(label, n_qubits, Vec::new()).expect("identity projector")
    }

    pub fn is_physical(&self, b: u64) -> bool {
        satisfies(&self.constraints, b)
    }

    /// Whether `p` can have a nonzero expectation in the sector.
    pub fn preserves(&self, p: &PauliString) -> bool {
        self.constraints.iter().all(|(z, _)| p.commutes(z))
    }

    pub fn n_nonphysical(&self) -> usize {
        (1usize << self.n_qubits) - self.physical.len()
    }
}

fn satisfies(constraints: &[(PauliString, i8)], b: u64) -> bool {
    constraints.iter().all(|(z, s)| {
        let ev = if (z.z_mask() & b).count_ones() % 2 == 0 { 1 } else { -1 };
        ev == *s
    })
}

fn lookup(expectations: &BTreeMap<PauliString, f64>, p: &PauliString) -> Result<f64> {
    if p.is_identity() {
        return Ok(1.0);
    }
    expectations.get(p).copied().ok_or_else(|| Error::Mitigation(format!("no estimate for {p}")))
}

/// `tr(rho O P) / tr(rho P)` from Pauli expectations.
pub fn em1_project(expectations: &BTreeMap<PauliString, f64>, projector: &SymmetryProjector, obs: &PauliSum) -> Result<f64> {
    if obs.n_qubits() != projector.n_qubits {
        return Err(Error::WidthMismatch(obs.n_qubits(), projector.n_qubits));
    }
    let mut den = 0.0;
    for (p, c) in projector.projector.iter() {
        den += c * lookup(expectations, p)?;
    }
    if den.abs() < 1e-6 {
        return Err(Error::Mitigation(format!("projector expectation {den:e} is too small for symmetry projection")));
    }
    let mut num = 0.0;
    for (o, co) in obs.iter() {
        for (p, cp) in projector.projector.iter() {
            let (ph, q) = mul_unchecked(o, p);
            let w = ph.to_complex() * (co * cp);
            if w.re != 0.0 {
                num += w.re * lookup(expectations, &q)?;
            }
        }
    }
    Ok(num / den)
}

/// Uniform floor estimated from the nonphysical outcomes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DepolEstimate {
    pub c: f64,
    pub m: usize,
}

/// Subtracts the mean nonphysical probability from every physical outcome,
/// clips at zero and renormalizes; nonphysical entries of the output are zero.
pub fn em2_recycle(probs: &[f64], projector: &SymmetryProjector) -> Result<(Vec<f64>, DepolEstimate)> {
    if probs.len() != 1usize << projector.n_qubits {
        return Err(Error::WidthMismatch(probs.len(), 1usize << projector.n_qubits));
    }
    let m = projector.n_nonphysical();
    if m == 0 {
        return Err(Error::Mitigation("no nonphysical states, depolarization recycling is inapplicable".into()));
    }
    let c = (0..probs.len() as u64).filter(|&b| !projector.is_physical(b)).map(|b| probs[b as usize]).sum::<f64>() / m as f64;
    let mut out = vec![0.0; probs.len()];
    for &b in &projector.physical {
        out[b as usize] = (probs[b as usize] - c).max(0.0);
    }
    let total: f64 = out.iter().sum();
    if total <= 0.0 {
        return Err(Error::Mitigation("all physical probabilities clipped to zero".into()));
    }
    for v in &mut out {
        *v /= total;
    }
    Ok((out, DepolEstimate { c, m }))
}

/// Least-squares inversion of the readout map with clipping and renormalization.
pub fn readout_unfold(probs: &[f64], t: &ConfusionMatrix) -> Result<Vec<f64>> {
    if probs.len() != t.dim() {
        return Err(Error::WidthMismatch(probs.len(), t.dim()));
    }
    let svd = t.matrix().clone().svd(true, true);
    let sv = &svd.singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 0.0) || smax / smin > 1e8 {
        return Err(Error::Numerical(format!("confusion matrix is ill-conditioned (singular values {smax:e} / {smin:e})")));
    }
    let x = svd.solve(&DVector::from_column_slice(probs), 0.0).map_err(|e| Error::Numerical(e.to_string()))?;
    let mut out: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = out.iter().sum();
    if total <= 0.0 {
        return Err(Error::Numerical("unfolded distribution is empty".into()));
    }
    for v in &mut out {
        *v /= total;
    }
    Ok(out)
}

fn parity_expectation(probs: &[f64], p: &PauliString) -> f64 {
    let s = p.support();
    probs.iter().enumerate().map(|(b, pr)| if (b as u64 & s).count_ones() % 2 == 0 { *pr } else { -*pr }).sum()
}

/// Samples one histogram for the group and evaluates every member on it.
pub fn estimate_group(circuit: &ParamCircuit, params: &[f64], group: &MeasurementGroup, shots: u64, noise: &NoiseModel, seed: u64) -> Result<BTreeMap<PauliString, (f64, Histogram)>> {
    let state = run_circuit(circuit, params)?;
    let h = crate::sim::sample_counts(&state, &group.basis_rotations, shots, noise, seed)?;
    let probs = h.probabilities();
    Ok(group.members.iter().map(|p| (*p, (parity_expectation(&probs, p), h.clone()))).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MitigationPolicy {
    None,
    Em1,
    Em2,
}

/// How a sector is measured: shots per group (0 means exact probabilities),
/// the noise channel, readout unfolding and the mitigation policy.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementConfig {
    pub shots: u64,
    pub depol_p: f64,
    /// Layer count for depolarization; `None` uses the circuit depth.
    pub n_layers: Option<usize>,
    pub readout_flip: f64,
    pub unfold_readout: bool,
    pub mitigation: MitigationPolicy,
}

impl MeasurementConfig {
    pub fn exact() -> MeasurementConfig {
        MeasurementConfig { shots: 0, depol_p: 0.0, n_layers: None, readout_flip: 0.0, unfold_readout: false, mitigation: MitigationPolicy::None }
    }

    /// True when expectations can be taken straight from the statevector.
    pub fn is_exact(&self) -> bool {
        self.shots == 0 && self.depol_p == 0.0 && self.readout_flip == 0.0
    }

    pub fn noise_for(&self, circuit: &ParamCircuit) -> Result<NoiseModel> {
        let confusion = if self.readout_flip > 0.0 { Some(ConfusionMatrix::from_flip_rates(&vec![self.readout_flip; circuit.n_qubits])?) } else { None };
        let nm = NoiseModel { depol_p: self.depol_p, n_layers: self.n_layers.unwrap_or_else(|| circuit.depth()), confusion };
        nm.validate()?;
        Ok(nm)
    }
}

/// The strings measured for one sector and their grouping.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementPlan {
    pub projector: SymmetryProjector,
    pub policy: MitigationPolicy,
    pub groups: Vec<MeasurementGroup>,
    /// Group holding every diagonal string, measured in the computational basis (EM2 only).
    pub diagonal_group: Option<usize>,
    /// Strings whose sector expectation vanishes identically (odd Y count or
    /// anticommuting with a symmetry); they are never measured.
    pub zero_strings: BTreeSet<PauliString>,
}

impl MeasurementPlan {
    pub fn new(observables: &[&PauliSum], projector: &SymmetryProjector, policy: MitigationPolicy) -> Result<MeasurementPlan> {
        let n = projector.n_qubits;
        let mut wanted: BTreeSet<PauliString> = BTreeSet::new();
        let mut zero: BTreeSet<PauliString> = BTreeSet::new();
        let consider = |p: PauliString, wanted: &mut BTreeSet<PauliString>, zero: &mut BTreeSet<PauliString>| {
            if p.is_identity() {
                return;
            }
            if p.y_count() % 2 == 1 || !projector.preserves(&p) {
                zero.insert(p);
            } else {
                wanted.insert(p);
            }
        };
        for obs in observables {
            if obs.n_qubits() != n {
                return Err(Error::WidthMismatch(obs.n_qubits(), n));
            }
            for (o, _) in obs.iter() {
                consider(*o, &mut wanted, &mut zero);
                if policy != MitigationPolicy::None && projector.preserves(o) {
                    for (p, _) in projector.projector.iter() {
                        consider(mul_unchecked(o, p).1, &mut wanted, &mut zero);
                    }
                }
            }
        }
        if policy != MitigationPolicy::None {
            for (p, _) in projector.projector.iter() {
                consider(*p, &mut wanted, &mut zero);
            }
        }
        let strings: Vec<PauliString> = wanted.into_iter().collect();
        let (groups, diagonal_group) = if policy == MitigationPolicy::Em2 {
            let (diag, off): (Vec<PauliString>, Vec<PauliString>) = strings.iter().partition(|p| p.is_diagonal());
            let mut groups = vec![MeasurementGroup::new(diag)?];
            groups.extend(build_qwc_groups(&off, None)?);
            (groups, Some(0))
        } else {
            (build_qwc_groups(&strings, None)?, None)
        };
        Ok(MeasurementPlan { projector: projector.clone(), policy, groups, diagonal_group, zero_strings: zero })
    }

    pub fn n_strings(&self) -> usize {
        self.groups.iter().map(|g| g.members.len()).sum()
    }
}

/// Raw expectations from one pass over all groups, plus the EM2 distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimates {
    pub raw: BTreeMap<PauliString, f64>,
    pub recycled: Option<Vec<f64>>,
    pub depol: Option<DepolEstimate>,
}

/// Measures every group of `plan` on `state`.
pub fn measure_plan(state: &StateVector, plan: &MeasurementPlan, cfg: &MeasurementConfig, noise: &NoiseModel, seed: u64) -> Result<Estimates> {
    let mut raw: BTreeMap<PauliString, f64> = plan.zero_strings.iter().map(|p| (*p, 0.0)).collect();
    let mut recycled = None;
    let mut depol = None;
    for (gi, g) in plan.groups.iter().enumerate() {
        let mut probs = measured_probabilities(state, &g.basis_rotations, noise)?;
        if cfg.shots > 0 {
            let counts = sample_multinomial(&probs, cfg.shots, derive_seed(seed, &format!("group{gi}")));
            probs = counts.iter().map(|&c| c as f64 / cfg.shots as f64).collect();
        }
        if cfg.unfold_readout {
            if let Some(t) = &noise.confusion {
                probs = readout_unfold(&probs, t)?;
            }
        }
        for p in &g.members {
            raw.insert(*p, parity_expectation(&probs, p));
        }
        if plan.diagonal_group == Some(gi) {
            let (r, d) = em2_recycle(&probs, &plan.projector)?;
            recycled = Some(r);
            depol = Some(d);
        }
    }
    Ok(Estimates { raw, recycled, depol })
}

impl Estimates {
    /// Mitigated expectation of `obs` under `plan`'s policy.
    pub fn value(&self, obs: &PauliSum, plan: &MeasurementPlan) -> Result<f64> {
        let sym = obs.filter(|p| plan.projector.preserves(p));
        match plan.policy {
            MitigationPolicy::None => sym.iter().map(|(p, c)| Ok(c * lookup(&self.raw, p)?)).sum(),
            MitigationPolicy::Em1 => em1_project(&self.raw, &plan.projector, &sym),
            MitigationPolicy::Em2 => {
                let probs = self.recycled.as_ref().ok_or_else(|| Error::Mitigation("EM2 needs a computational-basis group".into()))?;
                let diag = sym.filter(|p| p.is_diagonal());
                let off = sym.filter(|p| !p.is_diagonal());
                let d: f64 = diag.iter().map(|(p, c)| c * parity_expectation(probs, p)).sum();
                let o = if off.is_empty() { 0.0 } else { em1_project(&self.raw, &plan.projector, &off)? };
                Ok(d + o)
            }
        }
    }
}

/// RDMs of the prepared state from mitigated observable estimates.
pub fn estimate_rdms(circuit: &ParamCircuit, params: &[f64], observables: &[(RdmIndex, PauliSum)], n_active: usize, plan: &MeasurementPlan, cfg: &MeasurementConfig, seed: u64) -> Result<RdmPair> {
    let state = run_circuit(circuit, params)?;
    let mut values = BTreeMap::new();
    if cfg.is_exact() {
        for (idx, obs) in observables {
            values.insert(*idx, exact_expectation(&state, obs)?);
        }
    } else {
        let noise = cfg.noise_for(circuit)?;
        let est = measure_plan(&state, plan, cfg, &noise, seed)?;
        for (idx, obs) in observables {
            values.insert(*idx, est.value(obs, plan)?);
        }
    }
    Ok(RdmPair::from_elements(n_active, &values))
}

/// Dense `2^n x 2^n` matrix of a projector, for idempotency checks.
pub fn projector_matrix(p: &SymmetryProjector) -> DMatrix<f64> {
    let d = 1usize << p.n_qubits;
    DMatrix::from_fn(d, d, |i, j| if i == j && p.is_physical(i as u64) { 1.0 } else { 0.0 })
}
