//! State-averaged orbital optimization around per-state VQE solutions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ansatz::{adapt_build, uccsd_qubit_pool, AdaptOptions, AdaptStep, ParamCircuit};
use crate::chem_io::{build_active_hamiltonian, ActiveHamiltonian, ActiveSpace, Eri, IntegralSet};
use crate::error::{Error, Result};
use crate::fermion::{encode_rdm_observables, EncodingSpec};
use crate::measure::SymmetryProjector;
use crate::rdm::{rdm_energy, RdmPair};
use crate::sim::derive_seed;
use crate::vqe::{qubit_hamiltonian, reference_start, run_state_set, StateSetOutcome, StateSpec, VqeConfig};

/// Antisymmetric generator `kappa`; orbitals rotate as `C <- C exp(-kappa)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitalRotation {
    pub kappa: DMatrix<f64>,
}

impl OrbitalRotation {
    pub fn new(kappa: DMatrix<f64>) -> Result<OrbitalRotation> {
        if !kappa.is_square() {
            return Err(Error::WidthMismatch(kappa.nrows(), kappa.ncols()));
        }
        let asym = (&kappa + kappa.transpose()).amax();
        if asym > 1e-12 {
            return Err(Error::Invalid(format!("rotation generator is not antisymmetric (deviation {asym:e})")));
        }
        Ok(OrbitalRotation { kappa })
    }

    pub fn unitary(&self) -> DMatrix<f64> {
        (-&self.kappa).exp()
    }
}

/// Integrals in the rotated basis: `h' = U^T h U` and the four-index transform of `v`.
pub fn rotate_integrals(ints: &IntegralSet, rot: &OrbitalRotation) -> Result<IntegralSet> {
    if rot.kappa.nrows() != ints.n_orb {
        return Err(Error::WidthMismatch(rot.kappa.nrows(), ints.n_orb));
    }
    let u = rot.unitary();
    Ok(IntegralSet { h: u.transpose() * &ints.h * &u, v: ints.v.transform(&u), ..ints.clone() })
}

fn occupied_columns(c: &DMatrix<f64>, cas: &ActiveSpace) -> DMatrix<f64> {
    let idx: Vec<usize> = cas.core.iter().chain(&cas.active).copied().collect();
    c.select_columns(&idx)
}

/// Active Hamiltonian for the orbitals `c` (columns in the base basis).
pub fn active_hamiltonian_at(base: &IntegralSet, c: &DMatrix<f64>, cas: &ActiveSpace) -> Result<ActiveHamiltonian> {
    cas.validate(base.n_orb)?;
    let occ = occupied_columns(c, cas);
    let m = occ.ncols();
    let v = Eri::from_vec(m, base.v.transform_mixed([&occ, &occ, &occ, &occ]))?;
    let ints = IntegralSet { n_orb: m, n_elec: base.n_elec, ms2: base.ms2, e_nuc: base.e_nuc, h: occ.transpose() * &base.h * &occ, v, orbsym: None };
    let nc = cas.core.len();
    let local = ActiveSpace { core: (0..nc).collect(), active: (nc..m).collect(), n_active_elec: cas.n_active_elec };
    build_active_hamiltonian(&ints, &local)
}

/// Energy for fixed RDMs with orbitals `c`.
pub fn state_average_energy(base: &IntegralSet, c: &DMatrix<f64>, cas: &ActiveSpace, rdm: &RdmPair) -> Result<f64> {
    rdm_energy(&active_hamiltonian_at(base, c, cas)?, rdm)
}

/// Non-redundant rotation pairs `(p, q)`: active-core, virtual-core and
/// virtual-active, restricted to equal irreps when symmetry labels exist.
pub fn rotation_pairs(n_orb: usize, cas: &ActiveSpace, orbsym: Option<&[u32]>) -> Vec<(usize, usize)> {
    let virt = cas.virtuals(n_orb);
    let mut pairs = Vec::new();
    let blocks: [(&[usize], &[usize]); 3] = [(&cas.active, &cas.core), (&virt, &cas.core), (&virt, &cas.active)];
    for (outer, inner) in blocks {
        for &p in outer {
            for &q in inner {
                if orbsym.is_none_or(|s| s[p] == s[q]) {
                    pairs.push((p, q));
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Generalized Fock matrix `F_pq = sum_r D_pr h_qr + sum_rst d_prst (qr|st)` for the orbitals `c`.
pub fn generalized_fock(base: &IntegralSet, c: &DMatrix<f64>, cas: &ActiveSpace, rdm: &RdmPair) -> Result<DMatrix<f64>> {
    cas.validate(base.n_orb)?;
    let n = base.n_orb;
    let na = cas.n_active();
    if rdm.n != na {
        return Err(Error::WidthMismatch(rdm.n, na));
    }
    let occ = occupied_columns(c, cas);
    let m = occ.ncols();
    let nc = cas.core.len();
    let h = c.transpose() * &base.h * c;
    // j[p][q][i][j] = (pq|ij), k[p][i][q][j] = (pi|qj) with i, j occupied.
    let j = base.v.transform_mixed([c, c, &occ, &occ]);
    let k = base.v.transform_mixed([c, &occ, c, &occ]);
    let jx = |p: usize, q: usize, a: usize, b: usize| j[((p * n + q) * m + a) * m + b];
    let kx = |p: usize, a: usize, q: usize, b: usize| k[((p * m + a) * n + q) * m + b];
    let mut fi = h.clone();
    let mut fa = DMatrix::zeros(n, n);
    for p in 0..n {
        for q in 0..n {
            for i in 0..nc {
                fi[(p, q)] += 2.0 * jx(p, q, i, i) - kx(p, i, q, i);
            }
            let mut acc = 0.0;
            for t in 0..na {
                for u in 0..na {
                    let g = rdm.one[(t, u)];
                    if g != 0.0 {
                        acc += g * (jx(p, q, nc + t, nc + u) - 0.5 * kx(p, nc + t, q, nc + u));
                    }
                }
            }
            fa[(p, q)] = acc;
        }
    }
    let mut f = DMatrix::zeros(n, n);
    for &im in &cas.core {
        for q in 0..n {
            f[(im, q)] = 2.0 * (fi[(q, im)] + fa[(q, im)]);
        }
    }
    for (t, &tm) in cas.active.iter().enumerate() {
        for q in 0..n {
            let mut acc = 0.0;
            for (u, &um) in cas.active.iter().enumerate() {
                acc += rdm.one[(t, u)] * fi[(q, um)];
                for v in 0..na {
                    for w in 0..na {
                        acc += rdm.two(t, u, v, w) * jx(q, um, nc + v, nc + w);
                    }
                }
            }
            f[(tm, q)] = acc;
        }
    }
    Ok(f)
}

/// `dE / d kappa_pq = 2 (F_pq - F_qp)` over `pairs`.
pub fn orbital_gradient(base: &IntegralSet, c: &DMatrix<f64>, cas: &ActiveSpace, rdm: &RdmPair, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    let f = generalized_fock(base, c, cas, rdm)?;
    Ok(pairs.iter().map(|&(p, q)| 2.0 * (f[(p, q)] - f[(q, p)])).collect())
}

fn kappa_from(n: usize, pairs: &[(usize, usize)], x: &[f64]) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(n, n);
    for (&(p, q), &v) in pairs.iter().zip(x) {
        k[(p, q)] = v;
        k[(q, p)] = -v;
    }
    k
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub history: usize,
    pub max_step: f64,
}

impl Default for InnerOptions {
    fn default() -> Self {
        InnerOptions { grad_tol: 1e-6, max_iter: 100, history: 8, max_step: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerOutcome {
    pub c: DMatrix<f64>,
    pub energy: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// L-BFGS with Armijo backtracking over the rotation parameters, with the RDMs held fixed.
pub fn optimize_orbitals(base: &IntegralSet, c0: &DMatrix<f64>, cas: &ActiveSpace, rdm: &RdmPair, pairs: &[(usize, usize)], opts: &InnerOptions) -> Result<InnerOutcome> {
    let n = base.n_orb;
    let mut c = c0.clone();
    let mut e = state_average_energy(base, &c, cas, rdm)?;
    let mut g = orbital_gradient(base, &c, cas, rdm, pairs)?;
    let mut hist: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut it = 0;
    while it < opts.max_iter && norm(&g) > opts.grad_tol {
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y) in hist.iter().rev() {
            let a = dot(s, &q) / dot(y, s);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y)) = hist.last() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = dot(y, &q) / dot(y, s);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        if dot(&d, &g) >= 0.0 {
            hist.clear();
            d = g.iter().map(|v| -v).collect();
        }
        let dn = norm(&d);
        if dn > opts.max_step {
            d.iter_mut().for_each(|v| *v *= opts.max_step / dn);
        }
        let slope = dot(&g, &d);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=30 {
            let step: Vec<f64> = d.iter().map(|v| alpha * v).collect();
            let ct = &c * OrbitalRotation { kappa: kappa_from(n, pairs, &step) }.unitary();
            let et = state_average_energy(base, &ct, cas, rdm)?;
            if et <= e + 1e-4 * alpha * slope {
                accepted = Some((step, ct, et));
                break;
            }
            alpha *= 0.5;
        }
        let Some((s, ct, et)) = accepted else { break };
        let gn = orbital_gradient(base, &ct, cas, rdm, pairs)?;
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-14 {
            hist.push((s, y));
            if hist.len() > opts.history {
                hist.remove(0);
            }
        }
        c = ct;
        e = et;
        g = gn;
        it += 1;
    }
    Ok(InnerOutcome { c, energy: e, grad_norm: norm(&g), iterations: it })
}

/// How a state's circuit is obtained.
#[derive(Clone, Debug, PartialEq)]
pub enum CircuitChoice {
    /// Grown by qubit-ADAPT at the first macro iteration, then kept fixed.
    Adapt(AdaptOptions),
    Fixed(ParamCircuit),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateTemplate {
    pub label: String,
    pub weight: f64,
    pub projector: SymmetryProjector,
    /// Tapered reference basis state.
    pub reference: u64,
    pub circuit: CircuitChoice,
    pub x0: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroConfig {
    #[serde(default)]
    pub orbital_optimization: bool,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
}

fn default_threshold() -> f64 {
    1e-5
}

fn default_max_iter() -> usize {
    20
}

fn default_grad_tol() -> f64 {
    1e-4
}

impl Default for MacroConfig {
    fn default() -> Self {
        MacroConfig { orbital_optimization: false, threshold: default_threshold(), max_iter: default_max_iter(), grad_tol: default_grad_tol() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MacroRecord {
    pub iteration: usize,
    pub e_av: f64,
    pub energies: Vec<f64>,
    pub delta: Option<f64>,
    pub grad_norm: Option<f64>,
    pub inner_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdaptRecord {
    pub label: String,
    pub reference_energy: f64,
    pub operators: Vec<String>,
    pub gradients: Vec<f64>,
    pub energies: Vec<f64>,
    pub stop_reason: String,
}

impl AdaptRecord {
    fn new(label: &str, reference_energy: f64, steps: &[AdaptStep], stop_reason: &str) -> AdaptRecord {
        AdaptRecord {
            label: label.to_string(),
            reference_energy,
            operators: steps.iter().map(|s| s.operator.to_string()).collect(),
            gradients: steps.iter().map(|s| s.gradient).collect(),
            energies: steps.iter().map(|s| s.energy).collect(),
            stop_reason: stop_reason.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MacroOutcome {
    pub iterations: Vec<MacroRecord>,
    /// Macro loop settled and every final state optimization converged.
    pub converged: bool,
    pub last: StateSetOutcome,
    pub adapt: Vec<AdaptRecord>,
    pub circuits: Vec<String>,
    #[serde(skip)]
    pub orbitals: DMatrix<f64>,
}

/// Everything one geometry needs.
#[derive(Clone, Debug)]
pub struct SaProblem {
    pub cas: ActiveSpace,
    pub spec: EncodingSpec,
    pub states: Vec<StateTemplate>,
    pub vqe: VqeConfig,
    pub macro_cfg: MacroConfig,
}

fn resolve_states(problem: &SaProblem, ah: &ActiveHamiltonian) -> Result<(Vec<StateSpec>, Vec<AdaptRecord>)> {
    let ham = qubit_hamiltonian(ah, &problem.spec)?;
    let n_q = problem.spec.n_qubits_tapered();
    let mut specs = Vec::new();
    let mut records = Vec::new();
    for t in &problem.states {
        let (circuit, x0) = match &t.circuit {
            CircuitChoice::Fixed(c) => {
                let x0 = match &t.x0 {
                    Some(x) => x.clone(),
                    None => reference_start(c, t.reference)?,
                };
                (c.clone(), x0)
            }
            CircuitChoice::Adapt(opts) => {
                let syms: Vec<_> = t.projector.constraints.iter().map(|(z, _)| *z).collect();
                let pool = uccsd_qubit_pool(problem.cas.n_active_elec, n_q, &problem.spec)?.restrict_commuting(&syms);
                let out = adapt_build(&ham.ops, &pool, t.reference, opts, &t.label)?;
                records.push(AdaptRecord::new(&t.label, out.reference_energy + ham.e_const, &out.steps, &out.stop_reason));
                let x0 = t.x0.clone().unwrap_or(out.params);
                (out.circuit, x0)
            }
        };
        specs.push(StateSpec { label: t.label.clone(), weight: t.weight, circuit, projector: t.projector.clone(), x0 });
    }
    Ok((specs, records))
}

/// Alternates per-state VQE with orbital optimization until the averaged
/// energy settles (and, without noise, the orbital gradient vanishes).
pub fn macro_loop(base: &IntegralSet, problem: &SaProblem, seed: u64) -> Result<MacroOutcome> {
    let cas = &problem.cas;
    cas.validate(base.n_orb)?;
    let n_active = cas.n_active();
    let observables = encode_rdm_observables(&problem.spec, n_active)?;
    let pairs = rotation_pairs(base.n_orb, cas, base.orbsym.as_deref());
    let mcfg = &problem.macro_cfg;
    let noiseless = problem.vqe.measurement.is_exact();
    let mut c = DMatrix::identity(base.n_orb, base.n_orb);
    let mut specs: Option<Vec<StateSpec>> = None;
    let mut adapt = Vec::new();
    let mut records: Vec<MacroRecord> = Vec::new();
    let max_iter = if mcfg.orbital_optimization { mcfg.max_iter.max(1) } else { 1 };
    let mut settled = false;
    let mut last = None;
    for it in 0..max_iter {
        let ah = active_hamiltonian_at(base, &c, cas)?;
        let ham = qubit_hamiltonian(&ah, &problem.spec)?;
        if specs.is_none() {
            let (s, a) = resolve_states(problem, &ah)?;
            specs = Some(s);
            adapt = a;
        }
        let cur = specs.as_mut().expect("states resolved");
        let out = run_state_set(&ah, &ham, cur, &observables, &problem.vqe, derive_seed(seed, &format!("macro{it}")))?;
        for (s, o) in cur.iter_mut().zip(&out.states) {
            s.x0 = o.params.clone();
        }
        let delta = records.last().map(|r| out.e_av - r.e_av);
        let mut rec = MacroRecord { iteration: it, e_av: out.e_av, energies: out.states.iter().map(|s| s.energy).collect(), delta, grad_norm: None, inner_iterations: 0 };
        if !mcfg.orbital_optimization {
            records.push(rec);
            settled = true;
            last = Some(out);
            break;
        }
        let g = orbital_gradient(base, &c, cas, &out.averaged, &pairs)?;
        let gn = norm(&g);
        rec.grad_norm = Some(gn);
        if delta.is_some_and(|d| d.abs() < mcfg.threshold) && (!noiseless || gn < mcfg.grad_tol) {
            records.push(rec);
            settled = true;
            last = Some(out);
            break;
        }
        if it + 1 < max_iter {
            let inner = optimize_orbitals(base, &c, cas, &out.averaged, &pairs, &InnerOptions::default())?;
            rec.inner_iterations = inner.iterations;
            c = inner.c;
        }
        records.push(rec);
        last = Some(out);
    }
    let last = last.expect("at least one macro iteration");
    let converged = settled && last.states.iter().all(|s| s.trace.converged);
    let circuits = specs.unwrap_or_default().iter().map(|s| s.circuit.to_text()).collect();
    Ok(MacroOutcome { iterations: records, converged, last, adapt, circuits, orbitals: c })
}
