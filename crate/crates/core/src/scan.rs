//! TOML run manifests and geometry scans with CSV and JSON output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{ethylene_sector_circuit, AdaptOptions, EthyleneSector, ParamCircuit};
use crate::casscf::{macro_loop, CircuitChoice, MacroConfig, MacroOutcome, SaProblem, StateTemplate};
use crate::chem_io::{read_fcidump, ActiveSpace, IntegralSet};
use crate::error::{Error, Result};
use crate::fermion::{spatial_symmetry_constraints, EncodingSpec, Scheme};
use crate::measure::{MeasurementConfig, MitigationPolicy, SymmetryProjector};
use crate::sim::derive_seed;
use crate::vqe::{OptimizerSettings, VqeConfig};

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    #[serde(default)]
    pub root_seed: u64,
    pub active_space: ActiveSpaceEntry,
    #[serde(default)]
    pub encoding: EncodingEntry,
    #[serde(default)]
    pub states: Vec<StateEntry>,
    #[serde(default)]
    pub points: Vec<PointEntry>,
    #[serde(default)]
    pub measurement: MeasurementEntry,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default, rename = "macro")]
    pub macro_cfg: MacroConfig,
    #[serde(default)]
    pub adapt: AdaptEntry,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Orbital indices are 1-based as in FCIDUMP files.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActiveSpaceEntry {
    #[serde(default)]
    pub core: Vec<usize>,
    pub active: Vec<usize>,
    pub n_active_elec: usize,
    /// XOR-coded irreps of the active orbitals; read from ORBSYM when absent.
    #[serde(default)]
    pub irreps: Option<Vec<u32>>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingEntry {
    pub scheme: Scheme,
    #[serde(default = "yes")]
    pub taper: bool,
}

fn yes() -> bool {
    true
}

impl Default for EncodingEntry {
    fn default() -> Self {
        EncodingEntry { scheme: Scheme::BravyiKitaev, taper: true }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateEntry {
    pub label: String,
    pub irrep: u32,
    pub weight: f64,
    /// Occupied active orbitals, 1-based within the active space.
    pub reference: Reference,
    /// `adapt`, `ethylene_a_prime`, `ethylene_a_double_prime` or a circuit file.
    pub circuit: String,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointEntry {
    pub label: String,
    pub fcidump: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementEntry {
    #[serde(default)]
    pub shots: u64,
    #[serde(default)]
    pub noise: NoiseKind,
    #[serde(default = "default_depol")]
    pub depol_p: f64,
    #[serde(default)]
    pub readout_flip: f64,
    #[serde(default)]
    pub unfold_readout: bool,
    #[serde(default = "default_mitigation")]
    pub mitigation: MitigationPolicy,
}

fn default_depol() -> f64 {
    0.01
}

fn default_mitigation() -> MitigationPolicy {
    MitigationPolicy::None
}

impl Default for MeasurementEntry {
    fn default() -> Self {
        MeasurementEntry { shots: 0, noise: NoiseKind::Off, depol_p: default_depol(), readout_flip: 0.0, unfold_readout: false, mitigation: default_mitigation() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    Off,
    Depol,
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptEntry {
    #[serde(default = "default_eps_grad")]
    pub eps_grad: f64,
    #[serde(default = "default_eps_energy")]
    pub eps_energy: f64,
    #[serde(default = "default_max_ops")]
    pub max_ops: usize,
}

fn default_eps_grad() -> f64 {
    AdaptOptions::default().eps_grad
}

fn default_eps_energy() -> f64 {
    AdaptOptions::default().eps_energy
}

fn default_max_ops() -> usize {
    AdaptOptions::default().max_ops
}

impl Default for AdaptEntry {
    fn default() -> Self {
        let d = AdaptOptions::default();
        AdaptEntry { eps_grad: d.eps_grad, eps_energy: d.eps_energy, max_ops: d.max_ops }
    }
}

/// Command-line overrides applied on top of a manifest.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub noise: Option<NoiseKind>,
    pub mitigation: Option<MitigationPolicy>,
    pub shots: Option<u64>,
    pub orbital_optimization: Option<bool>,
}

impl Manifest {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Manifest> {
        let mut m: Manifest = toml::from_str(text).map_err(|e| Error::Parse(format!("manifest: {e}")))?;
        m.base_dir = base_dir.to_path_buf();
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
        Manifest::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.is_empty() && !self.points.is_empty() {
            return Err(Error::Invalid("manifest lists points but no states".into()));
        }
        let total: f64 = self.states.iter().map(|s| s.weight).sum();
        if !self.states.is_empty() && (self.states.iter().any(|s| !(s.weight >= 0.0)) || (total - 1.0).abs() > 1e-9) {
            return Err(Error::Invalid(format!("state weights must be non-negative and sum to 1 (sum {total})")));
        }
        let mut labels: Vec<&str> = self.states.iter().map(|s| s.label.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != self.states.len() {
            return Err(Error::Invalid("state labels repeat".into()));
        }
        let mut points: Vec<&str> = self.points.iter().map(|p| p.label.as_str()).collect();
        points.sort_unstable();
        points.dedup();
        if points.len() != self.points.len() {
            return Err(Error::Invalid("point labels repeat".into()));
        }
        let na = self.active_space.active.len();
        for s in &self.states {
            for &o in s.reference.alpha.iter().chain(&s.reference.beta) {
                if o == 0 || o > na {
                    return Err(Error::IndexOutOfRange { what: "active orbitals (1-based)", index: o, limit: na });
                }
            }
            if s.reference.alpha.len() + s.reference.beta.len() != self.active_space.n_active_elec {
                return Err(Error::Invalid(format!("reference of state {} does not hold {} electrons", s.label, self.active_space.n_active_elec)));
            }
        }
        if let Some(ir) = &self.active_space.irreps {
            if ir.len() != na {
                return Err(Error::WidthMismatch(ir.len(), na));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn active_space(&self) -> Result<ActiveSpace> {
        let zero = |v: &[usize]| -> Result<Vec<usize>> {
            v.iter().map(|&i| i.checked_sub(1).ok_or_else(|| Error::Invalid("orbital indices are 1-based".into()))).collect()
        };
        Ok(ActiveSpace { core: zero(&self.active_space.core)?, active: zero(&self.active_space.active)?, n_active_elec: self.active_space.n_active_elec })
    }

    pub fn measurement_config(&self, ov: &Overrides) -> MeasurementConfig {
        let m = &self.measurement;
        let noise = ov.noise.unwrap_or(m.noise);
        let (depol_p, readout_flip) = match noise {
            NoiseKind::Off => (0.0, 0.0),
            NoiseKind::Depol => (m.depol_p, m.readout_flip),
        };
        MeasurementConfig {
            shots: ov.shots.unwrap_or(m.shots),
            depol_p,
            n_layers: None,
            readout_flip,
            unfold_readout: m.unfold_readout,
            mitigation: ov.mitigation.unwrap_or(m.mitigation),
        }
    }

    pub fn seed(&self, ov: &Overrides) -> u64 {
        ov.seed.unwrap_or(self.root_seed)
    }

    fn occupation(&self, r: &Reference) -> u64 {
        let na = self.active_space.active.len();
        r.alpha.iter().map(|&o| 1u64 << (o - 1)).chain(r.beta.iter().map(|&o| 1u64 << (na + o - 1))).fold(0, |a, b| a | b)
    }

    fn irreps(&self, ints: &IntegralSet, cas: &ActiveSpace) -> Result<Vec<u32>> {
        if let Some(ir) = &self.active_space.irreps {
            return Ok(ir.clone());
        }
        let sym = ints.orbsym.as_ref().ok_or_else(|| Error::Invalid("no irreps in manifest and no ORBSYM in FCIDUMP".into()))?;
        cas.active.iter().map(|&t| sym[t].checked_sub(1).ok_or_else(|| Error::Parse("ORBSYM labels start at 1".into()))).collect()
    }

    fn circuit(&self, name: &str) -> Result<CircuitChoice> {
        let a = &self.adapt;
        Ok(match name {
            "adapt" => CircuitChoice::Adapt(AdaptOptions { eps_grad: a.eps_grad, eps_energy: a.eps_energy, max_ops: a.max_ops }),
            "ethylene_a_prime" => CircuitChoice::Fixed(ethylene_sector_circuit(EthyleneSector::APrime)),
            "ethylene_a_double_prime" => CircuitChoice::Fixed(ethylene_sector_circuit(EthyleneSector::ADoublePrime)),
            file => {
                let path = self.resolve(Path::new(file));
                let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
                CircuitChoice::Fixed(ParamCircuit::from_text(&text)?)
            }
        })
    }

    /// The encoding, sector projectors and circuits for one set of integrals.
    pub fn problem(&self, ints: &IntegralSet, ov: &Overrides) -> Result<SaProblem> {
        let cas = self.active_space()?;
        cas.validate(ints.n_orb)?;
        let na = cas.n_active();
        let occ0 = self.occupation(&self.states[0].reference);
        let spec = if self.encoding.taper {
            EncodingSpec::with_number_parity_taper(self.encoding.scheme, na, occ0)?
        } else {
            EncodingSpec::new(self.encoding.scheme, 2 * na)
        };
        let irreps = self.irreps(ints, &cas)?;
        let n_q = spec.n_qubits_tapered();
        let mut states = Vec::new();
        for s in &self.states {
            let occ = self.occupation(&s.reference);
            if (occ.count_ones() + occ0.count_ones()) % 2 == 1 || ((occ & ((1 << na) - 1)).count_ones() + (occ0 & ((1 << na) - 1)).count_ones()) % 2 == 1 {
                return Err(Error::Invalid(format!("state {} lies outside the tapered number-parity sector", s.label)));
            }
            let constraints = spatial_symmetry_constraints(&spec, &irreps, s.irrep)?;
            let projector = SymmetryProjector::from_constraints(s.label.clone(), n_q, constraints)?;
            let reference = spec.tapered_occupation(occ);
            if !projector.is_physical(reference) {
                return Err(Error::Invalid(format!("reference of state {} is not in irrep {}", s.label, s.irrep)));
            }
            states.push(StateTemplate { label: s.label.clone(), weight: s.weight, projector, reference, circuit: self.circuit(&s.circuit)?, x0: s.x0.clone() });
        }
        let mut macro_cfg = self.macro_cfg;
        if let Some(o) = ov.orbital_optimization {
            macro_cfg.orbital_optimization = o;
        }
        Ok(SaProblem { cas, spec, states, vqe: VqeConfig { optimizer: self.optimizer.clone(), measurement: self.measurement_config(ov) }, macro_cfg })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointResult {
    pub label: String,
    pub energies: Vec<f64>,
    pub e_av: f64,
    pub converged: bool,
    pub iters: usize,
    pub outcome: MacroOutcome,
}

pub fn run_point(manifest: &Manifest, point: &PointEntry, ov: &Overrides) -> Result<PointResult> {
    let ints = read_fcidump(&manifest.resolve(&point.fcidump))?;
    let problem = manifest.problem(&ints, ov)?;
    let outcome = macro_loop(&ints, &problem, derive_seed(manifest.seed(ov), &point.label))?;
    Ok(PointResult {
        label: point.label.clone(),
        energies: outcome.last.states.iter().map(|s| s.energy).collect(),
        e_av: outcome.last.e_av,
        converged: outcome.converged,
        iters: outcome.iterations.len(),
        outcome,
    })
}

/// Runs every point; points are independent and run in parallel.
pub fn run_scan(manifest: &Manifest, ov: &Overrides) -> Vec<(String, Result<PointResult>)> {
    manifest.points.par_iter().map(|p| (p.label.clone(), run_point(manifest, p, ov))).collect()
}

/// `label,E0,E1,...,E_av,converged,iters`; failed points get `NaN` energies.
/// At least two energy columns are written.
pub fn scan_csv(n_states: usize, results: &[(String, Result<PointResult>)]) -> String {
    let n_states = n_states.max(2);
    let mut out = String::from("label");
    for i in 0..n_states {
        let _ = write!(out, ",E{i}");
    }
    out.push_str(",E_av,converged,iters\n");
    for (label, r) in results {
        out.push_str(label);
        match r {
            Ok(p) => {
                for i in 0..n_states {
                    match p.energies.get(i) {
                        Some(e) => {
                            let _ = write!(out, ",{e}");
                        }
                        None => out.push(','),
                    }
                }
                let _ = writeln!(out, ",{},{},{}", p.e_av, p.converged, p.iters);
            }
            Err(_) => {
                for _ in 0..n_states {
                    out.push_str(",NaN");
                }
                out.push_str(",NaN,false,0\n");
            }
        }
    }
    out
}

#[derive(Serialize)]
struct TraceDoc<'a> {
    label: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<&'a PointResult>,
}

pub fn trace_json(label: &str, r: &Result<PointResult>) -> String {
    let doc = match r {
        Ok(p) => TraceDoc { label, error: None, result: Some(p) },
        Err(e) => TraceDoc { label, error: Some(e.to_string()), result: None },
    };
    serde_json::to_string_pretty(&doc).expect("trace serializes")
}

/// Writes `<out>/<name>.csv` and `<out>/<name>/<point>.json`.
pub fn write_outputs(out: &Path, manifest: &Manifest, results: &[(String, Result<PointResult>)]) -> Result<()> {
    let io = |p: &Path, e: std::io::Error| Error::Io { path: p.display().to_string(), source: e };
    let dir = out.join(&manifest.name);
    std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
    let csv = out.join(format!("{}.csv", manifest.name));
    std::fs::write(&csv, scan_csv(manifest.states.len(), results)).map_err(|e| io(&csv, e))?;
    for (label, r) in results {
        let path = dir.join(format!("{label}.json"));
        std::fs::write(&path, trace_json(label, r)).map_err(|e| io(&path, e))?;
    }
    Ok(())
}

/// Groups and measured strings per state for one set of integrals.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupReport {
    pub state: String,
    pub n_strings: usize,
    pub groups: Vec<Vec<String>>,
}

pub fn group_report(manifest: &Manifest, point: &PointEntry, ov: &Overrides) -> Result<Vec<GroupReport>> {
    let ints = read_fcidump(&manifest.resolve(&point.fcidump))?;
    let problem = manifest.problem(&ints, ov)?;
    let ah = crate::chem_io::build_active_hamiltonian(&ints, &problem.cas)?;
    let ham = crate::vqe::qubit_hamiltonian(&ah, &problem.spec)?;
    let policy = problem.vqe.measurement.mitigation;
    let rdm_obs = crate::fermion::encode_rdm_observables(&problem.spec, problem.cas.n_active())?;
    let mut obs: Vec<&crate::pauli::PauliSum> = vec![&ham.ops];
    obs.extend(rdm_obs.iter().map(|(_, o)| o));
    problem
        .states
        .iter()
        .map(|s| {
            let plan = crate::measure::MeasurementPlan::new(&obs, &s.projector, policy)?;
            Ok(GroupReport {
                state: s.label.clone(),
                n_strings: plan.n_strings(),
                groups: plan.groups.iter().map(|g| g.members.iter().map(|p| p.to_string()).collect()).collect(),
            })
        })
        .collect()
}
