use std::collections::VecDeque;

use graphdg_core::boltzmann::{metropolis_sample, AngleTerm, BondTerm, EnergyModel, McmcConfig, StericTerm};
use graphdg_core::edg::{embed_bounds, BoundsMatrix, EmbedConfig};
use graphdg_core::molgraph::{build_extended_graph, Atom, Bond, Element, MolGraph, RingSizes};
use graphdg_core::{rng_stream, Executor};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::DatasetRecord;
use crate::error::{Error, Result};

fn default_true() -> bool {
    true
}

/// One toy molecule. Exactly one of `chain`, `ring` or `atoms` (with
/// `bonds`) describes the heavy-atom skeleton; element strings are written
/// like `"CCOC"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoleculeSpec {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ring: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bonds: Vec<[usize; 2]>,
    /// Saturate every heavy atom with hydrogens up to its valence.
    #[serde(default = "default_true")]
    pub hydrogens: bool,
}

/// Harmonic toy force field, energies in kJ/mol and lengths in ångström.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForceField {
    /// `E = k (r − r₀)²` per bond.
    pub bond_k: f64,
    /// `E = k (θ − θ₀)²` per angle, θ in radians.
    pub angle_k: f64,
    /// Rest angle for acyclic centres, degrees.
    pub angle_rest: f64,
    pub steric_k: f64,
    /// Steric floors for pairs three or more bonds apart.
    pub steric_heavy: f64,
    pub steric_mixed: f64,
    pub steric_hydrogen: f64,
}

impl Default for ForceField {
    fn default() -> Self {
        Self {
            bond_k: 1500.0,
            angle_k: 300.0,
            angle_rest: 109.5,
            steric_k: 100.0,
            steric_heavy: 2.6,
            steric_mixed: 2.2,
            steric_hydrogen: 1.8,
        }
    }
}

fn default_temperature() -> f64 {
    500.0
}
fn default_conformations() -> usize {
    2000
}
fn default_burn_in() -> usize {
    10_000
}
fn default_thin() -> usize {
    50
}
fn default_step() -> f64 {
    0.05
}

/// Benchmark description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Conformations kept per molecule.
    #[serde(default = "default_conformations")]
    pub conformations: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Metropolis steps between kept conformations.
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default = "default_step")]
    pub step_size: f64,
    #[serde(default)]
    pub force_field: ForceField,
    #[serde(rename = "molecule")]
    pub molecules: Vec<MoleculeSpec>,
}

impl BenchmarkSpec {
    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        let spec: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.molecules.is_empty() {
            return Err("the spec lists no molecules".into());
        }
        if !(self.temperature > 0.0) {
            return Err("temperature must be positive".into());
        }
        if self.conformations == 0 || self.thin == 0 {
            return Err("conformations and thin must be at least 1".into());
        }
        if !(self.step_size > 0.0) {
            return Err("step_size must be positive".into());
        }
        let mut ids: Vec<&str> = self.molecules.iter().map(|m| m.id.as_str()).collect();
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(format!("duplicate molecule id {:?}", w[0]));
        }
        Ok(())
    }
}

fn parse_elements(s: &str) -> std::result::Result<Vec<Element>, String> {
    let chars: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
    let mut out = Vec::new();
    let mut k = 0;
    while k < chars.len() {
        let mut sym = String::from(chars[k]);
        if k + 1 < chars.len() && chars[k + 1].is_ascii_lowercase() {
            sym.push(chars[k + 1]);
            k += 1;
        }
        k += 1;
        out.push(Element::from_symbol(&sym).map_err(|e| e.to_string())?);
    }
    if out.is_empty() {
        return Err("empty element string".into());
    }
    Ok(out)
}

fn valence(e: Element) -> usize {
    match e {
        Element::H | Element::Li | Element::F => 1,
        Element::Be | Element::O => 2,
        Element::B | Element::N => 3,
        Element::C => 4,
        Element::He => 0,
    }
}

fn bfs_avoiding(adj: &[Vec<usize>], from: usize, to: usize, skip_node: Option<usize>, skip_edge: Option<(usize, usize)>) -> Option<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    let mut queue = VecDeque::from([from]);
    dist[from] = 0;
    while let Some(u) = queue.pop_front() {
        if u == to {
            return Some(dist[u]);
        }
        for &v in &adj[u] {
            let cut = skip_node == Some(v) || skip_edge.is_some_and(|(a, b)| (u, v) == (a, b) || (u, v) == (b, a));
            if !cut && dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    None
}

/// Builds the full graph of a spec entry, hydrogens included. Bonds carry
/// their smallest ring size when it is in 3..=9.
pub fn molecule_graph(spec: &MoleculeSpec) -> std::result::Result<MolGraph, String> {
    let (heavy, skeleton): (Vec<Element>, Vec<[usize; 2]>) = match (&spec.chain, &spec.ring, &spec.atoms) {
        (Some(c), None, None) => {
            let e = parse_elements(c)?;
            let b = (1..e.len()).map(|i| [i - 1, i]).collect();
            (e, b)
        }
        (None, Some(r), None) => {
            let e = parse_elements(r)?;
            if e.len() < 3 {
                return Err("a ring needs at least three atoms".into());
            }
            let mut b: Vec<[usize; 2]> = (1..e.len()).map(|i| [i - 1, i]).collect();
            b.push([0, e.len() - 1]);
            (e, b)
        }
        (None, None, Some(a)) => (parse_elements(a)?, spec.bonds.clone()),
        _ => return Err(format!("molecule {:?} needs exactly one of chain, ring or atoms", spec.id)),
    };
    if spec.atoms.is_none() && !spec.bonds.is_empty() {
        return Err(format!("molecule {:?}: bonds are only allowed with atoms", spec.id));
    }
    let mut elements = heavy.clone();
    let mut pairs = skeleton;
    if spec.hydrogens {
        let mut degree = vec![0usize; heavy.len()];
        for &[i, j] in &pairs {
            if i >= heavy.len() || j >= heavy.len() {
                return Err(format!("molecule {:?}: bond index out of range", spec.id));
            }
            degree[i] += 1;
            degree[j] += 1;
        }
        for (i, &e) in heavy.iter().enumerate() {
            let free = valence(e)
                .checked_sub(degree[i])
                .ok_or_else(|| format!("molecule {:?}: atom {i} ({e}) exceeds its valence", spec.id))?;
            for _ in 0..free {
                pairs.push([i, elements.len()]);
                elements.push(Element::H);
            }
        }
    }
    let n = elements.len();
    let mut adj = vec![Vec::new(); n];
    for &[i, j] in &pairs {
        if i >= n || j >= n {
            return Err(format!("molecule {:?}: bond index out of range", spec.id));
        }
        adj[i].push(j);
        adj[j].push(i);
    }
    let bonds = pairs
        .iter()
        .map(|&[i, j]| {
            let mut b = Bond::single(i, j);
            if let Some(len) = bfs_avoiding(&adj, i, j, None, Some((i, j))) {
                let size = len + 1;
                if (RingSizes::MIN as usize..=RingSizes::MAX as usize).contains(&size) {
                    b.attrs.rings = RingSizes::from_sizes(&[size as u8]).expect("size in range");
                }
            }
            b
        })
        .collect();
    MolGraph::new(elements.into_iter().map(Atom::new).collect(), bonds).map_err(|e| e.to_string())
}

fn bond_rest(a: Element, b: Element) -> f64 {
    use Element::*;
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    match (a, b) {
        (H, C) => 1.09,
        (H, N) => 1.01,
        (H, O) => 0.96,
        (H, H) => 0.74,
        (C, C) => 1.54,
        (C, N) => 1.47,
        (C, O) => 1.43,
        (C, F) => 1.35,
        (N, N) => 1.45,
        (N, O) => 1.40,
        (O, O) => 1.48,
        _ => covalent_radius(a) + covalent_radius(b),
    }
}

fn covalent_radius(e: Element) -> f64 {
    match e {
        Element::H => 0.32,
        Element::He => 0.28,
        Element::Li => 1.28,
        Element::Be => 0.96,
        Element::B => 0.84,
        Element::C => 0.76,
        Element::N => 0.71,
        Element::O => 0.66,
        Element::F => 0.57,
    }
}

/// Energy model of `g` under `ff`: one term per bond, per bonded angle and
/// per pair three or more bonds apart. Angles inside 3- to 5-rings rest at
/// the planar ring angle.
pub fn energy_model(g: &MolGraph, ff: &ForceField) -> std::result::Result<EnergyModel, String> {
    let n = g.n_atoms();
    let adj = g.adjacency();
    let elements: Vec<Element> = g.elements().collect();
    let bonds: Vec<BondTerm> = g
        .bonds()
        .iter()
        .map(|b| BondTerm { i: b.i, j: b.j, rest: bond_rest(elements[b.i], elements[b.j]), k: ff.bond_k })
        .collect();
    let mut angles = Vec::new();
    for c in 0..n {
        for (a, &i) in adj[c].iter().enumerate() {
            for &j in &adj[c][a + 1..] {
                let ring = bfs_avoiding(&adj, i, j, Some(c), None).map(|l| l + 2);
                let rest = match ring {
                    Some(s @ 3..=5) => 180.0 * (s as f64 - 2.0) / s as f64,
                    _ => ff.angle_rest,
                };
                angles.push(AngleTerm { i, center: c, j, rest: rest.to_radians(), k: ff.angle_k });
            }
        }
    }
    let mut sterics = Vec::new();
    for i in 0..n {
        let hops = g.hop_distances(i);
        for j in i + 1..n {
            if hops[j] >= 3 {
                let floor = match (elements[i].is_heavy(), elements[j].is_heavy()) {
                    (true, true) => ff.steric_heavy,
                    (false, false) => ff.steric_hydrogen,
                    _ => ff.steric_mixed,
                };
                sterics.push(StericTerm { i, j, floor, k: ff.steric_k });
            }
        }
    }
    EnergyModel::new(n, bonds, angles, sterics).map_err(|e| e.to_string())
}

/// Bounds from the rest geometry: bonds and angle pairs pinned to within
/// 0.01 Å, steric pairs bounded below by their floor.
fn idealized_bounds(m: &EnergyModel) -> Result<BoundsMatrix> {
    const SLACK: f64 = 0.01;
    let mut b = BoundsMatrix::uniform(m.n_atoms(), 0.8, 1000.0);
    for t in m.bonds() {
        b.set(t.i, t.j, t.rest - SLACK, t.rest + SLACK)?;
    }
    for t in m.angles() {
        let (ri, rj) = (pair_rest(m, t.i, t.center), pair_rest(m, t.j, t.center));
        let d = (ri * ri + rj * rj - 2.0 * ri * rj * t.rest.cos()).sqrt();
        b.set(t.i, t.j, d - SLACK, d + SLACK)?;
    }
    for t in m.sterics() {
        b.set(t.i, t.j, t.floor, 1000.0)?;
    }
    Ok(b)
}

fn pair_rest(m: &EnergyModel, i: usize, j: usize) -> f64 {
    m.bonds().iter().find(|t| (t.i, t.j) == (i, j) || (t.i, t.j) == (j, i)).map_or(1.5, |t| t.rest)
}

/// A generated molecule with the model its conformations were drawn from.
#[derive(Debug, Clone)]
pub struct SyntheticMolecule {
    pub id: String,
    pub graph: MolGraph,
    pub build_seed: u64,
    pub chain_seed: u64,
    pub energy: EnergyModel,
    pub acceptance_rate: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub temperature: f64,
    pub molecules: Vec<SyntheticMolecule>,
    pub records: Vec<DatasetRecord>,
}

/// Draws `spec.conformations` Metropolis samples for every molecule.
///
/// Molecule `m` takes its extended-graph and chain seeds from RNG stream
/// `m` of `seed`. Chains start from a distance-geometry embedding of the
/// rest geometry.
pub fn make_synthetic_benchmark(spec: &BenchmarkSpec, seed: u64, exec: &impl Executor) -> Result<SyntheticBenchmark> {
    spec.validate().map_err(Error::Usage)?;
    let results = exec.map(spec.molecules.len(), |m| generate_molecule(spec, &spec.molecules[m], seed, m));
    let mut molecules = Vec::with_capacity(results.len());
    let mut records = Vec::with_capacity(spec.molecules.len() * spec.conformations);
    for r in results {
        let (mol, recs) = r?;
        molecules.push(mol);
        records.extend(recs);
    }
    Ok(SyntheticBenchmark { temperature: spec.temperature, molecules, records })
}

fn generate_molecule(
    spec: &BenchmarkSpec,
    ms: &MoleculeSpec,
    seed: u64,
    m: usize,
) -> Result<(SyntheticMolecule, Vec<DatasetRecord>)> {
    let graph = molecule_graph(ms).map_err(|e| Error::Usage(format!("molecule {:?}: {e}", ms.id)))?;
    let energy = energy_model(&graph, &spec.force_field).map_err(Error::Domain)?;
    let mut rng = rng_stream(seed, m as u64);
    let build_seed: u64 = rng.random();
    let chain_seed: u64 = rng.random();
    let eg = build_extended_graph(&graph, build_seed)?;
    let start = embed_bounds(&eg, &idealized_bounds(&energy)?, &mut rng, &EmbedConfig::default())?;
    let cfg = McmcConfig {
        temperature: spec.temperature,
        steps: spec.conformations * spec.thin,
        burn_in: spec.burn_in,
        thin: spec.thin,
        step_size: spec.step_size,
    };
    let chain = metropolis_sample(&energy, start.conformation.positions(), &cfg, &mut rng_stream(chain_seed, 0))?;
    if chain.acceptance_rate < 0.01 {
        return Err(Error::Domain(format!(
            "molecule {:?}: Metropolis acceptance {:.4} is below 1%; try a smaller step_size",
            ms.id, chain.acceptance_rate
        )));
    }
    let records = chain
        .samples
        .into_iter()
        .enumerate()
        .map(|(k, x)| DatasetRecord::new(ms.id.clone(), graph.clone(), build_seed, chain_seed, k, x))
        .collect::<Result<Vec<_>>>()?;
    let mol = SyntheticMolecule {
        id: ms.id.clone(),
        graph,
        build_seed,
        chain_seed,
        energy,
        acceptance_rate: chain.acceptance_rate,
        step_size: chain.step_size,
    };
    Ok((mol, records))
}
