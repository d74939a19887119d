//! Dataset files and molecule-level splits.
//!
//! A dataset is a JSON-lines file with one conformation per line:
//!
//! ```text
//! {"schema":1,"molecule":"butane","build_seed":7,"seed":3,"index":0,
//!  "graph":{"atoms":[{"element":"C"},...],"bonds":[{"i":0,"j":1},...]},
//!  "positions":[[0.0,0.0,0.0],...]}
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! gives bit-identical coordinates. `build_seed` fixes the extended graph, so
//! every conformation of one molecule has index-aligned edge distances.

mod synth;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use graphdg_core::molgraph::{
    build_extended_graph, Atom, Bond, BondAttrs, BondStereo, BondType, ChiralTag, Conformation, Element,
    ExtendedGraph, MolGraph, RingSizes,
};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synth::{
    energy_model, make_synthetic_benchmark, molecule_graph, BenchmarkSpec, ForceField, MoleculeSpec, SyntheticBenchmark,
    SyntheticMolecule,
};

pub const SCHEMA_VERSION: u32 = 1;

/// One `(molecule, conformation)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub molecule: String,
    pub graph: MolGraph,
    /// Seed of the extended-graph build, shared by all records of a molecule.
    pub build_seed: u64,
    /// Seed of the process that produced the conformation.
    pub seed: u64,
    /// Position of the conformation within its molecule.
    pub index: usize,
    pub conformation: Conformation,
}

impl DatasetRecord {
    pub fn new(
        molecule: impl Into<String>,
        graph: MolGraph,
        build_seed: u64,
        seed: u64,
        index: usize,
        positions: Vec<[f64; 3]>,
    ) -> Result<Self> {
        let conformation = Conformation::new(graph.elements().collect(), positions)?;
        Ok(Self { molecule: molecule.into(), graph, build_seed, seed, index, conformation })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct AtomDoc {
    element: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    chiral: Option<String>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct BondDoc {
    i: usize,
    j: usize,
    #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
    bond_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stereo: Option<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    aromatic: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    conjugated: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    rings: Vec<u8>,
}

/// Serialized form of a [`MolGraph`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDoc {
    atoms: Vec<AtomDoc>,
    bonds: Vec<BondDoc>,
}

fn chiral_name(c: ChiralTag) -> Option<&'static str> {
    match c {
        ChiralTag::R => Some("R"),
        ChiralTag::S => Some("S"),
        ChiralTag::Unspecified => None,
    }
}

fn bond_type_name(t: BondType) -> Option<&'static str> {
    match t {
        BondType::Single => None,
        BondType::Double => Some("double"),
        BondType::Triple => Some("triple"),
        BondType::Aromatic => Some("aromatic"),
    }
}

fn stereo_name(s: BondStereo) -> Option<&'static str> {
    match s {
        BondStereo::E => Some("E"),
        BondStereo::Z => Some("Z"),
        BondStereo::Any => Some("any"),
        BondStereo::Unspecified => None,
    }
}

impl GraphDoc {
    pub fn from_graph(g: &MolGraph) -> Self {
        let atoms = g
            .atoms()
            .iter()
            .map(|a| AtomDoc { element: a.element.symbol().into(), chiral: chiral_name(a.chiral).map(Into::into) })
            .collect();
        let bonds = g
            .bonds()
            .iter()
            .map(|b| BondDoc {
                i: b.i,
                j: b.j,
                bond_type: bond_type_name(b.attrs.bond_type).map(Into::into),
                stereo: stereo_name(b.attrs.stereo).map(Into::into),
                aromatic: b.attrs.is_aromatic,
                conjugated: b.attrs.is_conjugated,
                rings: b.attrs.rings.iter().collect(),
            })
            .collect();
        Self { atoms, bonds }
    }

    pub fn to_graph(&self) -> std::result::Result<MolGraph, String> {
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            let element = Element::from_symbol(&a.element).map_err(|e| e.to_string())?;
            let chiral = match a.chiral.as_deref() {
                None => ChiralTag::Unspecified,
                Some("R") => ChiralTag::R,
                Some("S") => ChiralTag::S,
                Some(other) => return Err(format!("unknown chiral tag {other:?}")),
            };
            atoms.push(Atom { element, chiral });
        }
        let mut bonds = Vec::with_capacity(self.bonds.len());
        for b in &self.bonds {
            let bond_type = match b.bond_type.as_deref() {
                None | Some("single") => BondType::Single,
                Some("double") => BondType::Double,
                Some("triple") => BondType::Triple,
                Some("aromatic") => BondType::Aromatic,
                Some(other) => return Err(format!("unknown bond type {other:?}")),
            };
            let stereo = match b.stereo.as_deref() {
                None => BondStereo::Unspecified,
                Some("E") => BondStereo::E,
                Some("Z") => BondStereo::Z,
                Some("any") => BondStereo::Any,
                Some(other) => return Err(format!("unknown bond stereo {other:?}")),
            };
            let rings = RingSizes::from_sizes(&b.rings).map_err(|e| e.to_string())?;
            let attrs = BondAttrs { bond_type, stereo, is_aromatic: b.aromatic, is_conjugated: b.conjugated, rings };
            bonds.push(Bond { i: b.i, j: b.j, attrs });
        }
        MolGraph::new(atoms, bonds).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordDoc {
    schema: u32,
    molecule: String,
    build_seed: u64,
    seed: u64,
    index: usize,
    graph: GraphDoc,
    positions: Vec<[f64; 3]>,
}

fn parse_record(line: &str) -> std::result::Result<DatasetRecord, String> {
    let doc: RecordDoc = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if doc.schema != SCHEMA_VERSION {
        return Err(format!("unsupported schema version {} (expected {SCHEMA_VERSION})", doc.schema));
    }
    let graph = doc.graph.to_graph()?;
    DatasetRecord::new(doc.molecule, graph, doc.build_seed, doc.seed, doc.index, doc.positions)
        .map_err(|e| e.to_string())
}

fn record_line(r: &DatasetRecord) -> String {
    let doc = RecordDoc {
        schema: SCHEMA_VERSION,
        molecule: r.molecule.clone(),
        build_seed: r.build_seed,
        seed: r.seed,
        index: r.index,
        graph: GraphDoc::from_graph(&r.graph),
        positions: r.conformation.positions().to_vec(),
    };
    serde_json::to_string(&doc).expect("records always serialize")
}

/// Appends records to a dataset file, one line each.
pub struct DatasetWriter {
    path: std::path::PathBuf,
    out: BufWriter<File>,
}

impl DatasetWriter {
    /// Creates (or truncates) `path`.
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self { path: path.to_path_buf(), out: BufWriter::new(file) })
    }

    pub fn append(&mut self, r: &DatasetRecord) -> Result<()> {
        writeln!(self.out, "{}", record_line(r)).map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let mut w = DatasetWriter::create(path)?;
    for r in records {
        w.append(r)?;
    }
    w.finish()
}

/// Reads every record; blank lines are skipped and a malformed line is an
/// error naming its 1-based line number.
pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r = parse_record(&line).map_err(|message| Error::Parse { path: path.to_path_buf(), line: k + 1, message })?;
        out.push(r);
    }
    Ok(out)
}

/// All conformations of one molecule with its extended graph.
#[derive(Debug, Clone)]
pub struct Molecule {
    pub id: String,
    pub graph: ExtendedGraph,
    pub conformations: Vec<Conformation>,
}

/// Groups records by molecule id, in order of first appearance. Records of
/// one molecule must agree on graph and build seed.
pub fn group_molecules(records: &[DatasetRecord]) -> Result<Vec<Molecule>> {
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    let mut out: Vec<Molecule> = Vec::new();
    for r in records {
        match index.get(r.molecule.as_str()) {
            Some(&k) => {
                let m = &mut out[k];
                if m.graph.source() != &r.graph || m.graph.build_seed() != r.build_seed {
                    return Err(Error::Domain(format!("records of molecule {:?} disagree on the graph", r.molecule)));
                }
                m.conformations.push(r.conformation.clone());
            }
            None => {
                index.insert(&r.molecule, out.len());
                out.push(Molecule {
                    id: r.molecule.clone(),
                    graph: build_extended_graph(&r.graph, r.build_seed)?,
                    conformations: vec![r.conformation.clone()],
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    Train,
    Validation,
    Test,
}

/// Molecule ids per split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    pub fn role(&self, id: &str) -> Option<SplitRole> {
        let has = |v: &[String]| v.iter().any(|x| x == id);
        if has(&self.train) {
            Some(SplitRole::Train)
        } else if has(&self.validation) {
            Some(SplitRole::Validation)
        } else if has(&self.test) {
            Some(SplitRole::Test)
        } else {
            None
        }
    }

    pub fn ids(&self, role: SplitRole) -> &[String] {
        match role {
            SplitRole::Train => &self.train,
            SplitRole::Validation => &self.validation,
            SplitRole::Test => &self.test,
        }
    }
}

/// Largest-remainder apportionment of `n` items over `fractions`, then
/// every split with a positive fraction is topped up to one item by taking
/// from the largest split.
fn apportion(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let quota: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, q) in counts.iter_mut().zip(&quota) {
        *c = q.floor() as usize;
    }
    let mut order = [0usize, 1, 2];
    // Stable sort keeps earlier splits first on ties.
    order.sort_by(|&a, &b| (quota[b] - quota[b].floor()).total_cmp(&(quota[a] - quota[a].floor())));
    let mut left = n - counts.iter().sum::<usize>();
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    for k in 0..3 {
        if fractions[k] > 0.0 && counts[k] == 0 {
            let big = (0..3).max_by_key(|&j| (counts[j], std::cmp::Reverse(j))).unwrap();
            counts[big] -= 1;
            counts[k] += 1;
        }
    }
    counts
}

/// Partitions the unique molecule ids of `records` into train, validation
/// and test.
///
/// Ids are sorted, shuffled by `seed` and cut according to `fractions`
/// (train, validation, test), which must sum to one.
pub fn split_disjoint(records: &[DatasetRecord], fractions: [f64; 3], seed: u64) -> Result<SplitManifest> {
    if fractions.iter().any(|f| !(*f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Usage(format!("split fractions {fractions:?} must be non-negative and sum to 1")));
    }
    let mut ids: Vec<String> = records.iter().map(|r| r.molecule.clone()).collect();
    ids.sort();
    ids.dedup();
    let splits = fractions.iter().filter(|f| **f > 0.0).count();
    if ids.len() < splits {
        return Err(Error::Domain(format!("{} unique molecules cannot fill {splits} splits", ids.len())));
    }
    ids.shuffle(&mut graphdg_core::rng_stream(seed, 0));
    let [n_train, n_val, _] = apportion(ids.len(), &fractions);
    let test = ids.split_off(n_train + n_val);
    let validation = ids.split_off(n_train);
    Ok(SplitManifest { seed, train: ids, validation, test })
}
