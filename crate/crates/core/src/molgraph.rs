//! Molecular graphs, extended graphs and distance extraction.
//!
//! A [`MolGraph`] is the ordinary bond graph of a molecule. Building an
//! [`ExtendedGraph`] adds auxiliary edges so that the set of edge lengths
//! pins down the local geometry:
//!
//! * an angle edge between every pair of second neighbors,
//! * then, visiting nodes in ascending index order, one dihedral edge from
//!   any node that still has fewer than three incident edges to a third
//!   neighbor picked by the seeded RNG.
//!
//! Node features are 12-dimensional (one-hot element over H..F, one-hot chiral
//! tag) and edge features 21-dimensional (kind, stereo, bond type, aromatic,
//! conjugated, ring sizes).

use alloc::collections::{BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng as _;

use crate::math;

pub const NODE_FEATURES: usize = 12;
pub const EDGE_FEATURES: usize = 21;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MolGraphError {
    #[error("molecule has no atoms")]
    Empty,
    #[error("unsupported element `{0}` (only H..F are featurized)")]
    UnsupportedElement(String),
    #[error("bond {bond} references atom {atom}, but the molecule has {n_atoms} atoms")]
    BondIndexOutOfRange { bond: usize, atom: usize, n_atoms: usize },
    #[error("bond {bond} connects atom {atom} to itself")]
    SelfLoop { bond: usize, atom: usize },
    #[error("duplicate bond between atoms {0} and {1}")]
    DuplicateBond(usize, usize),
    #[error("unsupported ring size {0} (expected 3..=9)")]
    RingSize(u8),
    #[error("bond graph is disconnected: atom {0} is unreachable from atom 0")]
    Disconnected(usize),
    #[error("bond attributes are only valid for bond edges, got a {0:?} edge")]
    AuxiliaryWithBondAttributes(EdgeKind),
    #[error("bond edges need bond attributes")]
    MissingBondAttributes,
    #[error("conformation has {got} atoms, graph has {expected}")]
    AtomCountMismatch { expected: usize, got: usize },
    #[error("element mismatch at atom {index}: graph has {expected}, conformation has {got}")]
    ElementMismatch { index: usize, expected: Element, got: Element },
    #[error("atoms {0} and {1} coincide")]
    CoincidentAtoms(usize, usize),
    #[error("non-finite coordinate on atom {0}")]
    NonFiniteCoordinate(usize),
    #[error("distance set has {got} values, extended graph has {expected} edges")]
    DistanceCountMismatch { expected: usize, got: usize },
    #[error("distance {index} is not strictly positive ({value})")]
    NonPositiveDistance { index: usize, value: f64 },
}

/// Chemical elements H through F, the range covered by the node features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Element {
    H,
    He,
    Li,
    Be,
    B,
    C,
    N,
    O,
    F,
}

impl Element {
    pub const ALL: [Element; 9] = [
        Element::H,
        Element::He,
        Element::Li,
        Element::Be,
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::F,
    ];

    pub fn atomic_number(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_atomic_number(z: u8) -> Result<Self, MolGraphError> {
        match z {
            1..=9 => Ok(Self::ALL[usize::from(z - 1)]),
            _ => Err(MolGraphError::UnsupportedElement(alloc::format!("Z={z}"))),
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Element::H => "H",
            Element::He => "He",
            Element::Li => "Li",
            Element::Be => "Be",
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
        }
    }

    pub fn from_symbol(s: &str) -> Result<Self, MolGraphError> {
        Self::ALL
            .iter()
            .copied()
            .find(|e| e.symbol() == s)
            .ok_or_else(|| MolGraphError::UnsupportedElement(String::from(s)))
    }

    /// Everything except hydrogen.
    pub fn is_heavy(self) -> bool {
        self != Element::H
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ChiralTag {
    R,
    S,
    #[default]
    Unspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum BondType {
    #[default]
    Single,
    Double,
    Triple,
    Aromatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum BondStereo {
    E,
    Z,
    Any,
    #[default]
    Unspecified,
}

/// Set of ring sizes (3..=9) a bond belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RingSizes(u8);

impl RingSizes {
    pub const MIN: u8 = 3;
    pub const MAX: u8 = 9;

    pub fn empty() -> Self {
        Self(0)
    }

    pub fn from_sizes(sizes: &[u8]) -> Result<Self, MolGraphError> {
        let mut out = Self::empty();
        for &s in sizes {
            out.insert(s)?;
        }
        Ok(out)
    }

    pub fn insert(&mut self, size: u8) -> Result<(), MolGraphError> {
        if !(Self::MIN..=Self::MAX).contains(&size) {
            return Err(MolGraphError::RingSize(size));
        }
        self.0 |= 1 << (size - Self::MIN);
        Ok(())
    }

    pub fn contains(self, size: u8) -> bool {
        (Self::MIN..=Self::MAX).contains(&size) && self.0 & (1 << (size - Self::MIN)) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = u8> {
        (Self::MIN..=Self::MAX).filter(move |&s| self.contains(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: Element,
    pub chiral: ChiralTag,
}

impl Atom {
    pub fn new(element: Element) -> Self {
        Self { element, chiral: ChiralTag::Unspecified }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BondAttrs {
    pub bond_type: BondType,
    pub stereo: BondStereo,
    pub is_aromatic: bool,
    pub is_conjugated: bool,
    pub rings: RingSizes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub attrs: BondAttrs,
}

impl Bond {
    pub fn single(i: usize, j: usize) -> Self {
        Self { i, j, attrs: BondAttrs::default() }
    }
}

/// A molecular bond graph.
///
/// Construction checks bond indices, self-loops and duplicates. Connectivity
/// is checked when the extended graph is built.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MolGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
}

impl MolGraph {
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Result<Self, MolGraphError> {
        if atoms.is_empty() {
            return Err(MolGraphError::Empty);
        }
        let n = atoms.len();
        let mut seen = BTreeSet::new();
        for (b, bond) in bonds.iter().enumerate() {
            for atom in [bond.i, bond.j] {
                if atom >= n {
                    return Err(MolGraphError::BondIndexOutOfRange { bond: b, atom, n_atoms: n });
                }
            }
            if bond.i == bond.j {
                return Err(MolGraphError::SelfLoop { bond: b, atom: bond.i });
            }
            if !seen.insert(ordered(bond.i, bond.j)) {
                let (a, c) = ordered(bond.i, bond.j);
                return Err(MolGraphError::DuplicateBond(a, c));
            }
        }
        Ok(Self { atoms, bonds })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn elements(&self) -> impl Iterator<Item = Element> + '_ {
        self.atoms.iter().map(|a| a.element)
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for b in &self.bonds {
            adj[b.i].push(b.j);
            adj[b.j].push(b.i);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Shortest-path hop counts from `source`; `usize::MAX` marks unreachable.
    pub fn hop_distances(&self, source: usize) -> Vec<usize> {
        bfs(&self.adjacency(), source)
    }

    pub fn is_connected(&self) -> bool {
        self.hop_distances(0).iter().all(|&d| d != usize::MAX)
    }

    /// Relabels atoms so that old atom `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.atoms.len(), "permutation length");
        let mut atoms = self.atoms.clone();
        for (old, &new) in perm.iter().enumerate() {
            atoms[new] = self.atoms[old];
        }
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond { i: perm[b.i], j: perm[b.j], attrs: b.attrs })
            .collect();
        Self { atoms, bonds }
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn bfs(adj: &[Vec<usize>], source: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    let mut queue = VecDeque::new();
    dist[source] = 0;
    queue.push_back(source);
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            if dist[u] == usize::MAX {
                dist[u] = dist[v] + 1;
                queue.push_back(u);
            }
        }
    }
    dist
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Bond,
    Angle,
    Dihedral,
}

impl EdgeKind {
    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::Bond => "bond",
            EdgeKind::Angle => "angle",
            EdgeKind::Dihedral => "dihedral",
        }
    }
}

/// One-hot element block followed by one-hot chiral tag block.
pub fn featurize_node(element: Element, chiral: ChiralTag) -> [f64; NODE_FEATURES] {
    let mut v = [0.0; NODE_FEATURES];
    v[element as usize] = 1.0;
    let tag = match chiral {
        ChiralTag::R => 0,
        ChiralTag::S => 1,
        ChiralTag::Unspecified => 2,
    };
    v[9 + tag] = 1.0;
    v
}

mod edge_layout {
    pub const KIND: usize = 0;
    pub const STEREO: usize = 3;
    pub const TYPE: usize = 7;
    pub const AROMATIC: usize = 12;
    pub const CONJUGATED: usize = 13;
    pub const RING: usize = 14;
}

/// Edge features: kind(3) stereo(4) type(5) aromatic(1) conjugated(1) ring(7).
///
/// Auxiliary edges encode stereo and type as their "None" slot and leave the
/// flags and ring block at zero.
pub fn featurize_edge(
    kind: EdgeKind,
    bond: Option<&BondAttrs>,
) -> Result<[f64; EDGE_FEATURES], MolGraphError> {
    use edge_layout::*;
    let mut v = [0.0; EDGE_FEATURES];
    v[KIND + kind as usize] = 1.0;
    match (kind, bond) {
        (EdgeKind::Bond, None) => return Err(MolGraphError::MissingBondAttributes),
        (EdgeKind::Bond, Some(attrs)) => {
            let stereo = match attrs.stereo {
                BondStereo::E => 0,
                BondStereo::Z => 1,
                BondStereo::Any => 2,
                BondStereo::Unspecified => 3,
            };
            v[STEREO + stereo] = 1.0;
            let ty = match attrs.bond_type {
                BondType::Single => 0,
                BondType::Double => 1,
                BondType::Triple => 2,
                BondType::Aromatic => 3,
            };
            v[TYPE + ty] = 1.0;
            v[AROMATIC] = f64::from(u8::from(attrs.is_aromatic));
            v[CONJUGATED] = f64::from(u8::from(attrs.is_conjugated));
            for size in attrs.rings.iter() {
                v[RING + usize::from(size - RingSizes::MIN)] = 1.0;
            }
        }
        (_, Some(_)) => return Err(MolGraphError::AuxiliaryWithBondAttributes(kind)),
        (_, None) => {
            v[STEREO + 3] = 1.0;
            v[TYPE + 4] = 1.0;
        }
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub r: usize,
    pub s: usize,
    pub kind: EdgeKind,
    pub features: [f64; EDGE_FEATURES],
}

/// Bond graph plus angle and dihedral edges, featurized.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedGraph {
    node_features: Vec<[f64; NODE_FEATURES]>,
    edges: Vec<Edge>,
    source: MolGraph,
    build_seed: u64,
}

impl ExtendedGraph {
    pub fn n_nodes(&self) -> usize {
        self.node_features.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_features(&self) -> &[[f64; NODE_FEATURES]] {
        &self.node_features
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn source(&self) -> &MolGraph {
        &self.source
    }

    pub fn build_seed(&self) -> u64 {
        self.build_seed
    }

    pub fn count_kind(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    /// Hop distances from `source` over the extended edge set.
    pub fn hop_distances(&self, source: usize) -> Vec<usize> {
        let mut adj = vec![Vec::new(); self.n_nodes()];
        for e in &self.edges {
            adj[e.r].push(e.s);
            adj[e.s].push(e.r);
        }
        bfs(&adj, source)
    }

    /// Indices of edges whose endpoints are both heavy atoms.
    pub fn heavy_edges(&self) -> Vec<usize> {
        let atoms = self.source.atoms();
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| atoms[e.r].element.is_heavy() && atoms[e.s].element.is_heavy())
            .map(|(k, _)| k)
            .collect()
    }

    /// Relabels atoms so that old atom `i` becomes `perm[i]`. Edge `k` stays
    /// at index `k`, dihedral choices included.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let source = self.source.permuted(perm);
        let mut node_features = self.node_features.clone();
        for (old, &new) in perm.iter().enumerate() {
            node_features[new] = self.node_features[old];
        }
        let edges = self
            .edges
            .iter()
            .map(|e| {
                let (r, s) = ordered(perm[e.r], perm[e.s]);
                Edge { r, s, ..e.clone() }
            })
            .collect();
        Self { node_features, edges, source, build_seed: self.build_seed }
    }
}

/// Builds the extended graph of `g`. Deterministic for fixed `(g, seed)`.
pub fn build_extended_graph(g: &MolGraph, seed: u64) -> Result<ExtendedGraph, MolGraphError> {
    let n = g.n_atoms();
    let adj = g.adjacency();
    let hops: Vec<Vec<usize>> = (0..n).map(|v| bfs(&adj, v)).collect();
    if let Some(u) = hops[0].iter().position(|&d| d == usize::MAX) {
        return Err(MolGraphError::Disconnected(u));
    }

    let node_features = g.atoms().iter().map(|a| featurize_node(a.element, a.chiral)).collect();

    let mut edges = Vec::new();
    let mut present = BTreeSet::new();
    let mut push = |r: usize, s: usize, kind: EdgeKind, features, present: &mut BTreeSet<_>| {
        let (r, s) = ordered(r, s);
        present.insert((r, s));
        edges.push(Edge { r, s, kind, features });
    };

    for bond in g.bonds() {
        let f = featurize_edge(EdgeKind::Bond, Some(&bond.attrs))?;
        push(bond.i, bond.j, EdgeKind::Bond, f, &mut present);
    }

    let angle_features = featurize_edge(EdgeKind::Angle, None)?;
    for r in 0..n {
        for s in r + 1..n {
            if hops[r][s] == 2 {
                push(r, s, EdgeKind::Angle, angle_features, &mut present);
            }
        }
    }

    let dihedral_features = featurize_edge(EdgeKind::Dihedral, None)?;
    let mut rng = crate::rng_stream(seed, 0);
    for v in 0..n {
        let incident = present.iter().filter(|&&(r, s)| r == v || s == v).count();
        if incident >= 3 {
            continue;
        }
        let candidates: Vec<usize> = (0..n)
            .filter(|&u| hops[v][u] == 3 && !present.contains(&ordered(v, u)))
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let u = candidates[rng.random_range(0..candidates.len())];
        push(v, u, EdgeKind::Dihedral, dihedral_features, &mut present);
    }

    drop(push);
    Ok(ExtendedGraph { node_features, edges, source: g.clone(), build_seed: seed })
}

/// Elements plus Cartesian coordinates in ångström.
#[derive(Debug, Clone, PartialEq)]
pub struct Conformation {
    elements: Vec<Element>,
    positions: Vec<[f64; 3]>,
}

impl Conformation {
    pub fn new(elements: Vec<Element>, positions: Vec<[f64; 3]>) -> Result<Self, MolGraphError> {
        if elements.len() != positions.len() {
            return Err(MolGraphError::AtomCountMismatch {
                expected: elements.len(),
                got: positions.len(),
            });
        }
        if elements.is_empty() {
            return Err(MolGraphError::Empty);
        }
        for (i, p) in positions.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(MolGraphError::NonFiniteCoordinate(i));
            }
        }
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                if !(math::dist3(&positions[i], &positions[j]) > 0.0) {
                    return Err(MolGraphError::CoincidentAtoms(i, j));
                }
            }
        }
        Ok(Self { elements, positions })
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn n_atoms(&self) -> usize {
        self.positions.len()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        math::dist3(&self.positions[i], &self.positions[j])
    }

    /// Checks that the elements match `g` atom by atom.
    pub fn check_against(&self, g: &MolGraph) -> Result<(), MolGraphError> {
        if self.elements.len() != g.n_atoms() {
            return Err(MolGraphError::AtomCountMismatch {
                expected: g.n_atoms(),
                got: self.elements.len(),
            });
        }
        for (index, (got, atom)) in self.elements.iter().zip(g.atoms()).enumerate() {
            if *got != atom.element {
                return Err(MolGraphError::ElementMismatch { index, expected: atom.element, got: *got });
            }
        }
        Ok(())
    }

    /// Applies `p -> rotation * p + translation`.
    pub fn transformed(&self, rotation: &[[f64; 3]; 3], translation: [f64; 3]) -> Self {
        let positions = self
            .positions
            .iter()
            .map(|p| {
                let mut q = translation;
                for (r, row) in rotation.iter().enumerate() {
                    q[r] += row[0] * p[0] + row[1] * p[1] + row[2] * p[2];
                }
                q
            })
            .collect();
        Self { elements: self.elements.clone(), positions }
    }

    pub fn radius_of_gyration(&self) -> f64 {
        let n = self.positions.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.positions {
            for a in 0..3 {
                c[a] += p[a] / n;
            }
        }
        let s: f64 = self
            .positions
            .iter()
            .map(|p| (0..3).map(|a| (p[a] - c[a]) * (p[a] - c[a])).sum::<f64>())
            .sum();
        math::sqrt(s / n)
    }
}

/// Per-edge distances, index-aligned with an extended graph's edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSet {
    values: Vec<f64>,
}

impl DistanceSet {
    pub fn new(values: Vec<f64>) -> Result<Self, MolGraphError> {
        for (index, &value) in values.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(MolGraphError::NonPositiveDistance { index, value });
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_against(&self, eg: &ExtendedGraph) -> Result<(), MolGraphError> {
        if self.values.len() != eg.n_edges() {
            return Err(MolGraphError::DistanceCountMismatch {
                expected: eg.n_edges(),
                got: self.values.len(),
            });
        }
        Ok(())
    }
}

pub fn extract_distances(eg: &ExtendedGraph, x: &Conformation) -> Result<DistanceSet, MolGraphError> {
    x.check_against(eg.source())?;
    let values = eg.edges().iter().map(|e| x.distance(e.r, e.s)).collect();
    DistanceSet::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(elements: &[Element]) -> MolGraph {
        let atoms = elements.iter().map(|&e| Atom::new(e)).collect();
        let bonds = (1..elements.len()).map(|i| Bond::single(i - 1, i)).collect();
        MolGraph::new(atoms, bonds).unwrap()
    }

    #[test]
    fn water_has_one_angle_and_no_dihedral() {
        let g = MolGraph::new(
            vec![Atom::new(Element::O), Atom::new(Element::H), Atom::new(Element::H)],
            vec![Bond::single(0, 1), Bond::single(0, 2)],
        )
        .unwrap();
        let eg = build_extended_graph(&g, 7).unwrap();
        assert_eq!(eg.count_kind(EdgeKind::Bond), 2);
        assert_eq!(eg.count_kind(EdgeKind::Angle), 1);
        assert_eq!(eg.count_kind(EdgeKind::Dihedral), 0);
        let angle = eg.edges().iter().find(|e| e.kind == EdgeKind::Angle).unwrap();
        assert_eq!((angle.r, angle.s), (1, 2));
    }

    #[test]
    fn four_chain_gets_single_end_to_end_dihedral() {
        let g = chain(&[Element::C; 4]);
        for seed in 0..10 {
            let eg = build_extended_graph(&g, seed).unwrap();
            assert_eq!(eg.count_kind(EdgeKind::Bond), 3);
            assert_eq!(eg.count_kind(EdgeKind::Angle), 2);
            assert_eq!(eg.count_kind(EdgeKind::Dihedral), 1);
            let d = eg.edges().iter().find(|e| e.kind == EdgeKind::Dihedral).unwrap();
            assert_eq!((d.r, d.s), (0, 3));
            assert_eq!(eg.n_edges(), 6);
        }
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let g = MolGraph::new(vec![Atom::new(Element::C), Atom::new(Element::C)], vec![]).unwrap();
        assert_eq!(build_extended_graph(&g, 0), Err(MolGraphError::Disconnected(1)));
    }

    #[test]
    fn invalid_bonds_are_rejected() {
        let atoms = vec![Atom::new(Element::C), Atom::new(Element::O)];
        assert!(matches!(
            MolGraph::new(atoms.clone(), vec![Bond::single(0, 2)]),
            Err(MolGraphError::BondIndexOutOfRange { .. })
        ));
        assert!(matches!(
            MolGraph::new(atoms.clone(), vec![Bond::single(1, 1)]),
            Err(MolGraphError::SelfLoop { .. })
        ));
        assert_eq!(
            MolGraph::new(atoms, vec![Bond::single(0, 1), Bond::single(1, 0)]),
            Err(MolGraphError::DuplicateBond(0, 1))
        );
    }

    #[test]
    fn node_features_one_hot() {
        let h = featurize_node(Element::H, ChiralTag::Unspecified);
        assert_eq!(h[0], 1.0);
        assert_eq!(h[9 + 2], 1.0);
        assert_eq!(h.iter().sum::<f64>(), 2.0);

        let f = featurize_node(Element::F, ChiralTag::Unspecified);
        assert_eq!(f[8], 1.0);

        let c = featurize_node(Element::C, ChiralTag::R);
        assert_eq!(c[5], 1.0);
        assert_eq!(c[9], 1.0);
        assert_eq!(c.iter().sum::<f64>(), 2.0);
    }

    #[test]
    fn unsupported_elements() {
        assert!(matches!(Element::from_symbol("Ne"), Err(MolGraphError::UnsupportedElement(_))));
        assert!(Element::from_atomic_number(10).is_err());
        assert_eq!(Element::from_atomic_number(8).unwrap(), Element::O);
        assert_eq!(Element::from_symbol("He").unwrap().atomic_number(), 2);
    }

    #[test]
    fn edge_features() {
        let single = featurize_edge(EdgeKind::Bond, Some(&BondAttrs::default())).unwrap();
        assert_eq!(single[0], 1.0);
        assert_eq!(single[7], 1.0);
        assert_eq!(single[6], 1.0, "stereo none");
        assert_eq!(single[12] + single[13], 0.0);
        assert!(single[14..].iter().all(|&x| x == 0.0));

        let angle = featurize_edge(EdgeKind::Angle, None).unwrap();
        assert_eq!(angle[1], 1.0);
        assert_eq!(angle[11], 1.0, "type none");
        assert_eq!(angle[6], 1.0);
        assert_eq!(angle.iter().sum::<f64>(), 3.0);

        let aromatic = BondAttrs {
            bond_type: BondType::Aromatic,
            is_aromatic: true,
            rings: RingSizes::from_sizes(&[6]).unwrap(),
            ..BondAttrs::default()
        };
        let f = featurize_edge(EdgeKind::Bond, Some(&aromatic)).unwrap();
        assert_eq!(f[12], 1.0);
        assert_eq!(f[10], 1.0);
        assert_eq!(f[14 + 3], 1.0);

        let fused = BondAttrs { rings: RingSizes::from_sizes(&[5, 6]).unwrap(), ..BondAttrs::default() };
        let f = featurize_edge(EdgeKind::Bond, Some(&fused)).unwrap();
        assert_eq!(f[14 + 2] + f[14 + 3], 2.0);

        assert_eq!(
            featurize_edge(EdgeKind::Dihedral, Some(&BondAttrs::default())),
            Err(MolGraphError::AuxiliaryWithBondAttributes(EdgeKind::Dihedral))
        );
        assert_eq!(featurize_edge(EdgeKind::Bond, None), Err(MolGraphError::MissingBondAttributes));
        assert!(RingSizes::from_sizes(&[10]).is_err());
    }

    #[test]
    fn extract_axis_aligned() {
        let g = chain(&[Element::C, Element::O]);
        let eg = build_extended_graph(&g, 0).unwrap();
        let x = Conformation::new(vec![Element::C, Element::O], vec![[0.0; 3], [1.5, 0.0, 0.0]]).unwrap();
        assert_eq!(extract_distances(&eg, &x).unwrap().values(), &[1.5]);

        let wrong = Conformation::new(vec![Element::C, Element::C], vec![[0.0; 3], [1.5, 0.0, 0.0]]).unwrap();
        assert!(matches!(extract_distances(&eg, &wrong), Err(MolGraphError::ElementMismatch { index: 1, .. })));
    }

    #[test]
    fn coincident_atoms_rejected() {
        assert_eq!(
            Conformation::new(vec![Element::C, Element::C], vec![[1.0; 3], [1.0; 3]]),
            Err(MolGraphError::CoincidentAtoms(0, 1))
        );
    }

    #[test]
    fn build_is_deterministic() {
        // Hexane chain: interior nodes have enough angle edges, so only some
        // nodes draw dihedrals; same seed must give the same draws.
        let g = chain(&[Element::C; 6]);
        let a = build_extended_graph(&g, 42).unwrap();
        let b = build_extended_graph(&g, 42).unwrap();
        assert_eq!(a, b);
    }
}
