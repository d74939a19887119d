use std::collections::BTreeSet;

use graphdg_core::molgraph::{
    build_extended_graph, extract_distances, Atom, Bond, Conformation, EdgeKind, Element, MolGraph,
};
use graphdg_core::rng_stream;
use proptest::prelude::*;
use rand::Rng;

fn propane() -> MolGraph {
    let mut atoms = vec![Atom::new(Element::C); 3];
    atoms.extend(std::iter::repeat(Atom::new(Element::H)).take(8));
    let mut bonds = vec![Bond::single(0, 1), Bond::single(1, 2)];
    for (k, &c) in [0, 0, 0, 1, 1, 2, 2, 2].iter().enumerate() {
        bonds.push(Bond::single(c, 3 + k));
    }
    MolGraph::new(atoms, bonds).unwrap()
}

/// Neighbour shells from boolean adjacency-matrix products, independent of
/// the BFS used by the builder: `shell[k]` holds pairs first reachable by a
/// walk of length `k`.
fn shells(g: &MolGraph) -> [BTreeSet<(usize, usize)>; 4] {
    let n = g.n_atoms();
    let mut a = vec![vec![false; n]; n];
    for b in g.bonds() {
        a[b.i][b.j] = true;
        a[b.j][b.i] = true;
    }
    let mut reach: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i == j).collect()).collect();
    let mut walk = reach.clone();
    let mut out: [BTreeSet<(usize, usize)>; 4] = Default::default();
    for shell in out.iter_mut().skip(1) {
        let next: Vec<Vec<bool>> =
            (0..n).map(|i| (0..n).map(|j| (0..n).any(|k| walk[i][k] && a[k][j])).collect()).collect();
        for i in 0..n {
            for j in i + 1..n {
                if next[i][j] && !reach[i][j] {
                    shell.insert((i, j));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                reach[i][j] |= next[i][j];
            }
        }
        walk = next;
    }
    out
}

fn edge_set(eg: &graphdg_core::molgraph::ExtendedGraph, kind: Option<EdgeKind>) -> BTreeSet<(usize, usize)> {
    eg.edges().iter().filter(|e| kind.is_none_or(|k| e.kind == k)).map(|e| (e.r.min(e.s), e.r.max(e.s))).collect()
}

#[test]
fn propane_matches_brute_force_shells() {
    let g = propane();
    let eg = build_extended_graph(&g, 0).unwrap();
    let sh = shells(&g);
    assert_eq!(edge_set(&eg, Some(EdgeKind::Bond)), sh[1]);
    assert_eq!(edge_set(&eg, Some(EdgeKind::Angle)), sh[2]);
    assert_eq!(sh[1].len(), 10);
    assert_eq!(sh[2].len(), 18);
    // Every atom already has three incident edges after the angle step.
    assert_eq!(eg.count_kind(EdgeKind::Dihedral), 0);
    assert_eq!(eg.n_edges(), 28);
}

#[test]
fn distances_of_a_planted_pair() {
    let g = MolGraph::new(vec![Atom::new(Element::C), Atom::new(Element::O)], vec![Bond::single(0, 1)]).unwrap();
    let eg = build_extended_graph(&g, 0).unwrap();
    let x = Conformation::new(vec![Element::C, Element::O], vec![[0.0; 3], [1.5, 0.0, 0.0]]).unwrap();
    assert_eq!(extract_distances(&eg, &x).unwrap().values(), &[1.5]);
}

#[test]
fn five_atom_distances_match_direct_norms() {
    let g = MolGraph::new(vec![Atom::new(Element::C); 5], (1..5).map(|i| Bond::single(i - 1, i)).collect()).unwrap();
    let eg = build_extended_graph(&g, 3).unwrap();
    let mut rng = rng_stream(1, 0);
    let pts: Vec<[f64; 3]> =
        (0..5).map(|i| [i as f64 * 1.4, rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)]).collect();
    let x = Conformation::new(vec![Element::C; 5], pts.clone()).unwrap();
    let d = extract_distances(&eg, &x).unwrap();
    for (k, e) in eg.edges().iter().enumerate() {
        let (a, b) = (pts[e.r], pts[e.s]);
        let norm = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        assert_eq!(d.values()[k], norm);
    }
}

/// Random connected graph: a random tree plus a few extra bonds.
fn random_graph(n: usize, extra: usize, seed: u64) -> MolGraph {
    let mut rng = rng_stream(seed, 0);
    let mut bonds = Vec::new();
    let mut seen = BTreeSet::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        bonds.push(Bond::single(j, i));
        seen.insert((j, i));
    }
    for _ in 0..extra {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        let (a, b) = (a.min(b), a.max(b));
        if a != b && seen.insert((a, b)) {
            bonds.push(Bond::single(a, b));
        }
    }
    let heavy = [Element::C, Element::N, Element::O];
    let atoms = (0..n).map(|_| Atom::new(heavy[rng.random_range(0..3)])).collect();
    MolGraph::new(atoms, bonds).unwrap()
}

fn random_rotation(rng: &mut graphdg_core::Rng) -> [[f64; 3]; 3] {
    // Normalized random quaternion.
    let mut q: [f64; 4] = [0.0; 4];
    for v in &mut q {
        *v = rng.random_range(-1.0..1.0);
    }
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

proptest! {
    #[test]
    fn shells_and_dihedral_rule_hold(n in 3usize..12, extra in 0usize..4, seed in 0u64..100_000) {
        let g = random_graph(n, extra, seed);
        let eg = build_extended_graph(&g, seed).unwrap();
        let sh = shells(&g);
        prop_assert_eq!(edge_set(&eg, Some(EdgeKind::Bond)), sh[1].clone());
        prop_assert_eq!(edge_set(&eg, Some(EdgeKind::Angle)), sh[2].clone());
        prop_assert_eq!(edge_set(&eg, None).len(), eg.n_edges());
        prop_assert!(eg.n_edges() >= sh[1].len() + sh[2].len());
        for e in eg.edges().iter().filter(|e| e.kind == EdgeKind::Dihedral) {
            prop_assert!(sh[3].contains(&(e.r.min(e.s), e.r.max(e.s))));
        }
        // After the build, a node left with fewer than three incident edges
        // has no unconnected third neighbour.
        let all = edge_set(&eg, None);
        for v in 0..n {
            let incident = all.iter().filter(|&&(a, b)| a == v || b == v).count();
            if incident < 3 {
                let free = sh[3].iter().any(|&(a, b)| (a == v || b == v) && !all.contains(&(a, b)));
                let has_dihedral = eg.edges().iter().any(|e| e.kind == EdgeKind::Dihedral && (e.r == v || e.s == v));
                prop_assert!(has_dihedral || !free, "node {v}");
            }
        }
    }

    #[test]
    fn extended_graph_build_is_deterministic(n in 3usize..10, seed in 0u64..100_000) {
        let g = random_graph(n, 2, seed);
        prop_assert_eq!(build_extended_graph(&g, seed).unwrap(), build_extended_graph(&g, seed).unwrap());
    }

    #[test]
    fn relabelling_maps_bond_and_angle_edges(n in 3usize..10, extra in 0usize..3, seed in 0u64..100_000) {
        let g = random_graph(n, extra, seed);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = rng_stream(seed, 1);
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let eg = build_extended_graph(&g, seed).unwrap();
        let eg_p = build_extended_graph(&g.permuted(&perm), seed).unwrap();
        for kind in [EdgeKind::Bond, EdgeKind::Angle] {
            let mapped: BTreeSet<(usize, usize)> = edge_set(&eg, Some(kind))
                .into_iter()
                .map(|(a, b)| (perm[a].min(perm[b]), perm[a].max(perm[b])))
                .collect();
            prop_assert_eq!(mapped, edge_set(&eg_p, Some(kind)));
        }
    }

    #[test]
    fn distances_are_isometry_invariant(n in 3usize..10, seed in 0u64..100_000) {
        let g = random_graph(n, 1, seed);
        let eg = build_extended_graph(&g, seed).unwrap();
        let mut rng = rng_stream(seed, 2);
        let pts: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
            .collect();
        let x = Conformation::new(g.elements().collect(), pts).unwrap();
        let rot = random_rotation(&mut rng);
        let t = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
        let a = extract_distances(&eg, &x).unwrap();
        let b = extract_distances(&eg, &x.transformed(&rot, t)).unwrap();
        for (p, q) in a.values().iter().zip(b.values()) {
            prop_assert!((p - q).abs() <= 1e-9);
        }
    }
}

#[test]
fn forced_dihedral_choices_map_under_relabelling() {
    // In a 4-chain each end has exactly one third neighbour, so even the
    // dihedral edge is independent of labels.
    let g = MolGraph::new(vec![Atom::new(Element::C); 4], (1..4).map(|i| Bond::single(i - 1, i)).collect()).unwrap();
    let perm = [2, 0, 3, 1];
    let eg = build_extended_graph(&g, 0).unwrap();
    let eg_p = build_extended_graph(&g.permuted(&perm), 0).unwrap();
    let mapped: BTreeSet<(usize, usize)> =
        edge_set(&eg, None).into_iter().map(|(a, b)| (perm[a].min(perm[b]), perm[a].max(perm[b]))).collect();
    assert_eq!(mapped, edge_set(&eg_p, None));
}
