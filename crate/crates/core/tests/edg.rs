use graphdg_core::cvae::GaussianEdgeDist;
use graphdg_core::edg::{
    embed_batch, embed_conformation, gram_embed, make_bounds, metrize, refine, smooth_bounds, violation_energy,
    violation_gradient, BoundsConfig, BoundsMatrix, EdgError, EmbedConfig, EmbedSummary, RefineConfig,
};
use graphdg_core::molgraph::{
    build_extended_graph, extract_distances, Atom, Bond, Conformation, Element, ExtendedGraph, MolGraph,
};
use graphdg_core::{rng_stream, Rng as CoreRng, Sequential};
use proptest::prelude::*;
use rand::Rng;

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

fn dense(points: &[[f64; 3]]) -> Vec<f64> {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = dist(&points[i], &points[j]);
        }
    }
    d
}

fn random_points(n: usize, rng: &mut CoreRng) -> Vec<[f64; 3]> {
    (0..n).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect()
}

fn rms_distance_error(a: &[[f64; 3]], d: &[f64]) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    let mut c = 0;
    for i in 0..n {
        for j in i + 1..n {
            s += (dist(&a[i], &a[j]) - d[i * n + j]).powi(2);
            c += 1;
        }
    }
    (s / c as f64).sqrt()
}

fn ethane_like() -> ExtendedGraph {
    let atoms = vec![Atom::new(Element::C), Atom::new(Element::C), Atom::new(Element::O), Atom::new(Element::N)];
    let bonds = vec![Bond::single(0, 1), Bond::single(1, 2), Bond::single(2, 3)];
    build_extended_graph(&MolGraph::new(atoms, bonds).unwrap(), 0).unwrap()
}

#[test]
fn make_bounds_applies_formula_and_defaults() {
    let eg = ethane_like();
    let mut ged = GaussianEdgeDist::point(vec![1.5; eg.n_edges()], 0.01);
    ged.mean[1] = 0.6;
    ged.variance[1] = 0.09;
    let b = make_bounds(&eg, &ged, &BoundsConfig::default()).unwrap();
    let e0 = &eg.edges()[0];
    assert!((b.lower(e0.r, e0.s) - 1.4).abs() < 1e-12);
    assert!((b.upper(e0.r, e0.s) - 1.6).abs() < 1e-12);
    let e1 = &eg.edges()[1];
    assert_eq!(b.lower(e1.r, e1.s), 0.5);
    assert!((b.upper(e1.s, e1.r) - 0.9).abs() < 1e-12);
    // 4-chain: every pair has an edge (bonds, angles, the end-to-end dihedral)
    // so build a pair without one on a bigger graph.
    let g = MolGraph::new(vec![Atom::new(Element::C); 6], (1..6).map(|i| Bond::single(i - 1, i)).collect()).unwrap();
    let eg6 = build_extended_graph(&g, 0).unwrap();
    let b6 = make_bounds(&eg6, &GaussianEdgeDist::point(vec![1.5; eg6.n_edges()], 0.01), &BoundsConfig::default())
        .unwrap();
    let has_edge = |i: usize, j: usize| eg6.edges().iter().any(|e| (e.r, e.s) == (i, j) || (e.s, e.r) == (i, j));
    let (i, j) = (0..6)
        .flat_map(|i| (i + 1..6).map(move |j| (i, j)))
        .find(|&(i, j)| !has_edge(i, j))
        .expect("some non-edge pair");
    assert_eq!((b6.lower(i, j), b6.upper(i, j)), (1.0, 1000.0));

    ged.mean[0] = f64::NAN;
    assert!(matches!(make_bounds(&eg, &ged, &BoundsConfig::default()), Err(EdgError::NonFinite(_))));
}

#[test]
fn single_triangle_is_smoothed() {
    let mut b = BoundsMatrix::uniform(3, 0.1, 1.0);
    b.set(0, 2, 0.1, 5.0).unwrap();
    let s = smooth_bounds(&b).unwrap();
    assert_eq!(s.upper(0, 2), 2.0);
    assert_eq!(s.upper(2, 0), 2.0);
}

#[test]
fn exact_metric_is_unchanged_by_smoothing() {
    let mut rng = rng_stream(1, 0);
    let pts = random_points(7, &mut rng);
    let b = BoundsMatrix::exact(7, &dense(&pts)).unwrap();
    let s = smooth_bounds(&b).unwrap();
    for i in 0..7 {
        for j in 0..7 {
            assert!((s.upper(i, j) - b.upper(i, j)).abs() < 1e-12);
            assert!((s.lower(i, j) - b.lower(i, j)).abs() < 1e-12);
        }
    }
}

/// All-pairs shortest paths by relaxing every path of length ≤ n − 1
/// (Bellman–Ford style), independent of the Floyd–Warshall loop order.
fn shortest_paths(n: usize, w: &[f64]) -> Vec<f64> {
    let mut d = w.to_vec();
    for _ in 0..n {
        let prev = d.clone();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    d[i * n + j] = d[i * n + j].min(prev[i * n + k] + w[k * n + j]);
                }
            }
        }
    }
    d
}

#[test]
fn smoothed_uppers_equal_shortest_paths() {
    let mut rng = rng_stream(2, 0);
    let n = 6;
    for _ in 0..100 {
        // Dyadic values keep every path sum exact in f64.
        let mut b = BoundsMatrix::uniform(n, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let u = rng.random_range(16..=320) as f64 / 64.0;
                b.set(i, j, 0.0, u).unwrap();
            }
        }
        let expect = shortest_paths(n, b.upper_matrix());
        let s = smooth_bounds(&b).unwrap();
        assert_eq!(s.upper_matrix(), &expect[..]);
    }
}

#[test]
fn inconsistent_bounds_name_the_pair() {
    let mut b = BoundsMatrix::uniform(3, 0.5, 1.0);
    b.set(0, 2, 3.0, 4.0).unwrap();
    match smooth_bounds(&b) {
        Err(EdgError::Inconsistent { i, j, lower, upper }) => {
            assert!(lower > upper);
            assert!(i < 3 && j < 3 && i != j);
        }
        other => panic!("expected inconsistency, got {other:?}"),
    }
}

#[test]
fn metrize_degenerate_and_reproducible() {
    let mut rng = rng_stream(3, 0);
    let pts = random_points(5, &mut rng);
    let d = dense(&pts);
    let b = BoundsMatrix::exact(5, &d).unwrap();
    assert_eq!(metrize(&b, &mut rng), d);

    let wide = BoundsMatrix::uniform(5, 1.0, 3.0);
    let a = metrize(&wide, &mut rng_stream(4, 0));
    let c = metrize(&wide, &mut rng_stream(4, 0));
    assert_eq!(a, c);
    for i in 0..5 {
        assert_eq!(a[i * 5 + i], 0.0);
        for j in 0..5 {
            assert_eq!(a[i * 5 + j], a[j * 5 + i]);
        }
    }
}

#[test]
fn metrize_is_uniform_on_each_interval() {
    let b = BoundsMatrix::uniform(2, 1.0, 3.0);
    let mut rng = rng_stream(5, 0);
    let n = 10_000;
    let mean = (0..n).map(|_| metrize(&b, &mut rng)[1]).sum::<f64>() / n as f64;
    let se = (4.0f64 / 12.0).sqrt() / (n as f64).sqrt();
    assert!((mean - 2.0).abs() < 3.0 * se, "mean {mean}");
}

#[test]
fn gram_embed_reconstructs_embeddable_metrics() {
    let tri = [0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
    let x = gram_embed(3, &tri).unwrap();
    for i in 0..3 {
        for j in i + 1..3 {
            assert!((dist(&x[i], &x[j]) - 1.0).abs() < 1e-9);
        }
    }
    let mut rng = rng_stream(6, 0);
    for _ in 0..20 {
        let pts = random_points(8, &mut rng);
        let d = dense(&pts);
        let y = gram_embed(8, &d).unwrap();
        assert!(rms_distance_error(&y, &d) < 1e-6);
    }
}

#[test]
fn four_simplex_gets_a_rank_three_approximation() {
    let n = 5;
    let d: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 0.0 } else { 1.0 }).collect();
    let x = gram_embed(n, &d).unwrap();
    let b = BoundsMatrix::exact(n, &d).unwrap();
    assert!(b.max_violation(&x) > 1e-3);
    assert!(rms_distance_error(&x, &d) < 0.5);
}

#[test]
fn violation_gradient_matches_finite_differences() {
    let mut rng = rng_stream(7, 0);
    let n = 6;
    let x = random_points(n, &mut rng);
    let mut b = BoundsMatrix::uniform(n, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let l = rng.random_range(0.5..2.5);
            b.set(i, j, l, l + rng.random_range(0.0..1.0)).unwrap();
        }
    }
    let g = violation_gradient(&x, &b);
    let h = 1e-5;
    for i in 0..n {
        for a in 0..3 {
            let mut up = x.clone();
            up[i][a] += h;
            let mut down = x.clone();
            down[i][a] -= h;
            let fd = (violation_energy(&up, &b) - violation_energy(&down, &b)) / (2.0 * h);
            let rel = (fd - g[i][a]).abs() / fd.abs().max(g[i][a].abs()).max(1e-6);
            assert!(rel < 1e-4, "coordinate ({i},{a}): fd {fd} analytic {}", g[i][a]);
        }
    }
}

#[test]
fn refine_is_a_no_op_on_feasible_coordinates() {
    let pts = random_points(5, &mut rng_stream(8, 0));
    let b = BoundsMatrix::exact(5, &dense(&pts)).unwrap();
    let r = refine(pts.clone(), &b, &RefineConfig::default()).unwrap();
    assert!(r.converged);
    assert_eq!(r.iterations, 0);
    assert_eq!(r.coords, pts);
}

#[test]
fn refine_recovers_a_perturbed_triangle() {
    let tri = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 3f64.sqrt() / 2.0, 0.0]];
    let b = BoundsMatrix::exact(3, &dense(&tri)).unwrap();
    let mut rng = rng_stream(9, 0);
    let noisy: Vec<[f64; 3]> =
        tri.iter().map(|p| [p[0] + rng.random_range(-0.1..0.1), p[1] + rng.random_range(-0.1..0.1), p[2]]).collect();
    let r = refine(noisy, &b, &RefineConfig::default()).unwrap();
    assert!(r.converged, "violation {}", r.max_violation);
    assert!(r.max_violation < 1e-3);
}

#[test]
fn refine_energy_never_increases() {
    // Record energies by rerunning with growing iteration caps; the solver is
    // deterministic so each run extends the previous trajectory.
    let mut rng = rng_stream(10, 0);
    let pts = random_points(6, &mut rng);
    let truth = dense(&pts);
    let b = BoundsMatrix::exact(6, &truth).unwrap();
    let start = random_points(6, &mut rng);
    let mut last = violation_energy(&start, &b);
    for cap in 1..60 {
        let cfg = RefineConfig { max_iter: cap, tolerance: 0.0, ..RefineConfig::default() };
        let r = refine(start.clone(), &b, &cfg).unwrap();
        assert!(r.energy <= last + 1e-12, "iteration {cap}: {} > {last}", r.energy);
        last = r.energy;
    }
}

#[test]
fn pipeline_round_trips_a_planted_conformation() {
    let eg = ethane_like();
    let mut rng = rng_stream(11, 0);
    let pts = vec![[0.0, 0.0, 0.0], [1.52, 0.0, 0.0], [2.0, 1.35, 0.0], [3.4, 1.3, 0.4]];
    let conf = Conformation::new(eg.source().elements().collect(), pts).unwrap();
    let d = extract_distances(&eg, &conf).unwrap();
    let sigma = 1e-3;
    let ged = GaussianEdgeDist::point(d.values().to_vec(), sigma * sigma);
    let r = embed_conformation(&eg, &ged, &mut rng, &EmbedConfig::default()).unwrap();
    let back = extract_distances(&eg, &r.conformation).unwrap();
    for (a, b) in back.values().iter().zip(d.values()) {
        assert!((a - b).abs() <= 2.0 * sigma + 1e-3, "{a} vs {b}");
    }
}

#[test]
fn batch_summary_counts_smoothing_failures() {
    let eg = ethane_like();
    let good = GaussianEdgeDist::point(
        eg.edges().iter().map(|e| if e.kind == graphdg_core::molgraph::EdgeKind::Bond { 1.5 } else { 2.5 }).collect(),
        0.0025,
    );
    let mut bad = good.clone();
    // Bond 0-1 and 1-2 at 1.5 cannot support a 0-2 distance of 9.
    let k = eg.edges().iter().position(|e| (e.r, e.s) == (0, 2)).unwrap();
    bad.mean[k] = 9.0;
    let results = embed_batch(&eg, &[good.clone(), bad, good], 12, &EmbedConfig::default(), &Sequential);
    assert!(matches!(results[1], Err(EdgError::Inconsistent { .. })));
    let s = EmbedSummary::from_results(&results);
    assert_eq!(s.attempted, 3);
    assert_eq!(s.smoothing_passed, 2);
    assert!((s.smoothing_pass_rate() - 2.0 / 3.0).abs() < 1e-12);
}

fn random_bounds(n: usize, seed: u64) -> BoundsMatrix {
    let mut rng = rng_stream(seed, 0);
    let pts = random_points(n, &mut rng);
    let d = dense(&pts);
    let mut b = BoundsMatrix::uniform(n, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let w = rng.random_range(0.0..1.0);
            b.set(i, j, (d[i * n + j] - w).max(0.0), d[i * n + j] + w + rng.random_range(0.0..3.0)).unwrap();
        }
    }
    b
}

proptest! {
    #[test]
    fn smoothing_is_idempotent_and_never_widens(n in 3usize..8, seed in 0u64..10_000) {
        let b = random_bounds(n, seed);
        let s = smooth_bounds(&b).unwrap();
        let s2 = smooth_bounds(&s).unwrap();
        prop_assert_eq!(&s, &s2);
        for i in 0..n {
            for j in 0..n {
                prop_assert!(s.upper(i, j) <= b.upper(i, j));
                prop_assert!(s.lower(i, j) >= b.lower(i, j));
            }
        }
    }

    #[test]
    fn gram_embedding_is_isometry_invariant(seed in 0u64..10_000, angle in 0.0f64..6.28) {
        let mut rng = rng_stream(seed, 1);
        let pts = random_points(6, &mut rng);
        let (c, s) = (angle.cos(), angle.sin());
        let moved: Vec<[f64; 3]> = pts.iter().map(|p| [c * p[0] - s * p[1] + 3.0, s * p[0] + c * p[1] - 1.0, p[2] + 0.5]).collect();
        let d1 = dense(&pts);
        let d2 = dense(&moved);
        let x = gram_embed(6, &d2).unwrap();
        prop_assert!(rms_distance_error(&x, &d1) < 1e-6);
    }
}
