use petgraph::unionfind::UnionFind;
use ssg_core::socialnet::{generate, GraphKind};

fn components(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> usize {
    let mut uf = UnionFind::<usize>::new(n);
    for (a, b) in edges {
        uf.union(a, b);
    }
    let mut roots: Vec<usize> = (0..n).map(|i| uf.find(i)).collect();
    roots.sort_unstable();
    roots.dedup();
    roots.len()
}

#[test]
fn every_generator_yields_one_component() {
    let cases = [
        (GraphKind::Complete, 1.0),
        (GraphKind::Chain, 0.1),
        (GraphKind::Tree, 0.1),
        (GraphKind::Ba, 0.1),
        (GraphKind::Ba, 0.2),
        (GraphKind::Sw, 0.2),
        (GraphKind::Sw, 0.1),
    ];
    for n in [2usize, 3, 20, 57, 200] {
        for (kind, c) in cases {
            for seed in 0..20 {
                let Ok(g) = generate(kind, n, c, seed) else {
                    continue;
                };
                assert_eq!(components(n, g.edges()), 1, "{kind} n={n} C={c} seed={seed}");
                assert!(g.degrees().iter().all(|&d| d >= 1));
            }
        }
    }
}

#[test]
fn reference_sizes_generate() {
    for (kind, c) in [
        (GraphKind::Chain, 0.1),
        (GraphKind::Tree, 0.1),
        (GraphKind::Ba, 0.1),
        (GraphKind::Ba, 0.2),
        (GraphKind::Sw, 0.1),
        (GraphKind::Sw, 0.2),
    ] {
        let g = generate(kind, 20, c, 1).unwrap();
        assert_eq!(components(20, g.edges()), 1);
    }
}

fn max_over_median(kind: GraphKind, c: f64, seed: u64) -> f64 {
    let g = generate(kind, 200, c, seed).unwrap();
    let mut d = g.degrees();
    d.sort_unstable();
    let median = (d[99] + d[100]) as f64 / 2.0;
    *d.last().unwrap() as f64 / median
}

#[test]
fn ba_degrees_are_heavy_tailed_sw_are_not() {
    for seed in 0..100 {
        assert!(max_over_median(GraphKind::Ba, 0.02, seed) > 3.0, "ba seed {seed}");
        assert!(max_over_median(GraphKind::Sw, 0.02, seed) <= 3.0, "sw seed {seed}");
    }
}

#[test]
fn density_within_declared_tolerance() {
    let g = generate(GraphKind::Ba, 20, 0.2, 0).unwrap();
    assert!((g.density() - 0.2).abs() <= 0.03);
    for seed in 0..10 {
        let sw = generate(GraphKind::Sw, 100, 0.06, seed).unwrap();
        assert_eq!(sw.edge_count(), 100 * 6 / 2);
    }
}
