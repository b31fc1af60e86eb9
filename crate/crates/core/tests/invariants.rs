use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgattack::balance::{balance_ratio, graph_polarization, triad_census};
use sgattack::detectors::anomaly_auc;
use sgattack::fextra::{extract_features, features_from_signs, features_on_tape_multi};
use sgattack::graph::SignedGraph;
use sgattack::numerics::tape::SignedCountPlan;
use sgattack::numerics::{Matrix, Tape};
use sgattack::synthetic::random_signed;

/// Balanced and total triangle counts by looping over every node triple.
fn brute_triangles(g: &SignedGraph) -> (usize, usize) {
    let a = g.adjacency();
    let n = g.n();
    let (mut balanced, mut total) = (0, 0);
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let p = a[(i, j)] * a[(j, k)] * a[(i, k)];
                if p != 0.0 {
                    total += 1;
                    if p > 0.0 {
                        balanced += 1;
                    }
                }
            }
        }
    }
    (balanced, total)
}

#[test]
fn balance_ratio_matches_triangle_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for seed in 0..100 {
        let n = rng.random_range(3..=30);
        let g = random_signed(n, 0.2, 0.5, seed);
        let (balanced, total) = brute_triangles(&g);
        let census = triad_census(&g);
        assert_eq!((census.balanced, census.total()), (balanced, total), "graph {seed}");
        match balance_ratio(&g) {
            Ok(t) => {
                assert_eq!(t, balanced as f64 / total as f64, "graph {seed}");
                checked += 1;
            }
            Err(_) => assert_eq!(total, 0),
        }
    }
    assert!(checked > 50);
}

/// One feature row by walking every node as a possible common neighbour.
fn brute_row(g: &SignedGraph, u: usize, v: usize) -> [f64; 9] {
    let n = g.n();
    let sign = |x: usize, y: usize| g.sign(x, y).unwrap_or(0);
    let count = |x: usize, s: i8| (0..n).filter(|&w| sign(x, w) == s).count() as f64;
    let mut row = [count(u, 1), count(u, -1), count(v, 1), count(v, -1), 0.0, 0.0, 0.0, 0.0, 0.0];
    for w in 0..n {
        let (a, b) = (sign(u, w), sign(w, v));
        if a != 0 && b != 0 {
            row[4] += 1.0;
            let idx = 5 + 2 * usize::from(a < 0) + usize::from(b < 0);
            row[idx] += 1.0;
        }
    }
    row
}

#[test]
fn features_match_neighbour_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for seed in 0..100 {
        let n = rng.random_range(2..=25);
        let g = random_signed(n, 0.3, 0.6, 500 + seed);
        let links: Vec<(usize, usize)> = g.edges().iter().map(|e| e.pair()).collect();
        if links.is_empty() {
            continue;
        }
        let f = extract_features(&g, &links).unwrap();
        for (k, &(u, v)) in links.iter().enumerate() {
            let expected = brute_row(&g, u, v);
            let got: Vec<f64> = f.rows.row(k).iter().copied().collect();
            assert_eq!(got, expected.to_vec(), "graph {seed} link ({u}, {v})");
        }
    }
}

fn weighted_sum(tape: &mut Tape, x: sgattack::numerics::Var, w: &Matrix) -> sgattack::numerics::Var {
    let w = tape.constant(w.clone());
    let prod = tape.mul(x, w);
    tape.sum(prod)
}

#[test]
fn sign_route_matches_dense_route() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_signed(18, 0.3, 0.7, 900 + seed);
        let edges: Vec<(usize, usize)> = g.edges().iter().map(|e| e.pair()).collect();
        let cut = edges.len() * 3 / 4;
        let (train, test) = edges.split_at(cut);
        let signs: Vec<f64> =
            (0..train.len()).map(|_| rng.random_range(0.2..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let abs = g.abs_adjacency();
        let abs_sq = &abs * &abs;
        let weights: Vec<Matrix> = [train.len(), test.len()]
            .iter()
            .map(|&m| Matrix::from_fn(m, 9, |_, _| rng.random_range(-1.0..1.0)))
            .collect();

        let mut dense = Tape::new();
        let s_d = dense.var(Matrix::from_column_slice(signs.len(), 1, &signs));
        let cells: Vec<Vec<(usize, usize)>> = train.iter().map(|&(u, v)| vec![(u, v), (v, u)]).collect();
        let a = dense.scatter(s_d, &cells, &Matrix::zeros(g.n(), g.n()));
        let fd = features_on_tape_multi(&mut dense, a, &abs_sq, &[train, test]);

        let mut sparse = Tape::new();
        let s_s = sparse.var(Matrix::from_column_slice(signs.len(), 1, &signs));
        let links: Vec<(usize, usize)> = train.iter().chain(test).copied().collect();
        let plan = Arc::new(SignedCountPlan::new(g.n(), train, &links));
        let fs = features_from_signs(&mut sparse, s_s, &plan, &abs_sq, &[train.len(), test.len()]);

        for i in 0..2 {
            let diff = (dense.value(fd[i]) - sparse.value(fs[i])).abs().max();
            assert!(diff < 1e-12, "seed {seed} set {i}: {diff}");
        }
        let parts: Vec<_> = (0..2).map(|i| weighted_sum(&mut dense, fd[i], &weights[i])).collect();
        let jd = dense.add(parts[0], parts[1]);
        let parts: Vec<_> = (0..2).map(|i| weighted_sum(&mut sparse, fs[i], &weights[i])).collect();
        let js = sparse.add(parts[0], parts[1]);
        let gd = dense.backward(jd).wrt(s_d);
        let gs = sparse.backward(js).wrt(s_s);
        assert!((gd - gs).abs().max() < 1e-10, "seed {seed}");
    }
}

#[test]
fn all_positive_graphs_are_fully_polarized() {
    for seed in 0..20 {
        let g = random_signed(15, 0.3, 1.0, 300 + seed);
        if g.num_edges() == 0 {
            continue;
        }
        let pol = graph_polarization(&g, 1.0).unwrap();
        assert!((pol - 1.0).abs() < 1e-9, "graph {seed}: {pol}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn balance_ratio_lies_in_the_unit_interval(seed in 0u64..1_000_000, n in 3usize..20, p in 0.1f64..0.9) {
        let g = random_signed(n, p, 0.5, seed);
        if let Ok(t) = balance_ratio(&g) {
            prop_assert!((0.0..=1.0).contains(&t));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn flipping_twice_restores_the_graph(seed in 0u64..1_000_000, pick in 0usize..1000) {
        let g = random_signed(12, 0.4, 0.6, seed);
        prop_assume!(g.num_edges() > 0);
        let (u, v) = g.edge(pick % g.num_edges()).pair();
        let once = g.flip_sign(u, v).unwrap();
        prop_assert_ne!(once.sign(u, v), g.sign(u, v));
        prop_assert_eq!(once.flip_sign(u, v).unwrap(), g);
    }

    #[test]
    fn one_flip_moves_the_balance_ratio_by_whole_triangles(seed in 0u64..1_000_000, pick in 0usize..1000) {
        let g = random_signed(14, 0.4, 0.6, seed);
        prop_assume!(g.num_edges() > 0);
        let total = triad_census(&g).total();
        prop_assume!(total > 0);
        let (u, v) = g.edge(pick % g.num_edges()).pair();
        let before = balance_ratio(&g).unwrap();
        let after = balance_ratio(&g.flip_sign(u, v).unwrap()).unwrap();
        let steps = (after - before) * total as f64;
        prop_assert!((steps - steps.round()).abs() < 1e-9);
        let through = g.neighbors(u).iter().filter(|&&(w, _)| g.sign(w, v).is_some()).count() as f64;
        prop_assert!(steps.abs() <= through + 1e-9);
    }

    #[test]
    fn auc_ignores_monotone_rescaling(
        scores in prop::collection::vec(-5.0f64..5.0, 4..40),
        flags in prop::collection::vec(any::<bool>(), 40),
        scale in 0.1f64..10.0,
        shift in -3.0f64..3.0,
    ) {
        let labels = &flags[..scores.len()];
        prop_assume!(labels.iter().any(|&b| b) && labels.iter().any(|&b| !b));
        let base = anomaly_auc(&scores, labels).unwrap();
        let affine: Vec<f64> = scores.iter().map(|s| s * scale + shift).collect();
        let cubed: Vec<f64> = scores.iter().map(|s| s.powi(3)).collect();
        prop_assert!((anomaly_auc(&affine, labels).unwrap() - base).abs() < 1e-12);
        prop_assert!((anomaly_auc(&cubed, labels).unwrap() - base).abs() < 1e-12);
    }
}
