use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_budget, AttackTrace, FlipRecord};
use crate::error::Result;
use crate::graph::{EdgeSplit, ObservedGraph, SignedGraph};

/// `budget` distinct training links chosen uniformly at random.
pub fn baseline_rand(g0: &SignedGraph, split: &EdgeSplit, budget: usize, seed: u64) -> Result<AttackTrace> {
    check_budget(budget, split)?;
    let mut order = split.train.clone();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut trace = AttackTrace::empty("rand", budget);
    for (step, &k) in order[..budget].iter().enumerate() {
        let (u, v) = g0.edge(k).pair();
        trace.flips.push(FlipRecord { u, v, step, gain: 0.0 });
    }
    Ok(trace)
}

/// Per step, flips the training link whose flip removes the most balanced
/// visible triads. The loss curve holds the visible balanced-minus-unbalanced
/// triad count before each flip.
pub fn baseline_greedy_triads(g0: &SignedGraph, split: &EdgeSplit, budget: usize) -> Result<AttackTrace> {
    check_budget(budget, split)?;
    let obs = ObservedGraph::new(g0, split);
    let mut a = obs.signed.clone();
    let train = obs.train_links.clone();
    let mut flipped = vec![false; train.len()];
    let mut trace = AttackTrace::empty("greedy-triads", budget);

    // s_uv · (A²)[u,v]: balanced minus unbalanced triads through (u, v)
    let through = |a: &nalgebra::DMatrix<f64>, u: usize, v: usize| -> f64 {
        a[(u, v)] * a.column(u).iter().zip(a.column(v).iter()).map(|(x, y)| x * y).sum::<f64>()
    };
    let mut score: Vec<f64> = train.iter().map(|&(u, v)| through(&a, u, v)).collect();

    for step in 0..budget {
        let signed_triads: f64 = score.iter().sum::<f64>() / 3.0;
        trace.loss_curve.push(signed_triads);
        let mut best: Option<usize> = None;
        for k in (0..train.len()).filter(|&k| !flipped[k]) {
            best = match best {
                Some(b) if score[b] > score[k] || (score[b] == score[k] && train[b] < train[k]) => Some(b),
                _ => Some(k),
            };
        }
        let k = best.expect("budget bounded by training links");
        let (u, v) = train[k];
        trace.ordering.push(vec![(u, v)]);
        trace.flips.push(FlipRecord { u, v, step, gain: 2.0 * score[k] });
        a[(u, v)] = -a[(u, v)];
        a[(v, u)] = -a[(v, u)];
        flipped[k] = true;
        // only links sharing a triangle with (u, v), and (u, v) itself, change
        for (j, &(x, y)) in train.iter().enumerate() {
            let touches = (x == u || x == v || y == u || y == v)
                && (j == k || a[(x, y)] != 0.0 && shares_triangle(&a, (x, y), (u, v)));
            if touches {
                score[j] = through(&a, x, y);
            }
        }
    }
    Ok(trace)
}

fn shares_triangle(a: &nalgebra::DMatrix<f64>, e: (usize, usize), f: (usize, usize)) -> bool {
    let shared = [e.0, e.1].into_iter().find(|x| *x == f.0 || *x == f.1);
    match shared {
        Some(s) => {
            let p = if e.0 == s { e.1 } else { e.0 };
            let q = if f.0 == s { f.1 } else { f.0 };
            p != q && a[(p, q)] != 0.0
        }
        None => false,
    }
}
