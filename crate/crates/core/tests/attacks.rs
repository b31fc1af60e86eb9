use proptest::prelude::*;
use sgattack::attacks::{
    attack_loss_fextra, baseline_greedy_triads, baseline_rand, flip_attack, flip_attack_with_labels, log_likelihood,
    objective_value, penalized_loss, AttackConfig, AttackContext, AttackTarget, FextraFit,
};
use sgattack::balance::balance_ratio;
use sgattack::graph::{split_edges, EdgeSplit, SignedGraph};
use sgattack::numerics::{grad_check, Matrix, Tape};
use sgattack::synthetic::random_signed;

fn small_instance(seed: u64) -> (SignedGraph, EdgeSplit) {
    let g = random_signed(12, 0.45, 0.75, seed);
    let split = split_edges(&g, 0.25, seed).unwrap();
    (g, split)
}

fn fast_cfg(target: AttackTarget, budget: usize) -> AttackConfig {
    AttackConfig { budget: Some(budget), inner_l: 5, ..AttackConfig::for_target(target) }
}

#[test]
fn zero_budget_leaves_graph_untouched() {
    let (g, split) = small_instance(1);
    let trace = flip_attack(&g, &split, AttackTarget::FextraOls, &fast_cfg(AttackTarget::FextraOls, 0)).unwrap();
    assert!(trace.flips.is_empty());
    assert_eq!(trace.final_graph(&g).unwrap(), g);
}

#[test]
fn full_budget_flips_every_training_sign_once() {
    let (g, split) = small_instance(2);
    let b = split.train.len();
    let trace = flip_attack(&g, &split, AttackTarget::FextraOls, &fast_cfg(AttackTarget::FextraOls, b)).unwrap();
    assert_eq!(trace.pool().len(), b);
    let poisoned = trace.final_graph(&g).unwrap();
    for &k in &split.train {
        let (u, v) = g.edge(k).pair();
        assert_eq!(poisoned.sign(u, v), g.sign(u, v).map(|s| -s));
    }
    for &k in &split.test {
        let (u, v) = g.edge(k).pair();
        assert_eq!(poisoned.sign(u, v), g.sign(u, v));
    }
}

#[test]
fn over_budget_is_rejected() {
    let (g, split) = small_instance(3);
    let b = split.train.len() + 1;
    assert!(flip_attack(&g, &split, AttackTarget::FextraOls, &fast_cfg(AttackTarget::FextraOls, b)).is_err());
    assert!(baseline_rand(&g, &split, b, 0).is_err());
    assert!(baseline_greedy_triads(&g, &split, b).is_err());
}

fn replay<F>(seed: u64, mut at_step: F)
where
    F: FnMut(&mut AttackContext, &AttackConfig, &[f64], &[bool], (usize, usize)),
{
    let (g, split) = small_instance(seed);
    let cfg = fast_cfg(AttackTarget::FextraOls, 3);
    let trace = flip_attack(&g, &split, AttackTarget::FextraOls, &cfg).unwrap();
    let walk = cfg.walk(sgattack::pole::WalkMode::Unsym).unwrap();
    let labels = sgattack::victim::self_train_labels(sgattack::victim::VictimKind::Fextra, &g, &split, &walk).unwrap();
    let mut ctx = AttackContext::new(&g, &split, &labels.values).unwrap();
    let mut signs = ctx.clean_signs.clone();
    let mut flipped = vec![false; signs.len()];
    for f in &trace.flips {
        at_step(&mut ctx, &cfg, &signs, &flipped, (f.u, f.v));
        let k = ctx.train.iter().position(|&e| e == (f.u, f.v)).unwrap();
        signs[k] = -signs[k];
        flipped[k] = true;
    }
}

#[test]
fn greedy_flip_maximizes_the_finite_difference_gain() {
    for seed in 10..14 {
        replay(seed, |ctx, cfg, signs, flipped, chosen| {
            let h = 1e-5;
            let mut probe = signs.to_vec();
            let mut best = (f64::NEG_INFINITY, (0, 0));
            for k in (0..signs.len()).filter(|&k| !flipped[k]) {
                probe[k] = signs[k] + h;
                let up = objective_value(ctx, AttackTarget::FextraOls, cfg, &probe).unwrap();
                probe[k] = signs[k] - h;
                let down = objective_value(ctx, AttackTarget::FextraOls, cfg, &probe).unwrap();
                probe[k] = signs[k];
                let gain = -2.0 * signs[k] * (up - down) / (2.0 * h);
                if gain > best.0 + 1e-6 {
                    best = (gain, ctx.train[k]);
                }
            }
            assert_eq!(chosen, best.1, "seed {seed}");
        });
    }
}

/// Exact single-flip ranking of each greedy choice. The first-order score
/// is a poor proxy for a ±2 sign change through the least-squares refit, so
/// this does not hold in general; see the project notes.
#[test]
#[ignore]
fn greedy_flips_rank_in_the_exact_top_three() {
    for seed in 10..14 {
        replay(seed, |ctx, cfg, signs, flipped, chosen| {
            let now = objective_value(ctx, AttackTarget::FextraOls, cfg, signs).unwrap();
            let mut probe = signs.to_vec();
            let mut gains: Vec<(f64, (usize, usize))> = Vec::new();
            for k in (0..signs.len()).filter(|&k| !flipped[k]) {
                probe[k] = -signs[k];
                gains.push((objective_value(ctx, AttackTarget::FextraOls, cfg, &probe).unwrap() - now, ctx.train[k]));
                probe[k] = signs[k];
            }
            gains.sort_by(|a, b| b.0.total_cmp(&a.0));
            let rank = gains.iter().position(|&(_, e)| e == chosen).unwrap();
            assert!(rank < 3, "seed {seed}: chosen flip ranks {rank}");
        });
    }
}

#[test]
fn likelihood_plug_in_values() {
    let mut tape = Tape::new();
    let p = tape.constant(Matrix::from_element(7, 1, 0.9));
    let ll = log_likelihood(&mut tape, p, &[1.0; 7]);
    assert!((tape.scalar(ll) - 7.0 * 0.9f64.ln()).abs() < 1e-12);

    let p = tape.constant(Matrix::from_element(5, 1, 0.5));
    let ll = log_likelihood(&mut tape, p, &[1.0, 0.0, 1.0, 0.0, 0.0]);
    assert!((tape.scalar(ll) - 5.0 * 0.5f64.ln()).abs() < 1e-12);

    let p = tape.constant(Matrix::from_element(4, 1, 1.0));
    let ll = log_likelihood(&mut tape, p, &[1.0; 4]);
    assert!(tape.scalar(ll).abs() < 1e-9);
}

#[test]
fn ols_loss_gradient_matches_finite_differences() {
    let (g, split) = small_instance(5);
    let labels: Vec<bool> = split.hidden_signs.iter().map(|&s| s > 0).collect();
    let ctx = AttackContext::new(&g, &split, &labels).unwrap();
    let cfg = AttackConfig::for_target(AttackTarget::FextraOls);
    let s = Matrix::from_column_slice(ctx.clean_signs.len(), 1, &ctx.clean_signs);
    let err = grad_check(
        |tape, s| attack_loss_fextra(tape, &ctx, s, FextraFit::Ols, &cfg).unwrap(),
        &s,
        1e-5,
    );
    assert!(err <= 1e-3, "relative error {err}");
}

#[test]
fn meta_loss_gradient_matches_finite_differences() {
    let (g, split) = small_instance(6);
    let labels: Vec<bool> = split.hidden_signs.iter().map(|&s| s > 0).collect();
    let ctx = AttackContext::new(&g, &split, &labels).unwrap();
    let cfg = AttackConfig { inner_l: 10, inner_lr: 1.0, ..AttackConfig::for_target(AttackTarget::FextraMeta) };
    let s = Matrix::from_column_slice(ctx.clean_signs.len(), 1, &ctx.clean_signs);
    let err = grad_check(
        |tape, s| attack_loss_fextra(tape, &ctx, s, FextraFit::Meta, &cfg).unwrap(),
        &s,
        1e-5,
    );
    assert!(err <= 1e-3, "relative error {err}");
}

#[test]
fn zero_penalties_return_the_base_exactly() {
    let (g, split) = small_instance(7);
    let labels = vec![true; split.test.len()];
    let ctx = AttackContext::new(&g, &split, &labels).unwrap();
    let mut tape = Tape::new();
    let s = tape.var(Matrix::from_column_slice(ctx.clean_signs.len(), 1, &ctx.clean_signs));
    let a = ctx.adjacency_on_tape(&mut tape, s);
    let base = tape.scalar_constant(-3.25);
    let out = penalized_loss(&mut tape, base, a, &ctx, 0.0, 0.0, 1.0).unwrap();
    assert_eq!(tape.scalar(out).to_bits(), (-3.25f64).to_bits());
}

#[test]
fn balanced_triangle_adds_lambda() {
    let g = SignedGraph::from_edges(3, [(0, 1, 1), (1, 2, 1), (0, 2, 1)]).unwrap();
    let split = EdgeSplit::all_train(&g);
    let ctx = AttackContext::new(&g, &split, &[]).unwrap();
    let mut tape = Tape::new();
    let s = tape.var(Matrix::from_column_slice(3, 1, &ctx.clean_signs));
    let a = ctx.adjacency_on_tape(&mut tape, s);
    let base = tape.scalar_constant(0.75);
    let out = penalized_loss(&mut tape, base, a, &ctx, 1.0, 0.0, 1.0).unwrap();
    assert!((tape.scalar(out) - 1.75).abs() < 1e-12);
}

#[test]
fn zero_penalty_weights_reproduce_the_basic_attack() {
    let (g, split) = small_instance(8);
    let labels: Vec<bool> = split.hidden_signs.iter().map(|&s| s > 0).collect();
    let basic = fast_cfg(AttackTarget::FextraOls, 4);
    let explicit = AttackConfig { lambda: 0.0, eta: 0.0, ..basic.clone() };
    let a = flip_attack_with_labels(&g, &split, AttackTarget::FextraOls, &basic, &labels).unwrap();
    let b = flip_attack_with_labels(&g, &split, AttackTarget::FextraOls, &explicit, &labels).unwrap();
    assert_eq!(a.flips, b.flips);
    let penalized = AttackConfig { lambda: 2.0, eta: 1.0, ..basic };
    let c = flip_attack_with_labels(&g, &split, AttackTarget::FextraOls, &penalized, &labels).unwrap();
    assert_eq!(c.flips.len(), 4);
}

#[test]
fn sym_and_unsym_agree_on_a_regular_cycle() {
    let signs = [1, -1, 1, 1, -1, 1, 1, 1];
    let g = SignedGraph::from_edges(8, (0..8).map(|i| (i, (i + 1) % 8, signs[i]))).unwrap();
    let split = EdgeSplit::new(&g, vec![0, 1, 2, 4, 5, 6], vec![3, 7]).unwrap();
    let labels = [true, false];
    let mut ctx = AttackContext::new(&g, &split, &labels).unwrap();
    let base = AttackConfig { dim: 4, inner_l: 10, ..AttackConfig::for_target(AttackTarget::PoleSym) };
    let s = ctx.clean_signs.clone();
    let (vs, gs) = ctx.objective(AttackTarget::PoleSym, &base, &s).unwrap();
    let (vu, gu) = ctx.objective(AttackTarget::PoleUnsym, &base, &s).unwrap();
    assert!((vs - vu).abs() < 1e-6, "{vs} vs {vu}");
    assert!((gs - gu).amax() < 1e-6);
}

#[test]
fn pole_attack_runs_and_respects_the_pool() {
    let (g, split) = small_instance(9);
    let cfg = AttackConfig { dim: 4, ..fast_cfg(AttackTarget::PoleSym, 3) };
    let trace = flip_attack(&g, &split, AttackTarget::PoleSym, &cfg).unwrap();
    assert_eq!(trace.pool().len(), 3);
    assert_eq!(trace.loss_curve.len(), 3);
}

#[test]
fn greedy_triads_on_k4_picks_the_first_link() {
    let g = SignedGraph::from_edges(4, [(0, 1, 1), (0, 2, 1), (0, 3, 1), (1, 2, 1), (1, 3, 1), (2, 3, 1)]).unwrap();
    let trace = baseline_greedy_triads(&g, &EdgeSplit::all_train(&g), 1).unwrap();
    assert_eq!((trace.flips[0].u, trace.flips[0].v), (0, 1));
    let after = trace.final_graph(&g).unwrap();
    let census = sgattack::balance::triad_census(&after);
    assert_eq!((census.balanced, census.unbalanced), (2, 2));
}

#[test]
fn greedy_triads_without_triads_uses_tie_break_order() {
    let g = SignedGraph::from_edges(5, [(3, 4, 1), (0, 1, 1), (1, 2, -1), (2, 3, 1)]).unwrap();
    let trace = baseline_greedy_triads(&g, &EdgeSplit::all_train(&g), 4).unwrap();
    let order: Vec<(usize, usize)> = trace.flips.iter().map(|f| (f.u, f.v)).collect();
    assert_eq!(order, vec![(0, 1), (1, 2), (2, 3), (3, 4)]);
}

#[test]
fn rand_baseline_is_deterministic() {
    let (g, split) = small_instance(11);
    let a = baseline_rand(&g, &split, 5, 42).unwrap();
    assert_eq!(a, baseline_rand(&g, &split, 5, 42).unwrap());
    assert_ne!(a.flipped_pairs(5), baseline_rand(&g, &split, 5, 43).unwrap().flipped_pairs(5));
    let all = baseline_rand(&g, &split, split.train.len(), 1).unwrap();
    assert_eq!(all.pool().len(), split.train.len());
}

#[test]
fn trace_json_round_trip() {
    let (g, split) = small_instance(12);
    let mut trace = baseline_rand(&g, &split, 4, 0).unwrap();
    trace.set_checkpoints(&[0.05, 0.1], g.num_edges());
    let back = sgattack::attacks::AttackTrace::from_json(&trace.to_json().unwrap()).unwrap();
    assert_eq!(back, trace);
}

fn check_attack_invariants(g: &SignedGraph, split: &EdgeSplit, pairs: &[(usize, usize)]) {
    let poisoned = g.flip_signs(pairs).unwrap();
    let diff: f64 = (poisoned.adjacency() - g.adjacency()).abs().sum();
    assert_eq!(diff / 4.0, pairs.len() as f64);
    assert_eq!(poisoned.degrees(), g.degrees());
    let unique: std::collections::HashSet<_> = pairs.iter().collect();
    assert_eq!(unique.len(), pairs.len());
    let test: Vec<(usize, usize)> = split.test.iter().map(|&k| g.edge(k).pair()).collect();
    assert!(pairs.iter().all(|p| !test.contains(p)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn attacks_preserve_budget_degrees_and_pool(seed in 0u64..10_000, frac in 0.0f64..1.0) {
        let g = random_signed(10, 0.5, 0.7, seed);
        prop_assume!(g.num_edges() >= 6);
        let split = split_edges(&g, 0.3, seed).unwrap();
        let b = (frac * split.train.len() as f64) as usize;
        let labels: Vec<bool> = split.hidden_signs.iter().map(|&s| s > 0).collect();
        let ols = flip_attack_with_labels(&g, &split, AttackTarget::FextraOls, &fast_cfg(AttackTarget::FextraOls, b), &labels).unwrap();
        check_attack_invariants(&g, &split, &ols.flipped_pairs(b));
        check_attack_invariants(&g, &split, &baseline_rand(&g, &split, b, seed).unwrap().flipped_pairs(b));
        let gt = baseline_greedy_triads(&g, &split, b).unwrap();
        check_attack_invariants(&g, &split, &gt.flipped_pairs(b));
    }

    #[test]
    fn greedy_triads_never_raises_balance_when_a_gain_exists(seed in 0u64..10_000) {
        let g = random_signed(12, 0.5, 0.8, seed);
        let split = EdgeSplit::all_train(&g);
        let b = split.train.len().min(6);
        let trace = baseline_greedy_triads(&g, &split, b).unwrap();
        let mut prev = balance_ratio(&g).ok();
        for (i, f) in trace.flips.iter().enumerate() {
            let now = balance_ratio(&trace.poisoned(&g, i + 1).unwrap()).ok();
            if let (Some(p), Some(n)) = (prev, now) {
                if f.gain >= 0.0 {
                    prop_assert!(n <= p + 1e-12);
                }
            }
            prev = now;
        }
    }
}

