use proptest::prelude::*;
use rwre::coupling::{build_coupled, decompose, discrepancies};
use rwre::mark_law::{Atom, MarkLaw};
use rwre::network::{
    conductance_oracle, detailed_balance_defect, effective_conductance, level_sums, max_flow,
    max_flow_oracle,
};
use rwre::rng::stream_rng;
use rwre::stats::{ks_statistic, TargetCdf};
use rwre::tree::{generate_mt, Environment, MarkedTree, RayedTree};
use rwre::walk::{kernel, run_walk};
use std::sync::Arc;

/// Finite law with 1-4 atoms of 0-3 children. With `critical`, marks are
/// rescaled so that ρ(1) = 1 and every atom has at least one child.
fn law_strategy(critical: bool) -> impl Strategy<Value = MarkLaw> {
    let min_children = if critical { 1 } else { 0 };
    prop::collection::vec(
        (
            0.1f64..1.0,
            prop::collection::vec(0.05f64..2.0, min_children..4),
        ),
        1..5,
    )
    .prop_map(move |raw| {
        let total: f64 = raw.iter().map(|(w, _)| w).sum();
        let mut atoms: Vec<Atom> = raw
            .into_iter()
            .map(|(w, m)| Atom::new(w / total, m))
            .collect();
        if critical {
            let rho: f64 = atoms
                .iter()
                .map(|a| a.prob * a.marks.iter().sum::<f64>())
                .sum();
            for a in &mut atoms {
                for m in &mut a.marks {
                    *m /= rho;
                }
            }
        }
        MarkLaw::finite(atoms).unwrap()
    })
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn recursions_match_oracles(law in law_strategy(false), seed in any::<u64>(), depth in 1usize..7) {
        let t = generate_mt(Arc::new(law), depth, &mut stream_rng(seed, 0)).unwrap();
        prop_assert!(close(effective_conductance(&t, depth).unwrap(), conductance_oracle(&t, depth).unwrap()));
        prop_assert!(close(max_flow(&t, depth).unwrap(), max_flow_oracle(&t, depth).unwrap()));
    }

    #[test]
    fn every_level_is_a_cut(law in law_strategy(false), seed in any::<u64>(), depth in 1usize..7) {
        let t = generate_mt(Arc::new(law), depth, &mut stream_rng(seed, 1)).unwrap();
        let flow = max_flow(&t, depth).unwrap();
        for (k, s) in level_sums(&t, depth).unwrap().into_iter().enumerate().skip(1) {
            prop_assert!(flow <= s * (1.0 + 1e-12), "level {} sum {} below flow {}", k, s, flow);
        }
    }

    #[test]
    fn detailed_balance_on_mt_and_imt(law in law_strategy(true), seed in any::<u64>()) {
        let law = Arc::new(law);
        let t = generate_mt(law.clone(), 5, &mut stream_rng(seed, 2)).unwrap();
        prop_assert!(detailed_balance_defect(&t).unwrap() <= 1e-12);
        let mut r = RayedTree::new(law, seed, 4).unwrap();
        r.expand_subtrees(3).unwrap();
        prop_assert!(detailed_balance_defect(&r).unwrap() <= 1e-12);
    }

    #[test]
    fn kernels_are_probability_vectors(law in law_strategy(true), seed in any::<u64>()) {
        let mut r = RayedTree::new(Arc::new(law), seed, 3).unwrap();
        r.expand_subtrees(2).unwrap();
        for x in 0..r.len() {
            if let Ok(k) = kernel(&r, x) {
                let total: f64 = k.iter().map(|p| p.1).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(k.iter().all(|p| p.1 > 0.0));
            }
        }
    }

    #[test]
    fn walks_are_reproducible_and_adjacent(law in law_strategy(true), seed in any::<u64>()) {
        let law = Arc::new(law);
        let mut a = MarkedTree::new(law.clone(), seed);
        let mut b = MarkedTree::new(law, seed);
        let ta = run_walk(&mut a, 0, 300, &mut stream_rng(seed, 3)).unwrap();
        let tb = run_walk(&mut b, 0, 300, &mut stream_rng(seed, 3)).unwrap();
        prop_assert_eq!(&ta.vertices, &tb.vertices);
        for w in ta.vertices.windows(2) {
            prop_assert!(a.parent(w[0]) == Some(w[1]) || a.parent(w[1]) == Some(w[0]));
        }
    }

    #[test]
    fn coupling_invariants(law in law_strategy(true), seed in any::<u64>()) {
        let law = Arc::new(law);
        let mut t = MarkedTree::new(law, seed);
        let traj = run_walk(&mut t, 0, 500, &mut stream_rng(seed, 4)).unwrap();
        let d = decompose(&mut t, &traj).unwrap();
        prop_assert!(d.tau.len() == d.eta.len() + d.partial as usize);
        let mut prev = 0;
        for (i, &tau) in d.tau.iter().enumerate() {
            prop_assert!(prev <= tau);
            if let Some(&eta) = d.eta.get(i) {
                prop_assert!(tau < eta);
                prev = eta;
            }
        }
        for i in 1..d.u_sizes.len() {
            prop_assert_eq!(d.u_sizes[i], d.u_sizes[i - 1] + d.explored[i - 1].size - 1);
        }
        let pair = build_coupled(&t, &traj, &d, seed, &mut stream_rng(seed, 5)).unwrap();
        prop_assert_eq!(pair.excursion_lengths(), d.excursion_lengths());
        let horizon = pair.steps().min(d.steps);
        let x = discrepancies(&pair, &d, &traj, 0.3, horizon).unwrap();
        prop_assert!(x.r >= 0 && x.b >= 0);
        prop_assert!(x.delta <= horizon && x.delta_tilde <= horizon);
    }

    #[test]
    fn ks_is_invariant_under_negation(xs in prop::collection::vec(-5.0f64..5.0, 100..300)) {
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        let a = ks_statistic(&xs, TargetCdf::StandardNormal).unwrap();
        let b = ks_statistic(&neg, TargetCdf::StandardNormal).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }
}
