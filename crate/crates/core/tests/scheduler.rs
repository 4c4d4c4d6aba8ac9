use std::collections::HashSet;
use std::time::Duration;

use permon_core::model::{AgentModel, Point, Scenario};
use permon_core::scenarios::{golden_scalar, scalar_target, three_target};
use permon_core::scheduler::{
    canonicalize, cycle_length, edge_cost, expand, init_candidates, schedule_from_sequence, sdp_pm,
    visit_slots, CandidateList, SearchConfig, TargetGraph,
};
use proptest::prelude::*;

fn two_node() -> Scenario {
    Scenario {
        name: "two-node".into(),
        targets: vec![
            scalar_target(1, Point::new(0.0, 0.0), 0.3),
            scalar_target(2, Point::new(0.0, 1.0), 0.3),
        ],
        agent: AgentModel { u_max: 0.3, s0: Point::new(0.0, 0.0) },
    }
}

/// ξ(1,2) = 3, ξ(2,3) = 5, ξ(1,3) = 4.
fn small_graph() -> TargetGraph {
    TargetGraph::from_matrix(vec![vec![1, 3, 4], vec![3, 1, 5], vec![4, 5, 1]]).unwrap()
}

#[test]
fn two_node_edge_costs() {
    let sc = two_node();
    // (1 − 0.6)/0.3 = 1.33 → 2
    assert_eq!(edge_cost(&sc, 1, 2), 2);
    assert_eq!(edge_cost(&sc, 2, 1), 2);
    assert_eq!(edge_cost(&sc, 1, 1), 1);
    assert_eq!(edge_cost(&sc, 2, 2), 1);
}

#[test]
fn two_node_schedule() {
    let g = TargetGraph::from_scenario(&two_node());
    let s = schedule_from_sequence(&g, &[1, 1, 2]).unwrap();
    assert_eq!(s.tau, 5);
    assert_eq!(s.b[0], vec![true, true, false, false, false]);
    assert_eq!(s.b[1], vec![false, false, false, true, false]);
    assert_eq!(s.visit_slots, vec![0, 1, 3]);
}

#[test]
fn overlapping_ranges_cost_one_step() {
    let mut sc = two_node();
    sc.targets[1].position = Point::new(0.0, 0.5);
    assert_eq!(edge_cost(&sc, 1, 2), 1);
}

#[test]
fn exact_multiple_is_not_rounded_up() {
    let mut sc = two_node();
    // gap 0.9 = 3·u_max, up to rounding in the subtraction
    sc.targets[1].position = Point::new(0.0, 1.5);
    assert_eq!(edge_cost(&sc, 1, 2), 3);
}

#[test]
fn small_graph_lengths() {
    let g = small_graph();
    assert_eq!(cycle_length(&g, &[1, 2, 3]), 12);
    assert_eq!(cycle_length(&g, &[1, 3, 2]), 12);
    for (seq, tau) in [
        (vec![1, 1, 2, 3], 13),
        (vec![1, 2, 2, 3], 13),
        (vec![1, 3, 2, 3], 18),
        (vec![1, 2, 1, 3], 14),
        (vec![1, 2, 3, 3], 13),
        (vec![1, 2, 3, 1], 13),
        (vec![1, 2, 3, 2], 16),
    ] {
        assert_eq!(cycle_length(&g, &seq), tau, "{seq:?}");
    }
}

#[test]
fn small_graph_initial_list_and_children() {
    let g = small_graph();
    let list = init_candidates(&g);
    let items: Vec<_> = list.iter().map(|(s, t)| (s.to_vec(), t)).collect();
    assert_eq!(items, vec![(vec![1, 2, 3], 12), (vec![1, 3, 2], 12)]);

    let children = expand(&[1, 2, 3], 3);
    assert_eq!(children.len(), 9);
    let expected = [
        vec![1, 1, 2, 3],
        vec![1, 2, 2, 3],
        vec![1, 3, 2, 3],
        vec![1, 2, 1, 3],
        vec![1, 2, 2, 3],
        vec![1, 2, 3, 3],
        vec![1, 2, 3, 1],
        vec![1, 2, 3, 2],
        vec![1, 2, 3, 3],
    ];
    let got: HashSet<_> = children.iter().cloned().collect();
    let want: HashSet<_> = expected.iter().cloned().collect();
    assert_eq!(got, want);

    let mut list = init_candidates(&g);
    let (first, tau) = list.pop().unwrap();
    assert_eq!((first.clone(), tau), (vec![1, 2, 3], 12));
    for c in expand(&first, 3) {
        list.push(&g, &c);
    }
    // the other length-12 tour comes next, then length 13
    assert_eq!(list.pop().unwrap(), (vec![1, 3, 2], 12));
    assert_eq!(list.peek().unwrap().1, 13);
}

#[test]
fn initial_list_sizes() {
    for (n, want) in [(1, 1), (2, 1), (3, 2), (4, 6), (5, 24)] {
        let g = TargetGraph::from_matrix(vec![vec![1; n]; n]).unwrap();
        assert_eq!(init_candidates(&g).len(), want, "N = {n}");
    }
}

#[test]
fn rotations_are_deduplicated() {
    let g = small_graph();
    let mut list = CandidateList::new();
    assert!(list.push(&g, &[2, 3, 1, 1]));
    assert!(!list.push(&g, &[1, 1, 2, 3]));
    assert!(!list.push(&g, &[3, 1, 1, 2]));
    assert!(list.push(&g, &[1, 1, 3, 2]));
    assert_eq!(list.len(), 2);
    list.pop();
    // popped entries stay seen
    assert!(!list.push(&g, &[1, 2, 3, 1]));
}

/// Canonical covering sequences of length `len` over `1..=n`.
fn covering_sequences(n: usize, len: usize) -> HashSet<Vec<usize>> {
    let mut out = HashSet::new();
    let total = n.pow(len as u32);
    for mut code in 0..total {
        let mut s = Vec::with_capacity(len);
        for _ in 0..len {
            s.push(code % n + 1);
            code /= n;
        }
        if (1..=n).all(|v| s.contains(&v)) {
            out.insert(canonicalize(&s));
        }
    }
    out
}

#[test]
fn expansion_reaches_every_short_sequence() {
    for n in 2..=3 {
        let g = TargetGraph::from_matrix(vec![vec![1; n]; n]).unwrap();
        let mut reached: HashSet<Vec<usize>> = HashSet::new();
        let mut frontier: Vec<Vec<usize>> = init_candidates(&g).iter().map(|(s, _)| s.to_vec()).collect();
        for _ in 0..2 {
            reached.extend(frontier.iter().cloned());
            frontier = frontier
                .iter()
                .flat_map(|s| expand(s, n))
                .map(|s| canonicalize(&s))
                .filter(|s| !reached.contains(s))
                .collect::<HashSet<_>>()
                .into_iter()
                .collect();
        }
        reached.extend(frontier);
        for len in n..=n + 2 {
            for s in covering_sequences(n, len) {
                assert!(reached.contains(&s), "N = {n}: {s:?} unreachable");
            }
        }
    }
}

#[test]
fn triangle_inequality_detection() {
    assert!(small_graph().satisfies_triangle_inequality());
    assert!(TargetGraph::from_scenario(&three_target()).satisfies_triangle_inequality());
    // a midway target: 1 → 3 costs more than 1 → 2 → 3
    let g = TargetGraph::from_matrix(vec![vec![1, 1, 4], vec![1, 1, 1], vec![4, 1, 1]]).unwrap();
    assert!(!g.satisfies_triangle_inequality());
    // so inserting a visit can shorten the cycle
    assert!(cycle_length(&g, &[1, 2, 3]) < cycle_length(&g, &[1, 3]));
}

#[test]
fn from_matrix_rejects_bad_costs() {
    assert!(TargetGraph::from_matrix(vec![vec![2]]).is_err());
    assert!(TargetGraph::from_matrix(vec![vec![1, 0], vec![1, 1]]).is_err());
    assert!(TargetGraph::from_matrix(vec![vec![1, 1], vec![1]]).is_err());
}

#[test]
fn schedule_rejects_unknown_ids() {
    let g = small_graph();
    assert!(schedule_from_sequence(&g, &[]).is_err());
    assert!(schedule_from_sequence(&g, &[1, 4]).is_err());
    assert!(schedule_from_sequence(&g, &[0, 1]).is_err());
}

#[test]
fn one_iteration_on_one_target_is_stationary() {
    let sc = golden_scalar();
    let state = sdp_pm(&sc, &SearchConfig { n_iter: 1, ..SearchConfig::default() });
    assert_eq!(state.explored, 1);
    let best = state.best_solution.expect("feasible");
    assert_eq!(best.tau(), 1);
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    assert!((best.cost - 1.0 / phi).abs() < 1e-6, "{}", best.cost);
    assert!((best.positions[0] - sc.targets[0].position).norm() < 1e-4);
}

#[test]
fn search_history_is_consistent() {
    let sc = three_target();
    let config = SearchConfig { n_iter: 12, keep_solutions: true, ..SearchConfig::default() };
    let state = sdp_pm(&sc, &config);
    assert_eq!(state.history.len(), 12);
    assert_eq!(state.explored, 12);
    let mut best = f64::INFINITY;
    for (k, r) in state.history.iter().enumerate() {
        assert_eq!(r.iteration, k + 1);
        best = best.min(r.cost);
        assert_eq!(r.best_cost, best);
    }
    assert_eq!(state.best_cost, best);
    assert!(state.history[0].cost.is_finite());
    // pop order is by cycle length when ξ is a metric
    assert!(state.history.windows(2).all(|w| w[0].tau <= w[1].tau));
    assert_eq!(state.solutions.len(), state.history.iter().filter(|r| r.cost.is_finite()).count());
}

#[test]
fn parallel_search_matches_sequential() {
    let sc = three_target();
    let seq = sdp_pm(&sc, &SearchConfig { n_iter: 8, ..SearchConfig::default() });
    let par = sdp_pm(&sc, &SearchConfig { n_iter: 8, parallel: 3, ..SearchConfig::default() });
    for (a, b) in seq.history.iter().zip(&par.history) {
        assert_eq!(a.sequence, b.sequence);
        assert_eq!(a.status, b.status);
        assert_eq!(a.cost, b.cost);
    }
    assert_eq!(seq.best_cycle, par.best_cycle);
}

#[test]
fn zero_budget_runs_nothing() {
    let sc = three_target();
    let state = sdp_pm(&sc, &SearchConfig { budget: Some(Duration::ZERO), ..SearchConfig::default() });
    assert_eq!(state.explored, 0);
    assert!(state.best_solution.is_none());
    assert_eq!(state.remaining, 2);
}

#[test]
fn visit_slots_are_cumulative() {
    let g = small_graph();
    assert_eq!(visit_slots(&g, &[1, 2, 3]), vec![0, 3, 8]);
    assert_eq!(visit_slots(&g, &[1, 2, 1, 3]), vec![0, 3, 6, 10]);
}

proptest! {
    #[test]
    fn canonical_form_is_a_rotation_invariant(seq in prop::collection::vec(1usize..5, 1..8), r in 0usize..8) {
        let c = canonicalize(&seq);
        let k = r % seq.len();
        let rotated: Vec<usize> = seq[k..].iter().chain(&seq[..k]).copied().collect();
        prop_assert_eq!(&canonicalize(&rotated), &c);
        prop_assert_eq!(&canonicalize(&c), &c);
        prop_assert!(c <= seq);
        let mut a = c.clone();
        let mut b = seq.clone();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn cycle_length_is_rotation_invariant(
        costs in prop::collection::vec(1usize..6, 16),
        seq in prop::collection::vec(1usize..5, 1..8),
        r in 0usize..8,
    ) {
        let xi: Vec<Vec<usize>> =
            (0..4).map(|i| (0..4).map(|h| if i == h { 1 } else { costs[4 * i.min(h) + i.max(h)] }).collect()).collect();
        let g = TargetGraph::from_matrix(xi).unwrap();
        let k = r % seq.len();
        let rotated: Vec<usize> = seq[k..].iter().chain(&seq[..k]).copied().collect();
        prop_assert_eq!(cycle_length(&g, &seq), cycle_length(&g, &rotated));
    }

    #[test]
    fn schedules_follow_the_sequence(seq in prop::collection::vec(1usize..4, 3..9)) {
        prop_assume!((1..=3).all(|v| seq.contains(&v)));
        let g = small_graph();
        let s = schedule_from_sequence(&g, &seq).unwrap();
        prop_assert_eq!(s.tau, cycle_length(&g, &seq));
        let designated: usize = s.b.iter().map(|row| row.iter().filter(|&&x| x).count()).sum();
        prop_assert_eq!(designated, seq.len());
        for (&id, &k) in seq.iter().zip(&s.visit_slots) {
            prop_assert_eq!(s.owner(k), Some(id));
        }
    }
}
