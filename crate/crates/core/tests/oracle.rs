use flipctl_core::bundled;
use flipctl_core::oracle::{
    bfs_reachable, in_degree_set, min_flip_path, min_flip_plans, reachable_set, render_trajectory,
    successor_closure, value_iteration, BlockOracle, Cost, ProductGraph, SizeGuard,
};
use flipctl_core::{
    enumerate_subsets, parse_network, parse_problem, FlipSet, NetworkDef, Problem, ReachabilitySpec,
    RewardMode,
};

fn example2() -> (NetworkDef, Problem) {
    let net = parse_network(bundled::EXAMPLE2_NETWORK).unwrap();
    let problem = parse_problem(bundled::EXAMPLE2_PROBLEM, 3).unwrap();
    (net, problem)
}

fn all_subsets(a: &FlipSet) -> Vec<FlipSet> {
    (0..=a.len()).flat_map(|k| enumerate_subsets(a, k).unwrap()).collect()
}

#[test]
fn minimal_certifying_subsets() {
    let (net, problem) = example2();
    let mut verdicts = Vec::new();
    for b in all_subsets(&problem.flip_candidates) {
        let g = ProductGraph::build(&net, &b).unwrap();
        verdicts.push((b.clone(), bfs_reachable(&g, &problem.spec).reachable));
    }
    let k = verdicts.iter().filter(|(_, ok)| *ok).map(|(b, _)| b.len()).min().unwrap();
    let minimal: Vec<String> = verdicts
        .iter()
        .filter(|(b, ok)| *ok && b.len() == k)
        .map(|(b, _)| b.to_string())
        .collect();
    assert_eq!(minimal, ["{1,2}", "{2,3}"]);
    // every singleton fails somewhere
    for (b, ok) in &verdicts {
        if b.len() < 2 {
            assert!(!ok, "{b}");
        }
    }
}

#[test]
fn witnesses_respect_length_bound() {
    let (net, problem) = example2();
    let bound = (1 << 3) - problem.spec.target().len();
    for b in [FlipSet::new(vec![1, 2]), FlipSet::new(vec![2, 3]), FlipSet::new(vec![1, 2, 3])] {
        let g = ProductGraph::build(&net, &b).unwrap();
        let rep = bfs_reachable(&g, &problem.spec);
        assert!(rep.reachable);
        for (x0, w) in &rep.witnesses {
            let w = w.as_ref().unwrap();
            assert!(w.len() <= bound, "x0={x0} len={}", w.len());
            assert_eq!(w.last().unwrap().next, 0b001);
        }
    }
}

#[test]
fn no_flips_leaves_some_state_stuck() {
    let (net, problem) = example2();
    let g = ProductGraph::build(&net, &FlipSet::empty()).unwrap();
    let rep = bfs_reachable(&g, &problem.spec);
    assert!(!rep.reachable);
    assert!(rep.witnesses.iter().any(|(_, w)| w.is_none()));
}

/// Minimum (flips, steps) by forward layered search over exact step counts;
/// a target hit ends the path.
fn layered_min(net: &NetworkDef, b: &FlipSet, spec: &ReachabilitySpec, x0: u64) -> Option<Cost> {
    if spec.is_target(x0) {
        return Some(Cost::ZERO);
    }
    let g = ProductGraph::build(net, b).unwrap();
    let states = 1usize << net.nodes();
    let mut layer = vec![None::<u32>; states];
    layer[x0 as usize] = Some(0);
    let mut best: Option<Cost> = None;
    for t in 1..=states as u32 {
        let mut next = vec![None::<u32>; states];
        for (x, c) in layer.iter().enumerate() {
            let Some(c) = *c else { continue };
            for a in 0..g.actions().len() {
                let y = g.successor(x as u64, a);
                let cand = c + g.actions().flip_count(a);
                if spec.is_target(y) {
                    let cost = Cost { flips: cand, steps: t };
                    best = Some(best.map_or(cost, |b| b.min(cost)));
                } else if next[y as usize].is_none_or(|v| cand < v) {
                    next[y as usize] = Some(cand);
                }
            }
        }
        layer = next;
    }
    best
}

#[test]
fn dijkstra_matches_layered_search() {
    let (net, problem) = example2();
    for b in all_subsets(&problem.flip_candidates) {
        let g = ProductGraph::build(&net, &b).unwrap();
        for &x0 in problem.spec.initial() {
            let plan = min_flip_path(&g, &problem.spec, x0);
            let want = layered_min(&net, &b, &problem.spec, x0);
            assert_eq!(plan.as_ref().map(|p| p.cost), want, "B={b} x0={x0:03b}");
            if let Some(p) = plan {
                assert_eq!(p.trajectory.len() as u32, p.cost.steps);
                let flips: u32 = p.trajectory.iter().map(|s| g.actions().flip_count(s.action)).sum();
                assert_eq!(flips, p.cost.flips);
            }
        }
    }
}

#[test]
fn plan_costs_shrink_with_larger_flip_sets() {
    let (net, problem) = example2();
    let subsets = all_subsets(&problem.flip_candidates);
    for small in &subsets {
        for big in subsets.iter().filter(|b| small.is_subset_of(b)) {
            let gs = ProductGraph::build(&net, small).unwrap();
            let gb = ProductGraph::build(&net, big).unwrap();
            for &x0 in problem.spec.initial() {
                let cs = min_flip_path(&gs, &problem.spec, x0).map(|p| p.cost);
                let cb = min_flip_path(&gb, &problem.spec, x0).map(|p| p.cost);
                if let Some(cs) = cs {
                    assert!(cb.unwrap() <= cs, "{small} vs {big} at {x0}");
                }
            }
        }
    }
}

#[test]
fn greedy_on_exact_values_is_lexicographically_optimal() {
    let (net, problem) = example2();
    let spec = &problem.spec;
    for b in [FlipSet::new(vec![1, 2]), FlipSet::new(vec![2, 3]), FlipSet::new(vec![1, 2, 3])] {
        let g = ProductGraph::build(&net, &b).unwrap();
        let vi = value_iteration(&g, spec, RewardMode::flip_penalty(8.0).unwrap(), 1.0).unwrap();
        for (x0, plan) in min_flip_plans(&g, spec) {
            let plan = plan.unwrap();
            let (mut x, mut flips, mut steps) = (x0, 0, 0);
            while !spec.is_target(x) && steps < 100 {
                let row = vi.row(x);
                let a = flipctl_core::qlearn::argmax(row);
                flips += g.actions().flip_count(a);
                steps += 1;
                x = g.successor(x, a);
            }
            assert_eq!(Cost { flips, steps }, plan.cost, "B={b} x0={x0:03b}");
        }
    }
}

#[test]
fn reach_values_follow_distances() {
    let (net, problem) = example2();
    let b = FlipSet::new(vec![1, 2]);
    let g = ProductGraph::build(&net, &b).unwrap();
    let vi = value_iteration(&g, &problem.spec, RewardMode::reach(), 0.99).unwrap();
    let dist = flipctl_core::oracle::distances_to_target(&g, &problem.spec);
    for x in 0..8u64 {
        if problem.spec.is_target(x) {
            continue;
        }
        let d = dist[x as usize].unwrap() as i32;
        let want = 100.0 * 0.99f64.powi(d - 1);
        assert!((vi.max_value(x) - want).abs() < 1e-8, "x={x:03b}");
    }
    // contraction: sup-norm deltas shrink at least by gamma once nonzero
    for w in vi.deltas.windows(2) {
        if w[0] > 1e-9 {
            assert!(w[1] <= 0.99 * w[0] + 1e-12);
        }
    }
}

#[test]
fn visited_states_fit_within_in_degree_set() {
    let (net, problem) = example2();
    let in_deg = in_degree_set(&net, SizeGuard::default()).unwrap();
    assert!(in_deg.len() <= 8);
    for b in all_subsets(&problem.flip_candidates) {
        let g = ProductGraph::build(&net, &b).unwrap();
        let v = successor_closure(&g, problem.spec.initial());
        assert!(v.len() <= in_deg.len(), "B={b}: |V|={} |I|={}", v.len(), in_deg.len());
        let closure = reachable_set(&g, problem.spec.initial());
        assert!(problem.spec.initial().iter().all(|x| closure.contains(x)));
    }
}

#[test]
fn trajectory_text() {
    let (net, problem) = example2();
    let g = ProductGraph::build(&net, &FlipSet::new(vec![2, 3])).unwrap();
    let plan = min_flip_path(&g, &problem.spec, 0b000).unwrap();
    let text = render_trajectory(g.actions(), &plan.trajectory);
    assert_eq!(text, "000 →(u=0,flip={}) 001\n");
}

/// The 27-node system truncated to its first three blocks.
fn truncated_large(blocks: usize) -> (NetworkDef, ReachabilitySpec) {
    let full = parse_network(bundled::EXAMPLE3_NETWORK).unwrap();
    let n = 3 * blocks;
    let mut text = format!("nodes: {n}\ninputs: 1\n");
    for (i, e) in full.updates().iter().take(n).enumerate() {
        text.push_str(&format!("x{}' = {}\n", i + 1, e));
    }
    let net = parse_network(&text).unwrap();
    let tail = "001".repeat(blocks - 1);
    let target = format!("001{}", "111".repeat(blocks - 1));
    let initial: Vec<u64> = ["000", "010", "011", "100", "101", "110", "111"]
        .iter()
        .map(|a| u64::from_str_radix(&format!("{a}{tail}"), 2).unwrap())
        .collect();
    let spec = ReachabilitySpec::new(n, initial, vec![u64::from_str_radix(&target, 2).unwrap()]).unwrap();
    (net, spec)
}

#[test]
fn block_oracle_matches_full_search_on_truncated_system() {
    let (net, spec) = truncated_large(3);
    let blocks: Vec<Vec<usize>> = (0..3).map(|b| vec![3 * b + 1, 3 * b + 2, 3 * b + 3]).collect();
    for b in [FlipSet::new(vec![1, 2, 6]), FlipSet::new(vec![2, 3, 6]), FlipSet::new(vec![1, 2, 3, 4, 5, 6])] {
        let oracle = BlockOracle::new(&net, &spec, &blocks, &b, None).unwrap();
        let g = ProductGraph::build(&net, &b).unwrap();
        for &x0 in spec.initial() {
            let full = min_flip_path(&g, &spec, x0).map(|p| p.cost);
            assert_eq!(oracle.min_flip_cost(x0), full, "B={b} x0={x0:09b}");
        }
    }
}

#[test]
fn large_system_kernels_by_block_oracle() {
    let net = parse_network(bundled::EXAMPLE3_NETWORK).unwrap();
    let problem = parse_problem(bundled::EXAMPLE3_PROBLEM, 27).unwrap();
    let blocks = problem.blocks.clone().unwrap();
    let reaches = |b: &FlipSet| {
        let oracle = BlockOracle::new(&net, &problem.spec, &blocks, b, None).unwrap();
        problem.spec.initial().iter().all(|&x0| oracle.min_flip_cost(x0).is_some())
    };
    for k in 0..=2 {
        for b in enumerate_subsets(&problem.flip_candidates, k).unwrap() {
            assert!(!reaches(&b), "{b}");
        }
    }
    let found: Vec<String> = enumerate_subsets(&problem.flip_candidates, 3)
        .unwrap()
        .into_iter()
        .filter(|b| reaches(b))
        .map(|b| b.to_string())
        .collect();
    assert_eq!(found, ["{1,2,6}", "{2,3,6}"]);
}

#[test]
fn dense_oracle_refuses_large_system() {
    let net = parse_network(bundled::EXAMPLE3_NETWORK).unwrap();
    let err = ProductGraph::build(&net, &FlipSet::new(vec![1, 2, 6])).unwrap_err();
    assert!(err.to_string().contains("n <= 20"));
}
