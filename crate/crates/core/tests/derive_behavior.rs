//! Decode, validity, depth, export and retrain contracts, each checked
//! against an independently coded reference where one exists.

use std::collections::{BTreeMap, BTreeSet};

use stretchnas_autodiff::rng::Rng;
use stretchnas_autodiff::Tensor;
use stretchnas_core::data::{generate, GeneratorKind, SyntheticSpec};
use stretchnas_core::derive::{
    cell_depth, decode_operations, decode_topology, export_arch, export_dot, import_arch,
    retrain_from_scratch, top2_decode, validate, DerivedArchitecture, DerivedCell, Provenance,
    RetrainHyper,
};
use stretchnas_core::search_space::{CellKind, CellOp, SupernetConfig};
use stretchnas_core::topology::{TopologyMode, TopologyVariables};
use stretchnas_core::Error;

fn random_cell(n: usize, kind: CellKind, rng: &mut Rng, allow_starved: bool) -> DerivedCell {
    let mut removed = BTreeSet::new();
    for node in 3..n {
        if rng.uniform() < 0.25 {
            removed.insert(node);
        }
    }
    let ops = CellOp::default_set();
    let mut edges = BTreeMap::new();
    for j in 3..=n {
        if removed.contains(&j) {
            continue;
        }
        if allow_starved && rng.uniform() < 0.35 {
            continue;
        }
        let mut sources: Vec<usize> = (1..j).filter(|i| !removed.contains(i)).collect();
        rng.shuffle(&mut sources);
        let take = 1 + rng.below(sources.len().min(3));
        for &i in sources.iter().take(take) {
            edges.insert((i, j), ops[rng.below(ops.len())]);
        }
    }
    let cell = DerivedCell {
        n_nodes: n,
        kind,
        edges,
        removed,
    };
    cell.check().expect("generator must produce well-formed cells");
    cell
}

fn random_arch(seed: u64) -> DerivedArchitecture {
    let mut rng = Rng::derive(seed, "test-arch", 0);
    let n = 4 + rng.below(4);
    let arch = DerivedArchitecture {
        provenance: Provenance {
            config_hash: format!("{:016x}", rng.next_u64()),
            epoch: rng.below(50),
            layers: 1 + rng.below(8),
        },
        normal: random_cell(n, CellKind::Normal, &mut rng, true),
        reduction: random_cell(n, CellKind::Reduction, &mut rng, true),
    };
    arch.check().expect("generator must produce checkable archs");
    arch
}

#[test]
fn export_import_is_the_identity_on_random_architectures() {
    for seed in 0..60 {
        let arch = random_arch(seed);
        let text = export_arch(&arch);
        let back = import_arch(&text).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{text}"));
        assert_eq!(back, arch, "seed {seed}");
        assert_eq!(export_arch(&back), text, "seed {seed}: text must be stable");
    }
}

#[test]
fn import_rejects_malformed_inputs_with_line_numbers() {
    let good = export_arch(&random_arch(1));

    let cases: Vec<(String, &str)> = vec![
        (good.replace("stretchnas-arch v1", "stretchnas-arch v2"), "version"),
        (good.replace("[normal]", "[reduction]"), "section"),
        (good.replacen("edge = ", "wire = ", 1), "unknown key"),
        (good.replace("sep_conv_3x3", "sep_conv_9x9"), "operation"),
        (String::from("stretchnas-arch v1\n"), "truncated"),
    ];
    for (text, what) in cases {
        if text == good {
            continue;
        }
        let err = import_arch(&text).expect_err(what);
        match err {
            Error::Parse { line, .. } => assert!(line >= 1, "{what}: line {line}"),
            other => panic!("{what}: expected a parse error, got {other}"),
        }
    }

    let bad_edge = "stretchnas-arch v1\n[provenance]\nconfig_hash = 00ff\nepoch = 0\nlayers = 2\n\
[normal]\nn_nodes = 4\nremoved = \nedge = 3 3 identity\n[reduction]\nn_nodes = 4\nremoved = \nedge = 1 4 identity\n";
    let err = import_arch(bad_edge).expect_err("self-loop");
    assert!(
        err.to_string().contains("non-topological edge"),
        "got: {err}"
    );

    let bad_target = bad_edge.replace("edge = 3 3 identity", "edge = 1 2 identity");
    let err = import_arch(&bad_target).expect_err("edge into an input node");
    assert!(err.to_string().contains("non-topological edge"), "got: {err}");

    let bad_removed = bad_edge.replacen("removed = \n", "removed = 4\n", 1);
    let err = import_arch(&bad_removed).expect_err("output node removed");
    assert!(err.to_string().contains("removable range"), "got: {err}");
}

#[test]
fn dot_export_emits_one_line_per_edge_and_per_kept_node() {
    let cell = DerivedCell {
        n_nodes: 5,
        kind: CellKind::Normal,
        edges: [
            ((1, 3), CellOp::Identity),
            ((2, 3), CellOp::SepConv3x3),
            ((3, 5), CellOp::AvgPool3x3),
        ]
        .into(),
        removed: [4].into(),
    };
    cell.check().unwrap();
    let dot = export_dot(&cell);
    let expected = "digraph cell {\n  rankdir=LR;\n  \"c_{k-2}\" -> \"3\" [label=\"identity\"];\n  \"c_{k-1}\" -> \"3\" [label=\"sep_conv_3x3\"];\n  \"3\" -> \"5\" [label=\"avg_pool_3x3\"];\n  \"3\" -> \"out\";\n  \"5\" -> \"out\";\n}\n";
    assert_eq!(dot, expected);
}

#[test]
fn free_mode_zero_code_removes_a_node_and_its_edges() {
    let n = 5;
    let mut vars = TopologyVariables::zeros(TopologyMode::Arbitrary, n);
    // Node 1 keeps edges into 3 and 4 (bits for targets 2..=5 are MSB first).
    let mut s1 = vec![0.0; 16];
    s1[0b0110] = 5.0;
    vars.set_beta(1, Tensor::vector(&s1)).unwrap();
    // Node 2 feeds only node 4.
    let mut s2 = vec![0.0; 8];
    s2[0b010] = 5.0;
    vars.set_beta(2, Tensor::vector(&s2)).unwrap();
    // Node 3 wins its all-zero code: removed, and (1, 3) must go with it.
    let mut s3 = vec![0.0; 4];
    s3[0] = 5.0;
    vars.set_beta(3, Tensor::vector(&s3)).unwrap();
    // Node 4 feeds node 5.
    let mut s4 = vec![0.0; 2];
    s4[1] = 5.0;
    vars.set_beta(4, Tensor::vector(&s4)).unwrap();

    let topo = decode_topology(&vars).unwrap();
    assert_eq!(topo.removed, [3].into());
    let expect: BTreeSet<(usize, usize)> = [(1, 4), (2, 4), (4, 5)].into();
    assert_eq!(topo.edges, expect);
}

#[test]
fn tied_scores_decode_to_the_lowest_index() {
    // All-zero scores tie everywhere; argmax must pick index 0 in each space.
    for mode in [
        TopologyMode::InputPair,
        TopologyMode::OutputPair,
        TopologyMode::Arbitrary,
    ] {
        let n = 5;
        let vars = TopologyVariables::zeros(mode, n);
        let topo = decode_topology(&vars).unwrap();
        match mode {
            // Pair (1, 2) wins every node.
            TopologyMode::InputPair => {
                let expect: BTreeSet<(usize, usize)> =
                    [(1, 3), (1, 4), (1, 5), (2, 3), (2, 4), (2, 5)].into();
                assert_eq!(topo.edges, expect);
                assert!(topo.removed.is_empty());
            }
            // The first successor pair of node i is (i+1, i+2); targets
            // below 3 are dropped and the closing edge is always on.
            TopologyMode::OutputPair => {
                let expect: BTreeSet<(usize, usize)> =
                    [(1, 3), (2, 3), (2, 4), (3, 4), (3, 5), (4, 5)].into();
                assert_eq!(topo.edges, expect);
            }
            // Code zero wins everywhere: every removable node goes away and
            // the survivors keep nothing.
            TopologyMode::Arbitrary => {
                assert_eq!(topo.removed, [3, 4].into());
                assert!(topo.edges.is_empty());
            }
        }
    }

    // Operation ties resolve to the lowest operation index, skipping the
    // null operation even when it sits first.
    let ops = vec![CellOp::Zero, CellOp::MaxPool3x3, CellOp::Identity];
    let kept: BTreeSet<(usize, usize)> = [(1, 3)].into();
    let mut alpha = BTreeMap::new();
    alpha.insert((1, 3), Tensor::vector(&[9.0, 1.0, 1.0]));
    let decoded = decode_operations(&alpha, &kept, &ops).unwrap();
    assert_eq!(decoded[&(1, 3)], CellOp::MaxPool3x3);
}

/// Reference validity: grow the set of computable nodes from the two inputs
/// by a fixpoint, then ask whether every kept node became computable. This
/// must agree with the starvation scan because edges only point forward.
fn fixpoint_valid(cell: &DerivedCell) -> bool {
    let kept = cell.kept_intermediates();
    if kept.is_empty() {
        return false;
    }
    let mut computable: BTreeSet<usize> = [1, 2].into();
    loop {
        let mut changed = false;
        for &j in &kept {
            if computable.contains(&j) {
                continue;
            }
            let ins = cell.in_edges(j);
            if !ins.is_empty() && ins.iter().all(|(i, _)| computable.contains(i)) {
                computable.insert(j);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    kept.iter().all(|j| computable.contains(j))
}

#[test]
fn validity_agrees_with_a_reachability_fixpoint() {
    let mut saw_valid = 0;
    let mut saw_invalid = 0;
    for seed in 0..200 {
        let mut rng = Rng::derive(seed, "validity-cells", 0);
        let n = 4 + rng.below(4);
        let cell = random_cell(n, CellKind::Normal, &mut rng, true);
        let report = validate(&cell);
        assert_eq!(
            report.valid,
            fixpoint_valid(&cell),
            "seed {seed}: {cell:?}"
        );
        assert_eq!(report.empty, cell.kept_intermediates().is_empty());
        for &node in &report.starved {
            assert!(cell.in_edges(node).is_empty());
        }
        if report.valid {
            saw_valid += 1;
        } else {
            saw_invalid += 1;
        }
    }
    assert!(saw_valid > 20 && saw_invalid > 20, "generator too one-sided");
}

#[test]
fn depth_counts_the_longest_kept_chain() {
    let mk = |edges: &[((usize, usize), CellOp)], removed: &[usize]| DerivedCell {
        n_nodes: 6,
        kind: CellKind::Normal,
        edges: edges.iter().cloned().collect(),
        removed: removed.iter().cloned().collect(),
    };
    let id = CellOp::Identity;
    // A chain through every intermediate node.
    let chain = mk(
        &[((1, 3), id), ((3, 4), id), ((4, 5), id), ((5, 6), id)],
        &[],
    );
    assert_eq!(cell_depth(&chain), 4);
    // A flat fan: every node one hop from an input.
    let fan = mk(&[((1, 3), id), ((2, 4), id), ((1, 5), id), ((2, 6), id)], &[]);
    assert_eq!(cell_depth(&fan), 1);
    // Removal shortens the chain.
    let cut = mk(&[((1, 3), id), ((3, 6), id)], &[4, 5]);
    assert_eq!(cell_depth(&cut), 2);
    // A starved node starts its own chain.
    let starved = mk(&[((4, 6), id)], &[3, 5]);
    assert_eq!(cell_depth(&starved), 2);
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[test]
fn pairwise_fallback_matches_an_exhaustive_oracle() {
    let ops = {
        let mut v = vec![CellOp::Zero];
        v.extend(CellOp::default_set());
        v
    };
    for seed in 0..40 {
        let mut rng = Rng::derive(seed, "top2-alpha", 0);
        let n = 4 + rng.below(3);
        let mut alpha = BTreeMap::new();
        for j in 3..=n {
            for i in 1..j {
                let scores: Vec<f64> = (0..ops.len()).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
                alpha.insert((i, j), Tensor::vector(&scores));
            }
        }
        let cell = top2_decode(&alpha, n, &ops, CellKind::Normal).unwrap();
        assert_eq!(cell.edges.len(), 2 * (n - 2));
        assert!(cell.removed.is_empty());

        for j in 3..=n {
            // Oracle: importance of (i, j) is the best non-null softmax mass.
            let mut ranked: Vec<(f64, usize)> = (1..j)
                .map(|i| {
                    let probs = softmax(alpha[&(i, j)].data());
                    let best = probs
                        .iter()
                        .zip(&ops)
                        .filter(|(_, &op)| op != CellOp::Zero)
                        .map(|(&p, _)| p)
                        .fold(f64::NEG_INFINITY, f64::max);
                    (best, i)
                })
                .collect();
            ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let want: BTreeSet<usize> = ranked.iter().take(2).map(|&(_, i)| i).collect();
            let got: BTreeSet<usize> = cell.in_edges(j).iter().map(|&(i, _)| i).collect();
            assert_eq!(got, want, "seed {seed}, node {j}");
            for (i, _) in cell.in_edges(j) {
                let probs = softmax(alpha[&(i, j)].data());
                let best_idx = probs
                    .iter()
                    .enumerate()
                    .filter(|&(idx, _)| ops[idx] != CellOp::Zero)
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                    .map(|(idx, _)| idx)
                    .unwrap();
                assert_eq!(cell.edges[&(i, j)], ops[best_idx], "seed {seed} edge {i}-{j}");
            }
        }
    }
}

#[test]
fn retrain_is_deterministic_and_reports_finite_numbers() {
    let id = CellOp::Identity;
    let sep = CellOp::SepConv3x3;
    let cell = |kind| DerivedCell {
        n_nodes: 4,
        kind,
        edges: [((1, 3), sep), ((2, 3), id), ((3, 4), sep), ((2, 4), id)].into(),
        removed: BTreeSet::new(),
    };
    let arch = DerivedArchitecture {
        provenance: Provenance {
            config_hash: "00".into(),
            epoch: 0,
            layers: 1,
        },
        normal: cell(CellKind::Normal),
        reduction: cell(CellKind::Reduction),
    };
    arch.check().unwrap();
    let config = SupernetConfig {
        n_nodes: 4,
        layers: 1,
        init_channels: 4,
        in_channels: 2,
        image_size: 8,
        n_classes: 2,
        mode: TopologyMode::Arbitrary,
        ops: CellOp::default_set(),
        baseline: false,
        bn_eps: 1e-5,
    };
    let spec = |n| SyntheticSpec {
        kind: GeneratorKind::TwoRings,
        n_samples: n,
        n_classes: 2,
        noise: 0.05,
        image_size: 8,
    };
    let train = generate(&spec(48), 100).unwrap();
    let eval = generate(&spec(24), 101).unwrap();
    let hyper = RetrainHyper {
        epochs: 2,
        batch_size: 8,
        lr: 0.025,
        momentum: 0.9,
        weight_decay: 3e-4,
    };

    let (net_a, report_a) = retrain_from_scratch(&arch, &config, &train, &eval, &hyper, 7).unwrap();
    let (net_b, report_b) = retrain_from_scratch(&arch, &config, &train, &eval, &hyper, 7).unwrap();
    assert_eq!(report_a, report_b);
    let bits = |net: &stretchnas_core::derive::EvalNet| -> Vec<u64> {
        net.params.flatten().iter().map(|v| v.to_bits()).collect()
    };
    assert_eq!(bits(&net_a), bits(&net_b), "same seed, same weights");

    assert!(report_a.train_accuracy >= 0.0 && report_a.train_accuracy <= 1.0);
    assert!(report_a.eval_accuracy >= 0.0 && report_a.eval_accuracy <= 1.0);
    assert!(report_a.count.params > 0 && report_a.count.flops > 0);
    assert_eq!(report_a.depth_normal, 2);
    assert_eq!(report_a.depth_reduction, 2);
    assert_eq!(report_a.epochs, 2);

    let (net_c, _) = retrain_from_scratch(&arch, &config, &train, &eval, &hyper, 8).unwrap();
    assert_ne!(bits(&net_a), bits(&net_c), "different seed, different weights");
}
