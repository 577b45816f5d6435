//! Behavioral contracts of the search optimizer: frozen scores at zero
//! architecture learning rate, descent on separable data, byte-stable
//! checkpoints, exact resume, and transactional rollback on numeric failure.

use std::collections::BTreeMap;

use stretchnas_autodiff::{Precision, Tensor};
use stretchnas_core::data::{generate, GeneratorKind, SyntheticSpec};
use stretchnas_core::optim::{
    darts_step, milenas_step, parse_checkpoint, render_checkpoint, search_loop, metrics_csv,
    split_dataset, OptimizerMode, SearchHyper, SearchState,
};
use stretchnas_core::search_space::{CellOp, Supernet, SupernetConfig};
use stretchnas_core::topology::TopologyMode;

fn tiny_config() -> SupernetConfig {
    SupernetConfig {
        n_nodes: 4,
        layers: 1,
        init_channels: 4,
        in_channels: 2,
        image_size: 8,
        n_classes: 2,
        mode: TopologyMode::Arbitrary,
        ops: vec![CellOp::Identity, CellOp::AvgPool3x3, CellOp::SepConv3x3],
        baseline: false,
        bn_eps: 1e-5,
    }
}

fn tiny_hyper() -> SearchHyper {
    SearchHyper {
        epochs: 2,
        batch_size: 8,
        optimizer: OptimizerMode::Darts,
        lr_w: 0.025,
        momentum_w: 0.9,
        weight_decay_w: 3e-4,
        lr_arch: 3e-4,
        lambda: 1.0,
        lambda_prime: None,
        precision: Precision::F64,
    }
}

fn rings(n: usize, seed: u64) -> stretchnas_core::data::Dataset {
    generate(
        &SyntheticSpec {
            kind: GeneratorKind::TwoRings,
            n_samples: n,
            n_classes: 2,
            noise: 0.05,
            image_size: 8,
        },
        seed,
    )
    .unwrap()
}

fn param_bits(state: &SearchState, filter: fn(&str) -> bool) -> BTreeMap<String, Vec<u64>> {
    state
        .net
        .params
        .iter()
        .filter(|(n, _)| filter(n))
        .map(|(n, t)| (n.clone(), t.data().iter().map(|v| v.to_bits()).collect()))
        .collect()
}

fn is_arch(name: &str) -> bool {
    name.starts_with("a.") || name.starts_with("b.")
}

fn is_weight(name: &str) -> bool {
    !is_arch(name)
}

#[test]
fn zero_arch_lr_freezes_scores_while_weights_move() {
    let net = Supernet::init(tiny_config(), 11).unwrap();
    let mut state = SearchState::new(net, 11);
    let mut hyper = tiny_hyper();
    hyper.lr_arch = 0.0;

    let data = rings(16, 3);
    let (ti, tl) = data.batch(&(0..8).collect::<Vec<_>>()).unwrap();
    let (vi, vl) = data.batch(&(8..16).collect::<Vec<_>>()).unwrap();

    let arch_before = param_bits(&state, is_arch);
    let weights_before = param_bits(&state, is_weight);
    darts_step(&mut state, &hyper, hyper.lr_w, (&ti, &tl), (&vi, &vl)).unwrap();
    assert_eq!(param_bits(&state, is_arch), arch_before);
    assert_ne!(param_bits(&state, is_weight), weights_before);
    assert_eq!(state.adam_t, 1);
}

#[test]
fn training_loss_descends_over_epochs() {
    let net = Supernet::init(tiny_config(), 5).unwrap();
    let mut state = SearchState::new(net, 5);
    let mut hyper = tiny_hyper();
    hyper.epochs = 3;
    let splits = split_dataset(&rings(48, 9), (0.5, 0.25, 0.25), 9).unwrap();
    let metrics = search_loop(&mut state, &splits, &hyper, None, "", &mut |_| {}).unwrap();
    assert_eq!(metrics.len(), 3);
    assert!(
        metrics[2].l_tr < metrics[0].l_tr,
        "no descent: {} -> {}",
        metrics[0].l_tr,
        metrics[2].l_tr
    );
    for m in &metrics {
        assert!(m.l_tr.is_finite() && m.l_val.is_finite());
    }
}

#[test]
fn checkpoint_text_round_trips_bytewise() {
    let net = Supernet::init(tiny_config(), 21).unwrap();
    let mut state = SearchState::new(net, 21);
    let hyper = tiny_hyper();
    let data = rings(16, 4);
    let (ti, tl) = data.batch(&(0..8).collect::<Vec<_>>()).unwrap();
    let (vi, vl) = data.batch(&(8..16).collect::<Vec<_>>()).unwrap();
    darts_step(&mut state, &hyper, hyper.lr_w, (&ti, &tl), (&vi, &vl)).unwrap();
    state.epoch = 1;

    let config_text = "supernet.n_nodes = 4\n";
    let text = render_checkpoint(&state, config_text);
    let loaded = parse_checkpoint(&text).unwrap();
    assert_eq!(loaded.state.epoch, 1);
    assert_eq!(loaded.state.adam_t, 1);
    assert_eq!(loaded.state.seed, 21);
    assert_eq!(loaded.config_text, config_text);
    let again = render_checkpoint(&loaded.state, &loaded.config_text);
    assert_eq!(text, again, "checkpoint text must round-trip bytewise");
}

/// A run killed after two epochs and resumed from its checkpoint must land
/// on the same metrics and the same final state as the uninterrupted run.
#[test]
fn resumed_run_matches_uninterrupted_run_exactly() {
    let data = rings(36, 7);
    let splits = split_dataset(&data, (0.5, 0.25, 0.25), 7).unwrap();
    let mut hyper = tiny_hyper();
    hyper.epochs = 4;

    let dir = std::env::temp_dir().join(format!("stretchnas-resume-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let ckpt = dir.join("search.ckpt");

    let mut straight = SearchState::new(Supernet::init(tiny_config(), 31).unwrap(), 31);
    let mut mid = String::new();
    let full = search_loop(&mut straight, &splits, &hyper, Some(&ckpt), "", &mut |m| {
        if m.epoch == 1 {
            mid = std::fs::read_to_string(&ckpt).unwrap();
        }
    })
    .unwrap();
    std::fs::remove_dir_all(&dir).unwrap();

    let mut resumed = parse_checkpoint(&mid).unwrap().state;
    assert_eq!(resumed.epoch, 2);
    let tail = search_loop(&mut resumed, &splits, &hyper, None, "", &mut |_| {}).unwrap();

    let stitched: Vec<_> = full[..2].iter().cloned().chain(tail).collect();
    assert_eq!(metrics_csv(&full), metrics_csv(&stitched));
    assert_eq!(
        render_checkpoint(&straight, ""),
        render_checkpoint(&resumed, ""),
        "final states must agree bitwise after resume"
    );
}

#[test]
fn milenas_ignores_validation_batches_when_lambda_prime_is_zero() {
    let mut hyper = tiny_hyper();
    hyper.optimizer = OptimizerMode::Milenas;
    hyper.lambda_prime = Some(0.0);
    hyper.lambda = 0.0;

    let data = rings(40, 13);
    let idx = |lo: usize, hi: usize| (lo..hi).collect::<Vec<_>>();
    let (ti, tl) = data.batch(&idx(0, 8)).unwrap();
    let (va1, vl1) = data.batch(&idx(8, 16)).unwrap();
    let (vb1, wl1) = data.batch(&idx(16, 24)).unwrap();
    let (va2, vl2) = data.batch(&idx(24, 32)).unwrap();
    let (vb2, wl2) = data.batch(&idx(32, 40)).unwrap();

    let run = |va: &Tensor, vla: &[usize], vb: &Tensor, vlb: &[usize]| {
        let mut state = SearchState::new(Supernet::init(tiny_config(), 17).unwrap(), 17);
        milenas_step(
            &mut state,
            &hyper,
            hyper.lr_w,
            (&ti, &tl),
            (va, vla),
            (vb, vlb),
        )
        .unwrap();
        render_checkpoint(&state, "")
    };
    let a = run(&va1, &vl1, &vb1, &wl1);
    let b = run(&va2, &vl2, &vb2, &wl2);
    assert_eq!(a, b, "with zero mixing weight the validation stream is inert");
}

#[test]
fn milenas_requires_lambda_prime() {
    let mut hyper = tiny_hyper();
    hyper.optimizer = OptimizerMode::Milenas;
    hyper.lambda_prime = None;
    assert!(hyper.validate().is_err());
}

#[test]
fn poisoned_training_batch_fails_without_touching_state() {
    let net = Supernet::init(tiny_config(), 41).unwrap();
    let mut state = SearchState::new(net, 41);
    let hyper = tiny_hyper();
    let data = rings(16, 6);
    let (mut ti, tl) = data.batch(&(0..8).collect::<Vec<_>>()).unwrap();
    let (vi, vl) = data.batch(&(8..16).collect::<Vec<_>>()).unwrap();
    ti.data_mut()[0] = f64::NAN;

    let before = render_checkpoint(&state, "");
    let err = darts_step(&mut state, &hyper, hyper.lr_w, (&ti, &tl), (&vi, &vl)).unwrap_err();
    assert!(err.is_numeric(), "unexpected error class: {err}");
    assert_eq!(
        render_checkpoint(&state, ""),
        before,
        "a failed step must leave scores, weights and moments untouched"
    );
}
