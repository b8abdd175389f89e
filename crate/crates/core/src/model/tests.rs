use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tensor::Matrix;

pub(crate) fn mini(seed: u64) -> ModelConfig {
    ModelConfig {
        d_type: 4,
        d_value: 4,
        n_layers: 2,
        n_heads: 2,
        d_head: 3,
        d_ff: 6,
        segment_len: 4,
        mem_len: 6,
        path_len: 3,
        path_dim: 4,
        type_vocab_size: 7,
        value_vocab_size: 9,
        alpha: [0.5, 0.5],
        seed,
    }
}

fn random_segment(rng: &mut ChaCha8Rng, cfg: &ModelConfig, len: usize) -> Matrix {
    let data = (0..len * cfg.hidden()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::from_vec(len, cfg.hidden(), data).unwrap()
}

fn random_path(rng: &mut ChaCha8Rng, cfg: &ModelConfig) -> PathIds {
    let true_length = rng.gen_range(0..=cfg.path_len);
    let ids = (0..cfg.path_len)
        .map(|i| if i < true_length { rng.gen_range(3..cfg.type_vocab_size as u32) } else { 0 })
        .collect();
    PathIds { ids, true_length }
}

#[test]
fn memory_is_capped() {
    let cfg = mini(1);
    let model = Model::new(cfg.clone(), Ablation::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mem = MemoryState::empty(cfg.n_layers);
    let l = cfg.segment_len;
    for k in 1..=4 {
        let (_, next) = model.encoder_forward(&random_segment(&mut rng, &cfg, l), &mem).unwrap();
        mem = next;
        assert_eq!(mem.len(), (k * l).min(cfg.mem_len));
        assert_eq!(mem.segments(), k);
        assert!(mem.layers().iter().all(|m| m.rows() == mem.len()));
    }
}

#[test]
fn memory_holds_latest_layer_inputs() {
    let cfg = mini(2);
    let model = Model::new(cfg.clone(), Ablation::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_segment(&mut rng, &cfg, 4);
    let b = random_segment(&mut rng, &cfg, 4);
    let (_, m1) = model.encoder_forward(&a, &MemoryState::empty(cfg.n_layers)).unwrap();
    let (_, m2) = model.encoder_forward(&b, &m1).unwrap();
    assert_eq!(m1.layers()[0], a);
    assert_eq!(m2.layers()[0].slice_rows(2, 4), b);
    assert_eq!(m2.layers()[0].slice_rows(0, 2), a.slice_rows(2, 2));
}

#[test]
fn memory_changes_outputs() {
    let cfg = mini(4);
    let model = Model::new(cfg.clone(), Ablation::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random_segment(&mut rng, &cfg, 4);
    let b = random_segment(&mut rng, &cfg, 4);
    let empty = MemoryState::empty(cfg.n_layers);
    let (_, m1) = model.encoder_forward(&a, &empty).unwrap();
    let (with, _) = model.encoder_forward(&b, &m1).unwrap();
    let (without, _) = model.encoder_forward(&b, &empty).unwrap();
    assert!(with.data().iter().zip(without.data()).any(|(x, y)| (x - y).abs() > 1e-6));
}

#[test]
fn encoder_shape_errors() {
    let cfg = mini(0);
    let model = Model::new(cfg.clone(), Ablation::default()).unwrap();
    let empty = MemoryState::empty(cfg.n_layers);
    assert!(matches!(model.encoder_forward(&Matrix::zeros(2, 5), &empty), Err(Error::Shape(_))));
    assert!(matches!(model.encoder_forward(&Matrix::zeros(5, 8), &empty), Err(Error::Shape(_))));
    assert!(matches!(model.encoder_forward(&Matrix::zeros(2, 8), &MemoryState::empty(1)), Err(Error::Shape(_))));
}

#[test]
fn same_seed_same_model() {
    let a = Model::new(mini(11), Ablation::default()).unwrap();
    let b = Model::new(mini(11), Ablation::default()).unwrap();
    let c = Model::new(mini(12), Ablation::default()).unwrap();
    assert_eq!(a.params(), b.params());
    assert_ne!(a.params(), c.params());
}

#[test]
fn ablations_share_initial_parameters() {
    let full = Model::new(mini(3), Ablation::default()).unwrap();
    let single = Model::new(mini(3), Ablation { use_mtl: false, ..Ablation::default() }).unwrap();
    assert_eq!(full.params(), single.params());
    let no_path = Model::new(mini(3), Ablation { use_path: false, ..Ablation::default() }).unwrap();
    assert!(no_path.params().find("path.fwd.w_x").is_none());
    assert_eq!(no_path.params().get(no_path.params().find("head.type.w_o").unwrap()).rows(), 8);
}

#[test]
fn head_distributions_are_normalized() {
    let cfg = mini(6);
    let model = Model::new(cfg.clone(), Ablation::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let h: Vec<f64> = (0..cfg.hidden()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let p = model.path_encode(&[random_path(&mut rng, &cfg)]).unwrap();
        let d = model.predict_heads(&h, Some(p.row(0))).unwrap();
        assert_eq!(d.type_probs.len(), cfg.type_vocab_size);
        assert_eq!(d.value_probs.len(), cfg.value_vocab_size);
        for probs in [&d.type_probs, &d.value_probs] {
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(probs.iter().all(|&p| p > 0.0));
        }
    }
    assert!(matches!(model.predict_heads(&[0.0; 8], None), Err(Error::Shape(_))));
    assert!(matches!(model.predict_heads(&[0.0; 3], Some(&[0.0; 4])), Err(Error::Shape(_))));
}

#[test]
fn path_encoder_respects_order_and_padding() {
    let cfg = mini(8);
    let model = Model::new(cfg.clone(), Ablation::default()).unwrap();
    let fwd = PathIds { ids: vec![3, 4, 5], true_length: 3 };
    let rev = PathIds { ids: vec![5, 4, 3], true_length: 3 };
    let pad = PathIds::empty(3);
    let short = PathIds { ids: vec![3, 4, 0], true_length: 2 };
    let v = model.path_encode(&[fwd, rev, pad.clone(), pad, short]).unwrap();
    assert_ne!(v.row(0), v.row(1));
    assert_eq!(v.row(2), v.row(3));
    assert!(v.row(2).iter().all(|&x| x == 0.0));
    assert!(v.row(4).iter().any(|&x| x != 0.0));
}

#[test]
fn padding_slots_are_ignored() {
    let cfg = mini(8);
    let model = Model::new(cfg, Ablation::default()).unwrap();
    // Ids beyond the true length never reach the recurrence.
    let a = PathIds { ids: vec![3, 4, 0], true_length: 2 };
    let b = PathIds { ids: vec![3, 4, 6], true_length: 2 };
    let v = model.path_encode(&[a, b]).unwrap();
    assert_eq!(v.row(0), v.row(1));
}

#[test]
fn path_errors() {
    let cfg = mini(8);
    let model = Model::new(cfg.clone(), Ablation::default()).unwrap();
    assert!(matches!(model.path_encode(&[PathIds::empty(2)]), Err(Error::Shape(_))));
    assert!(matches!(model.path_encode(&[PathIds { ids: vec![3, 99, 0], true_length: 2 }]), Err(Error::Index { .. })));
    let no_path = Model::new(cfg, Ablation { use_path: false, ..Ablation::default() }).unwrap();
    assert!(matches!(no_path.path_encode(&[PathIds::empty(3)]), Err(Error::Config(_))));
}

#[test]
fn forward_segment_row_layout() {
    let cfg = mini(5);
    let model = Model::new(cfg.clone(), Ablation::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let paths: Vec<PathIds> = (0..3).map(|_| random_path(&mut rng, &cfg)).collect();
    let init = PathIds::empty(3);
    let mut g = Graph::new(model.params());
    let mem = vec![None; cfg.n_layers];
    let input = SegmentInput { types: &[3, 4, 5], values: &[2, 6, 7], initial_path: Some(&init), paths: &paths };
    let out = model.forward_segment(&mut g, input, &mem, Heads::BOTH).unwrap();
    assert_eq!(g.value(out.type_logits.unwrap()).shape(), (4, 7));
    assert_eq!(g.value(out.value_logits.unwrap()).shape(), (4, 9));
    assert_eq!(out.layer_inputs.len(), 2);

    let only_type = Heads { type_head: true, value_head: false };
    let input = SegmentInput { initial_path: None, ..input };
    let out = model.forward_segment(&mut g, input, &mem, only_type).unwrap();
    assert!(out.value_logits.is_none());
    assert_eq!(g.value(out.type_logits.unwrap()).rows(), 3);

    let bad = SegmentInput { types: &[3, 9, 5], ..input };
    assert!(matches!(model.forward_segment(&mut g, bad, &mem, Heads::BOTH), Err(Error::Index { .. })));
    let bad = SegmentInput { paths: &paths[..2], ..input };
    assert!(matches!(model.forward_segment(&mut g, bad, &mem, Heads::BOTH), Err(Error::Shape(_))));
}

fn dist(t: &[f64], v: &[f64]) -> PredictionDistribution {
    PredictionDistribution { type_probs: t.to_vec(), value_probs: v.to_vec() }
}

#[test]
fn mtl_loss_weights() {
    let d = [dist(&[0.5, 0.25, 0.25], &[0.1, 0.9]), dist(&[0.2, 0.8, 0.0], &[0.5, 0.5])];
    let targets = [(Some(0), Some(1)), (Some(1), Some(0))];
    let ce_type = -(libm::log(0.5) + libm::log(0.8)) / 2.0;
    let ce_value = -(libm::log(0.9) + libm::log(0.5)) / 2.0;
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    assert!(close(mtl_loss(&d, &targets, [1.0, 0.0]).unwrap(), ce_type));
    assert!(close(mtl_loss(&d, &targets, [0.0, 1.0]).unwrap(), ce_value));
    assert!(close(mtl_loss(&d, &targets, [0.5, 0.5]).unwrap(), (ce_type + ce_value) / 2.0));
    assert!(close(mtl_loss(&d, &targets, [0.3, 0.7]).unwrap(), 0.3 * ce_type + 0.7 * ce_value));
    assert!(matches!(mtl_loss(&d, &targets, [0.7, 0.4]), Err(Error::Config(_))));
    assert!(matches!(mtl_loss(&d, &targets[..1], [0.5, 0.5]), Err(Error::Shape(_))));
}

#[test]
fn tape_loss_matches_mtl_loss() {
    let cfg = mini(7);
    let model = Model::new(cfg.clone(), Ablation::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let paths: Vec<PathIds> = (0..4).map(|_| random_path(&mut rng, &cfg)).collect();
    let mut g = Graph::new(model.params());
    let mem = vec![None; cfg.n_layers];
    let input = SegmentInput { types: &[3, 4, 5, 6], values: &[2, 6, 7, 1], initial_path: None, paths: &paths };
    let out = model.forward_segment(&mut g, input, &mem, Heads::BOTH).unwrap();
    let (tl, vl) = (out.type_logits.unwrap(), out.value_logits.unwrap());
    let tt = [Some(4), Some(5), Some(6), None];
    let vt = [Some(6), Some(7), Some(1), None];
    let loss = model.loss(&mut g, Some(tl), Some(vl), &tt, &vt, [0.3, 0.7], 3).unwrap().unwrap();
    let dists: Vec<PredictionDistribution> = (0..3)
        .map(|r| dist(&crate::tensor::softmax(g.value(tl).row(r)), &crate::tensor::softmax(g.value(vl).row(r))))
        .collect();
    let targets: Vec<(Option<u32>, Option<u32>)> =
        (0..3).map(|r| (tt[r].map(|x| x as u32), vt[r].map(|x| x as u32))).collect();
    let expected = mtl_loss(&dists, &targets, [0.3, 0.7]).unwrap();
    assert!((g.value(loss).get(0, 0) - expected).abs() < 1e-12);
}
