use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn cfg(dropout: f64) -> ModelConfig {
    ModelConfig {
        embed_dim: 4,
        hidden_dim: Some(5),
        predictor_hidden_dim: Some(3),
        dropout,
        ..ModelConfig::default()
    }
    .with_modalities(&["a", "b", "c"], &[6, 4, 2], 2)
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(11)
}

fn random_row(r: &mut ChaCha8Rng, n: usize) -> Tensor2 {
    Tensor2::from_fn(1, n, |_, _| r.random_range(-2.0..2.0))
}

fn randomize(model: &mut Model, seed: u64) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    for t in model.params.iter_mut() {
        for v in t.values_mut() {
            *v = r.random_range(-1.0..1.0);
        }
    }
}

// Plain nested-Vec arithmetic, independent of Tensor2.
mod oracle {
    pub fn affine(x: &[f64], w: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        (0..b.len())
            .map(|j| b[j] + x.iter().enumerate().map(|(i, xi)| xi * w[i][j]).sum::<f64>())
            .collect()
    }

    pub fn leaky(x: Vec<f64>) -> Vec<f64> {
        x.into_iter().map(|v| if v > 0.0 { v } else { 0.01 * v }).collect()
    }

    pub fn softmax(x: &[f64]) -> Vec<f64> {
        let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }
}

fn rows(t: &Tensor2) -> Vec<Vec<f64>> {
    t.to_rows()
}

fn oracle_encode(p: &Mlp<Tensor2>, x: &[f64]) -> Vec<f64> {
    let h = oracle::leaky(oracle::affine(x, &rows(&p.w1), p.b1.values()));
    oracle::leaky(oracle::affine(&h, &rows(&p.w2), p.b2.values()))
}

fn oracle_decode(p: &Mlp<Tensor2>, z: &[f64]) -> Vec<f64> {
    let h = oracle::leaky(oracle::affine(z, &rows(&p.w1), p.b1.values()));
    oracle::affine(&h, &rows(&p.w2), p.b2.values())
}

fn oracle_logits(p: &Mlp<Tensor2>, z: &[f64]) -> Vec<f64> {
    let h = oracle::leaky(oracle::affine(z, &rows(&p.w1), p.b1.values()));
    oracle::affine(&h, &rows(&p.w2), p.b2.values())
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn zero_params_give_zero_embedding_and_reconstruction() {
    let mut m = Model::new(cfg(0.0), 1).unwrap();
    for t in m.params.iter_mut() {
        t.values_mut().fill(0.0);
    }
    let x = random_row(&mut rng(), 6);
    assert!(m.encode(0, &x, false, &mut rng()).unwrap().values().iter().all(|&v| v == 0.0));
    let xh = m.decode(0, &Tensor2::ones(1, 4)).unwrap();
    assert_eq!(xh.shape(), (1, 6));
    assert!(xh.values().iter().all(|&v| v == 0.0));
}

#[test]
fn eval_encode_is_deterministic() {
    let m = Model::new(cfg(0.5), 2).unwrap();
    let x = random_row(&mut rng(), 6);
    let a = m.encode(0, &x, false, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = m.encode(0, &x, false, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn encode_decode_match_oracle() {
    let mut m = Model::new(cfg(0.5), 3).unwrap();
    randomize(&mut m, 5);
    let mut r = rng();
    for _ in 0..20 {
        let x = random_row(&mut r, 6);
        let z = m.encode(0, &x, false, &mut r).unwrap();
        let want = oracle_encode(&m.params.modalities[0].encoder, x.values());
        assert!(close(z.values(), &want, 1e-12));
        let xh = m.decode(0, &z).unwrap();
        let want = oracle_decode(&m.params.modalities[0].decoder, z.values());
        assert!(close(xh.values(), &want, 1e-12));
    }
}

#[test]
fn width_mismatch_is_dimension_error() {
    let m = Model::new(cfg(0.0), 1).unwrap();
    let err = m.encode(0, &Tensor2::zeros(1, 5), false, &mut rng()).unwrap_err();
    assert!(matches!(err, MoiraError::Dimension { .. }));
    assert!(m.decode(1, &Tensor2::zeros(1, 3)).is_err());
}

#[test]
fn gate_examples() {
    let mut m = Model::new(cfg(0.0), 1).unwrap();
    let z = Some(Tensor2::ones(1, 4));
    assert_eq!(m.gate(&[None, z.clone(), None]).unwrap(), vec![0.0, 1.0, 0.0]);

    for mp in &mut m.params.modalities {
        mp.gate.u.values_mut().fill(0.0);
        mp.gate.c.values_mut().fill(0.0);
    }
    let a = m.gate(&[z.clone(), z.clone(), z.clone()]).unwrap();
    assert!(a.iter().all(|&w| (w - 1.0 / 3.0).abs() < 1e-15));

    m.params.modalities[0].gate.c.set(0, 0, 2f64.ln());
    let a = m.gate(&[z.clone(), z.clone(), None]).unwrap();
    assert!((a[0] - 2.0 / 3.0).abs() < 1e-15 && (a[1] - 1.0 / 3.0).abs() < 1e-15 && a[2] == 0.0);

    assert!(matches!(m.gate(&[None, None, None]), Err(MoiraError::EmptySupport(_))));
}

#[test]
fn gate_is_shift_invariant() {
    let mut m = Model::new(cfg(0.0), 4).unwrap();
    randomize(&mut m, 8);
    let mut r = rng();
    let zs: Vec<Option<Tensor2>> = vec![Some(random_row(&mut r, 4)), None, Some(random_row(&mut r, 4))];
    let before = m.gate(&zs).unwrap();
    for mp in &mut m.params.modalities {
        let c = mp.gate.c.get(0, 0);
        mp.gate.c.set(0, 0, c + 3.7);
    }
    let after = m.gate(&zs).unwrap();
    assert!(close(&before, &after, 1e-12));
    assert!((before.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn scalar_gate_ignores_embedding() {
    let mut c = cfg(0.0);
    c.gate = GateKind::Scalar;
    let m = Model::new(c, 1).unwrap();
    let mut r = rng();
    let a = m.gate(&[Some(random_row(&mut r, 4)), Some(random_row(&mut r, 4)), None]).unwrap();
    let b = m.gate(&[Some(random_row(&mut r, 4)), Some(random_row(&mut r, 4)), None]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn aggregate_examples() {
    let z = Tensor2::row_vector(vec![0.3, -1.0]);
    assert_eq!(aggregate(&[Some(z.clone()), None], &[1.0, 0.0]).unwrap(), z);
    let same = aggregate(&[Some(z.clone()), Some(z.clone())], &[0.4, 0.6]).unwrap();
    assert!(close(same.values(), z.values(), 1e-15));
    let mixed = aggregate(
        &[Some(Tensor2::row_vector(vec![1.0, 0.0])), Some(Tensor2::row_vector(vec![0.0, 1.0]))],
        &[0.25, 0.75],
    )
    .unwrap();
    assert_eq!(mixed.values(), &[0.25, 0.75]);
}

#[test]
fn predict_examples() {
    let mut m = Model::new(cfg(0.0), 1).unwrap();
    let mut r = rng();
    let z = Tensor2::from_fn(5, 4, |_, _| r.random_range(-3.0..3.0));
    let y = m.predict(&z, false, &mut r).unwrap();
    for i in 0..5 {
        assert!((y.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(y.row(i).iter().all(|&p| p > 0.0 && p < 1.0));
    }
    m.params.predictor.w2.values_mut().fill(0.0);
    m.params.predictor.b2.values_mut().fill(0.0);
    let y = m.predict(&z, false, &mut r).unwrap();
    assert!(y.values().iter().all(|&p| p == 0.5));

    let p = crate::numerics::row_softmax(&Tensor2::row_vector(vec![3f64.ln(), 0.0]), &[true, true]).unwrap();
    assert!(close(p.values(), &[0.75, 0.25], 1e-15));
}

#[test]
fn single_modality_forward_collapses_to_predict_encode() {
    let mut m = Model::new(cfg(0.0), 6).unwrap();
    randomize(&mut m, 6);
    let mut r = rng();
    let x = vec![random_row(&mut r, 6), random_row(&mut r, 4), random_row(&mut r, 2)];
    let out = m.forward(&x, &[false, true, false], false, &mut r).unwrap();
    let z = m.encode(1, &x[1], false, &mut r).unwrap();
    let y = m.predict(&z, false, &mut r).unwrap();
    assert_eq!(out.alpha, vec![0.0, 1.0, 0.0]);
    assert!(close(&out.probs, y.values(), 1e-15));
}

#[test]
fn absent_inputs_never_read() {
    let mut m = Model::new(cfg(0.5), 7).unwrap();
    randomize(&mut m, 7);
    let mut r = rng();
    let mut x = vec![random_row(&mut r, 6), random_row(&mut r, 4), random_row(&mut r, 2)];
    let presence = [true, false, true];
    let base = m.forward(&x, &presence, true, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    for _ in 0..50 {
        x[1] = Tensor2::from_fn(1, 4, |_, _| r.random_range(-1e6..1e6));
        let again = m.forward(&x, &presence, true, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(base, again);
    }
}

#[test]
fn two_modality_forward_matches_manual_composition() {
    let mut m = Model::new(cfg(0.0), 9).unwrap();
    randomize(&mut m, 9);
    let mut r = rng();
    let x = vec![random_row(&mut r, 6), random_row(&mut r, 4), random_row(&mut r, 2)];
    let out = m.forward(&x, &[true, true, false], false, &mut r).unwrap();

    let p = &m.params;
    let z0 = oracle_encode(&p.modalities[0].encoder, x[0].values());
    let z1 = oracle_encode(&p.modalities[1].encoder, x[1].values());
    let score = |mp: &ModalityParams<Tensor2>, z: &[f64]| {
        mp.gate.c.get(0, 0) + z.iter().zip(mp.gate.u.values()).map(|(a, b)| a * b).sum::<f64>()
    };
    let w = oracle::softmax(&[score(&p.modalities[0], &z0), score(&p.modalities[1], &z1)]);
    let agg: Vec<f64> = z0.iter().zip(&z1).map(|(a, b)| w[0] * a + w[1] * b).collect();
    let probs = oracle::softmax(&oracle_logits(&p.predictor, &agg));

    assert!(close(&out.alpha[..2], &w, 1e-12) && out.alpha[2] == 0.0);
    assert!(close(out.aggregate.values(), &agg, 1e-12));
    assert!(close(&out.probs, &probs, 1e-12));
    let y0 = oracle::softmax(&oracle_logits(&p.predictor, &z0));
    assert!(close(out.modality_probs[0].as_ref().unwrap(), &y0, 1e-12));
    assert!(out.modality_probs[2].is_none());
}

#[test]
fn predictor_is_shared_by_identity() {
    let m = Model::new(cfg(0.5), 1).unwrap();
    let mut tape = Tape::new();
    let p = m.params.bind(&mut tape);
    let mut r = rng();
    let inputs: Vec<Option<ModalityInput>> = [6, 4, 2]
        .iter()
        .map(|&w| {
            Some(ModalityInput {
                rows: tape.leaf(Tensor2::from_fn(3, w, |i, j| (i + j) as f64 * 0.1)),
                positions: vec![0, 1, 2],
            })
        })
        .collect();
    let out = forward_batch(&mut tape, &p, &m.config, &inputs, 3, true, &mut r).unwrap();
    let pred = [p.predictor.w1, p.predictor.b1, p.predictor.w2, p.predictor.b2];
    let agg_leaves = tape.leaves_of(out.probs);
    for v in pred {
        assert!(agg_leaves.contains(&v));
        for y in out.modality_probs.iter().flatten() {
            assert!(tape.leaves_of(*y).contains(&v));
        }
    }
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = Model::new(cfg(0.5), 12).unwrap();
    let path = dir.path().join("ck.json");
    m.to_checkpoint(12).save(&path).unwrap();
    let back = Model::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(back, m);
}
