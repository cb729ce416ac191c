mod common;

use common::{probe, random_tensor, rng};
use masque::nn::{causal_mask, sinusoidal_positions, EncoderBlock, Highway, Linear};
use masque::tensor::{gradient_check, GradCheckOptions, Graph, ParamStore, TensorError};

#[test]
fn highway_closed_gate_carries_input() {
    let mut ps = ParamStore::<f64>::new();
    let hw = Highway::new(&mut ps, "hw", 5, 0.5, &mut rng(1));
    for (_, gate) in &hw.layers {
        let b = gate.b.unwrap();
        ps.get_mut(b).data_mut().iter_mut().for_each(|v| *v = -1e3);
    }
    let mut g = Graph::new(false);
    let x = g.constant(random_tensor(&[3, 5], 1.0, 2));
    let y = hw.forward(&mut g, &ps, x).unwrap();
    assert_eq!(g.value(x).data(), g.value(y).data());
}

#[test]
fn positional_encoding_closed_form() {
    let pe = sinusoidal_positions::<f64>(6, 8);
    assert_eq!(pe.get2(0, 0), 0.0);
    assert_eq!(pe.get2(0, 1), 1.0);
    assert!((pe.get2(3, 2) - (3.0f64 / 10_000f64.powf(2.0 / 8.0)).sin()).abs() < 1e-15);
    assert_ne!(pe.row(1), pe.row(5));
}

#[test]
fn single_position_attention_is_value_projection() {
    let mut ps = ParamStore::<f64>::new();
    let block = EncoderBlock::new(&mut ps, "b", 8, 2, 12, 0.3, &mut rng(3));
    let mut g = Graph::new(false);
    let x = g.constant(random_tensor(&[1, 8], 1.0, 4));
    let attn = block.attention.forward(&mut g, &ps, x, x, &[true], 0.0).unwrap();
    let v = block.attention.value.forward(&mut g, &ps, x).unwrap();
    let expected = block.attention.output.forward(&mut g, &ps, v).unwrap();
    for (a, b) in g.value(attn).data().iter().zip(g.value(expected).data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn self_attention_is_permutation_equivariant() {
    let mut ps = ParamStore::<f64>::new();
    let block = EncoderBlock::new(&mut ps, "b", 8, 2, 12, 0.3, &mut rng(5));
    let x = random_tensor(&[5, 8], 1.0, 6);
    let perm = [3usize, 0, 4, 1, 2];
    let mut permuted = Vec::new();
    for &p in &perm {
        permuted.extend_from_slice(x.row(p));
    }
    let xp = masque::tensor::Tensor::new(vec![5, 8], permuted).unwrap();

    let mut g = Graph::new(false);
    let a = g.constant(x);
    let b = g.constant(xp);
    let keep = [true; 5];
    let ya = block.forward(&mut g, &ps, a, &keep, 0.0).unwrap();
    let yb = block.forward(&mut g, &ps, b, &keep, 0.0).unwrap();
    for (i, &p) in perm.iter().enumerate() {
        for (u, v) in g.value(yb).row(i).iter().zip(g.value(ya).row(p)) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}

#[test]
fn padded_keys_are_ignored() {
    let mut ps = ParamStore::<f64>::new();
    let block = EncoderBlock::new(&mut ps, "b", 8, 2, 12, 0.3, &mut rng(7));
    let short = random_tensor(&[3, 8], 1.0, 8);
    let mut padded = short.data().to_vec();
    padded.extend(random_tensor(&[2, 8], 5.0, 9).data());
    let padded = masque::tensor::Tensor::new(vec![5, 8], padded).unwrap();

    let mut g = Graph::new(false);
    let a = g.constant(short);
    let b = g.constant(padded);
    let ya = block.forward(&mut g, &ps, a, &[true; 3], 0.0).unwrap();
    let yb = block.forward(&mut g, &ps, b, &[true, true, true, false, false], 0.0).unwrap();
    for (u, v) in g.value(ya).data().iter().zip(&g.value(yb).data()[..24]) {
        assert!((u - v).abs() < 1e-12);
    }
}

#[test]
fn fully_masked_sequence_is_an_error() {
    let mut ps = ParamStore::<f64>::new();
    let block = EncoderBlock::new(&mut ps, "b", 8, 2, 12, 0.3, &mut rng(10));
    let mut g = Graph::new(false);
    let x = g.constant(random_tensor(&[2, 8], 1.0, 11));
    let err = block.forward(&mut g, &ps, x, &[false, false], 0.0).unwrap_err();
    assert!(matches!(err, TensorError::DegenerateMask { .. }));
}

#[test]
fn causal_mask_first_step_sees_only_itself() {
    let m = causal_mask(&[true, true, true]);
    assert_eq!(&m[..3], &[true, false, false]);
    assert_eq!(&m[6..], &[true, true, true]);
}

#[test]
fn encoder_block_gradient_check() {
    let mut ps = ParamStore::<f64>::new();
    let block = EncoderBlock::new(&mut ps, "b", 8, 2, 12, 0.3, &mut rng(12));
    let x = random_tensor(&[4, 8], 1.0, 13);
    let ids: Vec<_> = ps.ids().collect();
    let keep = [true, true, true, false];
    let report = gradient_check(&mut ps, &ids, &GradCheckOptions::default(), |g, ps| {
        let x = g.constant(x.clone());
        let y = block.forward(g, ps, x, &keep, 0.0)?;
        probe(g, y, 14)
    })
    .unwrap();
    assert!(report.max_rel_err < 1e-5, "{report:?}");
}

#[test]
fn linear_without_bias_is_matmul() {
    let mut ps = ParamStore::<f64>::new();
    let lin = Linear::new(&mut ps, "l", 3, 2, false, 1.0, &mut rng(15));
    let mut g = Graph::new(false);
    let x = g.constant(masque::tensor::Tensor::eye(3));
    let y = lin.forward(&mut g, &ps, x).unwrap();
    assert_eq!(g.value(y).data(), ps.get(lin.w).data());
}
