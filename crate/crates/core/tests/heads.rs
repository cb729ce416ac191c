mod common;

use common::{toy_config, toy_examples};
use masque::heads::TaskHeads;
use masque::model::Masque;
use masque::tensor::{Graph, Tensor};
use masque::ModelError;

fn setup(seed: u64) -> (common::Toy, Masque, masque::tensor::ParamStore<f64>) {
    let toy = toy_examples(4, 3, seed);
    let (model, ps) = Masque::new::<f64>(&toy_config(), toy.vocab.common_size(), 3, seed).unwrap();
    (toy, model, ps)
}

#[test]
fn zero_weights_give_one_half() {
    let (toy, model, mut ps) = setup(1);
    ps.get_mut(model.heads.ranker).data_mut().fill(0.0);
    ps.get_mut(model.heads.classifier).data_mut().fill(0.0);
    let mut g = Graph::new(false);
    let out = model.read(&mut g, &ps, &toy.examples[0]).unwrap();
    let beta = model.heads.rank_passages(&mut g, &ps, &out).unwrap();
    let pa = model.heads.classify_answerability(&mut g, &ps, &out).unwrap();
    assert!(g.value(beta).data().iter().all(|&b| b == 0.5));
    assert_eq!(g.value(pa).data(), &[0.5]);
}

#[test]
fn ranking_order_survives_positive_rescaling() {
    let (toy, model, mut ps) = setup(2);
    let order = |ps: &masque::tensor::ParamStore<f64>| {
        let mut g = Graph::new(false);
        let out = model.read(&mut g, ps, &toy.examples[1]).unwrap();
        let beta = model.heads.rank_passages(&mut g, ps, &out).unwrap();
        let b = g.value(beta).data().to_vec();
        assert!(b.iter().all(|&x| x > 0.0 && x < 1.0));
        let mut idx: Vec<usize> = (0..b.len()).collect();
        idx.sort_by(|&i, &j| b[j].total_cmp(&b[i]));
        idx
    };
    let before = order(&ps);
    ps.get_mut(model.heads.ranker).data_mut().iter_mut().for_each(|w| *w *= 7.5);
    assert_eq!(before, order(&ps));
}

#[test]
fn heads_read_only_bos_rows() {
    let (toy, model, ps) = setup(3);
    let mut g = Graph::new(false);
    let out = model.read(&mut g, &ps, &toy.examples[2]).unwrap();
    let beta = model.heads.rank_passages(&mut g, &ps, &out).unwrap();
    let pa = model.heads.classify_answerability(&mut g, &ps, &out).unwrap();

    let mut zeroed = out.clone();
    for m in zeroed.m_p.iter_mut() {
        let v = g.value(*m);
        let mut data = vec![0.0; v.len()];
        data[..v.cols()].copy_from_slice(v.row(0));
        *m = g.constant(Tensor::new(v.shape().to_vec(), data).unwrap());
    }
    let beta2 = model.heads.rank_passages(&mut g, &ps, &zeroed).unwrap();
    let pa2 = model.heads.classify_answerability(&mut g, &ps, &zeroed).unwrap();
    assert_eq!(g.value(beta).data(), g.value(beta2).data());
    assert_eq!(g.value(pa).data(), g.value(pa2).data());
}

#[test]
fn identical_passages_commute() {
    let (toy, model, ps) = setup(4);
    let mut ex = toy.examples[0].clone();
    ex.passages[1] = ex.passages[0].clone();
    let mut swapped = ex.clone();
    swapped.passages.swap(0, 1);
    let prob = |ex: &masque::data::EncodedExample| {
        let mut g = Graph::new(false);
        let out = model.read(&mut g, &ps, ex).unwrap();
        let pa = model.heads.classify_answerability(&mut g, &ps, &out).unwrap();
        g.value(pa).data()[0]
    };
    assert_eq!(prob(&ex), prob(&swapped));
}

#[test]
fn passage_count_mismatch_is_a_configuration_error() {
    let (toy, model, ps) = setup(5);
    let mut g = Graph::new(false);
    let out = model.read(&mut g, &ps, &toy.examples[0]).unwrap();
    let mut other = masque::tensor::ParamStore::new();
    let heads = TaskHeads::new(&mut other, 8, 2, 0.1, &mut common::rng(0));
    let err = heads.classify_answerability(&mut g, &other, &out).unwrap_err();
    assert!(matches!(err, ModelError::Config(_)));

    let mut short = toy.examples[0].clone();
    short.passages.pop();
    assert!(matches!(model.read(&mut g, &ps, &short), Err(ModelError::Config(_))));
}
