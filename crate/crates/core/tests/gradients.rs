mod common;

use common::{layer_gradcheck, random_tensor, rng};
use derain::nn::gradcheck::GradCheckReport;
use derain::nn::{BlockInit, ChannelAttention, Conv2d, Dab, Graph, ParamStore, Rrg, SpatialAttention, Tensor};

const TOL: f64 = 1e-4;
const SEEDS: [u64; 3] = [1, 2, 3];

fn assert_passes(what: &str, seed: u64, r: &GradCheckReport) {
    assert!(r.passes(TOL), "{what} seed {seed}: {r:?}");
    assert!(r.checked > r.skipped, "{what} seed {seed}: too many kinks skipped: {r:?}");
}

#[test]
fn conv3_gradients() {
    for seed in SEEDS {
        let mut store = ParamStore::new();
        let conv = Conv2d::uniform(&mut store, "c", 3, 4, 3, &mut rng(seed)).unwrap();
        let x = random_tensor([2, 3, 5, 6], seed + 10);
        let r = layer_gradcheck(&store, &x, 200, seed, |g, p, v| conv.forward(g, p, v)).unwrap();
        assert_passes("conv3", seed, &r);
    }
}

#[test]
fn conv1_gradients() {
    for seed in SEEDS {
        let mut store = ParamStore::new();
        let conv = Conv2d::uniform(&mut store, "c", 4, 2, 1, &mut rng(seed)).unwrap();
        let x = random_tensor([2, 4, 3, 3], seed + 10);
        let r = layer_gradcheck(&store, &x, 200, seed, |g, p, v| conv.forward(g, p, v)).unwrap();
        assert_passes("conv1", seed, &r);
    }
}

#[test]
fn channel_attention_gradients() {
    for seed in SEEDS {
        let mut store = ParamStore::new();
        let ca = ChannelAttention::new(&mut store, "ca", 8, 4, BlockInit::Uniform, &mut rng(seed)).unwrap();
        let x = random_tensor([2, 8, 4, 4], seed + 10);
        let r = layer_gradcheck(&store, &x, 200, seed, |g, p, v| ca.forward(g, p, v)).unwrap();
        assert_passes("channel attention", seed, &r);
    }
}

#[test]
fn spatial_attention_gradients() {
    for seed in SEEDS {
        let mut store = ParamStore::new();
        let sa = SpatialAttention::new(&mut store, "sa", BlockInit::Uniform, &mut rng(seed)).unwrap();
        let x = random_tensor([2, 4, 5, 5], seed + 10);
        let r = layer_gradcheck(&store, &x, 200, seed, |g, p, v| sa.forward(g, p, v)).unwrap();
        assert_passes("spatial attention", seed, &r);
    }
}

#[test]
fn dab_gradients() {
    for seed in SEEDS {
        let mut store = ParamStore::new();
        let dab = Dab::new(&mut store, "dab", 4, 4, BlockInit::Uniform, &mut rng(seed)).unwrap();
        let x = random_tensor([1, 4, 5, 5], seed + 10);
        let r = layer_gradcheck(&store, &x, 150, seed, |g, p, v| dab.forward(g, p, v)).unwrap();
        assert_passes("DAB", seed, &r);
    }
}

#[test]
fn rrg_gradients() {
    for seed in SEEDS {
        let mut store = ParamStore::new();
        let rrg = Rrg::new(&mut store, "rrg", 4, 4, BlockInit::Uniform, &mut rng(seed)).unwrap();
        let x = random_tensor([1, 4, 4, 4], seed + 10);
        let r = layer_gradcheck(&store, &x, 150, seed, |g, p, v| rrg.forward(g, p, v)).unwrap();
        assert_passes("RRG", seed, &r);
    }
}

#[test]
fn l1_loss_gradient_is_sign_over_count() {
    let p = random_tensor([1, 2, 3, 3], 4);
    let t = random_tensor([1, 2, 3, 3], 5);
    let mut g = Graph::new();
    let pv = g.input(p.clone()).unwrap();
    let tv = g.input(t.clone()).unwrap();
    let l = g.l1_loss(pv, tv).unwrap();
    let expected: f64 = p.data().iter().zip(t.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 18.0;
    assert!((g.value(l).item() - expected).abs() < 1e-15);
    let grads = g.backward(l);
    for ((d, a), b) in grads.get(pv).unwrap().iter().zip(p.data()).zip(t.data()) {
        assert_eq!(*d, (a - b).signum() / 18.0);
    }
}

#[test]
fn zero_initialized_blocks_are_identities() {
    let x = random_tensor([2, 8, 5, 7], 9);
    let mut store = ParamStore::new();
    let dab = Dab::new(&mut store, "dab", 8, 4, BlockInit::Zeros, &mut rng(0)).unwrap();
    let rrg = Rrg::new(&mut store, "rrg", 8, 4, BlockInit::Zeros, &mut rng(0)).unwrap();
    let mut g = Graph::new();
    let v = g.input(x.clone()).unwrap();
    let a = dab.forward(&mut g, &store, v).unwrap();
    let b = rrg.forward(&mut g, &store, v).unwrap();
    assert_eq!(g.value(a), &x);
    assert_eq!(g.value(b), &x);
}

#[test]
fn random_weights_never_produce_non_finite_values() {
    for seed in 0..5u64 {
        let mut store = ParamStore::new();
        let rrg = Rrg::new(&mut store, "rrg", 8, 4, BlockInit::Uniform, &mut rng(seed)).unwrap();
        let x = Tensor::new([1, 8, 6, 6], random_tensor([1, 8, 6, 6], seed).data().iter().map(|v| v * 50.0).collect())
            .unwrap();
        let mut g = Graph::new();
        let v = g.input(x).unwrap();
        let y = rrg.forward(&mut g, &store, v).unwrap();
        assert!(g.value(y).is_finite());
    }
}
