use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tversky_core::engine::{
    norm_relative_error, Graph, OptimizerConfig, OptimizerState, ParamId, ParamStore, Tensor, Var,
};
use tversky_core::layers::{
    Backbone, BankRef, Flatten, PrototypeBank, SharedBankRegistry, TverskyProjection, VisualTverskyProjection,
};
use tversky_core::tversky::{ContrastWeights, DifferenceReduction, IntersectionReduction, ReductionConfig};
use tversky_core::Result;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn configs() -> Vec<ReductionConfig> {
    let mut out = Vec::new();
    for i in IntersectionReduction::ALL {
        for d in DifferenceReduction::ALL {
            for n in [false, true] {
                out.push(ReductionConfig::new(i, d).normalized(n));
            }
        }
    }
    out
}

fn projection(rng: &mut ChaCha8Rng, store: &mut ParamStore<f64>, cfg: ReductionConfig) -> TverskyProjection {
    TverskyProjection::new(
        store,
        "proj",
        random(rng, &[4, 3]),
        random(rng, &[6, 3]),
        ContrastWeights::new(1.3, 0.4, 0.8),
        cfg,
    )
    .unwrap()
}

#[test]
fn projection_equals_pairwise_similarity_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for cfg in configs() {
        let mut store = ParamStore::new();
        let layer = projection(&mut rng, &mut store, cfg);
        let x = random(&mut rng, &[5, 3]);
        let out = layer.eval(&store, &x).unwrap();
        let protos = store.value(layer.prototypes.id).clone();
        for i in 0..5 {
            for j in 0..4 {
                let s = layer.similarity.similarity(&store, x.row(i), protos.row(j)).unwrap();
                assert_eq!(out.data()[i * 4 + j].to_bits(), s.to_bits(), "{cfg:?} ({i}, {j})");
            }
        }
    }
}

#[test]
fn permuting_prototypes_permutes_outputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let perm = [2, 0, 3, 1];
    for cfg in configs() {
        let mut store = ParamStore::new();
        let layer = projection(&mut rng, &mut store, cfg);
        let x = random(&mut rng, &[3, 3]);
        let before = layer.eval(&store, &x).unwrap();
        let shuffled = store.value(layer.prototypes.id).gather(&perm);
        *store.value_mut(layer.prototypes.id) = shuffled;
        let after = layer.eval(&store, &x).unwrap();
        for i in 0..3 {
            for (j, &src) in perm.iter().enumerate() {
                assert_eq!(after.data()[i * 4 + j], before.data()[i * 4 + src]);
            }
        }
    }
}

fn loss<'g>(layer: &TverskyProjection, g: &'g Graph<f64>, store: &ParamStore<f64>, x: &Tensor<f64>) -> Var<'g, f64> {
    layer.forward(g, store, g.constant(x.clone())).unwrap().sum().unwrap()
}

#[test]
fn shared_bank_sums_gradients_and_updates_once() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = ReductionConfig::new(IntersectionReduction::Product, DifferenceReduction::SubstractMatch);
    let mut store = ParamStore::new();
    let bank = store.add("shared.features", random(&mut rng, &[6, 3]));
    let mut reg = SharedBankRegistry::new();
    reg.register("shared", bank).unwrap();
    let mut layer = |store: &mut ParamStore<f64>, name: &str| {
        let protos = store.add(format!("{name}.prototypes"), random(&mut rng, &[2, 3]));
        let features = reg.resolve("shared").unwrap();
        TverskyProjection::with_banks(
            store,
            name,
            PrototypeBank::owned(protos),
            features,
            ContrastWeights::default(),
            cfg,
        )
        .unwrap()
    };
    let (l1, l2) = (layer(&mut store, "one"), layer(&mut store, "two"));
    assert!(matches!(&l1.similarity.features, BankRef::Shared { id, .. } if *id == bank));
    let x = Tensor::from_rows(&[[0.4, -0.9, 0.2], [0.7, 0.1, -0.5]]).unwrap();

    let separate: Vec<Tensor<f64>> = [&l1, &l2]
        .iter()
        .map(|l| {
            let g = Graph::new();
            let loss = loss(l, &g, &store, &x);
            g.backward(loss).unwrap().param(bank).unwrap().clone()
        })
        .collect();
    let g = Graph::new();
    let joint = loss(&l1, &g, &store, &x).add(loss(&l2, &g, &store, &x)).unwrap();
    let grads = g.backward(joint).unwrap();
    let sum = grads.param(bank).unwrap();
    for k in 0..sum.len() {
        let expect = separate[0].data()[k] + separate[1].data()[k];
        assert!((sum.data()[k] - expect).abs() < 1e-14);
    }

    // A single SGD step applies the summed gradient once.
    let before = store.value(bank).clone();
    let mut opt = OptimizerState::new(OptimizerConfig::sgd(0.1));
    opt.step(&mut store, &grads).unwrap();
    for k in 0..before.len() {
        let moved = before.data()[k] - store.value(bank).data()[k];
        assert!((moved - 0.1 * sum.data()[k]).abs() < 1e-14);
    }
}

#[test]
fn tied_prototypes_read_and_train_the_source() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = ReductionConfig::default();
    let mut store = ParamStore::new();
    let src = projection(&mut rng, &mut store, cfg);
    let tied = PrototypeBank::tied(&store, src.prototypes.id);
    assert_eq!(tied.tied_source.as_deref(), Some("proj.prototypes"));
    let features = BankRef::Owned(store.add("other.features", random(&mut rng, &[5, 3])));
    let other =
        TverskyProjection::with_banks(&mut store, "other", tied, features, ContrastWeights::default(), cfg).unwrap();
    let n_before = store.len();
    let x = random(&mut rng, &[3, 3]);
    let g = Graph::new();
    let l = loss(&other, &g, &store, &x);
    let grads = g.backward(l).unwrap();
    assert!(grads.param(src.prototypes.id).is_some());
    OptimizerState::new(OptimizerConfig::sgd(0.5))
        .step(&mut store, &grads)
        .unwrap();
    assert_eq!(store.len(), n_before);
    // Both layers see the same updated prototypes.
    assert_eq!(
        store.value(other.prototypes.id).data(),
        store.value(src.prototypes.id).data()
    );
}

#[test]
fn visual_with_flatten_equals_vector_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for cfg in configs() {
        let protos = random(&mut rng, &[3, 1, 2, 2]);
        let feats = random(&mut rng, &[5, 1, 2, 2]);
        let mut vs = ParamStore::new();
        let visual = VisualTverskyProjection::new(
            &mut vs,
            "v",
            protos.clone(),
            feats.clone(),
            ContrastWeights::default(),
            cfg,
        );
        let mut ps = ParamStore::new();
        let vector = TverskyProjection::new(
            &mut ps,
            "p",
            protos.reshape(&[3, 4]).unwrap(),
            feats.reshape(&[5, 4]).unwrap(),
            ContrastWeights::default(),
            cfg,
        )
        .unwrap();
        let x = random(&mut rng, &[4, 1, 2, 2]);
        let g = Graph::new();
        let a = visual
            .forward(&g, &vs, &Flatten, g.constant(x.clone()))
            .unwrap()
            .to_tensor();
        let b = vector.eval(&ps, &x.reshape(&[4, 4]).unwrap()).unwrap();
        assert_eq!(a, b, "{cfg:?}");
    }
}

/// 4x4 images -> 2-channel 3x3 conv with padding -> flattened to 32 dims.
struct ToyConv {
    kernel: ParamId,
}

impl Backbone<f64> for ToyConv {
    fn embed<'g>(&self, g: &'g Graph<f64>, store: &ParamStore<f64>, x: Var<'g, f64>) -> Result<Var<'g, f64>> {
        let h = x.conv2d(g.param(store, self.kernel), 1, 1)?;
        let n = h.shape()[0];
        h.reshape(&[n, 32])
    }
}

#[test]
fn image_parameters_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = ReductionConfig::new(IntersectionReduction::Mean, DifferenceReduction::SubstractMatch);
    let mut store = ParamStore::new();
    let backbone = ToyConv {
        kernel: store.add("conv", random(&mut rng, &[2, 1, 3, 3])),
    };
    let layer = VisualTverskyProjection::new(
        &mut store,
        "v",
        random(&mut rng, &[3, 1, 4, 4]),
        random(&mut rng, &[4, 1, 4, 4]),
        ContrastWeights::new(1.0, 0.6, 0.3),
        cfg,
    );
    let x = random(&mut rng, &[2, 1, 4, 4]);
    let weights = random(&mut rng, &[2, 3]);
    let eval = |store: &ParamStore<f64>| -> (Graph<f64>, f64) {
        let g = Graph::new().with_mask_trace();
        let s = layer.forward(&g, store, &backbone, g.constant(x.clone())).unwrap();
        let v = s
            .mul(g.constant(weights.clone()))
            .unwrap()
            .sum()
            .unwrap()
            .item()
            .unwrap();
        (g, v)
    };
    let g = Graph::new();
    let s = layer.forward(&g, &store, &backbone, g.constant(x.clone())).unwrap();
    let l = s.mul(g.constant(weights.clone())).unwrap().sum().unwrap();
    let grads = g.backward(l).unwrap();
    let base = eval(&store).0.mask_trace().unwrap();
    assert!(base.min_margin > 1e-4, "draw is too close to a mask boundary");

    let h = 1e-6;
    for id in [
        layer.images.prototype_images,
        layer.images.feature_images,
        backbone.kernel,
    ] {
        let analytic = grads.param(id).unwrap().to_f64_vec();
        let mut numeric = Vec::new();
        for i in 0..analytic.len() {
            let x0 = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = x0 + h;
            let (gp, plus) = eval(&store);
            store.value_mut(id).data_mut()[i] = x0 - h;
            let (gm, minus) = eval(&store);
            store.value_mut(id).data_mut()[i] = x0;
            assert_eq!(gp.mask_trace().unwrap().signature, base.signature);
            assert_eq!(gm.mask_trace().unwrap().signature, base.signature);
            numeric.push((plus - minus) / (2.0 * h));
        }
        let err = norm_relative_error(&analytic, &numeric);
        assert!(err < 1e-5, "{}: {err:e}", store.get(id).name);
    }
}
