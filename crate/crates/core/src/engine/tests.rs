//! Finite-difference checks for every differentiable op.

use super::*;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn check<F>(f: F, inputs: &[Tensor<f64>])
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> crate::Result<Var<'g, f64>>,
{
    let r = finite_diff_check_many(f, inputs, 1e-6).unwrap();
    assert!(r.checked > 0, "{r:?}");
    assert!(r.max_rel_error < 1e-6, "{r:?}");
}

#[test]
fn elementwise() {
    let a = t(&[2, 2], &[0.3, -1.2, 0.7, 2.0]);
    let b = t(&[2, 2], &[1.1, 0.4, -0.5, 0.9]);
    check(|_, v| v[0].add(v[1])?.mul(v[0])?.sub(v[1].neg()?)?.sum(), &[a, b]);
}

#[test]
fn scale_and_bias() {
    let x = t(&[2, 3], &[0.3, -1.2, 0.7, 2.0, 0.1, -0.4]);
    let s = t(&[1], &[0.8]);
    let b = t(&[3], &[0.2, -0.1, 0.5]);
    check(|_, v| v[0].scale(v[1])?.add_bias(v[2])?.mul(v[0])?.mean(), &[x, s, b]);
}

#[test]
fn matmuls_and_dots() {
    let a = t(&[2, 3], &[0.3, -1.2, 0.7, 2.0, 0.1, -0.4]);
    let b = t(&[3, 2], &[1.0, 0.5, -0.3, 0.2, 0.9, -1.1]);
    let c = t(
        &[4, 3],
        &[0.1, 0.2, 0.3, -0.4, 0.5, 0.6, 0.7, -0.8, 0.9, 1.0, 1.1, -1.2],
    );
    check(
        |_, v| {
            let p = v[0].matmul(v[1])?;
            let q = v[0].matmul_t(v[2])?;
            let r = v[0].dots(v[2])?;
            p.mul(p)?.sum()?.add(q.mul(r)?.sum()?)
        },
        &[a, b, c],
    );
}

#[test]
fn relu_sum_rows_away_from_kink() {
    let x = t(&[2, 3], &[0.3, -1.2, 0.7, 2.0, 0.1, -0.4]);
    check(|_, v| v[0].relu()?.sum_rows()?.mul(v[0].sum_rows()?)?.sum(), &[x]);
}

#[test]
fn conv_pool_concat() {
    let mut data = Vec::new();
    for i in 0..2 * 2 * 5 * 5 {
        data.push(((i * 37 % 23) as f64 - 11.0) / 10.0);
    }
    let x = t(&[2, 2, 5, 5], &data);
    let k1: Vec<f64> = (0..3 * 2 * 3 * 3).map(|i| ((i * 13 % 17) as f64 - 8.0) / 9.0).collect();
    let k2: Vec<f64> = (0..2 * 3 * 2 * 2).map(|i| ((i * 7 % 11) as f64 - 5.0) / 6.0).collect();
    let cb = t(&[3], &[0.1, -0.2, 0.3]);
    check(
        |_, v| {
            let h = v[0].conv2d(v[1], 2, 1)?.add_channel_bias(v[3])?;
            let h2 = h.conv2d(v[2], 1, 0)?;
            let z = Var::concat_cols(&[h.global_avg_pool()?, h2.global_avg_pool()?])?;
            z.mul(z)?.sum()
        },
        &[x, t(&[3, 2, 3, 3], &k1), t(&[2, 3, 2, 2], &k2), cb],
    );
}

#[test]
fn normalize_and_cross_entropy() {
    let x = t(&[3, 2], &[0.3, -1.2, 0.7, 2.0, 0.1, -0.4]);
    check(
        |_, v| {
            v[0].normalize_rows()?
                .add(v[0].normalize_rows()?)?
                .softmax_cross_entropy(&[1, 0, 1])
        },
        &[x],
    );
}

#[test]
fn reshape_select() {
    let x = t(&[2, 3], &[0.3, -1.2, 0.7, 2.0, 0.1, -0.4]);
    check(
        |_, v| {
            let r = v[0].reshape(&[3, 2])?;
            r.select(1)?.mul(r.select(2)?)?.sum()
        },
        &[x],
    );
}

#[test]
fn dropout_gradient_matches_mask() {
    use rand::SeedableRng;
    let g = Graph::<f64>::new();
    let x = g.variable(Tensor::full(&[1000], 1.0));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let y = x.dropout(0.25, &mut rng).unwrap();
    let loss = y.sum().unwrap();
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(x).unwrap(), &y.to_tensor());
    let kept = y.value().data().iter().filter(|&&v| v > 0.0).count();
    assert!((650..850).contains(&kept), "{kept}");
}

#[test]
fn shared_param_accumulates() {
    let mut store = ParamStore::<f64>::new();
    let w = store.add("w", Tensor::vector(vec![3.0]));
    let g = Graph::new();
    let a = g.param(&store, w);
    let b = g.param(&store, w);
    assert_eq!(a.id(), b.id());
    let loss = a.mul(b).unwrap().sum().unwrap();
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.param(w).unwrap().data(), &[6.0]);
}

#[test]
fn non_scalar_loss_rejected() {
    let g = Graph::<f64>::new();
    let x = g.variable(Tensor::vector(vec![1.0, 2.0]));
    assert!(matches!(g.backward(x), Err(crate::Error::NonScalarLoss(_))));
}

#[test]
fn non_finite_forward_rejected() {
    let g = Graph::<f64>::new();
    let x = g.variable(Tensor::vector(vec![f64::MAX]));
    let err = x.add(x).unwrap_err();
    assert!(matches!(err, crate::Error::NonFinite(_)));
}
