//! Finite-difference checks for every layer primitive, in f64 with step
//! 1e-5, including variants the acceptance suite does not sweep (valid
//! padding, stride 2, the conventional BN order, layer composition).

mod common;

use common::{dot, max_rel_err, numeric_gradient, projection, small_random, FD_TOL};

use clap_core::layers::act::{relu, relu_backward, relu_mask, sigmoid, sigmoid_backward};
use clap_core::layers::conv::{
    depthwise_backward, depthwise_forward, pointwise_backward, pointwise_forward, Padding,
};
use clap_core::layers::dropout::{dropout_backward, dropout_forward};
use clap_core::layers::linear::{linear_backward, linear_forward};
use clap_core::layers::norm::{BatchNorm, Mode};
use clap_core::layers::pool::{
    average_pool2d, average_pool2d_backward, global_average_pool, global_average_pool_backward,
};
use clap_core::layers::sepconv::{BnOrder, SepConvBlock};
use clap_core::layers::upsample::{nearest_upsample, nearest_upsample_backward};
use clap_core::parallel::Exec;
use clap_core::rng::Rng;
use clap_core::tensor::Tensor;

fn with_values(template: &Tensor<f64>, values: &[f64]) -> Tensor<f64> {
    Tensor::new(template.shape().to_vec(), values.to_vec()).unwrap()
}

#[test]
fn depthwise_gradients_match_finite_differences() {
    let mut rng = Rng::seed(101);
    for &(stride, padding) in &[
        (1, Padding::Same),
        (1, Padding::Valid),
        (2, Padding::Same),
    ] {
        let x = small_random(vec![2, 3, 6, 6], &mut rng);
        let k = small_random(vec![3, 3, 3], &mut rng);
        let out = depthwise_forward(&x, &k, stride, padding, Exec::serial()).unwrap();
        let proj = projection(out.shape(), &mut rng);
        let (gx, gk) =
            depthwise_backward(&x, &k, &proj, stride, padding, Exec::serial()).unwrap();

        let nx = numeric_gradient(x.data(), |vals| {
            let xv = with_values(&x, vals);
            dot(
                &depthwise_forward(&xv, &k, stride, padding, Exec::serial()).unwrap(),
                &proj,
            )
        });
        assert!(max_rel_err(gx.data(), &nx) < FD_TOL, "input grad, stride {stride}");

        let nk = numeric_gradient(k.data(), |vals| {
            let kv = with_values(&k, vals);
            dot(
                &depthwise_forward(&x, &kv, stride, padding, Exec::serial()).unwrap(),
                &proj,
            )
        });
        assert!(max_rel_err(gk.data(), &nk) < FD_TOL, "kernel grad, stride {stride}");
    }
}

#[test]
fn pointwise_gradients_match_finite_differences() {
    let mut rng = Rng::seed(102);
    let x = small_random(vec![2, 4, 3, 3], &mut rng);
    let k = small_random(vec![4, 5], &mut rng);
    let b = small_random(vec![5], &mut rng);
    let out = pointwise_forward(&x, &k, &b, Exec::serial()).unwrap();
    let proj = projection(out.shape(), &mut rng);
    let (gx, gk, gb) = pointwise_backward(&x, &k, &proj, Exec::serial()).unwrap();

    let nx = numeric_gradient(x.data(), |vals| {
        dot(
            &pointwise_forward(&with_values(&x, vals), &k, &b, Exec::serial()).unwrap(),
            &proj,
        )
    });
    assert!(max_rel_err(gx.data(), &nx) < FD_TOL);
    let nk = numeric_gradient(k.data(), |vals| {
        dot(
            &pointwise_forward(&x, &with_values(&k, vals), &b, Exec::serial()).unwrap(),
            &proj,
        )
    });
    assert!(max_rel_err(gk.data(), &nk) < FD_TOL);
    let nb = numeric_gradient(b.data(), |vals| {
        dot(
            &pointwise_forward(&x, &k, &with_values(&b, vals), Exec::serial()).unwrap(),
            &proj,
        )
    });
    assert!(max_rel_err(gb.data(), &nb) < FD_TOL);
}

#[test]
fn batch_norm_train_mode_gradients_match_finite_differences() {
    let mut rng = Rng::seed(103);
    let mut bn: BatchNorm<f64> = BatchNorm::new(3);
    bn.gamma = small_random(vec![3], &mut rng);
    bn.beta = small_random(vec![3], &mut rng);
    let x = small_random(vec![2, 3, 4, 4], &mut rng);
    let (out, ctx) = bn.forward(&x, Mode::Train, Exec::serial()).unwrap();
    let proj = projection(out.shape(), &mut rng);
    let (gx, ggamma, gbeta) = bn.backward(&ctx, &proj, Exec::serial()).unwrap();

    let nx = numeric_gradient(x.data(), |vals| {
        let (o, _) = bn
            .forward(&with_values(&x, vals), Mode::Train, Exec::serial())
            .unwrap();
        dot(&o, &proj)
    });
    assert!(max_rel_err(gx.data(), &nx) < FD_TOL, "x grad through batch stats");

    let ngamma = numeric_gradient(bn.gamma.data(), |vals| {
        let mut alt = bn.clone();
        alt.gamma = with_values(&bn.gamma, vals);
        let (o, _) = alt.forward(&x, Mode::Train, Exec::serial()).unwrap();
        dot(&o, &proj)
    });
    assert!(max_rel_err(ggamma.data(), &ngamma) < FD_TOL);

    let nbeta = numeric_gradient(bn.beta.data(), |vals| {
        let mut alt = bn.clone();
        alt.beta = with_values(&bn.beta, vals);
        let (o, _) = alt.forward(&x, Mode::Train, Exec::serial()).unwrap();
        dot(&o, &proj)
    });
    assert!(max_rel_err(gbeta.data(), &nbeta) < FD_TOL);
}

#[test]
fn activation_gradients_match_finite_differences() {
    let mut rng = Rng::seed(104);
    let x = small_random(vec![2, 3, 3, 3], &mut rng);
    let proj = projection(x.shape(), &mut rng);

    let g = relu_backward(&relu_mask(&x), &proj);
    let n = numeric_gradient(x.data(), |vals| dot(&relu(&with_values(&x, vals)), &proj));
    assert!(max_rel_err(g.data(), &n) < FD_TOL, "relu");

    let y = sigmoid(&x);
    let g = sigmoid_backward(&y, &proj);
    let n = numeric_gradient(x.data(), |vals| {
        dot(&sigmoid(&with_values(&x, vals)), &proj)
    });
    assert!(max_rel_err(g.data(), &n) < FD_TOL, "sigmoid");
}

#[test]
fn pooling_gradients_match_finite_differences() {
    let mut rng = Rng::seed(105);
    // 5x5 exercises the clipped ceil-mode edge windows
    let x = small_random(vec![2, 2, 5, 5], &mut rng);
    let (out, ctx) = average_pool2d(&x, 2, 2, true).unwrap();
    assert_eq!(out.shape(), &[2, 2, 3, 3]);
    let proj = projection(out.shape(), &mut rng);
    let gx = average_pool2d_backward(&ctx, &proj).unwrap();
    let n = numeric_gradient(x.data(), |vals| {
        let (o, _) = average_pool2d(&with_values(&x, vals), 2, 2, true).unwrap();
        dot(&o, &proj)
    });
    assert!(max_rel_err(gx.data(), &n) < FD_TOL, "average pool");

    let (out, spatial) = global_average_pool(&x).unwrap();
    let proj = projection(out.shape(), &mut rng);
    let gx = global_average_pool_backward(&proj, spatial);
    let n = numeric_gradient(x.data(), |vals| {
        let (o, _) = global_average_pool(&with_values(&x, vals)).unwrap();
        dot(&o, &proj)
    });
    assert!(max_rel_err(gx.data(), &n) < FD_TOL, "gap");
}

#[test]
fn upsample_gradients_match_finite_differences() {
    let mut rng = Rng::seed(106);
    let x = small_random(vec![1, 3, 3, 4], &mut rng);
    let out = nearest_upsample(&x, 2).unwrap();
    let proj = projection(out.shape(), &mut rng);
    let gx = nearest_upsample_backward(&proj, 2).unwrap();
    let n = numeric_gradient(x.data(), |vals| {
        dot(&nearest_upsample(&with_values(&x, vals), 2).unwrap(), &proj)
    });
    assert!(max_rel_err(gx.data(), &n) < FD_TOL);
}

#[test]
fn linear_gradients_match_finite_differences() {
    let mut rng = Rng::seed(107);
    let x = small_random(vec![3, 6], &mut rng);
    let w = small_random(vec![6, 4], &mut rng);
    let b = small_random(vec![4], &mut rng);
    let out = linear_forward(&x, &w, &b).unwrap();
    let proj = projection(out.shape(), &mut rng);
    let (gx, gw, gb) = linear_backward(&x, &w, &proj).unwrap();
    let nx = numeric_gradient(x.data(), |vals| {
        dot(&linear_forward(&with_values(&x, vals), &w, &b).unwrap(), &proj)
    });
    assert!(max_rel_err(gx.data(), &nx) < FD_TOL);
    let nw = numeric_gradient(w.data(), |vals| {
        dot(&linear_forward(&x, &with_values(&w, vals), &b).unwrap(), &proj)
    });
    assert!(max_rel_err(gw.data(), &nw) < FD_TOL);
    let nb = numeric_gradient(b.data(), |vals| {
        dot(&linear_forward(&x, &w, &with_values(&b, vals)).unwrap(), &proj)
    });
    assert!(max_rel_err(gb.data(), &nb) < FD_TOL);
}

#[test]
fn dropout_gradient_matches_finite_differences_for_a_frozen_mask() {
    let mut rng = Rng::seed(108);
    let x = small_random(vec![200], &mut rng);
    let mask_rng = Rng::seed(7);
    let (out, ctx) = dropout_forward(&x, 0.3, Mode::Train, &mut mask_rng.clone()).unwrap();
    let proj = projection(out.shape(), &mut rng);
    let g = dropout_backward(&ctx, &proj);
    let n = numeric_gradient(x.data(), |vals| {
        let (o, _) =
            dropout_forward(&with_values(&x, vals), 0.3, Mode::Train, &mut mask_rng.clone())
                .unwrap();
        dot(&o, &proj)
    });
    assert!(max_rel_err(g.data(), &n) < FD_TOL);
}

#[test]
fn sepconv_block_gradients_match_finite_differences_in_both_orders() {
    let mut rng = Rng::seed(109);
    for order in [BnOrder::Literal, BnOrder::Conventional] {
        let block: SepConvBlock<f64> = SepConvBlock::new("b", 3, 4, 3, order, &mut rng);
        let x = small_random(vec![2, 3, 5, 5], &mut rng);
        let (out, ctx) = block.forward(&x, Mode::Train, Exec::serial()).unwrap();
        let proj = projection(out.shape(), &mut rng);
        let (gx, grads) = block.backward(&ctx, &proj, Exec::serial()).unwrap();

        let eval = |b: &SepConvBlock<f64>, xv: &Tensor<f64>| -> f64 {
            let (o, _) = b.forward(xv, Mode::Train, Exec::serial()).unwrap();
            dot(&o, &proj)
        };

        let nx = numeric_gradient(x.data(), |vals| eval(&block, &with_values(&x, vals)));
        assert!(max_rel_err(gx.data(), &nx) < FD_TOL, "{order:?} input");

        for (field, analytic) in [
            ("dw", &grads.dw),
            ("pw", &grads.pw),
            ("bias", &grads.bias),
            ("gamma", &grads.gamma),
            ("beta", &grads.beta),
        ] {
            let current = match field {
                "dw" => block.dw.clone(),
                "pw" => block.pw.clone(),
                "bias" => block.bias.clone(),
                "gamma" => block.bn.gamma.clone(),
                _ => block.bn.beta.clone(),
            };
            let numeric = numeric_gradient(current.data(), |vals| {
                let mut alt = block.clone();
                match field {
                    "dw" => alt.dw = with_values(&current, vals),
                    "pw" => alt.pw = with_values(&current, vals),
                    "bias" => alt.bias = with_values(&current, vals),
                    "gamma" => alt.bn.gamma = with_values(&current, vals),
                    _ => alt.bn.beta = with_values(&current, vals),
                }
                eval(&alt, &x)
            });
            assert!(
                max_rel_err(analytic.data(), &numeric) < FD_TOL,
                "{order:?} {field}"
            );
        }
    }
}

#[test]
fn composed_blocks_backpropagate_like_the_composition() {
    let mut rng = Rng::seed(110);
    let first: SepConvBlock<f64> = SepConvBlock::new("a", 2, 3, 3, BnOrder::Literal, &mut rng);
    let second: SepConvBlock<f64> = SepConvBlock::new("b", 3, 4, 3, BnOrder::Literal, &mut rng);
    let x = small_random(vec![2, 2, 4, 4], &mut rng);
    let (mid, ctx_a) = first.forward(&x, Mode::Train, Exec::serial()).unwrap();
    let (out, ctx_b) = second.forward(&mid, Mode::Train, Exec::serial()).unwrap();
    let proj = projection(out.shape(), &mut rng);
    let (g_mid, _) = second.backward(&ctx_b, &proj, Exec::serial()).unwrap();
    let (gx, _) = first.backward(&ctx_a, &g_mid, Exec::serial()).unwrap();

    let n = numeric_gradient(x.data(), |vals| {
        let (m, _) = first
            .forward(&with_values(&x, vals), Mode::Train, Exec::serial())
            .unwrap();
        let (o, _) = second.forward(&m, Mode::Train, Exec::serial()).unwrap();
        dot(&o, &proj)
    });
    assert!(max_rel_err(gx.data(), &n) < FD_TOL);
}
