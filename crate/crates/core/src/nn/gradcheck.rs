//! Central-difference gradient checking in 64-bit precision.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::arch::BBox;
use crate::nn::{ops, Conv2d, GradientTape, Linear, ParamId, ParamStore, Tensor};
use crate::Result;

/// Worst disagreement found by [`grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Where the worst error occurred, e.g. `param conv.weight[3]` or `input[7]`.
    pub worst: String,
    pub checked: usize,
}

/// Compares analytic gradients against central differences.
///
/// `f` evaluates a scalar loss of the fragment and returns it together
/// with the analytic parameter and input gradients. The numeric side only
/// ever uses the loss value. Relative error per entry is
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(params: &ParamStore<f64>, input: &Tensor<f64>, epsilon: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore<f64>, &Tensor<f64>) -> Result<(f64, GradientTape<f64>, Tensor<f64>)>,
{
    let (_, tape, d_input) = f(params, input)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let mut record = |analytic: f64, numeric: f64, at: &dyn Fn() -> String| {
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        let err = (analytic - numeric).abs() / denom;
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = at();
        }
    };

    let mut probe = params.clone();
    for i in 0..params.len() {
        let id = ParamId(i);
        let zeros;
        let analytic = match tape.get(id) {
            Some(g) => g,
            None => {
                zeros = Tensor::zeros(params.get(id).shape());
                &zeros
            }
        };
        for j in 0..params.get(id).len() {
            let orig = params.get(id).data()[j];
            probe.get_mut(id).data_mut()[j] = orig + epsilon;
            let plus = f(&probe, input)?.0;
            probe.get_mut(id).data_mut()[j] = orig - epsilon;
            let minus = f(&probe, input)?.0;
            probe.get_mut(id).data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            record(analytic.data()[j], numeric, &|| format!("param {}[{j}]", params.name(id)));
        }
    }

    let mut x = input.clone();
    for j in 0..input.len() {
        let orig = input.data()[j];
        x.data_mut()[j] = orig + epsilon;
        let plus = f(params, &x)?.0;
        x.data_mut()[j] = orig - epsilon;
        let minus = f(params, &x)?.0;
        x.data_mut()[j] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        record(d_input.data()[j], numeric, &|| format!("input[{j}]"));
    }
    Ok(report)
}

/// `Σ output · weights`, the probe loss used by fragment checks, and its gradient.
pub fn weighted_sum_loss(output: &Tensor<f64>, weights: &Tensor<f64>) -> (f64, Tensor<f64>) {
    let loss = output.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
    (loss, weights.clone())
}

/// Layer kinds with a random-instance gradient check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckCase {
    Conv,
    Nin,
    FullyConnected,
    Relu,
    MaxPool,
    Softmax,
    Concat,
    ConcatNin,
    RoiPool,
}

impl CheckCase {
    pub const ALL: [CheckCase; 9] = [
        CheckCase::Conv,
        CheckCase::Nin,
        CheckCase::FullyConnected,
        CheckCase::Relu,
        CheckCase::MaxPool,
        CheckCase::Softmax,
        CheckCase::Concat,
        CheckCase::ConcatNin,
        CheckCase::RoiPool,
    ];
}

fn uniform<R: Rng + ?Sized>(shape: [usize; 4], rng: &mut R) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| rng.random_range(-1.0..1.0))
}

/// Values spaced at least `gap` apart, so max selections stay put under small perturbations.
fn distinct<R: Rng + ?Sized>(shape: [usize; 4], gap: f64, rng: &mut R) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * gap).collect();
    v.shuffle(rng);
    Tensor::from_vec(shape, v).expect("matching length")
}

/// Draws one random instance of `case` and checks it with a random linear probe loss.
pub fn check_random_instance<R: Rng + ?Sized>(case: CheckCase, rng: &mut R) -> Result<GradCheckReport> {
    const EPS: f64 = 1e-6;
    let mut store = ParamStore::<f64>::new();
    let n = rng.random_range(1..=2);
    match case {
        CheckCase::Conv | CheckCase::Nin => {
            let (k, stride, pad) = if case == CheckCase::Nin {
                (1, 1, 0)
            } else {
                (rng.random_range(1..=3), rng.random_range(1..=2), rng.random_range(0..=1))
            };
            let (c_in, c_out) = (rng.random_range(1..=3), rng.random_range(1..=3));
            let (h, w) = (rng.random_range(k.max(2)..=5), rng.random_range(k.max(2)..=5));
            let layer = Conv2d::register(&mut store, "conv", c_in, c_out, k, stride, pad, 0.5, rng)?;
            *store.get_mut(layer.bias) = uniform([c_out, 1, 1, 1], rng);
            let x = uniform([n, c_in, h, w], rng);
            let (y0, _) = layer.forward(&store, &x)?;
            let probe = uniform(y0.shape(), rng);
            grad_check(&store, &x, EPS, |s, x| {
                let (y, cache) = layer.forward(s, x)?;
                let (loss, dy) = weighted_sum_loss(&y, &probe);
                let mut tape = GradientTape::for_store(s);
                let dx = layer.backward(s, &cache, &dy, &mut tape)?;
                Ok((loss, tape, dx))
            })
        }
        CheckCase::FullyConnected => {
            let (c, h, w) = (rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3));
            let d_out = rng.random_range(1..=4);
            let layer = Linear::register(&mut store, "fc", c * h * w, d_out, 0.5, rng)?;
            *store.get_mut(layer.bias) = uniform([d_out, 1, 1, 1], rng);
            let x = uniform([n, c, h, w], rng);
            let probe = uniform([n, d_out, 1, 1], rng);
            grad_check(&store, &x, EPS, |s, x| {
                let y = layer.forward(s, x)?;
                let (loss, dy) = weighted_sum_loss(&y, &probe);
                let mut tape = GradientTape::for_store(s);
                let dx = layer.backward(s, x, &dy, &mut tape)?;
                Ok((loss, tape, dx))
            })
        }
        CheckCase::Relu => {
            let shape = [n, rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(1..=4)];
            // keep inputs at least 0.1 away from the kink
            let x = uniform(shape, rng).map(|v| if v >= 0.0 { v + 0.1 } else { v - 0.1 });
            let probe = uniform(shape, rng);
            grad_check(&store, &x, EPS, |s, x| {
                let y = ops::relu(x);
                let (loss, dy) = weighted_sum_loss(&y, &probe);
                Ok((loss, GradientTape::for_store(s), ops::relu_backward(&y, &dy)))
            })
        }
        CheckCase::MaxPool => {
            let shape = [n, rng.random_range(1..=2), rng.random_range(2..=5), rng.random_range(2..=5)];
            let x = distinct(shape, 0.01, rng);
            let (y0, _) = ops::maxpool2x2(&x)?;
            let probe = uniform(y0.shape(), rng);
            grad_check(&store, &x, EPS, |s, x| {
                let (y, cache) = ops::maxpool2x2(x)?;
                let (loss, dy) = weighted_sum_loss(&y, &probe);
                Ok((loss, GradientTape::for_store(s), ops::maxpool2x2_backward(&cache, &dy)))
            })
        }
        CheckCase::Softmax => {
            let shape = [n, rng.random_range(2..=4), rng.random_range(1..=3), rng.random_range(1..=3)];
            let x = uniform(shape, rng).map(|v| 3.0 * v);
            let probe = uniform(shape, rng);
            grad_check(&store, &x, EPS, |s, x| {
                let y = ops::softmax(x);
                let (loss, dy) = weighted_sum_loss(&y, &probe);
                Ok((loss, GradientTape::for_store(s), ops::softmax_backward(&y, &dy)))
            })
        }
        CheckCase::Concat | CheckCase::ConcatNin => {
            // the input carries both halves; the split point is the concat boundary
            let (ca, cb) = (rng.random_range(1..=3), rng.random_range(1..=3));
            let (h, w) = (rng.random_range(1..=4), rng.random_range(1..=4));
            let x = uniform([n, ca + cb, h, w], rng);
            let nin = if case == CheckCase::ConcatNin {
                let c_out = rng.random_range(1..=3);
                let l = Conv2d::register_nin(&mut store, "nin", ca + cb, c_out, 0.5, rng)?;
                *store.get_mut(l.bias) = uniform([c_out, 1, 1, 1], rng);
                Some(l)
            } else {
                None
            };
            let out_c = nin.map_or(ca + cb, |l| l.c_out);
            let probe = uniform([n, out_c, h, w], rng);
            grad_check(&store, &x, EPS, |s, x| {
                let (a, b) = (x.channel_slice(0, ca), x.channel_slice(ca, cb));
                let joined = ops::concat_channels(&a, &b)?;
                let mut tape = GradientTape::for_store(s);
                let (loss, d_joined) = match nin {
                    Some(l) => {
                        let (y, cache) = l.forward(s, &joined)?;
                        let (loss, dy) = weighted_sum_loss(&y, &probe);
                        (loss, l.backward(s, &cache, &dy, &mut tape)?)
                    }
                    None => weighted_sum_loss(&joined, &probe),
                };
                let (da, db) = ops::concat_channels_backward(&d_joined, ca);
                Ok((loss, tape, ops::concat_channels(&da, &db)?))
            })
        }
        CheckCase::RoiPool => {
            let (c, h, w) = (rng.random_range(1..=2), rng.random_range(3..=6), rng.random_range(3..=6));
            let x = distinct([1, c, h, w], 0.01, rng);
            let scale = 0.5;
            let x1 = rng.random_range(0.0..(w as f64 / scale) * 0.6);
            let y1 = rng.random_range(0.0..(h as f64 / scale) * 0.6);
            let x2 = rng.random_range(x1 + 1.0..=w as f64 / scale + 2.0);
            let y2 = rng.random_range(y1 + 1.0..=h as f64 / scale + 2.0);
            let roi = BBox::new(x1, y1, x2, y2)?;
            let out = (rng.random_range(1..=3), rng.random_range(1..=3));
            let probe = uniform([1, c, out.0, out.1], rng);
            grad_check(&store, &x, EPS, |s, x| {
                let (y, cache) = ops::roi_pool(x, &roi, scale, out)?;
                let (loss, dy) = weighted_sum_loss(&y, &probe);
                let mut dx = Tensor::zeros(x.shape());
                ops::roi_pool_backward(&cache, dy.data(), &mut dx)?;
                Ok((loss, GradientTape::for_store(s), dx))
            })
        }
    }
}
