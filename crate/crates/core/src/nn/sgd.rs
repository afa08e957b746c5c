use crate::nn::{GradientTape, ParamStore, Tensor};
use crate::{Error, Result, Scalar};

/// Plain gradient descent: every parameter `w` becomes `w - lr * g`.
pub fn sgd_step<T: Scalar>(params: &mut ParamStore<T>, grads: &GradientTape<T>, lr: T) -> Result<()> {
    check_coverage(params, grads)?;
    for i in 0..params.len() {
        let id = crate::nn::ParamId(i);
        let g = grads.get(id).expect("coverage checked");
        for (w, &d) in params.get_mut(id).data_mut().iter_mut().zip(g.data()) {
            *w = *w - lr * d;
        }
    }
    Ok(())
}

fn check_coverage<T: Scalar>(params: &ParamStore<T>, grads: &GradientTape<T>) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::contract(format!(
            "gradient tape covers {} parameters, store has {}",
            grads.len(),
            params.len()
        )));
    }
    for (id, name, value) in params.iter() {
        match grads.get(id) {
            None => return Err(Error::contract(format!("missing gradient for parameter `{name}`"))),
            Some(g) if g.shape() != value.shape() => {
                return Err(Error::contract(format!(
                    "gradient for `{name}` has shape {:?}, parameter has {:?}",
                    g.shape(),
                    value.shape()
                )))
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// SGD with classical momentum: `v = m·v + g; w -= lr·v`.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub momentum: T,
    velocity: Vec<Tensor<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(params: &ParamStore<T>, momentum: T) -> Self {
        Sgd {
            momentum,
            velocity: params.iter().map(|(_, _, v)| Tensor::zeros(v.shape())).collect(),
        }
    }

    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &GradientTape<T>, lr: T) -> Result<()> {
        check_coverage(params, grads)?;
        for (i, vel) in self.velocity.iter_mut().enumerate() {
            let id = crate::nn::ParamId(i);
            let g = grads.get(id).expect("coverage checked");
            let w = params.get_mut(id);
            for ((w, v), &d) in w.data_mut().iter_mut().zip(vel.data_mut()).zip(g.data()) {
                *v = self.momentum * *v + d;
                *w = *w - lr * *v;
            }
        }
        Ok(())
    }
}
