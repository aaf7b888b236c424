//! Stochastic gradient descent with classical momentum:
//! `v <- mu * v + g`, `w <- w - lr * v`.

use super::{Parameters, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Sgd { lr, momentum }
    }

    pub fn step<T: Scalar, M: Parameters<T>>(&self, model: &mut M) {
        let (lr, mu) = (T::lit(self.lr), T::lit(self.momentum));
        model.visit_mut("", &mut |_, p| {
            if !p.learnable {
                return;
            }
            for ((w, g), v) in p.value.iter_mut().zip(&p.grad).zip(p.velocity.iter_mut()) {
                *v = mu * *v + *g;
                *w -= lr * *v;
            }
        });
    }

    pub fn zero_grad<T: Scalar, M: Parameters<T>>(model: &mut M) {
        model.visit_mut("", &mut |_, p| p.zero_grad());
    }
}
