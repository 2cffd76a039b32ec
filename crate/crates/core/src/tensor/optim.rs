use super::{ParamStore, Real};

/// Stochastic gradient descent with heavy-ball momentum:
/// `v <- momentum * v + grad`, `param <- param - lr * v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64) -> Self {
        SgdMomentum { lr, momentum }
    }

    /// Applies one update and clears the gradients.
    pub fn step<T: Real>(&self, store: &mut ParamStore<T>) {
        let lr = T::c(self.lr);
        let mu = T::c(self.momentum);
        for p in store.iter_mut() {
            let it = p.value.data_mut().iter_mut().zip(p.velocity.data_mut()).zip(p.grad.data_mut());
            for ((w, v), g) in it {
                *v = mu * *v + *g;
                *w -= lr * *v;
                *g = T::zero();
            }
        }
    }
}

/// Adam with bias-corrected moment estimates. `beta1` plays the role of
/// momentum; the step counter is shared by all parameters of one store.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: u64,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64) -> Self {
        Adam { lr, beta1, beta2: 0.999, eps: 1e-8, steps: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update and clears the gradients.
    pub fn step<T: Real>(&mut self, store: &mut ParamStore<T>) {
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::c(self.beta1), T::c(self.beta2));
        let (lr, eps) = (T::c(self.lr), T::c(self.eps));
        let (c1, c2) = (T::c(c1), T::c(c2));
        for p in store.iter_mut() {
            let it = p
                .value
                .data_mut()
                .iter_mut()
                .zip(p.velocity.data_mut())
                .zip(p.second_moment.data_mut())
                .zip(p.grad.data_mut());
            for (((w, m), v), g) in it {
                *m = b1 * *m + (T::one() - b1) * *g;
                *v = b2 * *v + (T::one() - b2) * *g * *g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                *g = T::zero();
            }
        }
    }
}
