use crate::params::ParameterStore;
use crate::real::Real;

/// Adam with bias correction. Moments are allocated lazily to match the store.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update from the gradients currently accumulated in `store`.
    pub fn step(&mut self, store: &mut ParameterStore<T>) {
        if self.m.len() != store.len() {
            self.m = store.ids().map(|id| vec![T::zero(); store.value(id).len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::cast(self.beta1), T::cast(self.beta2));
        let bc1 = T::cast(1.0 - self.beta1.powi(t));
        let bc2 = T::cast(1.0 - self.beta2.powi(t));
        let (lr, eps) = (T::cast(self.lr), T::cast(self.eps));
        let one = T::one();
        for id in store.ids() {
            let (value, grad) = store.value_and_grad_mut(id);
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            for (((p, &g), mi), vi) in value.data_mut().iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (one - b1) * g;
                *vi = b2 * *vi + (one - b2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
