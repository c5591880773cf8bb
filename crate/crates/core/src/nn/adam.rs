use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Move parameters along the gradient (maximize).
    Ascend,
    /// Move parameters against the gradient (minimize).
    Descend,
}

/// Adaptive-moment optimizer state with bias-corrected first and second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(param_count: usize, lr: T) -> Self {
        Self {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            step: 0,
            m: vec![T::zero(); param_count],
            v: vec![T::zero(); param_count],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[T], &[T]) {
        (&self.m, &self.v)
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T], direction: Direction) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed under the optimizer");
        assert_eq!(grads.len(), self.m.len(), "gradient length does not match parameters");
        self.step += 1;
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let one = T::one();
        let c1 = one - self.beta1.powi(t);
        let c2 = one - self.beta2.powi(t);
        let sign = match direction {
            Direction::Ascend => one,
            Direction::Descend => -one,
        };
        for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (one - self.beta1) * g;
            *v = self.beta2 * *v + (one - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p += sign * self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
