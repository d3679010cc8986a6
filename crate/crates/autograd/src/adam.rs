use crate::element::Element;
use crate::error::{AutogradError, Result};
use crate::params::ParamSet;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Element> {
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
    pub step_count: u64,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    pub learning_rate: T,
}

impl<T: Element> AdamState<T> {
    pub fn new(learning_rate: T) -> Self {
        Self {
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step_count: 0,
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.999),
            epsilon: T::from_f64(1e-8),
            learning_rate,
        }
    }

    /// One update from the `grad` buffers of `params`; missing gradients count
    /// as zero. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamSet<T>) -> Result<()> {
        for (name, t) in params.iter() {
            if let Some(g) = &t.grad {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(AutogradError::NonFiniteGradient(name.to_string()));
                }
            }
        }
        if self.first_moment.is_empty() {
            for (_, t) in params.iter() {
                self.first_moment.push(vec![T::zero(); t.len()]);
                self.second_moment.push(vec![T::zero(); t.len()]);
            }
        }
        if self.first_moment.len() != params.len()
            || params
                .iter()
                .zip(&self.first_moment)
                .any(|((_, t), m)| t.len() != m.len())
        {
            return Err(AutogradError::InvalidArgument {
                op: "adam_step",
                msg: "moment buffers do not match parameters".into(),
            });
        }

        self.step_count += 1;
        let one = T::one();
        let t = self.step_count as i32;
        let bc1 = one - self.beta1.powi(t);
        let bc2 = one - self.beta2.powi(t);
        for i in 0..params.len() {
            let p = params.get_mut(i);
            let Some(grad) = p.grad.take() else { continue };
            let (m, v) = (&mut self.first_moment[i], &mut self.second_moment[i]);
            for (j, value) in p.data_mut().iter_mut().enumerate() {
                let g = grad[j];
                m[j] = self.beta1 * m[j] + (one - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (one - self.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *value = *value - self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            p.grad = Some(grad);
        }
        Ok(())
    }
}
