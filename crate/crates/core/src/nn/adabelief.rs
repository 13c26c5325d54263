//! AdaBelief: Adam-style updates whose second moment tracks the squared
//! deviation of the gradient from its running mean instead of the squared
//! gradient itself.

use super::params::{Gradients, Mat, OptimizerSlots, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaBelief {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdaBelief {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Applies one update to every trainable parameter that has a gradient.
    /// Gradients are validated up front, so a non-finite entry leaves the
    /// store untouched.
    pub fn step(&self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        for (id, g) in grads.iter() {
            let p = store.get(id);
            if g.dim() != p.value.dim() {
                return Err(Error::dim(format!(
                    "gradient of `{}` has shape {:?}, parameter {:?}",
                    p.name,
                    g.dim(),
                    p.value.dim()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    param: p.name.clone(),
                    detail: "non-finite gradient".into(),
                });
            }
        }
        for (id, g) in grads.iter() {
            let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
            let p = store.param_mut(id);
            if !p.trainable {
                continue;
            }
            let slots = p.slots.get_or_insert_with(|| OptimizerSlots {
                first_moment: Mat::zeros(g.dim()),
                second_moment: Mat::zeros(g.dim()),
                step: 0,
            });
            slots.step += 1;
            let t = slots.step as i32;
            let bc1 = 1.0 - b1.powi(t);
            let bc2 = 1.0 - b2.powi(t);
            ndarray::Zip::from(&mut p.value)
                .and(&mut slots.first_moment)
                .and(&mut slots.second_moment)
                .and(g)
                .for_each(|w, m, s, &gv| {
                    *m = b1 * *m + (1.0 - b1) * gv;
                    let dev = gv - *m;
                    *s = b2 * *s + (1.0 - b2) * dev * dev + eps;
                    let m_hat = *m / bc1;
                    let s_hat = *s / bc2;
                    *w -= lr * m_hat / (s_hat.sqrt() + eps);
                });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::{Gradients, ParamId};
    use approx::assert_relative_eq;
    use ndarray::array;

    fn grads(entries: Vec<Option<Mat>>) -> Gradients {
        Gradients::from_vec(entries)
    }

    #[test]
    fn zero_gradient_from_fresh_state_is_a_no_op() {
        let mut store = ParamStore::new();
        let id = store.add("w", array![[0.5, -2.0]]).unwrap();
        AdaBelief::new(1e-2)
            .step(&mut store, &grads(vec![Some(Mat::zeros((1, 2)))]))
            .unwrap();
        assert_eq!(store.value(id), &array![[0.5, -2.0]]);
    }

    #[test]
    fn first_step_matches_hand_evaluation() {
        let mut store = ParamStore::new();
        let id = store.add("w", array![[0.0]]).unwrap();
        AdaBelief::new(1e-4)
            .step(&mut store, &grads(vec![Some(array![[1.0]])]))
            .unwrap();
        // m = 0.1, m_hat = 1; s = 0.001 * 0.81 + 1e-8, s_hat = 0.81 + 1e-5
        let s_hat: f64 = (0.001 * 0.81 + 1e-8) / 0.001;
        let expected = -1e-4 / (s_hat.sqrt() + 1e-8);
        assert_relative_eq!(store.value(id)[[0, 0]], expected, max_relative = 1e-12);
        assert_relative_eq!(expected, -1.111104e-4, max_relative = 1e-5);
    }

    #[test]
    fn parameters_update_independently() {
        let mut a = ParamStore::new();
        let a0 = a.add("a", array![[1.0]]).unwrap();
        let a1 = a.add("b", array![[2.0, 3.0]]).unwrap();
        let mut solo = ParamStore::new();
        let s0 = solo.add("a", array![[1.0]]).unwrap();
        let opt = AdaBelief::new(0.1);
        opt.step(&mut a, &grads(vec![Some(array![[0.3]]), Some(array![[-1.0, 4.0]])]))
            .unwrap();
        opt.step(&mut solo, &grads(vec![Some(array![[0.3]])])).unwrap();
        assert_eq!(a.value(a0), solo.value(s0));
        assert_ne!(a.value(a1), &array![[2.0, 3.0]]);
        assert_eq!(a.get(ParamId(1)).slots.as_ref().unwrap().step, 1);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut store = ParamStore::new();
        store.add("ok", array![[1.0]]).unwrap();
        store.add("bad", array![[1.0]]).unwrap();
        let err = AdaBelief::new(0.1)
            .step(&mut store, &grads(vec![Some(array![[1.0]]), Some(array![[f64::NAN]])]))
            .unwrap_err();
        match err {
            Error::Numeric { param, .. } => assert_eq!(param, "bad"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(store.value(ParamId(0)), &array![[1.0]]);
    }
}
