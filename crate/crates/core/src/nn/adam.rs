use ndarray::{ArrayD, ArrayViewMutD, Zip};
use serde::{Deserialize, Serialize};

use super::{Gradients, NnError};

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    #[serde(skip)]
    m: Vec<ArrayD<f64>>,
    #[serde(skip)]
    v: Vec<ArrayD<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn update(&mut self, params: Vec<ArrayViewMutD<'_, f64>>, grads: &Gradients) -> Result<(), NnError> {
        if params.len() != grads.0.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{} gradients for {} parameters",
                grads.0.len(),
                params.len()
            )));
        }
        for (p, g) in params.iter().zip(&grads.0) {
            if p.shape() != g.shape() {
                return Err(NnError::ShapeMismatch(format!("{:?} vs {:?}", p.shape(), g.shape())));
            }
        }
        if self.m.is_empty() {
            self.m = grads.0.iter().map(|g| ArrayD::zeros(g.raw_dim())).collect();
            self.v = self.m.clone();
        } else if self.m.iter().zip(&grads.0).any(|(m, g)| m.shape() != g.shape()) {
            return Err(NnError::ShapeMismatch("moments were built for other parameters".into()));
        }

        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let (lr, eps) = (self.lr, self.eps);
        for (((mut p, g), m), v) in params.into_iter().zip(&grads.0).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(&mut p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, ArrayD};

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = arr1(&[1.0, -2.0]).into_dyn();
        let mut adam = AdamState::new(1e-3);
        let g = Gradients(vec![ArrayD::zeros(p.raw_dim())]);
        adam.update(vec![p.view_mut()], &g).unwrap();
        assert_eq!(p, arr1(&[1.0, -2.0]).into_dyn());
    }

    #[test]
    fn first_step_moves_by_lr_against_the_sign() {
        let mut p = arr1(&[0.0, 0.0, 0.0]).into_dyn();
        let mut adam = AdamState::new(0.1);
        let g = Gradients(vec![arr1(&[3.0, -0.5, 1e-3]).into_dyn()]);
        adam.update(vec![p.view_mut()], &g).unwrap();
        for (x, s) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((x - 0.1 * s).abs() < 1e-4, "{x}");
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut p = arr1(&[0.0, 0.0]).into_dyn();
        let mut adam = AdamState::new(0.1);
        let g = Gradients(vec![arr1(&[1.0]).into_dyn()]);
        assert!(adam.update(vec![p.view_mut()], &g).is_err());
    }
}
