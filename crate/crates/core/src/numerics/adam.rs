use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const DEFAULT_LR: f64 = 1e-3;

/// Adam optimizer state with bias-corrected moments.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step_count: u64,
    first_moment: Vec<Matrix>,
    second_moment: Vec<Matrix>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update. Moments are allocated lazily on the first call.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(
                "adam_step",
                format!("{} parameters, {} gradients", params.len(), grads.len()),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!("parameter {i}: {:?} vs gradient {:?}", p.shape(), g.shape()),
                ));
            }
        }
        if self.first_moment.is_empty() {
            self.first_moment = grads.iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect();
            self.second_moment = self.first_moment.clone();
        } else if self.first_moment.len() != grads.len() {
            return Err(Error::shape("adam_step", "parameter set changed between steps"));
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            for (((w, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = b1 * *mv + (1.0 - b1) * gv;
                *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Matrix::from_rows(&[vec![1.0, -2.0]]).unwrap();
        let before = p.clone();
        let mut adam = Adam::new(0.1);
        for _ in 0..3 {
            adam.step(&mut [&mut p], &[Matrix::zeros(1, 2)]).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(adam.step_count(), 3);
    }

    #[test]
    fn first_step_matches_hand_recurrence() {
        // m1 = 0.1, v1 = 0.001, m_hat = 1, v_hat = 1
        let lr = 0.01;
        let mut p = Matrix::scalar(0.5);
        let mut adam = Adam::new(lr);
        adam.step(&mut [&mut p], &[Matrix::scalar(1.0)]).unwrap();
        let expected = 0.5 - lr * 1.0 / (1.0 + 1e-8);
        assert!((p.as_scalar() - expected).abs() < 1e-15);

        // second step, g = 1 again: m2 = 0.19, v2 = 0.001999
        adam.step(&mut [&mut p], &[Matrix::scalar(1.0)]).unwrap();
        let m_hat = 0.19 / (1.0 - 0.81);
        let v_hat = 0.001999 / (1.0 - 0.999f64.powi(2));
        let expected2 = expected - lr * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p.as_scalar() - expected2).abs() < 1e-12);
    }

    #[test]
    fn identical_parameters_move_identically() {
        let mut a = Matrix::scalar(0.3);
        let mut b = Matrix::scalar(0.3);
        let mut adam = Adam::new(1e-3);
        adam.step(&mut [&mut a, &mut b], &[Matrix::scalar(0.7), Matrix::scalar(0.7)])
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut a = Matrix::zeros(2, 2);
        let mut adam = Adam::new(1e-3);
        assert!(adam.step(&mut [&mut a], &[Matrix::zeros(1, 2)]).is_err());
    }
}
