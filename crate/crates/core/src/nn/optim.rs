//! SGD with heavy-ball momentum and folded weight decay.

use super::params::ParamVector;
use crate::{Error, Result};

/// Optimizer hyperparameters.
///
/// `lr == 0` is accepted (it makes a training call a bitwise no-op on the
/// weights, which callers use as a degenerate baseline); `lr` must otherwise
/// be positive and finite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::invalid("sgd lr", "must be finite and >= 0"));
        }
        if !self.momentum.is_finite() || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("sgd momentum", "must lie in [0, 1)"));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::invalid("sgd weight_decay", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Mutable optimizer state: the velocity buffer, shaped like the model.
#[derive(Clone, Debug)]
pub struct OptimState {
    cfg: SgdConfig,
    velocity: Vec<f64>,
}

impl OptimState {
    pub fn new(cfg: SgdConfig, num_params: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(OptimState {
            cfg,
            velocity: vec![0.0; num_params],
        })
    }

    pub fn config(&self) -> &SgdConfig {
        &self.cfg
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    /// One update: `v <- momentum*v + (g + weight_decay*w)`, then
    /// `w <- w - lr*v`. With `lr == 0` the weights are left untouched
    /// bit-for-bit (the velocity still advances).
    pub fn step(&mut self, model: &mut ParamVector, grad: &ParamVector) -> Result<()> {
        model.check_same_shape(grad, "sgd step")?;
        if self.velocity.len() != model.len() {
            return Err(Error::shape(
                "sgd velocity",
                model.len().to_string(),
                self.velocity.len().to_string(),
            ));
        }
        let SgdConfig {
            lr,
            momentum,
            weight_decay,
        } = self.cfg;
        let w = model.values_mut();
        let g = grad.values();
        for j in 0..w.len() {
            let mut v = g[j];
            if weight_decay != 0.0 {
                v += weight_decay * w[j];
            }
            if momentum != 0.0 {
                v += momentum * self.velocity[j];
            }
            self.velocity[j] = v;
            if lr != 0.0 {
                w[j] -= lr * v;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layout::{Activation, LayerLayout, LayerSpec};
    use std::sync::Arc;

    fn scalar_layout() -> Arc<LayerLayout> {
        Arc::new(
            LayerLayout::new(vec![LayerSpec {
                input_dim: 1,
                output_dim: 1,
                has_bias: false,
                activation: Activation::Identity,
            }])
            .unwrap(),
        )
    }

    fn scalar(v: f64) -> ParamVector {
        ParamVector::from_values(scalar_layout(), vec![v]).unwrap()
    }

    #[test]
    fn plain_step_arithmetic() {
        let mut w = scalar(1.0);
        let g = scalar(0.5);
        let mut opt = OptimState::new(
            SgdConfig {
                lr: 0.1,
                momentum: 0.0,
                weight_decay: 0.0,
            },
            1,
        )
        .unwrap();
        opt.step(&mut w, &g).unwrap();
        assert!((w.values()[0] - 0.95).abs() <= 1e-12);
    }

    #[test]
    fn zero_gradient_zero_velocity_is_fixed_point() {
        let mut w = scalar(1.0);
        let g = scalar(0.0);
        let mut opt = OptimState::new(
            SgdConfig {
                lr: 0.1,
                momentum: 0.9,
                weight_decay: 0.0,
            },
            1,
        )
        .unwrap();
        opt.step(&mut w, &g).unwrap();
        assert_eq!(w.values()[0], 1.0);
    }

    #[test]
    fn two_momentum_steps_hand_unrolled() {
        // v1 = 1, w1 = -0.1; v2 = 0.9*1 + 1 = 1.9, w2 = -0.1 - 0.19 = -0.29.
        let mut w = scalar(0.0);
        let g = scalar(1.0);
        let mut opt = OptimState::new(
            SgdConfig {
                lr: 0.1,
                momentum: 0.9,
                weight_decay: 0.0,
            },
            1,
        )
        .unwrap();
        opt.step(&mut w, &g).unwrap();
        opt.step(&mut w, &g).unwrap();
        assert!((w.values()[0] - (-0.29)).abs() <= 1e-12);

        // Scalar oracle: replay the recurrence independently.
        let (mut ow, mut ov) = (0.0f64, 0.0f64);
        for _ in 0..2 {
            ov = 0.9 * ov + 1.0;
            ow -= 0.1 * ov;
        }
        assert_eq!(w.values()[0].to_bits(), ow.to_bits());
    }

    #[test]
    fn weight_decay_folds_into_gradient() {
        let mut w = scalar(2.0);
        let g = scalar(0.0);
        let mut opt = OptimState::new(
            SgdConfig {
                lr: 0.5,
                momentum: 0.0,
                weight_decay: 0.1,
            },
            1,
        )
        .unwrap();
        opt.step(&mut w, &g).unwrap();
        // v = 0 + 0.1*2 = 0.2; w = 2 - 0.5*0.2 = 1.9.
        assert!((w.values()[0] - 1.9).abs() <= 1e-12);
        assert!((opt.velocity()[0] - 0.2).abs() <= 1e-12);
    }

    #[test]
    fn zero_lr_leaves_weights_bitwise_unchanged() {
        let mut w = scalar(-0.0);
        let g = scalar(3.0);
        let mut opt = OptimState::new(
            SgdConfig {
                lr: 0.0,
                momentum: 0.5,
                weight_decay: 0.1,
            },
            1,
        )
        .unwrap();
        let before = w.values()[0].to_bits();
        opt.step(&mut w, &g).unwrap();
        assert_eq!(w.values()[0].to_bits(), before);
        assert!(opt.velocity()[0] != 0.0);
    }

    #[test]
    fn bad_hyperparameters_are_rejected() {
        let bad = [
            SgdConfig {
                lr: -0.1,
                momentum: 0.0,
                weight_decay: 0.0,
            },
            SgdConfig {
                lr: 0.1,
                momentum: 1.0,
                weight_decay: 0.0,
            },
            SgdConfig {
                lr: 0.1,
                momentum: -0.2,
                weight_decay: 0.0,
            },
            SgdConfig {
                lr: 0.1,
                momentum: 0.0,
                weight_decay: -1.0,
            },
            SgdConfig {
                lr: f64::NAN,
                momentum: 0.0,
                weight_decay: 0.0,
            },
        ];
        for cfg in bad {
            assert!(OptimState::new(cfg, 1).is_err());
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut w = scalar(1.0);
        let layout2 = Arc::new(LayerLayout::mlp(2, 2, 2).unwrap());
        let g = ParamVector::zeros(layout2);
        let mut opt = OptimState::new(
            SgdConfig {
                lr: 0.1,
                momentum: 0.0,
                weight_decay: 0.0,
            },
            1,
        )
        .unwrap();
        assert!(opt.step(&mut w, &g).is_err());
    }
}
