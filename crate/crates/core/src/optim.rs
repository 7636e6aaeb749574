//! RMSProp over named parameter groups, shared by the encoder weight
//! phase and the caption decoder trainer.

use serde::{Deserialize, Serialize};

/// Anything exposing its trainable parameters as named flat slices in a
/// stable order. Gradient containers reuse the same type, so a `ParamSet`
/// is its own gradient shape.
pub trait ParamSet {
    fn fields(&self) -> Vec<(&'static str, &[f64])>;
    fn fields_mut(&mut self) -> Vec<(&'static str, &mut [f64])>;

    fn param_count(&self) -> usize {
        self.fields().iter().map(|(_, v)| v.len()).sum()
    }

    /// Sum of squares over every parameter.
    fn ridge_sq(&self) -> f64 {
        self.fields()
            .iter()
            .map(|(_, v)| v.iter().map(|x| x * x).sum::<f64>())
            .sum()
    }

    /// `self += scale * other`, field by field.
    fn add_scaled(&mut self, other: &Self, scale: f64) {
        for ((_, dst), (_, src)) in self.fields_mut().into_iter().zip(other.fields()) {
            debug_assert_eq!(dst.len(), src.len());
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d += scale * s;
            }
        }
    }

    fn scale(&mut self, factor: f64) {
        for (_, f) in self.fields_mut() {
            for v in f.iter_mut() {
                *v *= factor;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmsPropSettings {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_learning_rate() -> f64 {
    0.045
}

fn default_decay() -> f64 {
    0.9
}

fn default_epsilon() -> f64 {
    1.0
}

impl Default for RmsPropSettings {
    fn default() -> Self {
        RmsPropSettings {
            learning_rate: default_learning_rate(),
            decay: default_decay(),
            epsilon: default_epsilon(),
        }
    }
}

/// RMSProp state: a running mean of squared gradients per parameter.
/// `step` applies `p -= lr * g / (sqrt(v) + epsilon)`.
#[derive(Debug, Clone)]
pub struct RmsProp {
    settings: RmsPropSettings,
    mean_sq: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new<P: ParamSet>(settings: RmsPropSettings, params: &P) -> RmsProp {
        let mean_sq = params
            .fields()
            .iter()
            .map(|(_, v)| vec![0.0; v.len()])
            .collect();
        RmsProp { settings, mean_sq }
    }

    pub fn learning_rate(&self) -> f64 {
        self.settings.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.settings.learning_rate = lr;
    }

    pub fn step<P: ParamSet>(&mut self, params: &mut P, grads: &P) {
        let lr = self.settings.learning_rate;
        let rho = self.settings.decay;
        let eps = self.settings.epsilon;
        for (state, ((_, p), (_, g))) in self
            .mean_sq
            .iter_mut()
            .zip(params.fields_mut().into_iter().zip(grads.fields()))
        {
            debug_assert_eq!(state.len(), p.len());
            for k in 0..p.len() {
                state[k] = rho * state[k] + (1.0 - rho) * g[k] * g[k];
                p[k] -= lr * g[k] / (state[k].sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Flat(Vec<f64>);

    impl ParamSet for Flat {
        fn fields(&self) -> Vec<(&'static str, &[f64])> {
            vec![("flat", &self.0)]
        }
        fn fields_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
            vec![("flat", &mut self.0)]
        }
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let mut p = Flat(vec![1.0, -2.0]);
        let g = Flat(vec![3.0, 4.0]);
        let mut opt = RmsProp::new(
            RmsPropSettings { learning_rate: 0.0, ..Default::default() },
            &p,
        );
        opt.step(&mut p, &g);
        assert_eq!(p.0, vec![1.0, -2.0]);
    }

    #[test]
    fn step_moves_against_gradient() {
        let mut p = Flat(vec![0.0]);
        let g = Flat(vec![2.0]);
        let mut opt = RmsProp::new(RmsPropSettings::default(), &p);
        opt.step(&mut p, &g);
        assert!(p.0[0] < 0.0);
        // v = 0.1 * 4 = 0.4; step = 0.045 * 2 / (sqrt(0.4) + 1)
        let want = -0.045 * 2.0 / (0.4f64.sqrt() + 1.0);
        assert!((p.0[0] - want).abs() < 1e-15);
    }

    #[test]
    fn ridge_and_add_scaled() {
        let mut p = Flat(vec![1.0, 2.0]);
        let q = Flat(vec![10.0, 20.0]);
        assert_eq!(p.ridge_sq(), 5.0);
        p.add_scaled(&q, 0.1);
        assert_eq!(p.0, vec![2.0, 4.0]);
    }
}
