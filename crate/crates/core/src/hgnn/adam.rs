use super::params::HgnnParams;

#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(
        param_count: usize,
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One bias-corrected update. A zero learning rate leaves `params`
    /// bit-for-bit unchanged.
    pub fn step(&mut self, params: &mut HgnnParams, grad: &HgnnParams) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut i = 0;
        for (p, (_, g)) in params.tensors_mut().into_iter().zip(grad.named_tensors()) {
            for (w, &dw) in p.iter_mut().zip(g) {
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * dw;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * dw * dw;
                if self.learning_rate != 0.0 {
                    let mhat = self.m[i] / c1;
                    let vhat = self.v[i] / c2;
                    *w -= self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
                }
                i += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hgnn::config::HgnnConfig;

    #[test]
    fn first_step_moves_by_the_learning_rate() {
        let cfg = HgnnConfig {
            fusion_dim: 4,
            ..Default::default()
        };
        let mut p = HgnnParams::zeros(&cfg).unwrap();
        let mut g = p.zeros_like();
        g.head.bias = vec![2.0, -0.5, 0.0, 1e-3, 7.0];
        let mut opt = Adam::new(p.param_count(), 0.01, 0.9, 0.999, 1e-8);
        opt.step(&mut p, &g);
        // bias-corrected first step is lr * sign(g) up to epsilon
        for (w, dw) in p.head.bias.iter().zip(&g.head.bias) {
            if *dw == 0.0 {
                assert_eq!(*w, 0.0);
            } else {
                assert!((w + 0.01 * dw.signum()).abs() < 1e-6);
            }
        }
        assert_eq!(opt.steps(), 1);
    }
}
