//! Adam written out as a scalar recurrence.

#[derive(Debug, Clone, Copy)]
pub struct AdamScalar {
    pub theta: f64,
    pub m: f64,
    pub v: f64,
    pub t: i32,
}

impl AdamScalar {
    pub fn new(theta: f64) -> Self {
        Self { theta, m: 0.0, v: 0.0, t: 0 }
    }

    pub fn step(&mut self, g: f64, lr: f64, beta1: f64, beta2: f64, eps: f64) {
        self.t += 1;
        self.m = beta1 * self.m + (1.0 - beta1) * g;
        self.v = beta2 * self.v + (1.0 - beta2) * g * g;
        let m_hat = self.m / (1.0 - beta1.powi(self.t));
        let v_hat = self.v / (1.0 - beta2.powi(self.t));
        self.theta -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// First step from θ with gradient g evaluated by hand: m̂ = g, v̂ = g², so
/// θ′ = θ − lr·g/(|g| + ε).
pub fn first_step_closed_form(theta: f64, g: f64, lr: f64, eps: f64) -> f64 {
    theta - lr * g / (g.abs() + eps)
}
