//! Central finite differences against analytic gradients.

use ndarray::{ArrayD, ArrayViewMutD};

/// Denominator floor for the relative error, so that gradients which are
/// zero by construction (for example a conv bias followed by batchnorm) are
/// judged by their absolute size instead of by ratios of rounding noise.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone)]
pub struct GradReport {
    pub checked: usize,
    pub max_rel: f64,
    pub worst: String,
}

impl GradReport {
    pub fn empty() -> Self {
        Self { checked: 0, max_rel: 0.0, worst: String::new() }
    }

    pub fn merge(&mut self, other: GradReport) {
        self.checked += other.checked;
        if other.max_rel >= self.max_rel {
            self.max_rel = other.max_rel;
            self.worst = other.worst;
        }
    }
}

/// Perturb every element of every tensor exposed by `tensors`, evaluate
/// `loss` at ±h, and compare the central difference with `analytic`
/// (same order and shapes as `tensors`).
pub fn check<S: Clone>(
    state: &S,
    tensors: fn(&mut S) -> Vec<(String, ArrayViewMutD<'_, f64>)>,
    loss: impl Fn(&S) -> f64,
    analytic: &[ArrayD<f64>],
    h: f64,
) -> GradReport {
    let mut probe = state.clone();
    let shapes: Vec<(String, usize)> = tensors(&mut probe).into_iter().map(|(n, v)| (n, v.len())).collect();
    assert_eq!(shapes.len(), analytic.len(), "one analytic gradient per tensor");
    let mut report = GradReport::empty();
    for (ti, (name, len)) in shapes.iter().enumerate() {
        assert_eq!(analytic[ti].len(), *len, "gradient shape for {name}");
        let flat_analytic: Vec<f64> = analytic[ti].iter().copied().collect();
        for j in 0..*len {
            let eval = |delta: f64| {
                let mut s = state.clone();
                {
                    let mut views = tensors(&mut s);
                    let v = views[ti].1.iter_mut().nth(j).expect("in range");
                    *v += delta;
                }
                loss(&s)
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let a = flat_analytic[j];
            let rel = relative_error(a, numeric);
            report.checked += 1;
            if rel >= report.max_rel {
                report.max_rel = rel;
                report.worst = format!("{name}[{j}]: analytic {a:.6e}, numeric {numeric:.6e}");
            }
        }
    }
    report
}
