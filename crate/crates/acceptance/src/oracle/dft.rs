//! The discrete Fourier transform straight from its definition.

use std::f64::consts::PI;

use num_complex::Complex64;

/// `X[k] = Σ_n x[n]·e^{−2πi·kn/N}`. The product `k·n` is reduced modulo `N`
/// before forming the angle so the twiddles stay accurate for every `k`.
pub fn direct_dft(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(i, &v)| {
                    let angle = -2.0 * PI * ((k * i) % n) as f64 / n as f64;
                    Complex64::from_polar(v, angle)
                })
                .sum()
        })
        .collect()
}

/// `max_k |a_k − b_k| / max_k |b_k|`.
pub fn relative_error(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
