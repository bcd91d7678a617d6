//! Closed-form magnitude of the bilinear Butterworth band-pass.
//!
//! A second-order Butterworth low-pass prototype has `|H(jx)|² = 1/(1 + x⁴)`.
//! The low-pass → band-pass substitution maps analog frequency `Ω` to
//! `x = (Ω² − Ω_l·Ω_h) / (Ω·(Ω_h − Ω_l))`, and the bilinear transform maps a
//! digital frequency `f` to `Ω = 2·fs·tan(π·f/fs)`. With both corners
//! prewarped the digital response is exactly the analog one at the warped
//! frequency, so no filter coefficients are involved here.

use std::f64::consts::PI;

use num_complex::Complex64;

fn warp(f: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * f / fs).tan()
}

/// `|H(e^{j2πf/fs})|` of the designed filter, from first principles.
pub fn bandpass_magnitude(f: f64, low: f64, high: f64, fs: f64) -> f64 {
    let (wl, wh, w) = (warp(low, fs), warp(high, fs), warp(f, fs));
    let x = (w * w - wl * wh) / (w * (wh - wl));
    1.0 / (1.0 + x.powi(4)).sqrt()
}

/// Evaluate a cascade of `(b0, b1, b2, a1, a2)` sections on the unit circle
/// by direct polynomial evaluation.
pub fn cascade_magnitude(sections: &[[f64; 5]], f: f64, fs: f64) -> f64 {
    let z = Complex64::from_polar(1.0, 2.0 * PI * f / fs);
    let zi = z.inv();
    sections
        .iter()
        .map(|&[b0, b1, b2, a1, a2]| {
            let num = b0 + b1 * zi + b2 * zi * zi;
            let den = 1.0 + a1 * zi + a2 * zi * zi;
            (num / den).norm()
        })
        .product()
}

/// Steady-state amplitude ratio measured by pushing a long sine through a
/// time-domain filter and fitting the tail by least squares.
pub fn probe_gain(filter: impl Fn(&[f64]) -> Vec<f64>, f: f64, fs: f64, settle: usize, measure: usize) -> f64 {
    let n = settle + measure;
    let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect();
    let y = filter(&x);
    // Fit y ≈ a·sin + b·cos over the tail.
    let (mut ss, mut cc, mut sc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &yi) in y.iter().enumerate().skip(settle) {
        let (s, c) = (2.0 * PI * f * i as f64 / fs).sin_cos();
        ss += s * s;
        cc += c * c;
        sc += s * c;
        ys += yi * s;
        yc += yi * c;
    }
    let det = ss * cc - sc * sc;
    let a = (ys * cc - yc * sc) / det;
    let b = (yc * ss - ys * sc) / det;
    a.hypot(b)
}
