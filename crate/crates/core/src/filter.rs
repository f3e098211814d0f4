//! Digital Butterworth lowpass via bilinear transform with frequency
//! prewarping, realized as a cascade of second-order sections (plus one
//! first-order section when the order is odd). Filtering is causal with zero
//! initial conditions.

use crate::error::{Error, Result};

/// One cascade section: b0 + b1 z^-1 + b2 z^-2 over 1 + a1 z^-1 + a2 z^-2.
/// First-order sections leave b2 = a2 = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Section {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

/// Analog prototype poles on the unit circle, left half plane.
fn prototype_poles(order: usize) -> Vec<(f64, f64)> {
    (0..order)
        .map(|k| {
            let theta =
                std::f64::consts::PI * (2.0 * k as f64 + order as f64 + 1.0) / (2.0 * order as f64);
            (theta.cos(), theta.sin())
        })
        .collect()
}

/// Designs the section cascade for a lowpass at `cutoff` Hz sampled at
/// `rate` Hz.
pub fn design_lowpass(rate: f64, cutoff: f64, order: usize) -> Result<Vec<Section>> {
    if order < 1 {
        return Err(Error::Config(format!(
            "filter order must be >= 1, got {order}"
        )));
    }
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::Config(format!(
            "sample rate must be positive, got {rate}"
        )));
    }
    if !(cutoff > 0.0 && cutoff < rate / 2.0) {
        return Err(Error::Config(format!(
            "cutoff must satisfy 0 < cutoff < rate/2, got {cutoff} at rate {rate}"
        )));
    }
    // Prewarped analog cutoff for the bilinear transform s = (z-1)/(z+1).
    let wc = (std::f64::consts::PI * cutoff / rate).tan();
    let poles = prototype_poles(order);

    let mut sections = Vec::new();
    let mut used = vec![false; order];
    for i in 0..order {
        if used[i] {
            continue;
        }
        let (re, im) = poles[i];
        if im.abs() < 1e-12 {
            // Real pole at -wc: first-order section.
            used[i] = true;
            let a0 = 1.0 + wc;
            sections.push(Section {
                b: [wc / a0, wc / a0, 0.0],
                a: [(wc - 1.0) / a0, 0.0],
            });
        } else {
            // Conjugate pair: analog denominator s^2 - 2 re(sigma) s + |sigma|^2
            // with sigma = wc * pole; numerator |sigma|^2 keeps DC gain 1.
            let j = (i + 1..order)
                .find(|&j| {
                    !used[j] && (poles[j].0 - re).abs() < 1e-9 && (poles[j].1 + im).abs() < 1e-9
                })
                .ok_or_else(|| Error::Internal("unpaired complex pole".into()))?;
            used[i] = true;
            used[j] = true;
            let sig_re = wc * re;
            let mag_sq = wc * wc * (re * re + im * im);
            let a0 = 1.0 - 2.0 * sig_re + mag_sq;
            sections.push(Section {
                b: [mag_sq / a0, 2.0 * mag_sq / a0, mag_sq / a0],
                a: [
                    (-2.0 + 2.0 * mag_sq) / a0,
                    (1.0 + 2.0 * sig_re + mag_sq) / a0,
                ],
            });
        }
    }
    Ok(sections)
}

/// Causal forward pass through the cascade, Direct Form II transposed,
/// zero initial state.
pub fn filter_forward(sections: &[Section], input: &[f64]) -> Vec<f64> {
    let mut out = input.to_vec();
    for s in sections {
        let mut z1 = 0.0;
        let mut z2 = 0.0;
        for v in out.iter_mut() {
            let x = *v;
            let y = s.b[0] * x + z1;
            z1 = s.b[1] * x - s.a[0] * y + z2;
            z2 = s.b[2] * x - s.a[1] * y;
            *v = y;
        }
    }
    out
}

/// Spec'd lowpass operation: design for (rate, cutoff, order) and run the
/// causal pass.
pub fn butterworth_lowpass(
    input: &[f64],
    rate: f64,
    cutoff: f64,
    order: usize,
) -> Result<Vec<f64>> {
    Ok(filter_forward(&design_lowpass(rate, cutoff, order)?, input))
}

/// |H(e^{j 2 pi f / rate})| of the cascade.
pub fn magnitude_at(sections: &[Section], rate: f64, freq: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * freq / rate;
    let (cos1, sin1) = (w.cos(), -w.sin());
    let (cos2, sin2) = ((2.0 * w).cos(), -(2.0 * w).sin());
    let mut mag = 1.0;
    for s in sections {
        let num_re = s.b[0] + s.b[1] * cos1 + s.b[2] * cos2;
        let num_im = s.b[1] * sin1 + s.b[2] * sin2;
        let den_re = 1.0 + s.a[0] * cos1 + s.a[1] * cos2;
        let den_im = s.a[0] * sin1 + s.a[1] * sin2;
        mag *=
            (num_re * num_re + num_im * num_im).sqrt() / (den_re * den_re + den_im * den_im).sqrt();
    }
    mag
}

/// Magnitudes of every pole of the cascade; all must be < 1 for stability.
pub fn pole_magnitudes(sections: &[Section]) -> Vec<f64> {
    let mut out = Vec::new();
    for s in sections {
        let (a1, a2) = (s.a[0], s.a[1]);
        if a2 == 0.0 {
            out.push(a1.abs());
            continue;
        }
        let disc = a1 * a1 - 4.0 * a2;
        if disc >= 0.0 {
            let root = disc.sqrt();
            out.push(((-a1 + root) / 2.0).abs());
            out.push(((-a1 - root) / 2.0).abs());
        } else {
            // Conjugate pair: |p|^2 = a2.
            out.push(a2.sqrt());
            out.push(a2.sqrt());
        }
    }
    out
}

/// Exact magnitude of the prewarped digital Butterworth: the bilinear
/// transform maps the analog response onto r = tan(pi f / rate) / tan(pi fc /
/// rate), giving |H| = 1 / sqrt(1 + r^(2 order)).
pub fn analytic_magnitude(rate: f64, cutoff: f64, order: usize, freq: f64) -> f64 {
    let r =
        (std::f64::consts::PI * freq / rate).tan() / (std::f64::consts::PI * cutoff / rate).tan();
    1.0 / (1.0 + r.powi(2 * order as i32)).sqrt()
}
