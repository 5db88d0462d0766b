//! Latent Gaussian field for copula-correlated marks.
//!
//! Random spectral representation: with `t_f ~ Gamma(γ/2, 1)`,
//! `ω_f ~ N(0, 2 t_f I)` and independent standard normal amplitudes,
//!
//! `Z(x) = F^{-1/2} Σ_f (a_f cos ω_f·x + b_f sin ω_f·x)`
//!
//! is, conditionally on the frequencies, a centred Gaussian field with unit
//! variance at every point. Averaged over the frequencies its covariance is
//! `(1 + r²)^{-γ/2}`, which decays like `r^{-γ}`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

pub const DEFAULT_FEATURES: usize = 512;

/// Ensemble covariance of the latent field at distance `r`.
pub fn latent_covariance(r: f64, gamma_decay: f64) -> f64 {
    (1.0 + r * r).powf(-0.5 * gamma_decay)
}

#[derive(Debug, Clone)]
pub struct SpectralField {
    dim: usize,
    freqs: Vec<f64>,
    cos_amp: Vec<f64>,
    sin_amp: Vec<f64>,
}

impl SpectralField {
    pub fn sample<R: Rng>(dim: usize, gamma_decay: f64, features: usize, rng: &mut R) -> Self {
        let mix = Gamma::new(0.5 * gamma_decay, 1.0).expect("positive shape");
        let mut freqs = Vec::with_capacity(features * dim);
        let mut cos_amp = Vec::with_capacity(features);
        let mut sin_amp = Vec::with_capacity(features);
        for _ in 0..features {
            let t: f64 = mix.sample(rng);
            let sd = (2.0 * t).sqrt();
            for _ in 0..dim {
                let g: f64 = rng.sample(StandardNormal);
                freqs.push(sd * g);
            }
            cos_amp.push(rng.sample(StandardNormal));
            sin_amp.push(rng.sample(StandardNormal));
        }
        Self {
            dim,
            freqs,
            cos_amp,
            sin_amp,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let f = self.cos_amp.len();
        let mut acc = 0.0;
        for k in 0..f {
            let w = &self.freqs[k * self.dim..(k + 1) * self.dim];
            let phase: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            let (s, c) = phase.sin_cos();
            acc += self.cos_amp[k] * c + self.sin_amp[k] * s;
        }
        acc / (f as f64).sqrt()
    }
}
