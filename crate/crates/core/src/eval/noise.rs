//! Noise injection with reproducible, platform-independent streams.
//!
//! Every image `k` draws from its own ChaCha8 stream (`seed`, stream `k`),
//! so results do not depend on evaluation order. Poisson variates use
//! sequential-search inversion for means below 10 and Hormann's PTRS
//! transformed rejection above.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::eval::metrics::compute_snr;
use crate::field::ImageStack;

pub const SCALE_RANGE: (f64, f64) = (1e-4, 1e8);
/// Bisection stops once the pilot realization is this close to the target.
pub const SNR_TOLERANCE_DB: f64 = 0.25;

const PILOT_STREAM_OFFSET: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    Poisson { target_snr_db: f64 },
    SaltPepper { fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn apply(&self, stack: &ImageStack) -> Result<ImageStack> {
        match self.kind {
            NoiseKind::Poisson { target_snr_db } => add_poisson_noise(stack, target_snr_db, self.seed),
            NoiseKind::SaltPepper { fraction } => add_salt_pepper(stack, fraction, self.seed),
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean < 10.0 {
        let mut p = (-mean).exp();
        let mut cdf = p;
        let u: f64 = rng.random();
        let mut k = 0u64;
        while u > cdf && p > 0.0 {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
        }
        return k;
    }
    // PTRS, Hormann (1993).
    let smu = mean.sqrt();
    let b = 0.931 + 2.53 * smu;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    let log_mean = mean.ln();
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * log_mean - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// `Poisson(scale * I) / scale`, one stream per image.
fn poisson_realization(stack: &ImageStack, scale: f64, seed: u64, stream_offset: u64) -> ImageStack {
    let mut out = stack.clone();
    let d = stack.image_count();
    for k in 0..d {
        let mut rng = stream_rng(seed, stream_offset + k as u64);
        for p in 0..stack.pixel_count() {
            let v = stack.get(p, k);
            out.set(p, k, sample_poisson(&mut rng, scale * v) as f64 / scale);
        }
    }
    out
}

/// Poisson noise whose photon scale is found by bisection (in log scale) on
/// a fixed pilot realization so that the SNR lands within
/// [`SNR_TOLERANCE_DB`] of the target; a fresh realization at that scale is
/// returned.
pub fn add_poisson_noise(stack: &ImageStack, target_snr_db: f64, seed: u64) -> Result<ImageStack> {
    if !target_snr_db.is_finite() {
        return Err(Error::InvalidArgument("target SNR must be finite".into()));
    }
    if stack.as_slice().iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument("Poisson noise needs finite, nonnegative intensities".into()));
    }
    if stack.as_slice().iter().all(|&v| v == 0.0) {
        return Ok(stack.clone());
    }
    let scale = calibrate_scale(stack, target_snr_db, seed)?;
    Ok(poisson_realization(stack, scale, seed, 0))
}

/// The photon scale the Poisson injector would use for this target.
pub fn calibrate_scale(stack: &ImageStack, target_snr_db: f64, seed: u64) -> Result<f64> {
    let pilot = |s: f64| -> Result<f64> {
        compute_snr(stack, &poisson_realization(stack, s, seed, PILOT_STREAM_OFFSET))
    };
    let (lo_s, hi_s) = SCALE_RANGE;
    let unreachable = || Error::SnrUnreachable {
        target_db: target_snr_db,
        lo: lo_s,
        hi: hi_s,
    };
    let (mut lo, mut hi) = (lo_s.ln(), hi_s.ln());
    let snr_lo = pilot(lo_s)?;
    let snr_hi = pilot(hi_s)?;
    if target_snr_db < snr_lo - SNR_TOLERANCE_DB || target_snr_db > snr_hi + SNR_TOLERANCE_DB {
        return Err(unreachable());
    }
    // Keep bisecting well inside the tolerance so the fresh realization
    // lands close to the target too.
    let mut best: Option<(f64, f64)> = None;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let snr = pilot(mid.exp())?;
        let miss = (snr - target_snr_db).abs();
        if best.is_none_or(|(_, m)| miss < m) {
            best = Some((mid.exp(), miss));
        }
        if miss <= 0.1 * SNR_TOLERANCE_DB {
            break;
        }
        if snr < target_snr_db {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    if let Some((s, miss)) = best {
        if miss <= SNR_TOLERANCE_DB {
            return Ok(s);
        }
    }
    Err(unreachable())
}

/// Set exactly `floor(fraction * count)` distinct entries to 0 or 1 with
/// equal probability.
pub fn add_salt_pepper(stack: &ImageStack, fraction: f64, seed: u64) -> Result<ImageStack> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("corruption fraction {fraction} outside [0, 1]")));
    }
    let total = stack.as_slice().len();
    let count = (fraction * total as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = stack.clone();
    let data = out.as_mut_slice();
    for i in index::sample(&mut rng, total, count) {
        data[i] = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_stack() -> ImageStack {
        let imgs: Vec<Vec<f64>> = (0..4)
            .map(|k| (0..400).map(|p| ((p * 7 + k * 13) % 97) as f64 / 97.0).collect())
            .collect();
        ImageStack::from_images(20, 20, &imgs).unwrap()
    }

    #[test]
    fn poisson_sampler_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &mean in &[0.3, 4.0, 9.9, 10.0, 37.5, 1e4] {
            let n = 40_000;
            let xs: Vec<f64> = (0..n).map(|_| sample_poisson(&mut rng, mean) as f64).collect();
            let m = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (mean / n as f64).sqrt();
            assert!((m - mean).abs() < 5.0 * se, "mean {mean}: got {m}");
            assert!((var / mean - 1.0).abs() < 0.05, "mean {mean}: var {var}");
        }
    }

    #[test]
    fn poisson_is_reproducible() {
        let s = ramp_stack();
        let a = add_poisson_noise(&s, 15.0, 42).unwrap();
        let b = add_poisson_noise(&s, 15.0, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, add_poisson_noise(&s, 15.0, 43).unwrap());
    }

    #[test]
    fn poisson_hits_target() {
        let lights = crate::eval::random_lights(20, 45.0, 3);
        let scene = crate::eval::render_sphere(64, &lights, None).unwrap();
        for target in [5.0, 10.0, 20.0] {
            let noisy = add_poisson_noise(&scene.images, target, 7).unwrap();
            let got = compute_snr(&scene.images, &noisy).unwrap();
            assert!((got - target).abs() <= 0.5, "target {target}, got {got}");
        }
    }

    #[test]
    fn pilot_within_tolerance() {
        let s = ramp_stack();
        for target in [5.0, 12.0] {
            let scale = calibrate_scale(&s, target, 9).unwrap();
            let pilot = poisson_realization(&s, scale, 9, PILOT_STREAM_OFFSET);
            assert!((compute_snr(&s, &pilot).unwrap() - target).abs() <= SNR_TOLERANCE_DB);
        }
    }

    #[test]
    fn snr_grows_with_scale() {
        let s = ramp_stack();
        let snrs: Vec<f64> = [1.0, 10.0, 100.0, 1e3, 1e4]
            .iter()
            .map(|&sc| compute_snr(&s, &poisson_realization(&s, sc, 3, 0)).unwrap())
            .collect();
        assert!(snrs.windows(2).all(|w| w[1] > w[0]), "{snrs:?}");
    }

    #[test]
    fn zero_image_stays_zero() {
        let s = ImageStack::zeros(4, 4, 3);
        assert_eq!(add_poisson_noise(&s, 10.0, 1).unwrap(), s);
    }

    #[test]
    fn unreachable_target_is_an_error() {
        let s = ramp_stack();
        assert!(matches!(add_poisson_noise(&s, 300.0, 1), Err(Error::SnrUnreachable { .. })));
    }

    #[test]
    fn salt_pepper_counts() {
        let s = ramp_stack();
        assert_eq!(add_salt_pepper(&s, 0.0, 1).unwrap(), s);
        let all = add_salt_pepper(&s, 1.0, 1).unwrap();
        assert!(all.as_slice().iter().all(|&v| v == 0.0 || v == 1.0));

        // Shift the stack away from {0, 1} so every corrupted entry is visible.
        let mut shifted = s.clone();
        shifted.as_mut_slice().iter_mut().for_each(|v| *v = 0.25 + 0.5 * *v);
        let noisy = add_salt_pepper(&shifted, 0.3, 9).unwrap();
        let changed = shifted
            .as_slice()
            .iter()
            .zip(noisy.as_slice())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, (0.3 * 1600.0f64).floor() as usize);
        assert_eq!(noisy, add_salt_pepper(&shifted, 0.3, 9).unwrap());
        assert!(add_salt_pepper(&s, 1.5, 1).is_err());
    }
}
