//! Error metrics, noise injection, and synthetic ground truth.

pub mod metrics;
pub mod noise;
pub mod synth;

pub use metrics::{angular_error, compute_snr, nsre, ErrorSummary};
pub use noise::{add_poisson_noise, add_salt_pepper, NoiseKind, NoiseSpec};
pub use synth::{disk_coords, random_lights, render_sphere, SyntheticScene};
