//! F1-style episode reward combining accuracy, on-device sparsity and
//! feature compression.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("{name} = {value} must be positive")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} = {value} outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
}

/// Every quantity entering one episode reward.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTerms {
    pub kappa: f64,
    pub lambda: f64,
    pub lambda_orig: f64,
    pub omega: f64,
    pub omega_orig: f64,
    pub nu: f64,
    pub rho: f64,
    pub beta: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub reward: f64,
    /// ν was clamped (encoder overhead exceeded the pruning savings).
    pub nu_clamped: bool,
    pub rho_clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionMetrics {
    pub nu: f64,
    pub rho: f64,
    pub nu_clamped: bool,
    pub rho_clamped: bool,
}

fn clamp_flag(x: f64) -> (f64, bool) {
    let c = x.clamp(0.0, 1.0);
    (c, c != x)
}

/// ν = 1 − λ/Λ and ρ = 1 − ω/Ω, clamped to [0, 1].
pub fn compression_metrics(
    lambda: f64,
    lambda_orig: f64,
    omega: f64,
    omega_orig: f64,
) -> Result<CompressionMetrics, RewardError> {
    if !(lambda_orig > 0.0) {
        return Err(RewardError::NonPositive {
            name: "Λ",
            value: lambda_orig,
        });
    }
    if !(omega_orig > 0.0) {
        return Err(RewardError::NonPositive {
            name: "Ω",
            value: omega_orig,
        });
    }
    let (nu, nu_clamped) = clamp_flag(1.0 - lambda / lambda_orig);
    let (rho, rho_clamped) = clamp_flag(1.0 - omega / omega_orig);
    if nu_clamped {
        log::debug!("encoder overhead exceeds pruning savings (λ = {lambda}, Λ = {lambda_orig}); ν clamped to {nu}");
    }
    Ok(CompressionMetrics {
        nu,
        rho,
        nu_clamped,
        rho_clamped,
    })
}

/// 2xy / (x + y), defined as 0 when x + y = 0.
pub fn harmonic(x: f64, y: f64) -> f64 {
    let s = x + y;
    if s == 0.0 {
        0.0
    } else {
        2.0 * x * y / s
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<(), RewardError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(RewardError::OutOfRange { name, value })
    }
}

/// R = (R1 + R2 + β·R3) / 3.
pub fn episode_reward(kappa: f64, nu: f64, rho: f64, beta: f64) -> Result<RewardTerms, RewardError> {
    check_unit("κ", kappa)?;
    check_unit("ν", nu)?;
    check_unit("ρ", rho)?;
    check_unit("β", beta)?;
    let r1 = harmonic(kappa, nu);
    let r2 = harmonic(kappa, rho);
    let r3 = harmonic(nu, rho);
    Ok(RewardTerms {
        kappa,
        nu,
        rho,
        beta,
        r1,
        r2,
        r3,
        reward: (r1 + r2 + beta * r3) / 3.0,
        ..Default::default()
    })
}

/// Full reward from raw FLOP and feature-size figures.
pub fn score(
    kappa: f64,
    lambda: f64,
    lambda_orig: f64,
    omega: f64,
    omega_orig: f64,
    beta: f64,
) -> Result<RewardTerms, RewardError> {
    let m = compression_metrics(lambda, lambda_orig, omega, omega_orig)?;
    let t = episode_reward(kappa, m.nu, m.rho, beta)?;
    Ok(RewardTerms {
        lambda,
        lambda_orig,
        omega,
        omega_orig,
        nu_clamped: m.nu_clamped,
        rho_clamped: m.rho_clamped,
        ..t
    })
}
