use serde::{Deserialize, Serialize};

use crate::error::{GasError, Result};

pub const DEFAULT_NUM_TIMESTEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 8.5e-4;
pub const DEFAULT_BETA_END: f64 = 1.2e-2;

/// Discrete diffusion timestep grid with cumulative signal coefficients.
///
/// `alpha_bar[t]` is strictly decreasing in `t`, so band 0 of [`snr_band`]
/// always holds the highest signal-to-noise ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DiffusionSchedule {
    alpha_bar: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        let Some((&first, &last)) = alpha_bar.first().zip(alpha_bar.last()) else {
            return Err(GasError::Config(
                "schedule must have at least one timestep".into(),
            ));
        };
        if !(first > 0.0 && first <= 1.0) {
            return Err(GasError::Config(format!(
                "alpha_bar[0] = {first} not in (0, 1]"
            )));
        }
        if !(last > 0.0 && last < 1.0) {
            return Err(GasError::Config(format!(
                "alpha_bar[last] = {last} not in (0, 1)"
            )));
        }
        if let Some(i) = alpha_bar.windows(2).position(|w| !(w[1] < w[0])) {
            return Err(GasError::Config(format!(
                "alpha_bar not strictly decreasing at t = {}",
                i + 1
            )));
        }
        Ok(Self { alpha_bar })
    }

    /// `alpha_bar[t] = prod_{s <= t} (1 - beta_s)` with `beta` linear in `t`.
    pub fn linear_beta(num_timesteps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if num_timesteps == 0 {
            return Err(GasError::Config("num_timesteps must be positive".into()));
        }
        if !(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end) {
            return Err(GasError::Config(format!(
                "invalid beta range [{beta_start}, {beta_end}]"
            )));
        }
        let denom = (num_timesteps.max(2) - 1) as f64;
        let mut acc = 1.0;
        let alpha_bar = (0..num_timesteps)
            .map(|t| {
                let beta = beta_start + (beta_end - beta_start) * t as f64 / denom;
                acc *= 1.0 - beta;
                acc
            })
            .collect();
        Self::from_alpha_bar(alpha_bar)
    }

    pub fn num_timesteps(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bar.get(t).copied().ok_or_else(|| {
            GasError::invalid(format!(
                "timestep {t} out of range 0..{}",
                self.alpha_bar.len()
            ))
        })
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn snr(&self, t: usize) -> Result<f64> {
        let a = self.alpha_bar(t)?;
        Ok(a / (1.0 - a))
    }
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        Self::linear_beta(DEFAULT_NUM_TIMESTEPS, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("default schedule is valid")
    }
}

impl TryFrom<Vec<f64>> for DiffusionSchedule {
    type Error = GasError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::from_alpha_bar(v)
    }
}

impl From<DiffusionSchedule> for Vec<f64> {
    fn from(s: DiffusionSchedule) -> Self {
        s.alpha_bar
    }
}

/// Index of the equal-width timestep band containing `t`; band 0 is the
/// highest-SNR band.
pub fn snr_band(t: usize, sched: &DiffusionSchedule, num_bands: usize) -> Result<usize> {
    if num_bands == 0 {
        return Err(GasError::invalid("num_bands must be at least 1"));
    }
    let n = sched.num_timesteps();
    if t >= n {
        return Err(GasError::invalid(format!(
            "timestep {t} out of range 0..{n}"
        )));
    }
    Ok((t * num_bands / n).min(num_bands - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_is_monotone() {
        let s = DiffusionSchedule::default();
        assert_eq!(s.num_timesteps(), 1000);
        let a = s.alpha_bars();
        assert!(a[0] < 1.0 && a[0] > 0.99);
        assert!(a[999] > 0.0 && a[999] < 0.01);
        for t in 1..1000 {
            assert!(s.snr(t).unwrap() < s.snr(t - 1).unwrap());
        }
    }

    #[test]
    fn rejects_bad_schedules() {
        assert!(DiffusionSchedule::from_alpha_bar(vec![]).is_err());
        assert!(DiffusionSchedule::from_alpha_bar(vec![0.5, 0.5]).is_err());
        assert!(DiffusionSchedule::from_alpha_bar(vec![1.0, 0.0]).is_err());
        assert!(DiffusionSchedule::from_alpha_bar(vec![1.2, 0.5]).is_err());
        assert!(DiffusionSchedule::from_alpha_bar(vec![1.0, 0.5]).is_ok());
    }

    #[test]
    fn band_examples() {
        let s = DiffusionSchedule::default();
        assert_eq!(snr_band(0, &s, 5).unwrap(), 0);
        assert_eq!(snr_band(999, &s, 5).unwrap(), 4);
        assert_eq!(snr_band(500, &s, 5).unwrap(), 2);
        assert_eq!(snr_band(199, &s, 5).unwrap(), 0);
        assert_eq!(snr_band(200, &s, 5).unwrap(), 1);
        assert_eq!(snr_band(999, &s, 1).unwrap(), 0);
        assert!(snr_band(1000, &s, 5).is_err());
        assert!(snr_band(0, &s, 0).is_err());
    }
}
