//! Capacitance-to-voltage conversion, synchronous demodulation, scale
//! factor and noise-equivalent rate.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::dynamics::{simulate, AccelProfile, DriveConfig, LumpedGyroModel, Profile, SimOptions};
use crate::error::{invalid, Error, Result};
use crate::{BOLTZMANN, DEG_PER_RAD};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReadoutChain {
    /// V/F
    pub c2v_gain: f64,
    /// Reference phase (rad); `None` aligns it with the Coriolis carrier.
    pub demod_phase: Option<f64>,
    /// Hz
    pub lpf_cutoff: f64,
    /// Number of cascaded single-pole sections.
    pub lpf_order: u32,
    /// V/√Hz, one-sided, referred to the pre-demodulation voltage.
    pub electronic_noise_psd: f64,
}

impl ReadoutChain {
    pub fn validate(&self) -> Result<()> {
        if !(self.c2v_gain > 0.0 && self.lpf_cutoff > 0.0) {
            return Err(invalid("ReadoutChain", "c2v_gain and lpf_cutoff must be > 0"));
        }
        if self.lpf_order == 0 {
            return Err(invalid("ReadoutChain", "lpf_order must be >= 1"));
        }
        if !(self.electronic_noise_psd >= 0.0) {
            return Err(invalid("ReadoutChain", "electronic_noise_psd must be >= 0"));
        }
        if let Some(p) = self.demod_phase {
            if !p.is_finite() {
                return Err(invalid("ReadoutChain", "demod_phase must be finite"));
            }
        }
        Ok(())
    }

    /// Low-pass magnitude at `f`.
    pub fn lpf_gain(&self, f: f64) -> f64 {
        (1.0 + (f / self.lpf_cutoff).powi(2)).powf(-0.5 * self.lpf_order as f64)
    }

    /// Phase of the reference; in auto mode the phase of the differential
    /// Coriolis carrier for the nominal (positive) drive polarity.
    pub fn resolve_phase(&self, model: &LumpedGyroModel, drive: &DriveConfig) -> f64 {
        match self.demod_phase {
            Some(p) => p,
            None => coriolis_carrier(model, &DriveConfig { polarity: 1.0, ..*drive }).arg(),
        }
    }
}

/// Differential capacitance carrier phasor per unit constant rate (F per rad/s).
pub fn coriolis_carrier(model: &LumpedGyroModel, drive: &DriveConfig) -> Complex64 {
    let w = 2.0 * PI * drive.frequency;
    let lever = model.capacitor.nominal_capacitance() / model.capacitor.nominal_gap;
    (0..2)
        .map(|i| {
            let sign = if i == 0 { 1.0 } else { -1.0 };
            let fr = &model.frames[i];
            let v = Complex64::i() * w * drive.displacement_phasor(model, i);
            sign * -2.0 * fr.m_s * v * fr.sense_receptance(drive.frequency)
        })
        .sum::<Complex64>()
        * lever
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseBudget {
    /// N/√Hz per frame, one-sided.
    pub brownian_force_psd: f64,
    /// V/√Hz, one-sided.
    pub electronic_noise_psd: f64,
    /// K
    pub temperature: f64,
}

impl NoiseBudget {
    pub const ZERO: NoiseBudget = NoiseBudget {
        brownian_force_psd: 0.0,
        electronic_noise_psd: 0.0,
        temperature: 0.0,
    };

    /// Thermal force noise `√(4 k_B T c_s)` of the nominal frame plus the
    /// chain's electronic noise.
    pub fn thermal(model: &LumpedGyroModel, chain: &ReadoutChain) -> Self {
        NoiseBudget {
            brownian_force_psd: (4.0 * BOLTZMANN * model.temperature * model.nominal().c_s).sqrt(),
            electronic_noise_psd: chain.electronic_noise_psd,
            temperature: model.temperature,
        }
    }
}

pub fn cap_to_voltage(dc: f64, chain: &ReadoutChain) -> f64 {
    chain.c2v_gain * dc
}

/// Multiplies by `2cos(2π f t + φ)` with `t = k/fs` and low-passes the
/// product through the chain's cascaded single-pole filter.
pub fn demodulate(signal: &[f64], sample_rate: f64, carrier: f64, phase: f64, chain: &ReadoutChain) -> Result<Vec<f64>> {
    if sample_rate < 10.0 * carrier {
        return Err(Error::Undersampled {
            sample_rate,
            carrier,
        });
    }
    let dt = 1.0 / sample_rate;
    let alpha = 1.0 - (-2.0 * PI * chain.lpf_cutoff * dt).exp();
    let mut stages = vec![0.0; chain.lpf_order as usize];
    let w = 2.0 * PI * carrier;
    Ok(signal
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let mut v = 2.0 * x * (w * k as f64 * dt + phase).cos();
            for s in stages.iter_mut() {
                *s += alpha * (v - *s);
                v = *s;
            }
            v
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleFactor {
    /// V per deg/s
    pub slope: f64,
    /// V
    pub intercept: f64,
    /// Max deviation from the fit, % of full-scale output.
    pub nonlinearity_pct_fs: f64,
    /// (rate deg/s, settled demodulated output V)
    pub points: Vec<(f64, f64)>,
}

pub const SCALE_FACTOR_RATES_DPS: [f64; 7] = [-200.0, -100.0, -50.0, 0.0, 50.0, 100.0, 200.0];

/// Settled demodulated output for a constant rate (deg/s).
pub fn settled_output(model: &LumpedGyroModel, chain: &ReadoutChain, drive: &DriveConfig, rate_dps: f64) -> Result<f64> {
    let dt = SimOptions::default_dt(model);
    let tau_s = 2.0 * model.q_sense() / (2.0 * PI * model.f_sense());
    let tau_f = chain.lpf_order as f64 / (2.0 * PI * chain.lpf_cutoff);
    let settle = 12.0 * (tau_s + tau_f);
    // Average over whole carrier periods to cancel the 2f ripple.
    let periods = (0.02 * drive.frequency).ceil();
    let window = periods / drive.frequency;
    let tr = simulate(
        model,
        drive,
        &Profile::constant(rate_dps / DEG_PER_RAD),
        &AccelProfile::none(),
        chain,
        &SimOptions::new(dt, settle + window),
    )?;
    let phase = chain.resolve_phase(model, drive);
    let out = demodulate(&tr.v_out, tr.sample_rate(), drive.frequency, phase, chain)?;
    let n = (window / dt).round() as usize;
    let tail = &out[out.len() - n..];
    Ok(tail.iter().sum::<f64>() / n as f64)
}

/// Least-squares slope of settled output against constant rate over ±200 deg/s.
pub fn scale_factor(model: &LumpedGyroModel, chain: &ReadoutChain, drive: &DriveConfig) -> Result<ScaleFactor> {
    let points: Vec<(f64, f64)> = SCALE_FACTOR_RATES_DPS
        .iter()
        .map(|&r| settled_output(model, chain, drive, r).map(|v| (r, v)))
        .collect::<Result<_>>()?;
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let full_scale = points.iter().map(|p| (slope * p.0).abs()).fold(0.0, f64::max);
    let worst = points
        .iter()
        .map(|p| (p.1 - (slope * p.0 + intercept)).abs())
        .fold(0.0, f64::max);
    Ok(ScaleFactor {
        slope,
        intercept,
        nonlinearity_pct_fs: 100.0 * worst / full_scale,
        points,
    })
}

/// Analytic DC scale factor (V per deg/s) of the linearised chain.
pub fn analytic_scale_factor(model: &LumpedGyroModel, chain: &ReadoutChain, drive: &DriveConfig) -> f64 {
    let p = coriolis_carrier(model, drive) * chain.c2v_gain;
    let phi = chain.resolve_phase(model, drive);
    (p * Complex64::from_polar(1.0, -phi)).re / DEG_PER_RAD
}

/// One-sided PSD (V²/Hz) of the demodulated output at baseband frequency `f`.
pub fn baseband_output_psd(model: &LumpedGyroModel, chain: &ReadoutChain, noise: &NoiseBudget, drive_frequency: f64, f: f64) -> f64 {
    let lever = chain.c2v_gain * model.capacitor.nominal_capacitance() / model.capacitor.nominal_gap;
    let carrier_band = |fc: f64| -> f64 {
        let mech: f64 = model
            .frames
            .iter()
            .map(|fr| noise.brownian_force_psd.powi(2) * fr.sense_receptance(fc).norm_sqr())
            .sum();
        lever * lever * mech + noise.electronic_noise_psd.powi(2)
    };
    (carrier_band(drive_frequency + f) + carrier_band(drive_frequency - f)) * chain.lpf_gain(f).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseReport {
    /// deg/s rms over the bandwidth
    pub rate_rms_dps: f64,
    /// V rms over the bandwidth
    pub output_rms: f64,
    pub bandwidth: f64,
    /// V per deg/s
    pub scale_factor: f64,
}

/// Output noise integrated over `[0, bandwidth]` and referred to the input
/// through the DC scale factor.
pub fn noise_equivalent_rate(
    model: &LumpedGyroModel,
    chain: &ReadoutChain,
    noise: &NoiseBudget,
    drive: &DriveConfig,
    bandwidth: f64,
) -> Result<NoiseReport> {
    if !(bandwidth > 0.0) {
        return Err(invalid("noise_equivalent_rate", "bandwidth must be > 0"));
    }
    let sf = analytic_scale_factor(model, chain, drive).abs();
    // Composite Simpson over the band.
    let n = 256;
    let h = bandwidth / n as f64;
    let s = |k: usize| baseband_output_psd(model, chain, noise, drive.frequency, k as f64 * h);
    let mut acc = s(0) + s(n);
    for k in 1..n {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * s(k);
    }
    let var = acc * h / 3.0;
    let output_rms = var.sqrt();
    Ok(NoiseReport {
        rate_rms_dps: if output_rms == 0.0 { 0.0 } else { output_rms / sf },
        output_rms,
        bandwidth,
        scale_factor: sf,
    })
}

/// c2v gain that makes the analytic scale factor equal `target` (V per deg/s).
pub fn calibrate_gain(model: &LumpedGyroModel, chain: &ReadoutChain, drive: &DriveConfig, target: f64) -> f64 {
    let unit = ReadoutChain { c2v_gain: 1.0, ..*chain };
    target / analytic_scale_factor(model, &unit, drive).abs()
}

/// Analytic spectral margin (dB) of a rate tone over the noise floor at
/// frequency resolution `resolution`.
pub fn tone_margin_db(
    model: &LumpedGyroModel,
    chain: &ReadoutChain,
    noise: &NoiseBudget,
    drive: &DriveConfig,
    tone_dps: f64,
    tone_hz: f64,
    resolution: f64,
) -> f64 {
    let a = crate::dynamics::rate_transfer(model, chain, drive, tone_hz) * tone_dps / DEG_PER_RAD;
    let floor = baseband_output_psd(model, chain, noise, drive.frequency, tone_hz) * resolution;
    10.0 * (0.5 * a * a / floor).log10()
}

/// Electronic noise PSD that places a rate tone `margin_db` above the floor
/// at the given resolution, on top of the Brownian contribution.
pub fn calibrate_electronic_noise(
    model: &LumpedGyroModel,
    chain: &ReadoutChain,
    brownian_force_psd: f64,
    drive: &DriveConfig,
    tone_dps: f64,
    tone_hz: f64,
    margin_db: f64,
    resolution: f64,
) -> Result<f64> {
    let a = crate::dynamics::rate_transfer(model, chain, drive, tone_hz) * tone_dps / DEG_PER_RAD;
    let target_floor = 0.5 * a * a / (10f64.powf(margin_db / 10.0) * resolution);
    let mech = NoiseBudget {
        brownian_force_psd,
        electronic_noise_psd: 0.0,
        temperature: model.temperature,
    };
    let mech_floor = baseband_output_psd(model, chain, &mech, drive.frequency, tone_hz);
    let electronic = target_floor - mech_floor;
    if !(electronic > 0.0) {
        return Err(Error::Calibration("Brownian noise alone exceeds the requested floor".into()));
    }
    // Baseband sees both carrier sidebands: 2·S_e²·|L|².
    Ok((electronic / (2.0 * chain.lpf_gain(tone_hz).powi(2))).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    /// One-sided PSD (units²/Hz).
    pub psd: Vec<f64>,
    pub resolution: f64,
}

impl Spectrum {
    pub fn db(&self) -> Vec<f64> {
        self.psd.iter().map(|p| 10.0 * p.max(f64::MIN_POSITIVE).log10()).collect()
    }

    pub fn bin(&self, f: f64) -> usize {
        ((f / self.resolution).round() as usize).min(self.psd.len() - 1)
    }

    /// Mean floor over `[f_lo, f_hi]` from the median bin, exponential
    /// statistics of a periodogram bin assumed.
    pub fn floor(&self, f_lo: f64, f_hi: f64, exclude: &[usize]) -> f64 {
        let mut v: Vec<f64> = (self.bin(f_lo)..=self.bin(f_hi))
            .filter(|k| !exclude.contains(k))
            .map(|k| self.psd[k])
            .collect();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        median / LN_2
    }
}

/// Rectangular-window periodogram of a real series.
pub fn power_spectrum(x: &[f64], dt: f64) -> Spectrum {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = dt / n as f64;
    let psd = (0..=n / 2)
        .map(|k| {
            let p = buf[k].norm_sqr() * scale;
            if k == 0 || (n % 2 == 0 && k == n / 2) {
                p
            } else {
                2.0 * p
            }
        })
        .collect();
    let resolution = 1.0 / (n as f64 * dt);
    Spectrum {
        freqs: (0..=n / 2).map(|k| k as f64 * resolution).collect(),
        psd,
        resolution,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn chain() -> ReadoutChain {
        ReadoutChain {
            c2v_gain: 1e9,
            demod_phase: Some(0.0),
            lpf_cutoff: 50.0,
            lpf_order: 1,
            electronic_noise_psd: 0.0,
        }
    }

    #[test]
    fn c2v_is_linear() {
        let c = chain();
        assert_eq!(cap_to_voltage(0.0, &c), 0.0);
        assert_relative_eq!(cap_to_voltage(1e-15, &c), 1e-6, max_relative = 1e-15);
        assert_eq!(cap_to_voltage(2e-15, &c), 2.0 * cap_to_voltage(1e-15, &c));
    }

    fn tone(fs: f64, f: f64, phase: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| (2.0 * PI * f * k as f64 / fs + phase).cos()).collect()
    }

    #[test]
    fn in_phase_and_quadrature() {
        let (fs, f) = (100_000.0, 4000.0);
        let settle = 20_000;
        let tail = |v: Vec<f64>| v[settle..].iter().sum::<f64>() / (v.len() - settle) as f64;
        let i = demodulate(&tone(fs, f, 0.0, 30_000), fs, f, 0.0, &chain()).unwrap();
        assert!((tail(i) - 1.0).abs() < 1e-3);
        let q = demodulate(&tone(fs, f, -PI / 2.0, 30_000), fs, f, 0.0, &chain()).unwrap();
        assert!(tail(q).abs() < 1e-3);
    }

    #[test]
    fn undersampling_is_rejected() {
        assert!(matches!(
            demodulate(&[0.0; 10], 30_000.0, 4000.0, 0.0, &chain()),
            Err(Error::Undersampled { .. })
        ));
    }

    #[test]
    fn lpf_gain_of_cascade() {
        let c = ReadoutChain { lpf_order: 3, ..chain() };
        assert_relative_eq!(c.lpf_gain(50.0), 0.5f64.powf(1.5), max_relative = 1e-14);
        assert_eq!(c.lpf_gain(0.0), 1.0);
    }

    #[test]
    fn periodogram_tone_and_parseval() {
        let dt = 1e-3;
        let n = 4000;
        let x: Vec<f64> = (0..n).map(|k| 0.5 * (2.0 * PI * 25.0 * k as f64 * dt).cos()).collect();
        let s = power_spectrum(&x, dt);
        assert_relative_eq!(s.resolution, 0.25, max_relative = 1e-12);
        let k = s.bin(25.0);
        // Peak power per bin times resolution equals A²/2.
        assert_relative_eq!(s.psd[k] * s.resolution, 0.125, max_relative = 1e-9);
        let total: f64 = s.psd.iter().sum::<f64>() * s.resolution;
        let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
        assert_relative_eq!(total, mean_sq, max_relative = 1e-9);
    }

    #[test]
    fn floor_from_median() {
        let s = Spectrum {
            freqs: (0..5).map(|k| k as f64).collect(),
            psd: vec![9.0, 1.0, 2.0, 3.0, 100.0],
            resolution: 1.0,
        };
        assert_relative_eq!(s.floor(1.0, 4.0, &[4]), 2.0 / LN_2);
    }
}
