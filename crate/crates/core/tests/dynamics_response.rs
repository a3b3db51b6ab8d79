// Time-domain behaviour of the two-frame model against closed-form linear
// response, plus integrator hygiene.

mod common;

use forkgyro::dynamics::{
    common_mode_rejection, coriolis_amplitude, free_decay_energy, frequency_response, rate_bandwidth, simulate,
    tone_amplitude, AccelProfile, DriveConfig, LumpedGyroModel, ModeKind, Profile, SimOptions,
};
use forkgyro::readout::{demodulate, NoiseBudget, ReadoutChain};
use forkgyro::DEG_PER_RAD;
use std::f64::consts::PI;

fn sense_tau(model: &LumpedGyroModel) -> f64 {
    2.0 * model.q_sense() / (2.0 * PI * model.f_sense())
}

/// Steady sense amplitude of frame 1 under a constant rate (rad/s).
fn simulated_sense_amplitude(model: &LumpedGyroModel, drive: &DriveConfig, chain: &ReadoutChain, omega: f64) -> f64 {
    let settle = 20.0 * sense_tau(model);
    let window = 40.0 / drive.frequency;
    let dt = SimOptions::default_dt(model);
    let tr = simulate(
        model,
        drive,
        &Profile::constant(omega),
        &AccelProfile::none(),
        chain,
        &SimOptions::new(dt, settle + window),
    )
    .unwrap();
    let i0 = tr.index_at(settle);
    tone_amplitude(&tr.z1[i0..], dt, tr.t[i0], drive.frequency)
}

#[test]
fn sense_amplitude_matches_linear_response() {
    let (_, model, chain, drive) = common::calibrated();
    let omega = 100.0 / DEG_PER_RAD;
    let sim = simulated_sense_amplitude(&model, &drive, &chain, omega);
    let want = coriolis_amplitude(&model, &drive, omega);
    assert!((sim / want - 1.0).abs() < 0.02, "sim {sim:e} closed form {want:e}");
}

#[test]
fn sense_amplitude_is_linear_in_rate() {
    let (_, model, chain, drive) = common::calibrated();
    let per_rate: Vec<f64> = [10.0, 50.0, 200.0]
        .iter()
        .map(|&dps| simulated_sense_amplitude(&model, &drive, &chain, dps / DEG_PER_RAD) / dps)
        .collect();
    for k in &per_rate {
        assert!((k / per_rate[0] - 1.0).abs() < 0.005, "{per_rate:?}");
    }
}

#[test]
fn halving_the_step_changes_little() {
    let (_, model, chain, drive) = common::calibrated();
    let horizon = 0.02;
    let run = |dt: f64| {
        simulate(
            &model,
            &drive,
            &Profile::constant(100.0 / DEG_PER_RAD),
            &AccelProfile::none(),
            &chain,
            &SimOptions::new(dt, horizon),
        )
        .unwrap()
    };
    let dt = SimOptions::default_dt(&model);
    let coarse = run(dt);
    let fine = run(0.5 * dt);
    let peak = coarse.z1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = coarse
        .z1
        .iter()
        .enumerate()
        .map(|(k, z)| (z - fine.z1[2 * k]).abs())
        .fold(0.0, f64::max);
    assert!(worst / peak < 1e-3, "relative step change {}", worst / peak);
}

#[test]
fn free_decay_never_gains_energy() {
    let (_, model, _, _) = common::calibrated();
    let dt = SimOptions::default_dt(&model);
    let e = free_decay_energy(&model, [1e-6, 0.0, -1e-6, 0.0, 2e-8, 0.0, -1e-8, 1e-4], dt, 20_000);
    assert!(e.windows(2).all(|w| w[1] <= w[0]));
    assert!(e[e.len() - 1] < 0.5 * e[0]);
}

#[test]
fn seeded_noise_is_reproducible() {
    let (_, model, chain, drive) = common::calibrated();
    let noise = NoiseBudget::thermal(&model, &chain);
    let dt = SimOptions::default_dt(&model);
    let run = |seed: u64| {
        simulate(
            &model,
            &drive,
            &Profile::ZERO,
            &AccelProfile::none(),
            &chain,
            &SimOptions::new(dt, 5e-3).with_noise(noise, seed),
        )
        .unwrap()
    };
    let a = run(7);
    let b = run(7);
    let c = run(8);
    assert_eq!(a.v_out, b.v_out);
    assert_eq!(a.z1, b.z1);
    assert_ne!(a.v_out, c.v_out);
}

#[test]
fn flipping_drive_polarity_flips_the_output() {
    let (_, model, chain, drive) = common::calibrated();
    let dt = SimOptions::default_dt(&model);
    let settle = 20.0 * sense_tau(&model);
    let out = |d: &DriveConfig| {
        let tr = simulate(
            &model,
            d,
            &Profile::constant(50.0 / DEG_PER_RAD),
            &AccelProfile::none(),
            &chain,
            &SimOptions::new(dt, settle + 0.01),
        )
        .unwrap();
        let phase = chain.resolve_phase(&model, d);
        let v = demodulate(&tr.v_out, tr.sample_rate(), d.frequency, phase, &chain).unwrap();
        let i0 = tr.index_at(settle);
        v[i0..].iter().sum::<f64>() / (v.len() - i0) as f64
    };
    let pos = out(&drive);
    let neg = out(&drive.flipped());
    assert!(pos > 0.0 && neg < 0.0);
    assert!((pos + neg).abs() < 1e-3 * pos);
}

#[test]
fn symmetric_fork_rejects_common_acceleration() {
    let (_, model, chain, _) = common::calibrated();
    let cmr: Vec<_> = [0.0, 1e-3, 1e-2, 1e-1]
        .iter()
        .map(|&mm| common_mode_rejection(&model, &chain, 9.80665, mm).unwrap())
        .collect();
    assert!(cmr[0].rejection_db >= 120.0, "{}", cmr[0].rejection_db);
    assert!((cmr[0].coriolis_doubling - 2.0).abs() < 2e-3);
    for w in cmr.windows(2) {
        assert!(w[1].rejection_db < w[0].rejection_db);
    }
}

#[test]
fn resonance_peaks_and_sense_width() {
    let (_, model, _, _) = common::calibrated();
    // 1 Hz sweep: both peaks land on the calibrated resonances.
    let coarse = frequency_response(&model, 3900.0, 4100.0, 201).unwrap();
    assert!((coarse.peak_frequency(ModeKind::Drive) - 3998.0).abs() <= 0.5);
    assert!((coarse.peak_frequency(ModeKind::Sense) - 4020.0).abs() <= 0.5);
    // Finer, displacement peaks sit below f_n by f_n(1 − √(1 − 1/2Q²)).
    let bode = frequency_response(&model, 3900.0, 4100.0, 200_001).unwrap();
    let damped = |f: f64, q: f64| f * (1.0 - 0.5 / (q * q)).sqrt();
    assert!((bode.peak_frequency(ModeKind::Drive) - damped(3998.0, 300.0)).abs() <= 1e-3);
    assert!((bode.peak_frequency(ModeKind::Sense) - damped(4020.0, 67.0)).abs() <= 1e-3);
    let width = bode.half_power_width(ModeKind::Sense).unwrap();
    assert!((width / (4020.0 / 67.0) - 1.0).abs() < 0.02, "{width}");
}

#[test]
fn matched_modes_bandwidth_is_half_the_sense_linewidth() {
    let (_, model, chain, _) = common::calibrated();
    let matched = model.with_sense_frequency(model.f_drive());
    let bw = rate_bandwidth(&matched, &chain).unwrap();
    let want = matched.f_sense() / (2.0 * matched.q_sense());
    assert!((bw / want - 1.0).abs() < 0.10, "{bw} vs {want}");
}

#[test]
fn bandwidth_grows_with_mismatch() {
    let (_, model, chain, _) = common::calibrated();
    let bw: Vec<f64> = [5.0, 22.0, 50.0]
        .iter()
        .map(|&df| rate_bandwidth(&model.with_sense_frequency(model.f_drive() + df), &chain).unwrap())
        .collect();
    assert!(bw[0] < bw[1] && bw[1] < bw[2], "{bw:?}");
    assert!(bw[1] >= 5.0);
}

/// Demodulated amplitude of a sinusoidal rate tone from a full simulation.
fn simulated_rate_gain(model: &LumpedGyroModel, chain: &ReadoutChain, drive: &DriveConfig, f_m: f64) -> f64 {
    let dt = SimOptions::default_dt(model);
    let settle = 20.0 * sense_tau(model);
    let window = 4.0 / f_m;
    let tr = simulate(
        model,
        drive,
        &Profile::sinusoid(1.0, f_m),
        &AccelProfile::none(),
        chain,
        &SimOptions::new(dt, settle + window),
    )
    .unwrap();
    let phase = chain.resolve_phase(model, drive);
    let v = demodulate(&tr.v_out, tr.sample_rate(), drive.frequency, phase, chain).unwrap();
    let i0 = tr.index_at(settle);
    tone_amplitude(&v[i0..], dt, tr.t[i0], f_m)
}

#[test]
fn simulated_rate_response_confirms_bandwidth() {
    let (_, model, chain, drive) = common::calibrated();
    let bw = rate_bandwidth(&model, &chain).unwrap();
    let low = simulated_rate_gain(&model, &chain, &drive, 1.0);
    let edge = simulated_rate_gain(&model, &chain, &drive, bw);
    let ratio = edge / low;
    assert!((ratio - 0.5f64.sqrt()).abs() < 0.03, "gain ratio at {bw} Hz = {ratio}");
}
