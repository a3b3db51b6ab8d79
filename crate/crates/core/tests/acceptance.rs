// Acceptance run: one PASS/FAIL line per criterion with the measured values
// and wall time against its budget. Set FORKGYRO_ACCEPTANCE_STRICT=1 to make
// any FAIL a non-zero exit.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use forkgyro::damping::{cell_damping_modified_reynolds, fd_reynolds_oracle, SqueezeFilmParams};
use forkgyro::dynamics::{
    common_mode_rejection, coriolis_amplitude, free_decay_energy, frequency_response, rate_bandwidth, simulate,
    tone_amplitude, AccelProfile, ModeKind, Profile, SimOptions,
};
use forkgyro::geometry::{DeviceSpec, PerforationSpec, Variant};
use forkgyro::modal::{compare_configs, modal_analysis, MassMatrix6};
use forkgyro::readout::{
    demodulate, noise_equivalent_rate, power_spectrum, scale_factor, tone_margin_db, NoiseBudget,
};
use forkgyro::sensing::{delta_c, offset_vs_asymmetry, AsymmetryCase};
use forkgyro::suspension::Stiffness6;
use forkgyro::DEG_PER_RAD;
use nalgebra::Matrix6;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Check {
    what: String,
    ok: bool,
}

fn check(ok: bool, what: impl Into<String>) -> Check {
    Check { what: what.into(), ok }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value / target - 1.0).abs() <= rel
}

fn report(n: usize, title: &str, budget: Duration, run: impl FnOnce() -> Vec<Check>) -> bool {
    let t0 = Instant::now();
    let checks = run();
    let elapsed = t0.elapsed();
    let in_time = elapsed <= budget;
    let ok = in_time && checks.iter().all(|c| c.ok);
    let detail: Vec<String> = checks
        .iter()
        .map(|c| format!("{}{}", if c.ok { "" } else { "FAILED " }, c.what))
        .collect();
    println!(
        "{} criterion {n:>2} {title}: {} [{:.2} s of {} s]",
        if ok { "PASS" } else { "FAIL" },
        detail.join("; "),
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    ok
}

fn mode_ordering() -> Vec<Check> {
    let r = compare_configs(&DeviceSpec::reference()).unwrap();
    let (e, f) = (r.eight_one.usable.mode_number(), r.four_one.usable.mode_number());
    vec![
        check(e == 1, format!("8-1 usable Tz is mode {e} (want 1)")),
        check(f == 2, format!("4-1 usable Tz is mode {f} (want 2)")),
    ]
}

fn frequency_gap() -> Vec<Check> {
    let r = compare_configs(&DeviceSpec::reference()).unwrap();
    let (ge, gf) = (r.eight_one.usable.gap_hz, r.four_one.usable.gap_hz);
    let mut out = vec![
        check(ge > gf, format!("gap 8-1 {ge:.1} Hz > 4-1 {gf:.1} Hz")),
        check(r.gap_ratio >= 2.0, format!("gap ratio {:.2} >= 2", r.gap_ratio)),
    ];
    let targets = [
        ("8-1", &r.eight_one.modal.frequencies, &[2386.0, 3419.0][..]),
        ("4-1", &r.four_one.modal.frequencies, &[3441.0, 4263.0, 4522.0][..]),
    ];
    for (name, got, want) in targets {
        for (i, &w) in want.iter().enumerate() {
            let dev = got[i] / w - 1.0;
            out.push(check(
                dev.abs() <= 0.35,
                format!("{name} mode {} {:.0} Hz vs {w:.0} Hz ({:+.0}%, ±35%)", i + 1, got[i], 100.0 * dev),
            ));
        }
    }
    out
}

fn series_square_plate(p: &SqueezeFilmParams) -> f64 {
    let k = 12.0 * p.air_viscosity / p.gap.powi(3);
    let (a, b) = (p.len_x, p.len_y);
    let mut sum = 0.0;
    for m in (1..2000).step_by(2) {
        for n in (1..2000).step_by(2) {
            let (mf, nf) = (m as f64, n as f64);
            sum += 1.0 / (mf * mf * nf * nf * ((mf / a).powi(2) + (nf / b).powi(2)));
        }
    }
    64.0 * k * a * b * sum / PI.powi(6)
}

fn damping() -> Vec<Check> {
    let spec = DeviceSpec::reference();
    let film = SqueezeFilmParams::from_device(&spec).unwrap();
    let q = cell_damping_modified_reynolds(&film).unwrap().quality_factor;
    let cases: Vec<(f64, f64)> = [56e-6, 64e-6, 72e-6]
        .iter()
        .flat_map(|&pitch| [4e-6, 5e-6, 6e-6].map(|gap| (pitch, gap)))
        .collect();
    let ratios: Vec<f64> = std::thread::scope(|s| {
        let hs: Vec<_> = cases
            .iter()
            .map(|&(pitch, gap)| {
                s.spawn(move || {
                    let p = film.with_pitch(pitch).with_gap(gap);
                    cell_damping_modified_reynolds(&p).unwrap().damping_coeff
                        / fd_reynolds_oracle(&p, 8).unwrap().result.damping_coeff
                })
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let worst = ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
    let square = SqueezeFilmParams {
        len_x: 1e-3,
        len_y: 1e-3,
        perforation: PerforationSpec::NONE,
        ..film
    };
    let fd = fd_reynolds_oracle(&square, 128).unwrap().result.damping_coeff;
    let series = series_square_plate(&square);
    vec![
        check((47.0..=87.0).contains(&q), format!("reference Q {q:.1} in [47, 87]")),
        check(worst <= 0.10, format!("cell vs FD worst {:.1}% over 3x3 (pitch, gap) (10%)", 100.0 * worst)),
        check(
            within(fd, series, 0.02),
            format!("FD vs series square plate {:+.2}% (2%)", 100.0 * (fd / series - 1.0)),
        ),
    ]
}

fn offsets() -> Vec<Check> {
    let spec = DeviceSpec::reference();
    let cases: Vec<_> = [0.005, 0.01, 0.015, 0.02].map(AsymmetryCase::com_shift).to_vec();
    let curve = |v| -> Vec<f64> {
        offset_vs_asymmetry(&spec, &cases, v).unwrap().points.iter().map(|p| p.delta_c).collect()
    };
    let (e, f) = (curve(Variant::EightOne), curve(Variant::FourOne));
    let rising = |c: &[f64]| c.windows(2).all(|w| w[1] > w[0]);
    vec![
        check(rising(&e), "8-1 strictly increasing"),
        check(rising(&f), "4-1 strictly increasing"),
        check(
            e.iter().zip(&f).all(|(a, b)| a < b),
            format!("8-1 < 4-1 at every eta (at 2%: {:.2e} F vs {:.2e} F)", e[3], f[3]),
        ),
    ]
}

fn calibrated_resonances() -> Vec<Check> {
    let (_, model, _, _) = common::calibrated();
    let bode = frequency_response(&model, 3900.0, 4100.0, 201).unwrap();
    let (pd, ps) = (bode.peak_frequency(ModeKind::Drive), bode.peak_frequency(ModeKind::Sense));
    vec![
        check(within(model.f_drive(), 3998.0, 1e-12), format!("f_drive {:.6} Hz", model.f_drive())),
        check(within(model.f_sense(), 4020.0, 1e-12), format!("f_sense {:.6} Hz", model.f_sense())),
        check((model.mismatch_hz() - 22.0).abs() < 1e-9, format!("mismatch {:.6} Hz", model.mismatch_hz())),
        check(
            (pd - 3998.0).abs() <= 0.5 && (ps - 4020.0).abs() <= 0.5,
            format!("1 Hz sweep peaks at {pd:.0} / {ps:.0} Hz"),
        ),
    ]
}

fn coriolis() -> Vec<Check> {
    let (_, model, chain, drive) = common::calibrated();
    let dt = SimOptions::default_dt(&model);
    let settle = 20.0 * 2.0 * model.q_sense() / (2.0 * PI * model.f_sense());
    let amp = |dps: f64| {
        let tr = simulate(
            &model,
            &drive,
            &Profile::constant(dps / DEG_PER_RAD),
            &AccelProfile::none(),
            &chain,
            &SimOptions::new(dt, settle + 40.0 / drive.frequency),
        )
        .unwrap();
        let i0 = tr.index_at(settle);
        tone_amplitude(&tr.z1[i0..], dt, tr.t[i0], drive.frequency)
    };
    let a100 = amp(100.0);
    let closed = coriolis_amplitude(&model, &drive, 100.0 / DEG_PER_RAD);
    let per: Vec<f64> = [10.0, 50.0, 200.0].iter().map(|&r| amp(r) / r).collect();
    let lin = per.iter().map(|k| (k / per[0] - 1.0).abs()).fold(0.0, f64::max);
    let sf = scale_factor(&model, &chain, &drive).unwrap();
    vec![
        check(
            within(a100, closed, 0.02),
            format!("sense amplitude {a100:.4e} m vs closed form {closed:.4e} m ({:+.3}%)", 100.0 * (a100 / closed - 1.0)),
        ),
        check(lin <= 0.005, format!("amplitude/rate spread {:.4}% over 10..200 deg/s (0.5%)", 100.0 * lin)),
        check(sf.nonlinearity_pct_fs < 1.0, format!("nonlinearity {:.4}% FS over ±200 deg/s", sf.nonlinearity_pct_fs)),
    ]
}

fn tuning_fork() -> Vec<Check> {
    let (_, model, chain, _) = common::calibrated();
    let r = common_mode_rejection(&model, &chain, 9.80665, 0.0).unwrap();
    vec![
        check(r.rejection_db >= 120.0, format!("CMR {:.1} dB (>= 120)", r.rejection_db)),
        check(
            within(r.coriolis_doubling, 2.0, 1e-3),
            format!("differential/single {:.5} (2 within 0.1%)", r.coriolis_doubling),
        ),
    ]
}

fn bandwidth() -> Vec<Check> {
    let (_, model, chain, _) = common::calibrated();
    let bw = rate_bandwidth(&model, &chain).unwrap();
    vec![check(bw >= 5.0, format!("rate bandwidth {bw:.2} Hz (>= 5)"))]
}

fn noise_chain() -> Vec<Check> {
    let (spec, model, chain, drive) = common::calibrated();
    let noise = NoiseBudget::thermal(&model, &chain);
    let ner = noise_equivalent_rate(&model, &chain, &noise, &drive, 1.0).unwrap();
    let dt = SimOptions::default_dt(&model);
    let (settle, record) = (0.25, 1.0);
    let tr = simulate(
        &model,
        &drive,
        &Profile::sinusoid(10.0 / DEG_PER_RAD, 2.0),
        &AccelProfile::none(),
        &chain,
        &SimOptions::new(dt, settle + record).with_noise(noise, spec.seed),
    )
    .unwrap();
    let phase = chain.resolve_phase(&model, &drive);
    let v = demodulate(&tr.v_out, tr.sample_rate(), drive.frequency, phase, &chain).unwrap();
    let i0 = tr.index_at(settle);
    let n = (record / dt).round() as usize;
    let sp = power_spectrum(&v[i0..i0 + n], dt);
    let k = sp.bin(2.0);
    let fft = 10.0 * (sp.psd[k] / sp.floor(3.0, 30.0, &[k])).log10();
    let analytic = tone_margin_db(&model, &chain, &noise, &drive, 10.0, 2.0, sp.resolution);
    let sf = scale_factor(&model, &chain, &drive).unwrap();
    vec![
        check(
            ner.rate_rms_dps >= 0.05 && ner.rate_rms_dps <= 0.2,
            format!("noise-equivalent rate {:.4} deg/s in 1 Hz (0.1 within x2)", ner.rate_rms_dps),
        ),
        check(
            (fft - analytic).abs() <= 3.0,
            format!("FFT margin {fft:.2} dB vs analytic {analytic:.2} dB (3 dB)"),
        ),
        check(
            within(sf.slope, 0.15e-3, 0.05),
            format!("scale factor {:.5} mV/(deg/s) vs 0.15 (5%)", 1e3 * sf.slope),
        ),
    ]
}

fn hygiene() -> Vec<Check> {
    let (_, model, chain, drive) = common::calibrated();
    let dt = SimOptions::default_dt(&model);
    let run = |h: f64| {
        simulate(
            &model,
            &drive,
            &Profile::constant(100.0 / DEG_PER_RAD),
            &AccelProfile::none(),
            &chain,
            &SimOptions::new(h, 0.02),
        )
        .unwrap()
    };
    let (coarse, fine) = (run(dt), run(0.5 * dt));
    let peak = coarse.z1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let step_change = coarse
        .z1
        .iter()
        .enumerate()
        .map(|(k, z)| (z - fine.z1[2 * k]).abs())
        .fold(0.0, f64::max)
        / peak;

    let energy = free_decay_energy(&model, [1e-6, 0.0, -1e-6, 0.0, 2e-8, 0.0, -1e-8, 1e-4], dt, 20_000);
    let decays = energy.windows(2).all(|w| w[1] <= w[0]);

    let noise = NoiseBudget::thermal(&model, &chain);
    let seeded = |seed| {
        simulate(
            &model,
            &drive,
            &Profile::ZERO,
            &AccelProfile::none(),
            &chain,
            &SimOptions::new(dt, 2e-3).with_noise(noise, seed),
        )
        .unwrap()
        .v_out
    };
    let reproducible = seeded(3) == seeded(3) && seeded(3) != seeded(4);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut eig_err = 0.0f64;
    for _ in 0..50 {
        let mut spd = |d: f64| {
            let b = Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0));
            b * b.transpose() + Matrix6::identity() * d
        };
        let (k, m) = (spd(0.2), spd(0.5));
        let r = modal_analysis(&Stiffness6(k), &MassMatrix6(m)).unwrap();
        for (i, (lambda, _)) in common::generalized_eigen(&k, &m).iter().enumerate() {
            let got = (2.0 * PI * r.frequencies[i]).powi(2);
            eig_err = eig_err.max((got - lambda).abs() / lambda);
        }
    }

    let cap = DeviceSpec::reference().capacitor;
    let (a, b, g0) = (0.5 * cap.electrode_len_x, 0.5 * cap.electrode_len_y, cap.nominal_gap);
    let mut dc_err = 0.0f64;
    for _ in 0..100 {
        let z = rng.random_range(-0.3..0.3) * g0;
        let g = g0 - z;
        let p: f64 = rng.random_range(-0.3..0.3);
        let q: f64 = rng.random_range(-0.3..0.3);
        let (ty, tx) = (p * g / a, q * g / b);
        let exact = delta_c(&cap, z, tx, ty).unwrap();
        let quad = common::delta_c_quadrature(&cap, z, tx, ty);
        dc_err = dc_err.max((exact - quad).abs() / quad.abs());
    }
    vec![
        check(step_change < 1e-3, format!("RK4 dt-halving change {:.2e} (< 1e-3)", step_change)),
        check(decays, "free-decay energy non-increasing"),
        check(reproducible, "same seed same trace, new seed new trace"),
        check(eig_err <= 1e-8, format!("eigenvalues vs Jacobi {eig_err:.1e} (<= 1e-8)")),
        check(dc_err <= 1e-6, format!("delta_c vs quadrature {dc_err:.1e} (<= 1e-6)")),
    ]
}

fn main() {
    let s = Duration::from_secs;
    let results = [
        report(1, "mode ordering", s(1), mode_ordering),
        report(2, "frequency gap", s(1), frequency_gap),
        report(3, "damping", s(30), damping),
        report(4, "offset vs asymmetry", s(1), offsets),
        report(5, "calibrated resonances", s(5), calibrated_resonances),
        report(6, "Coriolis amplitude", s(60), coriolis),
        report(7, "tuning-fork properties", s(30), tuning_fork),
        report(8, "bandwidth", s(60), bandwidth),
        report(9, "noise chain", s(120), noise_chain),
        report(10, "numerical hygiene", s(60), hygiene),
    ];
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if passed < results.len() && std::env::var_os("FORKGYRO_ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
