use std::io::Write;
use std::ops::Index;
use std::path::PathBuf;

use anyhow::Result;
use forkgyro::damping::{cell_damping_modified_reynolds, fd_reynolds_oracle, DampingResult, SqueezeFilmParams};
use forkgyro::dynamics::{
    build_lumped_model, common_mode_rejection, frequency_response, rate_bandwidth, simulate, tone_amplitude,
    AccelProfile, DriveConfig, LumpedGyroModel, Profile, SimOptions, SimTrace,
};
use forkgyro::geometry::{DeviceSpec, Variant};
use forkgyro::modal::{analyze_variant, compare_configs, MassMatrix6, VariantReport};
use forkgyro::readout::{
    analytic_scale_factor, demodulate, noise_equivalent_rate, power_spectrum, scale_factor, tone_margin_db,
    NoiseBudget, ReadoutChain, Spectrum,
};
use forkgyro::sensing::{offset_vs_asymmetry, AsymmetryCase};
use forkgyro::suspension::assemble_suspension;
use forkgyro::{DEG_PER_RAD, STANDARD_GRAVITY};
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::{announce, load_spec, nums, sci, usage, Run};
use crate::{Cli, Command, DampingArgs, MethodArg, ModalArgs, OffsetArgs, SimulateArgs, SweepArgs, VariantArg};

pub fn run(cli: &Cli) -> Result<()> {
    let command: Vec<String> = std::env::args().skip(1).collect();
    let run = Run::new(cli, command.join(" "))?;
    let written = match &cli.command {
        Command::Modal(a) => modal(&run, a)?,
        Command::Damping(a) => damping(&run, a)?,
        Command::Offset(a) => offset(&run, a)?,
        Command::Simulate(a) => simulate_cmd(&run, a)?,
        Command::Sweep(a) => sweep(&run, a)?,
        Command::Report => report(&run)?,
    };
    announce(&written);
    Ok(())
}

// ---------------------------------------------------------------- modal

#[derive(Serialize)]
struct ModalVariantOut {
    variant: &'static str,
    frequencies_hz: Vec<f64>,
    labels: Vec<String>,
    usable_mode: usize,
    usable_gap_hz: f64,
}

impl From<&VariantReport> for ModalVariantOut {
    fn from(r: &VariantReport) -> Self {
        ModalVariantOut {
            variant: r.variant.name(),
            frequencies_hz: r.modal.frequencies.clone(),
            labels: r.modal.labels.iter().map(|l| l.to_string()).collect(),
            usable_mode: r.usable.mode_number(),
            usable_gap_hz: r.usable.gap_hz,
        }
    }
}

#[derive(Serialize)]
struct Comparison {
    gap_ratio: f64,
    eight_one_gap_exceeds: bool,
}

#[derive(Serialize)]
struct ModalOut {
    variants: Vec<ModalVariantOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<Comparison>,
}

fn variant_label(v: Variant) -> &'static str {
    match v {
        Variant::EightOne => "eight-one",
        Variant::FourOne => "four-one",
    }
}

fn modal(run: &Run, a: &ModalArgs) -> Result<Vec<PathBuf>> {
    let spec = &run.spec;
    let (reports, comparison) = match a.variant {
        VariantArg::Both => {
            let c = compare_configs(spec)?;
            say!("{c}");
            let cmp = Comparison {
                gap_ratio: c.gap_ratio,
                eight_one_gap_exceeds: c.eight_one_gap_exceeds,
            };
            (vec![c.eight_one, c.four_one], Some(cmp))
        }
        VariantArg::EightOne | VariantArg::FourOne => {
            let v = if a.variant == VariantArg::EightOne { Variant::EightOne } else { Variant::FourOne };
            let r = analyze_variant(spec, v)?;
            say!("{r}");
            (vec![r], None)
        }
    };
    let mut written = vec![run.write_json(
        "modal.json",
        &ModalOut {
            variants: reports.iter().map(ModalVariantOut::from).collect(),
            comparison,
        },
    )?];
    let rows = reports.iter().flat_map(|r| {
        r.modal.frequencies.iter().zip(&r.modal.labels).enumerate().map(move |(i, (f, l))| {
            vec![variant_label(r.variant).to_string(), (i + 1).to_string(), sci(*f), l.to_string()]
        })
    });
    written.push(run.write_csv("modal.csv", &["variant", "mode", "frequency_Hz", "label"], rows)?);
    if a.matrices {
        let dofs = ["Tx", "Ty", "Tz", "Rx", "Ry", "Rz"];
        let mut cols = vec!["dof"];
        cols.extend(dofs);
        for r in &reports {
            let layout = spec.with_variant(r.variant).suspension_layout()?;
            let k = assemble_suspension(&layout, &spec.material)?;
            let name = format!("stiffness_{}.csv", variant_label(r.variant));
            written.push(run.write_csv(&name, &cols, matrix_rows(k.matrix(), &dofs))?);
        }
        let m = MassMatrix6::from_plate(&spec.plate, &spec.material);
        written.push(run.write_csv("mass.csv", &cols, matrix_rows(m.matrix(), &dofs))?);
    }
    Ok(written)
}

/// A 6x6 matrix as labelled CSV rows. Stiffness entries are N/m, N/rad or
/// N·m/rad; mass entries kg, kg·m or kg·m².
fn matrix_rows<M: Index<(usize, usize), Output = f64>>(m: &M, dofs: &[&str; 6]) -> Vec<Vec<String>> {
    (0..6)
        .map(|i| {
            let mut row = vec![dofs[i].to_string()];
            row.extend((0..6).map(|j| sci(m[(i, j)])));
            row
        })
        .collect()
}

// -------------------------------------------------------------- damping

#[derive(Serialize)]
struct FdInfo {
    grid_resolution: usize,
    iterations: usize,
    cells: usize,
}

#[derive(Serialize)]
struct DampingOut {
    method: &'static str,
    damping_coeff_n_s_per_m: f64,
    quality_factor: f64,
    q_convention: &'static str,
    squeeze_number: f64,
    sense_frequency_hz: f64,
    warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fd: Option<FdInfo>,
}

impl DampingOut {
    fn new(r: &DampingResult, method: &'static str, p: &SqueezeFilmParams, fd: Option<FdInfo>) -> Self {
        DampingOut {
            method,
            damping_coeff_n_s_per_m: r.damping_coeff,
            quality_factor: r.quality_factor,
            q_convention: DampingResult::Q_CONVENTION,
            squeeze_number: r.squeeze_number,
            sense_frequency_hz: p.frequency,
            warnings: r.warnings.clone(),
            fd,
        }
    }
}

fn damping(run: &Run, a: &DampingArgs) -> Result<Vec<PathBuf>> {
    if a.pressure_csv && a.method != MethodArg::Fd {
        return Err(usage("--pressure-csv needs --method fd"));
    }
    let p = SqueezeFilmParams::from_device(&run.spec)?;
    let mut written = Vec::new();
    let out = match a.method {
        MethodArg::Cell => DampingOut::new(&cell_damping_modified_reynolds(&p)?, "cell", &p, None),
        MethodArg::Fd => {
            let fd = fd_reynolds_oracle(&p, a.grid)?;
            if a.pressure_csv {
                let f = &fd.field;
                let rows = (0..f.ny()).flat_map(|j| (0..f.nx()).map(move |i| nums(&[f.x[i], f.y[j], f.at(i, j)])));
                written.push(run.write_csv("pressure.csv", &["x_m", "y_m", "p_per_velocity_Pa_s_per_m"], rows)?);
            }
            let info = FdInfo {
                grid_resolution: a.grid,
                iterations: fd.iterations,
                cells: fd.cells,
            };
            DampingOut::new(&fd.result, "fd", &p, Some(info))
        }
    };
    say!(
        "c = {} N*s/m, Q = {:.2} ({}), squeeze number {:.3e}",
        sci(out.damping_coeff_n_s_per_m),
        out.quality_factor,
        out.method,
        out.squeeze_number
    );
    for w in &out.warnings {
        say!("warning: {w}");
    }
    written.insert(0, run.write_json("damping.json", &out)?);
    Ok(written)
}

// --------------------------------------------------------------- offset

fn offset_rows(spec: &DeviceSpec, etas: &[f64]) -> Result<Vec<[f64; 3]>> {
    if etas.is_empty() {
        return Err(usage("no asymmetry fractions given"));
    }
    if let Some(e) = etas.iter().find(|e| !(0.0..=0.05).contains(*e)) {
        return Err(usage(format!("asymmetry fraction {e} is outside [0, 0.05]")));
    }
    let cases: Vec<_> = etas.iter().map(|&e| AsymmetryCase::com_shift(e)).collect();
    let e = offset_vs_asymmetry(spec, &cases, Variant::EightOne)?;
    let f = offset_vs_asymmetry(spec, &cases, Variant::FourOne)?;
    Ok(e.points
        .iter()
        .zip(&f.points)
        .map(|(a, b)| [a.eta, a.delta_c, b.delta_c])
        .collect())
}

fn write_offset(run: &Run, etas: &[f64]) -> Result<PathBuf> {
    let rows = offset_rows(&run.spec, etas)?;
    for r in &rows {
        say!("eta {:.4}: 8-1 {} F, 4-1 {} F", r[0], sci(r[1]), sci(r[2]));
    }
    run.write_csv("offset.csv", &["eta", "dC_8_1_F", "dC_4_1_F"], rows.iter().map(|r| nums(r)))
}

fn offset(run: &Run, a: &OffsetArgs) -> Result<Vec<PathBuf>> {
    let etas = a.eta.clone().unwrap_or_else(|| run.spec.offset_etas.clone());
    Ok(vec![write_offset(run, &etas)?])
}

// ------------------------------------------------------------- simulate

#[derive(Debug, Clone, Copy, PartialEq)]
enum RateSpec {
    Constant { dps: f64 },
    Sinusoid { dps: f64, hz: f64 },
}

fn number(s: &str, unit: &str) -> Option<f64> {
    let s = s.trim();
    s.strip_suffix(unit).unwrap_or(s).trim().parse().ok().filter(|v: &f64| v.is_finite())
}

fn parse_rate(raw: &str) -> Result<RateSpec> {
    let s = raw.trim().to_ascii_lowercase();
    let bad = || usage(format!("rate `{raw}`: expected const:<dps> or sin:<dps>@<hz>"));
    if let Some(v) = s.strip_prefix("const:") {
        return Ok(RateSpec::Constant {
            dps: number(v, "dps").ok_or_else(bad)?,
        });
    }
    if let Some(v) = s.strip_prefix("sin:") {
        let (amp, freq) = v.split_once('@').ok_or_else(bad)?;
        let dps = number(amp, "dps").ok_or_else(bad)?;
        let hz = number(freq, "hz").filter(|f| *f > 0.0).ok_or_else(bad)?;
        return Ok(RateSpec::Sinusoid { dps, hz });
    }
    Err(bad())
}

impl RateSpec {
    fn profile(&self) -> Profile {
        match *self {
            RateSpec::Constant { dps } => Profile::constant(dps / DEG_PER_RAD),
            RateSpec::Sinusoid { dps, hz } => Profile::sinusoid(dps / DEG_PER_RAD, hz),
        }
    }
}

struct Plant {
    model: LumpedGyroModel,
    chain: ReadoutChain,
    drive: DriveConfig,
}

fn plant(spec: &DeviceSpec) -> Result<Plant> {
    let model = build_lumped_model(spec, spec.calibration.as_ref())?;
    let drive = DriveConfig::at_resonance(&model, spec.drive.target_amplitude);
    Ok(Plant {
        model,
        chain: spec.readout,
        drive,
    })
}

#[derive(Serialize)]
struct ToneOut {
    rate_frequency_hz: f64,
    amplitude_v: f64,
    amplitude_dps: f64,
    spectrum_peak_hz: f64,
    margin_db: f64,
    analytic_margin_db: f64,
}

#[derive(Serialize)]
struct SimSummary {
    rate: String,
    duration_s: f64,
    settle_s: f64,
    dt_s: f64,
    samples: usize,
    noise: bool,
    drive_frequency_hz: f64,
    sense_frequency_hz: f64,
    scale_factor_v_per_dps: f64,
    mean_output_v: f64,
    rms_output_v: f64,
    mean_rate_dps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    tone: Option<ToneOut>,
}

struct SimRun {
    trace: SimTrace,
    demod: Vec<f64>,
    start: usize,
    spectrum: Spectrum,
    summary: SimSummary,
}

fn run_simulation(spec: &DeviceSpec, raw_rate: &str, duration: f64, settle: f64, noisy: bool) -> Result<SimRun> {
    let rate = parse_rate(raw_rate)?;
    if !(settle >= 0.0 && duration > settle) {
        return Err(usage("need 0 <= settle < duration"));
    }
    let Plant { model, chain, drive } = plant(spec)?;
    let dt = SimOptions::default_dt(&model);
    let noise = NoiseBudget::thermal(&model, &chain);
    let mut opts = SimOptions::new(dt, duration);
    if noisy {
        opts = opts.with_noise(noise, spec.seed);
    }
    let trace = simulate(&model, &drive, &rate.profile(), &AccelProfile::none(), &chain, &opts)?;
    let phase = chain.resolve_phase(&model, &drive);
    let demod = demodulate(&trace.v_out, trace.sample_rate(), drive.frequency, phase, &chain)?;
    let start = trace.index_at(settle);
    let record = &demod[start..];
    if record.len() < 16 {
        return Err(usage("record after settling is too short"));
    }
    let spectrum = power_spectrum(record, dt);
    let n = record.len() as f64;
    let mean = record.iter().sum::<f64>() / n;
    let rms = (record.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let sf = analytic_scale_factor(&model, &chain, &drive);
    let tone = match rate {
        RateSpec::Sinusoid { dps, hz } => {
            let amplitude_v = tone_amplitude(record, dt, trace.t[start], hz);
            let k = spectrum.bin(hz);
            let peak = (1..spectrum.psd.len())
                .max_by(|&a, &b| spectrum.psd[a].total_cmp(&spectrum.psd[b]))
                .unwrap_or(k);
            let hi = (spectrum.freqs[spectrum.freqs.len() - 1]).min(hz.max(2.0) * 15.0);
            let floor = spectrum.floor(spectrum.resolution.max(0.2 * hz), hi, &[k]);
            let noise_budget = if noisy { noise } else { NoiseBudget::ZERO };
            Some(ToneOut {
                rate_frequency_hz: hz,
                amplitude_v,
                amplitude_dps: amplitude_v / (sf.abs() * chain.lpf_gain(hz)),
                spectrum_peak_hz: spectrum.freqs[peak],
                margin_db: 10.0 * (spectrum.psd[k] / floor).log10(),
                analytic_margin_db: tone_margin_db(&model, &chain, &noise_budget, &drive, dps, hz, spectrum.resolution),
            })
        }
        RateSpec::Constant { .. } => None,
    };
    let summary = SimSummary {
        rate: raw_rate.to_string(),
        duration_s: duration,
        settle_s: settle,
        dt_s: dt,
        samples: trace.len(),
        noise: noisy,
        drive_frequency_hz: drive.frequency,
        sense_frequency_hz: model.f_sense(),
        scale_factor_v_per_dps: sf,
        mean_output_v: mean,
        rms_output_v: rms,
        mean_rate_dps: mean / sf,
        tone,
    };
    Ok(SimRun {
        trace,
        demod,
        start,
        spectrum,
        summary,
    })
}

/// One demodulated sample per drive period.
const DEMOD_DECIMATION: usize = 64;

fn write_simulation(run: &Run, sim: &SimRun, full_trace: bool, spectrum_max_hz: f64) -> Result<Vec<PathBuf>> {
    let mut written = vec![run.write_json("summary.json", &sim.summary)?];
    let s = &sim.spectrum;
    written.push(run.write_csv(
        "spectrum.csv",
        &["frequency_Hz", "psd_V2_per_Hz", "psd_dB_V2_per_Hz"],
        s.freqs
            .iter()
            .zip(&s.psd)
            .zip(s.db())
            .take_while(|((f, _), _)| **f <= spectrum_max_hz)
            .map(|((f, p), d)| nums(&[*f, *p, d])),
    )?);
    let t = &sim.trace.t;
    written.push(run.write_csv(
        "demod.csv",
        &["t_s", "v_demod_V"],
        (sim.start..sim.demod.len())
            .step_by(DEMOD_DECIMATION)
            .map(|i| nums(&[t[i], sim.demod[i]])),
    )?);
    if full_trace {
        let mut w = run.create_raw("trace.csv")?;
        sim.trace.write_csv(&mut w, &run.manifest.header_lines())?;
        w.flush()?;
        written.push(run.path("trace.csv"));
    }
    Ok(written)
}

fn simulate_cmd(run: &Run, a: &SimulateArgs) -> Result<Vec<PathBuf>> {
    let sim = run_simulation(&run.spec, &a.rate, a.duration, a.settle, !a.no_noise)?;
    let s = &sim.summary;
    say!(
        "mean output {} V ({:.4} deg/s), rms {} V",
        sci(s.mean_output_v),
        s.mean_rate_dps,
        sci(s.rms_output_v)
    );
    if let Some(t) = &s.tone {
        say!(
            "tone {:.3} Hz: {:.3} deg/s, spectrum peak {:.3} Hz, margin {:.1} dB (analytic {:.1} dB)",
            t.rate_frequency_hz, t.amplitude_dps, t.spectrum_peak_hz, t.margin_db, t.analytic_margin_db
        );
    }
    write_simulation(run, &sim, a.trace, a.spectrum_max_hz)
}

// ---------------------------------------------------------------- sweep

fn sweep_key(param: &str) -> &str {
    match param {
        "pitch" => "perforation.pitch_um",
        "hole" => "perforation.hole_side_um",
        "gap" => "capacitor.gap_um",
        other => other,
    }
}

fn sweep_values(a: &SweepArgs) -> Result<Vec<f64>> {
    let values = match (&a.values, &a.range) {
        (Some(v), None) => v.clone(),
        (None, Some(r)) => {
            let parts: Vec<&str> = r.split(':').collect();
            let bad = || usage(format!("range `{r}`: expected start:stop:count"));
            let [lo, hi, n] = parts.as_slice() else { return Err(bad()) };
            let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
            let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
            let n: usize = n.trim().parse().map_err(|_| bad())?;
            match n {
                0 => Vec::new(),
                1 => vec![lo],
                _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
            }
        }
        _ => return Err(usage("sweep needs one of --values or --range")),
    };
    if values.is_empty() {
        return Err(usage("sweep range is empty"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(usage("sweep values must be finite"));
    }
    Ok(values)
}

fn toml_number(v: f64) -> String {
    // `{:?}` keeps a decimal point, so TOML reads a float.
    format!("{v:?}")
}

fn sweep_point(run: &Run, key: &str, v: f64) -> Result<[f64; 5]> {
    let mut overrides = run.overrides.clone();
    overrides.push((key.to_string(), toml_number(v)));
    let spec = load_spec(&run.text, &overrides)?;
    let d = cell_damping_modified_reynolds(&SqueezeFilmParams::from_device(&spec)?)?;
    let c = compare_configs(&spec)?;
    Ok([
        d.damping_coeff,
        d.quality_factor,
        c.eight_one.modal.frequencies[c.eight_one.usable.index],
        c.eight_one.usable.gap_hz,
        c.four_one.usable.gap_hz,
    ])
}

fn sweep(run: &Run, a: &SweepArgs) -> Result<Vec<PathBuf>> {
    let key = sweep_key(&a.param);
    let values = sweep_values(a)?;
    let points: Vec<[f64; 5]> = if a.serial {
        values.iter().map(|&v| sweep_point(run, key, v)).collect::<Result<_>>()?
    } else {
        values.par_iter().map(|&v| sweep_point(run, key, v)).collect::<Result<_>>()?
    };
    for (v, p) in values.iter().zip(&points) {
        say!("{key} = {v}: Q = {:.2}, gap 8-1 {:.1} Hz, gap 4-1 {:.1} Hz", p[1], p[3], p[4]);
    }
    let rows = values.iter().zip(&points).map(|(&v, p)| {
        let mut row = vec![sci(v)];
        row.extend(nums(p));
        row
    });
    Ok(vec![run.write_csv(
        "sweep.csv",
        &[key, "c_N_s_per_m", "Q", "f_usable_8_1_Hz", "gap_8_1_Hz", "gap_4_1_Hz"],
        rows,
    )?])
}

// --------------------------------------------------------------- report

#[derive(Serialize)]
struct ReportOut {
    usable_mode_8_1: usize,
    usable_mode_4_1: usize,
    gap_8_1_hz: f64,
    gap_4_1_hz: f64,
    gap_ratio: f64,
    sense_q_cell: f64,
    f_drive_hz: f64,
    f_sense_hz: f64,
    mismatch_hz: f64,
    rate_bandwidth_hz: f64,
    scale_factor_v_per_dps: f64,
    nonlinearity_pct_fs: f64,
    noise_equivalent_rate_dps_1hz: f64,
    tone_margin_db: f64,
    analytic_tone_margin_db: f64,
    common_mode_rejection_db: f64,
    coriolis_doubling: f64,
}

fn report(run: &Run) -> Result<Vec<PathBuf>> {
    let spec = &run.spec;
    let mut written = modal(
        run,
        &ModalArgs {
            variant: VariantArg::Both,
            matrices: false,
        },
    )?;
    let cmp = compare_configs(spec)?;
    let film = SqueezeFilmParams::from_device(spec)?;
    let cell = cell_damping_modified_reynolds(&film)?;
    written.extend(damping(
        run,
        &DampingArgs {
            method: MethodArg::Cell,
            grid: 8,
            pressure_csv: false,
        },
    )?);
    written.push(write_offset(run, &spec.offset_etas)?);

    let Plant { model, chain, drive } = plant(spec)?;
    let span = 5.0 * model.f_sense() / model.q_sense();
    let (lo, hi) = (model.f_drive().min(model.f_sense()) - span, model.f_drive().max(model.f_sense()) + span);
    let bode = frequency_response(&model, lo, hi, 2001)?;
    written.push(run.write_csv(
        "resonance.csv",
        &["frequency_Hz", "drive_mag_m_per_N", "drive_phase_rad", "sense_mag_m_per_N", "sense_phase_rad"],
        (0..bode.freqs.len()).map(|i| {
            nums(&[bode.freqs[i], bode.drive_mag[i], bode.drive_phase[i], bode.sense_mag[i], bode.sense_phase[i]])
        }),
    )?);

    // Drive excitation and picked-off output over a few drive periods.
    let periods = 8.0;
    let tr = simulate(
        &model,
        &drive,
        &Profile::constant(100.0 / DEG_PER_RAD),
        &AccelProfile::none(),
        &chain,
        &SimOptions::new(SimOptions::default_dt(&model), periods / drive.frequency),
    )?;
    let w = 2.0 * std::f64::consts::PI * drive.frequency;
    written.push(run.write_csv(
        "drive_response.csv",
        &["t_s", "drive_force_N", "y1_m", "z1_m", "v_out_V"],
        (0..tr.len()).map(|i| {
            let f = drive.polarity * drive.force_amplitude * (w * tr.t[i]).cos();
            nums(&[tr.t[i], f, tr.y1[i], tr.z1[i], tr.v_out[i]])
        }),
    )?);

    let sf = scale_factor(&model, &chain, &drive)?;
    written.push(run.write_csv(
        "scale_factor.csv",
        &["rate_deg_per_s", "output_V", "fit_V"],
        sf.points.iter().map(|&(r, v)| nums(&[r, v, sf.slope * r + sf.intercept])),
    )?);

    let sim = run_simulation(spec, "sin:10dps@2hz", 1.25, 0.25, true)?;
    written.extend(write_simulation(run, &sim, false, 500.0)?);
    let tone = sim.summary.tone.as_ref().expect("sinusoidal rate has a tone");
    let noise = NoiseBudget::thermal(&model, &chain);
    let ner = noise_equivalent_rate(&model, &chain, &noise, &drive, 1.0)?;
    let cmr = common_mode_rejection(&model, &chain, STANDARD_GRAVITY, 0.0)?;

    let out = ReportOut {
        usable_mode_8_1: cmp.eight_one.usable.mode_number(),
        usable_mode_4_1: cmp.four_one.usable.mode_number(),
        gap_8_1_hz: cmp.eight_one.usable.gap_hz,
        gap_4_1_hz: cmp.four_one.usable.gap_hz,
        gap_ratio: cmp.gap_ratio,
        sense_q_cell: cell.quality_factor,
        f_drive_hz: model.f_drive(),
        f_sense_hz: model.f_sense(),
        mismatch_hz: model.mismatch_hz(),
        rate_bandwidth_hz: rate_bandwidth(&model, &chain)?,
        scale_factor_v_per_dps: sf.slope,
        nonlinearity_pct_fs: sf.nonlinearity_pct_fs,
        noise_equivalent_rate_dps_1hz: ner.rate_rms_dps,
        tone_margin_db: tone.margin_db,
        analytic_tone_margin_db: tone.analytic_margin_db,
        common_mode_rejection_db: cmr.rejection_db,
        coriolis_doubling: cmr.coriolis_doubling,
    };
    say!(
        "f_d {:.1} Hz, f_s {:.1} Hz, bandwidth {:.2} Hz, SF {:.4} mV/(deg/s), NER {:.3} deg/s, margin {:.1} dB",
        out.f_drive_hz,
        out.f_sense_hz,
        out.rate_bandwidth_hz,
        1e3 * out.scale_factor_v_per_dps,
        out.noise_equivalent_rate_dps_1hz,
        out.tone_margin_db
    );
    written.push(run.write_json("report.json", &out)?);
    Ok(written)
}
