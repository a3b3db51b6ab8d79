//! Lumped two-frame tuning-fork model: anti-phase drive along y, Coriolis
//! coupling into vertical sense motion, fixed-step RK4 integration.
//!
//! Sense coordinate `z` is the approach of each proofmass towards its glass
//! electrode. Frame 2 carries the optional mismatch factors.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::damping::{cell_damping_modified_reynolds, SqueezeFilmParams};
use crate::error::{invalid, Error, Result};
use crate::geometry::{proofmass_mass, DeviceSpec};
use crate::modal::analyze_variant;
use crate::readout::{NoiseBudget, ReadoutChain};
use crate::sensing::{delta_c, CapacitorSpec};
use crate::suspension::Dof;

/// Drive-side design values used by the from-physics path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriveDesign {
    /// Hz
    pub frequency: f64,
    pub quality_factor: f64,
    /// Moving drive-frame mass in addition to the proofmass (kg).
    pub frame_mass: f64,
    /// Drive displacement the actuator force is sized for (m).
    pub target_amplitude: f64,
}

impl DriveDesign {
    pub fn validate(&self) -> Result<()> {
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(invalid("DriveDesign", "frequency must be finite and > 0"));
        }
        if !(self.quality_factor > 0.0 && self.quality_factor.is_finite()) {
            return Err(invalid("DriveDesign", "quality_factor must be finite and > 0"));
        }
        if !(self.frame_mass >= 0.0) {
            return Err(invalid("DriveDesign", "frame_mass must be >= 0"));
        }
        if !(self.target_amplitude > 0.0) {
            return Err(invalid("DriveDesign", "target_amplitude must be > 0"));
        }
        Ok(())
    }
}

/// Measured resonances the model is rescaled to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub f_drive: f64,
    pub f_sense: f64,
    pub q_drive: f64,
    pub q_sense: f64,
}

impl Calibration {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("f_drive", self.f_drive),
            ("f_sense", self.f_sense),
            ("q_drive", self.q_drive),
            ("q_sense", self.q_sense),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Calibration(format!("{name} = {v} must be finite and > 0")));
            }
        }
        Ok(())
    }
}

/// Fractional parameter differences of frame 2 relative to frame 1.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct FrameMismatch {
    pub drive_stiffness: f64,
    pub sense_stiffness: f64,
    pub sense_damping: f64,
    pub sense_mass: f64,
}

impl FrameMismatch {
    pub const NONE: FrameMismatch = FrameMismatch {
        drive_stiffness: 0.0,
        sense_stiffness: 0.0,
        sense_damping: 0.0,
        sense_mass: 0.0,
    };

    pub fn sense_stiffness(fraction: f64) -> Self {
        FrameMismatch {
            sense_stiffness: fraction,
            ..Self::NONE
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameParams {
    pub m_d: f64,
    pub k_d: f64,
    pub c_d: f64,
    pub m_s: f64,
    pub k_s: f64,
    pub c_s: f64,
}

fn natural_frequency(k: f64, m: f64) -> f64 {
    (k / m).sqrt() / (2.0 * PI)
}

fn stiffness_for(f: f64, m: f64) -> f64 {
    m * (2.0 * PI * f).powi(2)
}

fn damping_for(k: f64, m: f64, q: f64) -> f64 {
    (k * m).sqrt() / q
}

/// `1/(k − mω² + jωc)` in m/N.
fn receptance(k: f64, m: f64, c: f64, f: f64) -> Complex64 {
    let w = 2.0 * PI * f;
    Complex64::new(k - m * w * w, w * c).inv()
}

impl FrameParams {
    pub fn f_drive(&self) -> f64 {
        natural_frequency(self.k_d, self.m_d)
    }
    pub fn f_sense(&self) -> f64 {
        natural_frequency(self.k_s, self.m_s)
    }
    pub fn q_drive(&self) -> f64 {
        (self.k_d * self.m_d).sqrt() / self.c_d
    }
    pub fn q_sense(&self) -> f64 {
        (self.k_s * self.m_s).sqrt() / self.c_s
    }
    pub fn drive_receptance(&self, f: f64) -> Complex64 {
        receptance(self.k_d, self.m_d, self.c_d, f)
    }
    pub fn sense_receptance(&self, f: f64) -> Complex64 {
        receptance(self.k_s, self.m_s, self.c_s, f)
    }

    fn validate(&self) -> Result<()> {
        let all = [self.m_d, self.k_d, self.c_d, self.m_s, self.k_s, self.c_s];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("LumpedGyroModel", "masses, stiffnesses and damping must be finite and > 0"));
        }
        Ok(())
    }

    fn with_mismatch(&self, mm: &FrameMismatch) -> FrameParams {
        FrameParams {
            k_d: self.k_d * (1.0 + mm.drive_stiffness),
            k_s: self.k_s * (1.0 + mm.sense_stiffness),
            c_s: self.c_s * (1.0 + mm.sense_damping),
            m_s: self.m_s * (1.0 + mm.sense_mass),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "path")]
pub enum Provenance {
    /// Stiffness from the suspension, sense damping from the squeeze film.
    Physics,
    /// Stiffness and damping rescaled to measured resonances.
    Calibrated(Calibration),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LumpedGyroModel {
    /// Frame 1 is nominal; frame 2 carries the mismatch.
    pub frames: [FrameParams; 2],
    /// Drive-to-sense stiffness coupling (N/m).
    pub drive_sense_coupling: f64,
    pub capacitor: CapacitorSpec,
    pub temperature: f64,
    pub provenance: Provenance,
}

impl LumpedGyroModel {
    pub fn symmetric(frame: FrameParams, capacitor: CapacitorSpec, temperature: f64, provenance: Provenance) -> Self {
        LumpedGyroModel {
            frames: [frame, frame],
            drive_sense_coupling: 0.0,
            capacitor,
            temperature,
            provenance,
        }
    }

    pub fn nominal(&self) -> &FrameParams {
        &self.frames[0]
    }
    pub fn f_drive(&self) -> f64 {
        self.frames[0].f_drive()
    }
    pub fn f_sense(&self) -> f64 {
        self.frames[0].f_sense()
    }
    pub fn q_drive(&self) -> f64 {
        self.frames[0].q_drive()
    }
    pub fn q_sense(&self) -> f64 {
        self.frames[0].q_sense()
    }
    pub fn mismatch_hz(&self) -> f64 {
        self.f_sense() - self.f_drive()
    }

    /// Both frames equal to frame 1, then frame 2 perturbed.
    pub fn with_frame_mismatch(&self, mm: &FrameMismatch) -> Self {
        let mut out = self.clone();
        out.frames[1] = self.frames[0].with_mismatch(mm);
        out
    }

    /// Re-tune the sense mode of both frames, keeping mass and Q.
    pub fn with_sense_frequency(&self, f: f64) -> Self {
        let mut out = self.clone();
        for fr in &mut out.frames {
            let q = fr.q_sense();
            fr.k_s = stiffness_for(f, fr.m_s);
            fr.c_s = damping_for(fr.k_s, fr.m_s, q);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        for f in &self.frames {
            f.validate()?;
        }
        if !self.drive_sense_coupling.is_finite() {
            return Err(invalid("LumpedGyroModel", "drive_sense_coupling must be finite"));
        }
        Ok(())
    }
}

/// Builds the lumped model. Without calibration the sense mode is the modal
/// Tz mode and its damping is the squeeze film; with calibration stiffness
/// and damping are rescaled so the resonances and Q equal the measured ones.
pub fn build_lumped_model(spec: &DeviceSpec, calibration: Option<&Calibration>) -> Result<LumpedGyroModel> {
    let m_s = proofmass_mass(&spec.plate, &spec.material);
    let m_d = m_s + spec.drive.frame_mass;
    let (frame, provenance) = match calibration {
        Some(cal) => {
            cal.validate()?;
            let k_d = stiffness_for(cal.f_drive, m_d);
            let k_s = stiffness_for(cal.f_sense, m_s);
            if !(k_d > 0.0 && k_s > 0.0) {
                return Err(Error::Calibration("implied stiffness is not positive".into()));
            }
            (
                FrameParams {
                    m_d,
                    k_d,
                    c_d: damping_for(k_d, m_d, cal.q_drive),
                    m_s,
                    k_s,
                    c_s: damping_for(k_s, m_s, cal.q_sense),
                },
                Provenance::Calibrated(*cal),
            )
        }
        None => {
            spec.drive.validate()?;
            let report = analyze_variant(spec, spec.suspension.variant)?;
            let tz = report
                .modal
                .labels
                .iter()
                .position(|l| l.is(Dof::Tz))
                .ok_or_else(|| Error::Classification("no vertical translation mode".into()))?;
            let k_s = stiffness_for(report.modal.frequencies[tz], m_s);
            let film = SqueezeFilmParams::from_device(spec)?;
            let c_s = cell_damping_modified_reynolds(&film)?.damping_coeff;
            let k_d = stiffness_for(spec.drive.frequency, m_d);
            (
                FrameParams {
                    m_d,
                    k_d,
                    c_d: damping_for(k_d, m_d, spec.drive.quality_factor),
                    m_s,
                    k_s,
                    c_s,
                },
                Provenance::Physics,
            )
        }
    };
    let mut model = LumpedGyroModel::symmetric(frame, spec.capacitor, spec.env.temperature, provenance)
        .with_frame_mismatch(&spec.mismatch);
    model.drive_sense_coupling = spec.drive_sense_coupling;
    model.validate()?;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveMode {
    AntiPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriveConfig {
    /// N
    pub force_amplitude: f64,
    /// Hz
    pub frequency: f64,
    pub mode: DriveMode,
    /// Sign applied to frame 1; frame 2 gets the opposite sign.
    pub polarity: f64,
    /// Start the drive at its analytic steady state instead of at rest.
    pub start_steady: bool,
}

impl DriveConfig {
    /// Force sized so the nominal frame reaches `amplitude` at `frequency`.
    pub fn for_amplitude(model: &LumpedGyroModel, frequency: f64, amplitude: f64) -> Self {
        DriveConfig {
            force_amplitude: amplitude / model.nominal().drive_receptance(frequency).norm(),
            frequency,
            mode: DriveMode::AntiPhase,
            polarity: 1.0,
            start_steady: true,
        }
    }

    /// Drive at the drive resonance with the designed amplitude.
    pub fn at_resonance(model: &LumpedGyroModel, amplitude: f64) -> Self {
        Self::for_amplitude(model, model.f_drive(), amplitude)
    }

    pub fn off(frequency: f64) -> Self {
        DriveConfig {
            force_amplitude: 0.0,
            frequency,
            mode: DriveMode::AntiPhase,
            polarity: 1.0,
            start_steady: false,
        }
    }

    pub fn flipped(mut self) -> Self {
        self.polarity = -self.polarity;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.force_amplitude >= 0.0 && self.force_amplitude.is_finite()) {
            return Err(invalid("DriveConfig", "force_amplitude must be finite and >= 0"));
        }
        if !(self.frequency > 0.0) {
            return Err(invalid("DriveConfig", "frequency must be > 0"));
        }
        if self.polarity.abs() != 1.0 {
            return Err(invalid("DriveConfig", "polarity must be +1 or -1"));
        }
        Ok(())
    }

    fn sign(&self, frame: usize) -> f64 {
        match (self.mode, frame) {
            (DriveMode::AntiPhase, 0) => self.polarity,
            (DriveMode::AntiPhase, _) => -self.polarity,
        }
    }

    /// Steady-state drive displacement phasor of a frame.
    pub fn displacement_phasor(&self, model: &LumpedGyroModel, frame: usize) -> Complex64 {
        self.force_amplitude * self.sign(frame) * model.frames[frame].drive_receptance(self.frequency)
    }
}

/// Scalar time function on the simulation horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Profile {
    Constant { value: f64 },
    Sinusoid { amplitude: f64, frequency: f64, phase: f64 },
    /// Linear interpolation between `(t, value)` knots; held beyond the ends.
    Piecewise { knots: Vec<(f64, f64)> },
}

impl Profile {
    pub const ZERO: Profile = Profile::Constant { value: 0.0 };

    pub fn constant(value: f64) -> Self {
        Profile::Constant { value }
    }

    pub fn sinusoid(amplitude: f64, frequency: f64) -> Self {
        Profile::Sinusoid {
            amplitude,
            frequency,
            phase: 0.0,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => amplitude * (2.0 * PI * frequency * t + phase).cos(),
            Profile::Piecewise { knots } => {
                let Some(first) = knots.first() else { return 0.0 };
                if t <= first.0 {
                    return first.1;
                }
                for w in knots.windows(2) {
                    let ((t0, v0), (t1, v1)) = (w[0], w[1]);
                    if t <= t1 {
                        return if t1 > t0 { v0 + (v1 - v0) * (t - t0) / (t1 - t0) } else { v1 };
                    }
                }
                knots[knots.len() - 1].1
            }
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        match self.clone() {
            Profile::Constant { value } => Profile::Constant { value: value * s },
            Profile::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => Profile::Sinusoid {
                amplitude: amplitude * s,
                frequency,
                phase,
            },
            Profile::Piecewise { knots } => Profile::Piecewise {
                knots: knots.into_iter().map(|(t, v)| (t, v * s)).collect(),
            },
        }
    }

    fn validate(&self, what: &'static str) -> Result<()> {
        let ok = match self {
            Profile::Constant { value } => value.is_finite(),
            Profile::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => amplitude.is_finite() && frequency.is_finite() && phase.is_finite(),
            Profile::Piecewise { knots } => {
                knots.iter().all(|(t, v)| t.is_finite() && v.is_finite()) && knots.windows(2).all(|w| w[0].0 <= w[1].0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(what, "profile must be finite with ordered knots"))
        }
    }
}

/// Angular rate about x (rad/s).
pub type RateProfile = Profile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AccelAxis {
    /// Along the drive axis.
    Y,
    /// Along the sense axis.
    Z,
}

/// Linear acceleration common to both frames (m/s²).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccelProfile {
    pub axis: AccelAxis,
    pub profile: Profile,
}

impl AccelProfile {
    pub fn none() -> Self {
        AccelProfile {
            axis: AccelAxis::Z,
            profile: Profile::ZERO,
        }
    }

    pub fn along_z(profile: Profile) -> Self {
        AccelProfile {
            axis: AccelAxis::Z,
            profile,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimOptions {
    pub dt: f64,
    pub horizon: f64,
    pub noise: Option<NoiseBudget>,
    pub seed: u64,
    /// `[y1, ẏ1, y2, ẏ2, z1, ż1, z2, ż2]`; overrides the steady drive start.
    pub initial_state: Option<[f64; 8]>,
}

impl SimOptions {
    /// 64 steps per drive period.
    pub fn default_dt(model: &LumpedGyroModel) -> f64 {
        1.0 / (64.0 * model.f_drive())
    }

    pub fn new(dt: f64, horizon: f64) -> Self {
        SimOptions {
            dt,
            horizon,
            noise: None,
            seed: 0,
            initial_state: None,
        }
    }

    pub fn with_noise(mut self, noise: NoiseBudget, seed: u64) -> Self {
        self.noise = Some(noise);
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTrace {
    pub dt: f64,
    pub integrator: &'static str,
    pub seed: u64,
    pub drive_frequency: f64,
    pub t: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    /// ΔC(frame 1) − ΔC(frame 2) (F).
    pub delta_c_diff: Vec<f64>,
    /// Pre-demodulation voltage (V).
    pub v_out: Vec<f64>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.dt
    }

    /// Index of the first sample at or after `t`.
    pub fn index_at(&self, t: f64) -> usize {
        ((t / self.dt).ceil() as usize).min(self.len())
    }

    /// CSV with `#`-prefixed header lines, 9 significant digits.
    pub fn write_csv<W: Write>(&self, w: &mut W, header: &[String]) -> std::io::Result<()> {
        for h in header {
            writeln!(w, "# {h}")?;
        }
        writeln!(w, "# dt_s={:.8e} integrator={} seed={}", self.dt, self.integrator, self.seed)?;
        writeln!(w, "t_s,y1_m,y2_m,z1_m,z2_m,delta_c_diff_F,v_out_V")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
                self.t[i], self.y1[i], self.y2[i], self.z1[i], self.z2[i], self.delta_c_diff[i], self.v_out[i]
            )?;
        }
        Ok(())
    }
}

struct Forcing<'a> {
    model: &'a LumpedGyroModel,
    drive: &'a DriveConfig,
    rate: &'a RateProfile,
    accel: &'a AccelProfile,
}

impl Forcing<'_> {
    fn deriv(&self, t: f64, s: &[f64; 8], w: &[f64; 2]) -> [f64; 8] {
        let omega = self.rate.eval(t);
        let a = self.accel.profile.eval(t);
        let (a_y, a_z) = match self.accel.axis {
            AccelAxis::Y => (a, 0.0),
            AccelAxis::Z => (0.0, a),
        };
        let carrier = self.drive.force_amplitude * (2.0 * PI * self.drive.frequency * t).cos();
        let kc = self.model.drive_sense_coupling;
        let mut d = [0.0; 8];
        for (i, fr) in self.model.frames.iter().enumerate() {
            let (y, yd, z, zd) = (s[2 * i], s[2 * i + 1], s[4 + 2 * i], s[5 + 2 * i]);
            let force = self.drive.sign(i) * carrier + fr.m_d * a_y;
            d[2 * i] = yd;
            d[2 * i + 1] = (force - fr.c_d * yd - fr.k_d * y) / fr.m_d;
            d[4 + 2 * i] = zd;
            d[5 + 2 * i] =
                (-2.0 * fr.m_s * omega * yd + fr.m_s * a_z + w[i] - kc * y - fr.c_s * zd - fr.k_s * z) / fr.m_s;
        }
        d
    }
}

fn rk4_step(f: &Forcing, t: f64, dt: f64, s: &[f64; 8], w: &[f64; 2]) -> [f64; 8] {
    let add = |a: &[f64; 8], b: &[f64; 8], h: f64| {
        let mut o = *a;
        for k in 0..8 {
            o[k] += h * b[k];
        }
        o
    };
    let k1 = f.deriv(t, s, w);
    let k2 = f.deriv(t + 0.5 * dt, &add(s, &k1, 0.5 * dt), w);
    let k3 = f.deriv(t + 0.5 * dt, &add(s, &k2, 0.5 * dt), w);
    let k4 = f.deriv(t + dt, &add(s, &k3, dt), w);
    let mut o = *s;
    for k in 0..8 {
        o[k] += dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
    }
    o
}

/// Mechanical energy of both frames (J), coupling excluded.
pub fn mechanical_energy(model: &LumpedGyroModel, s: &[f64; 8]) -> f64 {
    model
        .frames
        .iter()
        .enumerate()
        .map(|(i, fr)| {
            let (y, yd, z, zd) = (s[2 * i], s[2 * i + 1], s[4 + 2 * i], s[5 + 2 * i]);
            0.5 * (fr.m_d * yd * yd + fr.k_d * y * y + fr.m_s * zd * zd + fr.k_s * z * z)
        })
        .sum()
}

/// Integrates both frames, sampling every step.
pub fn simulate(
    model: &LumpedGyroModel,
    drive: &DriveConfig,
    rate: &RateProfile,
    accel: &AccelProfile,
    chain: &ReadoutChain,
    opts: &SimOptions,
) -> Result<SimTrace> {
    model.validate()?;
    drive.validate()?;
    rate.validate("RateProfile")?;
    accel.profile.validate("AccelProfile")?;
    let dt = opts.dt;
    let f_max = model.frames.iter().map(|f| f.f_sense().max(f.f_drive())).fold(0.0, f64::max);
    if !(dt > 0.0 && dt <= 1.0 / (50.0 * f_max) * (1.0 + 1e-12)) {
        return Err(invalid("simulate", format!("dt must be in (0, 1/(50·{f_max:.1} Hz)]")));
    }
    if !(opts.horizon > 0.0 && opts.horizon.is_finite()) {
        return Err(invalid("simulate", "horizon must be > 0"));
    }
    let steps = (opts.horizon / dt).round() as usize;

    let mut state = match opts.initial_state {
        Some(s) => s,
        None => {
            let mut s = [0.0; 8];
            if drive.start_steady {
                let w = 2.0 * PI * drive.frequency;
                for i in 0..2 {
                    let y = drive.displacement_phasor(model, i);
                    s[2 * i] = y.re;
                    s[2 * i + 1] = (Complex64::i() * w * y).re;
                }
            }
            s
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (force_sigma, volt_sigma) = match &opts.noise {
        Some(n) => (n.brownian_force_psd / (2.0 * dt).sqrt(), n.electronic_noise_psd / (2.0 * dt).sqrt()),
        None => (0.0, 0.0),
    };
    let noisy = opts.noise.is_some();

    let forcing = Forcing {
        model,
        drive,
        rate,
        accel,
    };
    let cap = &model.capacitor;
    let mut trace = SimTrace {
        dt,
        integrator: "rk4",
        seed: opts.seed,
        drive_frequency: drive.frequency,
        t: Vec::with_capacity(steps + 1),
        y1: Vec::with_capacity(steps + 1),
        y2: Vec::with_capacity(steps + 1),
        z1: Vec::with_capacity(steps + 1),
        z2: Vec::with_capacity(steps + 1),
        delta_c_diff: Vec::with_capacity(steps + 1),
        v_out: Vec::with_capacity(steps + 1),
    };
    let mut gauss = |sigma: f64| -> f64 {
        if noisy {
            let g: f64 = StandardNormal.sample(&mut rng);
            sigma * g
        } else {
            0.0
        }
    };
    for n in 0..=steps {
        let t = n as f64 * dt;
        let dc = delta_c(cap, state[4], 0.0, 0.0)? - delta_c(cap, state[6], 0.0, 0.0)?;
        let w = [gauss(force_sigma), gauss(force_sigma)];
        let e = gauss(volt_sigma);
        trace.t.push(t);
        trace.y1.push(state[0]);
        trace.y2.push(state[2]);
        trace.z1.push(state[4]);
        trace.z2.push(state[6]);
        trace.delta_c_diff.push(dc);
        trace.v_out.push(chain.c2v_gain * dc + e);
        if n == steps {
            break;
        }
        state = rk4_step(&forcing, t, dt, &state, &w);
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration(format!("non-finite state at t = {:.6e} s", t + dt)));
        }
    }
    Ok(trace)
}

/// Free response from an initial state, returning the energy after each step.
pub fn free_decay_energy(model: &LumpedGyroModel, initial: [f64; 8], dt: f64, steps: usize) -> Vec<f64> {
    let drive = DriveConfig::off(model.f_drive());
    let rate = Profile::ZERO;
    let accel = AccelProfile::none();
    let forcing = Forcing {
        model,
        drive: &drive,
        rate: &rate,
        accel: &accel,
    };
    let mut s = initial;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(mechanical_energy(model, &s));
    for n in 0..steps {
        s = rk4_step(&forcing, n as f64 * dt, dt, &s, &[0.0, 0.0]);
        out.push(mechanical_energy(model, &s));
    }
    out
}

/// Steady-state sense amplitude of one frame under constant rate `omega`:
/// `2 Ω ω_d Y |H_s(ω_d)|`, H_s per unit acceleration.
pub fn coriolis_amplitude(model: &LumpedGyroModel, drive: &DriveConfig, omega: f64) -> f64 {
    let fr = model.nominal();
    let y = drive.displacement_phasor(model, 0).norm();
    2.0 * omega.abs() * 2.0 * PI * drive.frequency * y * fr.m_s * fr.sense_receptance(drive.frequency).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Drive,
    Sense,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BodeData {
    pub freqs: Vec<f64>,
    /// m/N
    pub drive_mag: Vec<f64>,
    /// rad
    pub drive_phase: Vec<f64>,
    pub sense_mag: Vec<f64>,
    pub sense_phase: Vec<f64>,
}

impl BodeData {
    fn mag(&self, mode: ModeKind) -> &[f64] {
        match mode {
            ModeKind::Drive => &self.drive_mag,
            ModeKind::Sense => &self.sense_mag,
        }
    }

    pub fn peak_frequency(&self, mode: ModeKind) -> f64 {
        let m = self.mag(mode);
        let i = (0..m.len()).max_by(|&a, &b| m[a].total_cmp(&m[b])).unwrap_or(0);
        self.freqs[i]
    }

    /// Full width between the −3 dB points, linearly interpolated on the grid.
    pub fn half_power_width(&self, mode: ModeKind) -> Option<f64> {
        let m = self.mag(mode);
        let ip = (0..m.len()).max_by(|&a, &b| m[a].total_cmp(&m[b]))?;
        let level = m[ip] / 2f64.sqrt();
        let cross = |i: usize, j: usize| {
            let (f0, f1, m0, m1) = (self.freqs[i], self.freqs[j], m[i], m[j]);
            f0 + (level - m0) * (f1 - f0) / (m1 - m0)
        };
        let lo = (0..ip).rev().find(|&i| m[i] < level).map(|i| cross(i, i + 1))?;
        let hi = (ip + 1..m.len()).find(|&i| m[i] < level).map(|i| cross(i - 1, i))?;
        Some(hi - lo)
    }
}

/// Analytic single-DOF responses of the nominal frame on a linear grid.
pub fn frequency_response(model: &LumpedGyroModel, f_lo: f64, f_hi: f64, n_points: usize) -> Result<BodeData> {
    if !(f_lo < f_hi) || n_points < 2 {
        return Err(invalid("frequency_response", "need f_lo < f_hi and at least 2 points"));
    }
    let fr = model.nominal();
    let freqs: Vec<f64> = (0..n_points)
        .map(|i| f_lo + (f_hi - f_lo) * i as f64 / (n_points - 1) as f64)
        .collect();
    let d: Vec<Complex64> = freqs.iter().map(|&f| fr.drive_receptance(f)).collect();
    let s: Vec<Complex64> = freqs.iter().map(|&f| fr.sense_receptance(f)).collect();
    Ok(BodeData {
        drive_mag: d.iter().map(|h| h.norm()).collect(),
        drive_phase: d.iter().map(|h| h.arg()).collect(),
        sense_mag: s.iter().map(|h| h.norm()).collect(),
        sense_phase: s.iter().map(|h| h.arg()).collect(),
        freqs,
    })
}

/// Demodulated output amplitude per unit rate amplitude (V per rad/s) for a
/// sinusoidal rate at `f_m`, linearised about rest.
pub fn rate_transfer(model: &LumpedGyroModel, chain: &ReadoutChain, drive: &DriveConfig, f_m: f64) -> f64 {
    let phi = chain.resolve_phase(model, drive);
    let fr = model.nominal();
    let w = 2.0 * PI * drive.frequency;
    let lever = chain.c2v_gain * model.capacitor.nominal_capacitance() / model.capacitor.nominal_gap;
    // Differential sum over frames of −m_s·V_i·H_s,i(ω ± ω_m).
    let side = |f: f64| -> Complex64 {
        (0..2)
            .map(|i| {
                let sign = if i == 0 { 1.0 } else { -1.0 };
                let v = Complex64::i() * w * drive.displacement_phasor(model, i);
                sign * -fr.m_s * v * model.frames[i].sense_receptance(f)
            })
            .sum::<Complex64>()
            * lever
    };
    let upper = side(drive.frequency + f_m);
    let lower = side(drive.frequency - f_m).conj();
    let rot = Complex64::from_polar(1.0, phi);
    (upper / rot + lower * rot).norm() * chain.lpf_gain(f_m)
}

/// −3 dB rate bandwidth of the demodulated output relative to its DC
/// response, by a logarithmic sweep of the analytic rate transfer refined by
/// bisection.
pub fn rate_bandwidth(model: &LumpedGyroModel, chain: &ReadoutChain) -> Result<f64> {
    let drive = DriveConfig::at_resonance(model, 1e-6);
    let dc = rate_transfer(model, chain, &drive, 0.0);
    if !(dc > 0.0) {
        return Err(Error::Calibration("zero DC rate response".into()));
    }
    let level = dc / 2f64.sqrt();
    let below = |f: f64| rate_transfer(model, chain, &drive, f) < level;
    let f_top = 0.5 * drive.frequency;
    let n = 2000;
    let mut prev = 1e-3;
    for k in 1..=n {
        let f = 1e-3 * (f_top / 1e-3f64).powf(k as f64 / n as f64);
        if below(f) {
            let (mut lo, mut hi) = (prev, f);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if below(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(0.5 * (lo + hi));
        }
        prev = f;
    }
    Ok(f_top)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CmrReport {
    pub accel_amplitude: f64,
    pub frame_mismatch: f64,
    /// Capacitance change one frame produces under the acceleration (F).
    pub single_frame: f64,
    /// Differential capacitance under the same acceleration (F).
    pub differential: f64,
    pub rejection_db: f64,
    /// Differential / single-frame Coriolis carrier amplitude.
    pub coriolis_doubling: f64,
}

/// Least-squares amplitude of the tone at `f` in `x` sampled at `dt`.
pub fn tone_amplitude(x: &[f64], dt: f64, t0: f64, f: f64) -> f64 {
    let (mut cc, mut ss, mut cs, mut xc, mut xs) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let w = 2.0 * PI * f;
    for (k, &v) in x.iter().enumerate() {
        let (s, c) = (w * (t0 + k as f64 * dt)).sin_cos();
        cc += c * c;
        ss += s * s;
        cs += c * s;
        xc += v * c;
        xs += v * s;
    }
    let det = cc * ss - cs * cs;
    let a = (xc * ss - xs * cs) / det;
    let b = (xs * cc - xc * cs) / det;
    a.hypot(b)
}

/// Common-mode rejection of a constant sense-axis acceleration with the
/// drive off, and the anti-phase doubling of the Coriolis signal with
/// symmetric frames.
pub fn common_mode_rejection(
    model: &LumpedGyroModel,
    chain: &ReadoutChain,
    accel_amplitude: f64,
    frame_mismatch: f64,
) -> Result<CmrReport> {
    let base = model.with_frame_mismatch(&FrameMismatch::NONE);
    let skewed = base.with_frame_mismatch(&FrameMismatch::sense_stiffness(frame_mismatch));
    let dt = SimOptions::default_dt(&base);
    let tau = 2.0 * base.q_sense() / (2.0 * PI * base.f_sense());
    let settle = 30.0 * tau;
    let window = 20.0 / base.f_sense();

    // Start both frames at rest; the transient decays well inside `settle`.
    let accel = AccelProfile::along_z(Profile::constant(accel_amplitude));
    let off = DriveConfig::off(base.f_drive());
    let tr = simulate(
        &skewed,
        &off,
        &Profile::ZERO,
        &accel,
        chain,
        &SimOptions::new(dt, settle + window),
    )?;
    let i0 = tr.index_at(settle);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let cap = &skewed.capacitor;
    let single_series: Vec<f64> = tr.z1[i0..].iter().map(|&z| delta_c(cap, z, 0.0, 0.0)).collect::<Result<_>>()?;
    let single = mean(&single_series).abs();
    let differential = mean(&tr.delta_c_diff[i0..]).abs();
    let floor = f64::EPSILON * single;
    let rejection_db = 20.0 * (single / differential.max(floor)).log10();

    // Coriolis doubling on the symmetric model.
    let drive = DriveConfig::at_resonance(&base, 5e-6);
    let omega = 10.0 / crate::DEG_PER_RAD;
    let tr = simulate(
        &base,
        &drive,
        &Profile::constant(omega),
        &AccelProfile::none(),
        chain,
        &SimOptions::new(dt, settle + window),
    )?;
    let i0 = tr.index_at(settle);
    let t0 = tr.t[i0];
    let single_series: Vec<f64> = tr.z1[i0..].iter().map(|&z| delta_c(cap, z, 0.0, 0.0)).collect::<Result<_>>()?;
    let a_single = tone_amplitude(&single_series, dt, t0, drive.frequency);
    let a_diff = tone_amplitude(&tr.delta_c_diff[i0..], dt, t0, drive.frequency);

    Ok(CmrReport {
        accel_amplitude,
        frame_mismatch,
        single_frame: single,
        differential,
        rejection_db,
        coriolis_doubling: a_diff / a_single,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model() -> LumpedGyroModel {
        let spec = DeviceSpec::reference();
        build_lumped_model(&spec, spec.calibration.as_ref()).unwrap()
    }

    #[test]
    fn calibration_is_exact() {
        let m = model();
        assert_relative_eq!(m.f_drive(), 3998.0, max_relative = 1e-12);
        assert_relative_eq!(m.f_sense(), 4020.0, max_relative = 1e-12);
        assert_relative_eq!(m.mismatch_hz(), 22.0, max_relative = 1e-9);
        assert_relative_eq!(m.q_sense(), 67.0, max_relative = 1e-12);
    }

    #[test]
    fn infinite_q_is_rejected() {
        let spec = DeviceSpec::reference();
        let cal = Calibration {
            q_sense: f64::INFINITY,
            ..spec.calibration.unwrap()
        };
        assert!(matches!(build_lumped_model(&spec, Some(&cal)), Err(Error::Calibration(_))));
        let mut spec = spec;
        spec.drive.quality_factor = f64::INFINITY;
        assert!(build_lumped_model(&spec, None).is_err());
    }

    #[test]
    fn physics_path_uses_modal_tz() {
        let spec = DeviceSpec::reference();
        let m = build_lumped_model(&spec, None).unwrap();
        let r = analyze_variant(&spec, spec.suspension.variant).unwrap();
        let i = r.modal.labels.iter().position(|l| l.is(Dof::Tz)).unwrap();
        assert_relative_eq!(m.f_sense(), r.modal.frequencies[i], max_relative = 1e-12);
        assert!(matches!(m.provenance, Provenance::Physics));
    }

    #[test]
    fn bode_static_compliance_and_peaks() {
        let m = model();
        let b = frequency_response(&m, 1e-3, 8000.0, 8001).unwrap();
        assert_relative_eq!(b.sense_mag[0], 1.0 / m.nominal().k_s, max_relative = 1e-9);
        assert_relative_eq!(b.drive_mag[0], 1.0 / m.nominal().k_d, max_relative = 1e-9);
        assert!((b.peak_frequency(ModeKind::Drive) - 3998.0).abs() <= 1.0);
        assert!((b.peak_frequency(ModeKind::Sense) - 4020.0).abs() <= 1.0);
        assert!(frequency_response(&m, 10.0, 5.0, 10).is_err());
    }

    #[test]
    fn sense_half_power_width() {
        let m = model();
        let b = frequency_response(&m, 3800.0, 4250.0, 45001).unwrap();
        let w = b.half_power_width(ModeKind::Sense).unwrap();
        assert_relative_eq!(w, m.f_sense() / m.q_sense(), max_relative = 0.02);
    }

    #[test]
    fn profiles_evaluate() {
        assert_eq!(Profile::constant(2.0).eval(7.0), 2.0);
        assert_relative_eq!(Profile::sinusoid(3.0, 2.0).eval(0.25), -3.0, epsilon = 1e-12);
        let p = Profile::Piecewise {
            knots: vec![(0.0, 0.0), (1.0, 2.0), (2.0, 2.0)],
        };
        assert_eq!(p.eval(-1.0), 0.0);
        assert_eq!(p.eval(0.5), 1.0);
        assert_eq!(p.eval(5.0), 2.0);
    }

    #[test]
    fn zero_input_stays_at_rest() {
        let m = model();
        let chain = DeviceSpec::reference().readout;
        let dt = SimOptions::default_dt(&m);
        let tr = simulate(
            &m,
            &DriveConfig::at_resonance(&m, 5e-6),
            &Profile::ZERO,
            &AccelProfile::none(),
            &chain,
            &SimOptions::new(dt, 0.01),
        )
        .unwrap();
        assert!(tr.z1.iter().chain(&tr.z2).all(|&z| z == 0.0));
        assert_eq!(tr.len(), (0.01 / dt).round() as usize + 1);
    }

    #[test]
    fn coarse_step_is_rejected() {
        let m = model();
        let chain = DeviceSpec::reference().readout;
        let r = simulate(
            &m,
            &DriveConfig::off(4000.0),
            &Profile::ZERO,
            &AccelProfile::none(),
            &chain,
            &SimOptions::new(1.0 / (40.0 * 4020.0), 0.01),
        );
        assert!(r.is_err());
    }

    #[test]
    fn energy_never_grows_in_free_decay() {
        let m = model();
        let e = free_decay_energy(&m, [1e-6, 0.0, -1e-6, 0.01, 1e-8, 0.0, 0.0, -1e-4], SimOptions::default_dt(&m), 20_000);
        assert!(e.windows(2).all(|w| w[1] <= w[0]));
        assert!(e[e.len() - 1] < 0.5 * e[0]);
    }

    #[test]
    fn tone_fit_recovers_amplitude() {
        let dt = 1e-4;
        let x: Vec<f64> = (0..1000).map(|k| 0.3 * (2.0 * PI * 50.0 * k as f64 * dt + 0.4).cos() + 0.1).collect();
        assert_relative_eq!(tone_amplitude(&x, dt, 0.0, 50.0), 0.3, max_relative = 2e-3);
    }
}
