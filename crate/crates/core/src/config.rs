//! TOML device description. Lengths are micrometres, everything else SI.
//!
//! ```toml
//! seed = 1
//! [material]      youngs_modulus_pa, poisson_ratio, density_kg_m3
//! [environment]   air_viscosity_pa_s, ambient_pressure_pa, temperature_k
//! [plate]         size_um = [x, y, z], equiv_hole_um = [x, y, z], equiv_hole_offset_um = [x, y]
//! [perforation]   hole_side_um, pitch_um, count = [nx, ny]  (count defaults to the tiling)
//! [suspension]    variant = "eight-one" | "four-one", vertical_beam_um, single_plane_beam_um,
//!                 axis, sites_um, single_plane_z_um, shape = "straight" | "crab-leg", crab_leg_um
//! [capacitor]     electrode_um = [x, y], gap_um, center_um, count
//! [drive]         frequency_hz, quality_factor, frame_mass_kg, target_amplitude_um
//! [calibration]   f_drive_hz, f_sense_hz, q_drive, q_sense   (optional section)
//! [readout]       c2v_gain_v_per_f, demod_phase_rad (omit for auto), lpf_cutoff_hz, lpf_order,
//!                 electronic_noise_v_per_rthz
//! [dynamics]      drive_sense_coupling_n_per_m, [dynamics.mismatch] fractions
//! [offset]        etas
//! ```

use nalgebra::{Vector2, Vector3};
use serde::Deserialize;

use crate::dynamics::{Calibration, DriveDesign, FrameMismatch};
use crate::error::{Error, Result};
use crate::geometry::{
    BeamDims, DeviceSpec, Environment, MaterialProps, PerforationSpec, PlateSpec, SpringShape, SuspensionDesign,
    Variant,
};
use crate::readout::ReadoutChain;
use crate::sensing::CapacitorSpec;

const UM: f64 = 1e-6;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    seed: u64,
    material: MaterialDoc,
    environment: EnvironmentDoc,
    plate: PlateDoc,
    perforation: Option<PerforationDoc>,
    suspension: SuspensionDoc,
    capacitor: CapacitorDoc,
    drive: DriveDoc,
    calibration: Option<CalibrationDoc>,
    readout: ReadoutDoc,
    #[serde(default)]
    dynamics: DynamicsDoc,
    #[serde(default)]
    offset: OffsetDoc,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialDoc {
    youngs_modulus_pa: f64,
    poisson_ratio: f64,
    density_kg_m3: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvironmentDoc {
    air_viscosity_pa_s: f64,
    ambient_pressure_pa: f64,
    temperature_k: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlateDoc {
    size_um: [f64; 3],
    #[serde(default)]
    equiv_hole_um: [f64; 3],
    #[serde(default)]
    equiv_hole_offset_um: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PerforationDoc {
    hole_side_um: f64,
    pitch_um: f64,
    count: Option<[usize; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ShapeDoc {
    Straight,
    CrabLeg,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuspensionDoc {
    variant: Variant,
    vertical_beam_um: [f64; 3],
    single_plane_beam_um: [f64; 3],
    axis: [f64; 2],
    sites_um: Vec<[f64; 2]>,
    #[serde(default)]
    single_plane_z_um: f64,
    shape: Option<ShapeDoc>,
    /// Thigh and shin lengths.
    crab_leg_um: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CapacitorDoc {
    electrode_um: [f64; 2],
    gap_um: f64,
    #[serde(default)]
    center_um: [f64; 2],
    count: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DriveDoc {
    frequency_hz: f64,
    quality_factor: f64,
    #[serde(default)]
    frame_mass_kg: f64,
    target_amplitude_um: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationDoc {
    f_drive_hz: f64,
    f_sense_hz: f64,
    q_drive: f64,
    q_sense: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReadoutDoc {
    c2v_gain_v_per_f: f64,
    demod_phase_rad: Option<f64>,
    lpf_cutoff_hz: f64,
    #[serde(default = "one")]
    lpf_order: u32,
    #[serde(default)]
    electronic_noise_v_per_rthz: f64,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MismatchDoc {
    #[serde(default)]
    drive_stiffness: f64,
    #[serde(default)]
    sense_stiffness: f64,
    #[serde(default)]
    sense_damping: f64,
    #[serde(default)]
    sense_mass: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DynamicsDoc {
    #[serde(default)]
    drive_sense_coupling_n_per_m: f64,
    #[serde(default)]
    mismatch: MismatchDoc,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OffsetDoc {
    etas: Vec<f64>,
}

impl Default for OffsetDoc {
    fn default() -> Self {
        OffsetDoc {
            etas: vec![0.005, 0.01, 0.015, 0.02],
        }
    }
}

fn dims(d: [f64; 3]) -> BeamDims {
    BeamDims {
        length: d[0] * UM,
        width: d[1] * UM,
        thickness: d[2] * UM,
    }
}

fn to_spec(doc: Document) -> Result<DeviceSpec> {
    let [lx, ly, lz] = doc.plate.size_um.map(|v| v * UM);
    let perforation = match doc.perforation {
        None => PerforationSpec::NONE,
        Some(p) => match p.count {
            Some([nx, ny]) => PerforationSpec {
                hole_side: p.hole_side_um * UM,
                pitch: p.pitch_um * UM,
                count_x: nx,
                count_y: ny,
            },
            None => PerforationSpec::tiling(p.hole_side_um * UM, p.pitch_um * UM, lx, ly),
        },
    };
    let plate = PlateSpec {
        len_x: lx,
        len_y: ly,
        thickness: lz,
        equiv_hole: Vector3::from(doc.plate.equiv_hole_um.map(|v| v * UM)),
        equiv_hole_offset: Vector2::from(doc.plate.equiv_hole_offset_um.map(|v| v * UM)),
        perforation,
    };
    let s = doc.suspension;
    let shape = match (s.shape.unwrap_or(ShapeDoc::Straight), s.crab_leg_um) {
        (ShapeDoc::Straight, _) => SpringShape::Straight,
        (ShapeDoc::CrabLeg, Some([thigh, shin])) => SpringShape::CrabLeg {
            thigh: thigh * UM,
            shin: shin * UM,
        },
        (ShapeDoc::CrabLeg, None) => {
            return Err(Error::Parse("suspension.crab_leg_um is required when shape = \"crab-leg\"".into()))
        }
    };
    let axis = Vector2::from(s.axis);
    if !(axis.norm() > 0.0) {
        return Err(Error::Parse("suspension.axis must be a non-zero vector".into()));
    }
    let suspension = SuspensionDesign {
        variant: s.variant,
        vertical_beam: dims(s.vertical_beam_um),
        single_plane_beam: dims(s.single_plane_beam_um),
        axis: axis.normalize(),
        sites: s.sites_um.iter().map(|p| Vector2::new(p[0], p[1]) * UM).collect(),
        shape,
        single_plane_z: s.single_plane_z_um * UM,
    };
    let c = doc.capacitor;
    let capacitor = CapacitorSpec {
        electrode_len_x: c.electrode_um[0] * UM,
        electrode_len_y: c.electrode_um[1] * UM,
        nominal_gap: c.gap_um * UM,
        electrode_center: Vector2::from(c.center_um.map(|v| v * UM)),
        count: c.count,
    };
    let d = doc.drive;
    let m = doc.dynamics.mismatch;
    let r = doc.readout;
    Ok(DeviceSpec {
        material: MaterialProps {
            youngs_modulus: doc.material.youngs_modulus_pa,
            poisson_ratio: doc.material.poisson_ratio,
            density: doc.material.density_kg_m3,
        },
        env: Environment {
            air_viscosity: doc.environment.air_viscosity_pa_s,
            ambient_pressure: doc.environment.ambient_pressure_pa,
            temperature: doc.environment.temperature_k,
        },
        plate,
        suspension,
        capacitor,
        drive: DriveDesign {
            frequency: d.frequency_hz,
            quality_factor: d.quality_factor,
            frame_mass: d.frame_mass_kg,
            target_amplitude: d.target_amplitude_um * UM,
        },
        calibration: doc.calibration.map(|c| Calibration {
            f_drive: c.f_drive_hz,
            f_sense: c.f_sense_hz,
            q_drive: c.q_drive,
            q_sense: c.q_sense,
        }),
        readout: ReadoutChain {
            c2v_gain: r.c2v_gain_v_per_f,
            demod_phase: r.demod_phase_rad,
            lpf_cutoff: r.lpf_cutoff_hz,
            lpf_order: r.lpf_order,
            electronic_noise_psd: r.electronic_noise_v_per_rthz,
        },
        mismatch: FrameMismatch {
            drive_stiffness: m.drive_stiffness,
            sense_stiffness: m.sense_stiffness,
            sense_damping: m.sense_damping,
            sense_mass: m.sense_mass,
        },
        drive_sense_coupling: doc.dynamics.drive_sense_coupling_n_per_m,
        offset_etas: doc.offset.etas,
        seed: doc.seed,
    })
}

/// Parse without validating domain invariants.
pub fn parse(text: &str) -> Result<DeviceSpec> {
    let doc: Document = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    to_spec(doc)
}

/// Parse a TOML table, e.g. after overrides were applied.
pub fn parse_table(table: toml::Table) -> Result<DeviceSpec> {
    let doc: Document = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    to_spec(doc)
}

/// Set the value at a dotted `key` (e.g. `perforation.pitch_um`). The value
/// is read as a TOML literal, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Parse(format!("empty override key `{key}`")))?;
    let mut cur = table;
    for p in parts {
        cur = match cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new())) {
            toml::Value::Table(t) => t,
            _ => return Err(Error::Parse(format!("override `{key}`: `{p}` is not a section"))),
        };
    }
    cur.insert(leaf.to_string(), parsed);
    Ok(())
}

/// Parse a document, apply `key=value` overrides in order, and validate.
pub fn load_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<DeviceSpec> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    for (k, v) in overrides {
        apply_override(&mut table, k, v)?;
    }
    let spec = parse_table(table)?;
    spec.validate()?;
    Ok(spec)
}
