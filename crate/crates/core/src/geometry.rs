//! Parametric device description and rigid-body mass properties.
//!
//! The proofmass is a rectangular cuboid with one "equivalent hole" cut out of
//! it. The equivalent hole stands in for the mass removed by the damping
//! perforation, so the perforation itself never enters the mass or inertia.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{Calibration, DriveDesign, FrameMismatch};
use crate::error::{invalid, Result};
use crate::readout::ReadoutChain;
use crate::sensing::CapacitorSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaterialProps {
    /// Pa
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// kg/m³
    pub density: f64,
}

impl MaterialProps {
    /// Isotropic silicon.
    pub const SILICON: MaterialProps = MaterialProps {
        youngs_modulus: 169e9,
        poisson_ratio: 0.26,
        density: 2330.0,
    };

    pub fn shear_modulus(&self) -> f64 {
        self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.youngs_modulus > 0.0) {
            return Err(invalid("MaterialProps", "youngs_modulus must be > 0"));
        }
        if !(self.density > 0.0) {
            return Err(invalid("MaterialProps", "density must be > 0"));
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(invalid("MaterialProps", "poisson_ratio must lie in [0, 0.5)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Environment {
    /// Pa·s
    pub air_viscosity: f64,
    /// Pa
    pub ambient_pressure: f64,
    /// K
    pub temperature: f64,
}

impl Environment {
    pub const ATMOSPHERE: Environment = Environment {
        air_viscosity: 1.85e-5,
        ambient_pressure: 101_325.0,
        temperature: 300.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.air_viscosity > 0.0 && self.ambient_pressure > 0.0 && self.temperature > 0.0) {
            return Err(invalid(
                "Environment",
                "air_viscosity, ambient_pressure and temperature must all be > 0",
            ));
        }
        Ok(())
    }
}

/// A straight prismatic beam. `axis` is the in-plane unit vector along the
/// beam; `attach` is where the beam meets the proofmass, relative to the
/// proofmass centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeamSpec {
    pub length: f64,
    /// In-plane cross dimension.
    pub width: f64,
    /// Out-of-plane (z) cross dimension.
    pub thickness: f64,
    pub axis: Vector2<f64>,
    pub attach: Vector3<f64>,
}

impl BeamSpec {
    pub fn new(length: f64, width: f64, thickness: f64) -> Self {
        BeamSpec {
            length,
            width,
            thickness,
            axis: Vector2::x(),
            attach: Vector3::zeros(),
        }
    }

    pub fn with_axis(mut self, axis: Vector2<f64>) -> Self {
        self.axis = axis;
        self
    }

    pub fn at(mut self, attach: Vector3<f64>) -> Self {
        self.attach = attach;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.width > 0.0 && self.thickness > 0.0) {
            return Err(invalid("BeamSpec", "all dimensions must be > 0"));
        }
        if !(self.length > self.width && self.length > self.thickness) {
            return Err(invalid(
                "BeamSpec",
                "length must exceed both width and thickness",
            ));
        }
        if ((self.axis.norm() - 1.0).abs()) > 1e-9 {
            return Err(invalid("BeamSpec", "axis must be a unit vector"));
        }
        Ok(())
    }

    pub fn is_slender(&self) -> bool {
        self.length >= 5.0 * self.width.max(self.thickness)
    }
}

/// Square damping holes on a regular array centred on the plate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerforationSpec {
    pub hole_side: f64,
    pub pitch: f64,
    pub count_x: usize,
    pub count_y: usize,
}

impl PerforationSpec {
    pub const NONE: PerforationSpec = PerforationSpec {
        hole_side: 0.0,
        pitch: 1.0,
        count_x: 0,
        count_y: 0,
    };

    /// Largest array of the given pitch that fits on a plate footprint.
    pub fn tiling(hole_side: f64, pitch: f64, len_x: f64, len_y: f64) -> Self {
        let fit = |len: f64| {
            // Tolerate round-off when the pitch divides the length exactly.
            ((len / pitch) * (1.0 + 1e-12)).floor().max(0.0) as usize
        };
        PerforationSpec {
            hole_side,
            pitch,
            count_x: fit(len_x),
            count_y: fit(len_y),
        }
    }

    pub fn hole_count(&self) -> usize {
        self.count_x * self.count_y
    }

    pub fn is_empty(&self) -> bool {
        self.hole_count() == 0 || self.hole_side == 0.0
    }

    /// Hole centres relative to the plate centroid, row-major in x.
    pub fn hole_centers(&self) -> impl Iterator<Item = Vector2<f64>> + '_ {
        let x0 = -0.5 * (self.count_x as f64 - 1.0) * self.pitch;
        let y0 = -0.5 * (self.count_y as f64 - 1.0) * self.pitch;
        (0..self.count_y).flat_map(move |j| {
            (0..self.count_x)
                .map(move |i| Vector2::new(x0 + i as f64 * self.pitch, y0 + j as f64 * self.pitch))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlateSpec {
    pub len_x: f64,
    pub len_y: f64,
    pub thickness: f64,
    /// Equivalent-hole dimensions (x, y, z).
    pub equiv_hole: Vector3<f64>,
    /// In-plane offset of the equivalent hole from the plate centroid.
    pub equiv_hole_offset: Vector2<f64>,
    pub perforation: PerforationSpec,
}

impl PlateSpec {
    /// Solid plate with no equivalent hole and no perforation.
    pub fn solid(len_x: f64, len_y: f64, thickness: f64) -> Self {
        PlateSpec {
            len_x,
            len_y,
            thickness,
            equiv_hole: Vector3::zeros(),
            equiv_hole_offset: Vector2::zeros(),
            perforation: PerforationSpec::NONE,
        }
    }

    pub fn volume(&self) -> f64 {
        self.len_x * self.len_y * self.thickness
    }

    pub fn hole_volume(&self) -> f64 {
        self.equiv_hole.x * self.equiv_hole.y * self.equiv_hole.z
    }

    pub fn area(&self) -> f64 {
        self.len_x * self.len_y
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.len_x > 0.0 && self.len_y > 0.0 && self.thickness > 0.0) {
            return Err(invalid("PlateSpec", "plate dimensions must be > 0"));
        }
        let h = self.equiv_hole;
        if h.iter().any(|&d| d < 0.0) {
            return Err(invalid("PlateSpec", "equivalent hole dimensions must be >= 0"));
        }
        if self.hole_volume() > 0.0 {
            let off = self.equiv_hole_offset;
            if !(off.x.abs() + 0.5 * h.x < 0.5 * self.len_x
                && off.y.abs() + 0.5 * h.y < 0.5 * self.len_y)
            {
                return Err(invalid(
                    "PlateSpec",
                    "equivalent hole must fit strictly inside the plate footprint",
                ));
            }
            if h.z > self.thickness * (1.0 + 1e-12) {
                return Err(invalid(
                    "PlateSpec",
                    "equivalent hole cannot be deeper than the plate",
                ));
            }
        }
        let p = &self.perforation;
        if p.hole_count() > 0 {
            if !(p.hole_side > 0.0 && p.pitch > p.hole_side) {
                return Err(invalid(
                    "PerforationSpec",
                    format!(
                        "pitch ({:e} m) must exceed hole_side ({:e} m) and hole_side must be > 0",
                        p.pitch, p.hole_side
                    ),
                ));
            }
            let span = |n: usize| (n as f64 - 1.0) * p.pitch + p.hole_side;
            if span(p.count_x) > self.len_x * (1.0 + 1e-12) || span(p.count_y) > self.len_y * (1.0 + 1e-12)
            {
                return Err(invalid(
                    "PerforationSpec",
                    "hole array footprint exceeds the plate footprint",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Four dual-beam pairs, one beam in each of the top and bottom planes.
    EightOne,
    /// Four single-plane beams.
    FourOne,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::EightOne => "8-1",
            Variant::FourOne => "4-1",
        }
    }
}

/// Beam cross-section and length without placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeamDims {
    pub length: f64,
    pub width: f64,
    pub thickness: f64,
}

impl BeamDims {
    pub fn beam(&self) -> BeamSpec {
        BeamSpec::new(self.length, self.width, self.thickness)
    }
}

/// How a spring between anchor and proofmass is shaped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SpringShape {
    Straight,
    /// L-shaped spring; the thigh runs along the layout axis from the anchor,
    /// the shin turns 90° towards the proofmass. Lengths in metres.
    CrabLeg { thigh: f64, shin: f64 },
}

/// Parametric rule that generates both layout variants from the same sites.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuspensionDesign {
    pub variant: Variant,
    pub vertical_beam: BeamDims,
    pub single_plane_beam: BeamDims,
    pub axis: Vector2<f64>,
    /// In-plane attach points of each spring site, relative to the centroid.
    pub sites: Vec<Vector2<f64>>,
    pub shape: SpringShape,
    /// z of the single spring plane used by the 4-1 variant.
    pub single_plane_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceSpec {
    pub material: MaterialProps,
    pub env: Environment,
    pub plate: PlateSpec,
    pub suspension: SuspensionDesign,
    pub capacitor: CapacitorSpec,
    pub drive: DriveDesign,
    pub calibration: Option<Calibration>,
    pub readout: ReadoutChain,
    pub mismatch: FrameMismatch,
    /// Drive to sense stiffness cross-coupling (N/m), zero for a decoupled design.
    pub drive_sense_coupling: f64,
    /// Asymmetry fractions used by the offset study.
    pub offset_etas: Vec<f64>,
    /// Default seed for stochastic runs.
    pub seed: u64,
}

impl DeviceSpec {
    /// The bundled reference device.
    pub fn reference() -> Self {
        load_device_spec(crate::REFERENCE_CONFIG).expect("bundled config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        self.env.validate()?;
        self.plate.validate()?;
        self.suspension_layout()?;
        self.capacitor.validate(&self.plate)?;
        self.drive.validate()?;
        if let Some(c) = &self.calibration {
            c.validate()?;
        }
        self.readout.validate()?;
        Ok(())
    }

    /// Layout of the device's own variant.
    pub fn suspension_layout(&self) -> Result<crate::suspension::SuspensionLayout> {
        crate::suspension::SuspensionLayout::from_design(&self.suspension, &self.plate, self.suspension.variant)
    }

    /// Same design re-targeted to another variant.
    pub fn with_variant(&self, variant: Variant) -> DeviceSpec {
        let mut spec = self.clone();
        spec.suspension.variant = variant;
        spec
    }
}

/// Parse and validate a config document.
pub fn load_device_spec(text: &str) -> Result<DeviceSpec> {
    let spec = crate::config::parse(text)?;
    spec.validate()?;
    Ok(spec)
}

/// Proofmass mass after the equivalent-hole correction.
pub fn proofmass_mass(plate: &PlateSpec, material: &MaterialProps) -> f64 {
    material.density * (plate.volume() - plate.hole_volume())
}

fn cuboid_inertia(mass: f64, d: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(
        d.y * d.y + d.z * d.z,
        d.x * d.x + d.z * d.z,
        d.x * d.x + d.y * d.y,
    )) * (mass / 12.0)
}

/// Inertia tensor (kg·m²) about the plate centroid: solid cuboid minus the
/// equivalent-hole cuboid, the latter shifted by the parallel-axis theorem.
pub fn inertia_tensor(plate: &PlateSpec, material: &MaterialProps) -> Matrix3<f64> {
    let dims = Vector3::new(plate.len_x, plate.len_y, plate.thickness);
    let solid = cuboid_inertia(material.density * plate.volume(), &dims);
    let m_hole = material.density * plate.hole_volume();
    if m_hole == 0.0 {
        return solid;
    }
    let d = Vector3::new(plate.equiv_hole_offset.x, plate.equiv_hole_offset.y, 0.0);
    let shift = (Matrix3::identity() * d.norm_squared() - d * d.transpose()) * m_hole;
    solid - (cuboid_inertia(m_hole, &plate.equiv_hole) + shift)
}

/// Centre of mass relative to the plate centroid.
pub fn center_of_mass(plate: &PlateSpec, material: &MaterialProps) -> Vector3<f64> {
    let m = proofmass_mass(plate, material);
    let m_hole = material.density * plate.hole_volume();
    let d = Vector3::new(plate.equiv_hole_offset.x, plate.equiv_hole_offset.y, 0.0);
    -d * (m_hole / m)
}

/// Correction factor of the rectangular-section series shared by the
/// Saint-Venant torsion constant and Poiseuille flow through a rectangular
/// duct: `1 - (192/π⁵)(b/a) Σ_{n odd} tanh(nπa/2b)/n⁵` with `a ≥ b`.
pub fn rect_section_factor(a: f64, b: f64) -> f64 {
    let (a, b) = if a >= b { (a, b) } else { (b, a) };
    let mut sum = 0.0;
    let mut n = 1.0_f64;
    loop {
        let term = (n * std::f64::consts::PI * a / (2.0 * b)).tanh() / n.powi(5);
        sum += term;
        if term < 1e-12 * sum {
            break;
        }
        n += 2.0;
    }
    1.0 - 192.0 / std::f64::consts::PI.powi(5) * (b / a) * sum
}

/// Saint-Venant torsion constant (m⁴) of a solid rectangle.
pub fn torsion_constant(a: f64, b: f64) -> f64 {
    let (long, short) = if a >= b { (a, b) } else { (b, a) };
    long * short.powi(3) / 3.0 * rect_section_factor(long, short)
}
