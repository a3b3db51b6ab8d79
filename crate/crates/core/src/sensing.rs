//! Gap-changing parallel-plate capacitors between proofmass and glass, and
//! the static mass-asymmetry offset study.

use nalgebra::{Vector2, Vector6};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{proofmass_mass, DeviceSpec, PlateSpec, Variant};
use crate::suspension::assemble_suspension;
use crate::{EPSILON_0, STANDARD_GRAVITY};

/// One sense electrode under a proofmass. The tuning fork carries one per
/// frame, read differentially.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacitorSpec {
    pub electrode_len_x: f64,
    pub electrode_len_y: f64,
    pub nominal_gap: f64,
    /// Electrode centre in the plate frame.
    pub electrode_center: Vector2<f64>,
    /// Electrodes in the differential pair.
    pub count: usize,
}

impl CapacitorSpec {
    pub fn area(&self) -> f64 {
        self.electrode_len_x * self.electrode_len_y
    }

    pub fn nominal_capacitance(&self) -> f64 {
        EPSILON_0 * self.area() / self.nominal_gap
    }

    pub fn validate(&self, plate: &PlateSpec) -> Result<()> {
        if !(self.nominal_gap > 0.0) {
            return Err(invalid("CapacitorSpec", "nominal_gap must be > 0"));
        }
        if !(self.electrode_len_x > 0.0 && self.electrode_len_y > 0.0) {
            return Err(invalid("CapacitorSpec", "electrode dimensions must be > 0"));
        }
        let c = self.electrode_center;
        if c.x.abs() + 0.5 * self.electrode_len_x > 0.5 * plate.len_x + 1e-12
            || c.y.abs() + 0.5 * self.electrode_len_y > 0.5 * plate.len_y + 1e-12
        {
            return Err(invalid("CapacitorSpec", "electrode must lie within the plate footprint"));
        }
        if self.count != 2 {
            return Err(invalid("CapacitorSpec", "a tuning-fork differential pair has exactly 2 electrodes"));
        }
        Ok(())
    }
}

/// Ideal parallel-plate capacitance, no fringe field.
pub fn capacitance(gap: f64, area: f64) -> Result<f64> {
    if !(gap > 0.0) {
        return Err(Error::Contact { min_gap: gap });
    }
    Ok(EPSILON_0 * area / gap)
}

/// `E[(p s + q t)^(2n)]` for independent s, t uniform on [−1, 1].
fn even_moment(p: f64, q: f64, n: i32) -> f64 {
    let mut binom = 1.0;
    let mut acc = 0.0;
    // binom tracks C(2n, j) as j steps by one.
    for j in 0..=(2 * n) {
        if j % 2 == 0 {
            let k = j / 2;
            acc += binom * p.powi(2 * k) * q.powi(2 * n - 2 * k) / (((2 * k + 1) * (2 * n - 2 * k + 1)) as f64);
        }
        binom = binom * (2 * n - j) as f64 / (j + 1) as f64;
    }
    acc
}

/// `(k+p)ln(k+p) − (k−p)ln(k−p)`, divided by p.
fn g_term(k: f64, p: f64) -> f64 {
    ((k + p) * (k + p).ln() - (k - p) * (k - p).ln()) / p
}

/// `I − 1`, where I is the mean of `1/(1 − p s − q t)` over the unit square
/// `[−1, 1]²`. Requires `|p| + |q| < 1`.
fn mean_inverse_gap_minus_one(p: f64, q: f64) -> f64 {
    let (p, q) = if p.abs() >= q.abs() { (p.abs(), q.abs()) } else { (q.abs(), p.abs()) };
    if p < 1e-2 {
        (1..=6).map(|n| even_moment(p, q, n)).sum()
    } else if q < 1e-3 {
        let d = 1.0 - p * p;
        (p.atanh() / p - 1.0) + q * q / (3.0 * d * d) + q.powi(4) * (1.0 + p * p) / (5.0 * d.powi(4))
    } else {
        (g_term(1.0 + q, p) - g_term(1.0 - q, p)) / (4.0 * q) - 1.0
    }
}

/// Capacitance change from nominal when the plate approaches the electrode
/// by `z` at the electrode centre and tilts so that the local approach grows
/// by `theta_x` per metre along y and `theta_y` per metre along x.
pub fn delta_c(spec: &CapacitorSpec, z: f64, theta_x: f64, theta_y: f64) -> Result<f64> {
    let a = 0.5 * spec.electrode_len_x;
    let b = 0.5 * spec.electrode_len_y;
    let g0 = spec.nominal_gap;
    let g = g0 - z;
    let min_gap = g - theta_y.abs() * a - theta_x.abs() * b;
    if !(min_gap > 0.0) {
        return Err(Error::Contact { min_gap });
    }
    let p = theta_y * a / g;
    let q = theta_x * b / g;
    let i1 = mean_inverse_gap_minus_one(p, q);
    Ok(EPSILON_0 * 4.0 * a * b * (i1 / g + z / (g * g0)))
}

/// Approach and tilts at the electrode for a rigid-body displacement of the
/// proofmass `(x, y, z, Φx, Φy, Φz)` about its centroid, the electrode
/// being below the plate.
pub fn electrode_motion(spec: &CapacitorSpec, u: &Vector6<f64>) -> (f64, f64, f64) {
    let c = spec.electrode_center;
    // Upward displacement of the plate underside: w = z + Φx·y − Φy·x.
    let w_center = u[2] + u[3] * c.y - u[4] * c.x;
    (-w_center, -u[3], u[4])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AsymmetryModel {
    /// The centre of mass moves along x by `η·len_x/2`.
    ComShift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymmetryCase {
    pub asymmetry_fraction: f64,
    pub model: AsymmetryModel,
}

impl AsymmetryCase {
    pub fn com_shift(eta: f64) -> Self {
        AsymmetryCase {
            asymmetry_fraction: eta,
            model: AsymmetryModel::ComShift,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.05).contains(&self.asymmetry_fraction) {
            return Err(invalid("AsymmetryCase", "asymmetry_fraction must lie in [0, 0.05]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffsetPoint {
    pub eta: f64,
    /// Static proofmass displacement under 1 g.
    pub displacement: [f64; 6],
    /// Capacitance offset relative to the symmetric proofmass (F).
    pub delta_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffsetCurve {
    pub variant: Variant,
    pub points: Vec<OffsetPoint>,
}

/// Static 1 g sag of the proofmass towards the electrode with its centre of
/// mass shifted in-plane by `shift`.
pub fn gravity_deflection(spec: &DeviceSpec, variant: Variant, shift: Vector2<f64>) -> Result<Vector6<f64>> {
    let spec = spec.with_variant(variant);
    let k = assemble_suspension(&spec.suspension_layout()?, &spec.material)?;
    let weight = proofmass_mass(&spec.plate, &spec.material) * STANDARD_GRAVITY;
    // Force (0, 0, −W) applied at (sx, sy, 0): torque r × F.
    let load = Vector6::new(0.0, 0.0, -weight, -shift.y * weight, shift.x * weight, 0.0);
    let chol = k.matrix().cholesky().ok_or(Error::NotPositiveDefinite { matrix: "stiffness" })?;
    Ok(chol.solve(&load))
}

/// Capacitance offset versus mass asymmetry under gravity. Points are
/// returned in ascending η.
pub fn offset_vs_asymmetry(spec: &DeviceSpec, cases: &[AsymmetryCase], variant: Variant) -> Result<OffsetCurve> {
    let mut cases = cases.to_vec();
    for c in &cases {
        c.validate()?;
    }
    cases.sort_by(|a, b| a.asymmetry_fraction.total_cmp(&b.asymmetry_fraction));
    let cap = &spec.capacitor;
    let dc_at = |u: &Vector6<f64>| {
        let (z, tx, ty) = electrode_motion(cap, u);
        delta_c(cap, z, tx, ty)
    };
    let reference = dc_at(&gravity_deflection(spec, variant, Vector2::zeros())?)?;
    let mut points = Vec::with_capacity(cases.len());
    for case in &cases {
        let shift = match case.model {
            AsymmetryModel::ComShift => Vector2::new(0.5 * case.asymmetry_fraction * spec.plate.len_x, 0.0),
        };
        let u = gravity_deflection(spec, variant, shift)?;
        points.push(OffsetPoint {
            eta: case.asymmetry_fraction,
            displacement: u.into(),
            delta_c: dc_at(&u)? - reference,
        });
    }
    Ok(OffsetCurve { variant, points })
}
