//! Squeeze-film air damping of the perforated proofmass above the glass
//! electrode.
//!
//! Two independent routes compute the same damping coefficient:
//!
//! - [`cell_damping_modified_reynolds`]: every hole drains an annular cell of
//!   film; the film pressure solves the axisymmetric Reynolds equation and
//!   the hole acts as a Poiseuille channel through the full plate thickness.
//! - [`fd_reynolds_oracle`]: finite-difference solution of the Reynolds
//!   equation on the real plate with square holes resolved on the grid, the
//!   channel resistance entering as a distributed sink, and zero pressure on
//!   the plate rim.
//!
//! Both are incompressible and small-amplitude. The plate moves towards the
//! substrate at unit velocity, so force equals the damping coefficient.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{rect_section_factor, DeviceSpec, PerforationSpec};
use crate::suspension::{assemble_suspension, Dof};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SqueezeFilmParams {
    pub gap: f64,
    pub len_x: f64,
    pub len_y: f64,
    /// Plate thickness, i.e. the hole channel length.
    pub thickness: f64,
    pub perforation: PerforationSpec,
    pub air_viscosity: f64,
    pub ambient_pressure: f64,
    /// Motion frequency used for the squeeze-number check.
    pub frequency: f64,
    /// Sense-mode stiffness and mass for the quality factor.
    pub k_eff: f64,
    pub m_eff: f64,
}

impl SqueezeFilmParams {
    /// Sense-direction film under the device's proofmass, with the
    /// suspension's vertical stiffness and the proofmass mass.
    pub fn from_device(spec: &DeviceSpec) -> Result<Self> {
        let k = assemble_suspension(&spec.suspension_layout()?, &spec.material)?;
        let k_eff = k.get(Dof::Tz, Dof::Tz);
        let m_eff = crate::geometry::proofmass_mass(&spec.plate, &spec.material);
        Ok(SqueezeFilmParams {
            gap: spec.capacitor.nominal_gap,
            len_x: spec.plate.len_x,
            len_y: spec.plate.len_y,
            thickness: spec.plate.thickness,
            perforation: spec.plate.perforation,
            air_viscosity: spec.env.air_viscosity,
            ambient_pressure: spec.env.ambient_pressure,
            frequency: (k_eff / m_eff).sqrt() / (2.0 * std::f64::consts::PI),
            k_eff,
            m_eff,
        })
    }

    pub fn with_perforation(mut self, perforation: PerforationSpec) -> Self {
        self.perforation = perforation;
        self
    }

    /// Re-tile the plate at a new pitch, keeping the hole size.
    pub fn with_pitch(self, pitch: f64) -> Self {
        let hole = self.perforation.hole_side;
        self.with_perforation(PerforationSpec::tiling(hole, pitch, self.len_x, self.len_y))
    }

    pub fn with_gap(mut self, gap: f64) -> Self {
        self.gap = gap;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.gap > 0.0) {
            return Err(invalid("SqueezeFilmParams", "gap must be > 0"));
        }
        if !(self.gap < 0.1 * self.len_x.min(self.len_y)) {
            return Err(invalid("SqueezeFilmParams", "gap must be much smaller than the plate"));
        }
        if !(self.air_viscosity > 0.0 && self.ambient_pressure > 0.0) {
            return Err(invalid("SqueezeFilmParams", "viscosity and ambient pressure must be > 0"));
        }
        let p = &self.perforation;
        if !p.is_empty() && !(p.pitch > p.hole_side) {
            return Err(invalid("PerforationSpec", "pitch must exceed hole_side"));
        }
        Ok(())
    }

    /// Film flow coefficient `12µ/g³` (Pa·s/m⁴ per unit velocity source).
    fn film_factor(&self) -> f64 {
        12.0 * self.air_viscosity / self.gap.powi(3)
    }

    /// Squeeze number over the relevant lateral length.
    pub fn squeeze_number(&self) -> f64 {
        let len = if self.perforation.is_empty() {
            self.len_x.min(self.len_y)
        } else {
            self.perforation.pitch / std::f64::consts::PI.sqrt()
        };
        let omega = 2.0 * std::f64::consts::PI * self.frequency;
        12.0 * self.air_viscosity * omega * len * len / (self.ambient_pressure * self.gap * self.gap)
    }

    fn regime_warnings(&self) -> Vec<String> {
        let sigma = self.squeeze_number();
        if sigma > 1.0 {
            vec![format!(
                "squeeze number {sigma:.3} exceeds 1; incompressible film assumption is doubtful"
            )]
        } else {
            Vec::new()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingMethod {
    AnalyticCell,
    FdSolver,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DampingResult {
    /// N·s/m
    pub damping_coeff: f64,
    /// `sqrt(k_eff·m_eff)/c`
    pub quality_factor: f64,
    pub method: DampingMethod,
    pub squeeze_number: f64,
    pub warnings: Vec<String>,
}

impl DampingResult {
    pub const Q_CONVENTION: &'static str = "Q = sqrt(k_eff * m_eff) / c";

    fn new(c: f64, p: &SqueezeFilmParams, method: DampingMethod, warnings: Vec<String>) -> Self {
        DampingResult {
            damping_coeff: c,
            quality_factor: quality_factor(c, p.k_eff, p.m_eff),
            method,
            squeeze_number: p.squeeze_number(),
            warnings,
        }
    }
}

pub fn quality_factor(c: f64, k_eff: f64, m_eff: f64) -> f64 {
    (k_eff * m_eff).sqrt() / c
}

/// Flow resistance (Pa·s/m³) of one square hole through a plate of the
/// given thickness: fully developed Poiseuille flow in a square duct, with
/// the channel lengthened by the entrance/exit correction `3π r₀/8` of the
/// equal-area circle.
pub fn hole_resistance(side: f64, thickness: f64, viscosity: f64) -> f64 {
    let r0 = side / std::f64::consts::PI.sqrt();
    let length = thickness + 3.0 * std::f64::consts::PI * r0 / 8.0;
    12.0 * viscosity * length / (side.powi(4) * rect_section_factor(side, side))
}

/// Squeeze-film damping of a solid rectangular plate with vented edges,
/// `µ a b³/g³ · (1 − (192/π⁵)(b/a) Σ tanh(nπa/2b)/n⁵)`, `a ≥ b`.
pub fn solid_plate_damping(viscosity: f64, gap: f64, len_x: f64, len_y: f64) -> f64 {
    let (a, b) = if len_x >= len_y { (len_x, len_y) } else { (len_y, len_x) };
    viscosity * a * b.powi(3) / gap.powi(3) * rect_section_factor(a, b)
}

/// Damping force of one perforation cell per unit plate velocity, and the
/// pressure on the cell's outer boundary.
fn cell_force(p: &SqueezeFilmParams) -> (f64, f64) {
    let pi = std::f64::consts::PI;
    let perf = &p.perforation;
    let rc = perf.pitch / pi.sqrt();
    let r0 = perf.hole_side / pi.sqrt();
    let beta = r0 / rc;
    let k = p.film_factor();
    let film = pi * k * rc.powi(4) / 8.0 * (4.0 * (1.0 / beta).ln() - (1.0 - beta * beta) * (3.0 - beta * beta));
    let drained = pi * (rc * rc - r0 * r0);
    let hole_pressure = hole_resistance(perf.hole_side, p.thickness, p.air_viscosity) * drained;
    let edge_pressure = hole_pressure + 0.25 * k * (2.0 * rc * rc * (1.0 / beta).ln() - (rc * rc - r0 * r0));
    // Channel wall shear carries the hole pressure into the plate as well.
    (film + hole_pressure * pi * rc * rc, edge_pressure)
}

/// Unperforated margin between the hole array and the plate rim: a strip
/// of width w vented at the rim and held at the cell-edge pressure on the
/// array side carries `K w³/12 + p_edge w/2` per unit length.
fn border_force(p: &SqueezeFilmParams, edge_pressure: f64) -> f64 {
    let perf = &p.perforation;
    let k = p.film_factor();
    let array_x = perf.count_x as f64 * perf.pitch;
    let array_y = perf.count_y as f64 * perf.pitch;
    let strip = |w: f64| if w > 0.0 { k * w.powi(3) / 12.0 + 0.5 * edge_pressure * w } else { 0.0 };
    let wx = 0.5 * (p.len_x - array_x);
    let wy = 0.5 * (p.len_y - array_y);
    2.0 * p.len_y * strip(wx) + 2.0 * array_x * strip(wy)
}

/// Analytic perforated-cell damping summed over the hole array, plus the
/// solid border the array leaves at the rim. Without holes the exact solid
/// rectangular plate result is returned.
pub fn cell_damping_modified_reynolds(p: &SqueezeFilmParams) -> Result<DampingResult> {
    p.validate()?;
    let warnings = p.regime_warnings();
    let c = if p.perforation.is_empty() {
        solid_plate_damping(p.air_viscosity, p.gap, p.len_x, p.len_y)
    } else {
        let (cell, edge) = cell_force(p);
        p.perforation.hole_count() as f64 * cell + border_force(p, edge)
    };
    Ok(DampingResult::new(c, p, DampingMethod::AnalyticCell, warnings))
}

/// Pressure per unit plate velocity on the finite-difference grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PressureField {
    /// Cell centres relative to the plate centroid.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Row-major in x.
    pub values: Vec<f64>,
}

impl PressureField {
    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn ny(&self) -> usize {
        self.y.len()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.x.len() + i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdOutcome {
    pub result: DampingResult,
    pub field: PressureField,
    pub iterations: usize,
    pub cells: usize,
}

/// Lateral conductance of an open hole mouth relative to the film.
pub const HOLE_CONDUCTANCE_RATIO: f64 = 1e3;

/// Minimum cells across any film or hole segment of a perforated grid.
const MIN_SEGMENT_CELLS: usize = 8;

/// Half of one grid axis, from the plate centre line to the edge: cell
/// widths and whether each cell lies in a hole opening. Hole edges fall on
/// cell faces.
fn half_axis_grid(len: f64, count: usize, pitch: f64, side: f64, spacing: f64, min_cells: usize) -> (Vec<f64>, Vec<bool>) {
    let half = 0.5 * len;
    let mut breaks = vec![0.0, half];
    let first = -0.5 * (count as f64 - 1.0) * pitch;
    let centres: Vec<f64> = (0..count).map(|h| first + h as f64 * pitch).collect();
    if side > 0.0 {
        for &c in &centres {
            breaks.extend([c - 0.5 * side, c + 0.5 * side].into_iter().filter(|&e| e > 0.0 && e < half));
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut widths = Vec::new();
    let mut open = Vec::new();
    for w in breaks.windows(2) {
        let seg = w[1] - w[0];
        let mid = 0.5 * (w[0] + w[1]);
        let in_hole = side > 0.0 && centres.iter().any(|&c| (mid - c).abs() < 0.5 * side);
        let n = ((seg / spacing - 1e-9).ceil() as usize).max(min_cells);
        widths.extend(std::iter::repeat_n(seg / n as f64, n));
        open.extend(std::iter::repeat_n(in_hole, n));
    }
    (widths, open)
}

/// Finite-difference Reynolds solution. `grid_resolution` is the nominal
/// cells per pitch for a perforated plate, or cells across the shorter side
/// of a solid plate. The tensor-product grid puts faces on every hole edge
/// and gives each film web between holes at least 8 cells. The centred
/// layout is symmetric about both axes, so one quarter is solved with
/// no-flux centre lines.
pub fn fd_reynolds_oracle(p: &SqueezeFilmParams, grid_resolution: usize) -> Result<FdOutcome> {
    p.validate()?;
    let perf = &p.perforation;
    let perforated = !perf.is_empty();
    if perforated && grid_resolution < 8 {
        return Err(invalid("fd_reynolds_oracle", "grid must resolve the pitch with at least 8 cells"));
    }
    if grid_resolution < 2 {
        return Err(invalid("fd_reynolds_oracle", "grid_resolution must be >= 2"));
    }
    let (spacing, min_cells, count_x, count_y) = if perforated {
        (perf.pitch / grid_resolution as f64, MIN_SEGMENT_CELLS, perf.count_x, perf.count_y)
    } else {
        (p.len_x.min(p.len_y) / grid_resolution as f64, 1, 0, 0)
    };
    let (wx, ox) = half_axis_grid(p.len_x, count_x, perf.pitch, perf.hole_side, spacing, min_cells);
    let (wy, oy) = half_axis_grid(p.len_y, count_y, perf.pitch, perf.hole_side, spacing, min_cells);
    let (nx, ny) = (wx.len(), wy.len());

    // Integrated balance per cell, K = 12µ/g³:
    //   film cell: Σ T (p − p_nb) = K·A
    //   open cell: Σ T (p − p_nb) + s·A·p = 0, s = K/(R_h·A_hole)
    // so each channel's conductance is spread over its opening, and open
    // cells conduct laterally HOLE_CONDUCTANCE_RATIO times better.
    let k = p.film_factor();
    let sink = if perforated {
        k / (hole_resistance(perf.hole_side, p.thickness, p.air_viscosity) * perf.hole_side * perf.hole_side)
    } else {
        0.0
    };
    let is_open = |i: usize, j: usize| ox[i] && oy[j];
    let kappa = |i: usize, j: usize| if is_open(i, j) { HOLE_CONDUCTANCE_RATIO } else { 1.0 };
    let n = nx * ny;
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut east = vec![0.0; n];
    let mut north = vec![0.0; n];
    for j in 0..ny {
        for i in 0..nx {
            let idx = j * nx + i;
            let area = wx[i] * wy[j];
            let kc = kappa(i, j);
            if i + 1 < nx {
                east[idx] = wy[j] / (0.5 * wx[i] / kc + 0.5 * wx[i + 1] / kappa(i + 1, j));
            }
            if j + 1 < ny {
                north[idx] = wx[i] / (0.5 * wy[j] / kc + 0.5 * wy[j + 1] / kappa(i, j + 1));
            }
            // The outer rim sees p = 0 half a cell away.
            let mut rim = 0.0;
            if i + 1 == nx {
                rim += 2.0 * kc * wy[j] / wx[i];
            }
            if j + 1 == ny {
                rim += 2.0 * kc * wx[i] / wy[j];
            }
            let open = is_open(i, j);
            diag[idx] = rim + if open { sink * area } else { 0.0 };
            rhs[idx] = if open { 0.0 } else { k * area };
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            let idx = j * nx + i;
            if i + 1 < nx {
                diag[idx] += east[idx];
                diag[idx + 1] += east[idx];
            }
            if j + 1 < ny {
                diag[idx] += north[idx];
                diag[idx + nx] += north[idx];
            }
        }
    }
    let apply = |x: &[f64], y: &mut [f64]| {
        for j in 0..ny {
            for i in 0..nx {
                let idx = j * nx + i;
                let mut acc = diag[idx] * x[idx];
                if i > 0 {
                    acc -= east[idx - 1] * x[idx - 1];
                }
                if i + 1 < nx {
                    acc -= east[idx] * x[idx + 1];
                }
                if j > 0 {
                    acc -= north[idx - nx] * x[idx - nx];
                }
                if j + 1 < ny {
                    acc -= north[idx] * x[idx + nx];
                }
                y[idx] = acc;
            }
        }
    };
    let (pressure, iterations) = pcg(&apply, &diag, &rhs, 1e-10, 20 * (nx + ny) + 2000)?;
    let mut c = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            c += pressure[j * nx + i] * wx[i] * wy[j];
        }
    }
    c *= 4.0;
    Ok(FdOutcome {
        result: DampingResult::new(c, p, DampingMethod::FdSolver, p.regime_warnings()),
        field: mirror_quarter(&wx, &wy, &pressure),
        iterations,
        cells: n,
    })
}

/// Full-plate field from the quarter solution on the positive quadrant.
fn mirror_quarter(wx: &[f64], wy: &[f64], q: &[f64]) -> PressureField {
    let centres = |w: &[f64]| {
        let mut edge = 0.0;
        let pos: Vec<f64> = w
            .iter()
            .map(|d| {
                edge += d;
                edge - 0.5 * d
            })
            .collect();
        pos.iter().rev().map(|v| -v).chain(pos.iter().copied()).collect::<Vec<f64>>()
    };
    let (nx, ny) = (wx.len(), wy.len());
    let fold = |k: usize, n: usize| if k < n { n - 1 - k } else { k - n };
    let mut values = Vec::with_capacity(4 * nx * ny);
    for j in 0..2 * ny {
        for i in 0..2 * nx {
            values.push(q[fold(j, ny) * nx + fold(i, nx)]);
        }
    }
    PressureField {
        x: centres(wx),
        y: centres(wy),
        values,
    }
}

/// Jacobi-preconditioned conjugate gradients.
fn pcg(
    apply: &dyn Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x: Vec<f64> = b.iter().zip(diag).map(|(b, d)| b / d).collect();
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut dir = z.clone();
    let mut rz = dot(&r, &z);
    let b_norm = dot(b, b).sqrt().max(f64::MIN_POSITIVE);
    let mut q = vec![0.0; n];
    for it in 0..max_iter {
        let res = dot(&r, &r).sqrt() / b_norm;
        if res <= tol {
            return Ok((x, it));
        }
        apply(&dir, &mut q);
        let alpha = rz / dot(&dir, &q);
        for i in 0..n {
            x[i] += alpha * dir[i];
            r[i] -= alpha * q[i];
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            dir[i] = z[i] + beta * dir[i];
        }
    }
    let residual = dot(&r, &r).sqrt() / b_norm;
    Err(Error::Convergence {
        iterations: max_iter,
        residual,
    })
}
