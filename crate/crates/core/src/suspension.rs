//! Beam stiffness and assembly of the 6-DOF suspension stiffness of one
//! proofmass about its centroid.
//!
//! Generalized coordinates are ordered `(x, y, z, Φx, Φy, Φz)`. Each spring is
//! reduced to a diagonal stiffness at its attach point in its own frame
//! `(along axis, in-plane lateral, z)` plus torsion about the axis, then mapped
//! to the centroid through the rigid-body lever arm.

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector2, Vector3, Vector6};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{
    torsion_constant, BeamSpec, MaterialProps, PlateSpec, SpringShape, SuspensionDesign, Variant,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Dof {
    Tx,
    Ty,
    Tz,
    Rx,
    Ry,
    Rz,
}

impl Dof {
    pub const ALL: [Dof; 6] = [Dof::Tx, Dof::Ty, Dof::Tz, Dof::Rx, Dof::Ry, Dof::Rz];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Dof::Tx => "Tx",
            Dof::Ty => "Ty",
            Dof::Tz => "Tz",
            Dof::Rx => "Rx",
            Dof::Ry => "Ry",
            Dof::Rz => "Rz",
        }
    }
}

/// Lumped stiffness of one spring at its attach point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeamStiffness {
    /// N/m
    pub axial: f64,
    /// N/m
    pub bend_in_plane: f64,
    /// N/m
    pub bend_out_of_plane: f64,
    /// N·m/rad
    pub torsion: f64,
    pub axis: Vector2<f64>,
    pub attach: Vector3<f64>,
    pub warnings: Vec<String>,
}

/// L-shaped two-segment spring. The thigh starts at the anchor; the shin
/// starts at the junction and ends at the proofmass attach point. Each
/// segment's `attach` is its starting point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrabLegSpec {
    pub thigh: BeamSpec,
    pub shin: BeamSpec,
}

impl CrabLegSpec {
    /// Crab leg ending at `tip`, with thigh along `axis` and the shin turned
    /// +90° in plane.
    pub fn ending_at(tip: Vector3<f64>, axis: Vector2<f64>, thigh_len: f64, shin_len: f64, width: f64, thickness: f64) -> Self {
        let shin_axis = Vector2::new(-axis.y, axis.x);
        let junction = tip - Vector3::new(shin_axis.x, shin_axis.y, 0.0) * shin_len;
        let anchor = junction - Vector3::new(axis.x, axis.y, 0.0) * thigh_len;
        CrabLegSpec {
            thigh: BeamSpec {
                length: thigh_len,
                width,
                thickness,
                axis,
                attach: anchor,
            },
            shin: BeamSpec {
                length: shin_len,
                width,
                thickness,
                axis: shin_axis,
                attach: junction,
            },
        }
    }

    pub fn tip(&self) -> Vector3<f64> {
        self.shin.attach + planar(self.shin.axis) * self.shin.length
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.thigh.length > 0.0) {
            return Err(invalid("CrabLegSpec", "thigh length must be > 0"));
        }
        if self.thigh.axis.dot(&self.shin.axis).abs() > 1e-9 {
            return Err(invalid("CrabLegSpec", "thigh and shin must be perpendicular"));
        }
        let junction = self.thigh.attach + planar(self.thigh.axis) * self.thigh.length;
        let scale = self.thigh.length + self.shin.length;
        if (junction - self.shin.attach).norm() > 1e-9 * scale {
            return Err(invalid("CrabLegSpec", "thigh must end where the shin starts"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum Flexure {
    Straight(BeamSpec),
    CrabLeg(CrabLegSpec),
}

impl Flexure {
    pub fn attach(&self) -> Vector3<f64> {
        match self {
            Flexure::Straight(b) => b.attach,
            Flexure::CrabLeg(c) => c.tip(),
        }
    }

    pub fn axis(&self) -> Vector2<f64> {
        match self {
            Flexure::Straight(b) => b.axis,
            Flexure::CrabLeg(c) => c.thigh.axis,
        }
    }

    fn same_shape(&self, other: &Flexure) -> bool {
        let dims = |f: &Flexure| match f {
            Flexure::Straight(b) => [b.length, b.width, b.thickness, 0.0],
            Flexure::CrabLeg(c) => [c.thigh.length, c.shin.length, c.thigh.width, c.thigh.thickness],
        };
        dims(self) == dims(other) && std::mem::discriminant(self) == std::mem::discriminant(other)
    }

    pub fn stiffness(&self, mat: &MaterialProps) -> Result<BeamStiffness> {
        match self {
            Flexure::Straight(b) => Ok(beam_stiffness_guided(b, mat)),
            Flexure::CrabLeg(c) => crab_leg_stiffness(c, mat),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spring {
    Single(Flexure),
    /// Two identical springs acting in parallel, mirrored about the plate
    /// mid-plane.
    DualPair { top: Flexure, bottom: Flexure },
}

impl Spring {
    pub fn flexures(&self) -> Vec<&Flexure> {
        match self {
            Spring::Single(f) => vec![f],
            Spring::DualPair { top, bottom } => vec![top, bottom],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuspensionLayout {
    pub variant: Variant,
    pub springs: Vec<Spring>,
    pub plane_offsets: Vec<f64>,
}

impl SuspensionLayout {
    pub fn from_design(design: &SuspensionDesign, plate: &PlateSpec, variant: Variant) -> Result<Self> {
        let (dims, planes) = match variant {
            Variant::EightOne => (
                design.vertical_beam,
                vec![0.5 * plate.thickness, -0.5 * plate.thickness],
            ),
            Variant::FourOne => (design.single_plane_beam, vec![design.single_plane_z]),
        };
        let flexure = |site: &Vector2<f64>, z: f64| -> Flexure {
            let tip = Vector3::new(site.x, site.y, z);
            match design.shape {
                SpringShape::Straight => Flexure::Straight(dims.beam().with_axis(design.axis).at(tip)),
                SpringShape::CrabLeg { thigh, shin } => Flexure::CrabLeg(CrabLegSpec::ending_at(
                    tip,
                    design.axis,
                    thigh,
                    shin,
                    dims.width,
                    dims.thickness,
                )),
            }
        };
        let springs = design
            .sites
            .iter()
            .map(|site| match variant {
                Variant::EightOne => Spring::DualPair {
                    top: flexure(site, planes[0]),
                    bottom: flexure(site, planes[1]),
                },
                Variant::FourOne => Spring::Single(flexure(site, planes[0])),
            })
            .collect();
        let layout = SuspensionLayout {
            variant,
            springs,
            plane_offsets: planes,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        for spring in &self.springs {
            for f in spring.flexures() {
                match f {
                    Flexure::Straight(b) => b.validate()?,
                    Flexure::CrabLeg(c) => c.validate()?,
                }
            }
        }
        match self.variant {
            Variant::EightOne => {
                if self.springs.len() != 4 {
                    return Err(invalid(
                        "SuspensionLayout",
                        format!("8-1 layout needs exactly 4 dual-beam pairs, got {}", self.springs.len()),
                    ));
                }
                for s in &self.springs {
                    let Spring::DualPair { top, bottom } = s else {
                        return Err(invalid("SuspensionLayout", "8-1 layout accepts only dual-beam pairs"));
                    };
                    let (a, b) = (top.attach(), bottom.attach());
                    let tol = 1e-9 * (a.norm() + b.norm() + 1e-6);
                    if (a.x - b.x).abs() > tol || (a.y - b.y).abs() > tol || (a.z + b.z).abs() > tol || !top.same_shape(bottom)
                    {
                        return Err(invalid(
                            "SuspensionLayout",
                            "dual-beam pair must be mirror-symmetric about the plate mid-plane",
                        ));
                    }
                }
            }
            Variant::FourOne => {
                if self.springs.len() != 4 {
                    return Err(invalid(
                        "SuspensionLayout",
                        format!("4-1 layout needs exactly 4 single beams, got {}", self.springs.len()),
                    ));
                }
                let mut z = None;
                for s in &self.springs {
                    let Spring::Single(f) = s else {
                        return Err(invalid("SuspensionLayout", "4-1 layout accepts only single beams"));
                    };
                    let fz = f.attach().z;
                    match z {
                        None => z = Some(fz),
                        Some(z0) if (z0 - fz).abs() > 1e-12 => {
                            return Err(invalid("SuspensionLayout", "4-1 beams must share one plane"))
                        }
                        _ => {}
                    }
                }
            }
        }
        // Attach points must be symmetric about both in-plane axes.
        let pts: Vec<Vector3<f64>> = self
            .springs
            .iter()
            .flat_map(|s| s.flexures().into_iter().map(|f| f.attach()))
            .collect();
        let scale = pts.iter().map(|p| p.norm()).fold(1e-6, f64::max);
        for mirror in [Vector3::new(-1.0, 1.0, 1.0), Vector3::new(1.0, -1.0, 1.0)] {
            for p in &pts {
                let q = p.component_mul(&mirror);
                if !pts.iter().any(|r| (r - q).norm() <= 1e-9 * scale) {
                    return Err(invalid(
                        "SuspensionLayout",
                        "attach points must be symmetric about both in-plane axes",
                    ));
                }
            }
        }
        Ok(())
    }

    /// A copy with every flexure's cross-section width scaled by `s`.
    pub fn scale_widths(&self, s: f64) -> SuspensionLayout {
        let scale = |f: &Flexure| -> Flexure {
            match *f {
                Flexure::Straight(mut b) => {
                    b.width *= s;
                    Flexure::Straight(b)
                }
                Flexure::CrabLeg(mut c) => {
                    c.thigh.width *= s;
                    c.shin.width *= s;
                    Flexure::CrabLeg(c)
                }
            }
        };
        let springs = self
            .springs
            .iter()
            .map(|sp| match sp {
                Spring::Single(f) => Spring::Single(scale(f)),
                Spring::DualPair { top, bottom } => Spring::DualPair {
                    top: scale(top),
                    bottom: scale(bottom),
                },
            })
            .collect();
        SuspensionLayout {
            springs,
            ..self.clone()
        }
    }
}

/// 6×6 suspension stiffness over `(x, y, z, Φx, Φy, Φz)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stiffness6(pub Matrix6<f64>);

impl Stiffness6 {
    pub fn get(&self, a: Dof, b: Dof) -> f64 {
        self.0[(a.index(), b.index())]
    }

    pub fn matrix(&self) -> &Matrix6<f64> {
        &self.0
    }
}

fn planar(v: Vector2<f64>) -> Vector3<f64> {
    Vector3::new(v.x, v.y, 0.0)
}

fn skew(r: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -r.z, r.y, r.z, 0.0, -r.x, -r.y, r.x, 0.0)
}

/// Rows are the spring's local frame (axis, lateral, z) in device coordinates.
fn local_frame(axis: Vector2<f64>) -> Matrix3<f64> {
    let e1 = planar(axis);
    let e2 = Vector3::z().cross(&e1);
    Matrix3::from_rows(&[e1.transpose(), e2.transpose(), Vector3::z().transpose()])
}

/// Guided-guided Euler-Bernoulli beam: one end clamped to the anchor, the
/// other clamped to a body that translates without rotating.
pub fn beam_stiffness_guided(beam: &BeamSpec, mat: &MaterialProps) -> BeamStiffness {
    let e = mat.youngs_modulus;
    let l = beam.length;
    let (w, t) = (beam.width, beam.thickness);
    let i_in_plane = t * w.powi(3) / 12.0;
    let i_out_of_plane = w * t.powi(3) / 12.0;
    let mut warnings = Vec::new();
    if !beam.is_slender() {
        warnings.push(format!(
            "beam {:.1} µm long is not slender (length < 5x its largest cross dimension)",
            l * 1e6
        ));
    }
    BeamStiffness {
        axial: e * w * t / l,
        bend_in_plane: 12.0 * e * i_in_plane / l.powi(3),
        bend_out_of_plane: 12.0 * e * i_out_of_plane / l.powi(3),
        torsion: mat.shear_modulus() * torsion_constant(w, t) / l,
        axis: beam.axis,
        attach: beam.attach,
        warnings,
    }
}

/// Cantilever flexibility of a straight segment at its free end, in device
/// coordinates, for loads `(f, m)` applied at that end.
fn cantilever_flexibility(beam: &BeamSpec, mat: &MaterialProps) -> Matrix6<f64> {
    let e = mat.youngs_modulus;
    let l = beam.length;
    let (w, t) = (beam.width, beam.thickness);
    let ei_lat = e * t * w.powi(3) / 12.0;
    let ei_out = e * w * t.powi(3) / 12.0;
    let gj = mat.shear_modulus() * torsion_constant(w, t);
    let mut f = Matrix6::zeros();
    f[(0, 0)] = l / (e * w * t);
    // lateral bending: (δy, θz) from (fy, mz)
    f[(1, 1)] = l.powi(3) / (3.0 * ei_lat);
    f[(1, 5)] = l * l / (2.0 * ei_lat);
    f[(5, 1)] = f[(1, 5)];
    f[(5, 5)] = l / ei_lat;
    // out-of-plane bending: (δz, θy) from (fz, my)
    f[(2, 2)] = l.powi(3) / (3.0 * ei_out);
    f[(2, 4)] = -l * l / (2.0 * ei_out);
    f[(4, 2)] = f[(2, 4)];
    f[(4, 4)] = l / ei_out;
    f[(3, 3)] = l / gj;
    let r = local_frame(beam.axis);
    let mut rb = Matrix6::zeros();
    rb.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    rb.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
    rb.transpose() * f * rb
}

/// Transfers a load at `p` into the equivalent load at `q`, displacements
/// the other way round (transpose).
fn load_transfer(p: &Vector3<f64>, q: &Vector3<f64>) -> Matrix6<f64> {
    let mut b = Matrix6::identity();
    b.fixed_view_mut::<3, 3>(3, 0).copy_from(&skew(&(p - q)));
    b
}

/// L-shaped spring. Segment compliances add along the load path: each
/// segment's cantilever flexibility is carried to the tip through its lever
/// arm and summed, then the tip is guided (rotation held at zero).
/// Directional stiffnesses are reciprocals of the guided translational
/// compliance along the thigh axis, the in-plane normal and z.
pub fn crab_leg_stiffness(leg: &CrabLegSpec, mat: &MaterialProps) -> Result<BeamStiffness> {
    leg.validate()?;
    let tip = leg.tip();
    let mut flex = Matrix6::zeros();
    let mut warnings = Vec::new();
    for seg in [&leg.thigh, &leg.shin] {
        if seg.length <= 0.0 {
            continue;
        }
        if !seg.is_slender() {
            warnings.push(format!("crab-leg segment {:.1} µm long is not slender", seg.length * 1e6));
        }
        let end = seg.attach + planar(seg.axis) * seg.length;
        let b = load_transfer(&tip, &end);
        flex += b.transpose() * cantilever_flexibility(seg, mat) * b;
    }
    let stiff = flex
        .try_inverse()
        .ok_or_else(|| invalid("CrabLegSpec", "segment flexibility is singular"))?;
    let k_tt: Matrix3<f64> = stiff.fixed_view::<3, 3>(0, 0).into();
    let c_tt = k_tt
        .try_inverse()
        .ok_or_else(|| invalid("CrabLegSpec", "guided stiffness is singular"))?;
    let r = local_frame(leg.thigh.axis);
    let c_local = r * c_tt * r.transpose();
    let c_rot = r * flex.fixed_view::<3, 3>(3, 3) * r.transpose();
    Ok(BeamStiffness {
        axial: 1.0 / c_local[(0, 0)],
        bend_in_plane: 1.0 / c_local[(1, 1)],
        bend_out_of_plane: 1.0 / c_local[(2, 2)],
        torsion: 1.0 / c_rot[(0, 0)],
        axis: leg.thigh.axis,
        attach: tip,
        warnings,
    })
}

/// Rigid-body map from centroid coordinates to the attach point, expressed
/// in the spring frame: `[u_attach; φ] = T · [u; Φ]`.
fn attach_map(attach: &Vector3<f64>, axis: Vector2<f64>) -> Matrix6<f64> {
    let mut t = Matrix6::identity();
    t.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(attach)));
    let r = local_frame(axis);
    let mut rb = Matrix6::zeros();
    rb.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    rb.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
    rb * t
}

/// Contribution `Tᵀ k T` of one spring to the centroid stiffness.
pub fn spring_contribution(k: &BeamStiffness) -> Matrix6<f64> {
    let local = Matrix6::from_diagonal(&Vector6::new(
        k.axial,
        k.bend_in_plane,
        k.bend_out_of_plane,
        k.torsion,
        0.0,
        0.0,
    ));
    let t = attach_map(&k.attach, k.axis);
    t.transpose() * local * t
}

/// Sum of spring contributions about the proofmass centroid.
pub fn assemble_suspension(layout: &SuspensionLayout, mat: &MaterialProps) -> Result<Stiffness6> {
    let mut k = Matrix6::zeros();
    for spring in &layout.springs {
        for f in spring.flexures() {
            k += spring_contribution(&f.stiffness(mat)?);
        }
    }
    k = (k + k.transpose()) * 0.5;
    check_constrained(&k)?;
    Ok(Stiffness6(k))
}

fn check_constrained(k: &Matrix6<f64>) -> Result<()> {
    // Scale rotations by a characteristic length so the eigenvalues are
    // comparable across translation and rotation blocks.
    let trans = (k[(0, 0)] + k[(1, 1)] + k[(2, 2)]).max(f64::MIN_POSITIVE);
    let rot = (k[(3, 3)] + k[(4, 4)] + k[(5, 5)]).max(f64::MIN_POSITIVE);
    let len = (rot / trans).sqrt();
    let d = Matrix6::from_diagonal(&Vector6::new(1.0, 1.0, 1.0, 1.0 / len, 1.0 / len, 1.0 / len));
    let scaled = d * k * d;
    if scaled.cholesky().is_some() {
        let eig = SymmetricEigen::new(scaled);
        let max = eig.eigenvalues.amax();
        let min = eig.eigenvalues.min();
        if min > 1e-12 * max {
            return Ok(());
        }
    }
    let eig = SymmetricEigen::new(scaled);
    let (imin, &min) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("six eigenvalues");
    let v = eig.eigenvectors.column(imin);
    let dof = (0..6).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap_or(0);
    Err(Error::RankDeficient {
        dof: Dof::ALL[dof].name(),
        eigenvalue: min,
    })
}
