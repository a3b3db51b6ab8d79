//! Rigid-body modal analysis of the suspended proofmass and the 8-1 vs 4-1
//! comparison.

use std::fmt;

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector6};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{center_of_mass, inertia_tensor, proofmass_mass, DeviceSpec, MaterialProps, PlateSpec, Variant};
use crate::suspension::{assemble_suspension, Dof, Stiffness6};

/// Participation difference below which a mode is reported as mixed.
pub const TIE_THRESHOLD: f64 = 0.01;

/// Rigid-body mass matrix about the plate centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MassMatrix6(pub Matrix6<f64>);

impl MassMatrix6 {
    pub fn from_plate(plate: &PlateSpec, material: &MaterialProps) -> Self {
        let m = proofmass_mass(plate, material);
        let inertia = inertia_tensor(plate, material);
        let c = center_of_mass(plate, material);
        let cx = Matrix3::new(0.0, -c.z, c.y, c.z, 0.0, -c.x, -c.y, c.x, 0.0) * m;
        let mut mm = Matrix6::zeros();
        mm.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() * m));
        mm.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-cx));
        mm.fixed_view_mut::<3, 3>(3, 0).copy_from(&cx);
        mm.fixed_view_mut::<3, 3>(3, 3).copy_from(&inertia);
        MassMatrix6(mm)
    }

    pub fn matrix(&self) -> &Matrix6<f64> {
        &self.0
    }

    pub fn scaled(&self, s: f64) -> Self {
        MassMatrix6(self.0 * s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum ModeLabel {
    Pure(Dof),
    Mixed(Vec<Dof>),
}

impl ModeLabel {
    pub fn is(&self, dof: Dof) -> bool {
        matches!(self, ModeLabel::Pure(d) if *d == dof)
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeLabel::Pure(d) => f.write_str(d.name()),
            ModeLabel::Mixed(ds) => {
                let names: Vec<_> = ds.iter().map(|d| d.name()).collect();
                write!(f, "mixed({})", names.join("+"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModalResult {
    /// Hz, ascending.
    pub frequencies: Vec<f64>,
    /// M-normalized mode shapes, one per frequency.
    pub shapes: Vec<Vector6<f64>>,
    /// Mass-weighted participation of each coordinate, per mode.
    pub participation: Vec<[f64; 6]>,
    pub labels: Vec<ModeLabel>,
}

/// Solve `Kφ = ω²Mφ` by Cholesky reduction to a standard symmetric problem.
pub fn modal_analysis(k: &Stiffness6, m: &MassMatrix6) -> Result<ModalResult> {
    let chol_m = m
        .0
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { matrix: "mass" })?;
    if k.0.cholesky().is_none() {
        return Err(Error::NotPositiveDefinite { matrix: "stiffness" });
    }
    let l = chol_m.l();
    let l_inv = l
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite { matrix: "mass" })?;
    let a = l_inv * k.0 * l_inv.transpose();
    let a = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut frequencies = Vec::with_capacity(6);
    let mut shapes = Vec::with_capacity(6);
    for &i in &order {
        let lambda = eig.eigenvalues[i];
        if lambda <= 0.0 {
            return Err(Error::NotPositiveDefinite { matrix: "stiffness" });
        }
        frequencies.push(lambda.sqrt() / two_pi);
        let phi: Vector6<f64> = l_inv.transpose() * eig.eigenvectors.column(i);
        // Sign convention: largest component positive.
        let imax = phi.iamax();
        shapes.push(if phi[imax] < 0.0 { -phi } else { phi });
    }
    let unlabeled = ModalResult {
        frequencies,
        shapes,
        participation: Vec::new(),
        labels: Vec::new(),
    };
    Ok(classify_modes(unlabeled, m))
}

/// Label each mode by the coordinate carrying the largest share of its
/// modal mass `φᵢ (Mφ)ᵢ`. Runner-up shares within [`TIE_THRESHOLD`] make
/// the label mixed.
pub fn classify_modes(mut r: ModalResult, m: &MassMatrix6) -> ModalResult {
    r.participation.clear();
    r.labels.clear();
    for phi in &r.shapes {
        let mphi = m.0 * phi;
        let total = phi.dot(&mphi);
        let mut share = [0.0; 6];
        for i in 0..6 {
            share[i] = phi[i] * mphi[i] / total;
        }
        let best = share.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<Dof> = Dof::ALL
            .iter()
            .copied()
            .filter(|d| best - share[d.index()] <= TIE_THRESHOLD)
            .collect();
        r.labels.push(if tied.len() == 1 {
            ModeLabel::Pure(tied[0])
        } else {
            ModeLabel::Mixed(tied)
        });
        r.participation.push(share);
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UsableGap {
    /// Zero-based index into the ascending frequency list.
    pub index: usize,
    pub gap_hz: f64,
}

impl UsableGap {
    pub fn mode_number(&self) -> usize {
        self.index + 1
    }
}

/// Index of the vertical-translation mode and its distance to the nearest
/// adjacent mode.
pub fn usable_mode_gap(r: &ModalResult) -> Result<UsableGap> {
    let tz: Vec<usize> = r
        .labels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is(Dof::Tz))
        .map(|(i, _)| i)
        .collect();
    let index = match tz.as_slice() {
        [i] => *i,
        [] => return Err(Error::Classification("no mode is labeled Tz".into())),
        _ => return Err(Error::Classification(format!("{} modes are labeled Tz", tz.len()))),
    };
    let f = &r.frequencies;
    let mut gap = f64::INFINITY;
    if index > 0 {
        gap = gap.min(f[index] - f[index - 1]);
    }
    if index + 1 < f.len() {
        gap = gap.min(f[index + 1] - f[index]);
    }
    Ok(UsableGap { index, gap_hz: gap })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantReport {
    pub variant: Variant,
    pub modal: ModalResult,
    pub usable: UsableGap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub eight_one: VariantReport,
    pub four_one: VariantReport,
    pub eight_one_gap_exceeds: bool,
    pub gap_ratio: f64,
}

pub fn analyze_variant(spec: &DeviceSpec, variant: Variant) -> Result<VariantReport> {
    let layout = spec.with_variant(variant).suspension_layout()?;
    let k = assemble_suspension(&layout, &spec.material)?;
    let m = MassMatrix6::from_plate(&spec.plate, &spec.material);
    let modal = modal_analysis(&k, &m)?;
    let usable = usable_mode_gap(&modal)?;
    Ok(VariantReport { variant, modal, usable })
}

/// Modal comparison of the 8-1 and 4-1 layouts built from the same design.
pub fn compare_configs(spec: &DeviceSpec) -> Result<ComparisonReport> {
    let (eight_one, four_one) = std::thread::scope(|s| {
        let h = s.spawn(|| analyze_variant(spec, Variant::FourOne));
        let a = analyze_variant(spec, Variant::EightOne);
        (a, h.join().expect("modal worker panicked"))
    });
    Ok(ComparisonReport::new(eight_one?, four_one?))
}

impl ComparisonReport {
    pub fn new(eight_one: VariantReport, four_one: VariantReport) -> Self {
        ComparisonReport {
            eight_one_gap_exceeds: eight_one.usable.gap_hz > four_one.usable.gap_hz,
            gap_ratio: eight_one.usable.gap_hz / four_one.usable.gap_hz,
            eight_one,
            four_one,
        }
    }
}

impl fmt::Display for VariantReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} type", self.variant.name())?;
        writeln!(f, "  mode  freq [Hz]  label")?;
        for (i, (freq, label)) in self.modal.frequencies.iter().zip(&self.modal.labels).enumerate() {
            let mark = if i == self.usable.index { "  <- usable" } else { "" };
            writeln!(f, "  {:>4}  {:>9.1}  {}{}", i + 1, freq, label, mark)?;
        }
        writeln!(
            f,
            "  usable mode {} gap to neighbour {:.1} Hz",
            self.usable.mode_number(),
            self.usable.gap_hz
        )
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.eight_one)?;
        write!(f, "{}", self.four_one)?;
        writeln!(
            f,
            "gap ratio 8-1/4-1 = {:.2} ({})",
            self.gap_ratio,
            if self.eight_one_gap_exceeds { "8-1 better isolated" } else { "4-1 better isolated" }
        )
    }
}
