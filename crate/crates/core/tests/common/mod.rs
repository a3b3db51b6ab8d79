#![allow(dead_code)]

use forkgyro::dynamics::{build_lumped_model, DriveConfig, LumpedGyroModel};
use forkgyro::geometry::DeviceSpec;
use forkgyro::readout::ReadoutChain;
use forkgyro::sensing::CapacitorSpec;
use forkgyro::EPSILON_0;
use nalgebra::{Matrix6, Vector6};

/// Calibrated model, readout chain and resonant drive of the shipped config.
pub fn calibrated() -> (DeviceSpec, LumpedGyroModel, ReadoutChain, DriveConfig) {
    let spec = DeviceSpec::reference();
    let model = build_lumped_model(&spec, spec.calibration.as_ref()).expect("reference config calibrates");
    let drive = DriveConfig::at_resonance(&model, spec.drive.target_amplitude);
    let chain = spec.readout;
    (spec, model, chain, drive)
}

/// Cyclic Jacobi: eigenvalues and column eigenvectors of a symmetric matrix.
pub fn jacobi(mut a: Matrix6<f64>) -> (Vector6<f64>, Matrix6<f64>) {
    let mut v = Matrix6::identity();
    for _sweep in 0..100 {
        let off: f64 = (0..6)
            .flat_map(|i| (0..6).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let scale: f64 = a.diagonal().iter().map(|d| d * d).sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..5 {
            for q in p + 1..6 {
                if a[(p, q)].abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let mut r = Matrix6::identity();
                r[(p, p)] = c;
                r[(q, q)] = c;
                r[(p, q)] = s;
                r[(q, p)] = -s;
                a = r.transpose() * a * r;
                v *= r;
            }
        }
    }
    (a.diagonal(), v)
}

/// `M^{-1/2}` through the Jacobi decomposition of M.
pub fn inv_sqrt(m: &Matrix6<f64>) -> Matrix6<f64> {
    let (d, v) = jacobi(*m);
    v * Matrix6::from_diagonal(&d.map(|x| 1.0 / x.sqrt())) * v.transpose()
}

/// Sorted ω² and M-normalized vectors of `Kφ = ω²Mφ`.
pub fn generalized_eigen(k: &Matrix6<f64>, m: &Matrix6<f64>) -> Vec<(f64, Vector6<f64>)> {
    let w = inv_sqrt(m);
    let (d, v) = jacobi(w * k * w);
    let mut pairs: Vec<_> = (0..6).map(|i| (d[i], w * v.column(i))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Nodes and weights on [−1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// ε ∫∫ (1/g − 1/g0) over the electrode, g = g0 − z − θy·x − θx·y, written
/// as w/(g0 (g0 − w)) to avoid cancellation.
pub fn delta_c_quadrature(spec: &CapacitorSpec, z: f64, theta_x: f64, theta_y: f64) -> f64 {
    let rule = gauss_legendre(24);
    let (a, b, g0) = (0.5 * spec.electrode_len_x, 0.5 * spec.electrode_len_y, spec.nominal_gap);
    let panels = 8;
    let mut sum = 0.0;
    for pi in 0..panels {
        for pj in 0..panels {
            let (x0, x1) = (-a + 2.0 * a * pi as f64 / panels as f64, -a + 2.0 * a * (pi + 1) as f64 / panels as f64);
            let (y0, y1) = (-b + 2.0 * b * pj as f64 / panels as f64, -b + 2.0 * b * (pj + 1) as f64 / panels as f64);
            let (hx, hy) = (0.5 * (x1 - x0), 0.5 * (y1 - y0));
            for &(u, wu) in &rule {
                let x = 0.5 * (x0 + x1) + hx * u;
                for &(v, wv) in &rule {
                    let y = 0.5 * (y0 + y1) + hy * v;
                    let w = z + theta_y * x + theta_x * y;
                    sum += wu * wv * hx * hy * w / (g0 * (g0 - w));
                }
            }
        }
    }
    EPSILON_0 * sum
}
