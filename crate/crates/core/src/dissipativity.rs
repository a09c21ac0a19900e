//! Extended-dissipativity performance machinery.
//!
//! A performance spec is the matrix tuple (phi, psi1, psi2, psi3) plus the
//! scalar rho; the classical indices (H-infinity, energy-to-peak, passivity,
//! (Q,S,R)-dissipativity) are presets of that tuple. The supply rate
//! J = z' psi1 z + 2 z' psi2 w + w' psi3 w is integrated along trajectories
//! to certify the index a-posteriori, independent of the synthesis LMIs.

use crate::fuzzy_model::LargeScaleSystem;
use crate::simulate::Trajectory;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DissipativityError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("trajectory is missing required channels: {0}")]
    MissingChannel(String),
}

/// Which preset the spec was built from (informational; the matrices are
/// what the solver and certifier consume).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetKind {
    HInfinity,
    EnergyToPeak,
    Passivity,
    VeryStrictPassivity,
    Qsr,
    Custom,
}

/// Extended-dissipativity performance specification.
#[derive(Debug, Clone)]
pub struct PerformanceSpec {
    pub phi: DMatrix<f64>,
    pub psi1: DMatrix<f64>,
    pub psi2: DMatrix<f64>,
    pub psi3: DMatrix<f64>,
    pub rho: f64,
    pub preset: PresetKind,
}

impl PerformanceSpec {
    pub fn output_dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.psi3.nrows()
    }

    /// H-infinity level gamma: phi = 0, psi1 = -I, psi2 = 0, psi3 = gamma^2 I.
    pub fn h_infinity(gamma: f64, n_z: usize, m_w: usize) -> Result<Self, DissipativityError> {
        if gamma <= 0.0 {
            return Err(DissipativityError::Parameter(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        Ok(Self {
            phi: DMatrix::zeros(n_z, n_z),
            psi1: DMatrix::identity(n_z, n_z) * -1.0,
            psi2: DMatrix::zeros(n_z, m_w),
            psi3: DMatrix::identity(m_w, m_w) * gamma * gamma,
            rho: 0.0,
            preset: PresetKind::HInfinity,
        })
    }

    /// Energy-to-peak (L2-Linf) level gamma: phi = I, psi1 = 0, psi2 = 0,
    /// psi3 = gamma^2 I.
    pub fn energy_to_peak(gamma: f64, n_z: usize, m_w: usize) -> Result<Self, DissipativityError> {
        if gamma <= 0.0 {
            return Err(DissipativityError::Parameter(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        Ok(Self {
            phi: DMatrix::identity(n_z, n_z),
            psi1: DMatrix::zeros(n_z, n_z),
            psi2: DMatrix::zeros(n_z, m_w),
            psi3: DMatrix::identity(m_w, m_w) * gamma * gamma,
            rho: 0.0,
            preset: PresetKind::EnergyToPeak,
        })
    }

    /// Passivity with margin gamma: phi = 0, psi1 = 0, psi2 = I, psi3 =
    /// gamma I. Requires square channels (n_z = m_w).
    pub fn passivity(gamma: f64, n_z: usize, m_w: usize) -> Result<Self, DissipativityError> {
        if gamma <= 0.0 {
            return Err(DissipativityError::Parameter(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        if n_z != m_w {
            return Err(DissipativityError::Dimension(format!(
                "passivity needs matching channel dimensions (n_z = {n_z}, m_w = {m_w})"
            )));
        }
        Ok(Self {
            phi: DMatrix::zeros(n_z, n_z),
            psi1: DMatrix::zeros(n_z, n_z),
            psi2: DMatrix::identity(n_z, m_w),
            psi3: DMatrix::identity(m_w, m_w) * gamma,
            rho: 0.0,
            preset: PresetKind::Passivity,
        })
    }

    /// Very strict passivity: psi1 = -eps I, psi2 = I, psi3 = -sigma I.
    pub fn very_strict_passivity(
        eps: f64,
        sigma: f64,
        n_z: usize,
        m_w: usize,
    ) -> Result<Self, DissipativityError> {
        if eps <= 0.0 || sigma <= 0.0 {
            return Err(DissipativityError::Parameter(format!(
                "eps and sigma must be positive, got {eps}, {sigma}"
            )));
        }
        if n_z != m_w {
            return Err(DissipativityError::Dimension(format!(
                "very strict passivity needs matching channel dimensions (n_z = {n_z}, m_w = {m_w})"
            )));
        }
        Ok(Self {
            phi: DMatrix::zeros(n_z, n_z),
            psi1: DMatrix::identity(n_z, n_z) * -eps,
            psi2: DMatrix::identity(n_z, m_w),
            psi3: DMatrix::identity(m_w, m_w) * -sigma,
            rho: 0.0,
            preset: PresetKind::VeryStrictPassivity,
        })
    }

    /// Strict (Q, S, R)-dissipativity with margin alpha: psi1 = Q, psi2 = S,
    /// psi3 = R - alpha I.
    pub fn qsr(
        q: DMatrix<f64>,
        s: DMatrix<f64>,
        r: DMatrix<f64>,
        alpha: f64,
    ) -> Result<Self, DissipativityError> {
        let n_z = q.nrows();
        let m_w = r.nrows();
        if q.ncols() != n_z || r.ncols() != m_w || s.shape() != (n_z, m_w) {
            return Err(DissipativityError::Dimension(
                "Q and R must be square, S must be n_z x m_w".into(),
            ));
        }
        if alpha <= 0.0 {
            return Err(DissipativityError::Parameter(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        Ok(Self {
            phi: DMatrix::zeros(n_z, n_z),
            psi1: q,
            psi2: s,
            psi3: r - DMatrix::identity(m_w, m_w) * alpha,
            rho: 0.0,
            preset: PresetKind::Qsr,
        })
    }
}

/// One item of the standing assumption on (phi, psi1, psi2, psi3).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionItem {
    pub index: usize,
    pub description: String,
    pub passed: bool,
}

/// Itemized validation report; `passed` is the conjunction of all items.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub items: Vec<AssumptionItem>,
    pub passed: bool,
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Check the five standing conditions of the performance tuple against the
/// concrete system (every rule's D2 matrix participates).
pub fn validate_standing_assumptions(
    spec: &PerformanceSpec,
    system: &LargeScaleSystem,
) -> Result<AssumptionReport, DissipativityError> {
    const TOL: f64 = 1e-10;
    for sub in &system.subsystems {
        if sub.output_dim != spec.output_dim() || sub.disturbance_dim != spec.disturbance_dim() {
            return Err(DissipativityError::Dimension(format!(
                "subsystem {} has (n_z, m_w) = ({}, {}), spec expects ({}, {})",
                sub.index,
                sub.output_dim,
                sub.disturbance_dim,
                spec.output_dim(),
                spec.disturbance_dim()
            )));
        }
    }

    let sym_ok = (&spec.phi - spec.phi.transpose()).amax() < TOL
        && (&spec.psi1 - spec.psi1.transpose()).amax() < TOL
        && (&spec.psi3 - spec.psi3.transpose()).amax() < TOL;
    let sign_ok = min_eig(&spec.phi) >= -TOL && min_eig(&(&spec.psi1 * -1.0)) >= -TOL;

    let phi_norm = spectral_norm(&spec.phi);
    let d2_norms: Vec<f64> = system
        .subsystems
        .iter()
        .flat_map(|s| s.rules.iter().map(|r| spectral_norm(&r.d2)))
        .collect();
    let item3 = d2_norms.iter().all(|&d| d * phi_norm < TOL);
    let item4 = (spectral_norm(&spec.psi1) + spectral_norm(&spec.psi2)) * phi_norm < TOL;

    let mut item5 = true;
    for sub in &system.subsystems {
        for rule in &sub.rules {
            let d2 = &rule.d2;
            let q = d2.transpose() * &spec.psi1 * d2
                + d2.transpose() * &spec.psi2
                + spec.psi2.transpose() * d2
                + &spec.psi3;
            if min_eig(&q) <= 0.0 {
                item5 = false;
            }
        }
    }

    let items = vec![
        AssumptionItem {
            index: 1,
            description: "phi, psi1, psi3 symmetric".into(),
            passed: sym_ok,
        },
        AssumptionItem {
            index: 2,
            description: "phi >= 0 and psi1 <= 0".into(),
            passed: sign_ok,
        },
        AssumptionItem {
            index: 3,
            description: "||D2|| * ||phi|| = 0 for every rule".into(),
            passed: item3,
        },
        AssumptionItem {
            index: 4,
            description: "(||psi1|| + ||psi2||) * ||phi|| = 0".into(),
            passed: item4,
        },
        AssumptionItem {
            index: 5,
            description: "D2' psi1 D2 + D2' psi2 + psi2' D2 + psi3 > 0 for every rule".into(),
            passed: item5,
        },
    ];
    let passed = items.iter().all(|it| it.passed);
    Ok(AssumptionReport { items, passed })
}

/// Supply rate J = z' psi1 z + 2 z' psi2 w + w' psi3 w.
pub fn supply_rate(
    spec: &PerformanceSpec,
    z: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<f64, DissipativityError> {
    if z.len() != spec.output_dim() || w.len() != spec.disturbance_dim() {
        return Err(DissipativityError::Dimension(format!(
            "expected (n_z, m_w) = ({}, {}), got ({}, {})",
            spec.output_dim(),
            spec.disturbance_dim(),
            z.len(),
            w.len()
        )));
    }
    let a = (z.transpose() * &spec.psi1 * z)[(0, 0)];
    let b = (z.transpose() * &spec.psi2 * w)[(0, 0)];
    let c = (w.transpose() * &spec.psi3 * w)[(0, 0)];
    Ok(a + 2.0 * b + c)
}

/// Certification outcome: the margin curve m(t) = int_0^t J ds - z(t)' phi
/// z(t) and its minimum over the sampled horizon. The index holds for a
/// given rho iff `min_margin >= rho`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificationReport {
    pub margins: Vec<f64>,
    pub min_margin: f64,
    /// rho carried by the spec (the preset value, usually 0).
    pub rho: f64,
    /// pass/fail against the spec's rho.
    pub passed: bool,
}

impl CertificationReport {
    pub fn passes_for(&self, rho: f64) -> bool {
        self.min_margin >= rho
    }
}

/// Trapezoidal certification of the extended-dissipativity inequality along
/// a simulated trajectory. All subsystems contribute to J and to the
/// terminal phi-weighted output term.
pub fn certify(
    traj: &Trajectory,
    spec: &PerformanceSpec,
) -> Result<CertificationReport, DissipativityError> {
    let steps = traj.times.len();
    if steps == 0 {
        return Err(DissipativityError::MissingChannel("empty trajectory".into()));
    }
    let n_sub = traj.outputs.len();
    if n_sub == 0 || traj.disturbances.len() != n_sub {
        return Err(DissipativityError::MissingChannel(
            "outputs and disturbances required".into(),
        ));
    }
    // pointwise J(t) summed over subsystems
    let mut j = vec![0.0; steps];
    for i in 0..n_sub {
        if traj.outputs[i].len() != steps || traj.disturbances[i].len() != steps {
            return Err(DissipativityError::MissingChannel(format!(
                "subsystem {i}: channel length does not match time grid"
            )));
        }
        for (t, jt) in j.iter_mut().enumerate() {
            *jt += supply_rate(spec, &traj.outputs[i][t], &traj.disturbances[i][t])?;
        }
    }
    let mut margins = Vec::with_capacity(steps);
    let mut integral = 0.0;
    for t in 0..steps {
        if t > 0 {
            let dt = traj.times[t] - traj.times[t - 1];
            integral += 0.5 * dt * (j[t - 1] + j[t]);
        }
        let mut terminal = 0.0;
        for zi in traj.outputs.iter().map(|ch| &ch[t]) {
            terminal += (zi.transpose() * &spec.phi * zi)[(0, 0)];
        }
        margins.push(integral - terminal);
    }
    let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(CertificationReport {
        margins,
        min_margin,
        rho: spec.rho,
        passed: min_margin >= spec.rho,
    })
}

/// Both sides of the quadratic sum inequality
/// (sum x_k)' W (sum x_k) <= d * sum x_k' W x_k for PSD W, d = number of
/// vectors. Returns (lhs, rhs).
pub fn jensen_bound(
    vectors: &[DVector<f64>],
    w: &DMatrix<f64>,
) -> Result<(f64, f64), DissipativityError> {
    if w.nrows() != w.ncols() {
        return Err(DissipativityError::Dimension("W must be square".into()));
    }
    if min_eig(w) < -1e-10 {
        return Err(DissipativityError::Parameter(
            "W must be positive semidefinite".into(),
        ));
    }
    let d = vectors.len();
    if d == 0 {
        return Ok((0.0, 0.0));
    }
    let n = w.nrows();
    let mut total = DVector::zeros(n);
    let mut rhs = 0.0;
    for x in vectors {
        if x.len() != n {
            return Err(DissipativityError::Dimension(format!(
                "vector length {} does not match W dimension {n}",
                x.len()
            )));
        }
        total += x;
        rhs += (x.transpose() * w * x)[(0, 0)];
    }
    let lhs = (total.transpose() * w * &total)[(0, 0)];
    Ok((lhs, d as f64 * rhs))
}

/// Both sides of the scaled cross-term bound
/// 2 x' y <= kappa^{-1} x' x + kappa y' y for kappa > 0. Returns (lhs, rhs).
pub fn young_bound(
    x: &DVector<f64>,
    y: &DVector<f64>,
    kappa: f64,
) -> Result<(f64, f64), DissipativityError> {
    if kappa <= 0.0 {
        return Err(DissipativityError::Parameter(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    if x.len() != y.len() {
        return Err(DissipativityError::Dimension(format!(
            "vector lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let lhs = 2.0 * x.dot(y);
    let rhs = x.dot(x) / kappa + kappa * y.dot(y);
    Ok((lhs, rhs))
}
