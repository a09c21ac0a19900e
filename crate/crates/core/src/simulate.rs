//! Closed- and open-loop integration of the large-scale fuzzy dynamics.
//!
//! Fixed-step RK4 on the grade-weighted vector field; the plant's "true"
//! grades use the subsystem's type-reduction realization (the alpha/beta
//! defaults unless the model overrides them). Disturbance signals are
//! evaluated analytically at the RK4 stage times.

use crate::fuzzy_model::{LargeScaleSystem, ModelError};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("invalid simulation parameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("disturbance carries no energy; attenuation ratio undefined")]
    ZeroDisturbance,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Feedback gains: `gains[i][j]` is the m x n gain of subsystem i's
/// controller rule j.
pub type GainTable = Vec<Vec<DMatrix<f64>>>;

/// Per-subsystem disturbance signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceSpec {
    Zero,
    /// a * exp(-b t) * sin(c t), applied to every disturbance channel.
    DecayingSinusoid { a: f64, b: f64, c: f64 },
    /// Linear interpolation between samples; zero outside the sampled range.
    Tabulated { times: Vec<f64>, values: Vec<Vec<f64>> },
}

impl DisturbanceSpec {
    pub fn validate(&self, m_w: usize) -> Result<(), SimulateError> {
        match self {
            DisturbanceSpec::Zero => Ok(()),
            DisturbanceSpec::DecayingSinusoid { a, b, c } => {
                if !(a.is_finite() && b.is_finite() && c.is_finite()) {
                    return Err(SimulateError::Parameter(
                        "decaying sinusoid parameters must be finite".into(),
                    ));
                }
                Ok(())
            }
            DisturbanceSpec::Tabulated { times, values } => {
                if times.len() != values.len() || times.is_empty() {
                    return Err(SimulateError::Parameter(
                        "tabulated disturbance needs matching, nonempty times and values".into(),
                    ));
                }
                if !times.windows(2).all(|w| w[0] < w[1]) {
                    return Err(SimulateError::Parameter(
                        "tabulated disturbance times must be strictly increasing".into(),
                    ));
                }
                if values.iter().any(|v| v.len() != m_w) {
                    return Err(SimulateError::Dimension(format!(
                        "tabulated disturbance values must have {m_w} channels"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, t: f64, m_w: usize) -> DVector<f64> {
        match self {
            DisturbanceSpec::Zero => DVector::zeros(m_w),
            DisturbanceSpec::DecayingSinusoid { a, b, c } => {
                DVector::from_element(m_w, a * (-b * t).exp() * (c * t).sin())
            }
            DisturbanceSpec::Tabulated { times, values } => {
                if t < times[0] || t > *times.last().unwrap() {
                    return DVector::zeros(m_w);
                }
                let idx = times.partition_point(|&s| s <= t).saturating_sub(1);
                if idx + 1 >= times.len() {
                    return DVector::from_vec(values[idx].clone());
                }
                let s = (t - times[idx]) / (times[idx + 1] - times[idx]);
                DVector::from_fn(m_w, |r, _| {
                    values[idx][r] + s * (values[idx + 1][r] - values[idx][r])
                })
            }
        }
    }
}

/// Sampled trajectory on a uniform time grid. All channels are indexed
/// `[subsystem][step]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<DVector<f64>>>,
    pub inputs: Vec<Vec<DVector<f64>>>,
    pub outputs: Vec<Vec<DVector<f64>>>,
    pub disturbances: Vec<Vec<DVector<f64>>>,
    /// Time at which the state norm crossed the blow-up bound, if it did;
    /// the trajectory then ends at that sample.
    pub diverged_at: Option<f64>,
}

impl Trajectory {
    pub fn num_steps(&self) -> usize {
        self.times.len()
    }

    /// Euclidean norm of the stacked state at step `k`.
    pub fn state_norm(&self, k: usize) -> f64 {
        self.states
            .iter()
            .map(|ch| ch[k].norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    pub fn final_state_norm(&self) -> f64 {
        self.state_norm(self.times.len() - 1)
    }

    /// CSV export: header row then one row per step. Column order: t, then
    /// per subsystem i (in order) x{i}_{r}, then all u{i}_{r}, z{i}_{r},
    /// w{i}_{r} grouped the same way.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["t".to_string()];
        let groups: [(&str, &Vec<Vec<DVector<f64>>>); 4] = [
            ("x", &self.states),
            ("u", &self.inputs),
            ("z", &self.outputs),
            ("w", &self.disturbances),
        ];
        for (tag, chans) in &groups {
            for (i, ch) in chans.iter().enumerate() {
                let dim = ch.first().map_or(0, |v| v.len());
                for r in 0..dim {
                    header.push(format!("{tag}{}_{}", i + 1, r + 1));
                }
            }
        }
        let mut out = header.join(",");
        out.push('\n');
        for k in 0..self.times.len() {
            let mut row = vec![format!("{:.17e}", self.times[k])];
            for (_, chans) in &groups {
                for ch in chans.iter() {
                    for v in ch[k].iter() {
                        row.push(format!("{v:.17e}"));
                    }
                }
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Parse the format emitted by [`Trajectory::to_csv`]; channel layout
    /// is recovered from the header names.
    pub fn from_csv(text: &str) -> Result<Self, SimulateError> {
        let bad = |msg: String| SimulateError::Parameter(format!("trajectory csv: {msg}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"t") {
            return Err(bad("first column must be t".into()));
        }
        // (group index by tag, subsystem index, component index) per column
        let tags = ["x", "u", "z", "w"];
        let mut layout = Vec::with_capacity(cols.len() - 1);
        let mut dims: [Vec<usize>; 4] = Default::default();
        for col in &cols[1..] {
            let (tag, rest) = col.split_at(1);
            let g = tags
                .iter()
                .position(|t| *t == tag)
                .ok_or_else(|| bad(format!("unknown column `{col}`")))?;
            let (sub, comp) = rest
                .split_once('_')
                .ok_or_else(|| bad(format!("malformed column `{col}`")))?;
            let i: usize = sub.parse().map_err(|_| bad(format!("bad column `{col}`")))?;
            let r: usize = comp.parse().map_err(|_| bad(format!("bad column `{col}`")))?;
            if i == 0 || r == 0 {
                return Err(bad(format!("indices in `{col}` are 1-based")));
            }
            if dims[g].len() < i {
                dims[g].resize(i, 0);
            }
            dims[g][i - 1] = dims[g][i - 1].max(r);
            layout.push((g, i - 1, r - 1));
        }
        let n_sub = dims[0].len();
        if dims.iter().any(|d| d.len() != n_sub) {
            return Err(bad("all channel groups must cover the same subsystems".into()));
        }
        let mut traj = Trajectory {
            times: Vec::new(),
            states: (0..n_sub).map(|_| Vec::new()).collect(),
            inputs: (0..n_sub).map(|_| Vec::new()).collect(),
            outputs: (0..n_sub).map(|_| Vec::new()).collect(),
            disturbances: (0..n_sub).map(|_| Vec::new()).collect(),
            diverged_at: None,
        };
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<&str> = line.split(',').collect();
            if vals.len() != cols.len() {
                return Err(bad(format!(
                    "row {}: expected {} values, got {}",
                    lineno + 2,
                    cols.len(),
                    vals.len()
                )));
            }
            let parse = |s: &str| -> Result<f64, SimulateError> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("row {}: bad number `{s}`", lineno + 2)))
            };
            traj.times.push(parse(vals[0])?);
            let mut row: [Vec<DVector<f64>>; 4] = [
                dims[0].iter().map(|&d| DVector::zeros(d)).collect(),
                dims[1].iter().map(|&d| DVector::zeros(d)).collect(),
                dims[2].iter().map(|&d| DVector::zeros(d)).collect(),
                dims[3].iter().map(|&d| DVector::zeros(d)).collect(),
            ];
            for (v, &(g, i, r)) in vals[1..].iter().zip(&layout) {
                row[g][i][r] = parse(v)?;
            }
            let [xs, us, zs, ws] = row;
            for (i, v) in xs.into_iter().enumerate() {
                traj.states[i].push(v);
            }
            for (i, v) in us.into_iter().enumerate() {
                traj.inputs[i].push(v);
            }
            for (i, v) in zs.into_iter().enumerate() {
                traj.outputs[i].push(v);
            }
            for (i, v) in ws.into_iter().enumerate() {
                traj.disturbances[i].push(v);
            }
        }
        if traj.times.is_empty() {
            return Err(bad("no data rows".into()));
        }
        Ok(traj)
    }
}

fn check_states(
    system: &LargeScaleSystem,
    x_all: &[DVector<f64>],
) -> Result<(), SimulateError> {
    if x_all.len() != system.num_subsystems() {
        return Err(SimulateError::Dimension(format!(
            "expected {} subsystem states, got {}",
            system.num_subsystems(),
            x_all.len()
        )));
    }
    for (i, sub) in system.subsystems.iter().enumerate() {
        if x_all[i].len() != sub.state_dim {
            return Err(SimulateError::Dimension(format!(
                "subsystem {i}: state has dimension {}, expected {}",
                x_all[i].len(),
                sub.state_dim
            )));
        }
    }
    Ok(())
}

fn check_gains(system: &LargeScaleSystem, gains: &GainTable) -> Result<(), SimulateError> {
    if gains.len() != system.num_subsystems() {
        return Err(SimulateError::Dimension(format!(
            "expected gain tables for {} subsystems, got {}",
            system.num_subsystems(),
            gains.len()
        )));
    }
    for (i, sub) in system.subsystems.iter().enumerate() {
        let c = system.controllers[i].num_rules();
        if gains[i].len() != c {
            return Err(SimulateError::Dimension(format!(
                "subsystem {i}: expected {c} gains, got {}",
                gains[i].len()
            )));
        }
        for (j, g) in gains[i].iter().enumerate() {
            if g.shape() != (sub.input_dim, sub.state_dim) {
                return Err(SimulateError::Dimension(format!(
                    "subsystem {i} gain {j}: shape {:?}, expected ({}, {})",
                    g.shape(),
                    sub.input_dim,
                    sub.state_dim
                )));
            }
        }
    }
    Ok(())
}

/// Control inputs at the given states: u_i = sum_j m_ij G_ij x_i, or zero
/// when no gains are supplied (open loop).
pub fn control_inputs(
    system: &LargeScaleSystem,
    gains: Option<&GainTable>,
    x_all: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>, SimulateError> {
    check_states(system, x_all)?;
    let mut us = Vec::with_capacity(x_all.len());
    for (i, sub) in system.subsystems.iter().enumerate() {
        let mut u = DVector::zeros(sub.input_dim);
        if let Some(g) = gains {
            let m = system.controllers[i].grades(&x_all[i])?;
            for j in 0..m.len() {
                u += &g[i][j] * &x_all[i] * m[j];
            }
        }
        us.push(u);
    }
    Ok(us)
}

/// Grade-weighted vector field of the interconnected system:
/// xdot_i = sum_l w_il { A_il x_i + B_il u_i + D1_il w_i + sum_k Abar_ikl x_k }
/// with u_i from `control_inputs`. With `gains = None` this is the open-loop
/// field with u = 0.
pub fn closed_loop_derivative(
    system: &LargeScaleSystem,
    gains: Option<&GainTable>,
    x_all: &[DVector<f64>],
    w_all: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>, SimulateError> {
    check_states(system, x_all)?;
    if let Some(g) = gains {
        check_gains(system, g)?;
    }
    let us = control_inputs(system, gains, x_all)?;
    let mut xdots = Vec::with_capacity(x_all.len());
    for (i, sub) in system.subsystems.iter().enumerate() {
        if w_all[i].len() != sub.disturbance_dim {
            return Err(SimulateError::Dimension(format!(
                "subsystem {i}: disturbance has dimension {}, expected {}",
                w_all[i].len(),
                sub.disturbance_dim
            )));
        }
        let w_grades = sub.plant_grades(&x_all[i])?;
        let mut xdot = DVector::zeros(sub.state_dim);
        for (l, rule) in sub.rules.iter().enumerate() {
            let mut local = &rule.a * &x_all[i] + &rule.b * &us[i] + &rule.d1 * &w_all[i];
            for (&k, abar) in &rule.interconnections {
                local += abar * &x_all[k];
            }
            xdot += local * w_grades[l];
        }
        xdots.push(xdot);
    }
    Ok(xdots)
}

/// Grade-weighted outputs z_i = sum_l w_il (C_il x_i + D2_il w_i).
pub fn outputs(
    system: &LargeScaleSystem,
    x_all: &[DVector<f64>],
    w_all: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>, SimulateError> {
    check_states(system, x_all)?;
    let mut zs = Vec::with_capacity(x_all.len());
    for (i, sub) in system.subsystems.iter().enumerate() {
        let w_grades = sub.plant_grades(&x_all[i])?;
        let mut z = DVector::zeros(sub.output_dim);
        for (l, rule) in sub.rules.iter().enumerate() {
            z += (&rule.c * &x_all[i] + &rule.d2 * &w_all[i]) * w_grades[l];
        }
        zs.push(z);
    }
    Ok(zs)
}

#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    pub t_final: f64,
    /// Sample spacing of the stored trajectory.
    pub dt: f64,
    /// Stacked-state norm beyond which the run is declared divergent.
    pub blow_up: f64,
    /// RK4 sub-steps taken per stored sample; raise this for stiff closed
    /// loops (effective step is dt / substeps).
    pub substeps: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            t_final: 20.0,
            dt: 1e-3,
            blow_up: 1e8,
            substeps: 1,
        }
    }
}

/// Fixed-step RK4 integration. The returned trajectory ends early with
/// `diverged_at` set when the state norm crosses the blow-up bound.
pub fn integrate(
    system: &LargeScaleSystem,
    gains: Option<&GainTable>,
    x0: &[DVector<f64>],
    dist: &[DisturbanceSpec],
    opts: &IntegrateOptions,
) -> Result<Trajectory, SimulateError> {
    if opts.dt <= 0.0 || opts.t_final < opts.dt {
        return Err(SimulateError::Parameter(format!(
            "need dt > 0 and t_final >= dt (got dt = {}, t_final = {})",
            opts.dt, opts.t_final
        )));
    }
    if opts.substeps == 0 {
        return Err(SimulateError::Parameter("substeps must be at least 1".into()));
    }
    check_states(system, x0)?;
    if let Some(g) = gains {
        check_gains(system, g)?;
    }
    let n_sub = system.num_subsystems();
    if dist.len() != n_sub {
        return Err(SimulateError::Dimension(format!(
            "expected {n_sub} disturbance specs, got {}",
            dist.len()
        )));
    }
    for (i, d) in dist.iter().enumerate() {
        d.validate(system.subsystems[i].disturbance_dim)?;
    }

    let eval_dist = |t: f64| -> Vec<DVector<f64>> {
        dist.iter()
            .enumerate()
            .map(|(i, d)| d.eval(t, system.subsystems[i].disturbance_dim))
            .collect()
    };
    let add_scaled = |x: &[DVector<f64>], k: &[DVector<f64>], s: f64| -> Vec<DVector<f64>> {
        x.iter().zip(k).map(|(xi, ki)| xi + ki * s).collect()
    };

    let steps = (opts.t_final / opts.dt).round() as usize;
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: vec![Vec::with_capacity(steps + 1); n_sub],
        inputs: vec![Vec::with_capacity(steps + 1); n_sub],
        outputs: vec![Vec::with_capacity(steps + 1); n_sub],
        disturbances: vec![Vec::with_capacity(steps + 1); n_sub],
        diverged_at: None,
    };

    let mut x: Vec<DVector<f64>> = x0.to_vec();
    for step in 0..=steps {
        let t = step as f64 * opts.dt;
        let w = eval_dist(t);
        let u = control_inputs(system, gains, &x)?;
        let z = outputs(system, &x, &w)?;
        traj.times.push(t);
        for i in 0..n_sub {
            traj.states[i].push(x[i].clone());
            traj.inputs[i].push(u[i].clone());
            traj.outputs[i].push(z[i].clone());
            traj.disturbances[i].push(w[i].clone());
        }
        let norm: f64 = x.iter().map(|xi| xi.norm_squared()).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > opts.blow_up {
            traj.diverged_at = Some(t);
            break;
        }
        if step == steps {
            break;
        }

        let h = opts.dt / opts.substeps as f64;
        for sub in 0..opts.substeps {
            let ts = t + sub as f64 * h;
            let w0 = eval_dist(ts);
            let w_mid = eval_dist(ts + 0.5 * h);
            let w_end = eval_dist(ts + h);
            let k1 = closed_loop_derivative(system, gains, &x, &w0)?;
            let k2 =
                closed_loop_derivative(system, gains, &add_scaled(&x, &k1, 0.5 * h), &w_mid)?;
            let k3 =
                closed_loop_derivative(system, gains, &add_scaled(&x, &k2, 0.5 * h), &w_mid)?;
            let k4 = closed_loop_derivative(system, gains, &add_scaled(&x, &k3, h), &w_end)?;
            for i in 0..n_sub {
                x[i] += (&k1[i] + &k2[i] * 2.0 + &k3[i] * 2.0 + &k4[i]) * (h / 6.0);
            }
        }
    }
    Ok(traj)
}

/// sqrt(int ||z||^2 dt / int ||w||^2 dt) over the whole trajectory
/// (trapezoidal), summing channels across subsystems.
pub fn attenuation_ratio(traj: &Trajectory) -> Result<f64, SimulateError> {
    let steps = traj.times.len();
    if steps < 2 {
        return Err(SimulateError::Parameter(
            "trajectory too short for energy ratio".into(),
        ));
    }
    let energy = |chans: &Vec<Vec<DVector<f64>>>| -> f64 {
        let mut total = 0.0;
        for k in 1..steps {
            let dt = traj.times[k] - traj.times[k - 1];
            let sq = |idx: usize| -> f64 {
                chans.iter().map(|ch| ch[idx].norm_squared()).sum::<f64>()
            };
            total += 0.5 * dt * (sq(k - 1) + sq(k));
        }
        total
    };
    let ez = energy(&traj.outputs);
    let ew = energy(&traj.disturbances);
    if ew <= 0.0 {
        return Err(SimulateError::ZeroDisturbance);
    }
    Ok((ez / ew).sqrt())
}

/// Lyapunov samples V(t) = sum_i x_i' P_i x_i with P_i the inverse of the
/// supplied X_i > 0.
pub fn lyapunov_trace(
    traj: &Trajectory,
    xs: &[DMatrix<f64>],
) -> Result<Vec<f64>, SimulateError> {
    if xs.len() != traj.states.len() {
        return Err(SimulateError::Dimension(format!(
            "expected {} X matrices, got {}",
            traj.states.len(),
            xs.len()
        )));
    }
    let mut ps = Vec::with_capacity(xs.len());
    for (i, x) in xs.iter().enumerate() {
        let chol = x.clone().cholesky().ok_or_else(|| {
            SimulateError::Parameter(format!("X_{i} is not positive definite"))
        })?;
        ps.push(chol.inverse());
    }
    let steps = traj.times.len();
    let mut v = Vec::with_capacity(steps);
    for k in 0..steps {
        let mut vk = 0.0;
        for (i, p) in ps.iter().enumerate() {
            let xi = &traj.states[i][k];
            vk += (xi.transpose() * p * xi)[(0, 0)];
        }
        v.push(vk);
    }
    Ok(v)
}
