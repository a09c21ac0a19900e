//! Decentralized state-feedback synthesis via membership-dependent LMIs.
//!
//! Two constraint families are assembled. The performance family certifies
//! asymptotic stability plus the extended-dissipativity index: per-(rule
//! pair, sub-FOU) slack positivity, a shifted positivity coupling the
//! closed-loop block with the slacks, a per-(cell, corner) mixed-sum
//! negativity that injects the partition's grade bounds, and two small
//! coupling blocks linking the Lyapunov variable, the auxiliary bound K_i
//! and the output map. The stability-only family drops the disturbance and
//! output channels. Interconnection quadratics and the output quadratic are
//! Schur-lifted, so the slack matrices live in the lifted dimension.
//!
//! Gains are recovered as G_ij = N_ij X_i^{-1}; the H-infinity level is
//! minimized by geometric bisection on gamma with a recorded feasibility
//! trace.

use crate::dissipativity::{validate_standing_assumptions, DissipativityError, PerformanceSpec};
use crate::fou_partition::{FouPartition, PartitionError};
use crate::fuzzy_model::{LargeScaleSystem, ModelError};
use crate::lmi_core::{
    solve_feasibility, AffineExpr, Constraint, ConstraintReport, LmiError, SdpSolution, Sense,
    SolveOptions, SolveStatus, VarId, VarKind, VarRegistry,
};
use crate::simulate::GainTable;
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Lmi(#[from] LmiError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Performance(#[from] DissipativityError),
    #[error("performance spec violates the standing assumption: {0}")]
    Assumption(String),
    #[error("system and partition are inconsistent: {0}")]
    Mismatch(String),
    #[error("invalid synthesis option: {0}")]
    Options(String),
    #[error("LMI family infeasible (best uniform slack {slack:.3e})")]
    Infeasible { slack: f64 },
    #[error("solver failed numerically")]
    Numerical,
    #[error("infeasible at the top of the gamma bracket ({0})")]
    BracketInfeasible(f64),
}

#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    /// Lower bound tau_0 on the grade-dependent scaling; also the default
    /// per-subsystem shift tau_i.
    pub tau0: f64,
    /// Per-subsystem shift tau_i (scaled identity in the transformed
    /// coordinates); defaults to tau0 everywhere.
    pub tau: Option<Vec<f64>>,
    /// Strictness margin added to every strict inequality.
    pub epsilon: f64,
    /// gamma bisection bracket (low, high).
    pub gamma_bracket: (f64, f64),
    /// Relative tolerance on gamma at which bisection stops.
    pub gamma_rel_tol: f64,
    pub solve: SolveOptions,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            tau0: 1.0,
            tau: None,
            epsilon: 1e-6,
            gamma_bracket: (1e-3, 1e3),
            gamma_rel_tol: 1e-2,
            solve: SolveOptions::default(),
        }
    }
}

impl SynthesisOptions {
    fn validate(&self, n_sub: usize) -> Result<(), SynthesisError> {
        if self.tau0 <= 0.0 {
            return Err(SynthesisError::Options(format!(
                "tau0 must be positive, got {}",
                self.tau0
            )));
        }
        if let Some(tau) = &self.tau {
            if tau.len() != n_sub {
                return Err(SynthesisError::Options(format!(
                    "expected {n_sub} tau values, got {}",
                    tau.len()
                )));
            }
            if tau.iter().any(|&t| t < 0.0) {
                return Err(SynthesisError::Options("tau values must be nonnegative".into()));
            }
        }
        if self.gamma_bracket.0 >= self.gamma_bracket.1 || self.gamma_bracket.0 <= 0.0 {
            return Err(SynthesisError::Options(format!(
                "gamma bracket must satisfy 0 < low < high, got {:?}",
                self.gamma_bracket
            )));
        }
        if self.epsilon <= 0.0 {
            return Err(SynthesisError::Options("epsilon must be positive".into()));
        }
        Ok(())
    }

    fn tau_for(&self, i: usize) -> f64 {
        self.tau.as_ref().map_or(self.tau0, |t| t[i])
    }
}

/// Worst-case norm by which subsystem k's dynamics are driven by subsystem
/// i's state: the max over k's rules of the spectral norm of the
/// interconnection matrix keyed by i (0 when absent).
pub fn interconnection_bound(system: &LargeScaleSystem, k: usize, i: usize) -> f64 {
    system.subsystems[k]
        .rules
        .iter()
        .filter_map(|r| r.interconnections.get(&i))
        .map(|m| m.clone().singular_values().max())
        .fold(0.0, f64::max)
}

/// Full (k, i) table of interconnection bounds; `abar[k][i]`.
pub fn interconnection_bounds(system: &LargeScaleSystem) -> Vec<Vec<f64>> {
    let n = system.num_subsystems();
    (0..n)
        .map(|k| (0..n).map(|i| interconnection_bound(system, k, i)).collect())
        .collect()
}

/// Variable handles for one subsystem inside an [`Assembly`].
#[derive(Debug, Clone)]
pub struct SubsystemVars {
    pub x: VarId,
    /// Auxiliary bound variable; absent in the stability-only family.
    pub k_bound: Option<VarId>,
    pub m: VarId,
    /// One controller variable per controller rule.
    pub n: Vec<VarId>,
    /// Slack variables indexed (l * c + j) * (tau + 1) + z.
    pub w: Vec<VarId>,
    /// Subsystems k (sorted) whose dynamics this subsystem drives; one
    /// Schur column each.
    pub coupled: Vec<usize>,
    /// Side length of the lifted blocks (and of M, W).
    pub lifted_dim: usize,
}

/// Assembled constraint family plus its variable registry.
pub struct Assembly {
    pub registry: VarRegistry,
    pub constraints: Vec<Constraint>,
    pub vars: Vec<SubsystemVars>,
    pub abar: Vec<Vec<f64>>,
}

impl Assembly {
    pub fn count_with_prefix(&self, prefix: &str) -> usize {
        self.constraints
            .iter()
            .filter(|c| c.label.starts_with(prefix))
            .count()
    }
}

fn check_partition(
    system: &LargeScaleSystem,
    partition: &FouPartition,
) -> Result<(), SynthesisError> {
    if partition.subsystems.len() != system.num_subsystems() {
        return Err(SynthesisError::Mismatch(format!(
            "partition covers {} subsystems, system has {}",
            partition.subsystems.len(),
            system.num_subsystems()
        )));
    }
    for (i, part) in partition.subsystems.iter().enumerate() {
        let sub = &system.subsystems[i];
        if part.plant_rules != sub.num_rules()
            || part.controller_rules != system.controllers[i].num_rules()
        {
            return Err(SynthesisError::Mismatch(format!(
                "subsystem {i}: partition built for ({}, {}) rules, system has ({}, {})",
                part.plant_rules,
                part.controller_rules,
                sub.num_rules(),
                system.controllers[i].num_rules()
            )));
        }
        if part.state_box.dim() != sub.state_dim {
            return Err(SynthesisError::Mismatch(format!(
                "subsystem {i}: partition box dimension {} vs state dimension {}",
                part.state_box.dim(),
                sub.state_dim
            )));
        }
    }
    Ok(())
}

/// Symmetric PSD square root of -psi1 (psi1 <= 0 by assumption); tiny
/// negative eigenvalues are clamped to zero.
fn psd_sqrt_neg(psi1: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (psi1 + psi1.transpose()) * -0.5;
    let eig = sym.symmetric_eigen();
    let mut d = eig.eigenvalues.clone();
    for v in d.iter_mut() {
        *v = v.max(0.0).sqrt();
    }
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

fn var_term(id: VarId, rows: usize, cols: usize) -> AffineExpr {
    let mut e = AffineExpr::zeros(rows, cols);
    e.add_term(DMatrix::identity(rows, rows), id, false, DMatrix::identity(cols, cols));
    e
}

fn scaled_var(id: VarId, rows: usize, scale: f64) -> AffineExpr {
    let mut e = AffineExpr::zeros(rows, rows);
    e.add_term(
        DMatrix::identity(rows, rows) * scale,
        id,
        false,
        DMatrix::identity(rows, rows),
    );
    e
}

/// Closed-loop block He(A X + B N) + tau_i I for one rule pair.
fn closed_loop_block(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    x: VarId,
    nij: VarId,
    tau_i: f64,
) -> AffineExpr {
    let n = a.nrows();
    let mut e = AffineExpr::zeros(n, n);
    e.add_term(a.clone(), x, false, DMatrix::identity(n, n));
    e.add_term(b.clone(), nij, false, DMatrix::identity(n, n));
    let mut he = e.he();
    he.add_const(&(DMatrix::identity(n, n) * tau_i));
    he
}

enum Family {
    Performance(PerformanceSpec),
    StabilityOnly,
}

fn assemble(
    system: &LargeScaleSystem,
    partition: &FouPartition,
    family: &Family,
    opts: &SynthesisOptions,
) -> Result<Assembly, SynthesisError> {
    system.validate()?;
    check_partition(system, partition)?;
    opts.validate(system.num_subsystems())?;
    if let Family::Performance(spec) = family {
        let report = validate_standing_assumptions(spec, system)?;
        if !report.passed {
            let failed: Vec<String> = report
                .items
                .iter()
                .filter(|it| !it.passed)
                .map(|it| format!("item {} ({})", it.index, it.description))
                .collect();
            return Err(SynthesisError::Assumption(failed.join("; ")));
        }
    }

    let n_sub = system.num_subsystems();
    let abar = interconnection_bounds(system);
    let u_sqrt = match family {
        Family::Performance(spec) => Some(psd_sqrt_neg(&spec.psi1)),
        Family::StabilityOnly => None,
    };

    let mut registry = VarRegistry::new();
    let mut vars = Vec::with_capacity(n_sub);
    let sub_fous = partition.subsystems[0].sub_fous;

    // interconnection scaling sqrt(tau0^{-1} (N-1)) shared across subsystems
    let couple_scale = if n_sub > 1 {
        ((n_sub as f64 - 1.0) / opts.tau0).sqrt()
    } else {
        0.0
    };

    for (i, sub) in system.subsystems.iter().enumerate() {
        let n = sub.state_dim;
        let (m_w, n_z) = match family {
            Family::Performance(_) => (sub.disturbance_dim, sub.output_dim),
            Family::StabilityOnly => (0, 0),
        };
        let coupled: Vec<usize> = (0..n_sub)
            .filter(|&k| k != i && abar[k][i] > 0.0)
            .collect();
        let lifted_dim = n
            + m_w
            + n_z
            + coupled
                .iter()
                .map(|&k| system.subsystems[k].state_dim)
                .sum::<usize>();
        let tag = i + 1;
        let x = registry.register(format!("X{tag}"), VarKind::Symmetric(n))?;
        let k_bound = match family {
            Family::Performance(_) => {
                Some(registry.register(format!("K{tag}"), VarKind::Symmetric(n))?)
            }
            Family::StabilityOnly => None,
        };
        let m = registry.register(format!("M{tag}"), VarKind::Symmetric(lifted_dim))?;
        let c = system.controllers[i].num_rules();
        let p = sub.num_rules();
        let mut n_ids = Vec::with_capacity(c);
        for j in 0..c {
            n_ids.push(registry.register(
                format!("N{tag}_{}", j + 1),
                VarKind::Rectangular(sub.input_dim, n),
            )?);
        }
        let mut w_ids = Vec::with_capacity(p * c * sub_fous);
        for l in 0..p {
            for j in 0..c {
                for z in 0..sub_fous {
                    w_ids.push(registry.register(
                        format!("W{tag}_{}_{}_{}", l + 1, j + 1, z + 1),
                        VarKind::Symmetric(lifted_dim),
                    )?);
                }
            }
        }
        vars.push(SubsystemVars {
            x,
            k_bound,
            m,
            n: n_ids,
            w: w_ids,
            coupled,
            lifted_dim,
        });
    }

    let mut constraints = Vec::new();
    for (i, sub) in system.subsystems.iter().enumerate() {
        let sv = &vars[i];
        let n = sub.state_dim;
        let p = sub.num_rules();
        let c = system.controllers[i].num_rules();
        let tau_i = opts.tau_for(i);
        let part = &partition.subsystems[i];
        let tag = i + 1;

        constraints.push(Constraint::new(
            format!("pd X{tag}"),
            var_term(sv.x, n, n),
            Sense::PosDef,
            opts.epsilon,
        )?);

        // lifted closed-loop block per rule pair
        let mut omegas: Vec<AffineExpr> = Vec::with_capacity(p * c);
        for l in 0..p {
            let rule = &sub.rules[l];
            for j in 0..c {
                let top = closed_loop_block(&rule.a, &rule.b, sv.x, sv.n[j], tau_i);
                let mut sizes: Vec<usize> = vec![n];
                let mut blocks: Vec<Vec<Option<AffineExpr>>> = Vec::new();
                match family {
                    Family::Performance(spec) => {
                        let m_w = sub.disturbance_dim;
                        let n_z = sub.output_dim;
                        sizes.push(m_w);
                        sizes.push(n_z);
                        for &k in &sv.coupled {
                            sizes.push(system.subsystems[k].state_dim);
                        }
                        let nb = sizes.len();
                        let u = u_sqrt.as_ref().unwrap();
                        for (r, &sr) in sizes.iter().enumerate() {
                            let mut row: Vec<Option<AffineExpr>> = vec![None; nb];
                            if r == 0 {
                                row[0] = Some(top.clone());
                                // disturbance cross block: D1 - Ct' psi2
                                let mut e01 = AffineExpr::from_const(rule.d1.clone());
                                e01.add_term(
                                    DMatrix::identity(n, n),
                                    sv.x,
                                    false,
                                    -(rule.c.transpose() * &spec.psi2),
                                );
                                row[1] = Some(e01);
                                // output lift column: Ct' U'
                                let mut e02 = AffineExpr::zeros(n, n_z);
                                e02.add_term(
                                    DMatrix::identity(n, n),
                                    sv.x,
                                    false,
                                    rule.c.transpose() * u.transpose(),
                                );
                                row[2] = Some(e02);
                                for (t, &k) in sv.coupled.iter().enumerate() {
                                    row[3 + t] =
                                        Some(scaled_var(sv.x, n, couple_scale * abar[k][i]));
                                }
                            } else if r == 1 {
                                let d2psi2 = rule.d2.transpose() * &spec.psi2;
                                let mut e11 = AffineExpr::from_const(
                                    -(&d2psi2 + d2psi2.transpose()) - &spec.psi3,
                                );
                                debug_assert_eq!(e11.rows(), m_w);
                                e11.add_const(&DMatrix::zeros(m_w, m_w));
                                row[1] = Some(e11);
                                row[2] = Some(AffineExpr::from_const(
                                    rule.d2.transpose() * u.transpose(),
                                ));
                            } else {
                                row[r] = Some(AffineExpr::from_const(
                                    DMatrix::identity(sr, sr) * -1.0,
                                ));
                            }
                            blocks.push(row);
                        }
                    }
                    Family::StabilityOnly => {
                        for &k in &sv.coupled {
                            sizes.push(system.subsystems[k].state_dim);
                        }
                        let nb = sizes.len();
                        for (r, &sr) in sizes.iter().enumerate() {
                            let mut row: Vec<Option<AffineExpr>> = vec![None; nb];
                            if r == 0 {
                                row[0] = Some(top.clone());
                                for (t, &k) in sv.coupled.iter().enumerate() {
                                    row[1 + t] =
                                        Some(scaled_var(sv.x, n, couple_scale * abar[k][i]));
                                }
                            } else {
                                row[r] = Some(AffineExpr::from_const(
                                    DMatrix::identity(sr, sr) * -1.0,
                                ));
                            }
                            blocks.push(row);
                        }
                    }
                }
                omegas.push(AffineExpr::sym_from_upper(&blocks)?);
            }
        }

        let d = sv.lifted_dim;
        for l in 0..p {
            for j in 0..c {
                for z in 0..sub_fous {
                    let w_id = sv.w[(l * c + j) * sub_fous + z];
                    constraints.push(Constraint::new(
                        format!("slack-pd W{tag}_{}_{}_{}", l + 1, j + 1, z + 1),
                        var_term(w_id, d, d),
                        Sense::PosDef,
                        opts.epsilon,
                    )?);
                    let mut shifted = omegas[l * c + j].clone();
                    shifted.add_expr(&var_term(w_id, d, d));
                    shifted.add_expr(&var_term(sv.m, d, d));
                    constraints.push(Constraint::new(
                        format!("shifted-pd {tag}_{}_{}_{}", l + 1, j + 1, z + 1),
                        shifted,
                        Sense::PosDef,
                        opts.epsilon,
                    )?);
                }
            }
        }

        // mixed-sum negativity: per (cell, corner, sub-FOU), fold the
        // partition's per-pair grade bounds into one inequality
        let q = part.state_box.num_cells();
        let corners = part.num_corners();
        for cell in 0..q {
            for corner in 0..corners {
                for z in 0..sub_fous {
                    let mut acc = scaled_var(sv.m, d, -1.0);
                    for l in 0..p {
                        for j in 0..c {
                            let du = part.delta_upper[part.delta_index(l, j, z, cell, corner)];
                            let dl = part.delta_lower[part.delta_index(l, j, z, cell, corner)];
                            acc.add_scaled(&omegas[l * c + j], du);
                            let w_id = sv.w[(l * c + j) * sub_fous + z];
                            acc.add_expr(&scaled_var(w_id, d, du - dl));
                            acc.add_expr(&scaled_var(sv.m, d, du));
                        }
                    }
                    constraints.push(Constraint::new(
                        format!("mixed-nd {tag}_c{cell}_v{corner}_z{}", z + 1),
                        acc,
                        Sense::NegDef,
                        opts.epsilon,
                    )?);
                }
            }
        }

        if let Family::Performance(spec) = family {
            let k_id = sv.k_bound.unwrap();
            let n_z = sub.output_dim;
            let phi_zero = spec.phi.amax() == 0.0;
            // output-cap block certifies Ct' phi' phi Ct <= K per rule; with
            // phi = 0 it collapses to one K-positivity block per subsystem
            let emit_output_cap = |constraints: &mut Vec<Constraint>,
                                   label: String,
                                   c_mat: Option<&DMatrix<f64>>|
             -> Result<(), SynthesisError> {
                let neg_k = scaled_var(k_id, n, -1.0);
                let mut off = AffineExpr::zeros(n, n_z);
                if let Some(cm) = c_mat {
                    off.add_term(
                        DMatrix::identity(n, n),
                        sv.x,
                        false,
                        cm.transpose() * spec.phi.transpose(),
                    );
                }
                let corner = AffineExpr::from_const(DMatrix::identity(n_z, n_z) * -1.0);
                let theta2 = AffineExpr::sym_from_upper(&[
                    vec![Some(neg_k), Some(off)],
                    vec![None, Some(corner)],
                ])?;
                constraints.push(Constraint::new(label, theta2, Sense::NegDef, opts.epsilon)?);
                Ok(())
            };
            if phi_zero {
                emit_output_cap(&mut constraints, format!("output-cap {tag}"), None)?;
            } else {
                for (l, rule) in sub.rules.iter().enumerate() {
                    emit_output_cap(
                        &mut constraints,
                        format!("output-cap {tag}_l{}", l + 1),
                        Some(&rule.c),
                    )?;
                }
            }

            // lyapunov link: [ -X, X; X, K - 2I ] < 0 forces P = X^{-1} > K
            let neg_x = scaled_var(sv.x, n, -1.0);
            let x_off = var_term(sv.x, n, n);
            let mut k_block = var_term(k_id, n, n);
            k_block.add_const(&(DMatrix::identity(n, n) * -2.0));
            let theta1 = AffineExpr::sym_from_upper(&[
                vec![Some(neg_x), Some(x_off)],
                vec![None, Some(k_block)],
            ])?;
            constraints.push(Constraint::new(
                format!("lyap-link {tag}"),
                theta1,
                Sense::NegDef,
                opts.epsilon,
            )?);
        }
    }

    Ok(Assembly {
        registry,
        constraints,
        vars,
        abar,
    })
}

/// Assemble the performance (extended-dissipativity) LMI family.
pub fn assemble_performance(
    system: &LargeScaleSystem,
    partition: &FouPartition,
    spec: &PerformanceSpec,
    opts: &SynthesisOptions,
) -> Result<Assembly, SynthesisError> {
    assemble(system, partition, &Family::Performance(spec.clone()), opts)
}

/// Assemble the stability-only family (no disturbance/output channels).
pub fn assemble_stability(
    system: &LargeScaleSystem,
    partition: &FouPartition,
    opts: &SynthesisOptions,
) -> Result<Assembly, SynthesisError> {
    assemble(system, partition, &Family::StabilityOnly, opts)
}

/// Synthesis outcome: all decision-variable values plus recovered gains.
#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub x: Vec<DMatrix<f64>>,
    pub k_bound: Vec<Option<DMatrix<f64>>>,
    pub m: Vec<DMatrix<f64>>,
    /// n[i][j]: controller variable of subsystem i, rule j.
    pub n: Vec<Vec<DMatrix<f64>>>,
    /// w[i][(l * c + j) * sub_fous + z]: slack matrices.
    pub w: Vec<Vec<DMatrix<f64>>>,
    pub gains: GainTable,
    pub gamma: Option<f64>,
    pub abar: Vec<Vec<f64>>,
    pub reports: Vec<ConstraintReport>,
    pub slack: f64,
    pub condition_warnings: Vec<String>,
}

/// Recover G_ij = N_ij X_i^{-1}; returns the gain table plus warnings for
/// ill-conditioned X_i (condition number above 1e12).
pub fn recover_gains(
    x: &[DMatrix<f64>],
    n: &[Vec<DMatrix<f64>>],
) -> Result<(GainTable, Vec<String>), SynthesisError> {
    let mut gains = Vec::with_capacity(x.len());
    let mut warnings = Vec::new();
    for (i, (xi, ni)) in x.iter().zip(n).enumerate() {
        let sv = xi.clone().singular_values();
        let cond = sv.max() / sv.min().max(f64::MIN_POSITIVE);
        if cond > 1e12 {
            warnings.push(format!(
                "X{} condition number {cond:.3e} exceeds 1e12; recovered gains may be inaccurate",
                i + 1
            ));
        }
        let lu = xi.clone().lu();
        let mut gi = Vec::with_capacity(ni.len());
        for nij in ni {
            // solve G X = N  <=>  X' G' = N' (X symmetric)
            let gt = lu.solve(&nij.transpose()).ok_or_else(|| {
                SynthesisError::Options(format!("X{} is singular", i + 1))
            })?;
            gi.push(gt.transpose());
        }
        gains.push(gi);
    }
    Ok((gains, warnings))
}

fn extract_result(
    assembly: &Assembly,
    solution: &SdpSolution,
    gamma: Option<f64>,
) -> Result<SynthesisResult, SynthesisError> {
    let values = &solution.values;
    let mut x = Vec::new();
    let mut k_bound = Vec::new();
    let mut m = Vec::new();
    let mut n = Vec::new();
    let mut w = Vec::new();
    for sv in &assembly.vars {
        x.push(values[sv.x.0].clone());
        k_bound.push(sv.k_bound.map(|id| values[id.0].clone()));
        m.push(values[sv.m.0].clone());
        n.push(sv.n.iter().map(|id| values[id.0].clone()).collect());
        w.push(sv.w.iter().map(|id| values[id.0].clone()).collect());
    }
    let (gains, condition_warnings) = recover_gains(&x, &n)?;
    Ok(SynthesisResult {
        x,
        k_bound,
        m,
        n,
        w,
        gains,
        gamma,
        abar: assembly.abar.clone(),
        reports: solution.reports.clone(),
        slack: solution.slack,
        condition_warnings,
    })
}

fn solve_assembly(
    assembly: &Assembly,
    opts: &SynthesisOptions,
) -> Result<SdpSolution, SynthesisError> {
    let sol = solve_feasibility(&assembly.registry, &assembly.constraints, &opts.solve)?;
    match sol.status {
        SolveStatus::Feasible => Ok(sol),
        SolveStatus::Infeasible => Err(SynthesisError::Infeasible { slack: sol.slack }),
        SolveStatus::NumericalFailure => Err(SynthesisError::Numerical),
    }
}

/// Solve the performance family at a fixed spec and recover gains.
pub fn synthesize(
    system: &LargeScaleSystem,
    partition: &FouPartition,
    spec: &PerformanceSpec,
    opts: &SynthesisOptions,
) -> Result<SynthesisResult, SynthesisError> {
    let assembly = assemble_performance(system, partition, spec, opts)?;
    let sol = solve_assembly(&assembly, opts)?;
    extract_result(&assembly, &sol, None)
}

/// Solve the stability-only family and recover gains.
pub fn synthesize_stability(
    system: &LargeScaleSystem,
    partition: &FouPartition,
    opts: &SynthesisOptions,
) -> Result<SynthesisResult, SynthesisError> {
    let assembly = assemble_stability(system, partition, opts)?;
    let sol = solve_assembly(&assembly, opts)?;
    extract_result(&assembly, &sol, None)
}

/// Bisection outcome: the smallest feasible gamma found, its certificate,
/// and the recorded (gamma, feasible) trace in evaluation order.
#[derive(Debug, Clone)]
pub struct GammaSearch {
    pub gamma: f64,
    pub result: SynthesisResult,
    pub trace: Vec<(f64, bool)>,
}

/// Minimize the H-infinity level by geometric bisection on gamma. gamma^2
/// enters the constraint constants, so each step is an independent
/// feasibility solve; feasibility is monotone in gamma.
pub fn minimize_gamma(
    system: &LargeScaleSystem,
    partition: &FouPartition,
    opts: &SynthesisOptions,
) -> Result<GammaSearch, SynthesisError> {
    opts.validate(system.num_subsystems())?;
    let n_z = system.subsystems[0].output_dim;
    let m_w = system.subsystems[0].disturbance_dim;
    let mut trace = Vec::new();
    let mut attempt = |gamma: f64| -> Result<Option<SynthesisResult>, SynthesisError> {
        let spec = PerformanceSpec::h_infinity(gamma, n_z, m_w)?;
        match synthesize(system, partition, &spec, opts) {
            Ok(mut res) => {
                res.gamma = Some(gamma);
                trace.push((gamma, true));
                Ok(Some(res))
            }
            Err(SynthesisError::Infeasible { .. }) => {
                trace.push((gamma, false));
                Ok(None)
            }
            Err(e) => Err(e),
        }
    };

    let (mut lo, mut hi) = opts.gamma_bracket;
    let mut best = match attempt(hi)? {
        Some(res) => res,
        None => return Err(SynthesisError::BracketInfeasible(hi)),
    };
    let mut best_gamma = hi;
    if let Some(res) = attempt(lo)? {
        return Ok(GammaSearch {
            gamma: lo,
            result: res,
            trace,
        });
    }
    while hi / lo > 1.0 + opts.gamma_rel_tol {
        let mid = (lo * hi).sqrt();
        match attempt(mid)? {
            Some(res) => {
                hi = mid;
                best = res;
                best_gamma = mid;
            }
            None => lo = mid,
        }
    }
    Ok(GammaSearch {
        gamma: best_gamma,
        result: best,
        trace,
    })
}

/// Dense un-lifted performance block for one rule pair at concrete variable
/// values; the quadratic form zeta' (sum h Omega) zeta over zeta = [g; w]
/// reproduces the Lyapunov-derivative-minus-supply-rate bound. Used as an
/// assembly oracle in tests.
#[allow(clippy::too_many_arguments)]
pub fn omega_unlifted(
    system: &LargeScaleSystem,
    abar: &[Vec<f64>],
    i: usize,
    l: usize,
    x: &DMatrix<f64>,
    nij: &DMatrix<f64>,
    spec: &PerformanceSpec,
    tau0: f64,
    tau_i: f64,
) -> DMatrix<f64> {
    let sub = &system.subsystems[i];
    let rule = &sub.rules[l];
    let n = sub.state_dim;
    let m_w = sub.disturbance_dim;
    let n_sub = system.num_subsystems();
    let ct = rule.c.clone() * x; // transformed output map C X
    let mut a11 = {
        let axbn = rule.a.clone() * x + rule.b.clone() * nij;
        &axbn + axbn.transpose()
    };
    if n_sub > 1 {
        let mut coupling = 0.0;
        for (k, row) in abar.iter().enumerate() {
            if k != i {
                coupling += row[i] * row[i];
            }
        }
        a11 += x * x * (coupling * (n_sub as f64 - 1.0) / tau0);
    }
    a11 += DMatrix::identity(n, n) * tau_i;
    a11 -= ct.transpose() * &spec.psi1 * &ct;

    let a12 = rule.d1.clone()
        - ct.transpose() * &spec.psi1 * &rule.d2
        - ct.transpose() * &spec.psi2;
    let d2psi2 = rule.d2.transpose() * &spec.psi2;
    let a22 = -(rule.d2.transpose() * &spec.psi1 * &rule.d2)
        - (&d2psi2 + d2psi2.transpose())
        - &spec.psi3;

    let mut out = DMatrix::zeros(n + m_w, n + m_w);
    out.view_mut((0, 0), (n, n)).copy_from(&a11);
    out.view_mut((0, n), (n, m_w)).copy_from(&a12);
    out.view_mut((n, 0), (m_w, n)).copy_from(&a12.transpose());
    out.view_mut((n, n), (m_w, m_w)).copy_from(&a22);
    out
}
