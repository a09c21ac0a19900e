//! State-box partitioning and sub-FOU corner-constant tables.
//!
//! Each subsystem's operating box is cut into axis-aligned uniform cells.
//! Per cell and per (plant rule, controller rule) pair the combined grade is
//! sampled on a sub-grid; its sampled range, sliced into tau+1 equal bands,
//! yields the lower/upper corner constants that bound the grade inside the
//! cell. Multilinear tent weights reconstruct the bounds at any state.
//!
//! Corner constants are per cell and shared across the cell's corners (the
//! cell-wide sampled min/max with a safety margin), which keeps the
//! reconstructed envelope conservative under sampling and tightens
//! monotonically under grid refinement with nested sample grids.

use crate::fuzzy_model::{LargeScaleSystem, ModelError};
use crate::par;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("state component {dim} = {value} outside box [{lo}, {hi}] (extrapolation)")]
    OutsideBox {
        dim: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("subsystem {subsystem}, cell {cell}: combined grades undefined (degenerate memberships)")]
    DegenerateCell { subsystem: usize, cell: usize },
    #[error("invalid partition parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Axis-aligned operating box with per-dimension cell counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells_per_dim: Vec<usize>,
}

impl StateBox {
    pub fn validate(&self) -> Result<(), PartitionError> {
        if self.lower.len() != self.upper.len() || self.lower.len() != self.cells_per_dim.len() {
            return Err(PartitionError::BadParams(
                "state box dimension mismatch".into(),
            ));
        }
        for r in 0..self.lower.len() {
            if self.lower[r] >= self.upper[r] {
                return Err(PartitionError::BadParams(format!(
                    "box dimension {r}: lower bound must be below upper bound"
                )));
            }
            if self.cells_per_dim[r] == 0 {
                return Err(PartitionError::BadParams(format!(
                    "box dimension {r}: cell count must be at least 1"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_dim.iter().product()
    }

    fn cell_width(&self, r: usize) -> f64 {
        (self.upper[r] - self.lower[r]) / self.cells_per_dim[r] as f64
    }

    /// Cell coordinates of the cell with flat index `k` (row-major, first
    /// dimension slowest).
    pub fn cell_coords(&self, k: usize) -> Vec<usize> {
        let mut coords = vec![0; self.dim()];
        let mut rem = k;
        for r in (0..self.dim()).rev() {
            coords[r] = rem % self.cells_per_dim[r];
            rem /= self.cells_per_dim[r];
        }
        coords
    }

    pub fn cell_index(&self, coords: &[usize]) -> usize {
        let mut k = 0;
        for r in 0..self.dim() {
            k = k * self.cells_per_dim[r] + coords[r];
        }
        k
    }

    /// Per-dimension bounds of cell `k`.
    pub fn cell_bounds(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        let coords = self.cell_coords(k);
        let mut lo = vec![0.0; self.dim()];
        let mut hi = vec![0.0; self.dim()];
        for r in 0..self.dim() {
            let w = self.cell_width(r);
            lo[r] = self.lower[r] + coords[r] as f64 * w;
            hi[r] = lo[r] + w;
        }
        (lo, hi)
    }

    /// Flat index of the cell containing `x`. States on a shared face belong
    /// to the lower-index cell on that face's far side (upper edge inclusive).
    pub fn locate(&self, x: &DVector<f64>) -> Result<usize, PartitionError> {
        let mut coords = vec![0; self.dim()];
        for r in 0..self.dim() {
            let (lo, hi) = (self.lower[r], self.upper[r]);
            if x[r] < lo || x[r] > hi {
                return Err(PartitionError::OutsideBox {
                    dim: r,
                    value: x[r],
                    lo,
                    hi,
                });
            }
            let w = self.cell_width(r);
            coords[r] = (((x[r] - lo) / w).floor() as usize).min(self.cells_per_dim[r] - 1);
        }
        Ok(self.cell_index(&coords))
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        (0..self.dim()).all(|r| x[r] >= self.lower[r] && x[r] <= self.upper[r])
    }
}

/// Corner-constant tables for one subsystem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsystemPartition {
    pub state_box: StateBox,
    pub plant_rules: usize,
    pub controller_rules: usize,
    pub sub_fous: usize,
    /// Lower corner constants, indexed by [`Self::delta_index`].
    pub delta_lower: Vec<f64>,
    /// Upper corner constants, same indexing.
    pub delta_upper: Vec<f64>,
    /// Sampled per-cell grade minimum, indexed by [`Self::range_index`].
    pub cell_min: Vec<f64>,
    /// Sampled per-cell grade maximum, same indexing.
    pub cell_max: Vec<f64>,
}

impl SubsystemPartition {
    pub fn num_corners(&self) -> usize {
        1 << self.state_box.dim()
    }

    pub fn delta_index(&self, l: usize, j: usize, z: usize, cell: usize, corner: usize) -> usize {
        let q = self.state_box.num_cells();
        ((((l * self.controller_rules + j) * self.sub_fous + z) * q + cell) * self.num_corners())
            + corner
    }

    pub fn range_index(&self, l: usize, j: usize, cell: usize) -> usize {
        (l * self.controller_rules + j) * self.state_box.num_cells() + cell
    }

    /// Tent interpolation weights at `x`: the containing cell plus, per
    /// dimension, the (lower-corner, upper-corner) weight pair summing to one.
    pub fn interp_weights(&self, x: &DVector<f64>) -> Result<(usize, Vec<(f64, f64)>), PartitionError> {
        let cell = self.state_box.locate(x)?;
        let (lo, hi) = self.state_box.cell_bounds(cell);
        let mut pairs = Vec::with_capacity(self.state_box.dim());
        for r in 0..self.state_box.dim() {
            let w = hi[r] - lo[r];
            let t = ((x[r] - lo[r]) / w).clamp(0.0, 1.0);
            pairs.push((1.0 - t, t));
        }
        Ok((cell, pairs))
    }

    /// Product weights over the 2^n cell corners; they sum to one. Corner `v`
    /// selects per dimension `r` the upper side when bit `r` of `v` is set.
    pub fn corner_weights(pairs: &[(f64, f64)]) -> Vec<f64> {
        let corners = 1usize << pairs.len();
        (0..corners)
            .map(|v| {
                pairs
                    .iter()
                    .enumerate()
                    .map(|(r, &(wl, wu))| if v >> r & 1 == 0 { wl } else { wu })
                    .product()
            })
            .collect()
    }

    /// Multilinear reconstruction of the grade bounds at `x` for sub-FOU `z`.
    pub fn reconstruct_bounds(
        &self,
        x: &DVector<f64>,
        l: usize,
        j: usize,
        z: usize,
    ) -> Result<(f64, f64), PartitionError> {
        let (cell, pairs) = self.interp_weights(x)?;
        let weights = Self::corner_weights(&pairs);
        let mut lo = 0.0;
        let mut hi = 0.0;
        for (v, w) in weights.iter().enumerate() {
            lo += w * self.delta_lower[self.delta_index(l, j, z, cell, v)];
            hi += w * self.delta_upper[self.delta_index(l, j, z, cell, v)];
        }
        Ok((lo, hi))
    }

    /// Sub-FOU band active at grade value `h` in `cell` (the slice of the
    /// sampled per-cell range that contains `h`).
    pub fn active_sub_fou(&self, l: usize, j: usize, cell: usize, h: f64) -> usize {
        let ridx = self.range_index(l, j, cell);
        let (mn, mx) = (self.cell_min[ridx], self.cell_max[ridx]);
        if mx <= mn {
            return 0;
        }
        let t = ((h - mn) / (mx - mn) * self.sub_fous as f64).floor() as isize;
        t.clamp(0, self.sub_fous as isize - 1) as usize
    }
}

/// Partition of every subsystem's operating box with complete corner tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FouPartition {
    pub subsystems: Vec<SubsystemPartition>,
    pub samples_per_cell: usize,
    pub margin: f64,
}

/// Default widening applied to sampled cell extremes; covers the gap between
/// grid samples on smooth grades.
pub const DEFAULT_MARGIN: f64 = 5e-4;

/// Build the partition by sampling combined grades on a per-cell grid of
/// `samples_per_cell` points per dimension (endpoints included).
pub fn build_partition(
    system: &LargeScaleSystem,
    boxes: &[StateBox],
    tau: usize,
    samples_per_cell: usize,
    margin: f64,
) -> Result<FouPartition, PartitionError> {
    if boxes.len() != system.num_subsystems() {
        return Err(PartitionError::BadParams(format!(
            "expected {} state boxes, got {}",
            system.num_subsystems(),
            boxes.len()
        )));
    }
    if samples_per_cell < 8 {
        return Err(PartitionError::BadParams(
            "samples_per_cell must be at least 8".into(),
        ));
    }
    if margin < 0.0 {
        return Err(PartitionError::BadParams("margin must be nonnegative".into()));
    }
    let sub_fous = tau + 1;
    let mut parts = Vec::with_capacity(system.num_subsystems());
    for (i, state_box) in boxes.iter().enumerate() {
        state_box.validate()?;
        let sub = &system.subsystems[i];
        if state_box.dim() != sub.state_dim {
            return Err(PartitionError::BadParams(format!(
                "subsystem {i}: box dimension {} does not match state dimension {}",
                state_box.dim(),
                sub.state_dim
            )));
        }
        let p = sub.num_rules();
        let c = system.controllers[i].num_rules();
        let q = state_box.num_cells();
        let n = state_box.dim();
        let corners = 1usize << n;

        // per cell: sampled (min, max) per (l, j), or the degenerate sample
        let cell_ranges: Vec<Result<Vec<(f64, f64)>, PartitionError>> =
            par::map_indexed(q, |k| {
                sample_cell_ranges(system, i, state_box, k, samples_per_cell)
            });

        let mut part = SubsystemPartition {
            state_box: state_box.clone(),
            plant_rules: p,
            controller_rules: c,
            sub_fous,
            delta_lower: vec![0.0; p * c * sub_fous * q * corners],
            delta_upper: vec![0.0; p * c * sub_fous * q * corners],
            cell_min: vec![0.0; p * c * q],
            cell_max: vec![0.0; p * c * q],
        };
        for (k, ranges) in cell_ranges.into_iter().enumerate() {
            let ranges = ranges?;
            for l in 0..p {
                for j in 0..c {
                    let (mn, mx) = ranges[l * c + j];
                    let ridx = part.range_index(l, j, k);
                    part.cell_min[ridx] = mn;
                    part.cell_max[ridx] = mx;
                    for z in 0..sub_fous {
                        let band_lo = mn + (mx - mn) * z as f64 / sub_fous as f64;
                        let band_hi = mn + (mx - mn) * (z + 1) as f64 / sub_fous as f64;
                        let dl = (band_lo - margin).max(0.0);
                        let du = (band_hi + margin).min(1.0);
                        for v in 0..corners {
                            let idx = part.delta_index(l, j, z, k, v);
                            part.delta_lower[idx] = dl;
                            part.delta_upper[idx] = du;
                        }
                    }
                }
            }
        }
        parts.push(part);
    }
    Ok(FouPartition {
        subsystems: parts,
        samples_per_cell,
        margin,
    })
}

fn sample_cell_ranges(
    system: &LargeScaleSystem,
    i: usize,
    state_box: &StateBox,
    cell: usize,
    samples: usize,
) -> Result<Vec<(f64, f64)>, PartitionError> {
    let n = state_box.dim();
    let (lo, hi) = state_box.cell_bounds(cell);
    let p = system.subsystems[i].num_rules();
    let c = system.controllers[i].num_rules();
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); p * c];
    let total = samples.pow(n as u32);
    let mut x = DVector::zeros(n);
    for s in 0..total {
        let mut rem = s;
        for r in 0..n {
            let t = (rem % samples) as f64 / (samples - 1) as f64;
            rem /= samples;
            x[r] = lo[r] + t * (hi[r] - lo[r]);
        }
        let h = system
            .combined_grades(i, &x)
            .map_err(|_| PartitionError::DegenerateCell { subsystem: i, cell })?;
        for l in 0..p {
            for j in 0..c {
                let v = h[(l, j)];
                let r = &mut ranges[l * c + j];
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            }
        }
    }
    Ok(ranges)
}

/// Worst envelope margin found by [`audit_envelope`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvelopeAudit {
    /// min over all samples and indices of min(h - h_lower, h_upper - h)
    pub min_margin: f64,
    pub samples_checked: usize,
}

/// Re-sample every cell at `density_mult` times the build density and check
/// that the active sub-FOU's reconstructed bounds envelop the combined grade.
pub fn audit_envelope(
    system: &LargeScaleSystem,
    partition: &FouPartition,
    density_mult: usize,
) -> Result<EnvelopeAudit, PartitionError> {
    let mut min_margin = f64::INFINITY;
    let mut checked = 0usize;
    for (i, part) in partition.subsystems.iter().enumerate() {
        let q = part.state_box.num_cells();
        let samples = partition.samples_per_cell * density_mult;
        let n = part.state_box.dim();
        let per_cell: Vec<Result<(f64, usize), PartitionError>> = par::map_indexed(q, |k| {
            let (lo, hi) = part.state_box.cell_bounds(k);
            let total = samples.pow(n as u32);
            let mut x = DVector::zeros(n);
            let mut local_min = f64::INFINITY;
            for s in 0..total {
                let mut rem = s;
                for r in 0..n {
                    let t = (rem % samples) as f64 / (samples - 1) as f64;
                    rem /= samples;
                    x[r] = lo[r] + t * (hi[r] - lo[r]);
                }
                let h = system.combined_grades(i, &x)?;
                for l in 0..part.plant_rules {
                    for j in 0..part.controller_rules {
                        let grade = h[(l, j)];
                        let z = part.active_sub_fou(l, j, k, grade);
                        let (bl, bu) = part.reconstruct_bounds(&x, l, j, z)?;
                        local_min = local_min.min(grade - bl).min(bu - grade);
                    }
                }
            }
            Ok((local_min, total * part.plant_rules * part.controller_rules))
        });
        for res in per_cell {
            let (m, cnt) = res?;
            min_margin = min_margin.min(m);
            checked += cnt;
        }
    }
    Ok(EnvelopeAudit {
        min_margin,
        samples_checked: checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuzzy_model::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use std::collections::BTreeMap;

    fn one_rule_system() -> LargeScaleSystem {
        let set = IT2Set::new(
            MembershipFn::Gaussian {
                center: 0.0,
                width: 1.0,
            },
            MembershipFn::Gaussian {
                center: 0.0,
                width: 2.0,
            },
        )
        .unwrap();
        let sub = Subsystem {
            index: 0,
            state_dim: 1,
            input_dim: 1,
            disturbance_dim: 1,
            output_dim: 1,
            rules: vec![PlantRule {
                a: DMatrix::from_element(1, 1, -1.0),
                b: DMatrix::from_element(1, 1, 1.0),
                d1: DMatrix::from_element(1, 1, 0.0),
                c: DMatrix::from_element(1, 1, 1.0),
                d2: DMatrix::from_element(1, 1, 0.0),
                interconnections: BTreeMap::new(),
                antecedents: vec![(0, set.clone())],
            }],
            alpha: TypeReduction::default(),
        };
        let rb = ControllerRuleBase {
            rules: vec![vec![(0, set)]],
            beta: TypeReduction::default(),
        };
        LargeScaleSystem::new(vec![sub], vec![rb]).unwrap()
    }

    fn unit_box(cells: Vec<usize>) -> StateBox {
        let d = cells.len();
        StateBox {
            lower: vec![-1.0; d],
            upper: vec![1.0; d],
            cells_per_dim: cells,
        }
    }

    #[test]
    fn single_rule_deltas_are_one() {
        let sys = one_rule_system();
        let part = build_partition(&sys, &[unit_box(vec![4])], 0, 8, 0.0).unwrap();
        let sp = &part.subsystems[0];
        for d in sp.delta_lower.iter().chain(sp.delta_upper.iter()) {
            assert_relative_eq!(*d, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn corner_weight_identity_at_corner() {
        let sp = SubsystemPartition {
            state_box: unit_box(vec![2, 2]),
            plant_rules: 1,
            controller_rules: 1,
            sub_fous: 1,
            delta_lower: vec![0.0; 16],
            delta_upper: vec![1.0; 16],
            cell_min: vec![0.0; 4],
            cell_max: vec![1.0; 4],
        };
        // lower-left corner of the box: the cell's lower corner gets weight 1
        let x = DVector::from_vec(vec![-1.0, -1.0]);
        let (cell, pairs) = sp.interp_weights(&x).unwrap();
        assert_eq!(cell, 0);
        let w = SubsystemPartition::corner_weights(&pairs);
        assert_relative_eq!(w[0], 1.0);
        assert!(w[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn corner_weights_at_cell_center() {
        let sp = SubsystemPartition {
            state_box: unit_box(vec![1, 1]),
            plant_rules: 1,
            controller_rules: 1,
            sub_fous: 1,
            delta_lower: vec![0.0; 4],
            delta_upper: vec![1.0; 4],
            cell_min: vec![0.0],
            cell_max: vec![1.0],
        };
        let x = DVector::from_vec(vec![0.0, 0.0]);
        let (_, pairs) = sp.interp_weights(&x).unwrap();
        let w = SubsystemPartition::corner_weights(&pairs);
        for v in w {
            assert_relative_eq!(v, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn corner_weights_sum_to_one() {
        let sp = SubsystemPartition {
            state_box: unit_box(vec![3, 2]),
            plant_rules: 1,
            controller_rules: 1,
            sub_fous: 1,
            delta_lower: vec![0.0; 24],
            delta_upper: vec![1.0; 24],
            cell_min: vec![0.0; 6],
            cell_max: vec![1.0; 6],
        };
        let mut rng_x = 0.123f64;
        for _ in 0..50 {
            rng_x = (rng_x * 997.0).fract();
            let x = DVector::from_vec(vec![rng_x * 2.0 - 1.0, (rng_x * 7.0).fract() * 2.0 - 1.0]);
            let (_, pairs) = sp.interp_weights(&x).unwrap();
            let w = SubsystemPartition::corner_weights(&pairs);
            assert!(w.iter().all(|&v| v >= 0.0));
            assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn extrapolation_rejected() {
        let sys = one_rule_system();
        let part = build_partition(&sys, &[unit_box(vec![2])], 0, 8, 0.0).unwrap();
        let err = part.subsystems[0]
            .reconstruct_bounds(&DVector::from_element(1, 2.0), 0, 0, 0)
            .unwrap_err();
        assert!(matches!(err, PartitionError::OutsideBox { .. }));
    }

    #[test]
    fn envelope_holds_on_denser_grid() {
        let sys = two_rule_system();
        let part = build_partition(&sys, &[unit_box(vec![4])], 0, 10, DEFAULT_MARGIN).unwrap();
        let audit = audit_envelope(&sys, &part, 10).unwrap();
        assert!(
            audit.min_margin >= -1e-8,
            "envelope violated: {}",
            audit.min_margin
        );
    }

    fn two_rule_system() -> LargeScaleSystem {
        let near = IT2Set::new(
            MembershipFn::Tabulated {
                breakpoints: vec![-1.0, 0.0, 1.0],
                grades: vec![0.0, 0.8, 0.0],
            },
            MembershipFn::Triangular {
                a: -1.0,
                b: 0.0,
                c: 1.0,
            },
        )
        .unwrap();
        let far = IT2Set::new(
            MembershipFn::Tabulated {
                breakpoints: vec![-1.0, 0.0, 1.0],
                grades: vec![1.0, 0.0, 1.0],
            },
            MembershipFn::Tabulated {
                breakpoints: vec![-1.0, 0.0, 1.0],
                grades: vec![1.0, 0.2, 1.0],
            },
        )
        .unwrap();
        let rule = |set: &IT2Set| PlantRule {
            a: DMatrix::from_element(1, 1, -1.0),
            b: DMatrix::from_element(1, 1, 1.0),
            d1: DMatrix::from_element(1, 1, 0.0),
            c: DMatrix::from_element(1, 1, 1.0),
            d2: DMatrix::from_element(1, 1, 0.0),
            interconnections: BTreeMap::new(),
            antecedents: vec![(0, set.clone())],
        };
        let sub = Subsystem {
            index: 0,
            state_dim: 1,
            input_dim: 1,
            disturbance_dim: 1,
            output_dim: 1,
            rules: vec![rule(&near), rule(&far)],
            alpha: TypeReduction::default(),
        };
        let rb = ControllerRuleBase {
            rules: vec![vec![(0, near)], vec![(0, far)]],
            beta: TypeReduction::default(),
        };
        LargeScaleSystem::new(vec![sub], vec![rb]).unwrap()
    }

    #[test]
    fn refinement_never_widens_envelope() {
        // nested sample grids: coarse cells at 33 points, fine (4x refined)
        // at 9 points share every sample location, so the fine extremes are
        // taken over subsets of the coarse samples.
        let sys = two_rule_system();
        let coarse = build_partition(&sys, &[unit_box(vec![2])], 0, 33, 1e-9).unwrap();
        let fine = build_partition(&sys, &[unit_box(vec![8])], 0, 9, 1e-9).unwrap();
        for step in 0..200 {
            let x = DVector::from_element(1, -1.0 + 2.0 * step as f64 / 199.0);
            for l in 0..2 {
                for j in 0..2 {
                    let (cl, cu) = coarse.subsystems[0].reconstruct_bounds(&x, l, j, 0).unwrap();
                    let (fl, fu) = fine.subsystems[0].reconstruct_bounds(&x, l, j, 0).unwrap();
                    assert!(
                        fu - fl <= cu - cl + 1e-12,
                        "fine envelope wider at x = {x}: [{fl}, {fu}] vs [{cl}, {cu}]"
                    );
                }
            }
        }
    }

    #[test]
    fn partition_roundtrips_through_json() {
        let sys = two_rule_system();
        let part = build_partition(&sys, &[unit_box(vec![2])], 1, 8, 1e-6).unwrap();
        let text = serde_json::to_string(&part).unwrap();
        let back: FouPartition = serde_json::from_str(&text).unwrap();
        assert_eq!(part.subsystems[0].delta_lower, back.subsystems[0].delta_lower);
        assert_eq!(part.subsystems[0].delta_upper, back.subsystems[0].delta_upper);
    }
}
