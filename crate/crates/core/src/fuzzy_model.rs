//! Interval type-2 T-S fuzzy subsystems and membership-grade evaluation.
//!
//! A large-scale system is a set of N subsystems, each with a p-rule plant
//! rule base and an independent c-rule controller rule base (imperfect
//! premise matching: the controller's rule count and antecedent sets need
//! not match the plant's). Grades are interval-valued; a type-reduction
//! realization collapses them to point grades which are then normalized.

use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid membership function: {0}")]
    Membership(String),
    #[error("degenerate grades for subsystem {subsystem}: all firing strengths zero at state {state:?} (state outside modeled region)")]
    DegenerateGrades { subsystem: usize, state: Vec<f64> },
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// Scalar membership function; grades are clamped to [0, 1].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum MembershipFn {
    Triangular { a: f64, b: f64, c: f64 },
    Trapezoidal { a: f64, b: f64, c: f64, d: f64 },
    Gaussian { center: f64, width: f64 },
    /// Piecewise-linear; outside the breakpoint range the grade is clamped
    /// to the nearest endpoint grade.
    Tabulated { breakpoints: Vec<f64>, grades: Vec<f64> },
}

impl MembershipFn {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            MembershipFn::Triangular { a, b, c } => {
                if !(a <= b && b <= c && a < c) {
                    return Err(ModelError::Membership(format!(
                        "triangular parameters must satisfy a <= b <= c, a < c (got {a}, {b}, {c})"
                    )));
                }
            }
            MembershipFn::Trapezoidal { a, b, c, d } => {
                if !(a <= b && b <= c && c <= d && a < d) {
                    return Err(ModelError::Membership(format!(
                        "trapezoidal parameters must be ordered (got {a}, {b}, {c}, {d})"
                    )));
                }
            }
            MembershipFn::Gaussian { width, .. } => {
                if *width <= 0.0 {
                    return Err(ModelError::Membership(format!(
                        "gaussian width must be positive (got {width})"
                    )));
                }
            }
            MembershipFn::Tabulated { breakpoints, grades } => {
                if breakpoints.len() != grades.len() || breakpoints.len() < 2 {
                    return Err(ModelError::Membership(
                        "tabulated breakpoints and grades must have equal length >= 2".into(),
                    ));
                }
                if !breakpoints.windows(2).all(|w| w[0] < w[1]) {
                    return Err(ModelError::Membership(
                        "tabulated breakpoints must be strictly increasing".into(),
                    ));
                }
                if grades.iter().any(|g| !(0.0..=1.0).contains(g)) {
                    return Err(ModelError::Membership(
                        "tabulated grades must lie in [0, 1]".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let g = match *self {
            MembershipFn::Triangular { a, b, c } => {
                if x <= a || x >= c {
                    // peak at an endpoint still counts there
                    if x == b {
                        1.0
                    } else {
                        0.0
                    }
                } else if x <= b {
                    if b > a {
                        (x - a) / (b - a)
                    } else {
                        1.0
                    }
                } else if c > b {
                    (c - x) / (c - b)
                } else {
                    1.0
                }
            }
            MembershipFn::Trapezoidal { a, b, c, d } => {
                if x < a || x > d {
                    0.0
                } else if x < b {
                    (x - a) / (b - a)
                } else if x <= c {
                    1.0
                } else {
                    (d - x) / (d - c)
                }
            }
            MembershipFn::Gaussian { center, width } => {
                let t = (x - center) / width;
                (-0.5 * t * t).exp()
            }
            MembershipFn::Tabulated {
                ref breakpoints,
                ref grades,
            } => {
                if x <= breakpoints[0] {
                    grades[0]
                } else if x >= *breakpoints.last().unwrap() {
                    *grades.last().unwrap()
                } else {
                    let idx = breakpoints.partition_point(|&b| b <= x) - 1;
                    let (x0, x1) = (breakpoints[idx], breakpoints[idx + 1]);
                    let (g0, g1) = (grades[idx], grades[idx + 1]);
                    g0 + (g1 - g0) * (x - x0) / (x1 - x0)
                }
            }
        };
        g.clamp(0.0, 1.0)
    }

    /// Span over which the function varies, used for construction-time checks.
    fn span(&self) -> (f64, f64) {
        match *self {
            MembershipFn::Triangular { a, c, .. } => (a, c),
            MembershipFn::Trapezoidal { a, d, .. } => (a, d),
            MembershipFn::Gaussian { center, width } => (center - 6.0 * width, center + 6.0 * width),
            MembershipFn::Tabulated { ref breakpoints, .. } => {
                (breakpoints[0], *breakpoints.last().unwrap())
            }
        }
    }
}

/// Interval type-2 set: a lower and an upper membership function bounding
/// the footprint of uncertainty.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IT2Set {
    pub lower: MembershipFn,
    pub upper: MembershipFn,
}

impl IT2Set {
    const GRID: usize = 512;

    /// Construct, checking `lower <= upper` on a dense grid over the joint span.
    pub fn new(lower: MembershipFn, upper: MembershipFn) -> Result<Self, ModelError> {
        lower.validate()?;
        upper.validate()?;
        let (l0, l1) = lower.span();
        let (u0, u1) = upper.span();
        let (lo, hi) = (l0.min(u0), l1.max(u1));
        let pad = 0.1 * (hi - lo).max(1.0);
        let (lo, hi) = (lo - pad, hi + pad);
        for k in 0..=Self::GRID {
            let x = lo + (hi - lo) * k as f64 / Self::GRID as f64;
            if lower.eval(x) > upper.eval(x) + 1e-12 {
                return Err(ModelError::Membership(format!(
                    "lower grade exceeds upper grade at x = {x}: {} > {}",
                    lower.eval(x),
                    upper.eval(x)
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn grades(&self, x: f64) -> (f64, f64) {
        (self.lower.eval(x), self.upper.eval(x))
    }
}

/// Convex type-reduction weights per rule: state -> (lower weight, upper
/// weight), summing to one. The default is the constant (0.5, 0.5) split.
#[derive(Clone)]
pub enum TypeReduction {
    Constant { lower_weight: f64 },
    Custom(Arc<dyn Fn(&DVector<f64>, usize) -> (f64, f64) + Send + Sync>),
}

impl TypeReduction {
    pub fn weights(&self, x: &DVector<f64>, rule: usize) -> (f64, f64) {
        match self {
            TypeReduction::Constant { lower_weight } => (*lower_weight, 1.0 - lower_weight),
            TypeReduction::Custom(f) => f(x, rule),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if let TypeReduction::Constant { lower_weight } = self {
            if !(0.0..=1.0).contains(lower_weight) {
                return Err(ModelError::Invalid(format!(
                    "type-reduction lower weight must lie in [0, 1] (got {lower_weight})"
                )));
            }
        }
        Ok(())
    }
}

impl Default for TypeReduction {
    fn default() -> Self {
        TypeReduction::Constant { lower_weight: 0.5 }
    }
}

impl fmt::Debug for TypeReduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeReduction::Constant { lower_weight } => {
                write!(f, "Constant {{ lower_weight: {lower_weight} }}")
            }
            TypeReduction::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// One plant rule: local linear model, interconnection matrices keyed by the
/// neighbouring subsystem index, and the antecedent IT2 sets bound to single
/// state components.
#[derive(Debug, Clone)]
pub struct PlantRule {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d1: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d2: DMatrix<f64>,
    pub interconnections: BTreeMap<usize, DMatrix<f64>>,
    pub antecedents: Vec<(usize, IT2Set)>,
}

#[derive(Debug, Clone)]
pub struct Subsystem {
    pub index: usize,
    pub state_dim: usize,
    pub input_dim: usize,
    pub disturbance_dim: usize,
    pub output_dim: usize,
    pub rules: Vec<PlantRule>,
    pub alpha: TypeReduction,
}

impl Subsystem {
    pub fn num_rules(&self) -> usize {
        self.rules.len()
    }

    fn check_state(&self, x: &DVector<f64>) -> Result<(), ModelError> {
        if x.len() != self.state_dim {
            return Err(ModelError::Dimension(format!(
                "subsystem {} expects state of dimension {}, got {}",
                self.index,
                self.state_dim,
                x.len()
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.rules.is_empty() {
            return Err(ModelError::Invalid(format!(
                "subsystem {} must have at least one rule",
                self.index
            )));
        }
        self.alpha.validate()?;
        let (n, m, mw, nz) = (
            self.state_dim,
            self.input_dim,
            self.disturbance_dim,
            self.output_dim,
        );
        for (l, rule) in self.rules.iter().enumerate() {
            let dims = [
                (rule.a.shape(), (n, n), "A"),
                (rule.b.shape(), (n, m), "B"),
                (rule.d1.shape(), (n, mw), "D1"),
                (rule.c.shape(), (nz, n), "C"),
                (rule.d2.shape(), (nz, mw), "D2"),
            ];
            for (got, want, name) in dims {
                if got != want {
                    return Err(ModelError::Dimension(format!(
                        "subsystem {} rule {l}: {name} has shape {got:?}, expected {want:?}",
                        self.index
                    )));
                }
            }
            for (&k, mat) in &rule.interconnections {
                if k == self.index {
                    return Err(ModelError::Invalid(format!(
                        "subsystem {} rule {l}: interconnection key must differ from own index",
                        self.index
                    )));
                }
                if mat.nrows() != n {
                    return Err(ModelError::Dimension(format!(
                        "subsystem {} rule {l}: interconnection to {k} has {} rows, expected {n}",
                        self.index,
                        mat.nrows()
                    )));
                }
            }
            for &(comp, _) in &rule.antecedents {
                if comp >= n {
                    return Err(ModelError::Invalid(format!(
                        "subsystem {} rule {l}: antecedent state index {comp} out of range",
                        self.index
                    )));
                }
            }
        }
        Ok(())
    }

    /// Lower/upper firing strengths of rule `l`: products of the antecedent
    /// lower/upper grades at `x`.
    pub fn firing_bounds(&self, l: usize, x: &DVector<f64>) -> Result<(f64, f64), ModelError> {
        self.check_state(x)?;
        let rule = self.rules.get(l).ok_or_else(|| {
            ModelError::Invalid(format!(
                "subsystem {}: rule index {l} out of range",
                self.index
            ))
        })?;
        let mut lo = 1.0;
        let mut hi = 1.0;
        for &(comp, ref set) in &rule.antecedents {
            let (gl, gu) = set.grades(x[comp]);
            lo *= gl;
            hi *= gu;
        }
        Ok((lo, hi))
    }

    /// Type-reduced, normalized plant grades at `x`; they sum to one.
    pub fn plant_grades(&self, x: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        self.check_state(x)?;
        let p = self.num_rules();
        let mut w = DVector::zeros(p);
        for l in 0..p {
            let (lo, hi) = self.firing_bounds(l, x)?;
            let (al, au) = self.alpha.weights(x, l);
            w[l] = al * lo + au * hi;
        }
        let total: f64 = w.sum();
        if total <= 0.0 {
            return Err(ModelError::DegenerateGrades {
                subsystem: self.index,
                state: x.iter().copied().collect(),
            });
        }
        Ok(w / total)
    }
}

/// Controller rule base: antecedent sets per rule plus the beta
/// type-reduction realization. Independent of the plant's rule base.
#[derive(Debug, Clone)]
pub struct ControllerRuleBase {
    pub rules: Vec<Vec<(usize, IT2Set)>>,
    pub beta: TypeReduction,
}

impl ControllerRuleBase {
    pub fn num_rules(&self) -> usize {
        self.rules.len()
    }

    pub fn validate(&self, state_dim: usize) -> Result<(), ModelError> {
        if self.rules.is_empty() {
            return Err(ModelError::Invalid(
                "controller rule base must have at least one rule".into(),
            ));
        }
        self.beta.validate()?;
        for (j, rule) in self.rules.iter().enumerate() {
            for &(comp, _) in rule {
                if comp >= state_dim {
                    return Err(ModelError::Invalid(format!(
                        "controller rule {j}: antecedent state index {comp} out of range"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn firing_bounds(&self, j: usize, x: &DVector<f64>) -> (f64, f64) {
        let mut lo = 1.0;
        let mut hi = 1.0;
        for &(comp, ref set) in &self.rules[j] {
            let (gl, gu) = set.grades(x[comp]);
            lo *= gl;
            hi *= gu;
        }
        (lo, hi)
    }

    /// Normalized controller grades at `x`; they sum to one.
    pub fn grades(&self, x: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        let c = self.num_rules();
        let mut m = DVector::zeros(c);
        for j in 0..c {
            let (lo, hi) = self.firing_bounds(j, x);
            let (bl, bu) = self.beta.weights(x, j);
            m[j] = bl * lo + bu * hi;
        }
        let total: f64 = m.sum();
        if total <= 0.0 {
            return Err(ModelError::DegenerateGrades {
                subsystem: usize::MAX,
                state: x.iter().copied().collect(),
            });
        }
        Ok(m / total)
    }
}

/// N interconnected IT2 T-S subsystems with one controller rule base each.
#[derive(Debug, Clone)]
pub struct LargeScaleSystem {
    pub subsystems: Vec<Subsystem>,
    pub controllers: Vec<ControllerRuleBase>,
}

impl LargeScaleSystem {
    pub fn new(
        subsystems: Vec<Subsystem>,
        controllers: Vec<ControllerRuleBase>,
    ) -> Result<Self, ModelError> {
        let sys = Self {
            subsystems,
            controllers,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn num_subsystems(&self) -> usize {
        self.subsystems.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.subsystems.is_empty() {
            return Err(ModelError::Invalid("system must have at least one subsystem".into()));
        }
        if self.controllers.len() != self.subsystems.len() {
            return Err(ModelError::Invalid(format!(
                "expected one controller rule base per subsystem ({} vs {})",
                self.controllers.len(),
                self.subsystems.len()
            )));
        }
        let n_sub = self.subsystems.len();
        for (i, sub) in self.subsystems.iter().enumerate() {
            if sub.index != i {
                return Err(ModelError::Invalid(format!(
                    "subsystem at position {i} carries index {}",
                    sub.index
                )));
            }
            sub.validate()?;
            self.controllers[i].validate(sub.state_dim)?;
            for rule in &sub.rules {
                for (&k, mat) in &rule.interconnections {
                    if k >= n_sub {
                        return Err(ModelError::Invalid(format!(
                            "subsystem {i}: interconnection references missing subsystem {k}"
                        )));
                    }
                    if mat.ncols() != self.subsystems[k].state_dim {
                        return Err(ModelError::Dimension(format!(
                            "subsystem {i}: interconnection to {k} has {} columns, expected {}",
                            mat.ncols(),
                            self.subsystems[k].state_dim
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Combined grade table over (plant rule l, controller rule j): the
    /// outer product of the normalized plant and controller grades, so the
    /// table sums to one.
    pub fn combined_grades(&self, i: usize, x: &DVector<f64>) -> Result<DMatrix<f64>, ModelError> {
        let w = self.subsystems[i].plant_grades(x)?;
        let m = self.controllers[i].grades(x).map_err(|e| match e {
            ModelError::DegenerateGrades { state, .. } => ModelError::DegenerateGrades {
                subsystem: i,
                state,
            },
            other => other,
        })?;
        Ok(&w * m.transpose())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tri(a: f64, b: f64, c: f64) -> MembershipFn {
        MembershipFn::Triangular { a, b, c }
    }

    fn simple_set() -> IT2Set {
        IT2Set::new(
            MembershipFn::Tabulated {
                breakpoints: vec![-1.0, 0.0, 1.0],
                grades: vec![0.0, 0.8, 0.0],
            },
            tri(-1.0, 0.0, 1.0),
        )
        .unwrap()
    }

    fn single_rule_subsystem(set: IT2Set) -> Subsystem {
        Subsystem {
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
                antecedents: vec![(0, set)],
            }],
            alpha: TypeReduction::default(),
        }
    }

    #[test]
    fn it2_rejects_lower_above_upper() {
        let res = IT2Set::new(tri(-1.0, 0.0, 1.0), tri(-0.5, 0.0, 0.5));
        assert!(res.is_err());
    }

    #[test]
    fn firing_bounds_single_antecedent() {
        let sub = single_rule_subsystem(simple_set());
        let x = DVector::from_element(1, 0.0);
        let (lo, hi) = sub.firing_bounds(0, &x).unwrap();
        assert_relative_eq!(lo, 0.8);
        assert_relative_eq!(hi, 1.0);
    }

    #[test]
    fn firing_bounds_product_rule() {
        // two antecedents with lower grades 0.5, 0.4 and upper 0.6, 0.5
        let s1 = IT2Set::new(
            MembershipFn::Tabulated {
                breakpoints: vec![-1.0, 1.0],
                grades: vec![0.5, 0.5],
            },
            MembershipFn::Tabulated {
                breakpoints: vec![-1.0, 1.0],
                grades: vec![0.6, 0.6],
            },
        )
        .unwrap();
        let s2 = IT2Set::new(
            MembershipFn::Tabulated {
                breakpoints: vec![-1.0, 1.0],
                grades: vec![0.4, 0.4],
            },
            MembershipFn::Tabulated {
                breakpoints: vec![-1.0, 1.0],
                grades: vec![0.5, 0.5],
            },
        )
        .unwrap();
        let mut sub = single_rule_subsystem(s1);
        sub.state_dim = 2;
        sub.rules[0].a = DMatrix::identity(2, 2) * -1.0;
        sub.rules[0].b = DMatrix::from_element(2, 1, 1.0);
        sub.rules[0].d1 = DMatrix::from_element(2, 1, 0.0);
        sub.rules[0].c = DMatrix::from_element(1, 2, 1.0);
        sub.rules[0].antecedents.push((1, s2));
        let x = DVector::from_vec(vec![0.0, 0.0]);
        let (lo, hi) = sub.firing_bounds(0, &x).unwrap();
        assert_relative_eq!(lo, 0.20, epsilon = 1e-12);
        assert_relative_eq!(hi, 0.30, epsilon = 1e-12);
    }

    #[test]
    fn zero_grades_give_zero_bounds() {
        let sub = single_rule_subsystem(simple_set());
        let x = DVector::from_element(1, 5.0);
        let (lo, hi) = sub.firing_bounds(0, &x).unwrap();
        assert_eq!((lo, hi), (0.0, 0.0));
    }

    #[test]
    fn single_rule_grades_normalize_to_one() {
        let sub = single_rule_subsystem(simple_set());
        let g = sub.plant_grades(&DVector::from_element(1, 0.3)).unwrap();
        assert_relative_eq!(g[0], 1.0);
    }

    #[test]
    fn degenerate_state_reports_error() {
        let sub = single_rule_subsystem(simple_set());
        let err = sub.plant_grades(&DVector::from_element(1, 5.0)).unwrap_err();
        assert!(matches!(err, ModelError::DegenerateGrades { .. }));
    }

    #[test]
    fn type1_collapse_matches_direct_normalization() {
        // alpha = 0.5/0.5 with lower == upper per rule reduces to w / sum(w)
        let set1 = IT2Set::new(tri(-2.0, -1.0, 1.0), tri(-2.0, -1.0, 1.0)).unwrap();
        let set2 = IT2Set::new(tri(-1.0, 1.0, 2.0), tri(-1.0, 1.0, 2.0)).unwrap();
        let mut sub = single_rule_subsystem(set1);
        sub.rules.push(sub.rules[0].clone());
        sub.rules[1].antecedents = vec![(0, set2)];
        let x = DVector::from_element(1, 0.2);
        let g = sub.plant_grades(&x).unwrap();
        let w1 = sub.rules[0].antecedents[0].1.lower.eval(0.2);
        let w2 = sub.rules[1].antecedents[0].1.lower.eval(0.2);
        assert_relative_eq!(g[0], w1 / (w1 + w2), epsilon = 1e-12);
        assert_relative_eq!(g[1], w2 / (w1 + w2), epsilon = 1e-12);
    }

    #[test]
    fn embedded_grades_normalize() {
        // p = 2, embedded grades (0.2, 0.6) before normalization -> (0.25, 0.75)
        let flat = |g: f64| MembershipFn::Tabulated {
            breakpoints: vec![-1.0, 1.0],
            grades: vec![g, g],
        };
        let mut sub = single_rule_subsystem(IT2Set::new(flat(0.2), flat(0.2)).unwrap());
        sub.rules.push(sub.rules[0].clone());
        sub.rules[1].antecedents = vec![(0, IT2Set::new(flat(0.6), flat(0.6)).unwrap())];
        let g = sub.plant_grades(&DVector::from_element(1, 0.0)).unwrap();
        assert_relative_eq!(g[0], 0.25, epsilon = 1e-12);
        assert_relative_eq!(g[1], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn controller_lower_only_uses_lower_grades() {
        let set = simple_set();
        let rb = ControllerRuleBase {
            rules: vec![vec![(0, set.clone())], vec![(0, set)]],
            beta: TypeReduction::Constant { lower_weight: 1.0 },
        };
        let x = DVector::from_element(1, 0.25);
        let g = rb.grades(&x).unwrap();
        // both rules share one set, so grades are equal regardless of beta
        assert_relative_eq!(g[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(g[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn combined_grades_outer_product() {
        // w = (0.3, 0.7), m = (0.4, 0.6) -> h = [[0.12, 0.18], [0.28, 0.42]]
        let flat = |g: f64| MembershipFn::Tabulated {
            breakpoints: vec![-1.0, 1.0],
            grades: vec![g, g],
        };
        let plant_set = |g: f64| IT2Set::new(flat(g), flat(g)).unwrap();
        let mut sub = single_rule_subsystem(plant_set(0.3));
        sub.rules.push(sub.rules[0].clone());
        sub.rules[1].antecedents = vec![(0, plant_set(0.7))];
        let rb = ControllerRuleBase {
            rules: vec![vec![(0, plant_set(0.4))], vec![(0, plant_set(0.6))]],
            beta: TypeReduction::default(),
        };
        let sys = LargeScaleSystem::new(vec![sub], vec![rb]).unwrap();
        let h = sys
            .combined_grades(0, &DVector::from_element(1, 0.0))
            .unwrap();
        assert_relative_eq!(h[(0, 0)], 0.12, epsilon = 1e-12);
        assert_relative_eq!(h[(0, 1)], 0.18, epsilon = 1e-12);
        assert_relative_eq!(h[(1, 0)], 0.28, epsilon = 1e-12);
        assert_relative_eq!(h[(1, 1)], 0.42, epsilon = 1e-12);
        assert_relative_eq!(h.sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn imperfect_premise_matching_allows_c_ne_p() {
        let set = simple_set();
        let sub = single_rule_subsystem(set.clone()); // p = 1
        let rb = ControllerRuleBase {
            rules: vec![
                vec![(0, set.clone())],
                vec![(0, set.clone())],
                vec![(0, set)],
            ], // c = 3
            beta: TypeReduction::default(),
        };
        let sys = LargeScaleSystem::new(vec![sub], vec![rb]).unwrap();
        let h = sys
            .combined_grades(0, &DVector::from_element(1, 0.1))
            .unwrap();
        assert_eq!(h.shape(), (1, 3));
        assert_relative_eq!(h.sum(), 1.0, epsilon = 1e-12);
    }
}
