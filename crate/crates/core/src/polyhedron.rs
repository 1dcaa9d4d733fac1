//! Parametric polyhedra `C(p) = {x : ⟨x, g_i(p)⟩ = f_i(p), i ∈ I₁; ⟨x, g_i(p)⟩ ≤ f_i(p), i ∈ I₂}`
//! with affine data `g_i(p) = A_i p + b_i` and `f_i(p) = ⟨c_i, p⟩ + d0_i`.
//!
//! Constraints are stored equalities first. Indices used throughout the
//! library are 0-based positions in that stored order; the order of the
//! source document is kept so that serialisation reproduces it.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm, VectorFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintKind {
    #[serde(rename = "eq")]
    Equality,
    #[serde(rename = "ineq")]
    Inequality,
}

/// One affine constraint. `a` is the `d × m` parameter-to-gradient matrix,
/// stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineConstraint {
    pub kind: ConstraintKind,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d0: f64,
}

impl AffineConstraint {
    /// A constraint whose gradient `b` and right-hand side `d0` do not move with `p`.
    pub fn fixed(kind: ConstraintKind, b: Vec<f64>, d0: f64, param_dim: usize) -> Self {
        let d = b.len();
        Self {
            kind,
            a: vec![vec![0.0; param_dim]; d],
            b,
            c: vec![0.0; param_dim],
            d0,
        }
    }

    pub fn gradient(&self, p: &[f64]) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(row, bi)| dot(row, p) + bi)
            .collect()
    }

    pub fn rhs(&self, p: &[f64]) -> f64 {
        dot(&self.c, p) + self.d0
    }

    /// Exact Lipschitz constants `(‖A‖₂, ‖c‖₂)` of the gradient and rhs maps.
    pub fn lipschitz(&self) -> (f64, f64) {
        let d = self.a.len();
        let m = self.c.len();
        let lg = if d == 0 || m == 0 {
            0.0
        } else {
            DMatrix::from_fn(d, m, |i, j| self.a[i][j])
                .singular_values()
                .iter()
                .copied()
                .fold(0.0, f64::max)
        };
        (lg, norm(&self.c))
    }

    fn validate(&self, path: &str, d: usize, m: usize) -> Result<()> {
        let err = |field: String, message: String| Error::Problem {
            path: format!("{path}.{field}"),
            message,
        };
        if self.a.len() != d {
            return Err(err("A".into(), format!("expected {d} rows, found {}", self.a.len())));
        }
        for (r, row) in self.a.iter().enumerate() {
            if row.len() != m {
                return Err(err(
                    format!("A[{r}]"),
                    format!("expected {m} columns, found {}", row.len()),
                ));
            }
        }
        if self.b.len() != d {
            return Err(err("b".into(), format!("expected length {d}, found {}", self.b.len())));
        }
        if self.c.len() != m {
            return Err(err("c".into(), format!("expected length {m}, found {}", self.c.len())));
        }
        let finite = self.a.iter().flatten().chain(&self.b).chain(&self.c).all(|x| x.is_finite())
            && self.d0.is_finite();
        if !finite {
            return Err(err("*".into(), "non-finite coefficient".into()));
        }
        Ok(())
    }
}

/// Numerical tolerances shared by the solvers and estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative pivot threshold for rank decisions.
    pub rank: f64,
    /// Absolute threshold on `|G_i|` for the active set.
    pub active: f64,
    /// Absolute feasibility threshold.
    pub feasibility: f64,
    /// Threshold on the KKT residual of a converged projection.
    pub kkt: f64,
    /// Multipliers at or below this are treated as zero in reductions.
    pub positivity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank: 1e-9,
            active: 1e-8,
            feasibility: 1e-9,
            kkt: 1e-9,
            positivity: 1e-12,
        }
    }
}

/// Neighbourhood radii `δ₀` (parameter) and `δ` (point).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Radii {
    pub param: f64,
    pub point: f64,
}

impl Default for Radii {
    fn default() -> Self {
        Self {
            param: 0.5,
            point: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSettings {
    pub seed: u64,
    pub samples: usize,
    /// Number of radius-halving levels in the growth diagnostic.
    pub levels: usize,
}

impl Default for SamplingSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 500,
            levels: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasePoint {
    pub p: Vec<f64>,
    pub x: Vec<f64>,
}

/// The on-disk problem document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub ambient_dim: usize,
    pub param_dim: usize,
    pub constraints: Vec<AffineConstraint>,
    pub base_point: BasePoint,
    #[serde(default)]
    pub radii: Radii,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub sampling: SamplingSettings,
}

/// A validated parametric polyhedron with its base point `(p̄, x̄)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingPolyhedron {
    ambient_dim: usize,
    param_dim: usize,
    constraints: Vec<AffineConstraint>,
    n_eq: usize,
    /// `source_order[i]` is the position in the source document of stored constraint `i`.
    source_order: Vec<usize>,
    base_param: Vec<f64>,
    base_point: Vec<f64>,
    radii: Radii,
    tolerances: Tolerances,
    sampling: SamplingSettings,
}

impl TryFrom<ProblemFile> for MovingPolyhedron {
    type Error = Error;

    fn try_from(file: ProblemFile) -> Result<Self> {
        let d = file.ambient_dim;
        let m = file.param_dim;
        let problem = |path: &str, message: String| Error::Problem {
            path: path.to_string(),
            message,
        };
        if d == 0 {
            return Err(problem("ambient_dim", "must be at least 1".into()));
        }
        if file.constraints.is_empty() {
            return Err(problem("constraints", "at least one constraint is required".into()));
        }
        for (i, c) in file.constraints.iter().enumerate() {
            c.validate(&format!("constraints[{i}]"), d, m)?;
        }
        if file.base_point.p.len() != m {
            return Err(problem(
                "base_point.p",
                format!("expected length {m}, found {}", file.base_point.p.len()),
            ));
        }
        if file.base_point.x.len() != d {
            return Err(problem(
                "base_point.x",
                format!("expected length {d}, found {}", file.base_point.x.len()),
            ));
        }
        if !(file.radii.param > 0.0 && file.radii.point > 0.0)
            || !file.radii.param.is_finite()
            || !file.radii.point.is_finite()
        {
            return Err(problem("radii", "radii must be positive and finite".into()));
        }
        let t = &file.tolerances;
        for (name, v) in [
            ("rank", t.rank),
            ("active", t.active),
            ("feasibility", t.feasibility),
            ("kkt", t.kkt),
            ("positivity", t.positivity),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(problem(&format!("tolerances.{name}"), "must be positive".into()));
            }
        }

        let mut order: Vec<usize> = (0..file.constraints.len()).collect();
        order.sort_by_key(|&i| file.constraints[i].kind != ConstraintKind::Equality);
        let n_eq = file
            .constraints
            .iter()
            .filter(|c| c.kind == ConstraintKind::Equality)
            .count();
        let constraints = order.iter().map(|&i| file.constraints[i].clone()).collect();

        let mp = Self {
            ambient_dim: d,
            param_dim: m,
            constraints,
            n_eq,
            source_order: order,
            base_param: file.base_point.p,
            base_point: file.base_point.x,
            radii: file.radii,
            tolerances: file.tolerances,
            sampling: file.sampling,
        };
        let base = mp.instantiate(&mp.base_param)?;
        let residual = base.residual(&mp.base_point)?;
        if residual > mp.tolerances.feasibility {
            return Err(problem(
                "base_point.x",
                format!(
                    "not feasible at base parameter: residual {residual:e} exceeds {:e}",
                    mp.tolerances.feasibility
                ),
            ));
        }
        Ok(mp)
    }
}

impl MovingPolyhedron {
    /// Build from constraints in any order; equalities are moved to the front.
    pub fn new(
        constraints: Vec<AffineConstraint>,
        base_param: Vec<f64>,
        base_point: Vec<f64>,
    ) -> Result<Self> {
        let file = ProblemFile {
            ambient_dim: base_point.len(),
            param_dim: base_param.len(),
            constraints,
            base_point: BasePoint {
                p: base_param,
                x: base_point,
            },
            radii: Radii::default(),
            tolerances: Tolerances::default(),
            sampling: SamplingSettings::default(),
        };
        Self::try_from(file)
    }

    pub fn with_radii(mut self, radii: Radii) -> Self {
        self.radii = radii;
        self
    }

    pub fn with_sampling(mut self, sampling: SamplingSettings) -> Self {
        self.sampling = sampling;
        self
    }

    /// Replace the tolerances; the base point is re-validated.
    pub fn with_tolerances(self, tolerances: Tolerances) -> Result<Self> {
        let mut file = self.to_file();
        file.tolerances = tolerances;
        Self::try_from(file)
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn constraints(&self) -> &[AffineConstraint] {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn n_eq(&self) -> usize {
        self.n_eq
    }

    pub fn source_order(&self) -> &[usize] {
        &self.source_order
    }

    pub fn base_param(&self) -> &[f64] {
        &self.base_param
    }

    pub fn base_point(&self) -> &[f64] {
        &self.base_point
    }

    pub fn radii(&self) -> Radii {
        self.radii
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tolerances
    }

    pub fn sampling(&self) -> SamplingSettings {
        self.sampling
    }

    pub fn instantiate(&self, p: &[f64]) -> Result<PolyhedronInstance> {
        check_dim("parameter", self.param_dim, p.len())?;
        Ok(PolyhedronInstance {
            param: p.to_vec(),
            gradients: self.constraints.iter().map(|c| c.gradient(p)).collect(),
            rhs: self.constraints.iter().map(|c| c.rhs(p)).collect(),
            n_eq: self.n_eq,
        })
    }

    pub fn base_instance(&self) -> PolyhedronInstance {
        self.instantiate(&self.base_param)
            .expect("base parameter validated at construction")
    }

    /// `(ℓ_g, ℓ_f)` for each stored constraint.
    pub fn lipschitz_constants(&self) -> Vec<(f64, f64)> {
        self.constraints.iter().map(AffineConstraint::lipschitz).collect()
    }

    /// `max_i (‖x‖ ℓ_{g_i} + ℓ_{f_i})`, the Lipschitz constant in `p` of the
    /// residual at `x`.
    pub fn residual_lipschitz(&self, x: &[f64]) -> f64 {
        let nx = norm(x);
        self.lipschitz_constants()
            .iter()
            .map(|(lg, lf)| nx * lg + lf)
            .fold(0.0, f64::max)
    }

    pub fn to_file(&self) -> ProblemFile {
        let mut constraints: Vec<Option<AffineConstraint>> = vec![None; self.len()];
        for (stored, &src) in self.source_order.iter().enumerate() {
            constraints[src] = Some(self.constraints[stored].clone());
        }
        ProblemFile {
            ambient_dim: self.ambient_dim,
            param_dim: self.param_dim,
            constraints: constraints.into_iter().map(|c| c.expect("permutation")).collect(),
            base_point: BasePoint {
                p: self.base_param.clone(),
                x: self.base_point.clone(),
            },
            radii: self.radii,
            tolerances: self.tolerances,
            sampling: self.sampling,
        }
    }
}

/// Parse and validate a JSON problem document.
pub fn parse_problem(text: &str) -> Result<MovingPolyhedron> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ProblemFile = serde_path_to_error::deserialize(de).map_err(|e| Error::Problem {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    MovingPolyhedron::try_from(file)
}

pub fn serialize_problem(mp: &MovingPolyhedron) -> Result<String> {
    Ok(serde_json::to_string_pretty(&mp.to_file())?)
}

/// `C(p)` frozen at one parameter value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolyhedronInstance {
    pub param: Vec<f64>,
    pub gradients: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub n_eq: usize,
}

impl PolyhedronInstance {
    pub fn len(&self) -> usize {
        self.gradients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gradients.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.gradients.first().map_or(0, Vec::len)
    }

    pub fn is_equality(&self, i: usize) -> bool {
        i < self.n_eq
    }

    pub fn kind(&self, i: usize) -> ConstraintKind {
        if self.is_equality(i) {
            ConstraintKind::Equality
        } else {
            ConstraintKind::Inequality
        }
    }

    pub fn equalities(&self) -> std::ops::Range<usize> {
        0..self.n_eq
    }

    pub fn inequalities(&self) -> std::ops::Range<usize> {
        self.n_eq..self.len()
    }

    /// `G_i(x, p) = ⟨x, g_i(p)⟩ − f_i(p)`.
    pub fn constraint_value(&self, i: usize, x: &[f64]) -> f64 {
        dot(x, &self.gradients[i]) - self.rhs[i]
    }

    fn violation_unchecked(&self, x: &[f64]) -> f64 {
        (0..self.len())
            .map(|i| {
                let g = self.constraint_value(i, x);
                if self.is_equality(i) {
                    g.abs()
                } else {
                    g
                }
            })
            .fold(0.0, f64::max)
    }

    /// `max{0, |G_i| (i ∈ I₁), G_i (i ∈ I₂)}`.
    pub fn residual(&self, x: &[f64]) -> Result<f64> {
        check_dim("point", self.dim(), x.len())?;
        Ok(self.violation_unchecked(x))
    }

    pub fn membership(&self, x: &[f64], tol: f64) -> Result<bool> {
        Ok(self.residual(x)? <= tol)
    }

    /// Indices with `|G_i(x, p)| ≤ eps`. `x` must be feasible within `eps`.
    pub fn active_set(&self, x: &[f64], eps: f64) -> Result<Vec<usize>> {
        let residual = self.residual(x)?;
        if residual > eps {
            return Err(Error::InfeasiblePoint { residual, tol: eps });
        }
        Ok(self.active_set_unchecked(x, eps))
    }

    pub(crate) fn active_set_unchecked(&self, x: &[f64], eps: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.constraint_value(i, x).abs() <= eps)
            .collect()
    }

    /// Gradients at the given indices, labelled by constraint index.
    pub fn gradient_family(&self, indices: &[usize]) -> Result<VectorFamily> {
        let vectors = indices
            .iter()
            .map(|&i| {
                self.gradients.get(i).cloned().ok_or(Error::IndexOutOfRange {
                    index: i,
                    len: self.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        VectorFamily::new(self.dim(), vectors, indices.to_vec())
    }

    /// `Σ λ_i g_i(p)` over all constraints.
    pub fn combine(&self, lambda: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (g, &l) in self.gradients.iter().zip(lambda) {
            if l != 0.0 {
                crate::linalg::axpy(l, g, &mut out);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn paper() -> MovingPolyhedron {
        crate::scenarios::paper_example().problem
    }

    #[test]
    fn instantiate_paper_example() {
        let inst = paper().instantiate(&[1.0, 1.0]).unwrap();
        assert_eq!(
            inst.gradients,
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]
        );
        assert_eq!(inst.rhs, vec![0.0, 0.0, 0.0]);
        let mp = paper();
        assert_eq!(mp.base_instance(), mp.instantiate(&[0.0, 0.0]).unwrap());
        assert!(matches!(
            mp.instantiate(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn constant_constraint_ignores_parameter() {
        let c = AffineConstraint::fixed(ConstraintKind::Inequality, vec![1.0, 2.0], 0.5, 3);
        assert_eq!(c.gradient(&[4.0, -1.0, 9.0]), vec![1.0, 2.0]);
        assert_eq!(c.rhs(&[4.0, -1.0, 9.0]), 0.5);
        assert_eq!(c.lipschitz(), (0.0, 0.0));
    }

    #[test]
    fn residual_examples() {
        let inst = paper().instantiate(&[1.0, 1.0]).unwrap();
        assert_eq!(inst.residual(&[1.0, 2.0]).unwrap(), 3.0);
        assert_eq!(inst.residual(&[0.0, 0.0]).unwrap(), 0.0);
        let half = MovingPolyhedron::new(
            vec![AffineConstraint::fixed(ConstraintKind::Inequality, vec![1.0, 0.0], 0.0, 1)],
            vec![0.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        assert_eq!(half.base_instance().residual(&[-1.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn active_set_examples() {
        let inst = paper().base_instance();
        assert_eq!(inst.active_set(&[0.0, 0.0], 1e-8).unwrap(), vec![0, 1, 2]);

        let boxed = MovingPolyhedron::new(
            vec![
                AffineConstraint::fixed(ConstraintKind::Inequality, vec![1.0], 1.0, 1),
                AffineConstraint::fixed(ConstraintKind::Inequality, vec![-1.0], 1.0, 1),
            ],
            vec![0.0],
            vec![0.0],
        )
        .unwrap();
        assert!(boxed.base_instance().active_set(&[0.0], 1e-8).unwrap().is_empty());

        // one tight inequality plus an equality
        let mp = MovingPolyhedron::new(
            vec![
                AffineConstraint::fixed(ConstraintKind::Inequality, vec![1.0, 0.0], 1.0, 1),
                AffineConstraint::fixed(ConstraintKind::Inequality, vec![0.0, 1.0], 3.0, 1),
                AffineConstraint::fixed(ConstraintKind::Equality, vec![1.0, 1.0], 2.0, 1),
            ],
            vec![0.0],
            vec![1.0, 1.0],
        )
        .unwrap();
        // stored order puts the equality first
        assert_eq!(mp.source_order(), &[2, 0, 1]);
        assert_eq!(mp.base_instance().active_set(&[1.0, 1.0], 1e-8).unwrap(), vec![0, 1]);

        assert!(matches!(
            inst.active_set(&[1.0, 0.0], 1e-8),
            Err(Error::InfeasiblePoint { .. })
        ));
    }

    #[test]
    fn lipschitz_examples() {
        let lc = paper().lipschitz_constants();
        assert_relative_eq!(lc[2].0, 1.0, epsilon = 1e-12);
        assert_eq!(lc[2].1, 0.0);
        assert_eq!(lc[0], (0.0, 0.0));
        let c = AffineConstraint {
            kind: ConstraintKind::Inequality,
            a: vec![vec![2.0, 0.0], vec![0.0, 3.0]],
            b: vec![0.0, 0.0],
            c: vec![3.0, 4.0],
            d0: 0.0,
        };
        let (lg, lf) = c.lipschitz();
        assert_relative_eq!(lg, 3.0, epsilon = 1e-12);
        assert_relative_eq!(lf, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn membership_examples() {
        let inst = paper().instantiate(&[1.0, 1.0]).unwrap();
        assert!(inst.membership(&[0.0, 0.0], 1e-9).unwrap());
        assert!(!inst.membership(&[1.0, 2.0], 1e-9).unwrap());
    }

    #[test]
    fn problem_round_trip_and_reordering() {
        let text = r#"{
            "ambient_dim": 2, "param_dim": 1,
            "constraints": [
                {"kind": "ineq", "A": [[1.0],[0.0]], "b": [0.0, 1.0], "c": [0.5], "d0": 1.0},
                {"kind": "eq", "A": [[0.0],[0.0]], "b": [1.0, 0.0], "c": [0.0], "d0": 0.0}
            ],
            "base_point": {"p": [0.0], "x": [0.0, 0.0]},
            "radii": {"param": 0.25, "point": 0.75}
        }"#;
        let mp = parse_problem(text).unwrap();
        assert_eq!(mp.n_eq(), 1);
        assert_eq!(mp.source_order(), &[1, 0]);
        assert_eq!(mp.constraints()[0].kind, ConstraintKind::Equality);
        assert_eq!(mp.radii().param, 0.25);
        let again = parse_problem(&serialize_problem(&mp).unwrap()).unwrap();
        assert_eq!(again, mp);
    }

    #[test]
    fn problem_errors_carry_paths() {
        let unknown = r#"{"ambient_dim": 1, "param_dim": 0, "constraints": [
            {"kind": "eq", "A": [[]], "b": [1.0], "c": [], "d0": 0.0, "extra": 1}],
            "base_point": {"p": [], "x": [0.0]}}"#;
        let Err(Error::Problem { path, .. }) = parse_problem(unknown) else {
            panic!("expected schema error");
        };
        assert!(path.starts_with("constraints[0]"), "{path}");

        let bad_rows = r#"{"ambient_dim": 2, "param_dim": 1, "constraints": [
            {"kind": "eq", "A": [[0.0]], "b": [1.0, 0.0], "c": [0.0], "d0": 0.0}],
            "base_point": {"p": [0.0], "x": [0.0, 0.0]}}"#;
        let Err(Error::Problem { path, .. }) = parse_problem(bad_rows) else {
            panic!("expected shape error");
        };
        assert_eq!(path, "constraints[0].A");

        let infeasible = r#"{"ambient_dim": 1, "param_dim": 0, "constraints": [
            {"kind": "ineq", "A": [[]], "b": [1.0], "c": [], "d0": 0.0}],
            "base_point": {"p": [], "x": [1.0]}}"#;
        let Err(Error::Problem { path, .. }) = parse_problem(infeasible) else {
            panic!("expected feasibility error");
        };
        assert_eq!(path, "base_point.x");
    }
}
