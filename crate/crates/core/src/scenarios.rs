//! Built-in problem instances and a seeded random generator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, numerical_rank, VectorFamily};
use crate::polyhedron::{AffineConstraint, ConstraintKind, MovingPolyhedron};
use crate::regularity::{RankVerdict, SequencePoint};
use crate::sampling::{BallSampler, Stream};

/// `coeff · k^(−power)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    pub coeff: f64,
    pub power: i32,
}

impl PowerTerm {
    pub fn eval(&self, k: usize) -> f64 {
        self.coeff / (k as f64).powi(self.power)
    }
}

/// A sequence `(p_k, w_k)` whose components are single power terms in `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSequence {
    pub name: String,
    pub param: Vec<PowerTerm>,
    pub point: Vec<PowerTerm>,
}

impl PowerSequence {
    pub fn at(&self, k: usize) -> SequencePoint {
        SequencePoint {
            k,
            param: self.param.iter().map(|t| t.eval(k)).collect(),
            point: self.point.iter().map(|t| t.eval(k)).collect(),
        }
    }

    /// Points for `k = from..=to`.
    pub fn points(&self, from: usize, to: usize) -> Vec<SequencePoint> {
        (from.max(1)..=to).map(|k| self.at(k)).collect()
    }
}

/// What a scenario is known to do. Multipliers are indexed from 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Expectations {
    pub rcrcq: Option<RankVerdict>,
    pub liminf_consistent: Option<bool>,
    /// ℓ₁ norm of the normalised reduced multiplier along the first sequence.
    pub reduced_l1: Option<f64>,
    /// A subfamily whose multipliers blow up along the first sequence.
    pub blowup_subfamily: Option<Vec<usize>>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub problem: MovingPolyhedron,
    pub sequences: Vec<PowerSequence>,
    pub expected: Expectations,
}

fn term(coeff: f64, power: i32) -> PowerTerm {
    PowerTerm { coeff, power }
}

fn built(name: &str, description: &str, problem: Result<MovingPolyhedron>) -> Scenario {
    Scenario {
        name: name.to_string(),
        description: description.to_string(),
        problem: problem.expect("built-in scenario is valid"),
        sequences: Vec::new(),
        expected: Expectations::default(),
    }
}

/// `x₁ = 0`, `x₂ = 0`, `⟨x, p⟩ ≤ 0` in the plane, with `p̄ = x̄ = 0`.
///
/// `C(p) = {0}` for every `p`, RCRCQ holds, yet along `p_k = (1/k², 1/k²)`,
/// `w_k = (1/k, 2/k)` the multipliers on `{x₂ = 0, ⟨x,p⟩ ≤ 0}` grow like `k²`.
pub fn paper_example() -> Scenario {
    use ConstraintKind::*;
    let constraints = vec![
        AffineConstraint::fixed(Equality, vec![1.0, 0.0], 0.0, 2),
        AffineConstraint::fixed(Equality, vec![0.0, 1.0], 0.0, 2),
        AffineConstraint {
            kind: Inequality,
            a: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            b: vec![0.0, 0.0],
            c: vec![0.0, 0.0],
            d0: 0.0,
        },
    ];
    let mut s = built(
        "paper-example",
        "x1 = 0, x2 = 0, <x,p> <= 0 in R^2; RCRCQ holds but a fixed multiplier subfamily blows up",
        MovingPolyhedron::new(constraints, vec![0.0, 0.0], vec![0.0, 0.0]),
    );
    s.sequences.push(PowerSequence {
        name: "p_k = (1/k^2, 1/k^2), w_k = (1/k, 2/k)".into(),
        param: vec![term(1.0, 2), term(1.0, 2)],
        point: vec![term(1.0, 1), term(2.0, 1)],
    });
    s.expected = Expectations {
        rcrcq: Some(RankVerdict::Holds),
        liminf_consistent: Some(true),
        reduced_l1: Some(3.0 / 5f64.sqrt()),
        blowup_subfamily: Some(vec![1, 2]),
        notes: vec![
            "C(p) = {0} for every p".into(),
            "multipliers on {1, 2} along the sequence: (0, 1/sqrt(5), k^2/sqrt(5))".into(),
        ],
    };
    s
}

fn violation(mixed: bool) -> Scenario {
    let first = if mixed {
        ConstraintKind::Equality
    } else {
        ConstraintKind::Inequality
    };
    let constraints = vec![
        AffineConstraint::fixed(first, vec![1.0, 0.0], 0.0, 1),
        AffineConstraint {
            kind: ConstraintKind::Inequality,
            a: vec![vec![0.0], vec![1.0]],
            b: vec![1.0, 0.0],
            c: vec![0.0],
            d0: 0.0,
        },
    ];
    let (name, description) = if mixed {
        (
            "rcrcq-violation-mixed",
            "x1 = 0, x1 + p x2 <= 0; the gradient rank jumps from 1 to 2 off p = 0",
        )
    } else {
        (
            "rcrcq-violation",
            "x1 <= 0, x1 + p x2 <= 0; the gradient rank jumps from 1 to 2 off p = 0",
        )
    };
    let mut s = built(name, description, MovingPolyhedron::new(constraints, vec![0.0], vec![0.0, 0.0]));
    s.sequences.push(PowerSequence {
        name: "p_k = 1/k^2, w_k = (1/k, 1/k)".into(),
        param: vec![term(1.0, 2)],
        point: vec![term(1.0, 1), term(1.0, 1)],
    });
    s.expected = Expectations {
        rcrcq: Some(RankVerdict::Violated),
        liminf_consistent: Some(true),
        ..Default::default()
    };
    s
}

pub fn rcrcq_violation() -> Scenario {
    violation(false)
}

/// The violating family with the first constraint as an equality, where the
/// multiplier bound grows like `1/|p|`.
pub fn rcrcq_violation_mixed() -> Scenario {
    violation(true)
}

fn halfspace() -> Scenario {
    let mut s = built(
        "halfspace",
        "fixed halfspace x1 <= 0 in R^2",
        MovingPolyhedron::new(
            vec![AffineConstraint::fixed(ConstraintKind::Inequality, vec![1.0, 0.0], 0.0, 1)],
            vec![0.0],
            vec![0.0, 0.0],
        ),
    );
    s.expected.rcrcq = Some(RankVerdict::Holds);
    s.expected.liminf_consistent = Some(true);
    s
}

fn moving_halfspace() -> Scenario {
    let mut s = built(
        "moving-halfspace",
        "x <= p on the line; Lipschitz-like with modulus 1",
        MovingPolyhedron::new(
            vec![AffineConstraint {
                kind: ConstraintKind::Inequality,
                a: vec![vec![0.0]],
                b: vec![1.0],
                c: vec![1.0],
                d0: 0.0,
            }],
            vec![0.0],
            vec![0.0],
        ),
    );
    s.expected.rcrcq = Some(RankVerdict::Holds);
    s.expected.liminf_consistent = Some(true);
    s
}

fn moving_equality() -> Scenario {
    let mut s = built(
        "moving-equality",
        "x1 = p in R^2",
        MovingPolyhedron::new(
            vec![AffineConstraint {
                kind: ConstraintKind::Equality,
                a: vec![vec![0.0], vec![0.0]],
                b: vec![1.0, 0.0],
                c: vec![1.0],
                d0: 0.0,
            }],
            vec![0.0],
            vec![0.0, 0.0],
        ),
    );
    s.expected.rcrcq = Some(RankVerdict::Holds);
    s.expected.liminf_consistent = Some(true);
    s
}

fn switched_equalities() -> Scenario {
    let mut s = built(
        "switched-equalities",
        "x1 = 0, p x1 = p; C(p) is empty for every p != 0",
        MovingPolyhedron::new(
            vec![
                AffineConstraint::fixed(ConstraintKind::Equality, vec![1.0, 0.0], 0.0, 1),
                AffineConstraint {
                    kind: ConstraintKind::Equality,
                    a: vec![vec![1.0], vec![0.0]],
                    b: vec![0.0, 0.0],
                    c: vec![1.0],
                    d0: 0.0,
                },
            ],
            vec![0.0],
            vec![0.0, 0.0],
        ),
    );
    s.expected.liminf_consistent = Some(false);
    s
}

/// Names accepted by [`scenario_by_name`], besides `random:SEED`.
pub const SCENARIO_NAMES: [&str; 7] = [
    "paper-example",
    "rcrcq-violation",
    "rcrcq-violation-mixed",
    "halfspace",
    "moving-halfspace",
    "moving-equality",
    "switched-equalities",
];

/// Shape used for `random:SEED` names.
pub const RANDOM_NAME_SHAPE: RandomSpec = RandomSpec {
    ambient_dim: 3,
    param_dim: 2,
    n_eq: 1,
    n_ineq: 3,
    fraction_tight: 0.5,
};

pub fn list_scenarios() -> Vec<Scenario> {
    SCENARIO_NAMES
        .iter()
        .map(|n| scenario_by_name(n).expect("listed name"))
        .collect()
}

/// Look up a built-in scenario, or `random:SEED` for a generated one.
pub fn scenario_by_name(name: &str) -> Result<Scenario> {
    if let Some(seed) = name.strip_prefix("random:") {
        let seed: u64 = seed
            .parse()
            .map_err(|_| Error::UnknownScenario(name.to_string()))?;
        return random_scenario_with(seed, &RANDOM_NAME_SHAPE);
    }
    Ok(match name {
        "paper-example" => paper_example(),
        "rcrcq-violation" => rcrcq_violation(),
        "rcrcq-violation-mixed" => rcrcq_violation_mixed(),
        "halfspace" => halfspace(),
        "moving-halfspace" => moving_halfspace(),
        "moving-equality" => moving_equality(),
        "switched-equalities" => switched_equalities(),
        _ => return Err(Error::UnknownScenario(name.to_string())),
    })
}

pub const MAX_RANDOM_DIM: usize = 6;
pub const MAX_RANDOM_CONSTRAINTS: usize = 10;
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomSpec {
    pub ambient_dim: usize,
    pub param_dim: usize,
    pub n_eq: usize,
    pub n_ineq: usize,
    /// Probability that an inequality is tight at `(p̄, x̄)`.
    pub fraction_tight: f64,
}

fn draw(rng: &mut BallSampler, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect()
}

/// Random scenario with half of the inequalities tight on average.
pub fn random_scenario(seed: u64, d: usize, m: usize, n_eq: usize, n_ineq: usize) -> Result<Scenario> {
    random_scenario_with(
        seed,
        &RandomSpec {
            ambient_dim: d,
            param_dim: m,
            n_eq,
            n_ineq,
            fraction_tight: 0.5,
        },
    )
}

/// Entries of `A`, `b`, `c`, `p̄`, `x̄` are uniform in `[−1, 1]`; each `d0` is
/// then chosen so that equalities are tight at `(p̄, x̄)` and inequalities are
/// tight with probability `fraction_tight`, otherwise slack by a margin drawn
/// from `[0.05, 0.5]`. Draws whose gradient families at `p̄` have a borderline
/// rank decision are discarded.
pub fn random_scenario_with(seed: u64, spec: &RandomSpec) -> Result<Scenario> {
    let n = spec.n_eq + spec.n_ineq;
    let (d, m) = (spec.ambient_dim, spec.param_dim);
    if d == 0 || d > MAX_RANDOM_DIM {
        return Err(Error::GuardExceeded { size: d, guard: MAX_RANDOM_DIM });
    }
    if m > MAX_RANDOM_DIM {
        return Err(Error::GuardExceeded { size: m, guard: MAX_RANDOM_DIM });
    }
    if n == 0 || n > MAX_RANDOM_CONSTRAINTS {
        return Err(Error::GuardExceeded { size: n, guard: MAX_RANDOM_CONSTRAINTS });
    }
    if !(0.0..=1.0).contains(&spec.fraction_tight) {
        return Err(Error::Precondition(format!(
            "fraction_tight must lie in [0, 1], got {}",
            spec.fraction_tight
        )));
    }
    let tol = crate::polyhedron::Tolerances::default();
    let mut rng = BallSampler::new(seed, Stream::Scenario);
    for _ in 0..MAX_REDRAWS {
        let p_bar = draw(&mut rng, m);
        let x_bar = draw(&mut rng, d);
        let mut constraints = Vec::with_capacity(n);
        let mut active = Vec::new();
        for i in 0..n {
            let kind = if i < spec.n_eq {
                ConstraintKind::Equality
            } else {
                ConstraintKind::Inequality
            };
            let a: Vec<Vec<f64>> = (0..d).map(|_| draw(&mut rng, m)).collect();
            let b = draw(&mut rng, d);
            let c = draw(&mut rng, m);
            let mut con = AffineConstraint { kind, a, b, c, d0: 0.0 };
            let g = con.gradient(&p_bar);
            let tight = kind == ConstraintKind::Equality || rng.uniform(0.0, 1.0) < spec.fraction_tight;
            let margin = if tight { 0.0 } else { rng.uniform(0.05, 0.5) };
            con.d0 = dot(&x_bar, &g) - dot(&con.c, &p_bar) + margin;
            if tight {
                active.push(i);
            }
            constraints.push(con);
        }
        let grads: Vec<Vec<f64>> = constraints.iter().map(|c| c.gradient(&p_bar)).collect();
        let all = VectorFamily::from_vectors(grads.clone())?;
        let mut borderline = numerical_rank(&all, tol.rank)?.borderline;
        if !active.is_empty() {
            let act = VectorFamily::from_vectors(active.iter().map(|&i| grads[i].clone()).collect())?;
            borderline |= numerical_rank(&act, tol.rank)?.borderline;
        }
        if borderline {
            continue;
        }
        let problem = MovingPolyhedron::new(constraints, p_bar, x_bar)?;
        return Ok(Scenario {
            name: format!("random:{seed}"),
            description: format!(
                "random d={d} m={m} n_eq={} n_ineq={} fraction_tight={}",
                spec.n_eq, spec.n_ineq, spec.fraction_tight
            ),
            problem,
            sequences: Vec::new(),
            expected: Expectations::default(),
        });
    }
    Err(Error::SolverFailure(format!(
        "no well-conditioned draw in {MAX_REDRAWS} attempts"
    )))
}
