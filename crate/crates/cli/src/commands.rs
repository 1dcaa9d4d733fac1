use std::fs;

use movepoly_core::multipliers::{
    min_l1_multiplier, normalize_multiplier, reduce_equalities_instance, reduced_multiplier, MultiplierCertificate,
    ReducedMultiplier,
};
use movepoly_core::polyhedron::{parse_problem, serialize_problem, MovingPolyhedron};
use movepoly_core::projection::{project, ProjectionConfig, ProjectionResult, ProjectionStatus};
use movepoly_core::regularity::{
    analyze, check_inner_semicontinuity, check_rcrcq, detect_multiplier_blowup, MultiplierPolicy, RcrcqReport,
    SamplingPlan,
};
use movepoly_core::scenarios::{list_scenarios, scenario_by_name, Scenario};

use crate::args::{BlowupArgs, CommonArgs, Format, PointArgs, PolicyArg, ScenarioArgs};
use crate::report::*;
use crate::CliError;

/// A rendered report and the exit code it carries.
pub struct Outcome {
    pub body: String,
    pub exit: i32,
}

pub struct Loaded {
    pub problem: MovingPolyhedron,
    pub scenario: Option<Scenario>,
    pub config: RunConfig,
    pub plan: SamplingPlan,
}

/// Load the input and apply command-line overrides, re-validating the result.
pub fn load(command: &str, c: &CommonArgs) -> Result<Loaded, CliError> {
    let (problem, scenario, input) = match (&c.input, &c.scenario) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
            (parse_problem(&text)?, None, InputSource::File(path.display().to_string()))
        }
        (None, Some(name)) => {
            let s = scenario_by_name(name)?;
            (s.problem.clone(), Some(s), InputSource::Scenario(name.clone()))
        }
        _ => return Err(CliError::Input("give exactly one of --input and --scenario".into())),
    };
    let mut file = problem.to_file();
    file.sampling.seed = c.seed;
    if let Some(n) = c.samples {
        file.sampling.samples = n;
    }
    if let Some(l) = c.levels {
        file.sampling.levels = l;
    }
    if let Some(r) = c.param_radius {
        file.radii.param = r;
    }
    if let Some(r) = c.point_radius {
        file.radii.point = r;
    }
    let t = &mut file.tolerances;
    for (slot, v) in [
        (&mut t.rank, c.rank_tol),
        (&mut t.active, c.active_tol),
        (&mut t.feasibility, c.feasibility_tol),
        (&mut t.kkt, c.kkt_tol),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    let problem = MovingPolyhedron::try_from(file)?;
    let mut plan = SamplingPlan::from_problem(&problem);
    if let Some(g) = c.enumeration_guard {
        plan.enumeration_guard = g;
    }
    let config = RunConfig {
        command: command.to_string(),
        input,
        seed: plan.seed,
        samples: plan.samples,
        levels: plan.levels,
        param_radius: plan.param_radius,
        point_radius: plan.point_radius,
        tolerances: *problem.tolerances(),
        enumeration_guard: plan.enumeration_guard,
        format: c.format,
        output: c.out.as_ref().map(|p| p.display().to_string()),
        p: None,
        w: None,
        policy: None,
        k_range: None,
    };
    Ok(Loaded {
        problem,
        scenario,
        config,
        plan,
    })
}

fn render<T: serde::Serialize + TextReport>(config: &RunConfig, report: &T) -> Result<String, CliError> {
    Ok(match config.format {
        Format::Json => render_json(config, report)?,
        Format::Text => render_text(config, report),
    })
}

fn status_name(s: ProjectionStatus) -> String {
    match s {
        ProjectionStatus::Converged => "converged",
        ProjectionStatus::InfeasibleSet => "infeasible_set",
        ProjectionStatus::IterationLimit => "iteration_limit",
    }
    .to_string()
}

fn status_exit(s: ProjectionStatus) -> i32 {
    match s {
        ProjectionStatus::Converged => 0,
        ProjectionStatus::InfeasibleSet => 2,
        ProjectionStatus::IterationLimit => 3,
    }
}

fn certificate_report(cert: &MultiplierCertificate, distance: f64, numbering: &Numbering) -> CertificateReport {
    CertificateReport {
        equalities: cert.i1.iter().map(|&i| numbering.external(i)).collect(),
        inequalities: cert.i2.iter().map(|&i| numbering.external(i)).collect(),
        normalized: cert.coefficients.iter().map(|c| c / distance).collect(),
        coefficients: cert.coefficients.clone(),
        rank: cert.independence.rank,
        reconstruction_error: cert.reconstruction_error,
    }
}

struct PointRun {
    loaded: Loaded,
    p: Vec<f64>,
    w: Vec<f64>,
    proj: ProjectionResult,
}

fn point_run(command: &str, a: &PointArgs) -> Result<PointRun, CliError> {
    let mut loaded = load(command, &a.common)?;
    let mp = &loaded.problem;
    let (p, w) = (a.p.0.clone(), a.w.0.clone());
    if p.len() != mp.param_dim() {
        return Err(CliError::Input(format!(
            "--p: expected {} values, found {}",
            mp.param_dim(),
            p.len()
        )));
    }
    if w.len() != mp.ambient_dim() {
        return Err(CliError::Input(format!(
            "--w: expected {} values, found {}",
            mp.ambient_dim(),
            w.len()
        )));
    }
    let inst = mp.instantiate(&p)?;
    let cfg = ProjectionConfig {
        enumeration_guard: loaded.plan.enumeration_guard,
        ..ProjectionConfig::from(mp.tolerances())
    };
    let proj = project(&inst, &w, &cfg)?;
    loaded.config.p = Some(p.clone());
    loaded.config.w = Some(w.clone());
    Ok(PointRun { loaded, p, w, proj })
}

pub fn cmd_project(a: &PointArgs) -> Result<Outcome, CliError> {
    let run = point_run("project", a)?;
    let mp = &run.loaded.problem;
    let numbering = Numbering::new(mp.source_order());
    let proj = &run.proj;
    let certificate = if proj.converged() {
        let inst = mp.instantiate(&run.p)?;
        match reduced_multiplier(&inst, &run.w, proj, mp.tolerances().rank)? {
            ReducedMultiplier::Certificate(c) => Some(certificate_report(&c, proj.distance, &numbering)),
            ReducedMultiplier::Trivial => None,
        }
    } else {
        None
    };
    let report = ProjectReport {
        status: status_name(proj.status),
        point: proj.point.clone(),
        distance: proj.distance,
        active: numbering.set(&proj.active),
        multipliers: numbering.dense(&proj.multipliers),
        certificate,
        kkt_residual: proj.kkt_residual,
        iterations: proj.iterations,
    };
    Ok(Outcome {
        body: render(&run.loaded.config, &report)?,
        exit: status_exit(proj.status),
    })
}

pub fn cmd_multipliers(a: &PointArgs) -> Result<Outcome, CliError> {
    let run = point_run("multipliers", a)?;
    let mp = &run.loaded.problem;
    let numbering = Numbering::new(mp.source_order());
    let proj = &run.proj;
    let tol = mp.tolerances().rank;
    let mut report = MultipliersReport {
        status: status_name(proj.status),
        distance: proj.distance,
        kept_equalities: Vec::new(),
        solver_normalized: Vec::new(),
        reduced: None,
        min_l1: None,
    };
    if proj.converged() {
        let inst = mp.instantiate(&run.p)?;
        report.kept_equalities = numbering.set(&reduce_equalities_instance(&inst, tol)?);
        if proj.distance > 0.0 {
            report.solver_normalized = numbering.dense(&normalize_multiplier(&proj.multipliers, proj.distance)?);
            if let ReducedMultiplier::Certificate(c) = reduced_multiplier(&inst, &run.w, proj, tol)? {
                report.reduced = Some(certificate_report(&c, proj.distance, &numbering));
            }
            let m = min_l1_multiplier(&inst, &run.w, proj, run.loaded.plan.enumeration_guard, tol)?;
            report.min_l1 = Some(MinL1Report {
                multipliers: numbering.dense(&m.multipliers),
                subfamily: numbering.set(&m.subfamily),
                l1: m.l1,
                candidates: m.candidates,
            });
        } else {
            report.solver_normalized = vec![0.0; mp.len()];
        }
    }
    Ok(Outcome {
        body: render(&run.loaded.config, &report)?,
        exit: status_exit(proj.status),
    })
}

fn rcrcq_out(r: &RcrcqReport, numbering: &Numbering) -> RcrcqOut {
    RcrcqOut {
        base_active: numbering.set(&r.base_active),
        rows: r
            .rows
            .iter()
            .map(|row| RcrcqRowReport {
                subset: numbering.set(&row.subset),
                base_rank: row.base_rank,
                min_rank: row.min_rank,
                max_rank: row.max_rank,
                borderline: row.borderline,
                verdict: row.verdict,
            })
            .collect(),
        overall: r.overall,
        witnesses: r
            .witnesses
            .iter()
            .map(|w| RcrcqWitnessReport {
                subset: numbering.set(&w.subset),
                sample: w.sample,
                param: w.param.clone(),
                rank: w.rank,
                base_rank: w.base_rank,
            })
            .collect(),
        samples: r.samples,
        caveat: r.caveat.clone(),
    }
}

pub fn cmd_check_rcrcq(c: &CommonArgs) -> Result<Outcome, CliError> {
    let l = load("check-rcrcq", c)?;
    let r = check_rcrcq(&l.problem, &l.plan)?;
    let out = rcrcq_out(&r, &Numbering::new(l.problem.source_order()));
    Ok(Outcome {
        body: render(&l.config, &out)?,
        exit: 0,
    })
}

pub fn cmd_check_liminf(c: &CommonArgs) -> Result<Outcome, CliError> {
    let l = load("check-liminf", c)?;
    let r = check_inner_semicontinuity(&l.problem, &l.plan)?;
    Ok(Outcome {
        body: render(&l.config, &r)?,
        exit: 0,
    })
}

pub fn cmd_estimate(c: &CommonArgs) -> Result<Outcome, CliError> {
    let l = load("estimate", c)?;
    let r = analyze(&l.problem, &l.plan)?;
    let numbering = Numbering::new(l.problem.source_order());
    let out = EstimateOut {
        verdict: r.verdict,
        verdict_text: r.verdict_text.clone(),
        regularity: r.regularity.clone(),
        liminf: r.liminf.clone(),
        rcrcq: rcrcq_out(&r.rcrcq, &numbering),
        multiplier_bound: r.multiplier_bound.clone(),
        r_regularity: r.r_regularity.clone(),
        aubin: r.aubin.as_ref().map(AubinSummary::from),
        warnings: r.warnings.clone(),
        caveat: r.caveat.clone(),
    };
    Ok(Outcome {
        body: render(&l.config, &out)?,
        exit: 0,
    })
}

pub fn cmd_blowup(a: &BlowupArgs) -> Result<Outcome, CliError> {
    let mut l = load("blowup", &a.common)?;
    let Some(seq) = l.scenario.as_ref().and_then(|s| s.sequences.first().cloned()) else {
        return Err(CliError::Input(
            "blowup needs a scenario with a built-in sequence (e.g. --scenario paper-example)".into(),
        ));
    };
    if a.kmin == 0 || a.kmax < a.kmin {
        return Err(CliError::Input(format!("--kmin/--kmax: need 1 <= kmin <= kmax, got {}..{}", a.kmin, a.kmax)));
    }
    let mp = &l.problem;
    let numbering = Numbering::new(mp.source_order());
    let policy = match &a.policy {
        PolicyArg::Reduced => MultiplierPolicy::Reduced,
        PolicyArg::MinL1 => MultiplierPolicy::MinL1,
        PolicyArg::Fixed(nums) => MultiplierPolicy::FixedSubfamily(
            nums.iter()
                .map(|&k| {
                    numbering.internal(k).ok_or_else(|| {
                        CliError::Input(format!("--policy: constraint {k} does not exist (there are {})", mp.len()))
                    })
                })
                .collect::<Result<_, _>>()?,
        ),
    };
    let table = detect_multiplier_blowup(mp, &seq.points(a.kmin, a.kmax), &policy)?;
    l.config.policy = Some(a.policy.to_string());
    l.config.k_range = Some([a.kmin, a.kmax]);
    let out = BlowupOut {
        policy: a.policy.to_string(),
        sequence: seq.name.clone(),
        rows: table
            .rows
            .iter()
            .map(|r| BlowupRowReport {
                k: r.k,
                param: r.param.clone(),
                point: r.point.clone(),
                distance: r.distance,
                multipliers: numbering.dense(&r.multipliers),
                l1: r.l1,
                l2: r.l2,
                growth_ratio: r.growth_ratio,
            })
            .collect(),
        fit_from_k: table.fit_from_k,
        growth_exponent_l1: table.growth_exponent_l1,
        growth_exponent_l2: table.growth_exponent_l2,
        column_exponents: {
            let mut cols = vec![None; mp.len()];
            for (i, e) in table.column_exponents.iter().enumerate() {
                cols[mp.source_order()[i]] = *e;
            }
            cols
        },
    };
    Ok(Outcome {
        body: render(&l.config, &out)?,
        exit: 0,
    })
}

pub fn cmd_scenarios(a: &ScenarioArgs) -> Result<Outcome, CliError> {
    if let Some(name) = &a.export {
        let s = scenario_by_name(name)?;
        let mut body = serialize_problem(&s.problem)?;
        body.push('\n');
        return Ok(Outcome { body, exit: 0 });
    }
    let list = ScenarioList {
        scenarios: list_scenarios()
            .into_iter()
            .map(|s| ScenarioEntry {
                ambient_dim: s.problem.ambient_dim(),
                param_dim: s.problem.param_dim(),
                equalities: s.problem.n_eq(),
                inequalities: s.problem.len() - s.problem.n_eq(),
                sequences: s.sequences.iter().map(|q| q.name.clone()).collect(),
                name: s.name,
                description: s.description,
                expected: s.expected,
            })
            .collect(),
    };
    let body = match a.format {
        Format::Json => to_json(&serde_json::json!({ "schema": SCHEMA, "report": list }))?,
        Format::Text => {
            let mut out = String::new();
            list.render(&mut out);
            out
        }
    };
    Ok(Outcome { body, exit: 0 })
}
