//! Report structures, the JSON writer and the text renderer.
//!
//! Constraint numbers in reports are 1-based and follow the order of the
//! problem document; the library itself is 0-based and stores equalities
//! first.

use std::fmt::Write as _;
use std::io;

use movepoly_core::polyhedron::Tolerances;
use movepoly_core::regularity::{
    AubinEstimate, GrowthLevel, LiminfReport, MultiplierBound, PairWitness, RRegularity, RankVerdict,
    RegularityReport, SampleCounts, Verdict,
};
use movepoly_core::scenarios::Expectations;
use serde::Serialize;

use crate::args::Format;

pub const SCHEMA: &str = "movepoly-report/1";

/// Writes every `f64` in scientific notation with 17 significant digits.
/// Non-finite values never reach the formatter; the serializer emits `null`.
/// Negative zero is written as zero.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        let value = if value == 0.0 { 0.0 } else { value };
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Compact JSON with full-precision floats, newline-terminated.
pub fn to_json<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// Six significant digits.
pub fn num(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let a = x.abs();
    if (1e-4..1e6).contains(&a) {
        let decimals = (5 - a.log10().floor() as i32).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

pub fn vector(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|&x| num(x)).collect();
    format!("({})", parts.join(", "))
}

pub fn index_set(v: &[usize]) -> String {
    let parts: Vec<String> = v.iter().map(|i| i.to_string()).collect();
    format!("{{{}}}", parts.join(", "))
}

/// Maps stored 0-based indices to document 1-based numbers and back.
pub struct Numbering<'a> {
    order: &'a [usize],
}

impl<'a> Numbering<'a> {
    pub fn new(order: &'a [usize]) -> Self {
        Self { order }
    }

    pub fn external(&self, i: usize) -> usize {
        self.order[i] + 1
    }

    /// Sorted document numbers of a stored index set.
    pub fn set(&self, v: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = v.iter().map(|&i| self.external(i)).collect();
        out.sort_unstable();
        out
    }

    /// A per-constraint vector rearranged into document order.
    pub fn dense(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (i, &x) in v.iter().enumerate() {
            out[self.order[i]] = x;
        }
        out
    }

    pub fn internal(&self, number: usize) -> Option<usize> {
        self.order.iter().position(|&s| s + 1 == number)
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    File(String),
    Scenario(String),
}

/// Everything that determines a run, with overrides already applied.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub input: InputSource,
    pub seed: u64,
    pub samples: usize,
    pub levels: usize,
    pub param_radius: f64,
    pub point_radius: f64,
    pub tolerances: Tolerances,
    pub enumeration_guard: usize,
    pub format: Format,
    pub output: Option<String>,
    pub p: Option<Vec<f64>>,
    pub w: Option<Vec<f64>>,
    pub policy: Option<String>,
    pub k_range: Option<[usize; 2]>,
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    schema: &'static str,
    config: &'a RunConfig,
    report: &'a T,
}

pub trait TextReport {
    fn render(&self, out: &mut String);
}

pub fn render_json<T: Serialize>(config: &RunConfig, report: &T) -> Result<String, serde_json::Error> {
    to_json(&Envelope {
        schema: SCHEMA,
        config,
        report,
    })
}

pub fn render_text<T: TextReport>(config: &RunConfig, report: &T) -> String {
    let mut out = String::new();
    let source = match &config.input {
        InputSource::File(f) => format!("file {f}"),
        InputSource::Scenario(s) => format!("scenario {s}"),
    };
    let _ = writeln!(out, "movepoly {} ({source}, seed {})", config.command, config.seed);
    report.render(&mut out);
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub equalities: Vec<usize>,
    pub inequalities: Vec<usize>,
    /// Coefficients for `equalities` then `inequalities`, unnormalised.
    pub coefficients: Vec<f64>,
    /// The same divided by the distance.
    pub normalized: Vec<f64>,
    pub rank: usize,
    pub reconstruction_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectReport {
    pub status: String,
    pub point: Vec<f64>,
    pub distance: f64,
    pub active: Vec<usize>,
    /// Solver multipliers by constraint number, `w − P = Σ λ̂_i g_i(p)`.
    pub multipliers: Vec<f64>,
    pub certificate: Option<CertificateReport>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

fn render_certificate(out: &mut String, c: &CertificateReport) {
    let _ = writeln!(
        out,
        "certificate: equalities {} inequalities {} rank {}",
        index_set(&c.equalities),
        index_set(&c.inequalities),
        c.rank
    );
    let _ = writeln!(out, "  coefficients {}", vector(&c.coefficients));
    let _ = writeln!(out, "  normalized   {}", vector(&c.normalized));
    let _ = writeln!(out, "  reconstruction error {}", num(c.reconstruction_error));
}

impl TextReport for ProjectReport {
    fn render(&self, out: &mut String) {
        let _ = writeln!(out, "status: {}", self.status);
        if self.status == "infeasible_set" {
            return;
        }
        let _ = writeln!(out, "point: {}", vector(&self.point));
        let _ = writeln!(out, "distance: {}", num(self.distance));
        let _ = writeln!(out, "active: {}", index_set(&self.active));
        let _ = writeln!(out, "multipliers: {}", vector(&self.multipliers));
        match &self.certificate {
            Some(c) => render_certificate(out, c),
            None => {
                let _ = writeln!(out, "certificate: empty (w lies in C(p))");
            }
        }
        let _ = writeln!(out, "kkt residual: {}", num(self.kkt_residual));
        let _ = writeln!(out, "iterations: {}", self.iterations);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MinL1Report {
    pub multipliers: Vec<f64>,
    pub subfamily: Vec<usize>,
    pub l1: f64,
    pub candidates: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MultipliersReport {
    pub status: String,
    pub distance: f64,
    /// Equalities kept by the equality reduction at `p`.
    pub kept_equalities: Vec<usize>,
    pub solver_normalized: Vec<f64>,
    pub reduced: Option<CertificateReport>,
    pub min_l1: Option<MinL1Report>,
}

impl TextReport for MultipliersReport {
    fn render(&self, out: &mut String) {
        let _ = writeln!(out, "status: {}", self.status);
        if self.status == "infeasible_set" {
            return;
        }
        let _ = writeln!(out, "distance: {}", num(self.distance));
        let _ = writeln!(out, "kept equalities: {}", index_set(&self.kept_equalities));
        let _ = writeln!(out, "solver multipliers (normalized): {}", vector(&self.solver_normalized));
        match &self.reduced {
            Some(c) => render_certificate(out, c),
            None => {
                let _ = writeln!(out, "certificate: empty (w lies in C(p))");
            }
        }
        if let Some(m) = &self.min_l1 {
            let _ = writeln!(
                out,
                "min-l1: {} on {} (l1 {}, {} candidates)",
                vector(&m.multipliers),
                index_set(&m.subfamily),
                num(m.l1),
                m.candidates
            );
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RcrcqRowReport {
    pub subset: Vec<usize>,
    pub base_rank: usize,
    pub min_rank: usize,
    pub max_rank: usize,
    pub borderline: bool,
    pub verdict: RankVerdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct RcrcqWitnessReport {
    pub subset: Vec<usize>,
    pub sample: usize,
    pub param: Vec<f64>,
    pub rank: usize,
    pub base_rank: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RcrcqOut {
    pub base_active: Vec<usize>,
    pub rows: Vec<RcrcqRowReport>,
    pub overall: RankVerdict,
    pub witnesses: Vec<RcrcqWitnessReport>,
    pub samples: usize,
    pub caveat: String,
}

fn verdict_word(v: RankVerdict) -> &'static str {
    match v {
        RankVerdict::Holds => "holds",
        RankVerdict::Violated => "violated",
        RankVerdict::Borderline => "borderline",
    }
}

impl TextReport for RcrcqOut {
    fn render(&self, out: &mut String) {
        let _ = writeln!(out, "base active set: {}", index_set(&self.base_active));
        let _ = writeln!(out, "{:<24} {:>5} {:>5} {:>5}  verdict", "J", "base", "min", "max");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<24} {:>5} {:>5} {:>5}  {}{}",
                index_set(&r.subset),
                r.base_rank,
                r.min_rank,
                r.max_rank,
                verdict_word(r.verdict),
                if r.borderline { " (borderline)" } else { "" }
            );
        }
        for w in &self.witnesses {
            let _ = writeln!(
                out,
                "witness: J = {} at p = {} (sample {}) has rank {} instead of {}",
                index_set(&w.subset),
                vector(&w.param),
                w.sample,
                w.rank,
                w.base_rank
            );
        }
        let _ = writeln!(out, "RCRCQ: {} over {} samples", verdict_word(self.overall), self.samples);
        let _ = writeln!(out, "note: {}", self.caveat);
    }
}

impl TextReport for LiminfReport {
    fn render(&self, out: &mut String) {
        let _ = writeln!(out, "max dist(x̄, C(p)): {}", num(self.max_distance));
        if let Some(p) = &self.worst_param {
            let _ = writeln!(out, "  attained at p = {}", vector(p));
        }
        let _ = writeln!(out, "empty C(p) samples: {}", self.infeasible_params.len());
        if let Some(p) = self.infeasible_params.first() {
            let _ = writeln!(out, "  first at p = {}", vector(p));
        }
        if self.solver_failures > 0 {
            let _ = writeln!(out, "solver failures: {}", self.solver_failures);
        }
        let _ = writeln!(
            out,
            "inner semicontinuity: {} over {} samples",
            if self.consistent { "consistent" } else { "not supported" },
            self.samples
        );
        let _ = writeln!(out, "note: {}", self.caveat);
    }
}

/// The Aubin estimate without the per-sample list.
#[derive(Debug, Clone, Serialize)]
pub struct AubinSummary {
    pub empirical: f64,
    pub theoretical: f64,
    pub alpha_used: f64,
    pub pair_m_hat: f64,
    pub witness: Option<AubinWitness>,
    pub counts: SampleCounts,
    pub skipped_outside_ball: usize,
    pub skipped_close_params: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AubinWitness {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub x1: Vec<f64>,
    pub distance: f64,
    pub param_gap: f64,
}

impl From<&AubinEstimate> for AubinSummary {
    fn from(a: &AubinEstimate) -> Self {
        Self {
            empirical: a.empirical,
            theoretical: a.theoretical,
            alpha_used: a.alpha_used,
            pair_m_hat: a.pair_m_hat,
            witness: a.witness.as_ref().map(|w| AubinWitness {
                p1: w.p1.clone(),
                p2: w.p2.clone(),
                x1: w.x1.clone(),
                distance: w.distance,
                param_gap: w.param_gap,
            }),
            counts: a.counts,
            skipped_outside_ball: a.skipped_outside_ball,
            skipped_close_params: a.skipped_close_params,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateOut {
    pub verdict: Verdict,
    pub verdict_text: String,
    pub regularity: RegularityReport,
    pub liminf: LiminfReport,
    pub rcrcq: RcrcqOut,
    pub multiplier_bound: MultiplierBound,
    pub r_regularity: RRegularity,
    pub aubin: Option<AubinSummary>,
    pub warnings: Vec<String>,
    pub caveat: String,
}

fn witness_line(out: &mut String, label: &str, w: &Option<PairWitness>) {
    if let Some(w) = w {
        let _ = writeln!(
            out,
            "  {label} witness: p = {}, w = {} (sample {})",
            vector(&w.param),
            vector(&w.point),
            w.sample
        );
    }
}

fn growth_table(out: &mut String, levels: &[GrowthLevel]) {
    let _ = writeln!(out, "  {:>5} {:>12} {:>12} {:>14} {:>8}", "level", "param r", "point r", "M_hat", "pairs");
    for g in levels {
        let _ = writeln!(
            out,
            "  {:>5} {:>12} {:>12} {:>14} {:>8}",
            g.level,
            num(g.param_radius),
            num(g.point_radius),
            num(g.m_hat),
            g.retained
        );
    }
}

impl TextReport for EstimateOut {
    fn render(&self, out: &mut String) {
        let r = &self.regularity;
        let _ = writeln!(
            out,
            "liminf: {} (max dist {}, {} empty)",
            if self.liminf.consistent { "consistent" } else { "not supported" },
            num(self.liminf.max_distance),
            self.liminf.infeasible_params.len()
        );
        let _ = writeln!(out, "RCRCQ: {}", verdict_word(self.rcrcq.overall));
        let _ = writeln!(out, "M_hat: {}", num(r.m_hat));
        witness_line(out, "M", &self.multiplier_bound.witness);
        growth_table(out, &self.multiplier_bound.growth);
        let _ = writeln!(
            out,
            "alpha_hat: {} (2 M_hat = {}, {})",
            num(r.alpha_hat),
            num(2.0 * r.m_hat),
            if r.two_m_bound_ok { "within" } else { "EXCEEDED" }
        );
        witness_line(out, "alpha", &self.r_regularity.witness);
        let _ = writeln!(
            out,
            "Aubin modulus: empirical {} vs bound {} ({})",
            num(r.aubin_empirical),
            num(r.aubin_theoretical),
            if r.aubin_within_bound { "within" } else { "EXCEEDED" }
        );
        let c = &r.sample_counts;
        let _ = writeln!(
            out,
            "samples: {} drawn, {} retained, {} with w in C(p), {} with C(p) empty, {} failures",
            c.drawn, c.retained, c.skipped_feasible, c.skipped_infeasible_set, c.failures
        );
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        let _ = writeln!(out, "verdict: {}", self.verdict_text);
        let _ = writeln!(out, "note: {}", self.caveat);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupRowReport {
    pub k: usize,
    pub param: Vec<f64>,
    pub point: Vec<f64>,
    pub distance: f64,
    pub multipliers: Vec<f64>,
    pub l1: f64,
    pub l2: f64,
    pub growth_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupOut {
    pub policy: String,
    pub sequence: String,
    pub rows: Vec<BlowupRowReport>,
    pub fit_from_k: usize,
    pub growth_exponent_l1: Option<f64>,
    pub growth_exponent_l2: Option<f64>,
    /// Per constraint number.
    pub column_exponents: Vec<Option<f64>>,
}

impl TextReport for BlowupOut {
    fn render(&self, out: &mut String) {
        let _ = writeln!(out, "sequence: {}", self.sequence);
        let _ = writeln!(out, "policy: {}", self.policy);
        let n = self.rows.first().map_or(0, |r| r.multipliers.len());
        let mut head = format!("{:>4} {:>12}", "k", "distance");
        for i in 1..=n {
            let _ = write!(head, " {:>12}", format!("lambda_{i}"));
        }
        let _ = write!(head, " {:>12} {:>12} {:>8}", "l1", "l2", "ratio");
        let _ = writeln!(out, "{head}");
        for r in &self.rows {
            let mut line = format!("{:>4} {:>12}", r.k, num(r.distance));
            for &m in &r.multipliers {
                let _ = write!(line, " {:>12}", num(m));
            }
            let ratio = r.growth_ratio.map_or("-".to_string(), num);
            let _ = write!(line, " {:>12} {:>12} {:>8}", num(r.l1), num(r.l2), ratio);
            let _ = writeln!(out, "{line}");
        }
        let exp = |e: Option<f64>| e.map_or("n/a".to_string(), num);
        let _ = writeln!(
            out,
            "growth exponent (k >= {}): l1 {}, l2 {}",
            self.fit_from_k,
            exp(self.growth_exponent_l1),
            exp(self.growth_exponent_l2)
        );
        let cols: Vec<String> = self
            .column_exponents
            .iter()
            .enumerate()
            .map(|(i, &e)| format!("lambda_{} {}", i + 1, exp(e)))
            .collect();
        let _ = writeln!(out, "  by component: {}", cols.join(", "));
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioEntry {
    pub name: String,
    pub description: String,
    pub ambient_dim: usize,
    pub param_dim: usize,
    pub equalities: usize,
    pub inequalities: usize,
    pub sequences: Vec<String>,
    pub expected: Expectations,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioList {
    pub scenarios: Vec<ScenarioEntry>,
}

impl TextReport for ScenarioList {
    fn render(&self, out: &mut String) {
        for s in &self.scenarios {
            let _ = writeln!(
                out,
                "{:<24} d={} m={} eq={} ineq={}  {}",
                s.name, s.ambient_dim, s.param_dim, s.equalities, s.inequalities, s.description
            );
        }
        let _ = writeln!(out, "random:SEED              generated instance (d=3 m=2 eq=1 ineq=3)");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(num(5f64.sqrt()), "2.23607");
        assert_eq!(num(3.0 / 5f64.sqrt()), "1.34164");
        assert_eq!(num(400.0 / 5f64.sqrt()), "178.885");
        assert_eq!(num(1.0), "1");
        assert_eq!(num(-0.5), "-0.5");
        assert_eq!(num(1.5e-9), "1.50000e-9");
        assert_eq!(num(0.0), "0");
        assert_eq!(num(f64::INFINITY), "inf");
    }

    #[test]
    fn json_keeps_full_precision() {
        let s = to_json(&vec![5f64.sqrt(), 1.0, f64::NAN]).unwrap();
        assert_eq!(s, "[2.2360679774997898e0,1.0000000000000000e0,null]\n");
        let back: Vec<Option<f64>> = serde_json::from_str(&s).unwrap();
        assert_eq!(back[0], Some(5f64.sqrt()));
    }

    #[test]
    fn numbering_round_trip() {
        let order = [2, 0, 1];
        let n = Numbering::new(&order);
        assert_eq!(n.set(&[0, 1]), vec![1, 3]);
        assert_eq!(n.dense(&[7.0, 8.0, 9.0]), vec![8.0, 9.0, 7.0]);
        assert_eq!(n.internal(3), Some(0));
        assert_eq!(n.internal(4), None);
    }
}
