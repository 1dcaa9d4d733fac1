use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "movepoly", version, about = "Projections, multipliers and sampled regularity checks for moving polyhedra")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Project a point onto C(p) and report multipliers.
    Project(PointArgs),
    /// Reduced and minimal-l1 multipliers for w at p.
    Multipliers(PointArgs),
    /// Sampled relaxed constant rank check at the base point.
    CheckRcrcq(CommonArgs),
    /// Sampled inner semicontinuity check at the base point.
    CheckLiminf(CommonArgs),
    /// Full pipeline: liminf, RCRCQ, M, alpha and the Aubin bound.
    Estimate(CommonArgs),
    /// Normalised multipliers along a scenario's built-in sequence.
    Blowup(BlowupArgs),
    /// List built-in scenarios or export one as a problem file.
    Scenarios(ScenarioArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Problem file (JSON).
    #[arg(long, value_name = "FILE", conflicts_with = "scenario", required_unless_present = "scenario")]
    pub input: Option<PathBuf>,
    /// Built-in scenario name, or random:SEED.
    #[arg(long, value_name = "NAME")]
    pub scenario: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Samples per estimator; defaults to the problem's setting.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Levels of the radius-halving diagnostic; defaults to the problem's setting.
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long, value_name = "R")]
    pub param_radius: Option<f64>,
    #[arg(long, value_name = "R")]
    pub point_radius: Option<f64>,
    #[arg(long, value_name = "TOL")]
    pub rank_tol: Option<f64>,
    #[arg(long, value_name = "TOL")]
    pub active_tol: Option<f64>,
    #[arg(long, value_name = "TOL")]
    pub feasibility_tol: Option<f64>,
    #[arg(long, value_name = "TOL")]
    pub kkt_tol: Option<f64>,
    /// Largest active set enumerated for minimal-l1 multipliers.
    #[arg(long, value_name = "N")]
    pub enumeration_guard: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PointArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Parameter p, comma-separated.
    #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
    pub p: Vector,
    /// Point w, comma-separated.
    #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
    pub w: Vector,
}

#[derive(Debug, Clone, Args)]
pub struct BlowupArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// fixed:I,J,... (1-based constraint numbers), reduced or min-l1.
    #[arg(long, value_parser = parse_policy, default_value = "reduced")]
    pub policy: PolicyArg,
    #[arg(long, default_value_t = 1)]
    pub kmin: usize,
    #[arg(long, default_value_t = 20)]
    pub kmax: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Print this scenario as a problem file.
    #[arg(long, value_name = "NAME")]
    pub export: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

/// Multiplier policy as given on the command line (1-based numbers).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "policy", content = "subfamily", rename_all = "kebab-case")]
pub enum PolicyArg {
    Fixed(Vec<usize>),
    Reduced,
    MinL1,
}

impl std::fmt::Display for PolicyArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicyArg::Fixed(s) => {
                let list: Vec<String> = s.iter().map(|i| i.to_string()).collect();
                write!(f, "fixed:{}", list.join(","))
            }
            PolicyArg::Reduced => f.write_str("reduced"),
            PolicyArg::MinL1 => f.write_str("min-l1"),
        }
    }
}

/// A comma-separated vector from the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(pub Vec<f64>);

pub fn parse_vector(s: &str) -> Result<Vector, String> {
    if s.trim().is_empty() {
        return Err("empty vector".into());
    }
    s.split(',')
        .enumerate()
        .map(|(i, t)| {
            let t = t.trim();
            match t.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(format!("[{i}]: '{t}' is not a finite decimal")),
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Vector)
}

pub fn parse_policy(s: &str) -> Result<PolicyArg, String> {
    match s {
        "reduced" => Ok(PolicyArg::Reduced),
        "min-l1" => Ok(PolicyArg::MinL1),
        _ => {
            let list = s
                .strip_prefix("fixed:")
                .ok_or_else(|| format!("'{s}' is not one of fixed:I,J,..., reduced, min-l1"))?;
            let idx = list
                .split(',')
                .map(|t| match t.trim().parse::<usize>() {
                    Ok(i) if i >= 1 => Ok(i),
                    _ => Err(format!("'{t}' is not a constraint number (they start at 1)")),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(PolicyArg::Fixed(idx))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors() {
        assert_eq!(parse_vector("1, -2.5,3e-1").unwrap().0, vec![1.0, -2.5, 0.3]);
        assert!(parse_vector("1,x").unwrap_err().contains("[1]"));
        assert!(parse_vector("").is_err());
        assert!(parse_vector("1,inf").is_err());
    }

    #[test]
    fn policies() {
        assert_eq!(parse_policy("fixed:2,3").unwrap(), PolicyArg::Fixed(vec![2, 3]));
        assert_eq!(parse_policy("min-l1").unwrap(), PolicyArg::MinL1);
        assert!(parse_policy("fixed:0").is_err());
        assert!(parse_policy("best").is_err());
        assert_eq!(parse_policy("fixed:2,3").unwrap().to_string(), "fixed:2,3");
    }

    #[test]
    fn negative_vectors_parse() {
        let cli = Cli::try_parse_from([
            "movepoly", "project", "--scenario", "paper-example", "--p", "-1,1", "--w", "1,-2",
        ])
        .unwrap();
        let Command::Project(a) = cli.command else { panic!() };
        assert_eq!(a.p.0, vec![-1.0, 1.0]);
        assert_eq!(a.w.0, vec![1.0, -2.0]);
    }
}
