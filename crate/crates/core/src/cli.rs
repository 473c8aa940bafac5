//! Command-line front end. `run` returns the process exit status:
//! 0 success, 1 validation failure, 2 I/O or parse failure.

use std::ffi::OsString;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::catalog::{load_catalog, Bindings, Catalog, CatalogError, RangeVerdict};
use crate::mpg::{
    by_influence, find_bottlenecks, find_leverage_points, linearize, parse_graph_document,
    stability_classification, synthesize_composite_metric, DocumentError, Graph, MpgError, State,
};
use crate::report::{
    bottleneck_table, emit_trajectory_csv, format_number, leverage_table, matrix_table,
    summary_table, trajectory_table,
};
use crate::scenario::{build_case_study, load_scenario, run as run_scenario, summarize, CASE_STUDY_NODES};
use crate::topology::{
    balanced_bisection_bandwidth, interconnect_bisection_bandwidth, network_diameter,
    oversubscription_ratio, parse_topology_document, TopologyError,
};

pub const SEED_ENV: &str = "MPGLAB_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mpglab", version, about = "Metric propagation graphs and an AI-infrastructure metric catalog")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a graph document
    Validate { graph: PathBuf },
    /// Evaluate a catalog metric
    Eval {
        metric: String,
        /// Input binding, e.g. E_total=1.56MWh
        #[arg(long = "bind", value_name = "NAME=VALUE")]
        bind: Vec<String>,
        /// Catalog document to use instead of the built-in one
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Compute a topology metric
    Topo {
        doc: PathBuf,
        #[arg(long, value_enum)]
        metric: TopoMetric,
    },
    /// Run a scenario document
    Propagate {
        scenario: PathBuf,
        /// Write the trajectory as CSV ("-" for stdout)
        #[arg(long, value_name = "OUT")]
        csv: Option<PathBuf>,
    },
    /// Structural and stability analyses of a graph
    Analyze {
        graph: PathBuf,
        #[command(flatten)]
        what: AnalyzeWhat,
    },
    /// Composite sensitivity of one node to another
    Compose {
        graph: PathBuf,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
    },
    /// Run the built-in 1024-GPU case study
    CaseStudy {
        #[arg(long, value_name = "OUT")]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TopoMetric {
    Diameter,
    Ibb,
    Bbb,
    Osr,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct AnalyzeWhat {
    #[arg(long)]
    pub bottlenecks: bool,
    #[arg(long)]
    pub leverage: bool,
    #[arg(long)]
    pub stability: bool,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    msg: String,
}

fn invalid(e: impl Display) -> Failure {
    Failure {
        code: EXIT_INVALID,
        msg: e.to_string(),
    }
}

fn input(e: impl Display) -> Failure {
    Failure {
        code: EXIT_INPUT,
        msg: e.to_string(),
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))
}

fn load_graph(path: &Path) -> Result<Graph, Failure> {
    parse_graph_document(&read(path)?).map_err(|e: DocumentError| {
        let f = if e.is_validation() { invalid } else { input };
        f(format!("{}: {e}", path.display()))
    })
}

fn io(e: std::io::Error) -> Failure {
    input(e)
}

fn write_csv(path: &Path, csv: &str, out: &mut dyn Write) -> Outcome {
    if path == Path::new("-") {
        out.write_all(csv.as_bytes()).map_err(io)
    } else {
        std::fs::write(path, csv).map_err(|e| input(format!("cannot write {}: {e}", path.display())))
    }
}

fn env_seed(seed: Option<&str>) -> Result<Option<u64>, Failure> {
    seed.map(|s| {
        s.trim()
            .parse::<u64>()
            .map_err(|_| input(format!("{SEED_ENV}='{s}' is not an unsigned 64-bit integer")))
    })
    .transpose()
}

fn validate(path: &Path, out: &mut dyn Write) -> Outcome {
    let g = load_graph(path)?;
    let r = g.report();
    writeln!(out, "ok: {} nodes, {} edges", r.nodes, r.edges).map_err(io)?;
    for nodes in &r.intra_layer_cycles {
        writeln!(out, "whitelisted cycle: {}", nodes.join(", ")).map_err(io)?;
    }
    if r.max_delay > 0 {
        writeln!(out, "max delay: {} step(s)", r.max_delay).map_err(io)?;
    }
    Ok(())
}

fn eval(metric: &str, bind: &[String], catalog: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let owned;
    let cat: &Catalog = match catalog {
        None => Catalog::builtin(),
        Some(p) => {
            owned = load_catalog(&read(p)?).map_err(|e| match e {
                CatalogError::Parse(_) | CatalogError::Schema(_) => input(e),
                _ => invalid(e),
            })?;
            &owned
        }
    };
    let def = cat
        .get(metric)
        .ok_or_else(|| input(format!("unknown metric '{metric}'")))?;
    let bindings = Bindings::parse_pairs(bind.iter().map(String::as_str)).map_err(input)?;
    let v = cat.evaluate(metric, &bindings).map_err(invalid)?;
    let unit = if v.unit.is_dimensionless() && v.unit.scale == 1.0 {
        String::new()
    } else {
        format!(" {}", v.unit)
    };
    writeln!(out, "{} = {}{unit}", def.label(), format_number(v.value)).map_err(io)?;
    match cat.check_range(metric, &v).map_err(invalid)? {
        RangeVerdict::Ok => Ok(()),
        RangeVerdict::SoftWarning(w) => writeln!(err, "warning: {w}").map_err(io),
        RangeVerdict::HardViolation(msg) => Err(invalid(msg)),
    }
}

fn topo(path: &Path, metric: TopoMetric, out: &mut dyn Write) -> Outcome {
    let t = parse_topology_document(&read(path)?).map_err(input)?;
    let fail = |e: TopologyError| invalid(e);
    let line = match metric {
        TopoMetric::Diameter => format!("diameter = {} hops", network_diameter(&t).map_err(fail)?),
        TopoMetric::Ibb => {
            let q = interconnect_bisection_bandwidth(&t).map_err(fail)?;
            format!("IBB = {} {}", format_number(q.value), q.unit)
        }
        TopoMetric::Bbb => {
            let q = balanced_bisection_bandwidth(&t).map_err(fail)?;
            format!("BBB = {} {}", format_number(q.value), q.unit)
        }
        TopoMetric::Osr => {
            let q = oversubscription_ratio(&t).map_err(fail)?;
            format!("OSR = {}", format_number(q.value))
        }
    };
    writeln!(out, "{line}").map_err(io)
}

fn propagate(path: &Path, csv: Option<&Path>, seed: Option<u64>, out: &mut dyn Write) -> Outcome {
    let mut scn = load_scenario(path).map_err(|e| {
        let f = if e.is_validation() { invalid } else { input };
        f(format!("{}: {e}", path.display()))
    })?;
    if let Some(s) = seed {
        scn.seed = s;
    }
    let traj = run_scenario(&scn).map_err(invalid)?;
    match csv {
        Some(p) if p == Path::new("-") => return write_csv(p, &emit_trajectory_csv(&traj), out),
        Some(p) => write_csv(p, &emit_trajectory_csv(&traj), out)?,
        None => write!(out, "{}", trajectory_table(&traj)).map_err(io)?,
    }
    write!(out, "{}", summary_table(&summarize(&traj))).map_err(io)
}

fn analyze(path: &Path, what: &AnalyzeWhat, out: &mut dyn Write) -> Outcome {
    let g = load_graph(path)?;
    let text = if what.bottlenecks {
        bottleneck_table(&find_bottlenecks(&g))
    } else if what.leverage {
        let points = find_leverage_points(&g).map_err(invalid)?;
        format!(
            "by outbound gain:\n{}\nby downstream influence:\n{}",
            leverage_table(&points),
            leverage_table(&by_influence(&points))
        )
    } else {
        let r = stability_classification(&g, &State::new(&g)).map_err(invalid)?;
        format!("rho = {}\nclassification: {}\n", format_number(r.rho), r.stability)
    };
    write!(out, "{text}").map_err(io)
}

fn compose(path: &Path, from: &str, to: &str, out: &mut dyn Write) -> Outcome {
    let g = load_graph(path)?;
    let c = synthesize_composite_metric(&g, from, to).map_err(|e| match e {
        MpgError::UnknownNode(_) => input(e),
        _ => invalid(e),
    })?;
    writeln!(out, "{from} -> {to}: coefficient {} over {} path(s)", format_number(c.coefficient), c.paths)
        .map_err(io)?;
    if c.paths == 1 {
        let amp = if c.coefficient.abs() > 1.0 { "amplifying" } else { "not amplifying" };
        writeln!(out, "gain {} ({amp})", format_number(c.coefficient)).map_err(io)?;
    }
    writeln!(out, "metric {}: {} [{}]", c.metric.id, c.metric.name, c.metric.unit).map_err(io)
}

fn case_study(csv: Option<&Path>, out: &mut dyn Write) -> Outcome {
    let (g, scn) = build_case_study();
    let state = State::new(&g);
    let w = linearize(&g, &state).map_err(invalid)?;
    let stab = stability_classification(&g, &state).map_err(invalid)?;
    let (src, dst) = (CASE_STUDY_NODES[0], CASE_STUDY_NODES[4]);
    let comp = synthesize_composite_metric(&g, src, dst).map_err(invalid)?;
    let traj = run_scenario(&scn).map_err(invalid)?;
    let mut text = String::new();
    text.push_str("Case study: 1024-GPU cluster, values are relative deviations from nominal\n\n");
    text.push_str("Propagation matrix W (row = target, column = source):\n");
    text.push_str(&matrix_table(&w));
    text.push_str(&format!("\nrho(W) = {} ({})\n", format_number(stab.rho), stab.stability));
    text.push_str(&format!(
        "composite {src} -> {dst} = {} ({})\n\n",
        format_number(comp.coefficient),
        if comp.coefficient > 1.0 { "amplifying" } else { "not amplifying" }
    ));
    text.push_str("Trajectory, +0.2 level shock on ci at t=0:\n");
    text.push_str(&trajectory_table(&traj));
    text.push('\n');
    text.push_str(&summary_table(&summarize(&traj)));
    match csv {
        Some(p) if p == Path::new("-") => write_csv(p, &emit_trajectory_csv(&traj), out),
        Some(p) => {
            write_csv(p, &emit_trajectory_csv(&traj), out)?;
            out.write_all(text.as_bytes()).map_err(io)
        }
        None => out.write_all(text.as_bytes()).map_err(io),
    }
}

/// Runs one parsed command. `seed` is the value of the seed override
/// variable, if set.
pub fn run_command(cli: &Cli, seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Validate { graph } => validate(graph, out),
        Command::Eval { metric, bind, catalog } => eval(metric, bind, catalog.as_deref(), out, err),
        Command::Topo { doc, metric } => topo(doc, *metric, out),
        Command::Propagate { scenario, csv } => {
            env_seed(seed).and_then(|s| propagate(scenario, csv.as_deref(), s, out))
        }
        Command::Analyze { graph, what } => analyze(graph, what, out),
        Command::Compose { graph, from, to } => compose(graph, from, to, out),
        Command::CaseStudy { csv } => case_study(csv.as_deref(), out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.msg);
            f.code
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with<I, T>(args: I, seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run_command(&cli, seed, out, err),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
            } else {
                let _ = out.write_all(text.as_bytes());
            }
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let mut argv = vec!["mpglab"];
        argv.extend_from_slice(args);
        let code = main_with(argv, None, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn eval_pue() {
        let (code, out, _) = call(&["eval", "pue", "--bind", "E_total=1.56MWh", "--bind", "E_IT=1.0MWh"]);
        assert_eq!(code, 0);
        assert_eq!(out, "PUE = 1.56\n");
    }

    #[test]
    fn eval_soft_warning_and_bad_binding() {
        let (code, _, err) = call(&["eval", "pue", "--bind", "E_total=997kWh", "--bind", "E_IT=1MWh"]);
        assert_eq!(code, 0);
        assert!(err.contains("warning"));
        let (code, _, _) = call(&["eval", "pue", "--bind", "E_total=abc"]);
        assert_eq!(code, 2);
        let (code, _, _) = call(&["eval", "pue", "--bind", "E_total=1L", "--bind", "E_IT=1MWh"]);
        assert_eq!(code, 1);
    }

    #[test]
    fn case_study_text() {
        let (code, out, _) = call(&["case-study"]);
        assert_eq!(code, 0);
        assert!(out.contains("rho(W) = 0 (stable)"));
        assert!(out.contains("= 0.00756"));
        assert!(out.contains("0.15"));
    }

    #[test]
    fn analyze_needs_exactly_one_flag() {
        let (code, _, _) = call(&["analyze", "g.json"]);
        assert_eq!(code, 2);
        let (code, _, _) = call(&["analyze", "g.json", "--leverage", "--stability"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn missing_file_is_input_error() {
        let (code, _, err) = call(&["validate", "/nonexistent/graph.json"]);
        assert_eq!(code, 2);
        assert!(err.starts_with("error: cannot read"));
    }

    #[test]
    fn bad_seed_variable() {
        let cli = Cli::try_parse_from(["mpglab", "propagate", "s.json"]).unwrap();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run_command(&cli, Some("seven"), &mut out, &mut err), 2);
    }
}
