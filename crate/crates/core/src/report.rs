//! Text and CSV renderings of trajectories, matrices and analysis results.

use std::fmt::Write;

use crate::mpg::{LegendEntry, LeveragePoint, PropagationMatrix, RankedNode};
use crate::scenario::{Summary, Trajectory};

/// Rounds to 12 significant digits, then prints the shortest text that
/// reads back as the rounded value. Negative zero prints as `0`.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let y: f64 = format!("{x:.11e}").parse().expect("float text reparses");
    let a = y.abs();
    if (1e-5..1e15).contains(&a) {
        format!("{y}")
    } else {
        format!("{y:e}")
    }
}

/// `t,<columns>` header then one row per recorded step, LF endings.
pub fn emit_trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t");
    for c in traj.columns() {
        out.push(',');
        out.push_str(&c);
    }
    out.push('\n');
    for (t, state) in traj.states.iter().enumerate() {
        out.push_str(&t.to_string());
        for x in state.iter().flatten() {
            out.push(',');
            out.push_str(&format_number(*x));
        }
        out.push('\n');
    }
    out
}

fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(&mut out, header);
    for r in rows {
        line(&mut out, r);
    }
    out
}

pub fn trajectory_table(traj: &Trajectory) -> String {
    let mut header = vec!["t".to_string()];
    header.extend(traj.columns());
    let rows: Vec<Vec<String>> = traj
        .states
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let mut r = vec![t.to_string()];
            r.extend(s.iter().flatten().map(|x| format_number(*x)));
            r
        })
        .collect();
    let mut out = table(&header, &rows);
    if let Some(f) = traj.overflow {
        let _ = writeln!(out, "overflow: '{}' left the representable range at t={}", traj.ids[f.node], f.t);
    }
    out
}

pub fn summary_table(summary: &Summary) -> String {
    let header: Vec<String> = ["node", "peak", "peak_t", "final", "settled", "shape"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = summary
        .series
        .iter()
        .map(|s| {
            vec![
                s.label.clone(),
                format_number(s.peak),
                s.peak_step.to_string(),
                format_number(s.final_value),
                s.settled.to_string(),
                s.monotonicity.to_string(),
            ]
        })
        .collect();
    let mut out = table(&header, &rows);
    match (summary.overflow, summary.settle_step) {
        (Some(f), _) => {
            let _ = writeln!(out, "overflow at t={}", f.t);
        }
        (None, Some(s)) => {
            let _ = writeln!(out, "settled from t={s}");
        }
        (None, None) => out.push_str("not settled within the horizon\n"),
    }
    out
}

/// W with rows as targets and columns as sources.
pub fn matrix_table(w: &PropagationMatrix) -> String {
    let vector = |id: &str| {
        w.legend
            .iter()
            .any(|e| matches!(e, LegendEntry::Node { id: i, component } if i == id && *component > 0))
    };
    let labels: Vec<String> = w
        .legend
        .iter()
        .map(|e| match e {
            LegendEntry::Node { id, .. } if !vector(id) => id.clone(),
            _ => e.to_string(),
        })
        .collect();
    let mut header = vec![String::new()];
    header.extend(labels.iter().cloned());
    let rows: Vec<Vec<String>> = (0..w.dim())
        .map(|r| {
            let mut row = vec![labels[r].clone()];
            row.extend((0..w.dim()).map(|c| format_number(w.get(r, c))));
            row
        })
        .collect();
    table(&header, &rows)
}

pub fn bottleneck_table(ranked: &[RankedNode]) -> String {
    let header = vec!["rank".into(), "node".into(), "inbound |gain|".into()];
    let rows: Vec<Vec<String>> = ranked
        .iter()
        .enumerate()
        .map(|(i, r)| vec![(i + 1).to_string(), r.id.clone(), format_number(r.score)])
        .collect();
    table(&header, &rows)
}

pub fn leverage_table(points: &[LeveragePoint]) -> String {
    let header = vec!["rank".into(), "node".into(), "outbound |gain|".into(), "influence".into()];
    let rows: Vec<Vec<String>> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            vec![
                (i + 1).to_string(),
                p.id.clone(),
                format_number(p.outbound),
                format_number(p.influence),
            ]
        })
        .collect();
    table(&header, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_case_study, run, summarize, Scenario};

    #[test]
    fn number_format() {
        assert_eq!(format_number(0.001512), "0.001512");
        assert_eq!(format_number(0.15 * 0.07 * 0.80 * 0.90), "0.00756");
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(2.5e-9), "2.5e-9");
        assert_eq!(format_number(-1.2e20), "-1.2e20");
        assert_eq!(format_number(123456789012345.0), "123456789012000");
    }

    #[test]
    fn case_study_csv() {
        let (_, scn) = build_case_study();
        let csv = emit_trajectory_csv(&run(&scn).unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,ci,pue,flops_per_watt,tokens_per_s,cost_per_1k_tokens");
        assert_eq!(lines.len(), 12);
        assert_eq!(lines[11], "10,0.2,0.03,0.0021,0.00168,0.001512");
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn zero_and_single_node_csv() {
        let (g, _) = build_case_study();
        let csv = emit_trajectory_csv(&run(&Scenario::new(g, 3).unwrap()).unwrap());
        assert!(csv.lines().skip(1).all(|l| l.split(',').skip(1).all(|v| v == "0")));

        let g = crate::mpg::parse_graph_document(
            r#"{"schema":"mpg-v1","nodes":[{"id":"a","layer":1,"domain":1,"init":2}],"edges":[]}"#,
        )
        .unwrap();
        let csv = emit_trajectory_csv(&run(&Scenario::new(g, 1).unwrap()).unwrap());
        assert_eq!(csv, "t,a\n0,2\n1,2\n");
    }

    #[test]
    fn tables_render() {
        let (_, scn) = build_case_study();
        let traj = run(&scn).unwrap();
        let t = trajectory_table(&traj);
        assert_eq!(t.lines().count(), 12);
        let s = summary_table(&summarize(&traj));
        assert!(s.contains("settled from t=4"));
    }
}
