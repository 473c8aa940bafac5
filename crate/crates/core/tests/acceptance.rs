//! One PASS/FAIL line per acceptance criterion; exits non-zero on any FAIL.

mod common;

use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use mpglab::catalog::finance::{discounted_sum, levelized_cost, CashflowSpec};
use mpglab::catalog::{Bindings, Catalog, RangeVerdict};
use mpglab::mpg::{
    compose_path, graph_to_document, linearize, stability_classification, synthesize_composite_metric,
    EdgeSpec, GraphSpec, Noise, NodeSpec, OperatorSpec, PathSpec, Stability, State,
};
use mpglab::scenario::{build_case_study, run, summarize, Scenario, ShockSchedule, CASE_STUDY_NODES};
use mpglab::topology::{balanced_bisection_bandwidth, interconnect_bisection_bandwidth, network_diameter};
use mpglab::units::Quantity;
use rand::Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Check) -> Check {
    let start = Instant::now();
    let detail = f()?;
    let took = start.elapsed();
    ensure(took < limit, format!("took {took:?}, limit {limit:?}"))?;
    Ok(format!("{detail} in {took:.2?}"))
}

fn composite() -> Check {
    timed(Duration::from_secs(1), || {
        let (g, _) = build_case_study();
        let c = synthesize_composite_metric(&g, "ci", "cost_per_1k_tokens").map_err(|e| e.to_string())?;
        let op = compose_path(&g, &PathSpec::nodes(&CASE_STUDY_NODES)).map_err(|e| e.to_string())?;
        let err = (c.coefficient - 0.00756).abs().max((op.apply_scalar(1.0) - 0.00756).abs());
        ensure(err <= 1e-12, format!("coefficient {} (error {err:e})", c.coefficient))?;
        Ok(format!("coefficient {} (|error| {err:.1e})", c.coefficient))
    })
}

fn matrix() -> Check {
    let (g, _) = build_case_study();
    let w = linearize(&g, &State::new(&g)).map_err(|e| e.to_string())?;
    let mut want = vec![vec![0.0; 5]; 5];
    for (i, a) in [0.15, 0.07, 0.80, 0.90].into_iter().enumerate() {
        want[i + 1][i] = a;
    }
    ensure(w.dim() == 5 && w.rows() == want, format!("got {:?}", w.rows()))?;
    Ok("5x5 matrix exact".into())
}

fn pue_band() -> Check {
    let (_, scn) = build_case_study();
    let scn = scn.with_shocks(ShockSchedule::impulse("ci", vec![0.10])).map_err(|e| e.to_string())?;
    let pue = run(&scn).map_err(|e| e.to_string())?.series("pue", 0).ok_or("no pue series")?;
    for &v in &pue[1..] {
        ensure((v - 0.015).abs() <= 1e-12, format!("PUE response {v}"))?;
        ensure((0.01..=0.02).contains(&v), format!("PUE response {v} outside 1-2%"))?;
    }
    Ok(format!("PUE response {} from t=1", pue[1]))
}

fn stability() -> Check {
    let (g, scn) = build_case_study();
    let r = stability_classification(&g, &State::new(&g)).map_err(|e| e.to_string())?;
    ensure(r.rho == 0.0 && r.stability == Stability::Stable, format!("case study rho {}", r.rho))?;
    let s = summarize(&run(&scn).map_err(|e| e.to_string())?);
    let settle = s.settle_step.ok_or("case study never settles")?;
    ensure(s.all_settled() && settle <= 5, format!("settles at t={settle}"))?;
    let c = two_cycle(1.2, 1.0);
    let r2 = stability_classification(&c, &State::new(&c)).map_err(|e| e.to_string())?;
    let err = (r2.rho - 1.2f64.sqrt()).abs();
    ensure(r2.stability == Stability::Divergent && err <= 1e-9, format!("2-cycle rho {} ({})", r2.rho, r2.stability))?;
    Ok(format!("rho=0 stable, settled at t={settle}; 2-cycle rho={} divergent (|error| {err:.1e})", r2.rho))
}

fn boundedness() -> Check {
    timed(Duration::from_secs(30), || {
        let mut worst = 0.0f64;
        for seed in 0..100 {
            let g = random_cyclic_linear(seed, 0.9);
            let traj = run(&Scenario::new(g, 200).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            ensure(traj.overflow.is_none() && traj.len() == 201, format!("seed {seed} overflowed"))?;
            let m0 = traj.norm(0);
            let peak = (0..traj.len()).map(|t| traj.norm(t)).fold(0.0, f64::max);
            worst = worst.max(peak / m0);
            ensure(peak <= 100.0 * m0, format!("seed {seed}: max |M(t)|/|M(0)| = {}", peak / m0))?;
        }
        let mut grown = 0;
        for seed in 0..100 {
            let g = random_cyclic_linear(1000 + seed, 1.1);
            let traj = run(&Scenario::new(g, 200).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            if traj.overflow.is_some() || traj.norm(200) > 10.0 * traj.norm(0) {
                grown += 1;
            }
        }
        ensure(grown >= 95, format!("only {grown}/100 divergent runs exceeded 10x"))?;
        Ok(format!("rho=0.9 worst growth {worst:.2}x; rho=1.1 grew >10x in {grown}/100"))
    })
}

fn catalog() -> Check {
    let cat = Catalog::builtin();
    let eval = |id: &str, b: &Bindings| cat.evaluate(id, b).map(|v| v.value).map_err(|e| e.to_string());
    let pue = eval("pue", &Bindings::new().with("E_total", "1.56MWh").with("E_IT", "1.0MWh"))?;
    ensure(pue == 1.56, format!("PUE {pue}"))?;
    let low = cat
        .evaluate("pue", &Bindings::new().with("E_total", "0.997MWh").with("E_IT", "1MWh"))
        .map_err(|e| e.to_string())?;
    let verdict = cat.check_range("pue", &low).map_err(|e| e.to_string())?;
    ensure(matches!(verdict, RangeVerdict::SoftWarning(_)), format!("PUE 0.997 verdict {verdict:?}"))?;
    let mut r = rng(6);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let total = r.random_range(1e-3..1e9);
        let it = r.random_range(1e-3..1e9);
        let b = Bindings::new().with("E_total", &format!("{total}kWh")).with("E_IT", &format!("{it}kWh"));
        worst = worst.max((eval("pue", &b)? * eval("dcie", &b)? - 1.0).abs());
    }
    ensure(worst <= 1e-12, format!("DCiE*PUE off by {worst:e}"))?;
    for _ in 0..1000 {
        let (erf, p) = (r.random_range(0.0..=1.0), r.random_range(1.0..3.0));
        let mut b = Bindings::new();
        b.set("ERF", Quantity::dimensionless(erf));
        b.set("PUE", Quantity::dimensionless(p));
        let ere = eval("ere", &b)?;
        ensure(ere <= p, format!("ERE {ere} > PUE {p} at ERF {erf}"))?;
    }
    Ok(format!("PUE=1.56, 0.997 soft warning, max |DCiE*PUE-1| {worst:.1e}, ERE<=PUE"))
}

fn finance() -> Check {
    let usd = |v: f64| Quantity::parse(&format!("{v}USD")).unwrap();
    let mut worst = 0.0f64;
    for ri in 1..=20 {
        let rate = ri as f64 / 100.0;
        for t in 1..=50u32 {
            let got = discounted_sum(&CashflowSpec::constant(usd(250.0), 1, t, rate)).map_err(|e| e.to_string())?.value;
            let want = 250.0 * (1.0 - (1.0 + rate).powi(-(t as i32))) / rate;
            worst = worst.max((got - want).abs() / want);
        }
    }
    ensure(worst <= 1e-9, format!("annuity relative error {worst:e}"))?;
    let mut r = rng(7);
    for _ in 0..200 {
        let costs = CashflowSpec::constant(usd(r.random_range(1.0..1e6)), 0, 10, 0.08).with(0, usd(5e5));
        let outputs = CashflowSpec::constant(Quantity::parse("1MWh").unwrap(), 1, 10, 0.08).scaled(r.random_range(1.0..1e4));
        let base = levelized_cost(&costs, &outputs).map_err(|e| e.to_string())?.value;
        // power-of-two factors keep the rescaling itself exact in binary floating point
        let k = 2f64.powi(r.random_range(-30..30));
        let a = levelized_cost(&costs.scaled(k), &outputs).map_err(|e| e.to_string())?.value;
        let b = levelized_cost(&costs.scaled(k), &outputs.scaled(k)).map_err(|e| e.to_string())?.value;
        ensure(a == k * base && b == base, format!("homogeneity broken at k={k}"))?;
    }
    Ok(format!("annuity max relative error {worst:.1e}; levelized homogeneity exact"))
}

fn topology() -> Check {
    let mut r = rng(8);
    for i in 0..50 {
        let n = r.random_range(2..=10);
        let extra = r.random_range(0..=2 * n);
        let (n, links) = random_graph(&mut r, n, extra);
        let t = topo(n, &links);
        let ibb = interconnect_bisection_bandwidth(&t).map_err(|e| e.to_string())?.value;
        let brute = brute_min_cut(n, &links, false);
        ensure(ibb == brute, format!("graph {i}: IBB {ibb} vs brute force {brute}"))?;
        let bbb = balanced_bisection_bandwidth(&t).map_err(|e| e.to_string())?.value;
        ensure(bbb >= ibb, format!("graph {i}: balanced {bbb} < global {ibb}"))?;
    }
    for i in 0..50 {
        let n = r.random_range(2..=50);
        let extra = r.random_range(0..=2 * n);
        let (n, links) = random_graph(&mut r, n, extra);
        let d = network_diameter(&topo(n, &links)).map_err(|e| e.to_string())?;
        ensure(d == floyd_warshall(n, &links), format!("graph {i}: diameter {d}"))?;
    }
    Ok("50 min-cut and 50 diameter instances agree".into())
}

fn jacobian() -> Check {
    let mut worst = 0.0f64;
    for seed in 0..200 {
        let g = random_dag(seed, true);
        let state = State::new(&g);
        let w = linearize(&g, &state).map_err(|e| e.to_string())?;
        worst = worst.max(max_rel_err(&w.node_block(), &fd_jacobian(&g, &state)));
    }
    ensure(worst <= 1e-8, format!("max relative error {worst:e}"))?;
    Ok(format!("200 mixed graphs, max relative error {worst:.1e}"))
}

fn determinism() -> Check {
    let cell = |l| mpglab::taxonomy::validate_cell(l, 1).unwrap();
    let stochastic = |alpha| OperatorSpec::Stochastic {
        base: Box::new(OperatorSpec::linear(alpha)),
        noise: Noise::Normal { sigma: 0.2 },
        samples: 64,
        seed: 0,
    };
    let spec = GraphSpec {
        nodes: vec![
            NodeSpec::scalar("a", cell(1), 1.0),
            NodeSpec::scalar("b", cell(2), 0.0),
            NodeSpec::scalar("c", cell(3), 0.0),
        ],
        edges: vec![EdgeSpec::new("a", "b", stochastic(0.5)), EdgeSpec::new("b", "c", stochastic(0.8))],
        allow_intra_layer_cycles: vec![],
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::write(dir.path().join("g.json"), graph_to_document(&spec)).map_err(|e| e.to_string())?;
    let scn = r#"{"schema":"scn-v1","graph":"g.json","horizon":25,"shocks":[{"t":3,"node":"a","delta":0.5}]}"#;
    let scn_path = dir.path().join("s.json");
    std::fs::write(&scn_path, scn).map_err(|e| e.to_string())?;
    let propagate = |seed: &str, out: &str| -> Result<Vec<u8>, String> {
        let csv = dir.path().join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_mpglab"))
            .arg("propagate")
            .arg(&scn_path)
            .arg("--csv")
            .arg(&csv)
            .env("MPGLAB_SEED", seed)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), String::from_utf8_lossy(&status.stderr).to_string())?;
        std::fs::read(&csv).map_err(|e| e.to_string())
    };
    let (a, b) = (propagate("42", "a.csv")?, propagate("42", "b.csv")?);
    ensure(a == b, "identical seeds gave different CSV")?;
    let c = propagate("43", "c.csv")?;
    ensure(a != c, "changing the seed did not change the stochastic run")?;
    Ok(format!("{} byte CSV identical across runs", a.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("case-study composite coefficient", composite),
        ("case-study propagation matrix", matrix),
        ("CI to PUE response band", pue_band),
        ("stability classification", stability),
        ("boundedness dichotomy", boundedness),
        ("catalog exactness", catalog),
        ("financial oracles", finance),
        ("topology oracles", topology),
        ("jacobian agreement", jacobian),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
