#![allow(dead_code)]

use mpglab::mpg::{linearize, spectral_radius, EdgeSpec, Graph, GraphSpec, NodeSpec, OperatorSpec, State};
use mpglab::taxonomy::{validate_cell, LayerId};
use mpglab::topology::{ClusterTopology, Link};
use mpglab::units::Unit;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn id(i: usize) -> String {
    format!("m{i}")
}

/// Nodes spread over layers in index order; edges only go to later nodes.
pub fn random_dag(seed: u64, mixed: bool) -> Graph {
    let mut r = rng(seed);
    let n = r.random_range(3..=8);
    let init: Vec<f64> = (0..n).map(|_| r.random_range(0.5..2.0)).collect();
    let nodes = (0..n)
        .map(|i| {
            let cell = validate_cell(1 + (i * 6 / n) as i64, 1 + (i % 3) as i64).unwrap();
            NodeSpec::scalar(&id(i), cell, init[i])
        })
        .collect();
    let mut edges = Vec::new();
    for b in 1..n {
        for a in 0..b {
            if !r.random_bool(0.5) && a + 1 != b {
                continue;
            }
            let op = match if mixed { r.random_range(0..3) } else { 0 } {
                0 => OperatorSpec::linear(r.random_range(-1.0..1.0)),
                1 => OperatorSpec::Multiplicative {
                    beta: r.random_range(-0.5..0.5),
                },
                // the source sits well inside the sloped region
                _ => OperatorSpec::Threshold {
                    tau: init[a] - 0.4,
                    slope: r.random_range(0.1..2.0),
                    offset: r.random_range(-0.2..0.2),
                },
            };
            edges.push(EdgeSpec::new(&id(a), &id(b), op));
        }
    }
    Graph::new(GraphSpec {
        nodes,
        edges,
        allow_intra_layer_cycles: Vec::new(),
    })
    .unwrap()
}

fn cyclic_spec(r: &mut ChaCha8Rng) -> GraphSpec {
    let n = r.random_range(3..=10);
    let cell = validate_cell(4, 1).unwrap();
    let nodes = (0..n)
        .map(|i| NodeSpec::scalar(&id(i), cell, r.random_range(-1.0..1.0)))
        .collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && r.random_bool(0.35) {
                edges.push(EdgeSpec::new(&id(a), &id(b), OperatorSpec::linear(r.random_range(-1.0..1.0))));
            }
        }
    }
    GraphSpec {
        nodes,
        edges,
        allow_intra_layer_cycles: vec![LayerId::new(4).unwrap()],
    }
}

/// Random single-layer linear graph with cycles, rescaled so that ρ(W)
/// equals `rho`.
pub fn random_cyclic_linear(seed: u64, rho: f64) -> Graph {
    let mut r = rng(seed);
    loop {
        let mut spec = cyclic_spec(&mut r);
        let g = Graph::new(spec.clone()).unwrap();
        let current = spectral_radius(&linearize(&g, &State::new(&g)).unwrap()).rho;
        if current < 1e-3 {
            continue;
        }
        for e in &mut spec.edges {
            if let OperatorSpec::Linear { alpha } = &mut e.op {
                *alpha *= rho / current;
            }
        }
        return Graph::new(spec).unwrap();
    }
}

/// x ⇄ y inside layer 4 with gains a and b.
pub fn two_cycle(a: f64, b: f64) -> Graph {
    let cell = validate_cell(4, 1).unwrap();
    Graph::new(GraphSpec {
        nodes: vec![NodeSpec::scalar("x", cell, 1.0), NodeSpec::scalar("y", cell, 1.0)],
        edges: vec![
            EdgeSpec::new("x", "y", OperatorSpec::linear(a)),
            EdgeSpec::new("y", "x", OperatorSpec::linear(b)),
        ],
        allow_intra_layer_cycles: vec![LayerId::new(4).unwrap()],
    })
    .unwrap()
}

/// Central differences of one update step, column by column.
pub fn fd_jacobian(g: &Graph, state: &State) -> Vec<Vec<f64>> {
    let cols: Vec<(usize, usize)> = g
        .nodes()
        .iter()
        .enumerate()
        .flat_map(|(i, n)| (0..n.dim()).map(move |c| (i, c)))
        .collect();
    let n = cols.len();
    let mut jac = vec![vec![0.0; n]; n];
    for (j, &(i, c)) in cols.iter().enumerate() {
        let x = state.value(i)[c];
        let h = 1e-3 * x.abs().max(1.0);
        let mut hi = state.clone();
        hi.set_component(i, c, x + h);
        let mut lo = state.clone();
        lo.set_component(i, c, x - h);
        let (a, b) = (g.advance(&hi).unwrap().flat(), g.advance(&lo).unwrap().flat());
        for r in 0..n {
            jac[r][j] = (a[r] - b[r]) / (2.0 * h);
        }
    }
    jac
}

/// Largest relative disagreement between two matrices; entries where both
/// are below 1e-12 in magnitude count as agreeing.
pub fn max_rel_err(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| {
            let scale = x.abs().max(y.abs());
            if scale < 1e-12 {
                0.0
            } else {
                (x - y).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

fn name(i: usize) -> String {
    format!("n{i:02}")
}

/// Random connected graph: a random tree plus extra links, integer bandwidths.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, extra: usize) -> (usize, Vec<(usize, usize, f64)>) {
    let mut links = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        links.push((u, v, rng.random_range(1..=9) as f64));
    }
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            links.push((a, b, rng.random_range(1..=9) as f64));
        }
    }
    (n, links)
}

pub fn topo(n: usize, links: &[(usize, usize, f64)]) -> ClusterTopology {
    ClusterTopology::new(
        (0..n).map(name).collect(),
        links.iter().map(|&(a, b, bw)| Link { a: name(a), b: name(b), bw }).collect(),
        Unit::parse("GB/s").unwrap(),
    )
    .unwrap()
}

pub fn brute_min_cut(n: usize, links: &[(usize, usize, f64)], balanced: bool) -> f64 {
    let mut best = f64::INFINITY;
    // node 0 always on side A
    for mask in 1u32..(1 << (n - 1)) {
        let side = |v: usize| v > 0 && mask & (1 << (v - 1)) != 0;
        let size = (1..n).filter(|&v| side(v)).count();
        if balanced && size != n / 2 && size != n - n / 2 {
            continue;
        }
        let w: f64 = links.iter().filter(|&&(a, b, _)| side(a) != side(b)).map(|l| l.2).sum();
        best = best.min(w);
    }
    best
}

pub fn floyd_warshall(n: usize, links: &[(usize, usize, f64)]) -> usize {
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(a, b, _) in links {
        d[a][b] = 1;
        d[b][a] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d.iter().flatten().copied().max().unwrap()
}
