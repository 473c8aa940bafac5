use mpglab::topology::{
    balanced_bisection_bandwidth, global_min_cut, interconnect_bisection_bandwidth, network_diameter,
    parse_topology_document, topology_to_document, TopologyError,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{brute_min_cut, floyd_warshall, random_graph, topo};

#[test]
fn min_cut_matches_brute_force_on_50_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let n = rng.random_range(2..=10);
        let extra = rng.random_range(0..=2 * n);
        let (n, links) = random_graph(&mut rng, n, extra);
        let t = topo(n, &links);
        let ibb = interconnect_bisection_bandwidth(&t).unwrap().value;
        assert_eq!(ibb, brute_min_cut(n, &links, false));
        let bbb = balanced_bisection_bandwidth(&t).unwrap().value;
        assert_eq!(bbb, brute_min_cut(n, &links, true));
        assert!(bbb >= ibb);
    }
}

#[test]
fn two_cliques_joined_by_a_fat_link() {
    let mut links = Vec::new();
    for base in [0, 4] {
        for a in 0..4 {
            for b in a + 1..4 {
                links.push((base + a, base + b, 1.0));
            }
        }
    }
    links.push((0, 4, 5.0));
    let t = topo(8, &links);
    assert_eq!(interconnect_bisection_bandwidth(&t).unwrap().value, 3.0);
    assert_eq!(balanced_bisection_bandwidth(&t).unwrap().value, 5.0);
    assert_eq!(global_min_cut(&t).unwrap().weight, 3.0);
}

#[test]
fn disconnected_and_oversized() {
    let t = topo(3, &[(0, 1, 1.0)]);
    assert!(matches!(network_diameter(&t), Err(TopologyError::Disconnected(..))));
    let (n, links) = random_graph(&mut ChaCha8Rng::seed_from_u64(1), 21, 5);
    assert!(matches!(balanced_bisection_bandwidth(&topo(n, &links)), Err(TopologyError::Scale(21))));
}

proptest! {
    #[test]
    fn diameter_matches_floyd_warshall(seed in any::<u64>(), n in 2usize..=50, density in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, links) = random_graph(&mut rng, n, density * n);
        prop_assert_eq!(network_diameter(&topo(n, &links)).unwrap(), floyd_warshall(n, &links));
    }

    #[test]
    fn balanced_never_below_global(seed in any::<u64>(), n in 2usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, links) = random_graph(&mut rng, n, n);
        let t = topo(n, &links);
        prop_assert!(balanced_bisection_bandwidth(&t).unwrap().value >= interconnect_bisection_bandwidth(&t).unwrap().value);
    }

    #[test]
    fn document_round_trip(seed in any::<u64>(), n in 2usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, links) = random_graph(&mut rng, n, n);
        let t = topo(n, &links);
        let back = parse_topology_document(&topology_to_document(&t)).unwrap();
        prop_assert_eq!(back, t);
    }
}
