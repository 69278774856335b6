use frictionsim::netgen::{add_triadic_closure, generate, grow_preferential, undirected_clustering};
use frictionsim::sampling::{network_seed, RandomSource};

/// Discrete power-law exponent by the continuous-approximation MLE
/// `1 + n / sum(ln(k / (k_min - 0.5)))` over in-degrees `k >= k_min`.
fn power_law_exponent(degrees: &[usize], k_min: usize) -> f64 {
    let tail: Vec<f64> = degrees.iter().filter(|&&k| k >= k_min).map(|&k| k as f64).collect();
    let denom: f64 = tail.iter().map(|k| (k / (k_min as f64 - 0.5)).ln()).sum();
    1.0 + tail.len() as f64 / denom
}

#[test]
fn in_degree_tail_is_scale_free() {
    let mut pooled = Vec::new();
    for i in 0..20 {
        let mut rng = RandomSource::new(network_seed(1, i));
        let net = grow_preferential(1000, 3, &mut rng).unwrap();
        pooled.extend((0..net.n()).map(|u| net.followers(u).len()));
    }
    let gamma = power_law_exponent(&pooled, 6);
    // Directed attachment with in-degree + 1 weights has exponent 2 + 1/m in
    // the large-n limit; finite networks land nearby.
    assert!((2.0..3.0).contains(&gamma), "exponent {gamma}");

    // Heavy tail: the largest hub is far above the mean in-degree of ~3.
    let max = *pooled.iter().max().unwrap();
    assert!(max > 40, "max in-degree {max}");
}

#[test]
fn closure_keeps_tail_heavy_and_hits_target() {
    for i in 0..5 {
        let net = generate(1000, 3, 0.29, network_seed(9, i)).unwrap();
        let cc = undirected_clustering(&net);
        assert!((0.29..=0.31).contains(&cc), "cc {cc}");
        let max = (0..net.n()).map(|u| net.followers(u).len()).max().unwrap();
        assert!(max > 40);
    }
}

#[test]
fn closure_never_lowers_clustering() {
    let mut rng = RandomSource::new(5);
    let net = grow_preferential(300, 3, &mut rng).unwrap();
    let mut prev = undirected_clustering(&net);
    let mut cur = net;
    for target in [0.05, 0.1, 0.2, 0.3] {
        let before = cur.edge_count();
        cur = add_triadic_closure(cur, target, &mut rng).unwrap();
        let cc = undirected_clustering(&cur);
        assert!(cc >= prev);
        assert!(cur.edge_count() >= before);
        prev = cc;
    }
}
