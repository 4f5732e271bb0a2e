use statrs::distribution::{ChiSquared, ContinuousCDF};

use teg::graph::{generate_sbm, Graph, SbmConfig};

const SEEDS: u64 = 20;

/// (within-class, between-class) edge counts.
fn counts(g: &Graph) -> (usize, usize) {
    let within = g
        .edges()
        .iter()
        .filter(|&&(u, v)| g.label(u) == g.label(v))
        .count();
    (within, g.num_edges() - within)
}

/// (within-class, between-class) node pairs.
fn pairs(cfg: &SbmConfig) -> (f64, f64) {
    let (c, m) = (cfg.num_classes as f64, cfg.nodes_per_class as f64);
    let n = c * m;
    let within = c * m * (m - 1.0) / 2.0;
    (within, n * (n - 1.0) / 2.0 - within)
}

#[test]
fn edge_counts_match_probabilities() {
    let base = SbmConfig {
        num_classes: 6,
        nodes_per_class: 40,
        p_in: 0.15,
        p_out: 0.01,
        ..SbmConfig::default()
    };
    let (n_in, n_out) = pairs(&base);
    let mut stat = 0.0;
    for seed in 0..SEEDS {
        let g = generate_sbm(&SbmConfig {
            seed,
            ..base.clone()
        })
        .unwrap();
        let (o_in, o_out) = counts(&g);
        for (obs, pairs, p) in [(o_in, n_in, base.p_in), (o_out, n_out, base.p_out)] {
            let mean = pairs * p;
            stat += (obs as f64 - mean).powi(2) / (pairs * p * (1.0 - p));
        }
    }
    let crit = ChiSquared::new(2.0 * SEEDS as f64)
        .unwrap()
        .inverse_cdf(0.999);
    assert!(stat <= crit, "chi-square {stat:.2} above {crit:.2}");
}

#[test]
fn node_degrees_match_expectation() {
    let cfg = SbmConfig {
        num_classes: 4,
        nodes_per_class: 50,
        p_in: 0.2,
        p_out: 0.02,
        ..SbmConfig::default()
    };
    let m = cfg.nodes_per_class as f64;
    let others = (cfg.num_classes - 1) as f64 * m;
    let mean = (m - 1.0) * cfg.p_in + others * cfg.p_out;
    // Degrees within one graph are dependent (each edge counts twice), so the
    // per-seed statistic uses the degree sum, i.e. twice the edge count.
    let n = (cfg.num_classes * cfg.nodes_per_class) as f64;
    let (n_in, n_out) = pairs(&cfg);
    let var_sum =
        4.0 * (n_in * cfg.p_in * (1.0 - cfg.p_in) + n_out * cfg.p_out * (1.0 - cfg.p_out));
    let mut stat = 0.0;
    for seed in 0..SEEDS {
        let g = generate_sbm(&SbmConfig {
            seed,
            ..cfg.clone()
        })
        .unwrap();
        let total: usize = (0..g.num_nodes()).map(|v| g.degree(v)).sum();
        stat += (total as f64 - n * mean).powi(2) / var_sum;
    }
    let crit = ChiSquared::new(SEEDS as f64).unwrap().inverse_cdf(0.999);
    assert!(stat <= crit, "chi-square {stat:.2} above {crit:.2}");
}

#[test]
fn equal_probabilities_give_equal_densities() {
    let cfg = SbmConfig {
        num_classes: 5,
        nodes_per_class: 30,
        p_in: 0.08,
        p_out: 0.08,
        ..SbmConfig::default()
    };
    let (n_in, n_out) = pairs(&cfg);
    let (mut o_in, mut o_out) = (0usize, 0usize);
    for seed in 0..SEEDS {
        let (a, b) = counts(
            &generate_sbm(&SbmConfig {
                seed,
                ..cfg.clone()
            })
            .unwrap(),
        );
        o_in += a;
        o_out += b;
    }
    let k = SEEDS as f64;
    let d_in = o_in as f64 / (k * n_in);
    let d_out = o_out as f64 / (k * n_out);
    let p = cfg.p_in;
    let se = (p * (1.0 - p) * (1.0 / (k * n_in) + 1.0 / (k * n_out))).sqrt();
    assert!(
        (d_in - d_out).abs() <= 3.0 * se,
        "{d_in} vs {d_out}, se {se}"
    );
}

#[test]
fn disconnected_classes_without_cross_edges() {
    let g = generate_sbm(&SbmConfig {
        num_classes: 10,
        nodes_per_class: 100,
        p_in: 0.05,
        p_out: 0.0,
        ..SbmConfig::default()
    })
    .unwrap();
    assert_eq!(counts(&g).1, 0);
    assert_eq!(g.num_nodes(), 1000);
}
