use degroot_core::{Graph, GraphSpec, GrowthProfile};

fn zoo() -> Vec<Graph> {
    [
        GraphSpec::Path { n: 9 },
        GraphSpec::Cycle { n: 10 },
        GraphSpec::Grid { width: 4, height: 5 },
        GraphSpec::Torus { width: 5, height: 4 },
        GraphSpec::RegularTree { branching: 2, depth: 3 },
        GraphSpec::RandomRegular { n: 24, degree: 3, seed: 11 },
        GraphSpec::RandomRegular { n: 30, degree: 4, seed: 12 },
    ]
    .iter()
    .map(|s| Graph::generate(s).unwrap())
    .collect()
}

/// All-pairs shortest paths by Floyd–Warshall on the edge list.
fn floyd_warshall(g: &Graph) -> Vec<Vec<usize>> {
    let n = g.node_count();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(a, b) in g.edges() {
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
    d
}

#[test]
fn bfs_agrees_with_floyd_warshall() {
    for g in zoo() {
        let d = floyd_warshall(&g);
        for i in 0..g.node_count() {
            assert_eq!(g.distances_from(i), d[i]);
        }
        let ecc: Vec<usize> = d.iter().map(|row| *row.iter().max().unwrap()).collect();
        assert_eq!(g.eccentricities(), ecc);
        assert_eq!(g.radius(), *ecc.iter().min().unwrap());
        assert_eq!(g.diameter(), *ecc.iter().max().unwrap());
    }
}

#[test]
fn balls_match_distance_matrix() {
    for g in zoo() {
        let d = floyd_warshall(&g);
        for i in 0..g.node_count() {
            for r in 0..=g.eccentricity(i) + 1 {
                let mut want: Vec<usize> = (0..g.node_count()).filter(|&j| d[i][j] <= r).collect();
                want.sort_unstable();
                let mut got = g.ball(i, r);
                got.sort_unstable();
                assert_eq!(got, want, "ball({i}, {r})");
            }
            let sizes = g.ball_sizes(i);
            for (r, &s) in sizes.iter().enumerate() {
                assert_eq!(s, d[i].iter().filter(|&&x| x <= r).count());
            }
        }
    }
}

#[test]
fn set_distances_are_pointwise_minima() {
    for g in zoo() {
        let d = floyd_warshall(&g);
        let sources = [0, g.node_count() / 2, g.node_count() - 1];
        let got = g.distances_from_set(&sources);
        for j in 0..g.node_count() {
            assert_eq!(got[j], sources.iter().map(|&s| d[s][j]).min().unwrap());
        }
    }
}

#[test]
fn edge_distances_and_weight_mass() {
    for g in zoo() {
        let d = floyd_warshall(&g);
        let i = g.node_count() / 3;
        let r = 0.7f64;
        let direct: f64 = g
            .edges()
            .iter()
            .map(|&(a, b)| r.powi(d[i][a].min(d[i][b]) as i32))
            .sum();
        assert!((g.weight_mass(i, r) - direct).abs() <= 1e-12 * direct);
        for &e in g.edges() {
            assert_eq!(g.edge_distance(i, e).unwrap(), d[i][e.0].min(d[i][e.1]));
        }
    }
}

#[test]
fn majorization_matches_brute_force() {
    for g in zoo() {
        let d = floyd_warshall(&g);
        for profile in [
            GrowthProfile::Polynomial { c: 1.0, k: 1.0 },
            GrowthProfile::Polynomial { c: 2.0, k: 1.0 },
            GrowthProfile::Polynomial { c: 1.0, k: 2.0 },
            GrowthProfile::Polynomial { c: 2.0, k: 2.0 },
            GrowthProfile::StretchedExp { alpha: 1.0 },
        ] {
            let brute = (0..g.node_count()).all(|i| {
                (0..=g.diameter()).all(|r| d[i].iter().filter(|&&x| x <= r).count() as f64 <= profile.bound(r))
            });
            let got = g.check_majorized(&profile);
            assert_eq!(got.holds, brute, "{profile:?}");
            if let Some(w) = got.witness {
                let size = d[w.node].iter().filter(|&&x| x <= w.radius).count();
                assert_eq!(size, w.ball_size);
                assert!(size as f64 > w.bound);
            }
        }
    }
}

#[test]
fn random_regular_is_simple_and_regular() {
    for (n, degree) in [(20, 3), (50, 4), (101, 6)] {
        let g = Graph::generate(&GraphSpec::RandomRegular { n, degree, seed: 5 }).unwrap();
        assert_eq!(g.node_count(), n);
        assert!((0..n).all(|i| g.degree(i) == degree));
        for i in 0..n {
            let mut nb = g.neighbors(i).to_vec();
            assert!(!nb.contains(&i));
            nb.sort_unstable();
            nb.dedup();
            assert_eq!(nb.len(), degree);
        }
        // same seed, same graph
        let again = Graph::generate(&GraphSpec::RandomRegular { n, degree, seed: 5 }).unwrap();
        assert_eq!(g, again);
    }
}

#[test]
fn edge_list_round_trip() {
    for g in zoo() {
        assert_eq!(Graph::parse_edge_list(&g.to_edge_list()).unwrap(), g);
    }
}
