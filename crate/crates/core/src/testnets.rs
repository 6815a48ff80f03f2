//! Small reference networks and a seeded random-network generator.
//!
//! Used by the test suites, the Python smoke test and documentation
//! examples. All unit-susceptance networks use node ids `1..=n`.

use rand::Rng;
use rand::seq::SliceRandom;

use crate::net_model::Network;

/// Triangle with lines (1,2), (2,3), (1,3); unit susceptances.
pub fn triangle() -> Network {
    Network::from_lines(3, &[(1, 2, 1.0), (2, 3, 1.0), (1, 3, 1.0)]).unwrap()
}

/// Path 1-2-3 with unit susceptances; both lines are bridges.
pub fn path3() -> Network {
    Network::from_lines(3, &[(1, 2, 1.0), (2, 3, 1.0)]).unwrap()
}

/// Cycle 1-2-3-4-1 with unit susceptances.
pub fn four_cycle() -> Network {
    Network::from_lines(4, &[(1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (4, 1, 1.0)]).unwrap()
}

/// Ring of `k` nodes with clockwise orientation `e_s = (s, s+1)`.
pub fn ring(k: u32) -> Network {
    let lines: Vec<_> = (1..=k).map(|s| (s, s % k + 1, 1.0)).collect();
    Network::from_lines(k, &lines).unwrap()
}

/// Complete graph on `k` nodes, lines in lexicographic order.
pub fn complete(k: u32) -> Network {
    let mut lines = Vec::new();
    for a in 1..=k {
        for b in a + 1..=k {
            lines.push((a, b, 1.0));
        }
    }
    Network::from_lines(k, &lines).unwrap()
}

/// Seven-node graph with cut vertices {2, 3, 7} and bridges (2,6), (3,7).
///
/// Blocks: the cycle 1-2-3, bridge (2,6), bridge (3,7) and the cycle 4-5-7.
pub fn seven_node() -> Network {
    Network::from_lines(
        7,
        &[
            (1, 2, 1.0),
            (2, 3, 1.0),
            (1, 3, 1.0),
            (2, 6, 1.0),
            (3, 7, 1.0),
            (4, 5, 1.0),
            (4, 7, 1.0),
            (5, 7, 1.0),
        ],
    )
    .unwrap()
}

/// Two triangles joined by the bridge (3,4): blocks {1,2,3}, {(3,4)}, {4,5,6}.
pub fn two_triangles() -> Network {
    Network::from_lines(
        6,
        &[
            (1, 2, 1.0),
            (2, 3, 1.0),
            (1, 3, 1.0),
            (3, 4, 1.0),
            (4, 5, 1.0),
            (5, 6, 1.0),
            (4, 6, 1.0),
        ],
    )
    .unwrap()
}

/// Path 1-2 glued to triangle 2-3-4 at cut vertex 2.
pub fn path_plus_triangle() -> Network {
    Network::from_lines(4, &[(1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (2, 4, 1.0)]).unwrap()
}

/// Random connected simple graph on `n` nodes.
///
/// A random spanning tree guarantees connectivity; every remaining pair is
/// added with probability `density`. Susceptances are uniform in `b_range`
/// and edge orientations and order are shuffled.
pub fn random_connected<R: Rng>(rng: &mut R, n: u32, density: f64, b_range: (f64, f64)) -> Network {
    assert!(n >= 2);
    let mut order: Vec<u32> = (1..=n).collect();
    order.shuffle(rng);
    let mut pairs = Vec::new();
    let mut present = std::collections::HashSet::new();
    for k in 1..order.len() {
        let parent = order[rng.random_range(0..k)];
        let child = order[k];
        present.insert((parent.min(child), parent.max(child)));
        pairs.push((parent, child));
    }
    for a in 1..=n {
        for b in a + 1..=n {
            if !present.contains(&(a, b)) && rng.random_bool(density) {
                pairs.push((a, b));
            }
        }
    }
    pairs.shuffle(rng);
    let lines: Vec<_> = pairs
        .into_iter()
        .map(|(a, b)| {
            let s = rng.random_range(b_range.0..=b_range.1);
            if rng.random_bool(0.5) { (a, b, s) } else { (b, a, s) }
        })
        .collect();
    Network::from_lines(n, &lines).unwrap()
}

/// Random balanced injection vector with entries in [-1, 1].
pub fn random_injections<R: Rng>(rng: &mut R, network: &Network) -> crate::net_model::Injections {
    let mut p: Vec<f64> = (0..network.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    for v in &mut p {
        *v -= mean;
    }
    let last = p.len() - 1;
    p[last] = -p[..last].iter().sum::<f64>();
    crate::net_model::Injections::new(network, p).unwrap()
}
