//! Hand-derived instances checked end to end.

use gridfactor_core::cascade::{self, CascadeStatus};
use gridfactor_core::factors::{self, GlodfMethod, OutageSet};
use gridfactor_core::forests::{self, ForestOracle};
use gridfactor_core::graph_algos::block_decomposition;
use gridfactor_core::localization::{self, ZERO_TOL};
use gridfactor_core::net_model::{self, Injections};
use gridfactor_core::{Error, dcpf, testnets};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() < tol
}

#[test]
fn triangle_values_from_both_routes() {
    let net = testnets::triangle();
    let oracle = ForestOracle::with_exact(&net).unwrap();
    assert!(oracle.is_exact());
    let bundle = dcpf::build_laplacian(&net).unwrap();
    let ptdf = factors::ptdf_matrix(&bundle, &net);
    let blocks = block_decomposition(&net).unwrap();
    let col = factors::lodf_single(&ptdf, &blocks, 0).unwrap();
    assert!(close(col.get(2).unwrap(), 1.0, 1e-12));
    assert!(close(col.get(1).unwrap(), -1.0, 1e-12));
    assert_eq!(oracle.lodf(2, 0).unwrap(), 1.0);
    assert_eq!(oracle.lodf(1, 0).unwrap(), -1.0);
    assert_eq!(oracle.effective_reactance(0).unwrap().effective, 2.0 / 3.0);
    assert_eq!(oracle.tree_count(), 3);
}

#[test]
fn six_ring_lodf_is_negative_one() {
    let net = testnets::ring(6);
    let bundle = dcpf::build_laplacian(&net).unwrap();
    let ptdf = factors::ptdf_matrix(&bundle, &net);
    let blocks = block_decomposition(&net).unwrap();
    let col = factors::lodf_single(&ptdf, &blocks, 0).unwrap();
    for v in col.values {
        assert!(close(v, -1.0, 1e-12));
    }
    assert!(close(forests::lodf_via_forests(&net, 3, 0).unwrap(), -1.0, 1e-12));
}

#[test]
fn two_lines_in_one_block_stay_in_that_block() {
    // K4 on 1..4, bridge (4,5), triangle 5-6-7
    let net = gridfactor_core::Network::from_lines(
        7,
        &[
            (1, 2, 1.0),
            (1, 3, 2.0),
            (1, 4, 1.0),
            (2, 3, 0.5),
            (2, 4, 1.0),
            (3, 4, 1.5),
            (4, 5, 1.0),
            (5, 6, 1.0),
            (6, 7, 1.0),
            (5, 7, 1.0),
        ],
    )
    .unwrap();
    let bundle = dcpf::build_laplacian(&net).unwrap();
    let p = Injections::new(&net, vec![1.0, 0.5, -0.25, 0.75, -1.0, -0.5, -0.5]).unwrap();
    let f = OutageSet::new(&net, &[0, 5]).unwrap();
    let (pre, post) = factors::apply_outage(&bundle, &net, &p, &f).unwrap();
    assert!(f.surviving().iter().take(4).any(|&l| !close(pre.flows[l], post.flows[l], 1e-6)));
    for l in 6..10 {
        assert!(close(pre.flows[l], post.flows[l], 1e-12), "line {l}");
    }
}

#[test]
fn lines_in_different_blocks_act_separately() {
    let net = testnets::seven_node();
    let bundle = dcpf::build_laplacian(&net).unwrap();
    let ptdf = factors::ptdf_matrix(&bundle, &net);
    let blocks = block_decomposition(&net).unwrap();
    let p = Injections::new(&net, vec![1.0, 0.5, -0.25, 0.75, -1.0, -0.5, -0.5]).unwrap();
    let f = OutageSet::new(&net, &[0, 5]).unwrap();
    let (pre, post) = factors::apply_outage(&bundle, &net, &p, &f).unwrap();
    let k0 = factors::lodf_single(&ptdf, &blocks, 0).unwrap();
    for l in [1, 2] {
        let expected = pre.flows[l] + k0.get(l).unwrap() * pre.flows[0];
        assert!(close(post.flows[l], expected, 1e-12));
    }
    let r = factors::glodf(&bundle, &ptdf, &net, &f, GlodfMethod::CrossCheck).unwrap();
    let rep = localization::block_structure_report(&bundle, &ptdf, &net, &r, &blocks, ZERO_TOL).unwrap();
    assert!(rep.localized);
    assert_eq!(rep.blocks.len(), 2);
}

#[test]
fn adversarial_instance_drives_cascade() {
    let net = testnets::triangle();
    let bundle = dcpf::build_laplacian(&net).unwrap();
    let ptdf = factors::ptdf_matrix(&bundle, &net);
    let inst = localization::adversarial_capacity(&bundle, &ptdf, &net, 0, 2).unwrap();
    let net = net.with_capacities(&inst.capacities).unwrap();
    let p = Injections::new(&net, inst.injections.clone()).unwrap();
    let trace = cascade::run_cascade(&net, &p, &[0], None).unwrap();
    assert_eq!(trace.stages.len(), 2);
    assert_eq!(trace.stages[0].tripped, vec![1]);
    assert_eq!(trace.stages[1].tripped, vec![3]);
    assert_eq!(trace.status, CascadeStatus::Islanded { stage: 1 });
    let stage0 = trace.stages[0].flow.as_ref().unwrap();
    assert!(close(stage0.flows[2], 1.0, 1e-12));
}

#[test]
fn adversarial_construction_on_random_graphs() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    for _ in 0..40 {
        let net = testnets::random_connected(&mut rng, 7, 0.4, (0.5, 2.0));
        let bundle = dcpf::build_laplacian(&net).unwrap();
        let ptdf = factors::ptdf_matrix(&bundle, &net);
        for e in 0..net.m() {
            for eh in 0..net.m() {
                let inst = match localization::adversarial_capacity(&bundle, &ptdf, &net, e, eh) {
                    Ok(i) => i,
                    Err(Error::ZeroFactor { .. } | Error::BridgeOutage(_) | Error::InvalidOutage(_)) => continue,
                    Err(other) => panic!("{other}"),
                };
                let net = net.with_capacities(&inst.capacities).unwrap();
                let p = Injections::new(&net, inst.injections).unwrap();
                let trace = cascade::run_cascade(&net, &p, &[e], None).unwrap_or_else(|err| match err {
                    Error::MaxStages(t) => *t,
                    other => panic!("{other}"),
                });
                assert!(trace.stages.len() > 1);
                assert_eq!(trace.stages[1].tripped, vec![eh + 1]);
                checked += 1;
            }
        }
    }
    assert!(checked > 50);
}

#[test]
fn csv_and_json_inputs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let edges = "from,to,b,cap\n1,2,1,inf\n2,3,1,inf\n1,3,1,inf\n";
    std::fs::write(dir.path().join("edges.csv"), edges).unwrap();
    std::fs::write(dir.path().join("injections.csv"), "node,p\n1,1\n2,-1\n3,0\n").unwrap();
    let from_csv = net_model::load_path(dir.path()).unwrap();
    let json = net_model::to_json_string(&from_csv.network, from_csv.injections.as_ref());
    std::fs::write(dir.path().join("net.json"), &json).unwrap();
    let from_json = net_model::load_path(&dir.path().join("net.json")).unwrap();
    assert_eq!(from_csv.network.edges(), from_json.network.edges());
    assert_eq!(from_json.injections.unwrap().values(), &[1.0, -1.0, 0.0]);
}
