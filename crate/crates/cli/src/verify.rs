//! Identity checks run by `gridfactor verify`.

use gridfactor_core::factors::{self, GlodfMethod, OutageSet, PtdfMatrix};
use gridfactor_core::forests::ForestOracle;
use gridfactor_core::graph_algos::{self, BlockDecomposition};
use gridfactor_core::localization;
use gridfactor_core::net_model::{Case, Injections, Network};
use gridfactor_core::{Error, LaplacianBundle, Result, dcpf, linalg, testnets};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Outage sets examined per size; larger networks are sampled in order.
const MAX_SETS: usize = 2000;
/// Random injection vectors for the injection-independence check.
const INJECTION_SAMPLES: usize = 10;
/// Flow magnitude below which the outaged line is skipped in ratio checks.
const FLOW_FLOOR: f64 = 1e-6;
/// Tolerance on `Δf_l / f_l̂`; dividing by small flows amplifies rounding.
const RATIO_TOL: f64 = 1e-8;

#[derive(Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    pub max_error: f64,
    pub cases: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    fn measured(name: &'static str, max_error: f64, tol: f64, cases: usize) -> Self {
        let status = if max_error <= tol { Status::Pass } else { Status::Fail };
        Check {
            name,
            status,
            max_error,
            cases,
            note: None,
        }
    }

    fn boolean(name: &'static str, failures: usize, cases: usize) -> Self {
        Check {
            name,
            status: if failures == 0 { Status::Pass } else { Status::Fail },
            max_error: failures as f64,
            cases,
            note: None,
        }
    }

    fn skipped(name: &'static str, note: String) -> Self {
        Check {
            name,
            status: Status::Skipped,
            max_error: 0.0,
            cases: 0,
            note: Some(note),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub tolerance: f64,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

struct Ctx<'a> {
    net: &'a Network,
    bundle: LaplacianBundle,
    ptdf: PtdfMatrix,
    blocks: BlockDecomposition,
    tol: f64,
}

/// Outage sets of size one and two, in lexicographic order.
fn small_sets(m: usize) -> Vec<Vec<usize>> {
    let mut sets: Vec<Vec<usize>> = (0..m).map(|l| vec![l]).collect();
    sets.truncate(MAX_SETS);
    let mut pairs = Vec::new();
    'outer: for a in 0..m {
        for b in a + 1..m {
            if pairs.len() == MAX_SETS {
                break 'outer;
            }
            pairs.push(vec![a, b]);
        }
    }
    sets.extend(pairs);
    sets.retain(|s| s.len() < m);
    sets
}

fn forest_checks(ctx: &Ctx, out: &mut Vec<Check>) -> Result<()> {
    const NAMES: [&str; 5] = [
        "matrix_tree",
        "spectral_representation",
        "ptdf_forests",
        "lodf_forests",
        "effective_reactance",
    ];
    let oracle = match ForestOracle::new(ctx.net) {
        Ok(o) => o,
        Err(Error::TooLarge(why)) => {
            out.extend(NAMES.iter().map(|n| Check::skipped(n, why.clone())));
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    let (net, tol) = (ctx.net, ctx.tol);

    let mt = oracle.matrix_tree_check(tol)?;
    out.push(Check::measured(
        NAMES[0],
        mt.determinant_rel_error.max(mt.minor_rel_error),
        tol,
        mt.tree_count,
    ));

    let mut err = 0.0_f64;
    for i in 0..net.n() {
        for j in 0..net.n() {
            err = err.max(linalg::rel_err(oracle.a_entry(i, j)?, ctx.bundle.a()[(i, j)]));
        }
    }
    out.push(Check::measured(NAMES[1], err, tol, net.n() * net.n()));

    let mut err = 0.0_f64;
    for l in 0..net.m() {
        for lh in 0..net.m() {
            let (s, t) = net.edge(lh).endpoints();
            err = err.max(linalg::rel_err(oracle.ptdf(l, s, t)?, ctx.ptdf.get(l, lh)));
        }
    }
    out.push(Check::measured(NAMES[2], err, tol, net.m() * net.m()));

    let (mut err, mut cases) = (0.0_f64, 0);
    for lh in (0..net.m()).filter(|&l| !ctx.blocks.is_bridge(l)) {
        let col = factors::lodf_single(&ctx.ptdf, &ctx.blocks, lh)?;
        for (&l, &k) in col.lines.iter().zip(&col.values) {
            err = err.max(linalg::rel_err(oracle.lodf(l, lh)?, k));
            cases += 1;
        }
    }
    out.push(Check::measured(NAMES[3], err, tol, cases));

    let mut failures = 0;
    for l in 0..net.m() {
        let r = oracle.effective_reactance(l)?;
        let pinv = ctx.bundle.pseudo_inverse();
        let e = net.edge(l);
        let algebraic = pinv[(e.source, e.source)] + pinv[(e.target, e.target)] - 2.0 * pinv[(e.source, e.target)];
        if r.effective > r.reactance * (1.0 + tol) || linalg::rel_err(r.effective, algebraic) > tol {
            failures += 1;
        }
    }
    out.push(Check::boolean(NAMES[4], failures, net.m()));
    Ok(())
}

fn bridge_check(ctx: &Ctx) -> Check {
    let mut failures = 0;
    for l in 0..ctx.net.m() {
        let d = ctx.ptdf.get(l, l);
        let bridge = ctx.blocks.is_bridge(l);
        let lodf_rejects = matches!(
            factors::lodf_single(&ctx.ptdf, &ctx.blocks, l),
            Err(Error::BridgeOutage(_))
        );
        if bridge != ((d - 1.0).abs() < 1e-12) || bridge != lodf_rejects {
            failures += 1;
        }
    }
    Check::boolean("bridges", failures, ctx.net.m())
}

fn outage_checks(ctx: &Ctx, p: &[Injections], out: &mut Vec<Check>) -> Result<()> {
    let net = ctx.net;
    let (mut glodf_err, mut flow_err, mut local_err) = (0.0_f64, 0.0_f64, 0.0_f64);
    let (mut islanding_failures, mut sets, mut non_cut) = (0, 0, 0);
    for lines in small_sets(net.m()) {
        let f = OutageSet::new(net, &lines)?;
        sets += 1;
        let cut = graph_algos::is_cut_set(net, &lines)?;
        if cut != factors::detect_islanding(&ctx.ptdf, &f) {
            islanding_failures += 1;
        }
        if cut {
            continue;
        }
        non_cut += 1;
        let r = factors::glodf(&ctx.bundle, &ctx.ptdf, net, &f, GlodfMethod::CrossCheck)?;
        glodf_err = glodf_err.max(r.residuals.as_ref().map_or(0.0, |x| x.max()));

        let rep = localization::block_structure_report(&ctx.bundle, &ctx.ptdf, net, &r, &ctx.blocks, ctx.tol)?;
        let cross = if rep.max_abs == 0.0 { 0.0 } else { rep.cross_block_max / rep.max_abs };
        local_err = local_err.max(cross).max(rep.max_reassembly_error);

        for inj in p {
            let (pre, post) = factors::apply_outage(&ctx.bundle, net, inj, &f)?;
            for (row, &l) in f.surviving().iter().enumerate() {
                let predicted: f64 = pre.flows[l]
                    + f.outaged()
                        .iter()
                        .enumerate()
                        .map(|(c, &lh)| r.k[(row, c)] * pre.flows[lh])
                        .sum::<f64>();
                flow_err = flow_err.max(linalg::rel_err(predicted, post.flows[l]));
            }
        }
    }
    out.push(Check::measured("glodf_agreement", glodf_err, ctx.tol, non_cut));
    out.push(Check::measured("outage_flows", flow_err, ctx.tol, non_cut * p.len()));
    out.push(Check::measured("localization", local_err, ctx.tol, non_cut));
    out.push(Check::boolean("islanding", islanding_failures, sets));
    Ok(())
}

fn injection_independence(ctx: &Ctx, p: &[Injections]) -> Result<Check> {
    let net = ctx.net;
    let (mut err, mut cases) = (0.0_f64, 0);
    for lh in (0..net.m()).filter(|&l| !ctx.blocks.is_bridge(l)) {
        let col = factors::lodf_single(&ctx.ptdf, &ctx.blocks, lh)?;
        let f = OutageSet::new(net, &[lh])?;
        for inj in p {
            let (pre, post) = factors::apply_outage(&ctx.bundle, net, inj, &f)?;
            if pre.flows[lh].abs() <= FLOW_FLOOR {
                continue;
            }
            for (&l, &k) in col.lines.iter().zip(&col.values) {
                let ratio = (post.flows[l] - pre.flows[l]) / pre.flows[lh];
                err = err.max((ratio - k).abs());
                cases += 1;
            }
        }
    }
    Ok(Check::measured("injection_independence", err, RATIO_TOL.max(ctx.tol), cases))
}

fn flow_check(ctx: &Ctx, p: &[Injections]) -> Check {
    let mut err = 0.0_f64;
    for inj in p {
        let f = dcpf::solve_flow(&ctx.bundle, ctx.net, inj);
        let g = dcpf::pseudo_inverse_flow(&ctx.bundle, ctx.net, inj);
        for (x, y) in f.nodal_balance(ctx.net).iter().zip(inj.values()) {
            err = err.max((x - y).abs());
        }
        for (x, y) in f.flows.iter().zip(&g.flows) {
            err = err.max(linalg::rel_err(*x, *y));
        }
    }
    Check::measured("flow_conservation", err, ctx.tol, p.len())
}

pub fn run(case: &Case, tol: f64, seed: u64) -> Result<VerifyReport> {
    let net = &case.network;
    let bundle = dcpf::build_laplacian(net)?;
    let ptdf = factors::ptdf_matrix(&bundle, net);
    let blocks = graph_algos::block_decomposition(net)?;
    let ctx = Ctx {
        net,
        bundle,
        ptdf,
        blocks,
        tol,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<Injections> = case.injections.iter().cloned().collect();
    samples.extend((0..INJECTION_SAMPLES).map(|_| testnets::random_injections(&mut rng, net)));

    let mut checks = Vec::new();
    checks.push(flow_check(&ctx, &samples));
    forest_checks(&ctx, &mut checks)?;
    checks.push(bridge_check(&ctx));
    outage_checks(&ctx, &samples, &mut checks)?;
    checks.push(injection_independence(&ctx, &samples)?);
    let pass = checks.iter().all(|c| !matches!(c.status, Status::Fail));
    Ok(VerifyReport {
        tolerance: tol,
        seed,
        checks,
        pass,
    })
}
