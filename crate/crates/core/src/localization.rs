//! Block-diagonal structure of outage factors, the simple-cycle criterion,
//! random-perturbation statistics and the adversarial capacity construction.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dcpf::{self, LaplacianBundle};
use crate::error::{Error, Result};
use crate::factors::{self, GlodfMethod, GlodfResult, LineMatrix, OutageSet, PtdfMatrix};
use crate::graph_algos::{self, BlockDecomposition};
use crate::linalg;
use crate::net_model::{Injections, Network};

/// Localization zeros are asserted relative to the largest factor magnitude.
pub const ZERO_TOL: f64 = 1e-9;

/// Absolute threshold for counting a perturbed factor as nonzero.
pub const NONZERO_TOL: f64 = 1e-12;

/// Factors below this magnitude make the adversarial construction void.
pub const FACTOR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CyclePrediction {
    Zero,
    PossiblyNonzero,
}

/// Predicts whether `K_{l l̂}` can be nonzero: only if a simple cycle
/// passes through both lines.
pub fn simple_cycle_criterion(
    network: &Network,
    decomposition: &BlockDecomposition,
    l: usize,
    l_hat: usize,
) -> Result<CyclePrediction> {
    graph_algos::check_edges(network, &[l, l_hat])?;
    if l == l_hat {
        return Err(Error::InvalidOutage(format!("line {} is the outaged line", l + 1)));
    }
    if decomposition.is_bridge(l_hat) {
        return Err(Error::BridgeOutage(l_hat + 1));
    }
    Ok(if decomposition.shares_simple_cycle(l, l_hat) {
        CyclePrediction::PossiblyNonzero
    } else {
        CyclePrediction::Zero
    })
}

/// Per-block factors for one block that contains outaged lines.
#[derive(Debug, Clone, Serialize)]
pub struct BlockFactors {
    pub block: usize,
    /// `D_{−k}`: surviving lines of the block against its outaged lines.
    pub d_minus: LineMatrix,
    /// `D_k`: outaged lines of the block against themselves.
    pub d_k: LineMatrix,
    /// Stacked single-line LODFs restricted to the block.
    pub k_stack: LineMatrix,
    /// `K^F_k = D_{−k} (I − D_k)⁻¹`.
    pub k_f: LineMatrix,
    /// Disagreement of `K^F_k` with the full `K^F`, relative to `max|K^F|`.
    pub reassembly_error: f64,
    /// Same, with `K^F_k` built straight from `A` and the incidence columns.
    pub reassembly_error_from_a: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalizationReport {
    pub outage: Vec<usize>,
    pub blocks: Vec<BlockFactors>,
    /// Largest `|K^F_{l l̂}|` with `l` and `l̂` in different blocks.
    pub cross_block_max: f64,
    /// Same for the stacked matrix `K_{−FF}`.
    pub stack_cross_block_max: f64,
    pub max_abs: f64,
    /// Within-block entries with `|K^F| < tolerance · max|K^F|`.
    pub within_block_zero_count: usize,
    pub within_block_count: usize,
    pub tolerance: f64,
    pub max_reassembly_error: f64,
    /// Cross-block maxima and reassembly errors are all within tolerance.
    pub localized: bool,
}

fn rows_of(outage: &OutageSet, lines: &[usize]) -> Vec<usize> {
    lines
        .iter()
        .map(|l| outage.surviving().binary_search(l).expect("surviving line"))
        .collect()
}

fn cols_of(outage: &OutageSet, lines: &[usize]) -> Vec<usize> {
    lines
        .iter()
        .map(|l| outage.outaged().binary_search(l).expect("outaged line"))
        .collect()
}

fn sub(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

fn scaled(diff: f64, scale: f64) -> f64 {
    if scale == 0.0 { diff } else { diff / scale }
}

/// `B_{−k} C_{−k}ᵀ A C_k`, entry by entry.
fn factor_from_a(bundle: &LaplacianBundle, network: &Network, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    let edges = network.edges();
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| {
        let (e, f) = (&edges[rows[r]], &edges[cols[c]]);
        e.susceptance * bundle.cross(e.source, e.target, f.source, f.target)
    })
}

/// Splits `K^F` by block and rebuilds each diagonal piece from block-local
/// data only.
pub fn block_structure_report(
    bundle: &LaplacianBundle,
    ptdf: &PtdfMatrix,
    network: &Network,
    result: &GlodfResult,
    decomposition: &BlockDecomposition,
    tolerance: f64,
) -> Result<LocalizationReport> {
    let outage = &result.outage;
    if graph_algos::is_cut_set(network, outage.outaged())? {
        return Err(Error::CutSet(outage.outaged().iter().map(|l| l + 1).collect()));
    }
    let k = &result.k;
    let max_abs = k.amax();
    let bound = tolerance * max_abs;

    let mut cross_block_max = 0.0_f64;
    let mut stack_cross_block_max = 0.0_f64;
    let mut within_block_zero_count = 0;
    let mut within_block_count = 0;
    for (r, &l) in outage.surviving().iter().enumerate() {
        for (c, &l_hat) in outage.outaged().iter().enumerate() {
            if decomposition.same_block(l, l_hat) {
                within_block_count += 1;
                if k[(r, c)].abs() < bound {
                    within_block_zero_count += 1;
                }
            } else {
                cross_block_max = cross_block_max.max(k[(r, c)].abs());
                stack_cross_block_max = stack_cross_block_max.max(result.k_stack[(r, c)].abs());
            }
        }
    }

    let mut blocks = Vec::new();
    for (b, lines) in decomposition.blocks.iter().enumerate() {
        let f_k: Vec<usize> = lines.iter().copied().filter(|&l| outage.contains(l)).collect();
        if f_k.is_empty() {
            continue;
        }
        let minus_k: Vec<usize> = lines.iter().copied().filter(|&l| !outage.contains(l)).collect();
        let d_minus = ptdf.select(&minus_k, &f_k);
        let d_k = ptdf.select(&f_k, &f_k);
        let eye = DMatrix::identity(f_k.len(), f_k.len());
        let inv = linalg::lu_inverse(&(&eye - &d_k), "I − D_k")?;
        let k_f = &d_minus * &inv;
        let diag = DMatrix::from_diagonal(&d_k.diagonal().map(|x| 1.0 / (1.0 - x)));
        let k_stack = &d_minus * diag;

        let a_minus = factor_from_a(bundle, network, &minus_k, &f_k);
        let a_k = factor_from_a(bundle, network, &f_k, &f_k);
        let k_from_a = a_minus * linalg::lu_inverse(&(&eye - a_k), "I − B_k C_kᵀ A C_k")?;

        let full = sub(k, &rows_of(outage, &minus_k), &cols_of(outage, &f_k));
        let reassembly_error = scaled(linalg::max_abs_diff(&full, &k_f), max_abs);
        let reassembly_error_from_a = scaled(linalg::max_abs_diff(&full, &k_from_a), max_abs);
        blocks.push(BlockFactors {
            block: b,
            d_minus: LineMatrix::new(&minus_k, &f_k, &d_minus),
            d_k: LineMatrix::new(&f_k, &f_k, &d_k),
            k_stack: LineMatrix::new(&minus_k, &f_k, &k_stack),
            k_f: LineMatrix::new(&minus_k, &f_k, &k_f),
            reassembly_error,
            reassembly_error_from_a,
        });
    }
    let max_reassembly_error = blocks
        .iter()
        .map(|b| b.reassembly_error.max(b.reassembly_error_from_a))
        .fold(0.0, f64::max);
    let stack_scale = result.k_stack.amax();
    let localized = cross_block_max <= bound
        && stack_cross_block_max <= tolerance * stack_scale
        && max_reassembly_error <= tolerance;
    Ok(LocalizationReport {
        outage: outage.outaged().iter().map(|l| l + 1).collect(),
        blocks,
        cross_block_max,
        stack_cross_block_max,
        max_abs,
        within_block_zero_count,
        within_block_count,
        tolerance,
        max_reassembly_error,
        localized,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationSpec {
    pub eps: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            trials: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairStatistic {
    pub line: usize,
    pub outaged: usize,
    /// `K^F_{l l̂}` at the nominal susceptances.
    pub unperturbed: f64,
    pub nonzero_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationStatistics {
    pub spec: PerturbationSpec,
    pub outage: Vec<usize>,
    /// Every within-block `(l, l̂)` pair with `l` surviving.
    pub within_block: Vec<PairStatistic>,
    /// Smallest fraction of trials in which a within-block pair was nonzero.
    pub min_nonzero_fraction: f64,
    /// Trials in which some cross-block factor exceeded the zero tolerance.
    pub cross_block_violations: usize,
}

/// Multiplies every susceptance by `1 + ω_l`, `ω_l` uniform on `[−ε, ε]`.
/// Trial `t` draws from stream `t` of a ChaCha8 generator seeded by `seed`.
pub fn perturbed_susceptances(network: &Network, spec: &PerturbationSpec, trial: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(trial as u64);
    network
        .edges()
        .iter()
        .map(|e| {
            let w = if spec.eps > 0.0 { rng.random_range(-spec.eps..=spec.eps) } else { 0.0 };
            e.susceptance * (1.0 + w)
        })
        .collect()
}

fn glodf_for(network: &Network, outage: &OutageSet) -> Result<DMatrix<f64>> {
    let bundle = dcpf::build_laplacian(network)?;
    let ptdf = factors::ptdf_matrix(&bundle, network);
    Ok(factors::glodf(&bundle, &ptdf, network, outage, GlodfMethod::PreContingency)?.k)
}

/// Counts, over random susceptance perturbations, how often each
/// within-block factor is nonzero.
pub fn almost_sure_nonzero_test(
    network: &Network,
    outage: &OutageSet,
    spec: &PerturbationSpec,
) -> Result<PerturbationStatistics> {
    if !(0.0..1.0).contains(&spec.eps) {
        return Err(Error::Parse(format!("perturbation magnitude {} must lie in [0, 1)", spec.eps)));
    }
    let decomposition = graph_algos::block_decomposition(network)?;
    if graph_algos::is_cut_set(network, outage.outaged())? {
        return Err(Error::CutSet(outage.outaged().iter().map(|l| l + 1).collect()));
    }
    let nominal = glodf_for(network, outage)?;

    let mut pairs = Vec::new();
    for (r, &l) in outage.surviving().iter().enumerate() {
        for (c, &l_hat) in outage.outaged().iter().enumerate() {
            pairs.push((r, c, decomposition.same_block(l, l_hat)));
        }
    }

    let trials: Vec<DMatrix<f64>> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let b = perturbed_susceptances(network, spec, t);
            glodf_for(&network.with_susceptances(&b)?, outage)
        })
        .collect::<Result<_>>()?;

    let mut within_block = Vec::new();
    for &(r, c, same) in &pairs {
        if !same {
            continue;
        }
        let nonzero_trials = trials.iter().filter(|k| k[(r, c)].abs() > NONZERO_TOL).count();
        within_block.push(PairStatistic {
            line: outage.surviving()[r] + 1,
            outaged: outage.outaged()[c] + 1,
            unperturbed: nominal[(r, c)],
            nonzero_trials,
        });
    }
    let cross_block_violations = trials
        .iter()
        .filter(|k| {
            let bound = ZERO_TOL * k.amax();
            pairs.iter().any(|&(r, c, same)| !same && k[(r, c)].abs() > bound)
        })
        .count();
    let min_nonzero_fraction = if spec.trials == 0 {
        0.0
    } else {
        within_block
            .iter()
            .map(|p| p.nonzero_trials as f64 / spec.trials as f64)
            .fold(1.0, f64::min)
    };
    Ok(PerturbationStatistics {
        spec: *spec,
        outage: outage.outaged().iter().map(|l| l + 1).collect(),
        within_block,
        min_nonzero_fraction,
        cross_block_violations,
    })
}

/// Injections and capacities under which tripping `e` overloads exactly `ê`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversarialInstance {
    pub tripped: usize,
    pub target: usize,
    pub injections: Vec<f64>,
    pub capacities: Vec<f64>,
    /// Pre-outage flows under the injections.
    pub flows: Vec<f64>,
    /// `K_{ê e}`.
    pub factor: f64,
}

/// Characteristic injection of `e`; capacity `|f_ê|` on `ê` and
/// `(1 + ‖K_{·e}‖_∞) ‖f‖_∞` on every other line.
pub fn adversarial_capacity(
    bundle: &LaplacianBundle,
    ptdf: &PtdfMatrix,
    network: &Network,
    e: usize,
    e_hat: usize,
) -> Result<AdversarialInstance> {
    graph_algos::check_edges(network, &[e, e_hat])?;
    if e == e_hat {
        return Err(Error::InvalidOutage("the tripped and target lines coincide".into()));
    }
    if ptdf.is_bridge(e) {
        return Err(Error::BridgeOutage(e + 1));
    }
    let denom = 1.0 - ptdf.get(e, e);
    let k_col: Vec<f64> = (0..network.m())
        .map(|l| if l == e { 0.0 } else { ptdf.get(l, e) / denom })
        .collect();
    let factor = k_col[e_hat];
    if factor.abs() < FACTOR_TOL {
        return Err(Error::ZeroFactor {
            line: e_hat + 1,
            outaged: e + 1,
        });
    }
    let (s, t) = network.edge(e).endpoints();
    let p = Injections::transfer(network, s, t);
    let flows = dcpf::solve_flow(bundle, network, &p).flows;
    let k_norm = k_col.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let f_norm = flows.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let big = (1.0 + k_norm) * f_norm;
    let capacities = (0..network.m())
        .map(|u| if u == e_hat { flows[e_hat].abs() } else { big })
        .collect();
    Ok(AdversarialInstance {
        tripped: e + 1,
        target: e_hat + 1,
        injections: p.values().to_vec(),
        capacities,
        flows,
        factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_algos::block_decomposition;
    use crate::testnets;

    fn parts(net: &Network) -> (LaplacianBundle, PtdfMatrix, BlockDecomposition) {
        let bundle = dcpf::build_laplacian(net).unwrap();
        let ptdf = factors::ptdf_matrix(&bundle, net);
        (bundle, ptdf, block_decomposition(net).unwrap())
    }

    #[test]
    fn criterion_on_small_graphs() {
        let tri = testnets::triangle();
        let (_, _, d) = parts(&tri);
        assert_eq!(simple_cycle_criterion(&tri, &d, 1, 0).unwrap(), CyclePrediction::PossiblyNonzero);

        let g = testnets::seven_node();
        let (_, ptdf, d) = parts(&g);
        assert_eq!(simple_cycle_criterion(&g, &d, 5, 0).unwrap(), CyclePrediction::Zero);
        let k = factors::lodf_single(&ptdf, &d, 0).unwrap();
        assert!(k.get(5).unwrap().abs() < 1e-10);
        assert!(matches!(simple_cycle_criterion(&g, &d, 0, 3), Err(Error::BridgeOutage(4))));

        let pt = testnets::path_plus_triangle();
        let (_, _, d) = parts(&pt);
        assert_eq!(simple_cycle_criterion(&pt, &d, 0, 1).unwrap(), CyclePrediction::Zero);
    }

    #[test]
    fn report_on_two_blocks() {
        let g = testnets::seven_node();
        let (bundle, ptdf, d) = parts(&g);
        // one outage in each cycle
        let f = OutageSet::new(&g, &[0, 6]).unwrap();
        let r = factors::glodf(&bundle, &ptdf, &g, &f, GlodfMethod::PreContingency).unwrap();
        let rep = block_structure_report(&bundle, &ptdf, &g, &r, &d, ZERO_TOL).unwrap();
        assert!(rep.localized);
        assert_eq!(rep.blocks.len(), 2);
        assert!(rep.cross_block_max < 1e-12);
        assert_eq!(rep.outage, vec![1, 7]);
    }

    #[test]
    fn singleton_outage_zero_outside_block() {
        let g = testnets::two_triangles();
        let (bundle, ptdf, d) = parts(&g);
        let f = OutageSet::new(&g, &[0]).unwrap();
        let r = factors::glodf(&bundle, &ptdf, &g, &f, GlodfMethod::PreContingency).unwrap();
        for (row, &l) in f.surviving().iter().enumerate() {
            if l > 2 {
                assert!(r.k[(row, 0)].abs() < 1e-12);
            } else {
                assert!((r.k[(row, 0)].abs() - 1.0).abs() < 1e-12);
            }
        }
        let rep = block_structure_report(&bundle, &ptdf, &g, &r, &d, ZERO_TOL).unwrap();
        assert_eq!(rep.blocks.len(), 1);
        assert_eq!(rep.within_block_zero_count, 0);
    }

    #[test]
    fn perturbation_is_deterministic_and_positive() {
        let net = testnets::complete(4);
        let spec = PerturbationSpec { seed: 7, trials: 5, ..Default::default() };
        let a = perturbed_susceptances(&net, &spec, 3);
        assert_eq!(a, perturbed_susceptances(&net, &spec, 3));
        assert_ne!(a, perturbed_susceptances(&net, &spec, 4));
        assert!(a.iter().all(|&b| b > 0.0 && (b - 1.0).abs() <= 1e-3));
    }

    #[test]
    fn k4_symmetric_zero_is_broken() {
        let net = testnets::complete(4);
        let f = OutageSet::new(&net, &[0]).unwrap();
        let spec = PerturbationSpec { seed: 42, trials: 20, ..Default::default() };
        let stats = almost_sure_nonzero_test(&net, &f, &spec).unwrap();
        // line (3,4) is index 5 and does not touch (1,2)
        let far = stats.within_block.iter().find(|p| p.line == 6).unwrap();
        assert!(far.unperturbed.abs() < 1e-12);
        assert_eq!(far.nonzero_trials, 20);
        assert_eq!(stats.cross_block_violations, 0);
        assert_eq!(stats, almost_sure_nonzero_test(&net, &f, &spec).unwrap());
    }

    #[test]
    fn triangle_adversarial_instance() {
        let net = testnets::triangle();
        let (bundle, ptdf, _) = parts(&net);
        let inst = adversarial_capacity(&bundle, &ptdf, &net, 0, 2).unwrap();
        assert_eq!(inst.injections, vec![1.0, -1.0, 0.0]);
        let expected = [4.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0];
        for (c, x) in inst.capacities.iter().zip(expected) {
            assert!((c - x).abs() < 1e-12);
        }
        assert!((inst.factor - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adversarial_rejects_zero_factor_and_bridges() {
        let g = testnets::two_triangles();
        let (bundle, ptdf, _) = parts(&g);
        assert!(matches!(
            adversarial_capacity(&bundle, &ptdf, &g, 0, 5),
            Err(Error::ZeroFactor { line: 6, outaged: 1 })
        ));
        assert!(matches!(adversarial_capacity(&bundle, &ptdf, &g, 3, 0), Err(Error::BridgeOutage(4))));
    }
}
