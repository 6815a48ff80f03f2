//! Distribution factors: PTDF, single-line LODF, stacked LODF and GLODF.
//!
//! For an outage set `F` the surviving lines are `−F = ℰ ∖ F`. Matrices
//! indexed by `(−F, F)` have one row per surviving line (ascending index)
//! and one column per outaged line (ascending index).

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dcpf::{self, FlowState, LaplacianBundle};
use crate::error::{Error, Result};
use crate::graph_algos::{self, BlockDecomposition};
use crate::linalg;
use crate::net_model::{Injections, Network};

/// Smallest-to-largest singular value ratio below which `I − D_FF` is
/// treated as singular.
pub const ISLANDING_TOL: f64 = 1e-9;

/// `m × m` PTDF matrix `D = B Cᵀ A C`, with bridge flags.
#[derive(Debug, Clone)]
pub struct PtdfMatrix {
    d: DMatrix<f64>,
    bridge: Vec<bool>,
}

impl PtdfMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn get(&self, l: usize, l_hat: usize) -> f64 {
        self.d[(l, l_hat)]
    }

    pub fn m(&self) -> usize {
        self.d.nrows()
    }

    pub fn is_bridge(&self, l: usize) -> bool {
        self.bridge[l]
    }

    /// Submatrix with the given row and column line indices.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| self.d[(rows[r], cols[c])])
    }
}

pub fn ptdf_matrix(bundle: &LaplacianBundle, network: &Network) -> PtdfMatrix {
    let m = network.m();
    let edges = network.edges();
    let d = DMatrix::from_fn(m, m, |l, k| {
        let (e, f) = (&edges[l], &edges[k]);
        e.susceptance * bundle.cross(e.source, e.target, f.source, f.target)
    });
    let decomposition =
        graph_algos::block_decomposition(network).expect("validated networks are connected");
    let bridge = (0..m).map(|l| decomposition.is_bridge(l)).collect();
    PtdfMatrix { d, bridge }
}

/// LODF column for a single outaged line: `K_{l l̂}` for every `l ≠ l̂`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LodfColumn {
    pub outaged: usize,
    pub lines: Vec<usize>,
    pub values: Vec<f64>,
}

impl LodfColumn {
    pub fn get(&self, l: usize) -> Option<f64> {
        self.lines.iter().position(|&x| x == l).map(|k| self.values[k])
    }
}

/// `K_{l l̂} = D_{l l̂} / (1 − D_{l̂ l̂})`.
pub fn lodf_single(ptdf: &PtdfMatrix, decomposition: &BlockDecomposition, l_hat: usize) -> Result<LodfColumn> {
    if l_hat >= ptdf.m() {
        return Err(Error::UnknownEdge(l_hat + 1));
    }
    if decomposition.is_bridge(l_hat) {
        return Err(Error::BridgeOutage(l_hat + 1));
    }
    let denom = 1.0 - ptdf.get(l_hat, l_hat);
    let lines: Vec<usize> = (0..ptdf.m()).filter(|&l| l != l_hat).collect();
    let values = lines.iter().map(|&l| ptdf.get(l, l_hat) / denom).collect();
    Ok(LodfColumn {
        outaged: l_hat,
        lines,
        values,
    })
}

/// A nonempty proper subset of lines taken out of service together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutageSet {
    outaged: Vec<usize>,
    surviving: Vec<usize>,
}

impl OutageSet {
    pub fn new(network: &Network, lines: &[usize]) -> Result<Self> {
        graph_algos::check_edges(network, lines)?;
        let mut outaged = lines.to_vec();
        outaged.sort_unstable();
        outaged.dedup();
        if outaged.len() != lines.len() {
            return Err(Error::InvalidOutage("repeated line".into()));
        }
        if outaged.is_empty() {
            return Err(Error::InvalidOutage("outage set is empty".into()));
        }
        if outaged.len() == network.m() {
            return Err(Error::InvalidOutage("outage set contains every line".into()));
        }
        let surviving = (0..network.m()).filter(|l| outaged.binary_search(l).is_err()).collect();
        Ok(Self { outaged, surviving })
    }

    /// From external (1-based) line ids.
    pub fn from_ids(network: &Network, ids: &[usize]) -> Result<Self> {
        Self::new(network, &network.edge_indices(ids)?)
    }

    pub fn outaged(&self) -> &[usize] {
        &self.outaged
    }

    pub fn surviving(&self) -> &[usize] {
        &self.surviving
    }

    pub fn contains(&self, l: usize) -> bool {
        self.outaged.binary_search(&l).is_ok()
    }

    pub fn removed_mask(&self, m: usize) -> Vec<bool> {
        let mut mask = vec![false; m];
        for &l in &self.outaged {
            mask[l] = true;
        }
        mask
    }

    pub fn len(&self) -> usize {
        self.outaged.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outaged.is_empty()
    }
}

/// `K_{−FF} = D_{−FF} (I − diag(D_FF))⁻¹`: single-line LODFs side by side.
pub fn lodf_stack(ptdf: &PtdfMatrix, outage: &OutageSet) -> Result<DMatrix<f64>> {
    if let Some(&l) = outage.outaged().iter().find(|&&l| ptdf.is_bridge(l)) {
        return Err(Error::BridgeOutage(l + 1));
    }
    let mut k = ptdf.select(outage.surviving(), outage.outaged());
    for (c, &l_hat) in outage.outaged().iter().enumerate() {
        let denom = 1.0 - ptdf.get(l_hat, l_hat);
        k.column_mut(c).scale_mut(1.0 / denom);
    }
    Ok(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GlodfMethod {
    /// `K^F = B_{−F} C_{−F}ᵀ A_{−F} C_F` on the post-contingency graph.
    PostContingency,
    /// `K^F = D_{−FF} (I − D_FF)⁻¹`.
    #[default]
    PreContingency,
    /// `K^F = K_{−FF} (I − diag(D_FF)) (I − D_FF)⁻¹`.
    ViaStack,
    /// All three; the result carries the pre-contingency value.
    CrossCheck,
}

impl std::str::FromStr for GlodfMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "post_contingency" | "post" => Ok(Self::PostContingency),
            "pre_contingency" | "pre" => Ok(Self::PreContingency),
            "via_stack" | "stack" => Ok(Self::ViaStack),
            "cross_check" | "cross" => Ok(Self::CrossCheck),
            _ => Err(Error::Parse(format!("unknown GLODF method {s:?}"))),
        }
    }
}

/// Pairwise max-abs disagreement between the GLODF formulas, relative to
/// the largest entry magnitude.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlodfResiduals {
    pub post_vs_pre: f64,
    pub pre_vs_stack: f64,
    pub post_vs_stack: f64,
}

impl GlodfResiduals {
    pub fn max(&self) -> f64 {
        self.post_vs_pre.max(self.pre_vs_stack).max(self.post_vs_stack)
    }
}

#[derive(Debug, Clone)]
pub struct GlodfResult {
    pub outage: OutageSet,
    /// GLODF `K^F`, `(m − m_F) × m_F`.
    pub k: DMatrix<f64>,
    /// Stacked single-line LODFs `K_{−FF}`.
    pub k_stack: DMatrix<f64>,
    pub method: GlodfMethod,
    pub residuals: Option<GlodfResiduals>,
}

fn require_non_cut(network: &Network, outage: &OutageSet) -> Result<()> {
    if graph_algos::is_cut_set(network, outage.outaged())? {
        let ids = outage.outaged().iter().map(|l| l + 1).collect();
        return Err(Error::CutSet(ids));
    }
    Ok(())
}

fn i_minus_dff_inverse(ptdf: &PtdfMatrix, outage: &OutageSet) -> Result<DMatrix<f64>> {
    let dff = ptdf.select(outage.outaged(), outage.outaged());
    let m = DMatrix::identity(dff.nrows(), dff.ncols()) - dff;
    if linalg::singular_value_ratio(&m) < ISLANDING_TOL {
        return Err(Error::Singular(
            "I − D_FF is singular although F is not a cut set".into(),
        ));
    }
    linalg::lu_inverse(&m, "I − D_FF")
}

fn glodf_post(network: &Network, outage: &OutageSet) -> Result<DMatrix<f64>> {
    let removed = outage.removed_mask(network.m());
    let post = dcpf::build_surviving(network, &removed)?;
    let edges = network.edges();
    Ok(DMatrix::from_fn(outage.surviving().len(), outage.len(), |r, c| {
        let e = &edges[outage.surviving()[r]];
        let f = &edges[outage.outaged()[c]];
        e.susceptance * post.cross(e.source, e.target, f.source, f.target)
    }))
}

fn glodf_pre(ptdf: &PtdfMatrix, outage: &OutageSet) -> Result<DMatrix<f64>> {
    let d_mf = ptdf.select(outage.surviving(), outage.outaged());
    Ok(d_mf * i_minus_dff_inverse(ptdf, outage)?)
}

fn glodf_via_stack(ptdf: &PtdfMatrix, outage: &OutageSet, k_stack: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        outage.len(),
        outage.outaged().iter().map(|&l| 1.0 - ptdf.get(l, l)),
    ));
    Ok(k_stack * diag * i_minus_dff_inverse(ptdf, outage)?)
}

fn rel_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(b.amax());
    if scale == 0.0 { 0.0 } else { linalg::max_abs_diff(a, b) / scale }
}

/// GLODF `K^F` for a non-cut outage set, by the selected formula.
pub fn glodf(
    bundle: &LaplacianBundle,
    ptdf: &PtdfMatrix,
    network: &Network,
    outage: &OutageSet,
    method: GlodfMethod,
) -> Result<GlodfResult> {
    assert_eq!(bundle.n(), network.n());
    require_non_cut(network, outage)?;
    let k_stack = lodf_stack(ptdf, outage)?;
    let (k, residuals) = match method {
        GlodfMethod::PostContingency => (glodf_post(network, outage)?, None),
        GlodfMethod::PreContingency => (glodf_pre(ptdf, outage)?, None),
        GlodfMethod::ViaStack => (glodf_via_stack(ptdf, outage, &k_stack)?, None),
        GlodfMethod::CrossCheck => {
            let (post, (pre, stack)) = rayon::join(
                || glodf_post(network, outage),
                || (glodf_pre(ptdf, outage), glodf_via_stack(ptdf, outage, &k_stack)),
            );
            let (post, pre, stack) = (post?, pre?, stack?);
            let residuals = GlodfResiduals {
                post_vs_pre: rel_residual(&post, &pre),
                pre_vs_stack: rel_residual(&pre, &stack),
                post_vs_stack: rel_residual(&post, &stack),
            };
            (pre, Some(residuals))
        }
    };
    Ok(GlodfResult {
        outage: outage.clone(),
        k,
        k_stack,
        method,
        residuals,
    })
}

/// Pre-outage flows and flows re-solved on the surviving graph.
pub fn apply_outage(
    bundle: &LaplacianBundle,
    network: &Network,
    p: &Injections,
    outage: &OutageSet,
) -> Result<(FlowState, FlowState)> {
    require_non_cut(network, outage)?;
    let pre = dcpf::solve_flow(bundle, network, p);
    let removed = outage.removed_mask(network.m());
    let post_bundle = dcpf::build_surviving(network, &removed)?;
    let post = dcpf::solve_surviving(&post_bundle, network, p, &removed);
    Ok((pre, post))
}

/// Flows under the characteristic injection of line `e` (unit in at its
/// source, unit out at its target); equals column `e` of `D`.
pub fn characteristic_injection_flow(bundle: &LaplacianBundle, network: &Network, e: usize) -> Result<Vec<f64>> {
    graph_algos::check_edges(network, &[e])?;
    let (s, t) = network.edge(e).endpoints();
    let p = Injections::transfer(network, s, t);
    Ok(dcpf::solve_flow(bundle, network, &p).flows)
}

/// Whether `I − D_FF` is numerically singular, i.e. `F` islands the grid.
pub fn detect_islanding(ptdf: &PtdfMatrix, outage: &OutageSet) -> bool {
    let dff = ptdf.select(outage.outaged(), outage.outaged());
    let m = DMatrix::identity(dff.nrows(), dff.ncols()) - dff;
    linalg::singular_value_ratio(&m) < ISLANDING_TOL
}

/// A dense matrix labelled with external line ids.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineMatrix {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

impl LineMatrix {
    /// `rows` and `cols` are line indices; stored as 1-based ids.
    pub fn new(rows: &[usize], cols: &[usize], m: &DMatrix<f64>) -> Self {
        assert_eq!(m.shape(), (rows.len(), cols.len()));
        Self {
            rows: rows.iter().map(|l| l + 1).collect(),
            cols: cols.iter().map(|l| l + 1).collect(),
            values: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }

    /// Single-column matrix; `col` is a line index.
    pub fn column(rows: &[usize], col: usize, values: &[f64]) -> Self {
        assert_eq!(rows.len(), values.len());
        Self {
            rows: rows.iter().map(|l| l + 1).collect(),
            cols: vec![col + 1],
            values: values.iter().map(|&v| vec![v]).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("line");
        for c in &self.cols {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
        for (r, row) in self.rows.iter().zip(&self.values) {
            out.push_str(&r.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_algos::block_decomposition;
    use crate::testnets;

    struct Setup {
        net: Network,
        bundle: LaplacianBundle,
        ptdf: PtdfMatrix,
        blocks: BlockDecomposition,
    }

    fn setup(net: Network) -> Setup {
        let bundle = dcpf::build_laplacian(&net).unwrap();
        let ptdf = ptdf_matrix(&bundle, &net);
        let blocks = block_decomposition(&net).unwrap();
        Setup { net, bundle, ptdf, blocks }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn triangle_ptdf() {
        let s = setup(testnets::triangle());
        for l in 0..3 {
            assert!(close(s.ptdf.get(l, l), 2.0 / 3.0));
        }
        assert!(close(s.ptdf.get(2, 0), 1.0 / 3.0));
    }

    #[test]
    fn path_ptdf_is_identity() {
        let s = setup(testnets::path3());
        assert!(linalg::max_abs_diff(s.ptdf.matrix(), &DMatrix::identity(2, 2)) < 1e-15);
    }

    #[test]
    fn triangle_lodf() {
        let s = setup(testnets::triangle());
        let col = lodf_single(&s.ptdf, &s.blocks, 0).unwrap();
        assert_eq!(col.lines, vec![1, 2]);
        assert!(close(col.get(2).unwrap(), 1.0));
        assert!(close(col.get(1).unwrap(), -1.0));
    }

    #[test]
    fn four_cycle_lodf_magnitude_one() {
        let s = setup(testnets::four_cycle());
        let col = lodf_single(&s.ptdf, &s.blocks, 0).unwrap();
        assert!(col.values.iter().all(|v| close(v.abs(), 1.0)));
    }

    #[test]
    fn bridge_outage_rejected() {
        let s = setup(testnets::path3());
        assert!(matches!(lodf_single(&s.ptdf, &s.blocks, 0), Err(Error::BridgeOutage(1))));
        let f = OutageSet::new(&s.net, &[0]).unwrap();
        assert!(matches!(lodf_stack(&s.ptdf, &f), Err(Error::BridgeOutage(1))));
    }

    #[test]
    fn stack_columns_are_single_lodfs() {
        let s = setup(testnets::triangle());
        let f = OutageSet::new(&s.net, &[0, 1]).unwrap();
        let k = lodf_stack(&s.ptdf, &f).unwrap();
        assert_eq!(k.shape(), (1, 2));
        let c0 = lodf_single(&s.ptdf, &s.blocks, 0).unwrap();
        let c1 = lodf_single(&s.ptdf, &s.blocks, 1).unwrap();
        assert!(close(k[(0, 0)], c0.get(2).unwrap()));
        assert!(close(k[(0, 1)], c1.get(2).unwrap()));
        assert!(close(k[(0, 0)], 1.0));
    }

    #[test]
    fn singleton_glodf_equals_lodf() {
        let s = setup(testnets::triangle());
        let f = OutageSet::new(&s.net, &[0]).unwrap();
        let r = glodf(&s.bundle, &s.ptdf, &s.net, &f, GlodfMethod::CrossCheck).unwrap();
        assert!(linalg::max_abs_diff(&r.k, &r.k_stack) < 1e-12);
        assert!(r.residuals.unwrap().max() < 1e-12);
    }

    #[test]
    fn cut_set_glodf_rejected() {
        let s = setup(testnets::triangle());
        let f = OutageSet::new(&s.net, &[0, 2]).unwrap();
        assert!(matches!(
            glodf(&s.bundle, &s.ptdf, &s.net, &f, GlodfMethod::PreContingency),
            Err(Error::CutSet(ids)) if ids == vec![1, 3]
        ));
    }

    #[test]
    fn outage_set_validation() {
        let net = testnets::triangle();
        assert!(matches!(OutageSet::new(&net, &[]), Err(Error::InvalidOutage(_))));
        assert!(matches!(OutageSet::new(&net, &[0, 1, 2]), Err(Error::InvalidOutage(_))));
        assert!(matches!(OutageSet::new(&net, &[0, 0]), Err(Error::InvalidOutage(_))));
        assert!(matches!(OutageSet::new(&net, &[3]), Err(Error::UnknownEdge(4))));
    }

    #[test]
    fn triangle_apply_outage() {
        let s = setup(testnets::triangle());
        let p = Injections::new(&s.net, vec![1.0, -1.0, 0.0]).unwrap();
        let f = OutageSet::new(&s.net, &[0]).unwrap();
        let (pre, post) = apply_outage(&s.bundle, &s.net, &p, &f).unwrap();
        assert!(close(post.flows[1], -1.0) && close(post.flows[2], 1.0));
        assert_eq!(post.flows[0], 0.0);
        let r = glodf(&s.bundle, &s.ptdf, &s.net, &f, GlodfMethod::PreContingency).unwrap();
        for (row, &l) in f.surviving().iter().enumerate() {
            assert!(close(post.flows[l], pre.flows[l] + r.k[(row, 0)] * pre.flows[0]));
        }
    }

    #[test]
    fn zero_flow_outage_changes_nothing() {
        let s = setup(testnets::four_cycle());
        // symmetric injection leaves line (1,2) unloaded
        let p = Injections::new(&s.net, vec![0.0, 0.0, 1.0, -1.0]).unwrap();
        let pre = dcpf::solve_flow(&s.bundle, &s.net, &p);
        let unloaded = (0..4).find(|&l| pre.flows[l].abs() < 1e-15);
        if let Some(l) = unloaded {
            let f = OutageSet::new(&s.net, &[l]).unwrap();
            let (pre, post) = apply_outage(&s.bundle, &s.net, &p, &f).unwrap();
            for &k in f.surviving() {
                assert!((pre.flows[k] - post.flows[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn characteristic_injection() {
        let s = setup(testnets::triangle());
        let f = characteristic_injection_flow(&s.bundle, &s.net, 0).unwrap();
        assert!(close(f[0], 2.0 / 3.0));
        let p = setup(testnets::path3());
        let f = characteristic_injection_flow(&p.bundle, &p.net, 0).unwrap();
        assert!(close(f[0], 1.0) && f[1].abs() < 1e-15);
    }

    #[test]
    fn islanding_examples() {
        let s = setup(testnets::triangle());
        assert!(detect_islanding(&s.ptdf, &OutageSet::new(&s.net, &[0, 2]).unwrap()));
        assert!(!detect_islanding(&s.ptdf, &OutageSet::new(&s.net, &[0]).unwrap()));
        let p = setup(testnets::path3());
        assert!(detect_islanding(&p.ptdf, &OutageSet::new(&p.net, &[0]).unwrap()));
    }

    #[test]
    fn method_names_parse() {
        assert_eq!("post_contingency".parse::<GlodfMethod>().unwrap(), GlodfMethod::PostContingency);
        assert_eq!("cross-check".parse::<GlodfMethod>().unwrap(), GlodfMethod::CrossCheck);
        assert!("nope".parse::<GlodfMethod>().is_err());
    }
}
