//! Tensor factorization into inseparable blocks, the sets `S1(l)` and
//! `S2(l)`, the site count `E_B` and the inequality checks built on the
//! Schmidt cut at a site.

use serde::{Deserialize, Serialize};

use crate::bipartite::{check_site, schmidt_at_site, SchmidtCut};
use crate::linalg;
use crate::par;
use crate::qstate::{apply_site_op, Axis, Op2, PureState, SiteSubset};
use crate::{Error, Result, C64};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_EPS: f64 = 0.1;
pub const DEFAULT_DELTA: f64 = 0.5;
/// Largest chain accepted by the exact block search.
pub const MAX_FACTOR_SITES: usize = 16;
/// Mutual information (bits) above which two sites are joined in the prefilter graph.
pub const MI_EDGE: f64 = 1e-10;

/// Largest eigenvalue of the marginal on `part`.
fn top_marginal_eigenvalue(psi: &PureState, part: &SiteSubset) -> Result<f64> {
    Ok(psi.marginal_spectrum(part)?.first().copied().unwrap_or(0.0))
}

/// Whether the marginal on `part` is pure to within `tol`.
pub fn is_product_across(psi: &PureState, part: &SiteSubset, tol: f64) -> Result<bool> {
    Ok(top_marginal_eigenvalue(psi, part)? >= 1.0 - tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockDecomposition {
    pub blocks: Vec<SiteSubset>,
    /// Factor state of each block, sites in increasing order.
    pub factors: Vec<PureState>,
    /// Set when a purity test landed within two decades of `tol`.
    pub borderline: bool,
}

impl BlockDecomposition {
    /// Tensor product of the factors laid out on their blocks.
    pub fn reconstruct(&self) -> Vec<C64> {
        let n: usize = self.blocks.iter().map(|b| b.len()).sum();
        (0..1usize << n)
            .map(|x| {
                self.blocks
                    .iter()
                    .zip(&self.factors)
                    .map(|(b, f)| f.amplitudes()[b.gather(x)])
                    .product()
            })
            .collect()
    }

    pub fn block_of(&self, site: usize) -> Option<&SiteSubset> {
        self.blocks.iter().find(|b| b.contains(site))
    }

    /// Blocks as lists of sites.
    pub fn partition(&self) -> Vec<Vec<usize>> {
        self.blocks.iter().map(|b| b.members().to_vec()).collect()
    }
}

fn site_entropy(psi: &PureState, l: usize) -> f64 {
    let (a, b, d) = crate::bipartite::site_marginal(psi.amplitudes(), l);
    let (vals, _) = linalg::eigh2(a, b, d);
    linalg::entropy_bits(vals)
}

/// Connected components of the pairwise mutual-information graph.
fn mi_components(psi: &PureState) -> Result<Vec<SiteSubset>> {
    let n = psi.n_sites();
    let single: Vec<f64> = (1..=n).map(|l| site_entropy(psi, l)).collect();
    let pairs: Vec<(usize, usize)> = (1..=n).flat_map(|l| (l + 1..=n).map(move |m| (l, m))).collect();
    let edges = if n == 2 {
        vec![single[0] > MI_EDGE]
    } else {
        par::map(&pairs, |&(l, m)| -> Result<bool> {
            let joint = linalg::entropy_bits(psi.marginal_spectrum(&SiteSubset::new([l, m], n)?)?);
            Ok(single[l - 1] + single[m - 1] - joint > MI_EDGE)
        })
        .into_iter()
        .collect::<Result<Vec<bool>>>()?
    };
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for (&(l, m), &e) in pairs.iter().zip(&edges) {
        if e {
            let (a, b) = (find(&mut parent, l - 1), find(&mut parent, m - 1));
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_index = vec![usize::MAX; n];
    for l in 1..=n {
        let r = find(&mut parent, l - 1);
        if root_index[r] == usize::MAX {
            root_index[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_index[r]].push(l);
    }
    groups.into_iter().map(|g| SiteSubset::new(g, n)).collect()
}

fn factor_on(psi: &PureState, block: &SiteSubset) -> Result<PureState> {
    let n = psi.n_sites();
    if block.len() == n {
        return Ok(psi.clone());
    }
    let m = psi.amplitude_matrix(block);
    let gram = &m * m.adjoint();
    let (_, vecs) = linalg::eigh(&gram);
    let mut v: Vec<C64> = vecs.column(0).iter().copied().collect();
    linalg::fix_phase(&mut v);
    PureState::normalized(block.len(), v)
}

/// Splits `psi` into inseparable factors. Components of the mutual
/// information graph with pure marginals are blocks directly; the rest are
/// merged by searching unions of components for the smallest pure marginal.
pub fn finest_factorization(psi: &PureState, tol: f64) -> Result<BlockDecomposition> {
    let n = psi.n_sites();
    if n > MAX_FACTOR_SITES {
        return Err(Error::TooLarge(format!("exact factorization is limited to {MAX_FACTOR_SITES} sites, got {n}")));
    }
    if n == 1 {
        return Ok(BlockDecomposition { blocks: vec![SiteSubset::full(1)], factors: vec![psi.clone()], borderline: false });
    }
    let mut borderline = false;
    let mut check = |lam: f64| {
        let gap = 1.0 - lam;
        if gap > 0.01 * tol && gap < 100.0 * tol {
            borderline = true;
        }
        gap <= tol
    };

    let comps = mi_components(psi)?;
    let mut blocks = Vec::new();
    let mut pending = Vec::new();
    for c in comps {
        if c.len() == n {
            pending.push(c);
            continue;
        }
        if check(top_marginal_eigenvalue(psi, &c)?) {
            blocks.push(c);
        } else {
            pending.push(c);
        }
    }

    while !pending.is_empty() {
        let total: usize = pending.iter().map(|c| c.len()).sum();
        if pending.len() == 1 || total < 2 {
            blocks.push(pending.iter().fold(SiteSubset::empty(), |a, c| a.union(c)));
            break;
        }
        let k = pending.len();
        let mut found = None;
        // candidate unions by site count, then by component mask
        let mut masks: Vec<(usize, usize)> = (1usize..(1 << k) - 1)
            .map(|mask| (mask, (0..k).filter(|i| mask >> i & 1 == 1).map(|i| pending[i].len()).sum::<usize>()))
            .filter(|&(_, size)| 2 * size <= total)
            .map(|(mask, size)| (size, mask))
            .collect();
        masks.sort_unstable();
        let mut idx = 0;
        while idx < masks.len() && found.is_none() {
            let size = masks[idx].0;
            let end = masks[idx..].iter().position(|m| m.0 != size).map_or(masks.len(), |p| idx + p);
            let level: Vec<SiteSubset> = masks[idx..end]
                .iter()
                .map(|&(_, mask)| {
                    (0..k).filter(|i| mask >> i & 1 == 1).fold(SiteSubset::empty(), |a, i| a.union(&pending[i]))
                })
                .collect();
            let tops = par::map(&level, |u| top_marginal_eigenvalue(psi, u));
            for (u, top) in level.into_iter().zip(tops) {
                if check(top?) {
                    found = Some(u);
                    break;
                }
            }
            idx = end;
        }
        match found {
            Some(u) => {
                pending.retain(|c| !c.members().iter().all(|l| u.contains(*l)));
                blocks.push(u);
            }
            None => {
                blocks.push(pending.iter().fold(SiteSubset::empty(), |a, c| a.union(c)));
                break;
            }
        }
    }

    blocks.sort();
    let factors = blocks.iter().map(|b| factor_on(psi, b)).collect::<Result<Vec<_>>>()?;
    Ok(BlockDecomposition { blocks, factors, borderline })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteSplit {
    /// Sites entangled with `l`: its inseparable block minus `l`.
    pub s1: SiteSubset,
    /// The remaining sites, carrying the common factor of the `eta` vectors.
    pub s2: SiteSubset,
    pub cut: SchmidtCut,
}

fn split_from(decomp: &BlockDecomposition, cut: SchmidtCut, n: usize, tol: f64) -> SiteSplit {
    let l = cut.site;
    let s1 = if cut.lambda1 <= tol {
        SiteSubset::empty()
    } else {
        decomp.block_of(l).map_or(SiteSubset::empty(), |b| b.without(l))
    };
    let s2 = s1.union(&SiteSubset::new([l], n).expect("valid site")).complement(n);
    SiteSplit { s1, s2, cut }
}

/// `S1(l)`, `S2(l)` and the Schmidt cut at `l`. When `lambda1 <= tol`, `S1` is empty.
pub fn s1_at_site(psi: &PureState, l: usize, tol: f64) -> Result<SiteSplit> {
    check_site(psi.n_sites(), l)?;
    let cut = schmidt_at_site(psi, l)?;
    let decomp = finest_factorization(psi, tol)?;
    Ok(split_from(&decomp, cut, psi.n_sites(), tol))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteEntry {
    pub l: usize,
    pub entropy_bits: f64,
    pub s1_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EBReport {
    pub eps: f64,
    pub delta: f64,
    pub per_site: Vec<SiteEntry>,
    pub eb_count: usize,
}

/// Counts sites with `E(l) >= eps` and `|S1(l)| >= delta N`.
pub fn eb_report(psi: &PureState, eps: f64, delta: f64, tol: f64) -> Result<EBReport> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParam(format!("eps must lie in (0, 1], got {eps}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParam(format!("delta must lie in (0, 1), got {delta}")));
    }
    let n = psi.n_sites();
    let decomp = finest_factorization(psi, tol)?;
    let sites: Vec<usize> = (1..=n).collect();
    let per_site = par::map(&sites, |&l| -> Result<SiteEntry> {
        let cut = schmidt_at_site(psi, l)?;
        let entropy_bits = if cut.lambda1 <= tol { 0.0 } else { cut.entropy_bits() };
        let split = split_from(&decomp, cut, n, tol);
        Ok(SiteEntry { l, entropy_bits, s1_size: split.s1.len() })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let eb_count = per_site
        .iter()
        .filter(|e| e.entropy_bits >= eps && e.s1_size as f64 >= delta * n as f64)
        .count();
    Ok(EBReport { eps, delta, per_site, eb_count })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InequalityKind {
    /// `|C(t_a(l), t_b(l'))| <= sqrt(4 lambda0 lambda1)`
    Correlation,
    /// `2 lambda1 <= E(l)`
    Entropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityRow {
    pub kind: InequalityKind,
    pub l_prime: Option<usize>,
    pub alpha: Option<Axis>,
    pub beta: Option<Axis>,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixReport {
    pub site: usize,
    pub lambda0: f64,
    pub lambda1: f64,
    pub rows: Vec<InequalityRow>,
}

impl AppendixReport {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }

    pub fn worst_margin(&self) -> f64 {
        self.rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min)
    }
}

/// Pauli-like operators in the basis `{xi0, xi1}`.
fn t_ops(xi0: &[C64; 2], xi1: &[C64; 2]) -> [Op2; 3] {
    let outer = |a: &[C64; 2], b: &[C64; 2], c: C64| -> Op2 {
        [[c * a[0] * b[0].conj(), c * a[0] * b[1].conj()], [c * a[1] * b[0].conj(), c * a[1] * b[1].conj()]]
    };
    let add = |x: Op2, y: Op2| -> Op2 { [[x[0][0] + y[0][0], x[0][1] + y[0][1]], [x[1][0] + y[1][0], x[1][1] + y[1][1]]] };
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    [
        add(outer(xi0, xi1, one), outer(xi1, xi0, one)),
        add(outer(xi0, xi1, -i), outer(xi1, xi0, i)),
        add(outer(xi0, xi0, one), outer(xi1, xi1, -one)),
    ]
}

const INEQUALITY_SLACK: f64 = 1e-9;

fn row(kind: InequalityKind, l_prime: Option<usize>, ab: Option<(Axis, Axis)>, lhs: f64, rhs: f64) -> InequalityRow {
    InequalityRow {
        kind,
        l_prime,
        alpha: ab.map(|p| p.0),
        beta: ab.map(|p| p.1),
        lhs,
        rhs,
        margin: rhs - lhs,
        holds: lhs <= rhs + INEQUALITY_SLACK,
    }
}

/// Builds `t` operators from the Schmidt bases of `l` and of every other
/// site in its block, and checks `|C(t_a(l), t_b(l'))| <= sqrt(4 lambda0 lambda1)`
/// for all of them together with `E(l) >= 2 lambda1`.
pub fn appendix_inequalities(psi: &PureState, l: usize) -> Result<AppendixReport> {
    let n = psi.n_sites();
    check_site(n, l)?;
    let decomp = finest_factorization(psi, DEFAULT_TOL)?;
    let block = decomp.block_of(l).cloned().unwrap_or_else(SiteSubset::empty);
    if block.len() < 2 {
        return Err(Error::Precondition(format!("site {l} is not in an entangled block")));
    }
    let cut = schmidt_at_site(psi, l)?;
    let amps = psi.amplitudes();
    let t_l = t_ops(&cut.xi0, &cut.xi1);
    let left: Vec<Vec<C64>> = t_l.iter().map(|t| apply_site_op(amps, l, t)).collect();
    let mean = |v: &[C64]| linalg::inner(amps, v).re;
    let bound = (4.0 * cut.lambda0 * cut.lambda1).sqrt();
    let mut rows = Vec::new();
    for &m in block.members().iter().filter(|&&m| m != l) {
        let other = schmidt_at_site(psi, m)?;
        let t_m = t_ops(&other.xi0, &other.xi1);
        let right: Vec<Vec<C64>> = t_m.iter().map(|t| apply_site_op(amps, m, t)).collect();
        for (a, ax) in Axis::ALL.iter().enumerate() {
            for (b, bx) in Axis::ALL.iter().enumerate() {
                let c = linalg::inner(&left[a], &right[b]).re - mean(&left[a]) * mean(&right[b]);
                rows.push(row(InequalityKind::Correlation, Some(m), Some((*ax, *bx)), c.abs(), bound));
            }
        }
    }
    rows.push(row(InequalityKind::Entropy, None, None, 2.0 * cut.lambda1, cut.entropy_bits()));
    Ok(AppendixReport { site: l, lambda0: cut.lambda0, lambda1: cut.lambda1, rows })
}
