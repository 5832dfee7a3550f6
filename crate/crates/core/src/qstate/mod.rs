//! Qubit-chain states and the kernels every other module builds on.
//!
//! Site `l` (1-based) is bit `l - 1` of a basis index, so `|x_1 x_2 ... x_N>`
//! has index `sum_l x_l 2^(l-1)`.

mod family;

pub use family::{make_density, make_state, random_density, Family, FamilyParams, FamilySpec, State};

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::{CMatrix, Error, Result, C64};

/// Largest chain any constructor will allocate.
pub const MAX_SITES: usize = 24;

const NORM_TOL: f64 = 1e-12;

/// Single-qubit operator as a row-major 2x2 array.
pub type Op2 = [[C64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn unit(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }
}

/// `c_x X + c_y Y + c_z Z` as a 2x2 matrix.
pub fn bloch_op(c: [f64; 3]) -> Op2 {
    [
        [C64::new(c[2], 0.0), C64::new(c[0], -c[1])],
        [C64::new(c[0], c[1]), C64::new(-c[2], 0.0)],
    ]
}

pub fn pauli(axis: Axis) -> Op2 {
    bloch_op(axis.unit())
}

/// Applies a single-site operator at `site` (1-based).
pub fn apply_site_op(amps: &[C64], site: usize, op: &Op2) -> Vec<C64> {
    let mask = 1usize << (site - 1);
    let mut out = vec![C64::new(0.0, 0.0); amps.len()];
    for x in 0..amps.len() {
        if x & mask != 0 {
            continue;
        }
        let (a0, a1) = (amps[x], amps[x | mask]);
        out[x] = op[0][0] * a0 + op[0][1] * a1;
        out[x | mask] = op[1][0] * a0 + op[1][1] * a1;
    }
    out
}

/// Adds `op` applied at `site` into `out`.
pub fn accumulate_site_op(out: &mut [C64], amps: &[C64], site: usize, op: &Op2) {
    let mask = 1usize << (site - 1);
    for x in 0..amps.len() {
        if x & mask != 0 {
            continue;
        }
        let (a0, a1) = (amps[x], amps[x | mask]);
        out[x] += op[0][0] * a0 + op[0][1] * a1;
        out[x | mask] += op[1][0] * a0 + op[1][1] * a1;
    }
}

/// `<bra| sigma_a(l) |ket>` for every site `l` and axis `a` (x, y, z order).
pub fn pauli_transitions(bra: &[C64], ket: &[C64], n_sites: usize) -> Vec<[C64; 3]> {
    let i = C64::new(0.0, 1.0);
    (1..=n_sites)
        .map(|site| {
            let mask = 1usize << (site - 1);
            let mut acc = [C64::new(0.0, 0.0); 3];
            for x in 0..ket.len() {
                if x & mask != 0 {
                    continue;
                }
                let y = x | mask;
                let (b0, b1) = (bra[x].conj(), bra[y].conj());
                let (k0, k1) = (ket[x], ket[y]);
                acc[0] += b0 * k1 + b1 * k0;
                // Y|0> = i|1>, Y|1> = -i|0>
                acc[1] += b1 * i * k0 - b0 * i * k1;
                acc[2] += b0 * k0 - b1 * k1;
            }
            acc
        })
        .collect()
}

/// Ordered set of sites, each in `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SiteSubset(Vec<usize>);

impl SiteSubset {
    pub fn new(members: impl IntoIterator<Item = usize>, n_sites: usize) -> Result<Self> {
        let mut v: Vec<usize> = members.into_iter().collect();
        v.sort_unstable();
        if let Some(&bad) = v.iter().find(|&&l| l == 0 || l > n_sites) {
            return Err(Error::InvalidSubset(format!("site {bad} outside 1..={n_sites}")));
        }
        if v.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSubset("repeated site".into()));
        }
        Ok(SiteSubset(v))
    }

    pub fn full(n_sites: usize) -> Self {
        SiteSubset((1..=n_sites).collect())
    }

    pub fn empty() -> Self {
        SiteSubset(Vec::new())
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, site: usize) -> bool {
        self.0.binary_search(&site).is_ok()
    }

    pub fn complement(&self, n_sites: usize) -> Self {
        SiteSubset((1..=n_sites).filter(|l| !self.contains(*l)).collect())
    }

    pub fn without(&self, site: usize) -> Self {
        SiteSubset(self.0.iter().copied().filter(|&l| l != site).collect())
    }

    pub fn union(&self, other: &SiteSubset) -> Self {
        let mut v: Vec<usize> = self.0.iter().chain(&other.0).copied().collect();
        v.sort_unstable();
        v.dedup();
        SiteSubset(v)
    }

    pub fn mask(&self) -> usize {
        self.0.iter().fold(0, |m, l| m | 1 << (l - 1))
    }

    /// Compresses the bits of `x` at this subset's sites into a dense index.
    pub fn gather(&self, x: usize) -> usize {
        self.0.iter().enumerate().fold(0, |acc, (k, l)| acc | ((x >> (l - 1)) & 1) << k)
    }

    /// Inverse of [`gather`](Self::gather): spreads a dense index over the subset's bits.
    pub fn scatter(&self, i: usize) -> usize {
        self.0.iter().enumerate().fold(0, |acc, (k, l)| acc | ((i >> k) & 1) << (l - 1))
    }

    fn check_proper(&self, n_sites: usize) -> Result<()> {
        if self.is_empty() || self.len() >= n_sites {
            return Err(Error::InvalidSubset(format!(
                "need a nonempty proper subset of {n_sites} sites, got {:?}",
                self.0
            )));
        }
        if self.0.last().is_some_and(|&l| l > n_sites) {
            return Err(Error::InvalidSubset(format!("subset {:?} exceeds {n_sites} sites", self.0)));
        }
        Ok(())
    }
}

/// Normalized state vector of an `n_sites` qubit chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    n_sites: usize,
    amps: Vec<C64>,
}

impl PureState {
    pub fn new(n_sites: usize, amps: Vec<C64>) -> Result<Self> {
        check_len(n_sites, amps.len())?;
        let norm = linalg::norm(&amps);
        if (norm * norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!("squared norm {} differs from 1", norm * norm)));
        }
        Ok(PureState { n_sites, amps })
    }

    /// Normalizes `amps`; fails on a zero vector.
    pub fn normalized(n_sites: usize, mut amps: Vec<C64>) -> Result<Self> {
        check_len(n_sites, amps.len())?;
        let norm = linalg::norm(&amps);
        if !(norm > 1e-300) || !norm.is_finite() {
            return Err(Error::InvalidState("cannot normalize a zero vector".into()));
        }
        amps.iter_mut().for_each(|z| *z /= norm);
        Ok(PureState { n_sites, amps })
    }

    pub fn basis(n_sites: usize, index: usize) -> Result<Self> {
        check_len(n_sites, 1 << n_sites.min(63))?;
        if index >= 1 << n_sites {
            return Err(Error::InvalidParam(format!("basis index {index} out of range")));
        }
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n_sites];
        amps[index] = C64::new(1.0, 0.0);
        Ok(PureState { n_sites, amps })
    }

    /// Product of single-qubit states `a|0> + b|1>`.
    pub fn product(sites: &[[C64; 2]]) -> Result<Self> {
        let n = sites.len();
        check_len(n, 1 << n.min(63))?;
        let mut amps = vec![C64::new(1.0, 0.0); 1 << n];
        for (x, amp) in amps.iter_mut().enumerate() {
            for (k, s) in sites.iter().enumerate() {
                *amp *= s[(x >> k) & 1];
            }
        }
        PureState::normalized(n, amps)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    /// `self ⊗ other`, with `other` on the sites after `self`'s.
    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        let n = self.n_sites + other.n_sites;
        check_len(n, 1 << n.min(63))?;
        let mut amps = Vec::with_capacity(1 << n);
        for b in &other.amps {
            for a in &self.amps {
                amps.push(a * b);
            }
        }
        Ok(PureState { n_sites: n, amps })
    }

    pub fn inner(&self, other: &PureState) -> C64 {
        linalg::inner(&self.amps, &other.amps)
    }

    /// `|<self|other>|^2`.
    pub fn fidelity(&self, other: &PureState) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn projector(&self) -> MixedState {
        MixedState::from_ensemble_unchecked(self.n_sites, vec![(1.0, self.amps.clone())])
    }

    /// Rows indexed by `part`'s bits, columns by the complement's bits
    /// (both in increasing site order).
    pub fn amplitude_matrix(&self, part: &SiteSubset) -> CMatrix {
        let rest = part.complement(self.n_sites);
        let mut m = CMatrix::zeros(1 << part.len(), 1 << rest.len());
        for (x, a) in self.amps.iter().enumerate() {
            m[(part.gather(x), rest.gather(x))] = *a;
        }
        m
    }

    /// Nonzero-padded spectrum of the marginal on `part`, decreasing,
    /// computed on the smaller side of the cut.
    pub fn marginal_spectrum(&self, part: &SiteSubset) -> Result<Vec<f64>> {
        part.check_proper(self.n_sites)?;
        let m = self.amplitude_matrix(part);
        let gram = if m.nrows() <= m.ncols() { &m * m.adjoint() } else { m.adjoint() * &m };
        Ok(linalg::eigvalsh(&gram))
    }
}

fn check_len(n_sites: usize, len: usize) -> Result<()> {
    if n_sites == 0 {
        return Err(Error::InvalidState("a state needs at least one site".into()));
    }
    if n_sites > MAX_SITES {
        return Err(Error::TooLarge(format!("{n_sites} sites exceeds the dense limit of {MAX_SITES}")));
    }
    if len != 1 << n_sites {
        return Err(Error::Dimension(format!("{len} amplitudes for {n_sites} sites")));
    }
    Ok(())
}

/// Density matrix on an `n_sites` chain.
///
/// When the state was assembled from a known ensemble (a projector or a
/// [`mix`]), the ensemble is kept so low-rank algorithms can skip the
/// eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedState {
    n_sites: usize,
    matrix: CMatrix,
    ensemble: Option<Vec<(f64, Vec<C64>)>>,
}

impl MixedState {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(n_sites: usize, matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension("density matrix must be square".into()));
        }
        check_len(n_sites, matrix.nrows())?;
        let herm = linalg::hermiticity_error(&matrix);
        if herm > 1e-12 {
            return Err(Error::InvalidState(format!("not Hermitian (error {herm:e})")));
        }
        let tr = linalg::trace(&matrix);
        if (tr - C64::new(1.0, 0.0)).norm() > 1e-12 {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = linalg::eigvalsh(&matrix).last().copied().unwrap_or(0.0);
        if min < -1e-10 {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(MixedState { n_sites, matrix, ensemble: None })
    }

    pub(crate) fn from_matrix_unchecked(n_sites: usize, matrix: CMatrix) -> Self {
        MixedState { n_sites, matrix, ensemble: None }
    }

    pub(crate) fn from_ensemble_unchecked(n_sites: usize, ensemble: Vec<(f64, Vec<C64>)>) -> Self {
        let d = 1 << n_sites;
        let mut matrix = CMatrix::zeros(d, d);
        for (w, v) in &ensemble {
            for r in 0..d {
                let vr = v[r] * *w;
                if vr.norm_sqr() == 0.0 {
                    continue;
                }
                for c in 0..d {
                    matrix[(r, c)] += vr * v[c].conj();
                }
            }
        }
        MixedState { n_sites, matrix, ensemble: Some(ensemble) }
    }

    /// `I / 2^n`.
    pub fn maximally_mixed(n_sites: usize) -> Result<Self> {
        check_len(n_sites, 1 << n_sites.min(63))?;
        let d = 1usize << n_sites;
        let w = 1.0 / d as f64;
        let ensemble = (0..d)
            .map(|i| {
                let mut v = vec![C64::new(0.0, 0.0); d];
                v[i] = C64::new(1.0, 0.0);
                (w, v)
            })
            .collect();
        Ok(Self::from_ensemble_unchecked(n_sites, ensemble))
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Nonnegative weights and vectors with `rho = sum_i w_i |v_i><v_i|`.
    /// Falls back to the eigendecomposition when no ensemble was recorded.
    pub fn ensemble(&self) -> Cow<'_, [(f64, Vec<C64>)]> {
        match &self.ensemble {
            Some(e) => Cow::Borrowed(e),
            None => {
                let (vals, vecs) = linalg::eigh(&self.matrix);
                Cow::Owned(
                    vals.iter()
                        .enumerate()
                        .filter(|(_, &v)| v > linalg::EIG_FLOOR)
                        .map(|(k, &v)| (v, vecs.column(k).iter().copied().collect()))
                        .collect(),
                )
            }
        }
    }

    /// Upper bound on the rank: ensemble length if known, else the dimension.
    pub fn rank_hint(&self) -> usize {
        self.ensemble.as_ref().map_or(self.dim(), |e| e.len())
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::eigvalsh(&self.matrix)
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Von Neumann entropy in bits.
    pub fn entropy_bits(&self) -> f64 {
        linalg::entropy_bits(self.eigenvalues())
    }
}

/// Anything a marginal can be taken of.
pub trait Density {
    fn n_sites(&self) -> usize;
    fn reduced_density(&self, keep: &SiteSubset) -> Result<MixedState>;
    fn density_matrix(&self) -> CMatrix;
}

impl Density for PureState {
    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn density_matrix(&self) -> CMatrix {
        let v = nalgebra::DVector::from_column_slice(&self.amps);
        &v * v.adjoint()
    }

    fn reduced_density(&self, keep: &SiteSubset) -> Result<MixedState> {
        keep.check_proper(self.n_sites)?;
        let m = self.amplitude_matrix(keep);
        let rho = &m * m.adjoint();
        Ok(MixedState::from_matrix_unchecked(keep.len(), linalg::hermitian_part(&rho)))
    }
}

impl Density for MixedState {
    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn density_matrix(&self) -> CMatrix {
        self.matrix.clone()
    }

    fn reduced_density(&self, keep: &SiteSubset) -> Result<MixedState> {
        keep.check_proper(self.n_sites)?;
        let rest = keep.complement(self.n_sites);
        let dk = 1usize << keep.len();
        let dr = 1usize << rest.len();
        let keep_idx: Vec<usize> = (0..dk).map(|i| keep.scatter(i)).collect();
        let rest_idx: Vec<usize> = (0..dr).map(|e| rest.scatter(e)).collect();
        let rho = CMatrix::from_fn(dk, dk, |i, j| {
            rest_idx.iter().map(|&e| self.matrix[(keep_idx[i] | e, keep_idx[j] | e)]).sum()
        });
        Ok(MixedState::from_matrix_unchecked(keep.len(), rho))
    }
}

impl Density for State {
    fn n_sites(&self) -> usize {
        match self {
            State::Pure(p) => p.n_sites(),
            State::Mixed(m) => m.n_sites(),
        }
    }

    fn reduced_density(&self, keep: &SiteSubset) -> Result<MixedState> {
        match self {
            State::Pure(p) => p.reduced_density(keep),
            State::Mixed(m) => m.reduced_density(keep),
        }
    }

    fn density_matrix(&self) -> CMatrix {
        match self {
            State::Pure(p) => p.density_matrix(),
            State::Mixed(m) => m.density_matrix(),
        }
    }
}

/// Marginal of `state` on the sites in `keep` (a nonempty proper subset).
pub fn reduced_density<S: Density + ?Sized>(state: &S, keep: &SiteSubset) -> Result<MixedState> {
    state.reduced_density(keep)
}

/// `sum_i w_i |psi_i><psi_i|`; weights must be nonnegative and sum to one.
pub fn mix(states: &[(f64, PureState)]) -> Result<MixedState> {
    let Some((_, first)) = states.first() else {
        return Err(Error::InvalidParam("empty mixture".into()));
    };
    let n = first.n_sites();
    if states.iter().any(|(_, s)| s.n_sites() != n) {
        return Err(Error::Dimension("mixture components have different site counts".into()));
    }
    if states.iter().any(|(w, _)| !(*w >= 0.0)) {
        return Err(Error::InvalidParam("negative mixture weight".into()));
    }
    let total: f64 = states.iter().map(|(w, _)| w).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParam(format!("mixture weights sum to {total}")));
    }
    let ensemble = states
        .iter()
        .filter(|(w, _)| *w > 0.0)
        .map(|(w, s)| (*w, s.amplitudes().to_vec()))
        .collect();
    Ok(MixedState::from_ensemble_unchecked(n, ensemble))
}
