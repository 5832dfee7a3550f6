//! Built-in state families.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{mix, MixedState, PureState, MAX_SITES};
use crate::{CMatrix, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Product,
    Ghz,
    Dicke,
    W,
    Cluster,
    Rvb,
    Random,
    GhzMixture,
    MaximallyMixed,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::Product,
        Family::Ghz,
        Family::Dicke,
        Family::W,
        Family::Cluster,
        Family::Rvb,
        Family::Random,
        Family::GhzMixture,
        Family::MaximallyMixed,
    ];

    /// Deterministic pure families (everything except `random` and the mixed ones).
    pub const PURE_BUILTIN: [Family; 6] =
        [Family::Product, Family::Ghz, Family::Dicke, Family::W, Family::Cluster, Family::Rvb];

    pub fn tag(self) -> &'static str {
        match self {
            Family::Product => "product",
            Family::Ghz => "ghz",
            Family::Dicke => "dicke",
            Family::W => "w",
            Family::Cluster => "cluster",
            Family::Rvb => "rvb",
            Family::Random => "random",
            Family::GhzMixture => "ghz-mixture",
            Family::MaximallyMixed => "maximally-mixed",
        }
    }

    pub fn is_mixed(self) -> bool {
        matches!(self, Family::GhzMixture | Family::MaximallyMixed)
    }

    /// Invariant under every permutation of sites.
    pub fn is_permutation_symmetric(self) -> bool {
        matches!(self, Family::Ghz | Family::Dicke | Family::W | Family::GhzMixture | Family::MaximallyMixed)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.tag() == s)
            .ok_or_else(|| Error::UnknownFamily(s.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    /// Dicke excitation count; defaults to `n / 2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Product-state Bloch vectors, one per site or a single vector for all sites.
    /// Defaults to `|0>` everywhere.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bloch: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub family: Family,
    #[serde(default)]
    pub params: FamilyParams,
}

impl FamilySpec {
    pub fn new(family: Family) -> Self {
        FamilySpec { family, params: FamilyParams::default() }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.params.k = Some(k);
        self
    }

    pub fn with_bloch(mut self, bloch: Vec<[f64; 3]>) -> Self {
        self.params.bloch = Some(bloch);
        self
    }

    pub fn build(&self, n: usize, seed: Option<u64>) -> Result<State> {
        if self.family.is_mixed() {
            make_density(self, n, seed).map(State::Mixed)
        } else {
            make_state(self, n, seed).map(State::Pure)
        }
    }
}

impl From<Family> for FamilySpec {
    fn from(f: Family) -> Self {
        FamilySpec::new(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Pure(PureState),
    Mixed(MixedState),
}

impl State {
    pub fn as_pure(&self) -> Option<&PureState> {
        match self {
            State::Pure(p) => Some(p),
            State::Mixed(_) => None,
        }
    }

    pub fn to_mixed(&self) -> MixedState {
        match self {
            State::Pure(p) => p.projector(),
            State::Mixed(m) => m.clone(),
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParam(format!("chains need at least 2 sites, got {n}")));
    }
    if n > MAX_SITES {
        return Err(Error::TooLarge(format!("{n} sites exceeds the dense limit of {MAX_SITES}")));
    }
    Ok(())
}

/// Builds a pure member of a state family. `seed` is required for `random`
/// and ignored otherwise.
pub fn make_state(spec: &FamilySpec, n: usize, seed: Option<u64>) -> Result<PureState> {
    check_n(n)?;
    let d = 1usize << n;
    let real = |f: &dyn Fn(usize) -> f64| -> Vec<C64> { (0..d).map(|x| C64::new(f(x), 0.0)).collect() };
    match spec.family {
        Family::Product => {
            let bloch = match &spec.params.bloch {
                None => vec![[0.0, 0.0, 1.0]; n],
                Some(b) if b.len() == 1 => vec![b[0]; n],
                Some(b) if b.len() == n => b.clone(),
                Some(b) => {
                    return Err(Error::InvalidParam(format!("{} Bloch vectors for {n} sites", b.len())));
                }
            };
            let sites = bloch.iter().map(|&b| qubit_from_bloch(b)).collect::<Result<Vec<_>>>()?;
            PureState::product(&sites)
        }
        Family::Ghz => {
            let h = std::f64::consts::FRAC_1_SQRT_2;
            PureState::new(n, real(&|x| if x == 0 || x == d - 1 { h } else { 0.0 }))
        }
        Family::Dicke | Family::W => {
            let k = if spec.family == Family::W { 1 } else { spec.params.k.unwrap_or(n / 2) };
            if k > n {
                return Err(Error::InvalidParam(format!("excitation count {k} exceeds {n} sites")));
            }
            PureState::normalized(n, real(&|x| if x.count_ones() as usize == k { 1.0 } else { 0.0 }))
        }
        Family::Cluster => {
            let edges = ring_edges(n);
            PureState::normalized(
                n,
                real(&|x| {
                    let parity = edges.iter().filter(|&&(a, b)| (x >> (a - 1)) & (x >> (b - 1)) & 1 == 1).count();
                    if parity % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                }),
            )
        }
        Family::Rvb => {
            if n % 2 != 0 || n < 4 {
                return Err(Error::InvalidParam(format!("rvb needs an even ring of at least 4 sites, got {n}")));
            }
            let first: Vec<(usize, usize)> = (0..n / 2).map(|k| (2 * k + 1, 2 * k + 2)).collect();
            let second: Vec<(usize, usize)> = (0..n / 2).map(|k| (2 * k + 2, (2 * k + 2) % n + 1)).collect();
            PureState::normalized(n, real(&|x| singlet_cover(x, &first) + singlet_cover(x, &second)))
        }
        Family::Random => {
            let seed = seed.ok_or_else(|| Error::InvalidParam("random states need a seed".into()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let amps = (0..d)
                .map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
                .collect();
            PureState::normalized(n, amps)
        }
        Family::GhzMixture | Family::MaximallyMixed => {
            Err(Error::InvalidParam(format!("`{}` is a mixed family", spec.family)))
        }
    }
}

/// Builds a mixed family member. Pure families come back as projectors.
pub fn make_density(spec: &FamilySpec, n: usize, seed: Option<u64>) -> Result<MixedState> {
    check_n(n)?;
    match spec.family {
        Family::GhzMixture => mix(&[(0.5, PureState::basis(n, 0)?), (0.5, PureState::basis(n, (1 << n) - 1)?)]),
        Family::MaximallyMixed => MixedState::maximally_mixed(n),
        _ => make_state(spec, n, seed).map(|p| p.projector()),
    }
}

/// Random density matrix `G G^† / tr` with `G` a `2^n x rank` complex Gaussian matrix.
pub fn random_density(n: usize, rank: usize, rng: &mut impl rand::Rng) -> Result<MixedState> {
    if n == 0 || n > MAX_SITES {
        return Err(Error::InvalidParam(format!("bad site count {n}")));
    }
    let d = 1usize << n;
    let rank = rank.clamp(1, d);
    let g = CMatrix::from_fn(d, rank, |_, _| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)));
    let mut rho = &g * g.adjoint();
    let tr: f64 = rho.diagonal().iter().map(|z| z.re).sum();
    rho /= C64::new(tr, 0.0);
    Ok(MixedState::from_matrix_unchecked(n, crate::linalg::hermitian_part(&rho)))
}

/// Nearest-neighbour edges of a periodic ring (a single edge for two sites).
pub(crate) fn ring_edges(n: usize) -> Vec<(usize, usize)> {
    if n == 2 {
        return vec![(1, 2)];
    }
    (1..=n).map(|l| (l, l % n + 1)).collect()
}

/// Amplitude of `x` in the product of singlets `(|0_i 1_j> - |1_i 0_j>)/sqrt2`.
fn singlet_cover(x: usize, pairs: &[(usize, usize)]) -> f64 {
    let mut amp = 1.0;
    for &(i, j) in pairs {
        let (a, b) = ((x >> (i - 1)) & 1, (x >> (j - 1)) & 1);
        amp *= match (a, b) {
            (0, 1) => std::f64::consts::FRAC_1_SQRT_2,
            (1, 0) => -std::f64::consts::FRAC_1_SQRT_2,
            _ => return 0.0,
        };
    }
    amp
}

/// Qubit with unit Bloch vector `b`: `cos(t/2)|0> + e^{i f} sin(t/2)|1>`.
pub(crate) fn qubit_from_bloch(b: [f64; 3]) -> Result<[C64; 2]> {
    let r = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    if (r - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParam(format!("Bloch vector {b:?} is not a unit vector")));
    }
    let theta = (b[2] / r).clamp(-1.0, 1.0).acos();
    let phi = b[1].atan2(b[0]);
    Ok([
        C64::new((theta / 2.0).cos(), 0.0),
        C64::from_polar((theta / 2.0).sin(), phi),
    ])
}
