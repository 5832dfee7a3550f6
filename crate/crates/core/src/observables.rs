//! Additive observables, two-point correlations and the index `p`.
//!
//! An additive observable is `A = sum_l a(l)` with `a(l) = c_l . sigma(l)`,
//! `|c_l| <= 1`. Identity parts are dropped since they cancel in every
//! correlation.
//!
//! Maximizing `C(A, A)` over additive `A` is a quadratic problem in the
//! stacked coefficients `c`: `C(A, A) = c^T V c` with `V` the 3N x 3N
//! symmetrized covariance of single-site Pauli operators. Relaxing the
//! per-site constraints to `|c|^2 = N` turns it into a top-eigenvalue problem,
//! which upper-bounds every feasible observable.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::par::Exec;
use crate::qstate::{accumulate_site_op, apply_site_op, bloch_op, pauli, Axis, FamilySpec, PureState};
use crate::scaling::ScalingFit;
use crate::{Error, Result, C64};

const BLOCH_TOL: f64 = 1e-12;

/// Census threshold used when none is given.
pub const DEFAULT_CENSUS_THRESHOLD: f64 = 0.1;

/// Anything that can act on a state vector.
pub trait Observable {
    fn apply(&self, amps: &[C64], n_sites: usize) -> Result<Vec<C64>>;
}

fn check_bloch(c: [f64; 3]) -> Result<()> {
    let n2 = c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
    if !n2.is_finite() || n2 > 1.0 + BLOCH_TOL {
        return Err(Error::InvalidParam(format!("Bloch coefficients {c:?} have norm above 1")));
    }
    Ok(())
}

/// `a(l) = c_x X_l + c_y Y_l + c_z Z_l` on a single site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalObservable {
    site: usize,
    bloch: [f64; 3],
}

impl LocalObservable {
    pub fn new(site: usize, bloch: [f64; 3]) -> Result<Self> {
        if site == 0 {
            return Err(Error::InvalidParam("sites are numbered from 1".into()));
        }
        check_bloch(bloch)?;
        Ok(LocalObservable { site, bloch })
    }

    pub fn pauli(site: usize, axis: Axis) -> Result<Self> {
        Self::new(site, axis.unit())
    }

    pub fn site(&self) -> usize {
        self.site
    }

    pub fn bloch(&self) -> [f64; 3] {
        self.bloch
    }
}

impl Observable for LocalObservable {
    fn apply(&self, amps: &[C64], n_sites: usize) -> Result<Vec<C64>> {
        if self.site > n_sites {
            return Err(Error::Dimension(format!("site {} on a {n_sites}-site state", self.site)));
        }
        Ok(apply_site_op(amps, self.site, &bloch_op(self.bloch)))
    }
}

/// One Bloch triple per site, site `l` at index `l - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveObservable {
    terms: Vec<[f64; 3]>,
}

impl AdditiveObservable {
    pub fn new(terms: Vec<[f64; 3]>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidParam("additive observable without sites".into()));
        }
        terms.iter().try_for_each(|&c| check_bloch(c))?;
        Ok(AdditiveObservable { terms })
    }

    /// The same triple on every site.
    pub fn uniform(n_sites: usize, bloch: [f64; 3]) -> Result<Self> {
        Self::new(vec![bloch; n_sites])
    }

    /// `M_a = sum_l sigma_a(l)`.
    pub fn magnetization(n_sites: usize, axis: Axis) -> Self {
        AdditiveObservable { terms: vec![axis.unit(); n_sites] }
    }

    /// `sum_l (-1)^l sigma_a(l)`.
    pub fn staggered(n_sites: usize, axis: Axis) -> Self {
        let u = axis.unit();
        let terms = (1..=n_sites)
            .map(|l| if l % 2 == 0 { u } else { u.map(|c| -c) })
            .collect();
        AdditiveObservable { terms }
    }

    pub fn zero(n_sites: usize) -> Self {
        AdditiveObservable { terms: vec![[0.0; 3]; n_sites] }
    }

    pub fn n_sites(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[[f64; 3]] {
        &self.terms
    }

    pub fn local(&self, site: usize) -> LocalObservable {
        LocalObservable { site, bloch: self.terms[site - 1] }
    }

    /// Coefficients stacked as `(site, axis)`, the layout of [`FluctuationMatrix`].
    pub fn stacked(&self) -> Vec<f64> {
        self.terms.iter().flatten().copied().collect()
    }
}

/// Applies `sum_l c_l . sigma(l)` without validating the coefficients.
pub(crate) fn apply_coeffs(terms: &[[f64; 3]], amps: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); amps.len()];
    for (k, &c) in terms.iter().enumerate() {
        if c == [0.0; 3] {
            continue;
        }
        accumulate_site_op(&mut out, amps, k + 1, &bloch_op(c));
    }
    out
}

impl Observable for AdditiveObservable {
    fn apply(&self, amps: &[C64], n_sites: usize) -> Result<Vec<C64>> {
        if self.terms.len() != n_sites {
            return Err(Error::Dimension(format!(
                "observable on {} sites, state on {n_sites}",
                self.terms.len()
            )));
        }
        Ok(apply_coeffs(&self.terms, amps))
    }
}

/// Symmetrized connected correlation `Re<XY> - <X><Y>`.
///
/// For `X = Y` this is the variance; for commuting operands it equals the
/// plain correlation.
pub fn correlation<X, Y>(x: &X, y: &Y, psi: &PureState) -> Result<f64>
where
    X: Observable + ?Sized,
    Y: Observable + ?Sized,
{
    let a = psi.amplitudes();
    let xa = x.apply(a, psi.n_sites())?;
    let ya = y.apply(a, psi.n_sites())?;
    let ex = linalg::inner(a, &xa).re;
    let ey = linalg::inner(a, &ya).re;
    Ok(linalg::inner(&xa, &ya).re - ex * ey)
}

/// Symmetrized covariance of all single-site Pauli operators, indexed by
/// `3 * (site - 1) + axis`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationMatrix {
    n_sites: usize,
    entries: DMatrix<f64>,
}

impl FluctuationMatrix {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, site: usize, axis: Axis, other: usize, other_axis: Axis) -> f64 {
        self.entries[(3 * (site - 1) + axis.index(), 3 * (other - 1) + other_axis.index())]
    }

    /// `c^T V c` for stacked Bloch triples.
    pub fn quadratic_form(&self, terms: &[[f64; 3]]) -> f64 {
        let c: Vec<f64> = terms.iter().flatten().copied().collect();
        let v = nalgebra::DVector::from_vec(c);
        v.dot(&(&self.entries * &v))
    }

    /// `C(a(l), a(l'))` for two local terms of the same observable.
    pub fn pair(&self, l: usize, cl: [f64; 3], m: usize, cm: [f64; 3]) -> f64 {
        let mut s = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                s += cl[a] * cm[b] * self.entries[(3 * (l - 1) + a, 3 * (m - 1) + b)];
            }
        }
        s
    }

    /// Top eigenvalue and its unit eigenvector (largest component made positive).
    pub fn top(&self) -> (f64, Vec<[f64; 3]>) {
        let (vals, vecs) = linalg::eigh_real(&self.entries);
        let mut v: Vec<f64> = vecs.column(0).iter().copied().collect();
        let pivot = v
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, x)| if x.abs() > best.1.abs() + 1e-12 { (i, x) } else { best });
        if pivot.1 < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let triples = v.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        (vals[0], triples)
    }
}

pub fn build_fluctuation_matrix(psi: &PureState) -> FluctuationMatrix {
    build_fluctuation_matrix_with(psi, Exec::default())
}

pub fn build_fluctuation_matrix_with(psi: &PureState, exec: Exec) -> FluctuationMatrix {
    let n = psi.n_sites();
    let a = psi.amplitudes();
    let dim = 3 * n;
    let images: Vec<Vec<C64>> =
        exec.map_range(dim, |i| apply_site_op(a, i / 3 + 1, &pauli(Axis::ALL[i % 3])));
    let means: Vec<f64> = images.iter().map(|v| linalg::inner(a, v).re).collect();
    let rows: Vec<Vec<f64>> = exec.map_range(dim, |i| {
        (0..dim)
            .map(|j| {
                if j < i {
                    return 0.0;
                }
                if i / 3 == j / 3 {
                    // same site: Re<s_a s_b> = delta_ab
                    let same = if i == j { 1.0 } else { 0.0 };
                    same - means[i] * means[j]
                } else {
                    linalg::inner(&images[i], &images[j]).re - means[i] * means[j]
                }
            })
            .collect()
    });
    let mut entries = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            entries[(i, j)] = rows[i][j];
            entries[(j, i)] = rows[i][j];
        }
    }
    FluctuationMatrix { n_sites: n, entries }
}

/// Largest additive-observable fluctuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxFluctuation {
    /// `N * e1`, the maximum under `sum_l |c_l|^2 = N`.
    pub value: f64,
    /// Top eigenvalue of the fluctuation matrix.
    pub e1: f64,
    /// Top eigenvector scaled by `sqrt(N)`.
    pub relaxed: Vec<[f64; 3]>,
    /// Per-site normalized projection of `relaxed`.
    pub argmax: AdditiveObservable,
    /// `C(argmax, argmax)`.
    pub feasible_value: f64,
}

pub fn max_fluctuation(psi: &PureState) -> MaxFluctuation {
    max_fluctuation_from(&build_fluctuation_matrix(psi))
}

pub fn max_fluctuation_from(v: &FluctuationMatrix) -> MaxFluctuation {
    let n = v.n_sites();
    let (e1, top) = v.top();
    let scale = (n as f64).sqrt();
    let relaxed: Vec<[f64; 3]> = top.iter().map(|c| c.map(|x| x * scale)).collect();
    let mut projected: Vec<[f64; 3]> = relaxed
        .iter()
        .enumerate()
        .map(|(i, c)| unit_or(*c, || site_block_top(v, i)))
        .collect();
    polish(v, &mut projected);
    let feasible_value = v.quadratic_form(&projected);
    MaxFluctuation {
        value: n as f64 * e1,
        e1,
        relaxed,
        argmax: AdditiveObservable { terms: projected },
        feasible_value,
    }
}

fn unit_or(c: [f64; 3], fallback: impl FnOnce() -> [f64; 3]) -> [f64; 3] {
    let r = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    if r > 1e-9 {
        c.map(|x| x / r)
    } else {
        fallback()
    }
}

/// Top eigenvector of the 3x3 diagonal block of site `i` (0-based).
fn site_block_top(v: &FluctuationMatrix, i: usize) -> [f64; 3] {
    let block = v.entries.view((3 * i, 3 * i), (3, 3)).into_owned();
    let (_, vecs) = linalg::eigh_real(&block);
    [vecs[(0, 0)], vecs[(1, 0)], vecs[(2, 0)]]
}

/// Per-site ascent `c_l <- V_l c / |V_l c|`; monotone because `V` is positive semidefinite.
fn polish(v: &FluctuationMatrix, terms: &mut [[f64; 3]]) {
    let n = terms.len();
    let mut value = v.quadratic_form(terms);
    for _ in 0..200 {
        for l in 0..n {
            let mut g = [0.0; 3];
            for (a, ga) in g.iter_mut().enumerate() {
                for (m, cm) in terms.iter().enumerate() {
                    for (b, cb) in cm.iter().enumerate() {
                        *ga += v.entries[(3 * l + a, 3 * m + b)] * cb;
                    }
                }
            }
            let cur = terms[l];
            terms[l] = unit_or(g, || cur);
        }
        let next = v.quadratic_form(terms);
        if next - value <= 1e-13 * value.abs().max(1.0) {
            break;
        }
        value = next;
    }
}

/// Fits `max_fluctuation` against `N`; the slope is the estimate of `p`.
pub fn estimate_index_p(spec: &FamilySpec, n_grid: &[usize], seed: Option<u64>) -> Result<ScalingFit> {
    estimate_index_p_with(spec, n_grid, seed, Exec::default())
}

pub fn estimate_index_p_with(
    spec: &FamilySpec,
    n_grid: &[usize],
    seed: Option<u64>,
    exec: Exec,
) -> Result<ScalingFit> {
    if n_grid.len() < 3 {
        return Err(Error::InvalidParam("index fits need at least 3 sizes".into()));
    }
    let values = exec
        .map(n_grid, |&n| {
            let psi = crate::qstate::make_state(spec, n, seed)?;
            Ok(max_fluctuation(&psi).value)
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let mut fit = ScalingFit::from_values(spec.family.tag(), "p", n_grid, values)?;
    fit.p_hat = Some(fit.slope);
    Ok(fit)
}

/// Pairs whose local correlation clears the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Census {
    pub threshold: f64,
    /// Lexicographically ordered `(l, l')` with `|C(a(l), a(l'))| >= threshold`.
    pub r1_pairs: Vec<(usize, usize)>,
    pub r1_count: usize,
    pub r2_count: usize,
}

/// Splits `S x S` by whether `|C(a(l), a(l'))|` reaches `threshold`.
pub fn correlation_census(psi: &PureState, a: &AdditiveObservable, threshold: f64) -> Result<Census> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidParam(format!("census threshold must be positive, got {threshold}")));
    }
    if a.n_sites() != psi.n_sites() {
        return Err(Error::Dimension("observable and state differ in size".into()));
    }
    Ok(census_from(&build_fluctuation_matrix(psi), a, threshold))
}

pub(crate) fn census_from(v: &FluctuationMatrix, a: &AdditiveObservable, threshold: f64) -> Census {
    let n = v.n_sites();
    let mut r1_pairs = Vec::new();
    for l in 1..=n {
        for m in 1..=n {
            if v.pair(l, a.terms[l - 1], m, a.terms[m - 1]).abs() >= threshold {
                r1_pairs.push((l, m));
            }
        }
    }
    let r1_count = r1_pairs.len();
    Census { threshold, r1_pairs, r1_count, r2_count: n * n - r1_count }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{make_state, Family};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn state(f: Family, n: usize) -> PureState {
        make_state(&f.into(), n, Some(1)).unwrap()
    }

    /// Dense oracle: C(a(l), a(l')) from explicit operator application.
    fn dense_pair(psi: &PureState, l: usize, cl: [f64; 3], m: usize, cm: [f64; 3]) -> f64 {
        let x = LocalObservable::new(l, cl).unwrap();
        let y = LocalObservable::new(m, cm).unwrap();
        correlation(&x, &y, psi).unwrap()
    }

    #[test]
    fn ghz_magnetization_fluctuation_is_n_squared() {
        let n = 4;
        let mz = AdditiveObservable::magnetization(n, Axis::Z);
        assert_abs_diff_eq!(correlation(&mz, &mz, &state(Family::Ghz, n)).unwrap(), 16.0, epsilon = 1e-12);
        let zero = state(Family::Product, n);
        assert_abs_diff_eq!(correlation(&mz, &mz, &zero).unwrap(), 0.0, epsilon = 1e-12);
        let mx = AdditiveObservable::magnetization(n, Axis::X);
        assert_abs_diff_eq!(correlation(&mx, &mx, &zero).unwrap(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mz = AdditiveObservable::magnetization(3, Axis::Z);
        assert!(matches!(correlation(&mz, &mz, &state(Family::Ghz, 4)), Err(Error::Dimension(_))));
        let far = LocalObservable::pauli(7, Axis::Z).unwrap();
        assert!(matches!(correlation(&far, &far, &state(Family::Ghz, 4)), Err(Error::Dimension(_))));
        assert!(LocalObservable::new(1, [1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn ghz8_fluctuation_spectrum() {
        let v = build_fluctuation_matrix(&state(Family::Ghz, 8));
        for l in 1..=8 {
            for m in 1..=8 {
                assert_abs_diff_eq!(v.get(l, Axis::Z, m, Axis::Z), 1.0, epsilon = 1e-12);
                if l != m {
                    for a in [Axis::X, Axis::Y] {
                        for b in Axis::ALL {
                            assert_abs_diff_eq!(v.get(l, a, m, b), 0.0, epsilon = 1e-12);
                        }
                    }
                }
            }
        }
        let (e1, _) = v.top();
        assert_abs_diff_eq!(e1, 8.0, epsilon = 1e-10);
    }

    #[test]
    fn product_top_eigenvalue_is_one() {
        for n in [2, 5, 8] {
            let (e1, _) = build_fluctuation_matrix(&state(Family::Product, n)).top();
            assert_abs_diff_eq!(e1, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(max_fluctuation(&state(Family::Product, n)).value, n as f64, epsilon = 1e-10);
        }
    }

    #[test]
    fn degenerate_top_space_still_gives_full_feasible_observable() {
        for f in [Family::Product, Family::Cluster] {
            let m = max_fluctuation(&state(f, 6));
            assert_abs_diff_eq!(m.feasible_value, 6.0, epsilon = 1e-9);
            assert!(m.argmax.terms().iter().all(|t| (t[0] * t[0] + t[1] * t[1] + t[2] * t[2] - 1.0).abs() < 1e-9));
        }
    }

    #[test]
    fn fluctuation_matrix_matches_dense_pairs() {
        let psi = state(Family::Random, 5);
        let v = build_fluctuation_matrix(&psi);
        for l in 1..=5 {
            for m in 1..=5 {
                for a in Axis::ALL {
                    for b in Axis::ALL {
                        let dense = dense_pair(&psi, l, a.unit(), m, b.unit());
                        assert_abs_diff_eq!(v.get(l, a, m, b), dense, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn cluster_top_eigenvalue_stays_small() {
        // no two-point correlations beyond single-site variances once the ring has 5+ sites
        for n in [6, 8] {
            let (e1, _) = build_fluctuation_matrix(&state(Family::Cluster, n)).top();
            assert_abs_diff_eq!(e1, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn ghz6_maximum_is_magnetization() {
        let m = max_fluctuation(&state(Family::Ghz, 6));
        assert_abs_diff_eq!(m.value, 36.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.feasible_value, 36.0, epsilon = 1e-9);
        for t in m.argmax.terms() {
            assert_abs_diff_eq!(t[2].abs(), 1.0, epsilon = 1e-9);
        }
        let sign = m.argmax.terms()[0][2].signum();
        assert!(m.argmax.terms().iter().all(|t| t[2].signum() == sign));
    }

    #[test]
    fn w6_maximum_matches_brute_force_eigensolve() {
        // oracle: assemble V entry by entry from dense correlators, diagonalize
        let psi = state(Family::W, 6);
        let mut dense = DMatrix::zeros(18, 18);
        for i in 0..18 {
            for j in 0..18 {
                dense[(i, j)] = dense_pair(&psi, i / 3 + 1, Axis::ALL[i % 3].unit(), j / 3 + 1, Axis::ALL[j % 3].unit());
            }
        }
        let (vals, _) = linalg::eigh_real(&dense);
        let m = max_fluctuation(&psi);
        assert_abs_diff_eq!(m.value, 6.0 * vals[0], epsilon = 1e-9);
        assert!(m.value < 36.0 * 0.5);
    }

    #[test]
    fn census_examples() {
        let z = AdditiveObservable::magnetization(6, Axis::Z);
        let g = correlation_census(&state(Family::Ghz, 6), &z, 0.5).unwrap();
        assert_eq!(g.r1_count, 36);
        assert_eq!(g.r2_count, 0);
        let p = correlation_census(&state(Family::Product, 6), &z, 0.5).unwrap();
        assert_eq!(p.r1_count, 0);
        assert_eq!(p.r2_count, 36);
        assert!(correlation_census(&state(Family::Product, 6), &z, 0.0).is_err());
    }

    #[test]
    fn cluster_census_is_diagonal() {
        // dense oracle: only l = l' survives, <Z_l Z_m> = 0 otherwise
        let psi = state(Family::Cluster, 8);
        let z = AdditiveObservable::magnetization(8, Axis::Z);
        let c = correlation_census(&psi, &z, 0.5).unwrap();
        let mut expected = Vec::new();
        for l in 1..=8 {
            for m in 1..=8 {
                if dense_pair(&psi, l, [0.0, 0.0, 1.0], m, [0.0, 0.0, 1.0]).abs() >= 0.5 {
                    expected.push((l, m));
                }
            }
        }
        assert_eq!(c.r1_pairs, expected);
        assert_eq!(c.r1_count, 8);
    }

    #[test]
    fn index_p_exact_families() {
        let grid = [4, 6, 8, 10, 12];
        let ghz = estimate_index_p(&Family::Ghz.into(), &grid, None).unwrap();
        assert_abs_diff_eq!(ghz.p_hat.unwrap(), 2.0, epsilon = 1e-9);
        let prod = estimate_index_p(&Family::Product.into(), &grid, None).unwrap();
        assert_abs_diff_eq!(prod.p_hat.unwrap(), 1.0, epsilon = 1e-9);
        assert!(estimate_index_p(&Family::Ghz.into(), &[4, 6], None).is_err());
        assert!(estimate_index_p(&Family::Rvb.into(), &[4, 5, 6], None).is_err());
    }

    #[test]
    fn dicke_half_filling_matches_closed_form() {
        // Dicke(N, N/2): M_x variance N(N+2)/2 is the maximum
        for n in [4, 6, 8] {
            let m = max_fluctuation(&state(Family::Dicke, n));
            let nf = n as f64;
            assert_abs_diff_eq!(m.value, nf * (nf + 2.0) / 2.0, epsilon = 1e-9);
        }
    }

    fn random_feasible(n: usize, rng: &mut impl Rng) -> AdditiveObservable {
        let terms = (0..n)
            .map(|_| {
                let v: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                let s = rng.random_range(0.0..1.0) / r.max(1e-12);
                v.map(|x| x * s)
            })
            .collect();
        AdditiveObservable::new(terms).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(30))]

        #[test]
        fn quadratic_form_matches_correlation(n in 2usize..=8, seed in any::<u64>()) {
            let psi = make_state(&Family::Random.into(), n, Some(seed)).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = random_feasible(n, &mut rng);
            let v = build_fluctuation_matrix(&psi);
            let direct = correlation(&a, &a, &psi).unwrap();
            prop_assert!((v.quadratic_form(a.terms()) - direct).abs() < 1e-9);
            prop_assert!(direct <= max_fluctuation_from(&v).value + 1e-9);
        }
    }
}
