//! Bipartite measures: Schmidt cuts at a site, cut entropies, concurrence,
//! the Meyer-Wallach measure, two-point correlations and a brute-force
//! localizable-entanglement search.

use std::f64::consts::PI;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::par;
use crate::qstate::{apply_site_op, pauli, reduced_density, Axis, Density, Op2, PureState, SiteSubset};
use crate::{CMatrix, Error, Result, C64};

/// Largest chain accepted by [`localizable_entanglement_bruteforce`].
pub const MAX_LE_SITES: usize = 6;

pub(crate) fn check_site(n_sites: usize, l: usize) -> Result<()> {
    if l == 0 || l > n_sites {
        return Err(Error::InvalidSubset(format!("site {l} outside 1..={n_sites}")));
    }
    Ok(())
}

pub(crate) fn check_pair(n_sites: usize, l: usize, m: usize) -> Result<()> {
    check_site(n_sites, l)?;
    check_site(n_sites, m)?;
    if l == m {
        return Err(Error::InvalidSubset(format!("pair ({l}, {m}) repeats a site")));
    }
    Ok(())
}

/// `(<xi| ⊗ 1) psi` on the sites other than `l`, in increasing site order.
pub(crate) fn project_site(amps: &[C64], n_sites: usize, l: usize, xi: &[C64; 2]) -> Vec<C64> {
    let rest = SiteSubset::full(n_sites).without(l);
    let bit = 1usize << (l - 1);
    (0..1usize << (n_sites - 1))
        .map(|y| {
            let x = rest.scatter(y);
            xi[0].conj() * amps[x] + xi[1].conj() * amps[x | bit]
        })
        .collect()
}

/// Single-site marginal `[[rho00, rho01], [rho10, rho11]]` as `(rho00, rho01, rho11)`.
pub(crate) fn site_marginal(amps: &[C64], l: usize) -> (f64, C64, f64) {
    let bit = 1usize << (l - 1);
    let (mut a, mut b, mut d) = (0.0, C64::new(0.0, 0.0), 0.0);
    for x in 0..amps.len() {
        if x & bit != 0 {
            continue;
        }
        let (p0, p1) = (amps[x], amps[x | bit]);
        a += p0.norm_sqr();
        d += p1.norm_sqr();
        b += p0 * p1.conj();
    }
    (a, b, d)
}

/// `psi = sqrt(lambda0) |xi0>|eta0> + sqrt(lambda1) |xi1>|eta1>` across `{l}`
/// and the rest. The `eta` vectors live on the other sites in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct SchmidtCut {
    pub site: usize,
    pub lambda0: f64,
    pub lambda1: f64,
    pub xi0: [C64; 2],
    pub xi1: [C64; 2],
    pub eta0: Vec<C64>,
    pub eta1: Vec<C64>,
}

impl SchmidtCut {
    /// Single-site entropy `E(l)` in bits.
    pub fn entropy_bits(&self) -> f64 {
        linalg::entropy_bits([self.lambda0, self.lambda1])
    }

    /// Rebuilds the state from the decomposition.
    pub fn reconstruct(&self) -> Vec<C64> {
        let n = (self.eta0.len().trailing_zeros() + 1) as usize;
        let rest = SiteSubset::full(n).without(self.site);
        let bit = 1usize << (self.site - 1);
        let (s0, s1) = (self.lambda0.sqrt(), self.lambda1.sqrt());
        let mut out = vec![C64::new(0.0, 0.0); 1 << n];
        for y in 0..self.eta0.len() {
            let x = rest.scatter(y);
            for b in 0..2 {
                let idx = if b == 1 { x | bit } else { x };
                out[idx] = self.xi0[b] * self.eta0[y] * s0 + self.xi1[b] * self.eta1[y] * s1;
            }
        }
        out
    }
}

/// Schmidt decomposition between site `l` and the other sites. Degenerate
/// marginals use the computational basis; each `xi` has its first nonzero
/// entry real and positive.
pub fn schmidt_at_site(psi: &PureState, l: usize) -> Result<SchmidtCut> {
    let n = psi.n_sites();
    check_site(n, l)?;
    let amps = psi.amplitudes();
    let (a, b, d) = site_marginal(amps, l);
    let (vals, mut vecs) = linalg::eigh2(a, b, d);
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    if vals[0] - vals[1] <= 1e-12 {
        vecs = [[one, zero], [zero, one]];
    }
    for v in vecs.iter_mut() {
        linalg::fix_phase(v);
    }
    let lambda0 = vals[0].clamp(0.0, 1.0);
    let lambda1 = vals[1].clamp(0.0, 1.0);
    let mut eta0 = project_site(amps, n, l, &vecs[0]);
    let norm0 = linalg::norm(&eta0);
    eta0.iter_mut().for_each(|z| *z /= norm0);
    let mut eta1 = project_site(amps, n, l, &vecs[1]);
    let norm1 = linalg::norm(&eta1);
    if norm1 > 1e-7 {
        eta1.iter_mut().for_each(|z| *z /= norm1);
    } else {
        eta1 = orthogonal_unit(&eta0);
    }
    Ok(SchmidtCut { site: l, lambda0, lambda1, xi0: vecs[0], xi1: vecs[1], eta0, eta1 })
}

fn orthogonal_unit(v: &[C64]) -> Vec<C64> {
    let j = (0..v.len()).min_by(|&a, &b| v[a].norm().total_cmp(&v[b].norm())).unwrap_or(0);
    let mut e = vec![C64::new(0.0, 0.0); v.len()];
    e[j] = C64::new(1.0, 0.0);
    if v.len() == 1 {
        return e;
    }
    let overlap = linalg::inner(v, &e);
    e.iter_mut().zip(v).for_each(|(x, y)| *x -= overlap * y);
    let norm = linalg::norm(&e);
    e.iter_mut().for_each(|x| *x /= norm);
    e
}

/// Entanglement entropy in bits across `part` and its complement.
pub fn cut_entropy(psi: &PureState, part: &SiteSubset) -> Result<f64> {
    Ok(linalg::entropy_bits(psi.marginal_spectrum(part)?))
}

fn yy() -> CMatrix {
    let mut m = CMatrix::zeros(4, 4);
    for (x, s) in [(0usize, -1.0), (1, 1.0), (2, 1.0), (3, -1.0)] {
        m[(x, 3 - x)] = C64::new(s, 0.0);
    }
    m
}

/// Wootters concurrence of the two-site marginal on `(l, m)`.
pub fn concurrence<S: Density + ?Sized>(state: &S, l: usize, m: usize) -> Result<f64> {
    check_pair(state.n_sites(), l, m)?;
    let rho = if state.n_sites() == 2 {
        state.density_matrix()
    } else {
        reduced_density(state, &SiteSubset::new([l, m], state.n_sites())?)?.matrix().clone()
    };
    Ok(wootters(&rho))
}

/// The `mu_i` are the singular values of `tau_ij = w_i^T (Y ⊗ Y) w_j` for
/// subnormalized eigenvectors `w_i = sqrt(p_i) v_i` of `rho`.
pub(crate) fn wootters(rho: &CMatrix) -> f64 {
    let f = yy();
    let (vals, vecs) = linalg::eigh(rho);
    let w: Vec<_> = vals
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 1e-14)
        .map(|(k, &p)| vecs.column(k).scale(p.sqrt()))
        .collect();
    if w.is_empty() {
        return 0.0;
    }
    let tau = CMatrix::from_fn(w.len(), w.len(), |i, j| (w[i].transpose() * &f * &w[j])[(0, 0)]);
    let mut mu: Vec<f64> = tau.singular_values().iter().copied().collect();
    mu.resize(4, 0.0);
    mu.sort_by(|a, b| b.total_cmp(a));
    (mu[0] - mu[1] - mu[2] - mu[3]).clamp(0.0, 1.0)
}

/// `2 (1 - mean_l Tr rho_l^2)`.
pub fn meyer_wallach(psi: &PureState) -> f64 {
    let n = psi.n_sites();
    let mean: f64 = (1..=n)
        .map(|l| {
            let (a, b, d) = site_marginal(psi.amplitudes(), l);
            a * a + d * d + 2.0 * b.norm_sqr()
        })
        .sum::<f64>()
        / n as f64;
    (2.0 * (1.0 - mean)).clamp(0.0, 1.0)
}

/// Connected correlations `Q_ab = <s_a(l) s_b(m)> - <s_a(l)><s_b(m)>`.
pub fn pair_correlation_matrix(psi: &PureState, l: usize, m: usize) -> Result<Matrix3<f64>> {
    check_pair(psi.n_sites(), l, m)?;
    let amps = psi.amplitudes();
    let left: Vec<Vec<C64>> = Axis::ALL.iter().map(|&a| apply_site_op(amps, l, &pauli(a))).collect();
    let right: Vec<Vec<C64>> = Axis::ALL.iter().map(|&a| apply_site_op(amps, m, &pauli(a))).collect();
    let ml: Vec<f64> = left.iter().map(|v| linalg::inner(amps, v).re).collect();
    let mr: Vec<f64> = right.iter().map(|v| linalg::inner(amps, v).re).collect();
    Ok(Matrix3::from_fn(|a, b| linalg::inner(&left[a], &right[b]).re - ml[a] * mr[b]))
}

/// Largest singular value of the connected correlation matrix of `(l, m)`.
pub fn max_pair_correlation(psi: &PureState, l: usize, m: usize) -> Result<f64> {
    let q = pair_correlation_matrix(psi, l, m)?;
    Ok(q.singular_values().max())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizableEntanglement {
    pub pair: (usize, usize),
    /// Outcome-averaged concurrence of the best measurement found.
    pub value: f64,
    /// `(site, theta, phi)` of the measurement direction on each other site.
    pub angles: Vec<(usize, f64, f64)>,
}

fn measurement_op(theta: f64, phi: f64) -> Op2 {
    let (c, s) = ((0.5 * theta).cos(), (0.5 * theta).sin());
    let e = C64::from_polar(1.0, phi);
    [[C64::new(c, 0.0), e.conj() * s], [-e * s, C64::new(c, 0.0)]]
}

struct LeProblem<'a> {
    amps: &'a [C64],
    pair: (usize, usize),
    others: Vec<usize>,
    other_set: SiteSubset,
}

impl LeProblem<'_> {
    fn value(&self, angles: &[(f64, f64)]) -> f64 {
        let mut chi = self.amps.to_vec();
        for (&site, &(t, p)) in self.others.iter().zip(angles) {
            chi = apply_site_op(&chi, site, &measurement_op(t, p));
        }
        let (bl, bm) = (1usize << (self.pair.0 - 1), 1usize << (self.pair.1 - 1));
        (0..1usize << self.others.len())
            .map(|s| {
                let x = self.other_set.scatter(s);
                let det = chi[x] * chi[x | bl | bm] - chi[x | bl] * chi[x | bm];
                2.0 * det.norm()
            })
            .sum()
    }

    fn search(&self, grid: usize, start: Vec<(f64, f64)>) -> (f64, Vec<(f64, f64)>) {
        let thetas: Vec<f64> = (0..=grid).map(|i| PI * i as f64 / grid as f64).collect();
        let phis: Vec<f64> = (0..grid).map(|j| 2.0 * PI * j as f64 / grid as f64).collect();
        let mut cur = start;
        let mut best = self.value(&cur);
        for _ in 0..50 {
            let mut changed = false;
            for k in 0..cur.len() {
                for &t in &thetas {
                    for &p in &phis {
                        let mut trial = cur.clone();
                        trial[k] = (t, p);
                        let v = self.value(&trial);
                        if v > best + 1e-13 {
                            best = v;
                            cur = trial;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut step = PI / grid as f64;
        let mut passes = 0;
        while step > 1e-6 && passes < 2000 {
            passes += 1;
            let mut improved = false;
            for k in 0..cur.len() {
                for (dt, dp) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
                    let mut trial = cur.clone();
                    trial[k] = (trial[k].0 + dt, trial[k].1 + dp);
                    let v = self.value(&trial);
                    if v > best + 1e-13 {
                        best = v;
                        cur = trial;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        (best, cur)
    }
}

/// Best outcome-averaged concurrence on `(l, m)` over rank-one projective
/// measurements on every other site. Each resolution `8, 16, ...` up to
/// `grid` runs a coordinate grid search with local refinement from six
/// starting points; the best result over all resolutions is returned.
pub fn localizable_entanglement_bruteforce(
    psi: &PureState,
    l: usize,
    m: usize,
    grid: usize,
    seed: u64,
) -> Result<LocalizableEntanglement> {
    let n = psi.n_sites();
    if n > MAX_LE_SITES {
        return Err(Error::TooLarge(format!(
            "localizable entanglement search is limited to {MAX_LE_SITES} sites, got {n}"
        )));
    }
    check_pair(n, l, m)?;
    if grid < 8 {
        return Err(Error::InvalidParam(format!("angular grid must be at least 8, got {grid}")));
    }
    let others: Vec<usize> = (1..=n).filter(|&k| k != l && k != m).collect();
    let problem = LeProblem {
        amps: psi.amplitudes(),
        pair: (l, m),
        other_set: SiteSubset::new(others.iter().copied(), n)?,
        others,
    };
    let k = problem.others.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![vec![(0.0, 0.0); k], vec![(PI / 2.0, 0.0); k], vec![(PI / 2.0, PI / 2.0); k]];
    for _ in 0..3 {
        starts.push((0..k).map(|_| (rng.random_range(0.0..PI), rng.random_range(0.0..2.0 * PI))).collect());
    }
    let mut jobs = Vec::new();
    let mut g = 8;
    while g <= grid {
        for s in &starts {
            jobs.push((g, s.clone()));
        }
        g *= 2;
    }
    let results = par::map(&jobs, |(g, s)| problem.search(*g, s.clone()));
    let (value, best) = results
        .into_iter()
        .fold((f64::NEG_INFINITY, Vec::new()), |acc, r| if r.0 > acc.0 { r } else { acc });
    Ok(LocalizableEntanglement {
        pair: (l, m),
        value: value.clamp(0.0, 1.0),
        angles: problem.others.iter().zip(best).map(|(&s, (t, p))| (s, t, p)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub l: usize,
    pub l_prime: usize,
    pub concurrence: f64,
    pub max_corr: f64,
    pub le_lower: Option<f64>,
}

/// Concurrence and correlation for every pair `l < l'`, with the
/// localizable-entanglement search when `le_grid` is given.
pub fn pair_table(psi: &PureState, le_grid: Option<usize>, seed: u64) -> Result<Vec<PairRow>> {
    let n = psi.n_sites();
    let pairs: Vec<(usize, usize)> = (1..=n).flat_map(|l| (l + 1..=n).map(move |m| (l, m))).collect();
    par::map(&pairs, |&(l, m)| -> Result<PairRow> {
        let le_lower = match le_grid {
            Some(g) => Some(localizable_entanglement_bruteforce(psi, l, m, g, seed)?.value),
            None => None,
        };
        Ok(PairRow {
            l,
            l_prime: m,
            concurrence: concurrence(psi, l, m)?,
            max_corr: max_pair_correlation(psi, l, m)?,
            le_lower,
        })
    })
    .into_iter()
    .collect()
}

/// CSV with header `l,l_prime,concurrence,max_corr,le_lower`.
pub fn pair_table_csv(rows: &[PairRow]) -> String {
    let mut out = String::from("l,l_prime,concurrence,max_corr,le_lower\n");
    for r in rows {
        let le = r.le_lower.map(|v| format!("{v:.12}")).unwrap_or_default();
        out.push_str(&format!("{},{},{:.12},{:.12},{}\n", r.l, r.l_prime, r.concurrence, r.max_corr, le));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{make_state, mix, Family, FamilySpec, MixedState};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn family(f: Family, n: usize) -> PureState {
        make_state(&f.into(), n, None).unwrap()
    }

    fn random(n: usize, seed: u64) -> PureState {
        make_state(&Family::Random.into(), n, Some(seed)).unwrap()
    }

    fn dicke_half(n: usize) -> PureState {
        make_state(&FamilySpec::new(Family::Dicke).with_k(n / 2), n, None).unwrap()
    }

    fn fidelity(a: &[C64], b: &[C64]) -> f64 {
        linalg::inner(a, b).norm_sqr()
    }

    #[test]
    fn schmidt_examples() {
        let g = schmidt_at_site(&family(Family::Ghz, 6), 3).unwrap();
        assert_abs_diff_eq!(g.lambda0, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(g.lambda1, 0.5, epsilon = 1e-12);
        assert_eq!(g.xi0, [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        assert_eq!(g.xi1, [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);

        let p = schmidt_at_site(&family(Family::Product, 3), 1).unwrap();
        assert_abs_diff_eq!(p.lambda0, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.lambda1, 0.0, epsilon = 1e-12);
        assert!(linalg::inner(&p.eta0, &p.eta1).norm() < 1e-10);

        let w = schmidt_at_site(&family(Family::W, 4), 1).unwrap();
        assert_abs_diff_eq!(w.lambda0, 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(w.lambda1, 0.25, epsilon = 1e-12);

        assert!(schmidt_at_site(&family(Family::W, 4), 5).is_err());
    }

    #[test]
    fn cut_entropy_examples() {
        for n in 4..=12 {
            let half = SiteSubset::new(1..=n / 2, n).unwrap();
            assert_abs_diff_eq!(cut_entropy(&family(Family::Ghz, n), &half).unwrap(), 1.0, epsilon = 1e-10);
        }
        let cut = SiteSubset::new([2, 5], 6).unwrap();
        assert_abs_diff_eq!(cut_entropy(&family(Family::Product, 6), &cut).unwrap(), 0.0, epsilon = 1e-12);
        // Dicke(4,2) across a half cut: weights C(2,j)^2/6 = 1/6, 4/6, 1/6
        let d = cut_entropy(&dicke_half(4), &SiteSubset::new([1, 2], 4).unwrap()).unwrap();
        let want = linalg::entropy_bits([1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0]);
        assert_abs_diff_eq!(d, want, epsilon = 1e-10);
        let ratios: Vec<f64> = [4, 8, 12]
            .iter()
            .map(|&n| cut_entropy(&dicke_half(n), &SiteSubset::new(1..=n / 2, n).unwrap()).unwrap() / (n as f64).log2())
            .collect();
        assert!(ratios.iter().all(|&r| r > 0.3 && r < 1.0), "{ratios:?}");
        assert!(cut_entropy(&family(Family::Ghz, 4), &SiteSubset::full(4)).is_err());
    }

    fn pure_pair_concurrence(psi: &PureState) -> f64 {
        let a = psi.amplitudes();
        2.0 * (a[0] * a[3] - a[1] * a[2]).norm()
    }

    #[test]
    fn concurrence_examples() {
        assert_abs_diff_eq!(concurrence(&family(Family::Ghz, 6), 1, 2).unwrap(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(concurrence(&family(Family::Product, 4), 2, 4).unwrap(), 0.0, epsilon = 1e-9);
        for n in 4..=8 {
            let w = family(Family::W, n);
            assert_abs_diff_eq!(concurrence(&w, 1, n).unwrap(), 2.0 / n as f64, epsilon = 1e-9);
        }
        assert!(concurrence(&family(Family::Ghz, 4), 2, 2).is_err());
        assert!(concurrence(&family(Family::Ghz, 4), 0, 2).is_err());
    }

    #[test]
    fn concurrence_matches_pure_formula() {
        for seed in 0..20 {
            let psi = random(2, seed);
            assert_abs_diff_eq!(concurrence(&psi, 1, 2).unwrap(), pure_pair_concurrence(&psi), epsilon = 1e-8);
        }
    }

    #[test]
    fn werner_concurrence() {
        // p |singlet><singlet| + (1-p) I/4 has concurrence max(0, (3p - 1)/2)
        let s = 0.5f64.sqrt();
        let singlet = PureState::new(2, vec![C64::new(0.0, 0.0), C64::new(s, 0.0), C64::new(-s, 0.0), C64::new(0.0, 0.0)]).unwrap();
        let basis: Vec<PureState> = (0..4).map(|i| PureState::basis(2, i).unwrap()).collect();
        for p in [0.0, 0.2, 1.0 / 3.0, 0.5, 0.8, 1.0] {
            let mut parts = vec![(p, singlet.clone())];
            parts.extend(basis.iter().map(|b| ((1.0 - p) / 4.0, b.clone())));
            let rho: MixedState = mix(&parts).unwrap();
            assert_abs_diff_eq!(concurrence(&rho, 1, 2).unwrap(), ((3.0 * p - 1.0) / 2.0).max(0.0), epsilon = 1e-7);
        }
    }

    #[test]
    fn meyer_wallach_examples() {
        assert_abs_diff_eq!(meyer_wallach(&family(Family::Product, 5)), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(meyer_wallach(&family(Family::Ghz, 4)), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(meyer_wallach(&family(Family::W, 4)), 0.75, epsilon = 1e-12);
        // dense oracle: purity from the reduced density matrix
        let psi = random(4, 3);
        let mean: f64 = (1..=4)
            .map(|l| reduced_density(&psi, &SiteSubset::new([l], 4).unwrap()).unwrap().purity())
            .sum::<f64>()
            / 4.0;
        assert_abs_diff_eq!(meyer_wallach(&psi), 2.0 * (1.0 - mean), epsilon = 1e-12);
    }

    #[test]
    fn pair_correlation_examples() {
        for (l, m) in [(1, 2), (2, 6), (3, 5)] {
            assert_abs_diff_eq!(max_pair_correlation(&family(Family::Ghz, 6), l, m).unwrap(), 1.0, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(max_pair_correlation(&family(Family::Product, 6), 1, 2).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(max_pair_correlation(&family(Family::Cluster, 6), 1, 4).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pair_correlation_matches_dense_marginal() {
        let psi = random(4, 11);
        let rho = reduced_density(&psi, &SiteSubset::new([2, 4], 4).unwrap()).unwrap();
        let q = pair_correlation_matrix(&psi, 2, 4).unwrap();
        for (a, ax) in Axis::ALL.iter().enumerate() {
            for (b, bx) in Axis::ALL.iter().enumerate() {
                let (pa, pb) = (pauli(*ax), pauli(*bx));
                let op = CMatrix::from_fn(4, 4, |x, y| pa[x & 1][y & 1] * pb[x >> 1][y >> 1]);
                let one = CMatrix::from_fn(4, 4, |x, y| if x >> 1 == y >> 1 { pa[x & 1][y & 1] } else { C64::new(0.0, 0.0) });
                let two = CMatrix::from_fn(4, 4, |x, y| if x & 1 == y & 1 { pb[x >> 1][y >> 1] } else { C64::new(0.0, 0.0) });
                let e = |o: &CMatrix| linalg::trace(&(rho.matrix() * o)).re;
                assert_abs_diff_eq!(q[(a, b)], e(&op) - e(&one) * e(&two), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn localizable_entanglement_examples() {
        let g = localizable_entanglement_bruteforce(&family(Family::Ghz, 4), 1, 2, 8, 0).unwrap();
        assert_abs_diff_eq!(g.value, 1.0, epsilon = 1e-9);
        let p = localizable_entanglement_bruteforce(&family(Family::Product, 4), 1, 3, 8, 0).unwrap();
        assert_abs_diff_eq!(p.value, 0.0, epsilon = 1e-12);
        let c = localizable_entanglement_bruteforce(&family(Family::Cluster, 4), 2, 3, 8, 0).unwrap();
        assert_abs_diff_eq!(c.value, 1.0, epsilon = 1e-9);
        let two = localizable_entanglement_bruteforce(&random(2, 1), 1, 2, 8, 0).unwrap();
        assert_abs_diff_eq!(two.value, pure_pair_concurrence(&random(2, 1)), epsilon = 1e-12);
    }

    #[test]
    fn localizable_entanglement_is_monotone_in_grid() {
        let psi = random(5, 21);
        let coarse = localizable_entanglement_bruteforce(&psi, 1, 4, 8, 3).unwrap().value;
        let fine = localizable_entanglement_bruteforce(&psi, 1, 4, 16, 3).unwrap().value;
        assert!(fine >= coarse);
    }

    #[test]
    fn localizable_entanglement_refusals() {
        let big = family(Family::Ghz, 7);
        assert!(matches!(localizable_entanglement_bruteforce(&big, 1, 2, 8, 0), Err(Error::TooLarge(_))));
        assert!(localizable_entanglement_bruteforce(&family(Family::Ghz, 4), 1, 2, 4, 0).is_err());
    }

    #[test]
    fn pair_table_csv_layout() {
        let rows = pair_table(&family(Family::Ghz, 3), None, 0).unwrap();
        assert_eq!(rows.len(), 3);
        let csv = pair_table_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("l,l_prime,concurrence,max_corr,le_lower"));
        assert_eq!(lines.next(), Some("1,2,0.000000000000,1.000000000000,"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn schmidt_reconstructs(n in 2usize..=7, seed in any::<u64>(), l_raw in 0usize..7) {
            let psi = random(n, seed);
            let l = 1 + l_raw % n;
            let cut = schmidt_at_site(&psi, l).unwrap();
            prop_assert!(fidelity(&cut.reconstruct(), psi.amplitudes()) >= 1.0 - 1e-10);
            prop_assert!(linalg::inner(&cut.xi0, &cut.xi1).norm() < 1e-10);
            prop_assert!(linalg::inner(&cut.eta0, &cut.eta1).norm() < 1e-10);
            prop_assert!((linalg::norm(&cut.eta0) - 1.0).abs() < 1e-10);
            prop_assert!((linalg::norm(&cut.eta1) - 1.0).abs() < 1e-10);
            let e = cut_entropy(&psi, &SiteSubset::new([l], n).unwrap()).unwrap();
            prop_assert!((cut.entropy_bits() - e).abs() < 1e-10);
        }

        #[test]
        fn cut_entropy_is_symmetric(n in 2usize..=8, seed in any::<u64>(), mask in 1usize..255) {
            let psi = random(n, seed);
            let members: Vec<usize> = (1..=n).filter(|l| mask >> (l - 1) & 1 == 1).collect();
            prop_assume!(!members.is_empty() && members.len() < n);
            let part = SiteSubset::new(members.iter().copied(), n).unwrap();
            let a = cut_entropy(&psi, &part).unwrap();
            let b = cut_entropy(&psi, &part.complement(n)).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
            prop_assert!(a >= -1e-12 && a <= part.len().min(n - part.len()) as f64 + 1e-10);
        }
    }
}
