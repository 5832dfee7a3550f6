//! Property suite: every invariant of the library, checked on a seeded
//! random corpus plus the built-in families.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backaction::{backaction_report, measure_site, MeasurementBasis};
use crate::bipartite::{concurrence, cut_entropy, localizable_entanglement_bruteforce, max_pair_correlation, schmidt_at_site};
use crate::factorize::{appendix_inequalities, eb_report, finest_factorization, s1_at_site};
use crate::linalg;
use crate::observables::{
    build_fluctuation_matrix, census_from, correlation, estimate_index_p, max_fluctuation_from, AdditiveObservable,
};
use crate::par::Exec;
use crate::qindex::{
    bures_distance, double_commutator_matrix, estimate_index_q, relative_entropy, root_fidelity, trace_distance,
    trace_norm, trace_norm_pure_fast, OptimizerSettings,
};
use crate::qstate::{make_state, mix, random_density, reduced_density, Density, Family, FamilySpec, PureState, SiteSubset};
use crate::{CMatrix, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidateConfig {
    /// Random states (or state pairs) per corpus property.
    pub corpus_size: usize,
    pub seed: u64,
    /// Multiplies every tolerance; a negative value is a negative control.
    pub tol_scale: f64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig { corpus_size: 50, seed: 0, tol_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyOutcome {
    pub module: String,
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest `violation - tolerance` seen; positive exactly when something failed.
    pub worst_excess: f64,
}

impl PropertyOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub config: ValidateConfig,
    pub properties: Vec<PropertyOutcome>,
}

impl ValidationSummary {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(|p| p.passed())
    }

    pub fn failed(&self) -> Vec<&PropertyOutcome> {
        self.properties.iter().filter(|p| !p.passed()).collect()
    }
}

/// A case's `(violation, tolerance)`: it passes when `violation <= tolerance * tol_scale`.
type Case = (f64, f64);

struct Ctx {
    cfg: ValidateConfig,
    exec: Exec,
}

impl Ctx {
    fn rng(&self, property: u64, item: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ property.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.set_stream(item as u64);
        rng
    }

    fn corpus<F>(&self, property: u64, f: F) -> Result<Vec<Case>>
    where
        F: Fn(&mut ChaCha8Rng) -> Result<Vec<Case>> + Sync + Send,
    {
        let items = self.exec.map_range(self.cfg.corpus_size, |k| f(&mut self.rng(property, k)));
        Ok(items.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
    }

    fn outcome(&self, module: &str, name: &str, cases: Vec<Case>) -> PropertyOutcome {
        let mut failures = 0;
        let mut worst = f64::NEG_INFINITY;
        for (v, tol) in &cases {
            let excess = if v.is_nan() { f64::INFINITY } else { v - tol * self.cfg.tol_scale };
            if excess > 0.0 {
                failures += 1;
            }
            worst = worst.max(excess);
        }
        PropertyOutcome { module: module.into(), name: name.into(), cases: cases.len(), failures, worst_excess: worst }
    }
}

fn random_state(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Result<PureState> {
    let n = rng.random_range(lo..=hi);
    make_state(&Family::Random.into(), n, Some(rng.random()))
}

fn random_bloch(rng: &mut ChaCha8Rng, max_norm: f64) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if r > 1e-6 && r <= 1.0 {
            let s = rng.random_range(0.0..=max_norm);
            return v.map(|x| x / r * s);
        }
    }
}

fn random_observable(rng: &mut ChaCha8Rng, n: usize) -> Result<AdditiveObservable> {
    AdditiveObservable::new((0..n).map(|_| random_bloch(rng, 1.0)).collect())
}

fn random_subset(rng: &mut ChaCha8Rng, n: usize) -> Result<SiteSubset> {
    loop {
        let mask = rng.random_range(1..(1usize << n) - 1);
        let members: Vec<usize> = (1..=n).filter(|l| mask >> (l - 1) & 1 == 1).collect();
        if !members.is_empty() && members.len() < n {
            return SiteSubset::new(members, n);
        }
    }
}

fn nonzero_spectrum(m: &CMatrix) -> Vec<f64> {
    linalg::eigvalsh(m).into_iter().filter(|&v| v > 1e-13).collect()
}

fn spectrum_gap(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    (0..len)
        .map(|i| (a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

const P_GRID: [usize; 5] = [4, 6, 8, 10, 12];
const P_BOUNDS_GRID: [usize; 4] = [6, 8, 10, 12];
const PQ_GRID: [usize; 3] = [4, 6, 8];

fn family_specs() -> Vec<FamilySpec> {
    Family::PURE_BUILTIN.into_iter().map(FamilySpec::from).collect()
}

/// Runs the full property suite.
pub fn run_validation(cfg: &ValidateConfig) -> Result<ValidationSummary> {
    run_validation_with(cfg, Exec::default())
}

pub fn run_validation_with(cfg: &ValidateConfig, exec: Exec) -> Result<ValidationSummary> {
    let ctx = Ctx { cfg: *cfg, exec };
    let mut props = Vec::new();
    let seed = cfg.seed;

    // qstate
    props.push(ctx.outcome("qstate", "schmidt-symmetry", ctx.corpus(1, |rng| {
        let psi = random_state(rng, 2, 8)?;
        let part = random_subset(rng, psi.n_sites())?;
        let a = nonzero_spectrum(reduced_density(&psi, &part)?.matrix());
        let b = nonzero_spectrum(reduced_density(&psi, &part.complement(psi.n_sites()))?.matrix());
        Ok(vec![(spectrum_gap(&a, &b), 1e-10)])
    })?));
    props.push(ctx.outcome("qstate", "seeded-determinism", ctx.corpus(2, |rng| {
        let n = rng.random_range(2..=10);
        let s: u64 = rng.random();
        let a = make_state(&Family::Random.into(), n, Some(s))?;
        let b = make_state(&Family::Random.into(), n, Some(s))?;
        let same = if a == b { 0.0 } else { 1.0 };
        Ok(vec![(same, 0.0), ((linalg::norm(a.amplitudes()) - 1.0).abs(), 1e-12)])
    })?));
    props.push(ctx.outcome("qstate", "partial-trace-linearity", ctx.corpus(3, |rng| {
        let n = rng.random_range(2..=6);
        let a = make_state(&Family::Random.into(), n, Some(rng.random()))?;
        let b = make_state(&Family::Random.into(), n, Some(rng.random()))?;
        let w = rng.random_range(0.0..1.0);
        let part = random_subset(rng, n)?;
        let rho = mix(&[(w, a.clone()), (1.0 - w, b.clone())])?;
        let lhs = reduced_density(&rho, &part)?;
        let rhs = reduced_density(&a, &part)?.matrix().scale(w) + reduced_density(&b, &part)?.matrix().scale(1.0 - w);
        Ok(vec![(max_abs(&(lhs.matrix() - rhs)), 1e-12)])
    })?));

    // observables
    props.push(ctx.outcome("observables", "quadratic-form-is-correlation", ctx.corpus(4, |rng| {
        let psi = random_state(rng, 2, 8)?;
        let a = random_observable(rng, psi.n_sites())?;
        let v = build_fluctuation_matrix(&psi);
        let c = correlation(&a, &a, &psi)?;
        Ok(vec![((v.quadratic_form(a.terms()) - c).abs(), 1e-9)])
    })?));
    props.push(ctx.outcome("observables", "fluctuation-below-maximum", ctx.corpus(5, |rng| {
        let psi = random_state(rng, 2, 8)?;
        let a = random_observable(rng, psi.n_sites())?;
        let max = max_fluctuation_from(&build_fluctuation_matrix(&psi)).value;
        Ok(vec![(correlation(&a, &a, &psi)? - max, 1e-9)])
    })?));
    {
        // Families whose maximal fluctuation stays above N^2 / 4 over the grid
        // must keep a quadratic number of strongly correlated pairs.
        let mut cases = Vec::new();
        for spec in family_specs() {
            let rows = exec.map(&P_GRID, |&n| -> Result<Option<(f64, f64)>> {
                let psi = make_state(&spec, n, Some(seed))?;
                let v = build_fluctuation_matrix(&psi);
                let m = max_fluctuation_from(&v);
                let nn = (n * n) as f64;
                if m.feasible_value < 0.25 * nn {
                    return Ok(None);
                }
                let census = census_from(&v, &m.argmax, 0.1);
                Ok(Some((census.r1_count as f64, nn)))
            });
            let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
            if rows.iter().all(|r| r.is_some()) {
                cases.extend(rows.into_iter().flatten().map(|(r1, nn)| (0.25 * nn - r1, 0.0)));
            }
        }
        props.push(ctx.outcome("observables", "quadratic-fluctuation-needs-quadratic-census", cases));
    }
    {
        let fits = exec.map(&family_specs(), |spec| estimate_index_p(spec, &P_BOUNDS_GRID, Some(seed)));
        let mut cases = Vec::new();
        for fit in fits {
            let p = fit?.slope;
            cases.push((0.9 - p, 0.0));
            cases.push((p - 2.1, 0.0));
        }
        props.push(ctx.outcome("observables", "index-p-bounds", cases));
    }

    // qindex
    props.push(ctx.outcome("qindex", "pinsker", ctx.corpus(6, |rng| {
        let (rho, sigma) = density_pair(rng)?;
        let t = trace_distance(&rho, &sigma)?;
        let s = relative_entropy(&rho, &sigma)?;
        Ok(vec![(0.5 * t * t - s, 1e-9)])
    })?));
    props.push(ctx.outcome("qindex", "bures-chain", ctx.corpus(7, |rng| {
        let (rho, sigma) = density_pair(rng)?;
        let t = trace_distance(&rho, &sigma)?;
        let f = root_fidelity(&rho, &sigma)?;
        let b = bures_distance(&rho, &sigma)?;
        Ok(vec![(t * t / 8.0 - (1.0 - f), 1e-9), ((b * b - 2.0 * (1.0 - f)).abs(), 1e-9)])
    })?));
    props.push(ctx.outcome("qindex", "double-commutator-contraction", ctx.corpus(8, |rng| {
        let (rho, sigma) = density_pair(rng)?;
        let n = rho.n_sites();
        let a = random_observable(rng, n)?;
        let diff = rho.matrix() - sigma.matrix();
        let lhs = trace_norm(&double_commutator_matrix(&a, &diff)?);
        let rhs = 4.0 * (n * n) as f64 * linalg::trace_norm(&diff);
        Ok(vec![(lhs - rhs, 1e-8)])
    })?));
    props.push(ctx.outcome("qindex", "fast-trace-norm-matches-dense", ctx.corpus(9, |rng| {
        let psi = random_state(rng, 2, 7)?;
        let a = random_observable(rng, psi.n_sites())?;
        let dense = trace_norm(&double_commutator_matrix(&a, &psi.density_matrix())?);
        Ok(vec![((dense - trace_norm_pure_fast(&a, &psi)?).abs(), 1e-8)])
    })?));
    {
        let settings = OptimizerSettings::default();
        let specs: Vec<FamilySpec> = family_specs();
        let rows = exec.map(&specs, |spec| -> Result<f64> {
            let p = estimate_index_p(spec, &PQ_GRID, Some(seed))?.slope;
            let q = estimate_index_q(spec, &PQ_GRID, &settings, seed)?.q_hat.unwrap_or(f64::NAN);
            Ok((p - q).abs())
        });
        let cases = rows.into_iter().map(|r| r.map(|d| (d, 0.15))).collect::<Result<Vec<_>>>()?;
        props.push(ctx.outcome("qindex", "pure-p-q-consistency", cases));
    }

    // bipartite
    {
        let mut cases = Vec::new();
        for f in [Family::Ghz, Family::Cluster, Family::W] {
            for n in [4, 5] {
                let psi = make_state(&f.into(), n, None)?;
                cases.extend(le_cases(&psi, seed, exec)?);
            }
        }
        let random = ctx.corpus(10, |rng| {
            let psi = random_state(rng, 4, 5)?;
            let n = psi.n_sites();
            let l = rng.random_range(1..=n);
            let m = 1 + (l + rng.random_range(0..n - 1)) % n;
            let le = localizable_entanglement_bruteforce(&psi, l, m, 16, rng.random())?.value;
            Ok(vec![(max_pair_correlation(&psi, l, m)? - 0.05 - le, 0.0)])
        })?;
        cases.extend(random);
        props.push(ctx.outcome("bipartite", "localizable-entanglement-bound", cases));
    }
    {
        let mut cases = Vec::new();
        for f in Family::PURE_BUILTIN.into_iter().filter(|f| f.is_permutation_symmetric()) {
            for n in 4..=8 {
                let psi = make_state(&f.into(), n, None)?;
                for (l, m) in [(1, 2), (1, n), (2, n - 1)] {
                    cases.push((concurrence(&psi, l, m)? - 2.0 / n as f64, 1e-9));
                }
            }
        }
        props.push(ctx.outcome("bipartite", "concurrence-ceiling", cases));
    }
    props.push(ctx.outcome("bipartite", "cut-entropy-symmetry", ctx.corpus(11, |rng| {
        let psi = random_state(rng, 2, 8)?;
        let part = random_subset(rng, psi.n_sites())?;
        let a = cut_entropy(&psi, &part)?;
        let b = cut_entropy(&psi, &part.complement(psi.n_sites()))?;
        Ok(vec![((a - b).abs(), 1e-10)])
    })?));
    props.push(ctx.outcome("bipartite", "schmidt-entropy-agreement", ctx.corpus(12, |rng| {
        let psi = random_state(rng, 2, 8)?;
        let n = psi.n_sites();
        let l = rng.random_range(1..=n);
        let e = schmidt_at_site(&psi, l)?.entropy_bits();
        Ok(vec![((e - cut_entropy(&psi, &SiteSubset::new([l], n)?)?).abs(), 1e-10)])
    })?));

    // factorize
    props.push(ctx.outcome("factorize", "appendix-inequalities", ctx.corpus(13, |rng| {
        let psi = random_state(rng, 4, 6)?;
        let mut cases = Vec::new();
        for l in 1..=psi.n_sites() {
            for row in appendix_inequalities(&psi, l)?.rows {
                cases.push((row.lhs - row.rhs, 1e-8));
            }
        }
        Ok(cases)
    })?));
    props.push(ctx.outcome("factorize", "fluctuations-add-across-blocks", ctx.corpus(14, |rng| {
        let a = random_state(rng, 2, 3)?;
        let b = random_state(rng, 2, 3)?;
        let psi = a.tensor(&b)?;
        let obs = random_observable(rng, psi.n_sites())?;
        let left = AdditiveObservable::new(obs.terms()[..a.n_sites()].to_vec())?;
        let right = AdditiveObservable::new(obs.terms()[a.n_sites()..].to_vec())?;
        let total = correlation(&obs, &obs, &psi)?;
        let parts = correlation(&left, &left, &a)? + correlation(&right, &right, &b)?;
        Ok(vec![((total - parts).abs(), 1e-9)])
    })?));
    {
        let mut cases = Vec::new();
        let rows = exec.map(&family_specs(), |spec| -> Result<Vec<Case>> {
            let p = estimate_index_p(spec, &P_GRID, Some(seed))?.slope;
            let mut out = Vec::new();
            if p >= 1.9 {
                for &n in &P_GRID {
                    let psi = make_state(spec, n, Some(seed))?;
                    let eb = eb_report(&psi, 0.1, 0.5, crate::factorize::DEFAULT_TOL)?.eb_count;
                    out.push((0.5 * n as f64 - eb as f64, 0.0));
                }
            }
            if matches!(spec.family, Family::Cluster | Family::Rvb) {
                // small p, large E_B
                out.push((p - 1.9, 0.0));
                let psi = make_state(spec, 8, Some(seed))?;
                let eb = eb_report(&psi, 0.1, 0.5, crate::factorize::DEFAULT_TOL)?.eb_count;
                out.push((4.0 - eb as f64, 0.0));
            }
            Ok(out)
        });
        for r in rows {
            cases.extend(r?);
        }
        props.push(ctx.outcome("factorize", "large-p-implies-large-eb", cases));
    }
    props.push(ctx.outcome("factorize", "factorization-idempotent", ctx.corpus(15, |rng| {
        let parts = rng.random_range(1..=3);
        let mut psi = random_state(rng, 2, 3)?;
        for _ in 1..parts {
            psi = psi.tensor(&random_state(rng, 2, 3)?)?;
        }
        let d = finest_factorization(&psi, crate::factorize::DEFAULT_TOL)?;
        let mut cases = vec![(1.0 - linalg::inner(&d.reconstruct(), psi.amplitudes()).norm_sqr(), 1e-9)];
        for f in &d.factors {
            let again = finest_factorization(f, crate::factorize::DEFAULT_TOL)?;
            cases.push((again.blocks.len() as f64 - 1.0, 0.0));
        }
        Ok(cases)
    })?));

    // backaction
    props.push(ctx.outcome("backaction", "probability-conservation", ctx.corpus(16, |rng| {
        let psi = random_state(rng, 2, 7)?;
        let l = rng.random_range(1..=psi.n_sites());
        let mut cases = Vec::new();
        for basis in bases(rng) {
            let out = measure_site(&psi, l, &basis)?;
            cases.push(((out.iter().map(|o| o.probability).sum::<f64>() - 1.0).abs(), 1e-12));
            for o in &out {
                cases.push(((linalg::norm(o.post_state.amplitudes()) - 1.0).abs(), 1e-12));
            }
        }
        Ok(cases)
    })?));
    props.push(ctx.outcome("backaction", "info-gain-is-site-entropy", ctx.corpus(17, |rng| {
        let psi = random_state(rng, 2, 7)?;
        let l = rng.random_range(1..=psi.n_sites());
        let r = backaction_report(&psi, l, crate::backaction::DEFAULT_TOL)?;
        Ok(vec![((r.info_gain_bits - schmidt_at_site(&psi, l)?.entropy_bits()).abs(), 1e-10)])
    })?));
    props.push(ctx.outcome("backaction", "no-signaling", ctx.corpus(18, |rng| {
        let psi = random_state(rng, 2, 6)?;
        let n = psi.n_sites();
        let l = rng.random_range(1..=n);
        let before = reduced_density(&psi, &SiteSubset::full(n).without(l))?;
        let d = 1usize << (n - 1);
        let mut cases = Vec::new();
        for basis in bases(rng) {
            let mut avg = CMatrix::zeros(d, d);
            for o in measure_site(&psi, l, &basis)? {
                let v = nalgebra::DVector::from_column_slice(o.post_state.amplitudes());
                avg += (&v * v.adjoint()).scale(o.probability);
            }
            cases.push((max_abs(&(avg - before.matrix())), 1e-10));
        }
        Ok(cases)
    })?));
    props.push(ctx.outcome("backaction", "backaction-within-s1", ctx.corpus(19, |rng| {
        let a = random_state(rng, 2, 4)?;
        let b = random_state(rng, 2, 3)?;
        let psi = a.tensor(&b)?;
        let mut cases = Vec::new();
        for l in 1..=psi.n_sites() {
            let r = backaction_report(&psi, l, 1e-8)?;
            let s1 = s1_at_site(&psi, l, crate::factorize::DEFAULT_TOL)?.s1.len();
            cases.push((r.affected_sites as f64 - s1 as f64, 0.0));
        }
        Ok(cases)
    })?));

    Ok(ValidationSummary { config: *cfg, properties: props })
}

fn density_pair(rng: &mut ChaCha8Rng) -> Result<(crate::qstate::MixedState, crate::qstate::MixedState)> {
    let n = rng.random_range(1..=3);
    let d = 1usize << n;
    let r1 = rng.random_range(1..=d);
    let r2 = rng.random_range(1..=d);
    Ok((random_density(n, r1, rng)?, random_density(n, r2, rng)?))
}

fn bases(rng: &mut ChaCha8Rng) -> Vec<MeasurementBasis> {
    let t: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let p: f64 = rng.random_range(0.0..2.0 * std::f64::consts::PI);
    let (c, s) = ((0.5 * t).cos(), (0.5 * t).sin());
    let e = C64::from_polar(1.0, p);
    vec![
        MeasurementBasis::Schmidt,
        MeasurementBasis::Computational,
        MeasurementBasis::Custom([C64::new(c, 0.0), e * s], [-e.conj() * s, C64::new(c, 0.0)]),
    ]
}

fn le_cases(psi: &PureState, seed: u64, exec: Exec) -> Result<Vec<Case>> {
    let n = psi.n_sites();
    let pairs: Vec<(usize, usize)> = (1..=n).flat_map(|l| (l + 1..=n).map(move |m| (l, m))).collect();
    exec.map(&pairs, |&(l, m)| -> Result<Case> {
        let le = localizable_entanglement_bruteforce(psi, l, m, 16, seed)?.value;
        Ok((max_pair_correlation(psi, l, m)? - 0.05 - le, 0.0))
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_corpus_is_deterministic_and_ordered() {
        let cfg = ValidateConfig { corpus_size: 3, seed: 5, tol_scale: 1.0 };
        let a = run_validation_with(&cfg, Exec::Parallel).unwrap();
        let b = run_validation_with(&cfg, Exec::Sequential).unwrap();
        assert_eq!(a, b);
        let names: Vec<&str> = a.properties.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names[0], "schmidt-symmetry");
        assert_eq!(*names.last().unwrap(), "backaction-within-s1");
    }

    #[test]
    fn injected_fault_fails_corpus_properties() {
        let cfg = ValidateConfig { corpus_size: 3, seed: 5, tol_scale: -1.0 };
        let s = run_validation(&cfg).unwrap();
        assert!(!s.passed());
        let schmidt = s.properties.iter().find(|p| p.name == "schmidt-symmetry").unwrap();
        assert!(!schmidt.passed());
    }
}
