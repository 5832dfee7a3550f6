//! Projective measurement of a single site and the disturbance it causes on
//! the other sites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bipartite::{check_site, project_site, schmidt_at_site, site_marginal};
use crate::factorize::eb_report;
use crate::linalg;
use crate::qstate::PureState;
use crate::{Error, Result, C64};

pub const DEFAULT_TOL: f64 = 1e-6;
/// Outcomes at or below this probability are dropped.
pub const MIN_PROBABILITY: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub enum MeasurementBasis {
    /// Eigenbasis of the site's marginal.
    Schmidt,
    Computational,
    Custom([C64; 2], [C64; 2]),
}

impl MeasurementBasis {
    pub fn tag(&self) -> &'static str {
        match self {
            MeasurementBasis::Schmidt => "schmidt",
            MeasurementBasis::Computational => "computational",
            MeasurementBasis::Custom(..) => "custom",
        }
    }

    fn vectors(&self, psi: &PureState, l: usize) -> Result<([[C64; 2]; 2], [&'static str; 2])> {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        Ok(match self {
            MeasurementBasis::Schmidt => {
                let cut = schmidt_at_site(psi, l)?;
                ([cut.xi0, cut.xi1], ["xi0", "xi1"])
            }
            MeasurementBasis::Computational => ([[one, zero], [zero, one]], ["0", "1"]),
            MeasurementBasis::Custom(a, b) => {
                let gram = [linalg::norm(a) - 1.0, linalg::norm(b) - 1.0, linalg::inner(a, b).norm()];
                if gram.iter().any(|e| e.abs() > 1e-10) {
                    return Err(Error::InvalidParam("measurement basis is not orthonormal".into()));
                }
                ([*a, *b], ["b0", "b1"])
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub probability: f64,
    pub label: &'static str,
    /// Normalized state of the other sites, in increasing site order.
    pub post_state: PureState,
}

/// Measures site `l` in `basis`. Outcomes with vanishing probability are omitted.
pub fn measure_site(psi: &PureState, l: usize, basis: &MeasurementBasis) -> Result<Vec<Outcome>> {
    let n = psi.n_sites();
    check_site(n, l)?;
    if n < 2 {
        return Err(Error::Precondition("measuring a site needs at least two sites".into()));
    }
    let (vecs, labels) = basis.vectors(psi, l)?;
    let mut out = Vec::new();
    for (xi, label) in vecs.iter().zip(labels) {
        let phi = project_site(psi.amplitudes(), n, l, xi);
        let p = phi.iter().map(|z| z.norm_sqr()).sum::<f64>();
        if p <= MIN_PROBABILITY {
            continue;
        }
        out.push(Outcome { probability: p, label, post_state: PureState::normalized(n - 1, phi)? });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeReport {
    pub p: f64,
    /// Number of other sites whose marginal moved by more than `tol`.
    pub affected: usize,
    /// `||rho_m - rho_m|outcome||_1` for every other site `m` in increasing order.
    pub per_site_dist: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackactionReport {
    pub site: usize,
    pub basis: String,
    pub info_gain_bits: f64,
    pub outcomes: Vec<OutcomeReport>,
    /// Sites affected under at least one outcome.
    pub affected_sites: usize,
    /// Worst case over outcomes of the per-site distances.
    pub per_site_trace_distance: Vec<f64>,
}

fn marginal_distance(before: (f64, C64, f64), after: (f64, C64, f64)) -> f64 {
    let a = 0.5 * ((before.0 - after.0) - (before.2 - after.2));
    let b = before.1 - after.1;
    2.0 * (a * a + b.norm_sqr()).sqrt()
}

/// Measurement in the Schmidt basis of `l`.
pub fn backaction_report(psi: &PureState, l: usize, tol: f64) -> Result<BackactionReport> {
    backaction_report_in(psi, l, &MeasurementBasis::Schmidt, tol)
}

pub fn backaction_report_in(psi: &PureState, l: usize, basis: &MeasurementBasis, tol: f64) -> Result<BackactionReport> {
    let n = psi.n_sites();
    let outcomes = measure_site(psi, l, basis)?;
    let others: Vec<usize> = (1..=n).filter(|&m| m != l).collect();
    let before: Vec<_> = others.iter().map(|&m| site_marginal(psi.amplitudes(), m)).collect();
    let mut worst = vec![0.0f64; others.len()];
    let reports: Vec<OutcomeReport> = outcomes
        .iter()
        .map(|o| {
            let dist: Vec<f64> = (1..n)
                .zip(&before)
                .map(|(k, b)| marginal_distance(*b, site_marginal(o.post_state.amplitudes(), k)))
                .collect();
            worst.iter_mut().zip(&dist).for_each(|(w, d)| *w = w.max(*d));
            OutcomeReport { p: o.probability, affected: dist.iter().filter(|&&d| d > tol).count(), per_site_dist: dist }
        })
        .collect();
    Ok(BackactionReport {
        site: l,
        basis: basis.tag().to_string(),
        info_gain_bits: linalg::entropy_bits(outcomes.iter().map(|o| o.probability)),
        outcomes: reports,
        affected_sites: worst.iter().filter(|&&d| d > tol).count(),
        per_site_trace_distance: worst,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteExperiment {
    pub trials: usize,
    /// Whether every site was visited once instead of sampling.
    pub exhaustive: bool,
    pub drastic: usize,
    pub frequency: f64,
}

/// Fraction of measured sites with `E(l) >= eps` and `|S1(l)| >= delta N`.
/// With `trials >= N` every site is visited once; otherwise sites are drawn
/// uniformly, one seeded stream per trial.
pub fn random_site_experiment(psi: &PureState, trials: usize, eps: f64, delta: f64, tol: f64, seed: u64) -> Result<SiteExperiment> {
    if trials == 0 {
        return Err(Error::InvalidParam("at least one trial is needed".into()));
    }
    let n = psi.n_sites();
    let report = eb_report(psi, eps, delta, tol)?;
    let drastic_site = |l: usize| {
        let e = &report.per_site[l - 1];
        e.entropy_bits >= eps && e.s1_size as f64 >= delta * n as f64
    };
    let (visits, exhaustive): (Vec<usize>, bool) = if trials >= n {
        ((1..=n).collect(), true)
    } else {
        let picks = (0..trials)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                rng.random_range(1..=n)
            })
            .collect();
        (picks, false)
    };
    let drastic = visits.iter().filter(|&&l| drastic_site(l)).count();
    Ok(SiteExperiment { trials: visits.len(), exhaustive, drastic, frequency: drastic as f64 / visits.len() as f64 })
}
