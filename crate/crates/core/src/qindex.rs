//! Index `q`: trace norms of `[A, [A, rho]]` maximized over additive
//! observables, plus the distance-measure bounds built on it.
//!
//! For `rho = sum_i w_i |v_i><v_i|` the double commutator is
//! `sum_i w_i (|A^2 v_i><v_i| + |v_i><A^2 v_i| - 2 |A v_i><A v_i|)`, so its
//! range lies in the span of `{v_i, A v_i, A^2 v_i}`. With `B` the matrix of
//! those vectors, `X = B C B^†` and the nonzero spectrum of `X` is that of
//! `G^{1/2} C G^{1/2}` where `G = B^† B`. Low-rank states never build a
//! `2^N x 2^N` matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::observables::{apply_coeffs, AdditiveObservable};
use crate::par::Exec;
use crate::qstate::{pauli_transitions, FamilySpec, MixedState, PureState, State};
use crate::scaling::ScalingFit;
use crate::{CMatrix, Error, Result, C64};

/// Largest pure chain for the low-rank index-q path.
pub const MAX_PURE_Q_SITES: usize = 12;
/// Largest mixed chain for index q.
pub const MAX_MIXED_Q_SITES: usize = 10;

/// Separable-state constant `c` in `||[A,[A,sigma]]||_1 <= c N`, from
/// [`calibrate_sep_constant`] (1.5x the fitted slope over product states,
/// N = 4..8).
pub const DEFAULT_SEP_CONSTANT: f64 = 7.92;

/// `[A, [A, rho]]` as a dense matrix.
pub fn double_commutator(a: &AdditiveObservable, rho: &MixedState) -> Result<CMatrix> {
    if a.n_sites() != rho.n_sites() {
        return Err(Error::Dimension(format!("observable on {} sites, state on {}", a.n_sites(), rho.n_sites())));
    }
    double_commutator_matrix(a, rho.matrix())
}

/// `[A, [A, M]]` for any square matrix on the observable's sites.
pub fn double_commutator_matrix(a: &AdditiveObservable, m: &CMatrix) -> Result<CMatrix> {
    let d = 1usize << a.n_sites();
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::Dimension(format!("{}x{} matrix for {} sites", m.nrows(), m.ncols(), a.n_sites())));
    }
    let apply_cols = |x: &CMatrix| -> CMatrix {
        let mut out = CMatrix::zeros(d, d);
        for c in 0..d {
            let col: Vec<C64> = x.column(c).iter().copied().collect();
            let img = apply_coeffs(a.terms(), &col);
            out.column_mut(c).copy_from_slice(&img);
        }
        out
    };
    let am = apply_cols(m);
    let aam = apply_cols(&am);
    let ma = apply_cols(&m.adjoint()).adjoint();
    let ama = apply_cols(&ma);
    let maa = apply_cols(&apply_cols(&m.adjoint())).adjoint();
    Ok(aam - ama.scale(2.0) + maa)
}

/// Sum of singular values.
pub fn trace_norm(m: &CMatrix) -> f64 {
    linalg::trace_norm(m)
}

/// `||[A, [A, |psi><psi|]]||_1` from the three-dimensional span of
/// `{psi, A psi, A^2 psi}`.
pub fn trace_norm_pure_fast(a: &AdditiveObservable, psi: &PureState) -> Result<f64> {
    if a.n_sites() != psi.n_sites() {
        return Err(Error::Dimension("observable and state differ in size".into()));
    }
    let obj = Objective::pure(psi);
    Ok(obj.evaluate(a.terms(), false).value)
}

enum Repr {
    LowRank { weights: Vec<f64>, vecs: Vec<Vec<C64>> },
    Dense(CMatrix),
}

/// `c -> ||[A(c), [A(c), rho]]||_1` with its gradient.
struct Objective {
    n_sites: usize,
    repr: Repr,
}

struct Evaluation {
    value: f64,
    grad: Option<Vec<[f64; 3]>>,
}

impl Objective {
    fn pure(psi: &PureState) -> Self {
        Objective {
            n_sites: psi.n_sites(),
            repr: Repr::LowRank { weights: vec![1.0], vecs: vec![psi.amplitudes().to_vec()] },
        }
    }

    fn mixed(rho: &MixedState) -> Self {
        let ens = rho.ensemble();
        if 3 * ens.len() < rho.dim() {
            return Objective {
                n_sites: rho.n_sites(),
                repr: Repr::LowRank {
                    weights: ens.iter().map(|(w, _)| *w).collect(),
                    vecs: ens.iter().map(|(_, v)| v.clone()).collect(),
                },
            };
        }
        Objective { n_sites: rho.n_sites(), repr: Repr::Dense(rho.matrix().clone()) }
    }

    fn evaluate(&self, terms: &[[f64; 3]], with_grad: bool) -> Evaluation {
        match &self.repr {
            Repr::LowRank { weights, vecs } => self.eval_low_rank(weights, vecs, terms, with_grad),
            Repr::Dense(rho) => self.eval_dense(rho, terms, with_grad),
        }
    }

    fn eval_low_rank(&self, weights: &[f64], vecs: &[Vec<C64>], terms: &[[f64; 3]], with_grad: bool) -> Evaluation {
        let r = vecs.len();
        let k = 3 * r;
        let av: Vec<Vec<C64>> = vecs.iter().map(|v| apply_coeffs(terms, v)).collect();
        let aav: Vec<Vec<C64>> = av.iter().map(|v| apply_coeffs(terms, v)).collect();
        let basis: Vec<&Vec<C64>> = vecs.iter().chain(&av).chain(&aav).collect();

        let mut gram = CMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let g = linalg::inner(basis[i], basis[j]);
                gram[(i, j)] = g;
                gram[(j, i)] = g.conj();
            }
        }
        let mut coef = CMatrix::zeros(k, k);
        for (i, &w) in weights.iter().enumerate() {
            coef[(2 * r + i, i)] = C64::new(w, 0.0);
            coef[(i, 2 * r + i)] = C64::new(w, 0.0);
            coef[(r + i, r + i)] = C64::new(-2.0 * w, 0.0);
        }

        let (gvals, gvecs) = linalg::eigh(&gram);
        let gmax = gvals.first().copied().unwrap_or(0.0).max(0.0);
        let keep = |g: f64| g > 1e-12 * gmax && g > 0.0;
        let root = scale_columns(&gvecs, gvals.iter().map(|&g| if keep(g) { g.sqrt() } else { 0.0 }));
        let sqrt_g = &root * gvecs.adjoint();
        let h = &sqrt_g * &coef * &sqrt_g;
        let (hvals, hvecs) = linalg::eigh(&h);
        let value: f64 = hvals.iter().map(|v| v.abs()).sum();
        if !with_grad {
            return Evaluation { value, grad: None };
        }

        // T = G^{+1/2} sign(H) G^{+1/2}; then S v = B T B^† v.
        let hmax = hvals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let sign_h = {
            let s = scale_columns(&hvecs, hvals.iter().map(|&v| if v.abs() > 1e-12 * hmax { v.signum() } else { 0.0 }));
            &s * hvecs.adjoint()
        };
        let inv_root = scale_columns(
            &gvecs,
            gvals.iter().map(|&g| if keep(g) { 1.0 / g.sqrt() } else { 0.0 }),
        );
        let pinv_sqrt = &inv_root * gvecs.adjoint();
        let t = &pinv_sqrt * sign_h * &pinv_sqrt;
        let tg = &t * &gram;

        let combine = |coeffs: nalgebra::DVectorView<'_, C64>| -> Vec<C64> {
            let d = vecs[0].len();
            let mut out = vec![C64::new(0.0, 0.0); d];
            for (j, b) in basis.iter().enumerate() {
                let c = coeffs[j];
                if c.norm_sqr() == 0.0 {
                    continue;
                }
                out.iter_mut().zip(b.iter()).for_each(|(o, x)| *o += c * x);
            }
            out
        };

        let n = self.n_sites;
        let mut grad = vec![[0.0; 3]; n];
        for i in 0..r {
            let s_v = combine(tg.column(i));
            let s_av = combine(tg.column(r + i));
            let a_s_v = apply_coeffs(terms, &s_v);
            let t1 = pauli_transitions(&a_s_v, &vecs[i], n);
            let t2 = pauli_transitions(&s_v, &av[i], n);
            let t3 = pauli_transitions(&s_av, &vecs[i], n);
            for l in 0..n {
                for a in 0..3 {
                    grad[l][a] += 2.0 * weights[i] * (t1[l][a] + t2[l][a] - t3[l][a].scale(2.0)).re;
                }
            }
        }
        Evaluation { value, grad: Some(grad) }
    }

    fn eval_dense(&self, rho: &CMatrix, terms: &[[f64; 3]], with_grad: bool) -> Evaluation {
        let a = AdditiveObservable::new_unchecked(terms.to_vec());
        let x = double_commutator_matrix(&a, rho).expect("dimensions fixed at construction");
        let (vals, vecs) = linalg::eigh(&x);
        let value: f64 = vals.iter().map(|v| v.abs()).sum();
        if !with_grad {
            return Evaluation { value, grad: None };
        }
        let vmax = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let s = {
            let sc = scale_columns(&vecs, vals.iter().map(|&v| if v.abs() > 1e-12 * vmax { v.signum() } else { 0.0 }));
            &sc * vecs.adjoint()
        };
        // K = A rho S + A S rho + S rho A + rho S A - 2 rho A S - 2 S A rho
        let d = rho.nrows();
        let apply_cols = |m: &CMatrix| -> CMatrix {
            let mut out = CMatrix::zeros(d, d);
            for c in 0..d {
                let col: Vec<C64> = m.column(c).iter().copied().collect();
                out.column_mut(c).copy_from_slice(&apply_coeffs(terms, &col));
            }
            out
        };
        let rho_s = rho * &s;
        let s_rho = &s * rho;
        let m = &rho_s + &s_rho;
        // A M + M A with M Hermitian
        let am = apply_cols(&m);
        let first = &am + am.adjoint();
        // rho A S + S A rho, with S A rho = (rho A S)^†
        let a_s = apply_cols(&s);
        let rho_a_s = rho * a_s;
        let second = &rho_a_s + rho_a_s.adjoint();
        let k = first - second.scale(2.0);
        let n = self.n_sites;
        let mut grad = vec![[0.0; 3]; n];
        let i = C64::new(0.0, 1.0);
        for l in 0..n {
            let mask = 1usize << l;
            let mut acc = [C64::new(0.0, 0.0); 3];
            for x0 in 0..d {
                if x0 & mask != 0 {
                    continue;
                }
                let x1 = x0 | mask;
                // Tr(sigma K) = sum_{x,y} sigma[x,y] K[y,x]
                acc[0] += k[(x1, x0)] + k[(x0, x1)];
                acc[1] += i * k[(x0, x1)] - i * k[(x1, x0)];
                acc[2] += k[(x0, x0)] - k[(x1, x1)];
            }
            grad[l] = [acc[0].re, acc[1].re, acc[2].re];
        }
        Evaluation { value, grad: Some(grad) }
    }
}

fn scale_columns(m: &CMatrix, factors: impl Iterator<Item = f64>) -> CMatrix {
    let mut out = m.clone();
    for (c, f) in factors.enumerate() {
        out.column_mut(c).iter_mut().for_each(|z| *z *= f);
    }
    out
}

impl AdditiveObservable {
    pub(crate) fn new_unchecked(terms: Vec<[f64; 3]>) -> Self {
        // only used for internal evaluation of optimizer iterates
        AdditiveObservable::new(terms.iter().map(|c| clamp_unit(*c)).collect()).expect("clamped terms")
    }
}

fn clamp_unit(c: [f64; 3]) -> [f64; 3] {
    let r = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    if r > 1.0 {
        c.map(|x| x / r)
    } else {
        c
    }
}

/// Multi-start projected ascent settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub starts: usize,
    pub max_iters: usize,
    /// Stop once the relative improvement of a step falls below this.
    pub tol: f64,
    /// Random axes tried in the fixed-axis candidate family.
    pub axis_samples: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings { starts: 32, max_iters: 500, tol: 1e-7, axis_samples: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QOptimum {
    /// Best value found; a lower bound on the true maximum.
    pub value: f64,
    pub argmax: AdditiveObservable,
    /// Best value of the fixed-axis candidates `sum_l (+-) n . sigma(l)`.
    pub candidate_best: f64,
    /// Final value of every ascent; entry 0 starts from the best candidate.
    pub per_start: Vec<f64>,
    /// Whether every ascent stopped on the tolerance rather than the iteration cap.
    pub converged: bool,
}

fn unit_sphere(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng)];
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if r > 1e-9 {
            return v.map(|x| x / r);
        }
    }
}

fn normalize_sites(c: &mut [[f64; 3]]) {
    for t in c.iter_mut() {
        let r = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt();
        if r > 1e-12 {
            *t = t.map(|x| x / r);
        }
    }
}

/// Projected gradient ascent on the product of unit spheres.
fn ascend(obj: &Objective, mut c: Vec<[f64; 3]>, settings: &OptimizerSettings) -> (f64, Vec<[f64; 3]>, bool) {
    let tangent = |c: &[[f64; 3]], g: &[[f64; 3]]| -> Vec<[f64; 3]> {
        c.iter()
            .zip(g)
            .map(|(ci, gi)| {
                let dot = ci[0] * gi[0] + ci[1] * gi[1] + ci[2] * gi[2];
                [gi[0] - dot * ci[0], gi[1] - dot * ci[1], gi[2] - dot * ci[2]]
            })
            .collect()
    };
    let first = obj.evaluate(&c, true);
    let mut f = first.value;
    let mut g = tangent(&c, &first.grad.unwrap());
    let gmax = |g: &[[f64; 3]]| g.iter().map(|t| (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt()).fold(0.0, f64::max);
    let mut eta = match gmax(&g) {
        m if m > 0.0 => 0.5 / m,
        _ => return (f, c, true),
    };
    for _ in 0..settings.max_iters {
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<[f64; 3]> =
                c.iter().zip(&g).map(|(ci, gi)| [ci[0] + eta * gi[0], ci[1] + eta * gi[1], ci[2] + eta * gi[2]]).collect();
            normalize_sites(&mut trial);
            let ft = obj.evaluate(&trial, false).value;
            if ft > f {
                accepted = Some((ft, trial));
                break;
            }
            eta *= 0.5;
        }
        let Some((ft, trial)) = accepted else {
            return (f, c, true);
        };
        let rel = (ft - f) / f.abs().max(1e-300);
        c = trial;
        f = ft;
        if rel < settings.tol {
            return (f, c, true);
        }
        let e = obj.evaluate(&c, true);
        g = tangent(&c, &e.grad.unwrap());
        if gmax(&g) == 0.0 {
            return (f, c, true);
        }
        eta *= 2.0;
    }
    (f, c, false)
}

fn optimize(obj: &Objective, settings: &OptimizerSettings, seed: u64, exec: Exec) -> QOptimum {
    let n = obj.n_sites;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut axes: Vec<[f64; 3]> = vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    axes.extend((0..settings.axis_samples).map(|_| unit_sphere(&mut rng)));
    let mut candidates = Vec::with_capacity(2 * axes.len());
    for axis in &axes {
        candidates.push(vec![*axis; n]);
        candidates.push((1..=n).map(|l| if l % 2 == 0 { *axis } else { axis.map(|x| -x) }).collect::<Vec<_>>());
    }
    let cand_values = exec.map(&candidates, |c| obj.evaluate(c, false).value);
    let best_cand = cand_values
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v > cand_values[b] { i } else { b });
    let candidate_best = cand_values[best_cand];

    let mut inits = vec![candidates[best_cand].clone()];
    for s in 0..settings.starts {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(s as u64 + 1);
        inits.push((0..n).map(|_| unit_sphere(&mut r)).collect());
    }
    let runs = exec.map(&inits, |c| ascend(obj, c.clone(), settings));
    let mut best = (candidate_best, candidates[best_cand].clone());
    for (v, c, _) in &runs {
        if *v > best.0 {
            best = (*v, c.clone());
        }
    }
    QOptimum {
        value: best.0,
        argmax: AdditiveObservable::new_unchecked(best.1),
        candidate_best,
        per_start: runs.iter().map(|r| r.0).collect(),
        converged: runs.iter().all(|r| r.2),
    }
}

/// Lower bound on `max_A ||[A, [A, rho]]||_1` over unit-Bloch additive observables.
pub fn max_double_commutator(rho: &MixedState, settings: &OptimizerSettings, seed: u64) -> QOptimum {
    optimize(&Objective::mixed(rho), settings, seed, Exec::default())
}

pub fn max_double_commutator_with(rho: &MixedState, settings: &OptimizerSettings, seed: u64, exec: Exec) -> QOptimum {
    optimize(&Objective::mixed(rho), settings, seed, exec)
}

/// Pure-state version working only with vectors.
pub fn max_double_commutator_pure(psi: &PureState, settings: &OptimizerSettings, seed: u64) -> QOptimum {
    optimize(&Objective::pure(psi), settings, seed, Exec::default())
}

pub fn max_double_commutator_pure_with(psi: &PureState, settings: &OptimizerSettings, seed: u64, exec: Exec) -> QOptimum {
    optimize(&Objective::pure(psi), settings, seed, exec)
}

/// Index-q maximization for either kind of state, enforcing the dense size limits.
pub fn max_double_commutator_state(state: &State, settings: &OptimizerSettings, seed: u64) -> Result<QOptimum> {
    check_q_size(state)?;
    Ok(match state {
        State::Pure(p) => max_double_commutator_pure(p, settings, seed),
        State::Mixed(m) => max_double_commutator(m, settings, seed),
    })
}

pub fn check_q_size(state: &State) -> Result<()> {
    match state {
        State::Pure(p) if p.n_sites() > MAX_PURE_Q_SITES => {
            Err(Error::TooLarge(format!("index q on pure states is limited to {MAX_PURE_Q_SITES} sites")))
        }
        State::Mixed(m) if m.n_sites() > MAX_MIXED_Q_SITES => {
            Err(Error::TooLarge(format!("index q on mixed states is limited to {MAX_MIXED_Q_SITES} sites")))
        }
        _ => Ok(()),
    }
}

/// Fits `max(N, max_A ||[A,[A,rho]]||_1)` against `N`. `q_hat` is the slope
/// clamped to `[1, 2]`; `slope` keeps the raw value.
pub fn estimate_index_q(
    spec: &FamilySpec,
    n_grid: &[usize],
    settings: &OptimizerSettings,
    seed: u64,
) -> Result<ScalingFit> {
    if n_grid.len() < 3 {
        return Err(Error::InvalidParam("index fits need at least 3 sizes".into()));
    }
    let mut values = Vec::with_capacity(n_grid.len());
    let mut unconverged = Vec::new();
    for &n in n_grid {
        if spec.family.is_mixed() && n > MAX_MIXED_Q_SITES || n > MAX_PURE_Q_SITES {
            return Err(Error::TooLarge(format!("index q at {n} sites")));
        }
        let state = spec.build(n, Some(seed))?;
        let opt = max_double_commutator_state(&state, settings, seed)?;
        if !opt.converged {
            unconverged.push(n);
        }
        values.push(opt.value.max(n as f64));
    }
    let mut fit = ScalingFit::from_values(spec.family.tag(), "q", n_grid, values)?;
    fit.q_hat = Some(fit.slope.clamp(1.0, 2.0));
    fit.unconverged = unconverged;
    Ok(fit)
}

fn check_pair(rho: &MixedState, sigma: &MixedState) -> Result<()> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Dimension(format!("{} vs {} dimensional states", rho.dim(), sigma.dim())));
    }
    Ok(())
}

/// Unhalved trace distance `||rho - sigma||_1`.
pub fn trace_distance(rho: &MixedState, sigma: &MixedState) -> Result<f64> {
    check_pair(rho, sigma)?;
    Ok(linalg::trace_norm(&(rho.matrix() - sigma.matrix())))
}

/// Root fidelity `||sqrt(rho) sqrt(sigma)||_1`, clamped to `[0, 1]`.
pub fn root_fidelity(rho: &MixedState, sigma: &MixedState) -> Result<f64> {
    check_pair(rho, sigma)?;
    let sr = linalg::psd_sqrt(rho.matrix());
    let inner = &sr * sigma.matrix() * &sr;
    let f: f64 = linalg::eigvalsh(&inner).iter().map(|&v| if v > 0.0 { v.sqrt() } else { 0.0 }).sum();
    Ok(f.clamp(0.0, 1.0))
}

/// `sqrt(2 (1 - ||sqrt(rho) sqrt(sigma)||_1))`.
pub fn bures_distance(rho: &MixedState, sigma: &MixedState) -> Result<f64> {
    Ok((2.0 * (1.0 - root_fidelity(rho, sigma)?)).max(0.0).sqrt())
}

/// `Tr(rho ln rho - rho ln sigma)` in nats; `+inf` when `rho`'s support
/// leaves `sigma`'s.
pub fn relative_entropy(rho: &MixedState, sigma: &MixedState) -> Result<f64> {
    check_pair(rho, sigma)?;
    let (rv, _) = (rho.eigenvalues(), ());
    let self_term: f64 = rv.iter().filter(|&&v| v > linalg::EIG_FLOOR).map(|&v| v * v.ln()).sum();
    let (sv, svecs) = linalg::eigh(sigma.matrix());
    let mut cross = 0.0;
    for (k, &s) in sv.iter().enumerate() {
        let u = svecs.column(k);
        let weight = (u.adjoint() * rho.matrix() * u)[(0, 0)].re;
        if s > linalg::EIG_FLOOR {
            cross += weight * s.ln();
        } else if weight > 1e-10 {
            return Ok(f64::INFINITY);
        }
    }
    Ok((self_term - cross).max(0.0))
}

/// Lower bounds on the distance from `rho` to the separable set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceBounds {
    /// Lower bound on `min_sigma ||rho - sigma||_1`.
    pub one_norm: f64,
    /// Lower bound on the Bures distance, via `1 - F >= ||rho - sigma||_1^2 / 8`.
    pub bures: f64,
    /// Lower bound on the relative entropy, via Pinsker.
    pub relative_entropy: f64,
    /// Double-commutator maximum used.
    pub max_double_commutator: f64,
    pub sep_constant: f64,
}

/// `||rho - sigma||_1 >= (max_A ||[A,[A,rho]]||_1 - c N) / (4 N^2)` for every
/// separable `sigma`, converted to Bures and relative-entropy bounds.
pub fn separable_distance_bound(rho: &MixedState, sep_constant: f64, seed: u64) -> Result<DistanceBounds> {
    if !(sep_constant > 0.0) {
        return Err(Error::InvalidParam(format!("separable constant must be positive, got {sep_constant}")));
    }
    let state = State::Mixed(rho.clone());
    check_q_size(&state)?;
    let value = max_double_commutator(rho, &OptimizerSettings::default(), seed).value;
    Ok(bounds_from_value(value, rho.n_sites(), sep_constant))
}

pub fn bounds_from_value(value: f64, n_sites: usize, sep_constant: f64) -> DistanceBounds {
    let n = n_sites as f64;
    let one_norm = ((value - sep_constant * n) / (4.0 * n * n)).max(0.0);
    DistanceBounds {
        one_norm,
        // D_B = sqrt(2 (1 - F)) >= sqrt(2 * t^2 / 8)
        bures: one_norm / 2.0,
        relative_entropy: 0.5 * one_norm * one_norm,
        max_double_commutator: value,
        sep_constant,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SepCalibration {
    pub samples: usize,
    /// Least-squares slope of value against `N` through the origin.
    pub fitted: f64,
    /// Largest observed `value / N`.
    pub max_ratio: f64,
    /// `1.5 * fitted`.
    pub constant: f64,
}

/// Maximizes the double commutator over random product states with sizes
/// drawn from `sizes` and fits `value ~ c N`.
pub fn calibrate_sep_constant(samples: usize, sizes: &[usize], settings: &OptimizerSettings, seed: u64) -> Result<SepCalibration> {
    if samples == 0 || sizes.is_empty() {
        return Err(Error::InvalidParam("calibration needs samples and sizes".into()));
    }
    let runs = crate::par::map_range(samples, |s| -> Result<(usize, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64);
        let n = sizes[rng.random_range(0..sizes.len())];
        let bloch: Vec<[f64; 3]> = (0..n).map(|_| unit_sphere(&mut rng)).collect();
        let psi = crate::qstate::make_state(
            &FamilySpec::new(crate::qstate::Family::Product).with_bloch(bloch),
            n,
            None,
        )?;
        let opt = optimize(&Objective::pure(&psi), settings, rng.random(), Exec::Sequential);
        Ok((n, opt.value))
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let sxy: f64 = runs.iter().map(|(n, v)| *n as f64 * v).sum();
    let sxx: f64 = runs.iter().map(|(n, _)| (*n as f64).powi(2)).sum();
    let fitted = sxy / sxx;
    let max_ratio = runs.iter().map(|(n, v)| v / *n as f64).fold(0.0, f64::max);
    Ok(SepCalibration { samples, fitted, max_ratio, constant: 1.5 * fitted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{make_density, make_state, mix, random_density, Axis, Family};
    use approx::assert_abs_diff_eq;

    fn ghz(n: usize) -> PureState {
        make_state(&Family::Ghz.into(), n, None).unwrap()
    }

    fn macro_mixture(n: usize) -> MixedState {
        make_density(&Family::GhzMixture.into(), n, None).unwrap()
    }

    #[test]
    fn double_commutator_examples() {
        let mz = AdditiveObservable::magnetization(4, Axis::Z);
        let x = double_commutator(&mz, &macro_mixture(4)).unwrap();
        assert!(x.norm() < 1e-12);

        // closed form in the {|0000>, |1111>} subspace: 2 N^2 (|0><1| + h.c.)
        let x = double_commutator(&mz, &ghz(4).projector()).unwrap();
        for r in 0..16 {
            for c in 0..16 {
                let want = if (r, c) == (0, 15) || (r, c) == (15, 0) { 32.0 } else { 0.0 };
                assert_abs_diff_eq!(x[(r, c)].re, want, epsilon = 1e-12);
                assert_abs_diff_eq!(x[(r, c)].im, 0.0, epsilon = 1e-12);
            }
        }
        assert_abs_diff_eq!(trace_norm(&x), 64.0, epsilon = 1e-10);

        let zero = AdditiveObservable::zero(4);
        assert!(double_commutator(&zero, &ghz(4).projector()).unwrap().norm() < 1e-15);
        assert!(matches!(double_commutator(&zero, &ghz(3).projector()), Err(Error::Dimension(_))));
    }

    #[test]
    fn double_commutator_is_traceless_and_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = random_density(3, 8, &mut rng).unwrap();
        let a = AdditiveObservable::new(vec![[0.3, -0.2, 0.5], [0.0, 1.0, 0.0], [-0.6, 0.0, 0.8]]).unwrap();
        let x = double_commutator(&a, &rho).unwrap();
        assert!(linalg::hermiticity_error(&x) < 1e-12);
        assert!(linalg::trace(&x).norm() < 1e-10);
    }

    #[test]
    fn fast_path_examples() {
        let mz = AdditiveObservable::magnetization(6, Axis::Z);
        assert_abs_diff_eq!(trace_norm_pure_fast(&mz, &ghz(6)).unwrap(), 144.0, epsilon = 1e-9);
        let zero = make_state(&Family::Product.into(), 6, None).unwrap();
        assert_abs_diff_eq!(trace_norm_pure_fast(&mz, &zero).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn fast_path_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for case in 0..40 {
            let n = 2 + case % 5;
            let psi = make_state(&Family::Random.into(), n, Some(case as u64)).unwrap();
            let terms = (0..n).map(|_| unit_sphere(&mut rng).map(|x| x * rng.random_range(0.0..1.0))).collect();
            let a = AdditiveObservable::new(terms).unwrap();
            let dense = trace_norm(&double_commutator(&a, &psi.projector()).unwrap());
            let fast = trace_norm_pure_fast(&a, &psi).unwrap();
            assert!((dense - fast).abs() < 1e-8, "case {case}: {dense} vs {fast}");
        }
    }

    fn finite_difference(obj: &Objective, c: &[[f64; 3]]) -> Vec<[f64; 3]> {
        let h = 1e-6;
        let mut g = vec![[0.0; 3]; c.len()];
        for l in 0..c.len() {
            for a in 0..3 {
                let mut p = c.to_vec();
                let mut m = c.to_vec();
                p[l][a] += h;
                m[l][a] -= h;
                g[l][a] = (obj.evaluate(&p, false).value - obj.evaluate(&m, false).value) / (2.0 * h);
            }
        }
        g
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = make_state(&Family::Random.into(), 4, Some(3)).unwrap();
        let rho_low = mix(&[
            (0.6, make_state(&Family::Random.into(), 4, Some(8)).unwrap()),
            (0.4, make_state(&Family::Random.into(), 4, Some(9)).unwrap()),
        ])
        .unwrap();
        let rho_full = random_density(3, 8, &mut rng).unwrap();
        let cases = [(Objective::pure(&psi), 4), (Objective::mixed(&rho_low), 4), (Objective::mixed(&rho_full), 3)];
        assert!(matches!(cases[2].0.repr, Repr::Dense(_)));
        for (obj, n) in &cases {
            let c: Vec<[f64; 3]> = (0..*n).map(|_| unit_sphere(&mut rng).map(|x| 0.9 * x)).collect();
            let g = obj.evaluate(&c, true).grad.unwrap();
            let fd = finite_difference(obj, &c);
            for l in 0..*n {
                for a in 0..3 {
                    assert!((g[l][a] - fd[l][a]).abs() < 1e-5 * (1.0 + fd[l][a].abs()), "{} vs {}", g[l][a], fd[l][a]);
                }
            }
        }
    }

    #[test]
    fn optimizer_on_ghz_reaches_closed_form() {
        let settings = OptimizerSettings { starts: 4, ..Default::default() };
        let opt = max_double_commutator(&ghz(6).projector(), &settings, 1);
        assert!(opt.value >= 144.0 * (1.0 - 1e-12));
        let again = max_double_commutator(&ghz(6).projector(), &settings, 1);
        assert_eq!(opt, again);
    }

    #[test]
    fn optimizer_on_maximally_mixed_is_zero() {
        let rho = make_density(&Family::MaximallyMixed.into(), 3, None).unwrap();
        let opt = max_double_commutator(&rho, &OptimizerSettings { starts: 2, ..Default::default() }, 0);
        assert!(opt.value.abs() < 1e-10);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let settings = OptimizerSettings { starts: 3, axis_samples: 8, ..Default::default() };
        let psi = make_state(&Family::Random.into(), 5, Some(2)).unwrap();
        let a = max_double_commutator_pure_with(&psi, &settings, 3, Exec::Sequential);
        let b = max_double_commutator_pure_with(&psi, &settings, 3, Exec::Parallel);
        assert_eq!(a, b);
    }

    #[test]
    fn distances_of_identical_states_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_density(2, 4, &mut rng).unwrap();
        assert_abs_diff_eq!(trace_distance(&rho, &rho).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(bures_distance(&rho, &rho).unwrap(), 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(relative_entropy(&rho, &rho).unwrap(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn orthogonal_pure_states() {
        let a = PureState::basis(2, 0).unwrap().projector();
        let b = PureState::basis(2, 3).unwrap().projector();
        assert_abs_diff_eq!(trace_distance(&a, &b).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(bures_distance(&a, &b).unwrap(), 2f64.sqrt(), epsilon = 1e-12);
        assert_eq!(relative_entropy(&a, &b).unwrap(), f64::INFINITY);
    }

    #[test]
    fn ghz_relative_to_macro_mixture_is_ln2() {
        let s = relative_entropy(&ghz(4).projector(), &macro_mixture(4)).unwrap();
        assert_abs_diff_eq!(s, std::f64::consts::LN_2, epsilon = 1e-10);
    }

    #[test]
    fn separable_bound_examples() {
        let b = bounds_from_value(144.0, 6, 8.0);
        assert_abs_diff_eq!(b.one_norm, 2.0 / 3.0, epsilon = 1e-12);
        let g = separable_distance_bound(&ghz(6).projector(), 8.0, 0).unwrap();
        assert!(g.one_norm >= 2.0 / 3.0 - 1e-9);
        let m = separable_distance_bound(&macro_mixture(6), DEFAULT_SEP_CONSTANT, 0).unwrap();
        assert_eq!(m.one_norm, 0.0);
        let mm = make_density(&Family::MaximallyMixed.into(), 4, None).unwrap();
        assert_eq!(separable_distance_bound(&mm, DEFAULT_SEP_CONSTANT, 0).unwrap().one_norm, 0.0);
        assert!(separable_distance_bound(&mm, 0.0, 0).is_err());
    }
}
