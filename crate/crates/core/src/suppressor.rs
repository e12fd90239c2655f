//! Suppressing-signal computation and transmit assembly.
//!
//! Two solve paths produce the coefficient vector `s` behind the suppressing
//! signal `c = P s`:
//!
//! * [`solve_lsqi`] minimizes the notch-band spectrum norm under the power
//!   ball, via the regularized normal equations with a bisection search on
//!   the multiplier.
//! * [`solve_joint`] minimizes a weighted sum of the notch norm and the
//!   time-domain peak, as a second-order cone program handed to [`crate::socp`].
//!
//! The notch spectrum is measured through rows of an oversampled DFT of the
//! whole frame. Row entries have unit modulus (no `1/sqrt` normalization);
//! the LSQI solution is invariant to that scale, and the joint objective's
//! `lambda` weighting is calibrated against it.

use crate::alignment::AlignmentBasis;
use crate::config::SystemConfig;
use crate::ofdm::TimeSymbol;
use crate::socp::{self, SocpProblem};
use crate::{C64, CMat, CVec};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SuppressorError {
    #[error("notch band selects no spectrum bins")]
    EmptyNotch,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("bisection bracket failure: ||s({lambda0:.3e})||^2 = {norm2:.6e} never fell below budget {eps:.6e}")]
    BracketFailure { lambda0: f64, norm2: f64, eps: f64 },
    #[error("cone solver did not converge: {0}")]
    Solver(#[from] socp::SocpError),
}

/// Rows of the oversampled frame DFT that fall in the notch band.
#[derive(Debug, Clone)]
pub struct NotchProjector {
    bins: Vec<usize>,
    matrix: CMat,
}

impl NotchProjector {
    pub fn new(cfg: &SystemConfig) -> Result<Self, SuppressorError> {
        let bins = cfg.notch_bins();
        if bins.is_empty() {
            return Err(SuppressorError::EmptyNotch);
        }
        let total = (cfg.zeta * cfg.n) as f64;
        let frame = cfg.frame_len();
        let matrix = CMat::from_fn(bins.len(), frame, |r, c| {
            let phase = -TAU * (bins[r] as f64) * (c as f64) / total;
            C64::new(phase.cos(), phase.sin())
        });
        Ok(NotchProjector { bins, matrix })
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    /// Selected rows of the oversampled DFT, `bins x (N+L)`.
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Notch-band energy of a frame, `||F_K t||^2`.
    pub fn band_energy(&self, t: &TimeSymbol) -> f64 {
        (&self.matrix * t).norm_squared()
    }
}

/// Per-symbol operators of the notch objective `||F_d + F_s s||`.
#[derive(Debug, Clone)]
pub struct SpectralOperators {
    /// Data leakage into the notch bins: `F_K x`.
    pub f_d: CVec,
    /// Suppressor reach into the notch bins: `F_K P`.
    pub f_s: CMat,
}

/// Build the notch operators for one modulated symbol `x = A F^H M d`.
pub fn spectral_operators(
    proj: &NotchProjector,
    basis: &AlignmentBasis,
    x: &TimeSymbol,
) -> SpectralOperators {
    SpectralOperators { f_d: proj.matrix() * x, f_s: proj.matrix() * basis.matrix() }
}

/// Per-symbol suppressor power budget `alpha * ||x||^2`.
pub fn power_budget(alpha: f64, x: &TimeSymbol) -> f64 {
    alpha * x.norm_squared()
}

/// How the symbol and suppressor share the transmit power budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransmitPolicy {
    /// `t = (x + c) / sqrt(1 + alpha)`: the worst-case total power equals
    /// the plain-OFDM reference, and the suppressor never takes more than
    /// `alpha / (1 + alpha)` of it.
    SharedBudget,
    /// `t = x + c`.
    Raw,
}

/// Assemble the transmitted symbol under the given power policy.
pub fn assemble_transmit(
    x: &TimeSymbol,
    c: &TimeSymbol,
    policy: TransmitPolicy,
    alpha: f64,
) -> TimeSymbol {
    let t = x + c;
    match policy {
        TransmitPolicy::SharedBudget => t / C64::new((1.0 + alpha).sqrt(), 0.0),
        TransmitPolicy::Raw => t,
    }
}

/// Which algorithm produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverPath {
    /// Closed form / bisection on the regularized normal equations.
    Lsqi,
    /// Primal-dual interior point on the epigraph cone program.
    InteriorPoint,
    /// ADMM fallback.
    Admm,
}

/// Solver output: the coefficient vector plus diagnostics.
#[derive(Debug, Clone)]
pub struct SuppressorSolution {
    pub s: CVec,
    /// Suppressing signal `c = P s` in frame coordinates.
    pub c: TimeSymbol,
    /// `||F_d + F_s s||_2` at the solution.
    pub objective_oob: f64,
    /// `||x + P s||_inf` at the solution.
    pub objective_papr: f64,
    /// Lagrange multiplier of the power constraint (LSQI path only).
    pub lambda0: Option<f64>,
    pub iterations: usize,
    /// `||s||^2`.
    pub power_used: f64,
    /// Whether the power constraint is binding at the solution.
    pub active_budget: bool,
    pub path: SolverPath,
}

impl SuppressorSolution {
    #[allow(clippy::too_many_arguments)]
    fn finish(
        s: CVec,
        basis: &AlignmentBasis,
        x: &TimeSymbol,
        ops: &SpectralOperators,
        lambda0: Option<f64>,
        iterations: usize,
        eps: f64,
        path: SolverPath,
    ) -> Self {
        let c = basis.expand(&s);
        let objective_oob = (&ops.f_d + &ops.f_s * &s).norm();
        let objective_papr = (x + &c).iter().map(|v| v.norm()).fold(0.0, f64::max);
        let power_used = s.norm_squared();
        let active_budget = eps > 0.0 && ((power_used - eps).abs() <= 1e-4 * eps);
        SuppressorSolution {
            s,
            c,
            objective_oob,
            objective_papr,
            lambda0,
            iterations,
            power_used,
            active_budget,
            path,
        }
    }
}

/// Eigen-decomposed Gram matrix of `F_s`, shared by both solve paths.
struct NotchGram {
    /// Unitary eigenbasis of `F_s^H F_s`.
    q: CMat,
    /// Eigenvalues, clamped at zero.
    lams: Vec<f64>,
    /// Rank threshold.
    thr: f64,
}

impl NotchGram {
    fn new(f_s: &CMat) -> Self {
        let gram = f_s.adjoint() * f_s;
        let m = gram.nrows();
        let eig = nalgebra::SymmetricEigen::new(gram);
        let lams: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        let lmax = lams.iter().cloned().fold(0.0, f64::max);
        let thr = m as f64 * f64::EPSILON * lmax;
        NotchGram { q: eig.eigenvectors, lams, thr }
    }

    /// `||s(l0)||^2` along the regularized path, from projected coordinates.
    fn path_norm2(&self, beta: &CVec, l0: f64) -> f64 {
        beta.iter()
            .zip(&self.lams)
            .map(|(b, &l)| b.norm_sqr() / ((l + l0) * (l + l0)))
            .sum()
    }

    fn path_solution(&self, beta: &CVec, l0: f64) -> CVec {
        let scaled = CVec::from_fn(beta.len(), |i, _| -beta[i] / (self.lams[i] + l0));
        &self.q * scaled
    }

    /// Minimum-norm least-squares solution (pseudoinverse on the range).
    fn pinv_solution(&self, beta: &CVec) -> CVec {
        let scaled = CVec::from_fn(beta.len(), |i, _| {
            if self.lams[i] > self.thr { -beta[i] / self.lams[i] } else { C64::new(0.0, 0.0) }
        });
        &self.q * scaled
    }

    fn pinv_norm2(&self, beta: &CVec) -> f64 {
        beta.iter()
            .zip(&self.lams)
            .filter(|(_, &&l)| l > self.thr)
            .map(|(b, &l)| b.norm_sqr() / (l * l))
            .sum()
    }
}

const BISECT_TOL: f64 = 1e-6;
const BISECT_CAP: usize = 200;

/// Pure out-of-band suppression: minimize `||F_d + F_s s||` subject to
/// `||s||^2 <= eps`.
///
/// If the unconstrained least-squares solution fits the budget it is
/// returned with a zero multiplier; otherwise the multiplier solving
/// `||s(l0)||^2 = eps` is bracketed by doubling from the largest Gram
/// eigenvalue and bisected to `1e-6` relative tolerance on the norm.
pub fn solve_lsqi(
    ops: &SpectralOperators,
    basis: &AlignmentBasis,
    x: &TimeSymbol,
    eps: f64,
) -> Result<SuppressorSolution, SuppressorError> {
    let m = ops.f_s.ncols();
    if basis.dim() != m {
        return Err(SuppressorError::Dimension(format!(
            "basis dim {} vs F_s columns {m}",
            basis.dim()
        )));
    }
    if eps <= 0.0 {
        let s = CVec::zeros(m);
        return Ok(SuppressorSolution::finish(s, basis, x, ops, None, 0, eps, SolverPath::Lsqi));
    }

    let gram = NotchGram::new(&ops.f_s);
    let beta = gram.q.adjoint() * (ops.f_s.adjoint() * &ops.f_d);

    // unconstrained branch
    if gram.pinv_norm2(&beta) <= eps {
        let s = gram.pinv_solution(&beta);
        return Ok(SuppressorSolution::finish(
            s,
            basis,
            x,
            ops,
            Some(0.0),
            0,
            eps,
            SolverPath::Lsqi,
        ));
    }

    // bracket: double from the largest eigenvalue until the norm drops
    // below the budget
    let lmax = gram.lams.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut hi = lmax;
    let mut doublings = 0;
    while gram.path_norm2(&beta, hi) > eps {
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(SuppressorError::BracketFailure {
                lambda0: hi,
                norm2: gram.path_norm2(&beta, hi),
                eps,
            });
        }
    }
    let mut lo = 0.0f64;
    let mut lo_norm = gram.path_norm2(&beta, lo);
    let mut iterations = doublings;
    let mut l0 = hi;
    for _ in 0..BISECT_CAP {
        let mid = 0.5 * (lo + hi);
        let norm2 = gram.path_norm2(&beta, mid);
        debug_assert!(norm2 <= lo_norm * (1.0 + 1e-12), "norm must decrease along the bracket");
        iterations += 1;
        if norm2 > eps {
            lo = mid;
            lo_norm = norm2;
        } else {
            hi = mid;
        }
        l0 = hi;
        let at_hi = gram.path_norm2(&beta, hi);
        if (at_hi - eps).abs() <= BISECT_TOL * eps {
            break;
        }
    }
    let s = gram.path_solution(&beta, l0);
    Ok(SuppressorSolution::finish(s, basis, x, ops, Some(l0), iterations, eps, SolverPath::Lsqi))
}

/// Data -> coefficients map of the regularized path at a fixed multiplier:
/// `s = Phi d` with `Phi = -(F_s^H F_s + l0 I)^{-1} F_s^H F_K A F^H M`.
///
/// Errors if the system is singular at `l0 = 0`.
pub fn coefficient_map(
    f_s: &CMat,
    proj: &NotchProjector,
    modulator: &CMat,
    lambda0: f64,
) -> Result<CMat, SuppressorError> {
    let gram = NotchGram::new(f_s);
    if lambda0 <= 0.0 && gram.lams.iter().any(|&l| l <= gram.thr) {
        return Err(SuppressorError::Dimension(
            "normal equations singular at zero multiplier".into(),
        ));
    }
    let y = f_s.adjoint() * (proj.matrix() * modulator);
    let mut scaled = gram.q.adjoint() * y;
    for i in 0..scaled.nrows() {
        let denom = gram.lams[i] + lambda0;
        for j in 0..scaled.ncols() {
            scaled[(i, j)] = -scaled[(i, j)] / denom;
        }
    }
    Ok(&gram.q * scaled)
}

/// Joint OOB/PAPR suppression: minimize
/// `(1-lambda) ||F_d + F_s s|| + lambda ||x + P s||_inf` subject to
/// `||s||^2 <= eps`, via the epigraph cone program.
pub fn solve_joint(
    ops: &SpectralOperators,
    basis: &AlignmentBasis,
    x: &TimeSymbol,
    eps: f64,
    lambda: f64,
) -> Result<SuppressorSolution, SuppressorError> {
    assert!((0.0..=1.0).contains(&lambda), "lambda must be in [0, 1]");
    let m = basis.dim();
    if eps <= 0.0 {
        let s = CVec::zeros(m);
        return Ok(SuppressorSolution::finish(
            s,
            basis,
            x,
            ops,
            None,
            0,
            eps,
            SolverPath::InteriorPoint,
        ));
    }

    let problem = build_epigraph_problem(ops, basis, x, eps, lambda);
    let opts = socp::SocpOptions::default();
    match socp::solve(&problem, &opts) {
        Ok(sol) => {
            let s = extract_coeffs(&sol.x, m, eps);
            Ok(SuppressorSolution::finish(
                s,
                basis,
                x,
                ops,
                None,
                sol.iterations,
                eps,
                SolverPath::InteriorPoint,
            ))
        }
        Err(ipm_err) => {
            // ADMM fallback keeps the sweep alive on the rare instance the
            // interior point stalls.
            match admm_fallback(ops, basis, x, eps, lambda) {
                Some((s, iters)) => Ok(SuppressorSolution::finish(
                    s,
                    basis,
                    x,
                    ops,
                    None,
                    iters,
                    eps,
                    SolverPath::Admm,
                )),
                None => Err(SuppressorError::Solver(ipm_err)),
            }
        }
    }
}

/// Stack a complex vector as `[Re; Im]`.
fn realify_vec(v: &CVec) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

/// Real block form `[[Re, -Im], [Im, Re]]` acting on `[Re s; Im s]`.
fn realify_mat(m: &CMat) -> DMatrix<f64> {
    let (r, c) = m.shape();
    DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let v = m[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    })
}

/// Epigraph form: variables `[Re s; Im s; u; v]`, minimize
/// `(1-lambda) u + lambda v` over
/// `||F_d + F_s s|| <= u`, `|x_i + (Ps)_i| <= v`, `||s|| <= sqrt(eps)`.
///
/// The notch cone is compressed through the Gram eigenbasis, so its body
/// has `2m` rows plus one constant row carrying the unreachable residual.
/// At the endpoints `lambda = 0` and `lambda = 1` the zero-weight term and
/// its epigraph variable are dropped entirely.
fn build_epigraph_problem(
    ops: &SpectralOperators,
    basis: &AlignmentBasis,
    x: &TimeSymbol,
    eps: f64,
    lambda: f64,
) -> SocpProblem {
    let m = basis.dim();
    let frame = x.len();
    let with_oob = lambda < 1.0;
    let with_papr = lambda > 0.0;
    let ns = 2 * m;
    let u_col = ns;
    let v_col = if with_oob { ns + 1 } else { ns };
    let n = ns + usize::from(with_oob) + usize::from(with_papr);

    let mut rows = 0;
    let mut cones = Vec::new();
    if with_oob {
        cones.push(2 * m + 2);
        rows += 2 * m + 2;
    }
    if with_papr {
        for _ in 0..frame {
            cones.push(3);
        }
        rows += 3 * frame;
    }
    cones.push(ns + 1);
    rows += ns + 1;

    let mut g = DMatrix::<f64>::zeros(rows, n);
    let mut h = DVector::<f64>::zeros(rows);
    let mut c = DVector::<f64>::zeros(n);
    if with_oob {
        c[u_col] = 1.0 - lambda;
    }
    if with_papr {
        c[v_col] = lambda;
    }

    let mut at = 0;
    if with_oob {
        // (u, realify(D^{1/2} Q^H s + D^{-1/2} beta), rho) in Q^{2m+2};
        // rho is the component of F_d outside the reach of F_s.
        let gram = NotchGram::new(&ops.f_s);
        let beta = gram.q.adjoint() * (ops.f_s.adjoint() * &ops.f_d);
        let mut sqrt_rows = gram.q.adjoint();
        let mut offset = CVec::zeros(m);
        let mut reach = 0.0;
        for i in 0..m {
            let l = gram.lams[i];
            if l > gram.thr {
                let sq = l.sqrt();
                for j in 0..m {
                    sqrt_rows[(i, j)] *= C64::new(sq, 0.0);
                }
                offset[i] = beta[i] / sq;
                reach += beta[i].norm_sqr() / l;
            } else {
                for j in 0..m {
                    sqrt_rows[(i, j)] = C64::new(0.0, 0.0);
                }
            }
        }
        let rho = (ops.f_d.norm_squared() - reach).max(0.0).sqrt();

        g[(at, u_col)] = -1.0;
        let body = realify_mat(&sqrt_rows);
        let off = realify_vec(&offset);
        for i in 0..2 * m {
            for j in 0..ns {
                g[(at + 1 + i, j)] = -body[(i, j)];
            }
            h[at + 1 + i] = off[i];
        }
        h[at + 1 + 2 * m] = rho;
        at += 2 * m + 2;
    }
    if with_papr {
        // per sample: (v, Re(x_i + (Ps)_i), Im(...)) in Q^3
        let p = basis.matrix();
        for i in 0..frame {
            g[(at, v_col)] = -1.0;
            for j in 0..m {
                let pij = p[(i, j)];
                g[(at + 1, j)] = -pij.re;
                g[(at + 1, m + j)] = pij.im;
                g[(at + 2, j)] = -pij.im;
                g[(at + 2, m + j)] = -pij.re;
            }
            h[at + 1] = x[i].re;
            h[at + 2] = x[i].im;
            at += 3;
        }
    }
    // (sqrt(eps), Re s, Im s) in Q^{2m+1}
    h[at] = eps.sqrt();
    for j in 0..ns {
        g[(at + 1 + j, j)] = -1.0;
    }

    SocpProblem { c, g, h, cones }
}

fn extract_coeffs(x_socp: &DVector<f64>, m: usize, eps: f64) -> CVec {
    let mut s = CVec::from_fn(m, |i, _| C64::new(x_socp[i], x_socp[m + i]));
    // numerical feasibility clamp at the ball boundary
    let p = s.norm_squared();
    if p > eps * (1.0 + 1e-9) {
        s *= C64::new((eps / p).sqrt(), 0.0);
    }
    s
}

const ADMM_ITERS: usize = 20_000;

/// Consensus ADMM on the original two-term objective; used only when the
/// interior point reports failure.
fn admm_fallback(
    ops: &SpectralOperators,
    basis: &AlignmentBasis,
    x: &TimeSymbol,
    eps: f64,
    lambda: f64,
) -> Option<(CVec, usize)> {
    let m = basis.dim();
    let frame = x.len();
    let f_s = &ops.f_s;
    let p = basis.matrix();
    let rho = 1.0;

    // s-update system: F_s^H F_s + P^H P + I = G + 2I, diagonal in the
    // Gram eigenbasis
    let gram = NotchGram::new(f_s);
    let denom: Vec<f64> = gram.lams.iter().map(|&l| l + 2.0).collect();

    let mut s;
    let mut w1 = ops.f_d.clone();
    let mut w2 = x.clone();
    let mut w3 = CVec::zeros(m);
    let mut u1 = CVec::zeros(w1.len());
    let mut u2 = CVec::zeros(frame);
    let mut u3 = CVec::zeros(m);
    let mut best: Option<(f64, CVec)> = None;

    for _ in 0..ADMM_ITERS {
        let rhs = f_s.adjoint() * (&w1 - &ops.f_d - &u1)
            + p.adjoint() * (&w2 - x - &u2)
            + (&w3 - &u3);
        let proj = gram.q.adjoint() * rhs;
        let scaled = CVec::from_fn(m, |i, _| proj[i] / denom[i]);
        s = &gram.q * scaled;

        // w1: prox of (1-lambda)/rho * ||.||_2 (block soft threshold)
        let v1 = f_s * &s + &ops.f_d + &u1;
        let kappa1 = (1.0 - lambda) / rho;
        let n1 = v1.norm();
        w1 = if n1 <= kappa1 {
            CVec::zeros(v1.len())
        } else {
            &v1 * C64::new(1.0 - kappa1 / n1, 0.0)
        };

        // w2: prox of lambda/rho * ||.||_inf via l1-ball projection of moduli
        let v2 = p * &s + x + &u2;
        let kappa2 = lambda / rho;
        w2 = if kappa2 > 0.0 { prox_inf_norm(&v2, kappa2) } else { v2.clone() };

        // w3: projection onto the power ball
        let v3 = &s + &u3;
        let n3 = v3.norm_squared();
        w3 = if n3 > eps { &v3 * C64::new((eps / n3).sqrt(), 0.0) } else { v3.clone() };

        u1 += f_s * &s + &ops.f_d - &w1;
        u2 += p * &s + x - &w2;
        u3 += &s - &w3;

        // track the best feasible iterate of the true objective
        let mut cand = w3.clone();
        let pw = cand.norm_squared();
        if pw > eps {
            cand *= C64::new((eps / pw).sqrt(), 0.0);
        }
        let obj = (1.0 - lambda) * (&ops.f_d + f_s * &cand).norm()
            + lambda * (x + p * &cand).iter().map(|v| v.norm()).fold(0.0, f64::max);
        if obj.is_finite() && best.as_ref().map_or(true, |(b, _)| obj < *b) {
            best = Some((obj, cand));
        }
    }

    best.map(|(_, s)| (s, ADMM_ITERS))
}

/// `prox_{kappa ||.||_inf}` for complex vectors: shrink the modulus profile
/// by the l1-ball projection of its Moreau dual, keeping phases.
fn prox_inf_norm(v: &CVec, kappa: f64) -> CVec {
    let mags: Vec<f64> = v.iter().map(|z| z.norm()).collect();
    let proj = project_l1_ball(&mags.iter().map(|&x| x / kappa).collect::<Vec<_>>(), 1.0);
    CVec::from_fn(v.len(), |i, _| {
        if mags[i] > 0.0 {
            let new_mag = mags[i] - kappa * proj[i];
            v[i] * C64::new(new_mag / mags[i], 0.0)
        } else {
            v[i]
        }
    })
}

/// Euclidean projection of a nonnegative vector onto the l1 ball.
fn project_l1_ball(mags: &[f64], radius: f64) -> Vec<f64> {
    let total: f64 = mags.iter().sum();
    if total <= radius {
        return mags.to_vec();
    }
    let mut sorted = mags.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &val) in sorted.iter().enumerate() {
        cum += val;
        let cand = (cum - radius) / (i as f64 + 1.0);
        if val - cand > 0.0 {
            theta = cand;
        } else {
            break;
        }
    }
    mags.iter().map(|&x| (x - theta).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::null_basis;
    use crate::channel::{draw_channel, toeplitz_channel};
    use crate::config::SystemConfig;
    use crate::ofdm::{self, LinearMaps};
    use crate::rng::substream;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn symbol(cfg: &SystemConfig, maps: &LinearMaps, rng: &mut impl Rng) -> TimeSymbol {
        let bits: Vec<bool> =
            (0..cfg.n_data() * cfg.mod_order.bits_per_symbol()).map(|_| rng.gen()).collect();
        let d = ofdm::qam_modulate(&bits, cfg.mod_order).unwrap();
        ofdm::ofdm_modulate(&d, maps).unwrap()
    }

    fn instance(seed: u64) -> (SystemConfig, NotchProjector, AlignmentBasis, TimeSymbol) {
        let cfg = SystemConfig::reference();
        let maps = LinearMaps::new(&cfg);
        let proj = NotchProjector::new(&cfg).unwrap();
        let mut rng = substream(seed, &[0]);
        let h = draw_channel(17, &mut rng);
        let op = toeplitz_channel(&h, 80).unwrap();
        let basis = null_basis(&maps, &op).unwrap();
        let x = symbol(&cfg, &maps, &mut rng);
        (cfg, proj, basis, x)
    }

    #[test]
    fn zero_data_zero_leakage() {
        let (_, proj, basis, x) = instance(30);
        let ops = spectral_operators(&proj, &basis, &CVec::zeros(x.len()));
        assert_eq!(ops.f_d.norm(), 0.0);
        let sol = solve_lsqi(&ops, &basis, &CVec::zeros(x.len()), 1.0).unwrap();
        assert_eq!(sol.s.norm(), 0.0);
        assert_eq!(sol.objective_oob, 0.0);
    }

    #[test]
    fn notch_rows_match_direct_dft() {
        let (cfg, proj, basis, x) = instance(31);
        let ops = spectral_operators(&proj, &basis, &x);
        let total = (cfg.zeta * cfg.n) as f64;
        for (row, &q) in proj.bins().iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (nn, xv) in x.iter().enumerate() {
                let phase = -TAU * q as f64 * nn as f64 / total;
                acc += xv * C64::new(phase.cos(), phase.sin());
            }
            assert!((acc - ops.f_d[row]).norm() < 1e-10 * (1.0 + acc.norm()));
        }
    }

    #[test]
    fn single_bin_notch_sees_its_subcarrier_peak() {
        // a lone tone radiates maximal energy into its own bin
        let cfg = SystemConfig {
            zeta: 1,
            notch_first: 20,
            notch_width: 1,
            ..SystemConfig::reference()
        }
        .validated()
        .unwrap();
        let proj = NotchProjector::new(&cfg).unwrap();
        assert_eq!(proj.bins(), &[20]);
        // CP-extended complex exponential at bin 20
        let x = CVec::from_fn(80, |j, _| {
            let t = ((j + 48) % 64) as f64;
            let phase = TAU * 20.0 * t / 64.0;
            C64::new(phase.cos(), phase.sin()) / 8.0
        });
        let here = proj.band_energy(&x);
        for q in 0..64usize {
            if q == 20 {
                continue;
            }
            let other = CMat::from_fn(1, 80, |_, c| {
                let phase = -TAU * (q as f64) * (c as f64) / 64.0;
                C64::new(phase.cos(), phase.sin())
            });
            assert!((&other * &x).norm_squared() < here);
        }
    }

    #[test]
    fn unconstrained_solution_is_pseudoinverse() {
        let (_, proj, basis, x) = instance(32);
        let ops = spectral_operators(&proj, &basis, &x);
        let sol = solve_lsqi(&ops, &basis, &x, f64::INFINITY).unwrap();
        assert_eq!(sol.lambda0, Some(0.0));
        // residual orthogonality F_s^H (F_d + F_s s) = 0
        let resid = ops.f_s.adjoint() * (&ops.f_d + &ops.f_s * &sol.s);
        assert!(resid.norm() < 1e-9 * (1.0 + ops.f_d.norm()), "residual {}", resid.norm());
    }

    #[test]
    fn tight_budget_binds_and_matches_projected_gradient_oracle() {
        let (_, proj, basis, x) = instance(33);
        let ops = spectral_operators(&proj, &basis, &x);
        let eps = 0.05 * x.norm_squared();
        let sol = solve_lsqi(&ops, &basis, &x, eps).unwrap();
        assert!(sol.active_budget);
        assert!((sol.power_used - eps).abs() <= 1e-4 * eps);
        assert!(sol.lambda0.unwrap() > 0.0);

        // independent oracle: projected gradient on the squared objective
        let gram = ops.f_s.adjoint() * &ops.f_s;
        let b = ops.f_s.adjoint() * &ops.f_d;
        let lmax = nalgebra::SymmetricEigen::new(gram.clone()).eigenvalues.max();
        let step = 1.0 / (2.0 * lmax);
        let mut s = CVec::zeros(basis.dim());
        for _ in 0..200_000 {
            let grad = (&gram * &s + &b) * C64::new(2.0, 0.0);
            s -= grad * C64::new(step, 0.0);
            let pw = s.norm_squared();
            if pw > eps {
                s *= C64::new((eps / pw).sqrt(), 0.0);
            }
        }
        let oracle_obj = (&ops.f_d + &ops.f_s * &s).norm();
        assert_relative_eq!(sol.objective_oob, oracle_obj, max_relative = 1e-6);
    }

    #[test]
    fn objective_nonincreasing_in_budget() {
        let (_, proj, basis, x) = instance(34);
        let ops = spectral_operators(&proj, &basis, &x);
        let mut last = f64::INFINITY;
        for eps_frac in [0.01, 0.05, 0.1, 0.25, 1.0] {
            let sol = solve_lsqi(&ops, &basis, &x, eps_frac * x.norm_squared()).unwrap();
            assert!(sol.objective_oob <= last * (1.0 + 1e-9));
            last = sol.objective_oob;
        }
    }

    #[test]
    fn budget_and_policy_bookkeeping() {
        let (_, _, _, x) = instance(37);
        assert_eq!(power_budget(0.0, &x), 0.0);
        let unit = CVec::from_element(1, C64::new(1.0, 0.0));
        assert_relative_eq!(power_budget(0.25, &unit), 0.25, epsilon = 1e-15);
        let c = CVec::zeros(x.len());
        let t = assemble_transmit(&x, &c, TransmitPolicy::SharedBudget, 0.0);
        assert!((&t - &x).norm() == 0.0);
        let t = assemble_transmit(&x, &c, TransmitPolicy::Raw, 0.25);
        assert!((&t - &x).norm() == 0.0);
        let t = assemble_transmit(&x, &c, TransmitPolicy::SharedBudget, 0.25);
        assert_relative_eq!(t.norm_squared(), x.norm_squared() / 1.25, max_relative = 1e-12);
    }

    #[test]
    fn l1_projection_kkt_conditions() {
        let inside = vec![0.2, 0.3];
        assert_eq!(project_l1_ball(&inside, 1.0), inside);
        let v = vec![2.0, 1.0, 0.1];
        let p = project_l1_ball(&v, 1.0);
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(v[0] - p[0], v[1] - p[1], epsilon = 1e-12);
        assert_eq!(p[2], 0.0);
    }
}

