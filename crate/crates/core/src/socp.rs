//! Small dense second-order cone solver.
//!
//! Solves `minimize c^T x  subject to  G x + s = h, s in K`, where `K` is a
//! product of second-order cones `{(t, u) : ||u|| <= t}`. Infeasible-start
//! primal-dual path following with Nesterov-Todd scaling and a Mehrotra
//! predictor-corrector step; the KKT system is reduced to dense normal
//! equations, which is the right trade at a few hundred rows and a few
//! dozen variables.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct SocpProblem {
    pub c: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    /// Cone dimensions; must sum to `g.nrows()`, each at least 2.
    pub cones: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SocpOptions {
    pub max_iter: usize,
    /// Absolute complementarity gap bound, scaled by `1 + |objective|`.
    pub tol_gap: f64,
    /// Relative primal/dual residual bound.
    pub tol_feas: f64,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_frac: f64,
}

impl Default for SocpOptions {
    fn default() -> Self {
        SocpOptions { max_iter: 200, tol_gap: 1e-7, tol_feas: 1e-8, step_frac: 0.99 }
    }
}

#[derive(Debug, Clone)]
pub struct SocpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[derive(Debug, Clone, Error)]
pub enum SocpError {
    #[error("no convergence in {iterations} iterations (gap {gap:.3e}, pres {pres:.3e}, dres {dres:.3e})")]
    MaxIterations { iterations: usize, gap: f64, pres: f64, dres: f64, best_x: DVector<f64> },
    #[error("numerical breakdown at iteration {iteration}")]
    Numerical { iteration: usize, best_x: DVector<f64> },
}

/// Per-cone Nesterov-Todd scaling: `W = eta * Wbar` with
/// `Wbar = [[w0, wu^T], [wu, I + wu wu^T / (1 + w0)]]` and `w0^2 - ||wu||^2 = 1`.
struct Scaling {
    eta: f64,
    w: DVector<f64>,
}

fn soc_residual(p: &[f64]) -> f64 {
    let tail: f64 = p[1..].iter().map(|v| v * v).sum();
    p[0] * p[0] - tail
}

fn nt_scaling(s: &[f64], z: &[f64]) -> Option<Scaling> {
    let sres = soc_residual(s);
    let zres = soc_residual(z);
    if !(sres > 0.0 && zres > 0.0 && s[0] > 0.0 && z[0] > 0.0) {
        return None;
    }
    let snorm = sres.sqrt();
    let znorm = zres.sqrt();
    let dim = s.len();
    let mut dot = 0.0;
    for i in 0..dim {
        dot += s[i] * z[i];
    }
    let gamma = ((1.0 + dot / (snorm * znorm)) / 2.0).sqrt();
    let mut w = DVector::zeros(dim);
    w[0] = (s[0] / snorm + z[0] / znorm) / (2.0 * gamma);
    for i in 1..dim {
        w[i] = (s[i] / snorm - z[i] / znorm) / (2.0 * gamma);
    }
    let eta = (snorm / znorm).sqrt();
    if w[0].is_finite() && eta.is_finite() {
        Some(Scaling { eta, w })
    } else {
        None
    }
}

impl Scaling {
    /// `Wbar v` into `out`.
    fn apply_bar(&self, v: &[f64], out: &mut [f64]) {
        let w = &self.w;
        let w0 = w[0];
        let mut wu_dot = 0.0;
        for i in 1..v.len() {
            wu_dot += w[i] * v[i];
        }
        out[0] = w0 * v[0] + wu_dot;
        let coef = v[0] + wu_dot / (1.0 + w0);
        for i in 1..v.len() {
            out[i] = v[i] + w[i] * coef;
        }
    }

    /// `Wbar^{-1} v` into `out` (inverse via `J Wbar J`).
    fn apply_bar_inv(&self, v: &[f64], out: &mut [f64]) {
        let w = &self.w;
        let w0 = w[0];
        let mut wu_dot = 0.0;
        for i in 1..v.len() {
            wu_dot += w[i] * v[i];
        }
        out[0] = w0 * v[0] - wu_dot;
        let coef = -v[0] + wu_dot / (1.0 + w0);
        for i in 1..v.len() {
            out[i] = v[i] + w[i] * coef;
        }
    }

    /// `W v = eta * Wbar v`.
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.apply_bar(v, out);
        for o in out.iter_mut() {
            *o *= self.eta;
        }
    }

    /// `W^{-1} v`.
    fn apply_inv(&self, v: &[f64], out: &mut [f64]) {
        self.apply_bar_inv(v, out);
        for o in out.iter_mut() {
            *o /= self.eta;
        }
    }
}

/// Jordan product `u o v = (u.v, u0 vu + v0 uu)`.
fn jordan_mul(u: &[f64], v: &[f64], out: &mut [f64]) {
    let mut dot = 0.0;
    for i in 0..u.len() {
        dot += u[i] * v[i];
    }
    out[0] = dot;
    for i in 1..u.len() {
        out[i] = u[0] * v[i] + v[0] * u[i];
    }
}

/// Solve `lam o u = d` for `u` (arrow-matrix inverse).
fn jordan_div(lam: &[f64], d: &[f64], out: &mut [f64]) {
    let mut lu2 = 0.0;
    for i in 1..lam.len() {
        lu2 += lam[i] * lam[i];
    }
    let det = lam[0] * lam[0] - lu2;
    let mut ldu = 0.0;
    for i in 1..lam.len() {
        ldu += lam[i] * d[i];
    }
    let u0 = (lam[0] * d[0] - ldu) / det;
    out[0] = u0;
    for i in 1..lam.len() {
        out[i] = (d[i] - lam[i] * u0) / lam[0];
    }
}

/// Largest step `a` keeping `p + a dp` in the cone (capped at `cap`).
fn max_step(p: &[f64], dp: &[f64], cap: f64) -> f64 {
    let mut du2 = 0.0;
    let mut pu_du = 0.0;
    for i in 1..p.len() {
        du2 += dp[i] * dp[i];
        pu_du += p[i] * dp[i];
    }
    let a = dp[0] * dp[0] - du2;
    let b = p[0] * dp[0] - pu_du;
    let c = soc_residual(p);
    let root = if a.abs() < 1e-14 * (du2 + dp[0] * dp[0] + 1e-300) {
        if b < 0.0 { -c / (2.0 * b) } else { cap }
    } else {
        let disc = b * b - a * c;
        if a > 0.0 {
            if b >= 0.0 || disc < 0.0 {
                cap
            } else {
                (-b - disc.sqrt()) / a
            }
        } else {
            // a < 0: one positive root
            (-b - disc.max(0.0).sqrt()) / a
        }
    };
    let mut step = root.min(cap).max(0.0);
    // keep the time component nonnegative
    if dp[0] < 0.0 {
        step = step.min(-p[0] / dp[0]);
    }
    step
}

struct ConeLayout {
    offsets: Vec<usize>,
    dims: Vec<usize>,
    total: usize,
}

impl ConeLayout {
    fn new(cones: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(cones.len());
        let mut at = 0;
        for &d in cones {
            assert!(d >= 2, "cone dimension must be at least 2");
            offsets.push(at);
            at += d;
        }
        ConeLayout { offsets, dims: cones.to_vec(), total: at }
    }

    fn unit(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.total);
        for &o in &self.offsets {
            e[o] = 1.0;
        }
        e
    }
}

pub fn solve(problem: &SocpProblem, opts: &SocpOptions) -> Result<SocpSolution, SocpError> {
    let layout = ConeLayout::new(&problem.cones);
    let (rows, n) = problem.g.shape();
    assert_eq!(layout.total, rows, "cone dims must cover all rows");
    assert_eq!(problem.h.len(), rows);
    assert_eq!(problem.c.len(), n);
    let nu = layout.dims.len() as f64;
    let g = &problem.g;
    let h = &problem.h;
    let c = &problem.c;
    let hnorm = h.amax().max(1.0);
    let cnorm = c.amax().max(1.0);

    let mut x = DVector::<f64>::zeros(n);
    let mut s = layout.unit();
    let mut z = layout.unit();
    for (k, &o) in layout.offsets.iter().enumerate() {
        let d = layout.dims[k];
        let hc = h.rows(o, d).amax();
        s[o] = hc.max(1.0);
    }

    // workspaces
    let mut scalings: Vec<Scaling> = Vec::with_capacity(layout.dims.len());
    let mut wg = DMatrix::<f64>::zeros(rows, n);
    let mut lambda = DVector::<f64>::zeros(rows);
    let mut hmat = DMatrix::<f64>::zeros(n, n);
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut gap_val = f64::INFINITY;
    let mut pres_val = f64::INFINITY;
    let mut dres_val = f64::INFINITY;

    for iter in 0..opts.max_iter {
        // residuals and exit test
        let r_p = g * &x + &s - h;
        let r_d = g.transpose() * &z + c;
        let gap = s.dot(&z);
        let obj = c.dot(&x);
        pres_val = r_p.norm() / hnorm;
        dres_val = r_d.norm() / cnorm;
        gap_val = gap;
        let score = pres_val.max(dres_val).max(gap / (1.0 + obj.abs()));
        if best.as_ref().map_or(true, |(b, _)| score < *b) {
            best = Some((score, x.clone()));
        }
        if pres_val <= opts.tol_feas && dres_val <= opts.tol_feas
            && gap <= opts.tol_gap * (1.0 + obj.abs())
        {
            return Ok(SocpSolution {
                x,
                objective: obj,
                iterations: iter,
                gap,
                primal_residual: pres_val,
                dual_residual: dres_val,
            });
        }

        // NT scalings and scaled point
        scalings.clear();
        for (k, &o) in layout.offsets.iter().enumerate() {
            let d = layout.dims[k];
            match nt_scaling(s.as_slice().get(o..o + d).unwrap(), z.as_slice().get(o..o + d).unwrap()) {
                Some(sc) => {
                    sc.apply(&z.as_slice()[o..o + d], &mut lambda.as_mut_slice()[o..o + d]);
                    scalings.push(sc);
                }
                None => {
                    let (_, bx) = best.unwrap();
                    return Err(SocpError::Numerical { iteration: iter, best_x: bx });
                }
            }
        }
        let mu = gap / nu;

        // normal-equations matrix H = G^T W^{-2} G via W^{-1} G
        for (k, &o) in layout.offsets.iter().enumerate() {
            let d = layout.dims[k];
            let sc = &scalings[k];
            let mut col = vec![0.0; d];
            let mut out = vec![0.0; d];
            for j in 0..n {
                for i in 0..d {
                    col[i] = g[(o + i, j)];
                }
                sc.apply_inv(&col, &mut out);
                for i in 0..d {
                    wg[(o + i, j)] = out[i];
                }
            }
        }
        hmat.gemm_tr(1.0, &wg, &wg, 0.0);
        let chol = match cholesky_with_ridge(&mut hmat) {
            Some(c) => c,
            None => {
                let (_, bx) = best.unwrap();
                return Err(SocpError::Numerical { iteration: iter, best_x: bx });
            }
        };

        // one KKT solve for a given scaled-complementarity rhs d_c
        let solve_kkt = |dc: &DVector<f64>, chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>| {
            let mut gc = DVector::<f64>::zeros(rows);
            let mut v = DVector::<f64>::zeros(rows);
            for (k, &o) in layout.offsets.iter().enumerate() {
                let d = layout.dims[k];
                let sc = &scalings[k];
                let mut tmp = vec![0.0; d];
                jordan_div(
                    &lambda.as_slice()[o..o + d],
                    &dc.as_slice()[o..o + d],
                    &mut tmp,
                );
                sc.apply(&tmp, &mut gc.as_mut_slice()[o..o + d]);
            }
            // v = W^{-2} (r_p + W gc)
            let rp_wgc = &r_p + &gc;
            for (k, &o) in layout.offsets.iter().enumerate() {
                let d = layout.dims[k];
                let sc = &scalings[k];
                let mut t1 = vec![0.0; d];
                sc.apply_inv(&rp_wgc.as_slice()[o..o + d], &mut t1);
                let mut t2 = vec![0.0; d];
                sc.apply_inv(&t1, &mut t2);
                v.as_mut_slice()[o..o + d].copy_from_slice(&t2);
            }
            let rhs = -&r_d - g.transpose() * &v;
            let dx = chol.solve(&rhs);
            let gdx = g * &dx;
            let mut dz = DVector::<f64>::zeros(rows);
            for (k, &o) in layout.offsets.iter().enumerate() {
                let d = layout.dims[k];
                let sc = &scalings[k];
                let mut t1 = vec![0.0; d];
                sc.apply_inv(&gdx.as_slice()[o..o + d], &mut t1);
                let mut t2 = vec![0.0; d];
                sc.apply_inv(&t1, &mut t2);
                for i in 0..d {
                    dz[o + i] = t2[i] + v[o + i];
                }
            }
            let ds = -&r_p - gdx;
            (dx, ds, dz)
        };

        let boundary_step = |sv: &DVector<f64>, dv: &DVector<f64>| {
            let mut a = f64::INFINITY;
            for (k, &o) in layout.offsets.iter().enumerate() {
                let d = layout.dims[k];
                a = a.min(max_step(&sv.as_slice()[o..o + d], &dv.as_slice()[o..o + d], a));
            }
            a
        };

        // predictor (affine scaling)
        let mut dc = DVector::<f64>::zeros(rows);
        for (k, &o) in layout.offsets.iter().enumerate() {
            let d = layout.dims[k];
            let mut ll = vec![0.0; d];
            jordan_mul(&lambda.as_slice()[o..o + d], &lambda.as_slice()[o..o + d], &mut ll);
            for i in 0..d {
                dc[o + i] = -ll[i];
            }
            let _ = k;
        }
        let (_dx_a, ds_a, dz_a) = solve_kkt(&dc, &chol);
        let alpha_aff = boundary_step(&s, &ds_a).min(boundary_step(&z, &dz_a)).min(1.0);
        let mu_aff = (&s + &ds_a * alpha_aff).dot(&(&z + &dz_a * alpha_aff)) / nu;
        let sigma = (mu_aff / mu).max(0.0).min(1.0).powi(3);

        // corrector
        for (k, &o) in layout.offsets.iter().enumerate() {
            let d = layout.dims[k];
            let sc = &scalings[k];
            let mut ws = vec![0.0; d];
            sc.apply_inv(&ds_a.as_slice()[o..o + d], &mut ws);
            let mut wz = vec![0.0; d];
            sc.apply(&dz_a.as_slice()[o..o + d], &mut wz);
            let mut cross = vec![0.0; d];
            jordan_mul(&ws, &wz, &mut cross);
            for i in 0..d {
                dc[o + i] -= cross[i];
            }
            dc[o] += sigma * mu;
        }
        let (dx, ds, dz) = solve_kkt(&dc, &chol);
        let mut alpha =
            (opts.step_frac * boundary_step(&s, &ds).min(boundary_step(&z, &dz))).min(1.0);
        // safeguard: strict interiority after the step
        for _ in 0..60 {
            let ok = layout.offsets.iter().enumerate().all(|(k, &o)| {
                let d = layout.dims[k];
                let sn: Vec<f64> =
                    (0..d).map(|i| s[o + i] + alpha * ds[o + i]).collect();
                let zn: Vec<f64> =
                    (0..d).map(|i| z[o + i] + alpha * dz[o + i]).collect();
                sn[0] > 0.0 && zn[0] > 0.0 && soc_residual(&sn) > 0.0 && soc_residual(&zn) > 0.0
            });
            if ok {
                break;
            }
            alpha *= 0.8;
        }
        x += &dx * alpha;
        s += &ds * alpha;
        z += &dz * alpha;
    }

    let (_, best_x) = best.unwrap();
    Err(SocpError::MaxIterations {
        iterations: opts.max_iter,
        gap: gap_val,
        pres: pres_val,
        dres: dres_val,
        best_x,
    })
}

/// Cholesky with an escalating ridge; the KKT matrix can go mildly
/// indefinite from rounding near the central-path boundary.
fn cholesky_with_ridge(hmat: &mut DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let n = hmat.nrows();
    let trace = hmat.trace().abs().max(1e-300);
    let mut ridge = 1e-14 * trace / n as f64;
    for attempt in 0..8 {
        let mut try_m = hmat.clone();
        if attempt > 0 {
            for i in 0..n {
                try_m[(i, i)] += ridge;
            }
            ridge *= 100.0;
        }
        if let Some(ch) = nalgebra::Cholesky::new(try_m) {
            return Some(ch);
        }
    }
    None
}
