//! Orthonormal bases of the receiver-invisible subspace.
//!
//! A suppressing signal drawn from `ker(B H)` lands entirely inside the
//! CP window after the channel, so the receiver discards it together with
//! the prefix. The partial-CP variant spans `ker(B H W)` instead, leaving
//! `R` leading CP samples and their cyclic images untouched so CP-correlation
//! synchronization keeps working.

use crate::channel::ToeplitzChannel;
use crate::ofdm::LinearMaps;
use crate::{C64, CMat, CVec};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AlignmentError {
    #[error("channel operator is numerically rank deficient (min singular value {min_sv:.3e} below {threshold:.3e})")]
    DegenerateChannel { min_sv: f64, threshold: f64 },
    #[error("reserved CP samples r={r} must satisfy r < L/2 (L={l})")]
    ReservedCpTooLarge { r: usize, l: usize },
    #[error("operator size {got} does not match frame length {expected}")]
    SizeMismatch { expected: usize, got: usize },
}

/// Which subspace the basis spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignmentMode {
    /// `ker(B H)`, dimension L.
    Full,
    /// `ker(B H W)` embedded back into the frame, dimension L - 2R.
    Partial { r: usize },
}

/// Orthonormal basis of the subspace invisible to the receiver.
///
/// Columns are full frame-length vectors; in partial mode the rows of the
/// preserved samples are exactly zero, so `c = P s` never touches them.
#[derive(Debug, Clone)]
pub struct AlignmentBasis {
    basis: CMat,
    mode: AlignmentMode,
}

impl AlignmentBasis {
    /// Wrap an externally produced orthonormal matrix (e.g. a rotated copy
    /// of another basis). No kernel membership check is performed.
    pub fn from_matrix_unchecked(basis: CMat, mode: AlignmentMode) -> Self {
        AlignmentBasis { basis, mode }
    }

    /// The (N+L) x m basis matrix.
    pub fn matrix(&self) -> &CMat {
        &self.basis
    }

    /// Subspace dimension m.
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn mode(&self) -> AlignmentMode {
        self.mode
    }

    /// Suppressing signal `c = P s`.
    pub fn expand(&self, s: &CVec) -> CVec {
        &self.basis * s
    }
}

/// Identity-column selector for the samples the suppressor may touch.
///
/// The first `r` CP positions and their cyclic copies at the symbol tail
/// (frame positions `n .. n+r`) are excluded, so the preserved CP samples
/// remain true cyclic copies of the matching data samples.
#[derive(Debug, Clone)]
pub struct SyncSelector {
    frame_len: usize,
    kept: Vec<usize>,
    r: usize,
}

impl SyncSelector {
    pub fn num_kept(&self) -> usize {
        self.kept.len()
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Dense W, (N+L) x (N+L-2R).
    pub fn matrix(&self) -> CMat {
        let mut w = CMat::zeros(self.frame_len, self.kept.len());
        for (col, &row) in self.kept.iter().enumerate() {
            w[(row, col)] = C64::new(1.0, 0.0);
        }
        w
    }
}

/// Build the selector for `r` reserved CP samples.
pub fn sync_selector(n: usize, l: usize, r: usize) -> Result<SyncSelector, AlignmentError> {
    if 2 * r >= l {
        return Err(AlignmentError::ReservedCpTooLarge { r, l });
    }
    let frame_len = n + l;
    let kept = (0..frame_len).filter(|&i| !(i < r || (n..n + r).contains(&i))).collect();
    Ok(SyncSelector { frame_len, kept, r })
}

/// Orthonormal basis of `ker(B H)` via a full orthogonal factorization.
pub fn null_basis(maps: &LinearMaps, h: &ToeplitzChannel) -> Result<AlignmentBasis, AlignmentError> {
    let frame = maps.frame_len();
    if h.size() != frame {
        return Err(AlignmentError::SizeMismatch { expected: frame, got: h.size() });
    }
    let bh = h.matrix().rows(maps.l(), maps.n()).into_owned();
    let basis = kernel_basis(&bh, maps.l())?;
    Ok(AlignmentBasis { basis, mode: AlignmentMode::Full })
}

/// Orthonormal basis of `ker(B H W)`, embedded back into frame coordinates.
pub fn null_basis_partial(
    maps: &LinearMaps,
    h: &ToeplitzChannel,
    w: &SyncSelector,
) -> Result<AlignmentBasis, AlignmentError> {
    let frame = maps.frame_len();
    if h.size() != frame || w.frame_len != frame {
        return Err(AlignmentError::SizeMismatch { expected: frame, got: h.size() });
    }
    let bh = h.matrix().rows(maps.l(), maps.n());
    let bhw = CMat::from_fn(maps.n(), w.kept.len(), |i, j| bh[(i, w.kept[j])]);
    let null_dim = w.kept.len() - maps.n();
    let inner = kernel_basis(&bhw, null_dim)?;
    let mut basis = CMat::zeros(frame, null_dim);
    for (row_inner, &row_frame) in w.kept.iter().enumerate() {
        for c in 0..null_dim {
            basis[(row_frame, c)] = inner[(row_inner, c)];
        }
    }
    Ok(AlignmentBasis { basis, mode: AlignmentMode::Partial { r: w.r } })
}

/// Diagnostic: `||B H P||_F / ||H||_F`.
pub fn alignment_residual(basis: &AlignmentBasis, maps: &LinearMaps, h: &ToeplitzChannel) -> f64 {
    let bh = h.matrix().rows(maps.l(), maps.n());
    (bh * basis.matrix()).norm() / h.matrix().norm()
}

/// Kernel of a wide matrix `a` (rows x cols, rows < cols) with known
/// nullity, from a Householder QR of the adjoint. The reflector windows
/// follow the band profile of the input, which keeps the factorization
/// cheap for the banded operators produced by short channels.
fn kernel_basis(a: &CMat, null_dim: usize) -> Result<CMat, AlignmentError> {
    let adj = a.adjoint();
    let (rows, cols) = adj.shape();
    debug_assert_eq!(rows - cols, null_dim);

    let qr = BandedHouseholder::factor(adj);

    // Cheap full-rank screen on the triangular diagonal; exact singular
    // values only when the screen is inconclusive.
    let frob = a.norm();
    let threshold = rows as f64 * f64::EPSILON * frob;
    let min_diag = qr.diag_mags.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_diag <= threshold {
        let sv = a.clone().singular_values();
        let smax = sv.max();
        let tol = rows as f64 * f64::EPSILON * smax;
        let min_sv = sv.min();
        if min_sv <= tol {
            return Err(AlignmentError::DegenerateChannel { min_sv, threshold: tol });
        }
    }

    Ok(qr.trailing_q_columns(null_dim))
}

/// Householder QR of a tall matrix that skips the structural zeros below
/// each column's band.
struct BandedHouseholder {
    /// Reflector vectors, one per column, each spanning rows `j..window_end[j]`.
    vs: Vec<CVec>,
    two_over_norm2: Vec<f64>,
    window_end: Vec<usize>,
    rows: usize,
    diag_mags: Vec<f64>,
}

impl BandedHouseholder {
    fn factor(mut m: CMat) -> Self {
        let (rows, cols) = m.shape();
        // last structurally nonzero row per column
        let mut lnz = vec![0usize; cols];
        for j in 0..cols {
            let mut last = j;
            for i in (0..rows).rev() {
                if m[(i, j)].norm_sqr() != 0.0 {
                    last = last.max(i);
                    break;
                }
            }
            lnz[j] = last;
        }

        let mut vs = Vec::with_capacity(cols);
        let mut two_over_norm2 = Vec::with_capacity(cols);
        let mut window_end = Vec::with_capacity(cols);
        let mut diag_mags = Vec::with_capacity(cols);
        let mut hi = 0usize;
        for j in 0..cols {
            hi = hi.max(lnz[j] + 1).max(j + 1);
            let win = hi - j;
            let mut v = CVec::zeros(win);
            for i in 0..win {
                v[i] = m[(j + i, j)];
            }
            let norm = v.norm();
            diag_mags.push(norm);
            if norm == 0.0 {
                vs.push(v);
                two_over_norm2.push(0.0);
                window_end.push(hi);
                continue;
            }
            let alpha = v[0];
            let sign = if alpha.norm() > 0.0 { alpha / alpha.norm() } else { C64::new(1.0, 0.0) };
            v[0] += sign * norm;
            let vnorm2 = v.norm_squared();
            let coeff = 2.0 / vnorm2;
            // apply reflector to remaining columns over the window
            for c in j + 1..cols {
                let mut dot = C64::new(0.0, 0.0);
                for i in 0..win {
                    dot += v[i].conj() * m[(j + i, c)];
                }
                let scale = dot * coeff;
                for i in 0..win {
                    let delta = v[i] * scale;
                    m[(j + i, c)] -= delta;
                }
            }
            vs.push(v);
            two_over_norm2.push(coeff);
            window_end.push(hi);
        }
        BandedHouseholder { vs, two_over_norm2, window_end, rows, diag_mags }
    }

    /// Columns `cols .. cols + count` of the full Q factor: an orthonormal
    /// basis of the orthogonal complement of the input's column space.
    fn trailing_q_columns(&self, count: usize) -> CMat {
        let cols = self.vs.len();
        let mut q = CMat::zeros(self.rows, count);
        for c in 0..count {
            q[(cols + c, c)] = C64::new(1.0, 0.0);
        }
        for j in (0..cols).rev() {
            let v = &self.vs[j];
            let coeff = self.two_over_norm2[j];
            if coeff == 0.0 {
                continue;
            }
            let win = self.window_end[j] - j;
            for c in 0..count {
                let mut dot = C64::new(0.0, 0.0);
                for i in 0..win {
                    dot += v[i].conj() * q[(j + i, c)];
                }
                let scale = dot * coeff;
                for i in 0..win {
                    let delta = v[i] * scale;
                    q[(j + i, c)] -= delta;
                }
            }
        }
        q
    }
}
