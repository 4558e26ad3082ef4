//! Linear equalizers with per-symbol SINR statistics.
//!
//! [`mlsqr`] runs damped LSQR on `[H; sigma I] x = [y; 0]` and, alongside the
//! iterate, tracks the equivalent filter `x_k = W_k H^H y` through a three-term
//! recursion on `W_k`. `W_k` is a polynomial in `H^H H + sigma^2 I`, so with a
//! BCCB `H` it is diagonal in the TF domain and the recursion runs on a real
//! vector `Omega_k` of length `MN`, giving the SINR statistics for `O(MN)` per
//! iteration. For a non-BCCB band matrix the spectrum of its BCCB projection
//! stands in for the true one.
//!
//! [`mmse_equalize`] is the dense benchmark. With `W = (H^H H + sigma^2 I)^{-1}`
//! the equivalent gain is `G = W H^H H = I - sigma^2 W` and
//! `G G^H + sigma^2 G W^H = G`, so `mu[n] = 1 - sigma^2 W[n,n]` and
//! `nu[n] = mu[n] (1 - mu[n])`: only the diagonal of `W` is needed.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};

use crate::error::{check_len, OtfsError, Result};
use crate::grid_ops::{all_finite, bccb_projection_spectrum, norm2, BlockMatrix, LinearOperator, SparseMatrix, C64, ZERO};

/// Lower bound applied to every interference-plus-noise variance.
pub const NU_FLOOR: f64 = 1e-12;

/// Breakdown threshold on `beta` and `alpha`, relative to `||y||`.
const BREAKDOWN: f64 = 1e-13;

/// Convergence is declared below this normal-equation residual whatever
/// `rel_tol` is. Further steps leave `x` unchanged and only accumulate
/// rounding in the filter recursion.
pub const NORMAL_RESIDUAL_FLOOR: f64 = 1e-10;

/// Scalars of one LSQR step. Entry 0 of a history holds the initialization
/// (`beta_1`, `alpha_1`, `rho_bar_0 = alpha_1`, `phi_bar_0 = beta_1`,
/// `zeta_0 = 1`, `psi_0 = 0`).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LsqrScalars {
    pub beta: f64,
    pub alpha: f64,
    pub rho: f64,
    pub rho_bar: f64,
    pub phi: f64,
    pub phi_bar: f64,
    pub z: f64,
    pub s: f64,
    pub theta: f64,
    pub zeta: f64,
    pub psi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// `||y - H x|| <= eps`.
    Converged,
    MaxIterations,
    /// Krylov space exhausted (`beta` or `alpha` vanished).
    Breakdown,
    /// `y = 0` or `H^H y = 0`: the solution is zero.
    Trivial,
}

#[derive(Clone, Debug)]
pub struct EqualizerOutput {
    pub x_hat: Vec<C64>,
    /// Per-symbol gain.
    pub mu: Vec<f64>,
    /// Per-symbol interference-plus-noise variance, at least [`NU_FLOOR`].
    pub nu: Vec<f64>,
    pub iterations: usize,
    /// `||y - H x_hat||` (undamped).
    pub residual_norm: f64,
    pub stop: StopReason,
    /// Empty for the MMSE equalizer.
    pub history: Vec<LsqrScalars>,
    /// Final TF filter `Omega_k`; empty for the MMSE equalizer.
    pub omega: Vec<f64>,
}

impl EqualizerOutput {
    /// Mean `mu^2 / nu`.
    pub fn mean_sinr(&self) -> f64 {
        self.mu.iter().zip(&self.nu).map(|(m, v)| m * m / v).sum::<f64>() / self.mu.len().max(1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlsqrSettings {
    pub max_iterations: usize,
    /// Stop once `||y - H x|| <= rel_tol ||y||` or, for the damped
    /// system `A = [H; sigma I]`, `||A^H r|| <= rel_tol ||A|| ||r||`.
    pub rel_tol: f64,
}

impl Default for MlsqrSettings {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            rel_tol: 1e-4,
        }
    }
}

/// Elementwise TF-domain form of the `W_k` recursion.
///
/// With `kappa_k = rho_bar_k phi_bar_k`:
/// `W_1 = zeta_1 / kappa_0 I` and for `k >= 2`
/// `W_k = W_{k-1} - c1 (W_{k-2} - W_{k-3}) + (c2 I - c3 T)(W_{k-1} - W_{k-2})`,
/// `c1 = psi_{k-2}^2 zeta_k kappa_{k-3} / (zeta_{k-2} kappa_{k-1})`,
/// `c2 = zeta_k kappa_{k-2} (1 + psi_{k-1}^2) / (zeta_{k-1} kappa_{k-1})`,
/// `c3 = zeta_k / kappa_{k-1}`, `T = H^H H + sigma^2 I`.
/// Out-of-range terms: `W = 0`, `kappa = 1`, `zeta = 1`, `psi = 0`.
#[derive(Clone, Debug)]
pub struct OmegaRecursion {
    t_diag: Vec<f64>,
    /// `Omega_{k-1}, Omega_{k-2}, Omega_{k-3}`
    prev: [Vec<f64>; 3],
    k: usize,
}

impl OmegaRecursion {
    /// `gram` is `|lambda|^2`, the TF eigenvalues of `H^H H`.
    pub fn new(gram: &[f64], sigma2: f64) -> Self {
        let n = gram.len();
        Self {
            t_diag: gram.iter().map(|g| g + sigma2).collect(),
            prev: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            k: 0,
        }
    }

    pub fn iteration(&self) -> usize {
        self.k
    }

    /// `Omega_k` for the latest completed step (zeros before the first).
    pub fn current(&self) -> &[f64] {
        &self.prev[0]
    }

    /// Advances to `Omega_{k+1}` given `history[0..=k+1]`.
    pub fn advance(&mut self, history: &[LsqrScalars]) -> Result<&[f64]> {
        let k = self.k as isize + 1;
        if history.len() <= k as usize {
            return Err(OtfsError::LengthMismatch {
                expected: k as usize + 1,
                got: history.len(),
            });
        }
        let kappa = |i: isize| if i < 0 { 1.0 } else { history[i as usize].rho_bar * history[i as usize].phi_bar };
        let zeta = |i: isize| if i <= 0 { 1.0 } else { history[i as usize].zeta };
        let psi = |i: isize| if i <= 0 { 0.0 } else { history[i as usize].psi };
        let next: Vec<f64> = if k == 1 {
            let w1 = zeta(1) / kappa(0);
            vec![w1; self.t_diag.len()]
        } else {
            let c1 = psi(k - 2).powi(2) * zeta(k) * kappa(k - 3) / (zeta(k - 2) * kappa(k - 1));
            let c2 = zeta(k) * kappa(k - 2) * (1.0 + psi(k - 1).powi(2)) / (zeta(k - 1) * kappa(k - 1));
            let c3 = zeta(k) / kappa(k - 1);
            let [w1, w2, w3] = &self.prev;
            (0..self.t_diag.len())
                .map(|i| w1[i] - c1 * (w2[i] - w3[i]) + (c2 - c3 * self.t_diag[i]) * (w1[i] - w2[i]))
                .collect()
        };
        if next.iter().any(|v| !v.is_finite()) {
            return Err(OtfsError::numerical(format!("filter recursion at iteration {k}")));
        }
        self.prev.rotate_right(1);
        self.prev[0] = next;
        self.k += 1;
        Ok(&self.prev[0])
    }
}

/// `(mu, nu)` of the TF-diagonal filter `Omega`:
/// `G = Omega |lambda|^2`, `mu = mean(G)`,
/// `nu = mean(G^2) - mu^2 + sigma^2 mean(Omega^2 |lambda|^2)`.
pub fn sinr_from_omega(omega: &[f64], gram: &[f64], sigma2: f64) -> Result<(f64, f64)> {
    check_len(gram.len(), omega.len())?;
    let len = omega.len() as f64;
    let (mut g1, mut g2, mut c) = (0.0, 0.0, 0.0);
    for (&w, &l2) in omega.iter().zip(gram) {
        let g = w * l2;
        g1 += g;
        g2 += g * g;
        c += w * w * l2;
    }
    let mu = g1 / len;
    let nu = g2 / len - mu * mu + sigma2 * c / len;
    if !(mu.is_finite() && nu.is_finite()) {
        return Err(OtfsError::numerical("SINR statistics"));
    }
    Ok((mu, nu.max(NU_FLOOR)))
}

/// Damped LSQR with the TF-domain filter recursion. `gram` is `|lambda|^2`
/// for the BCCB spectrum associated with `op`.
pub fn mlsqr<Op: LinearOperator + ?Sized>(op: &Op, gram: &[f64], y: &[C64], sigma2: f64, settings: &MlsqrSettings) -> Result<EqualizerOutput> {
    let (rows, cols) = (op.rows(), op.cols());
    check_len(rows, y.len())?;
    check_len(cols, gram.len())?;
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(OtfsError::Config(format!("noise variance must be non-negative, got {sigma2}")));
    }
    if !all_finite(y) {
        return Err(OtfsError::numerical("equalizer input"));
    }
    let sigma = sigma2.sqrt();
    let beta0 = norm2(y);
    let eps = settings.rel_tol * beta0;
    let trivial = |stop, history| EqualizerOutput {
        x_hat: vec![ZERO; cols],
        mu: vec![0.0; cols],
        nu: vec![1.0; cols],
        iterations: 0,
        residual_norm: beta0,
        stop,
        history,
        omega: vec![0.0; cols],
    };
    if beta0 == 0.0 {
        return Ok(trivial(StopReason::Trivial, Vec::new()));
    }

    // u = [u_top; u_bot], v, w
    let mut u_top: Vec<C64> = y.iter().map(|v| v / beta0).collect();
    let mut u_bot = vec![ZERO; cols];
    let mut v = vec![ZERO; cols];
    op.apply_adjoint(&u_top, &mut v);
    let alpha0 = norm2(&v);
    let init = LsqrScalars {
        beta: beta0,
        alpha: alpha0,
        rho_bar: alpha0,
        phi_bar: beta0,
        zeta: 1.0,
        ..Default::default()
    };
    let mut history = vec![init];
    if alpha0 <= BREAKDOWN * beta0 {
        return Ok(trivial(StopReason::Trivial, history));
    }
    v.iter_mut().for_each(|x| *x /= alpha0);
    let mut w = v.clone();
    let mut x = vec![ZERO; cols];
    let mut residual = y.to_vec();
    let mut hv = vec![ZERO; rows];
    let mut hw = vec![ZERO; rows];
    let mut t = vec![ZERO; cols];
    let (mut alpha, mut rho_bar, mut phi_bar, mut psi_prev) = (alpha0, alpha0, beta0, 0.0);
    let mut omega = OmegaRecursion::new(gram, sigma2);
    let mut stop = StopReason::MaxIterations;
    let mut residual_norm = beta0;
    let mut iterations = 0;
    let mut a_norm2 = alpha0 * alpha0;

    for k in 1..=settings.max_iterations {
        // beta u = A v - alpha u
        op.apply(&v, &mut hv);
        for (ut, &h) in u_top.iter_mut().zip(&hv) {
            *ut = h - *ut * alpha;
        }
        for (ub, &vv) in u_bot.iter_mut().zip(&v) {
            *ub = vv * sigma - *ub * alpha;
        }
        let beta = (norm2(&u_top).powi(2) + norm2(&u_bot).powi(2)).sqrt();
        let mut broke = beta <= BREAKDOWN * beta0;
        let mut alpha_next = 0.0;
        if !broke {
            u_top.iter_mut().chain(u_bot.iter_mut()).for_each(|e| *e /= beta);
            // alpha v = A^H u - beta v
            op.apply_adjoint(&u_top, &mut t);
            for ((ti, &ub), &vi) in t.iter_mut().zip(&u_bot).zip(&v) {
                *ti += ub * sigma - vi * beta;
            }
            alpha_next = norm2(&t);
            if alpha_next <= BREAKDOWN * beta0 {
                broke = true;
                alpha_next = 0.0;
            }
        }
        let beta = if broke && beta <= BREAKDOWN * beta0 { 0.0 } else { beta };

        let rho = rho_bar.hypot(beta);
        let z = rho_bar / rho;
        let s = beta / rho;
        let theta = s * alpha_next;
        let phi = z * phi_bar;
        let zeta = phi / rho;
        let psi = theta / rho;
        phi_bar *= -s;
        rho_bar = z * alpha_next;
        if ![rho, z, s, theta, phi, zeta, psi, phi_bar, rho_bar].iter().all(|v| v.is_finite()) || rho == 0.0 {
            return Err(OtfsError::numerical(format!("LSQR scalars at iteration {k}")));
        }

        // H w_{k-1} = H v_{k-1} - psi_{k-1} H w_{k-2}
        for (a, &b) in hw.iter_mut().zip(&hv) {
            *a = b - *a * psi_prev;
        }
        for (xi, &wi) in x.iter_mut().zip(&w) {
            *xi += wi * zeta;
        }
        for (ri, &hi) in residual.iter_mut().zip(&hw) {
            *ri -= hi * zeta;
        }
        if broke {
            w.iter_mut().for_each(|e| *e = -*e * psi);
        } else {
            let inv = 1.0 / alpha_next;
            for ((wi, vi), &ti) in w.iter_mut().zip(v.iter_mut()).zip(&t) {
                *vi = ti * inv;
                *wi = *vi - *wi * psi;
            }
        }
        psi_prev = psi;
        alpha = alpha_next;

        history.push(LsqrScalars {
            beta,
            alpha: alpha_next,
            rho,
            rho_bar,
            phi,
            phi_bar,
            z,
            s,
            theta,
            zeta,
            psi,
        });
        omega.advance(&history).map_err(|e| e.at_iteration(k))?;
        iterations = k;
        residual_norm = norm2(&residual);
        if broke {
            stop = StopReason::Breakdown;
            break;
        }
        // ||A^H r|| / (||A|| ||r||) of the damped problem
        a_norm2 += beta * beta + alpha_next * alpha_next + sigma2;
        let normal_residual = alpha_next * z.abs() / a_norm2.sqrt();
        if residual_norm <= eps || normal_residual <= settings.rel_tol.max(NORMAL_RESIDUAL_FLOOR) {
            stop = StopReason::Converged;
            break;
        }
    }
    if !all_finite(&x) {
        return Err(OtfsError::numerical("LSQR iterate"));
    }
    let (mu, nu) = sinr_from_omega(omega.current(), gram, sigma2)?;
    Ok(EqualizerOutput {
        x_hat: x,
        mu: vec![mu; cols],
        nu: vec![nu; cols],
        iterations,
        residual_norm,
        stop,
        history,
        omega: omega.current().to_vec(),
    })
}

/// mLSQR bound to one band matrix: holds the sparse operator and the TF
/// spectrum of its BCCB projection.
#[derive(Clone, Debug)]
pub struct MlsqrEqualizer {
    op: SparseMatrix,
    gram: Vec<f64>,
}

impl MlsqrEqualizer {
    pub fn new(h: &BlockMatrix) -> Result<Self> {
        let op = h.to_sparse();
        let spectrum = bccb_projection_spectrum(&op, h.block_size(), h.block_count())?;
        Ok(Self {
            gram: spectrum.iter().map(|l| l.norm_sqr()).collect(),
            op,
        })
    }

    pub fn operator(&self) -> &SparseMatrix {
        &self.op
    }

    /// `|lambda|^2` per TF bin.
    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    pub fn equalize(&self, y: &[C64], sigma2: f64, settings: &MlsqrSettings) -> Result<EqualizerOutput> {
        mlsqr(&self.op, &self.gram, y, sigma2, settings)
    }
}

/// Dense LMMSE `(H^H H + sigma^2 I)^{-1} H^H y` by Cholesky, with exact
/// per-symbol statistics from the diagonal of the inverse. `sigma2 = 0` is
/// zero forcing and fails on a singular channel.
pub fn mmse_equalize(h: &BlockMatrix, y: &[C64], sigma2: f64) -> Result<EqualizerOutput> {
    mmse_equalize_sparse(&h.to_sparse(), y, sigma2)
}

pub fn mmse_equalize_sparse(h: &SparseMatrix, y: &[C64], sigma2: f64) -> Result<EqualizerOutput> {
    let (rows, n) = (h.rows(), h.cols());
    check_len(rows, y.len())?;
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(OtfsError::Degenerate(format!("noise variance must be non-negative, got {sigma2}")));
    }
    if !all_finite(y) {
        return Err(OtfsError::numerical("equalizer input"));
    }
    let mut a = Mat::<C64>::zeros(n, n);
    for r in 0..rows {
        let entries: Vec<(usize, C64)> = h.row_entries(r).collect();
        for &(i, hi) in &entries {
            let hc = hi.conj();
            for &(j, hj) in &entries {
                a[(i, j)] += hc * hj;
            }
        }
    }
    for i in 0..n {
        a[(i, i)] += C64::new(sigma2, 0.0);
    }
    let llt = a.llt(Side::Lower).map_err(|_| OtfsError::numerical("Cholesky of H^H H + sigma^2 I"))?;
    let mut rhs = vec![ZERO; n];
    h.apply_adjoint(y, &mut rhs);
    let b = Mat::<C64>::from_fn(n, 1, |i, _| rhs[i]);
    let sol = llt.solve(&b);
    let x_hat: Vec<C64> = (0..n).map(|i| sol[(i, 0)]).collect();
    let inv = llt.inverse();
    let mut mu = Vec::with_capacity(n);
    let mut nu = Vec::with_capacity(n);
    for i in 0..n {
        let m = 1.0 - sigma2 * inv[(i, i)].re;
        mu.push(m);
        nu.push((m * (1.0 - m)).max(NU_FLOOR));
    }
    if !all_finite(&x_hat) || mu.iter().any(|m| !m.is_finite()) {
        return Err(OtfsError::numerical("MMSE solve"));
    }
    let mut hx = vec![ZERO; rows];
    h.apply(&x_hat, &mut hx);
    let residual_norm = norm2(&hx.iter().zip(y).map(|(a, b)| b - a).collect::<Vec<_>>());
    Ok(EqualizerOutput {
        x_hat,
        mu,
        nu,
        iterations: 1,
        residual_norm,
        stop: StopReason::Converged,
        history: Vec::new(),
        omega: Vec::new(),
    })
}
