//! Dense, brute-force reference implementations.
//!
//! Every routine here is written directly from the defining formula with no
//! shared fast path: explicit DFT and Kronecker matrices, scalar-loop channel
//! simulation, Gaussian elimination, exhaustive codeword enumeration and
//! exhaustive constellation search. They are only practical for small frames
//! and exist to check the production code paths (unit tests, the acceptance
//! suite and `otfs-sim selftest`).

use std::f64::consts::PI;

use crate::channel::{ChannelPath, FrameGeometry, TimeVariation};
use crate::equalizer::LsqrScalars;
use crate::grid_ops::{CMatrix, C64, ONE, ZERO};

/// Unitary `N`-point DFT matrix, entries `exp(-j 2 pi l k / N) / sqrt(N)`.
pub fn dft_matrix(n: usize) -> CMatrix {
    let s = 1.0 / (n as f64).sqrt();
    CMatrix::from_fn(n, n, |l, k| C64::from_polar(s, -2.0 * PI * (l * k) as f64 / n as f64))
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (br, bc) = (b.rows(), b.cols());
    CMatrix::from_fn(a.rows() * br, a.cols() * bc, |r, c| a[(r / br, c / bc)] * b[(r % br, c % bc)])
}

/// `F_N ⊗ F_M` as an explicit `MN x MN` matrix.
pub fn kron_dft_matrix(m: usize, n: usize) -> CMatrix {
    kron(&dft_matrix(n), &dft_matrix(m))
}

/// BCCB matrix whose first column is `generator` (length `MN`, delay fastest).
pub fn bccb_from_generator(generator: &[C64], m: usize, n: usize) -> CMatrix {
    CMatrix::from_fn(m * n, m * n, |r, c| {
        let d = (r / m + n - c / m) % n;
        let delta = (r % m + m - c % m) % m;
        generator[d * m + delta]
    })
}

/// CP addition matrix `A_cp = [J_cp; I_M]`, `(M + Mcp) x M`.
pub fn cp_add_matrix(m: usize, m_cp: usize) -> CMatrix {
    CMatrix::from_fn(m + m_cp, m, |r, c| {
        let src = if r < m_cp { m - m_cp + r } else { r - m_cp };
        if src == c {
            ONE
        } else {
            ZERO
        }
    })
}

/// CP removal matrix `R_cp = [0, I_M]`, `M x (M + Mcp)`.
pub fn cp_remove_matrix(m: usize, m_cp: usize) -> CMatrix {
    CMatrix::from_fn(m, m + m_cp, |r, c| if c == r + m_cp { ONE } else { ZERO })
}

/// `(F_N^H ⊗ A_cp)`
pub fn modulation_matrix(g: &FrameGeometry) -> CMatrix {
    kron(&dft_matrix(g.n).adjoint(), &cp_add_matrix(g.m, g.m_cp))
}

/// `(F_N ⊗ R_cp)`
pub fn demodulation_matrix(g: &FrameGeometry) -> CMatrix {
    kron(&dft_matrix(g.n), &cp_remove_matrix(g.m, g.m_cp))
}

/// Literal `(F_N ⊗ R_cp) H_DT (F_N^H ⊗ A_cp)` with dense matrices.
pub fn dd_from_dt_dense(h_dt: &CMatrix, g: &FrameGeometry) -> CMatrix {
    demodulation_matrix(g).matmul(h_dt).matmul(&modulation_matrix(g))
}

/// Sample-by-sample linear time-varying channel:
/// `r[n] = sum_p h_p exp(j 2 pi nu_p t Ts) s[n - l_p]`.
pub fn time_domain_convolution(paths: &[ChannelPath], g: &FrameGeometry, variation: TimeVariation, s: &[C64]) -> Vec<C64> {
    let block = g.m + g.m_cp;
    let mut r = vec![ZERO; s.len()];
    for (n, out) in r.iter_mut().enumerate() {
        for p in paths {
            let l = (p.delay_s / g.ts_s).round() as usize;
            if n < l {
                continue;
            }
            let t = match variation {
                TimeVariation::PerSample => (n - l) as f64,
                TimeVariation::PerBlock => ((n / block) * block) as f64,
            };
            *out += p.gain * C64::from_polar(1.0, 2.0 * PI * p.doppler_hz * t * g.ts_s) * s[n - l];
        }
    }
    r
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve_dense(a: &CMatrix, b: &[C64]) -> Option<Vec<C64>> {
    let n = a.rows();
    let mut aug = CMatrix::from_fn(n, n + 1, |r, c| if c < n { a[(r, c)] } else { b[r] });
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| aug[(i, col)].norm().total_cmp(&aug[(j, col)].norm()))?;
        if aug[(pivot, col)].norm() < 1e-300 {
            return None;
        }
        for c in 0..=n {
            let tmp = aug[(col, c)];
            aug[(col, c)] = aug[(pivot, c)];
            aug[(pivot, c)] = tmp;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = aug[(r, col)] / aug[(col, col)];
            if f == ZERO {
                continue;
            }
            for c in col..=n {
                let v = aug[(col, c)];
                aug[(r, c)] -= f * v;
            }
        }
    }
    Some((0..n).map(|r| aug[(r, n)] / aug[(r, r)]).collect())
}

pub fn inverse_dense(a: &CMatrix) -> Option<CMatrix> {
    let n = a.rows();
    let mut inv = CMatrix::zeros(n, n);
    for c in 0..n {
        let mut e = vec![ZERO; n];
        e[c] = ONE;
        let col = solve_dense(a, &e)?;
        for r in 0..n {
            inv[(r, c)] = col[r];
        }
    }
    Some(inv)
}

/// `H^H H + sigma2 I`
pub fn damped_normal_matrix(h: &CMatrix, sigma2: f64) -> CMatrix {
    let hh = h.adjoint().matmul(h);
    hh.add(&CMatrix::identity(h.cols()).scale(C64::new(sigma2, 0.0)))
}

/// `(H^H H + sigma2 I)^{-1} H^H y`
pub fn damped_least_squares(h: &CMatrix, y: &[C64], sigma2: f64) -> Option<Vec<C64>> {
    solve_dense(&damped_normal_matrix(h, sigma2), &h.adjoint().matvec(y))
}

/// Literal per-symbol statistics of a linear equalizer `x_hat = W H^H y`:
/// `G = W H^H H`, `C = G W^H`, `mu[n] = G[n,n]`,
/// `nu[n] = sum_{m != n} |G[n,m]|^2 + C[n,n] sigma2`.
pub fn equalizer_statistics(w: &CMatrix, h: &CMatrix, sigma2: f64) -> (Vec<f64>, Vec<f64>) {
    let g = w.matmul(&h.adjoint().matmul(h));
    let c = g.matmul(&w.adjoint());
    let n = g.rows();
    let mu = (0..n).map(|i| g[(i, i)].re).collect();
    let nu = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| g[(i, j)].norm_sqr()).sum::<f64>() + c[(i, i)].re * sigma2)
        .collect();
    (mu, nu)
}

/// Dense `W_k` recursion driven by the LSQR scalar history (`history[0]`
/// holds the initialization, `history[k]` iteration `k`). Returns
/// `W_1 ..= W_K`.
pub fn dense_w_recursion(history: &[LsqrScalars], h: &CMatrix, sigma2: f64) -> Vec<CMatrix> {
    let n = h.cols();
    let gram = damped_normal_matrix(h, sigma2);
    let eye = CMatrix::identity(n);
    let rp = |k: isize| -> f64 {
        if k < 0 {
            1.0
        } else {
            history[k as usize].rho_bar * history[k as usize].phi_bar
        }
    };
    let zeta = |k: isize| -> f64 {
        if k <= 0 {
            1.0
        } else {
            history[k as usize].zeta
        }
    };
    let psi = |k: isize| -> f64 {
        if k <= 0 {
            0.0
        } else {
            history[k as usize].psi
        }
    };
    let mut w: Vec<CMatrix> = vec![CMatrix::zeros(n, n); 3]; // W_{-2}, W_{-1}, W_0
    for k in 1..history.len() as isize {
        let next = if k == 1 {
            eye.scale(C64::new(zeta(1) / rp(0), 0.0))
        } else {
            let last = w.len();
            let (w1, w2, w3) = (&w[last - 1], &w[last - 2], &w[last - 3]);
            let c1 = psi(k - 2).powi(2) * zeta(k) * rp(k - 3) / (zeta(k - 2) * rp(k - 1));
            let c2 = zeta(k) * rp(k - 2) * (1.0 + psi(k - 1).powi(2)) / (zeta(k - 1) * rp(k - 1));
            let c3 = zeta(k) / rp(k - 1);
            let poly = eye.scale(C64::new(c2, 0.0)).sub(&gram.scale(C64::new(c3, 0.0)));
            w1.sub(&w2.sub(w3).scale(C64::new(c1, 0.0))).add(&poly.matmul(&w1.sub(w2)))
        };
        w.push(next);
    }
    w.split_off(3)
}

/// First-row SINR pair of the dense equivalent filter: `(G[0,0],
/// sum_{m>0} |G[0,m]|^2 + C[0,0] sigma2)`.
pub fn first_row_sinr(w: &CMatrix, h: &CMatrix, sigma2: f64) -> (f64, f64) {
    let g = w.matmul(&h.adjoint().matmul(h));
    let c = g.matmul(&w.adjoint());
    let interference: f64 = (1..g.cols()).map(|m| g[(0, m)].norm_sqr()).sum();
    (g[(0, 0)].re, interference + c[(0, 0)].re * sigma2)
}

/// Exhaustive max-log demapper: for each bit, best metric over all points
/// labelled 0 minus best over all points labelled 1, with metric
/// `-|x - mu q|^2 / nu + sum_{k' != k} (1 - 2 alpha_k') L_k' / 2`.
/// `labels[q][j]` is bit `j` of point `q`.
pub fn brute_force_demap(x: C64, mu: f64, nu: f64, points: &[C64], labels: &[Vec<u8>], prior: &[f64]) -> Vec<f64> {
    let bits = labels[0].len();
    (0..bits)
        .map(|k| {
            let mut best = [f64::NEG_INFINITY; 2];
            for (q, lab) in points.iter().zip(labels) {
                let mut metric = -(x - q * mu).norm_sqr() / nu;
                for (j, &b) in lab.iter().enumerate() {
                    if j != k {
                        metric += (1.0 - 2.0 * b as f64) * prior[j] / 2.0;
                    }
                }
                let slot = lab[k] as usize;
                best[slot] = best[slot].max(metric);
            }
            best[0] - best[1]
        })
        .collect()
}

/// Exact (log-sum-exp) demapper with zero priors.
pub fn exact_demap(x: C64, mu: f64, nu: f64, points: &[C64], labels: &[Vec<u8>]) -> Vec<f64> {
    let bits = labels[0].len();
    let log_sum = |terms: Vec<f64>| {
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    };
    (0..bits)
        .map(|k| {
            let mut terms = [Vec::new(), Vec::new()];
            for (q, lab) in points.iter().zip(labels) {
                terms[lab[k] as usize].push(-(x - q * mu).norm_sqr() / nu);
            }
            let [t0, t1] = terms;
            log_sum(t0) - log_sum(t1)
        })
        .collect()
}

/// `sum_q q prod_j P(bit j of q)` with `P(0) = 1 / (1 + e^{-L})`.
pub fn soft_symbol_direct(points: &[C64], labels: &[Vec<u8>], llr: &[f64]) -> C64 {
    points
        .iter()
        .zip(labels)
        .map(|(q, lab)| {
            let p: f64 = lab
                .iter()
                .zip(llr)
                .map(|(&b, &l)| {
                    let p0 = 1.0 / (1.0 + (-l).exp());
                    if b == 0 {
                        p0
                    } else {
                        1.0 - p0
                    }
                })
                .product();
            q * p
        })
        .sum()
}

/// Feedforward convolutional encoding by polynomial convolution over GF(2),
/// terminated with `K - 1` zeros. Generators in octal notation, MSB tap on
/// the current input.
pub fn convolve_encode(info: &[u8], generators_octal: &[u32], constraint_length: usize) -> Vec<u8> {
    let mut padded = info.to_vec();
    padded.extend(std::iter::repeat_n(0, constraint_length - 1));
    let mut out = Vec::with_capacity(padded.len() * generators_octal.len());
    for t in 0..padded.len() {
        for &g in generators_octal {
            let mut bit = 0u8;
            for d in 0..constraint_length {
                let tap = (g >> (constraint_length - 1 - d)) & 1;
                if tap == 1 && t >= d {
                    bit ^= padded[t - d];
                }
            }
            out.push(bit);
        }
    }
    out
}

/// Max-log MAP over every terminated codeword. Returns per-coded-bit and
/// per-info-bit posteriors (`ln P(0)/P(1)` convention).
pub fn exhaustive_maxlog_map(llr: &[f64], info_len: usize, generators_octal: &[u32], constraint_length: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(info_len <= 16, "exhaustive search is exponential");
    let coded_len = llr.len();
    let mut best_coded = vec![[f64::NEG_INFINITY; 2]; coded_len];
    let mut best_info = vec![[f64::NEG_INFINITY; 2]; info_len];
    for word in 0u32..(1 << info_len) {
        let info: Vec<u8> = (0..info_len).map(|i| ((word >> i) & 1) as u8).collect();
        let code = convolve_encode(&info, generators_octal, constraint_length);
        assert_eq!(code.len(), coded_len);
        let metric: f64 = code.iter().zip(llr).map(|(&c, &l)| (1.0 - 2.0 * c as f64) * l / 2.0).sum();
        for (slot, &c) in best_coded.iter_mut().zip(&code) {
            slot[c as usize] = slot[c as usize].max(metric);
        }
        for (slot, &b) in best_info.iter_mut().zip(&info) {
            slot[b as usize] = slot[b as usize].max(metric);
        }
    }
    let diff = |v: Vec<[f64; 2]>| v.into_iter().map(|[a, b]| a - b).collect();
    (diff(best_coded), diff(best_info))
}
