//! Turbo receiver over a truncated channel: soft interference cancellation of
//! the residual Doppler blocks, mLSQR on the kept band, demapping and
//! max-log BCJR decoding, iterated.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel::TruncatedChannel;
use crate::equalizer::{mmse_equalize, MlsqrEqualizer, MlsqrSettings};
use crate::error::{check_len, OtfsError, Result};
use crate::fec_chain::{maxlog_bcjr, ConvCode, Decoded, Interleaver};
use crate::grid_ops::{BlockMatrix, CMatrix, Direction, KronDft, Structure, C64, STRUCTURE_TOL, ZERO};
use crate::mapping::Constellation;

/// Code, constellation and both interleavers for one frame size.
#[derive(Clone, Debug)]
pub struct FrameCoding {
    code: ConvCode,
    constellation: Constellation,
    bit_interleaver: Interleaver,
    symbol_interleaver: Interleaver,
    info_len: usize,
}

impl FrameCoding {
    /// Fills `symbols` QAM symbols with one terminated codeword. Interleavers
    /// are drawn from `seed`.
    pub fn new(code: ConvCode, constellation: Constellation, symbols: usize, seed: u64) -> Result<Self> {
        let coded = symbols * constellation.bits_per_symbol();
        let info_len = code.info_len_for(coded)?;
        Ok(Self {
            bit_interleaver: Interleaver::random(coded, seed),
            symbol_interleaver: Interleaver::random(symbols, seed ^ 0x9e37_79b9_7f4a_7c15),
            code,
            constellation,
            info_len,
        })
    }

    pub fn info_len(&self) -> usize {
        self.info_len
    }

    pub fn symbols(&self) -> usize {
        self.symbol_interleaver.len()
    }

    pub fn code(&self) -> &ConvCode {
        &self.code
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    /// Information bits to delay-Doppler symbols.
    pub fn encode(&self, info: &[u8]) -> Result<Vec<C64>> {
        check_len(self.info_len, info.len())?;
        let coded = self.bit_interleaver.interleave(&self.code.encode(info)?)?;
        self.symbol_interleaver.interleave(&self.constellation.map(&coded)?)
    }

    /// Demaps and decodes. `apriori` (code order) feeds the demapper prior
    /// when given.
    pub fn decode(&self, x_hat: &[C64], mu: &[f64], nu: &[f64], apriori: Option<&[f64]>) -> Result<Decoded> {
        let x = self.symbol_interleaver.deinterleave(x_hat)?;
        let mu = self.symbol_interleaver.deinterleave(mu)?;
        let nu = self.symbol_interleaver.deinterleave(nu)?;
        let prior = apriori.map(|a| self.bit_interleaver.interleave(a)).transpose()?;
        let l_map = self.constellation.soft_demap(&x, &mu, &nu, prior.as_deref())?;
        maxlog_bcjr(&self.code, &self.bit_interleaver.deinterleave(&l_map)?)
    }

    /// Soft delay-Doppler symbols from a priori LLRs in code order.
    pub fn soft_symbols(&self, apriori: &[f64]) -> Result<Vec<C64>> {
        let l_map = self.bit_interleaver.interleave(apriori)?;
        self.symbol_interleaver.interleave(&self.constellation.soft_map(&l_map)?)
    }
}

#[derive(Clone, Debug)]
enum ResidualBlock {
    /// `T_d` is diagonal.
    Diagonal(Vec<C64>),
    Dense(CMatrix),
}

/// Block-circulant residual `Delta` stored per Doppler offset as
/// `T_d = F_M D_d F_M^H`. Applied in the delay-transformed domain: for
/// Doppler index `k`, `(F_M Delta x)_k = sum_d T_d (F_M x)_{k-d}`.
#[derive(Clone, Debug)]
pub struct TfResidualChannel {
    m: usize,
    n: usize,
    blocks: Vec<(usize, ResidualBlock)>,
    dft: KronDft,
}

fn dft_matrix(n: usize) -> CMatrix {
    let s = 1.0 / (n as f64).sqrt();
    CMatrix::from_fn(n, n, |l, k| C64::from_polar(s, -2.0 * PI * ((l * k) % n) as f64 / n as f64))
}

impl TfResidualChannel {
    pub fn new(residual: &BlockMatrix) -> Result<Self> {
        let (m, n) = (residual.block_size(), residual.block_count());
        if !matches!(residual.structure(), Structure::BlockCirculant | Structure::Bccb) && !residual.check(Structure::BlockCirculant, STRUCTURE_TOL) {
            return Err(OtfsError::Structure("block-circulant"));
        }
        let f = dft_matrix(m);
        let fh = f.adjoint();
        let mut blocks = Vec::new();
        for d in 0..n {
            let block = residual.block(d, 0);
            let scale = block.max_abs();
            if scale == 0.0 {
                continue;
            }
            let t = f.matmul(&block).matmul(&fh);
            let off_diag = (0..m)
                .flat_map(|r| (0..m).filter(move |&c| c != r).map(move |c| (r, c)))
                .map(|(r, c)| t[(r, c)].norm())
                .fold(0.0, f64::max);
            let entry = if off_diag <= 1e-12 * scale {
                ResidualBlock::Diagonal(t.diagonal())
            } else {
                ResidualBlock::Dense(t)
            };
            blocks.push((d, entry));
        }
        Ok(Self {
            m,
            n,
            blocks,
            dft: KronDft::new(m, n),
        })
    }

    /// Offsets with nonzero blocks.
    pub fn offsets(&self) -> Vec<usize> {
        self.blocks.iter().map(|(d, _)| *d).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        self.blocks.iter().all(|(_, b)| matches!(b, ResidualBlock::Diagonal(_)))
    }

    /// Complex multiplications per application: `M N` per diagonal offset,
    /// `M^2 N` per dense one. Excludes the transforms.
    pub fn multiplications(&self) -> usize {
        self.blocks
            .iter()
            .map(|(_, b)| match b {
                ResidualBlock::Diagonal(_) => self.m * self.n,
                ResidualBlock::Dense(_) => self.m * self.m * self.n,
            })
            .sum()
    }

    fn apply_delay_domain(&self, a: &[C64]) -> Vec<C64> {
        let (m, n) = (self.m, self.n);
        let mut z = vec![ZERO; m * n];
        for (d, block) in &self.blocks {
            for k in 0..n {
                let src = &a[((k + n - d) % n) * m..][..m];
                let dst = &mut z[k * m..][..m];
                match block {
                    ResidualBlock::Diagonal(t) => {
                        for ((o, &ti), &s) in dst.iter_mut().zip(t).zip(src) {
                            *o += ti * s;
                        }
                    }
                    ResidualBlock::Dense(t) => {
                        for (r, o) in dst.iter_mut().enumerate() {
                            *o += t.row(r).iter().zip(src).map(|(x, y)| x * y).sum::<C64>();
                        }
                    }
                }
            }
        }
        z
    }

    /// `U Delta x` for a delay-Doppler vector `x`, `U = F_N ⊗ F_M`.
    pub fn apply_tf(&self, x: &[C64]) -> Result<Vec<C64>> {
        check_len(self.m * self.n, x.len())?;
        let mut a = x.to_vec();
        self.dft.apply_delay_in_place(&mut a, Direction::Forward)?;
        let mut z = self.apply_delay_domain(&a);
        self.dft.apply_doppler_in_place(&mut z, Direction::Forward)?;
        Ok(z)
    }

    /// `Delta x` in the delay-Doppler domain.
    pub fn apply_dd(&self, x: &[C64]) -> Result<Vec<C64>> {
        check_len(self.m * self.n, x.len())?;
        let mut a = x.to_vec();
        self.dft.apply_delay_in_place(&mut a, Direction::Forward)?;
        let mut z = self.apply_delay_domain(&a);
        self.dft.apply_delay_in_place(&mut z, Direction::Inverse)?;
        Ok(z)
    }
}

/// `y_ref - U Delta mu`, all in the TF domain except `mu`.
pub fn sic_cancel_tf(y_ref_tf: &[C64], delta: &TfResidualChannel, soft_symbols: &[C64]) -> Result<Vec<C64>> {
    check_len(y_ref_tf.len(), soft_symbols.len())?;
    let z = delta.apply_tf(soft_symbols)?;
    Ok(y_ref_tf.iter().zip(z).map(|(y, d)| y - d).collect())
}

/// Which signal the residual estimate is subtracted from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SicReference {
    /// `y^(i) = y - Delta mu^(i)`
    #[default]
    FromOriginal,
    /// `y^(i) = y^(i-1) - Delta mu^(i)`
    FromPrevious,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TteSicConfig {
    pub sic_iterations: usize,
    pub lsqr: MlsqrSettings,
    pub reference: SicReference,
    /// Feed the previous iteration's a priori LLRs into the demapper.
    pub demapper_priors: bool,
}

impl Default for TteSicConfig {
    fn default() -> Self {
        Self {
            sic_iterations: 2,
            lsqr: MlsqrSettings::default(),
            reference: SicReference::FromOriginal,
            demapper_priors: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IterationReport {
    pub iteration: usize,
    pub lsqr_iterations: usize,
    pub residual_norm: f64,
    pub mean_sinr: f64,
    /// Complex multiplications spent on cancellation in this iteration.
    pub cancellation_mults: usize,
    pub info_bits: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct Detection {
    pub info_bits: Vec<u8>,
    pub iterations: Vec<IterationReport>,
}

struct Stage<'a> {
    coding: &'a FrameCoding,
    equalizer: MlsqrEqualizer,
    delta: TfResidualChannel,
    dft: KronDft,
    y0_tf: Vec<C64>,
    sigma2: f64,
    cfg: &'a TteSicConfig,
}

impl Stage<'_> {
    /// One cancel / equalize / decode pass. Returns the report, the next a
    /// priori LLRs and the cancelled TF signal.
    fn run(&self, it: usize, y_dd: &[C64], y_prev_tf: &[C64], apriori: Option<&[f64]>) -> Result<(IterationReport, Vec<f64>, Vec<C64>)> {
        let (y_in, y_tf, mults) = match apriori {
            Some(lam) => {
                let mu = self.coding.soft_symbols(lam)?;
                let reference = match self.cfg.reference {
                    SicReference::FromOriginal => &self.y0_tf,
                    SicReference::FromPrevious => y_prev_tf,
                };
                let cancelled = sic_cancel_tf(reference, &self.delta, &mu)?;
                (self.dft.apply(&cancelled, Direction::Inverse)?, cancelled, self.delta.multiplications())
            }
            None => (y_dd.to_vec(), self.y0_tf.clone(), 0),
        };
        let eq = self.equalizer.equalize(&y_in, self.sigma2, &self.cfg.lsqr)?;
        let prior = if self.cfg.demapper_priors { apriori } else { None };
        let decoded = self.coding.decode(&eq.x_hat, &eq.mu, &eq.nu, prior)?;
        let next = decoded.coded_extrinsic.clone();
        let report = IterationReport {
            iteration: it,
            lsqr_iterations: eq.iterations,
            residual_norm: eq.residual_norm,
            mean_sinr: eq.mean_sinr(),
            cancellation_mults: mults,
            info_bits: decoded.info_bits,
        };
        Ok((report, next, y_tf))
    }
}

/// Runs the turbo loop for one received frame `y` (delay-Doppler domain).
pub fn tte_sic_detect(coding: &FrameCoding, channel: &TruncatedChannel, y: &[C64], sigma2: f64, cfg: &TteSicConfig) -> Result<Detection> {
    let (m, n) = (channel.full.block_size(), channel.full.block_count());
    check_len(m * n, y.len())?;
    if cfg.sic_iterations == 0 {
        return Err(OtfsError::Config("at least one receiver iteration is required".into()));
    }
    let dft = KronDft::new(m, n);
    let stage = Stage {
        coding,
        equalizer: MlsqrEqualizer::new(&channel.significant)?,
        delta: TfResidualChannel::new(&channel.residual)?,
        y0_tf: dft.apply(y, Direction::Forward)?,
        dft,
        sigma2,
        cfg,
    };
    let mut y_tf = stage.y0_tf.clone();
    let mut apriori: Option<Vec<f64>> = None;
    let mut reports = Vec::with_capacity(cfg.sic_iterations);
    for it in 1..=cfg.sic_iterations {
        let (report, next, cancelled) = stage.run(it, y, &y_tf, apriori.as_deref()).map_err(|e| e.at_iteration(it))?;
        reports.push(report);
        apriori = Some(next);
        y_tf = cancelled;
    }
    Ok(Detection {
        info_bits: reports.last().map(|r| r.info_bits.clone()).unwrap_or_default(),
        iterations: reports,
    })
}

/// Full-matrix LMMSE equalization followed by one decoding pass.
pub fn mmse_detect(coding: &FrameCoding, h_full: &BlockMatrix, y: &[C64], sigma2: f64) -> Result<Detection> {
    let eq = mmse_equalize(h_full, y, sigma2)?;
    let decoded = coding.decode(&eq.x_hat, &eq.mu, &eq.nu, None)?;
    Ok(Detection {
        info_bits: decoded.info_bits.clone(),
        iterations: vec![IterationReport {
            iteration: 1,
            lsqr_iterations: 0,
            residual_norm: eq.residual_norm,
            mean_sinr: eq.mean_sinr(),
            cancellation_mults: 0,
            info_bits: decoded.info_bits,
        }],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{truncate, ChannelPath, ChannelRealization, FrameGeometry, TimeVariation};
    use crate::grid_ops::max_abs_diff;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn channel(g: &FrameGeometry, variation: TimeVariation, integer: bool, seed: u64) -> BlockMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let res = g.doppler_resolution_hz();
        let paths = (0..4)
            .map(|_| {
                let mut nu = rng.gen_range(-2.5..2.5);
                if integer {
                    nu = f64::round(nu);
                }
                ChannelPath {
                    gain: C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * 0.5,
                    delay_s: rng.gen_range(0..=g.m_cp) as f64 * g.ts_s,
                    doppler_hz: nu * res,
                }
            })
            .collect();
        ChannelRealization::new(paths, *g, variation).unwrap().dd_matrix().unwrap()
    }

    fn random_vec(len: usize, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
    }

    #[test]
    fn residual_apply_matches_dense_product() {
        let g = FrameGeometry::new(8, 8, 3, 1e-6).unwrap();
        for (variation, integer) in [(TimeVariation::PerSample, false), (TimeVariation::PerBlock, true)] {
            let h = channel(&g, variation, integer, 11);
            let t = truncate(&h, 1).unwrap();
            let delta = TfResidualChannel::new(&t.residual).unwrap();
            let x = random_vec(64, 12);
            let want_dd = t.residual.matrix().matvec(&x);
            assert!(max_abs_diff(&delta.apply_dd(&x).unwrap(), &want_dd) < 1e-10);
            let want_tf = oracle::kron_dft_matrix(8, 8).matvec(&want_dd);
            assert!(max_abs_diff(&delta.apply_tf(&x).unwrap(), &want_tf) < 1e-10);
            assert_eq!(delta.is_diagonal(), integer);
        }
    }

    #[test]
    fn bccb_residual_cost_is_linear() {
        let g = FrameGeometry::new(8, 8, 3, 1e-6).unwrap();
        let h = channel(&g, TimeVariation::PerBlock, true, 13);
        for b in 0..=3 {
            let t = truncate(&h, b).unwrap();
            let delta = TfResidualChannel::new(&t.residual).unwrap();
            assert!(delta.is_diagonal());
            assert!(delta.multiplications() <= 8 * 8 * (8 - (2 * b + 1)));
        }
    }

    #[test]
    fn non_circulant_residual_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mat = CMatrix::from_fn(16, 16, |_, _| C64::new(rng.gen(), 0.0));
        let b = BlockMatrix::dense(mat, 4, 4).unwrap();
        assert!(matches!(TfResidualChannel::new(&b), Err(OtfsError::Structure(_))));
    }

    #[test]
    fn perfect_cancellation_recovers_band_signal() {
        let g = FrameGeometry::new(8, 8, 3, 1e-6).unwrap();
        let h = channel(&g, TimeVariation::PerSample, false, 14);
        let t = truncate(&h, 1).unwrap();
        let x = random_vec(64, 15);
        let y = h.matrix().matvec(&x);
        let dft = KronDft::new(8, 8);
        let delta = TfResidualChannel::new(&t.residual).unwrap();
        let cancelled = sic_cancel_tf(&dft.apply(&y, Direction::Forward).unwrap(), &delta, &x).unwrap();
        let want = dft.apply(&t.significant.matrix().matvec(&x), Direction::Forward).unwrap();
        assert!(max_abs_diff(&cancelled, &want) < 1e-10);
    }

    #[test]
    fn encode_decode_round_trip_noiseless() {
        let coding = FrameCoding::new(ConvCode::standard(), Constellation::qam(16).unwrap(), 64, 3).unwrap();
        assert_eq!(coding.info_len(), 126);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let info: Vec<u8> = (0..126).map(|_| rng.gen_range(0..2)).collect();
        let x = coding.encode(&info).unwrap();
        let d = coding.decode(&x, &[1.0; 64], &[1e-3; 64], None).unwrap();
        assert_eq!(d.info_bits, info);
        assert!(coding.encode(&info[1..]).is_err());
    }

    #[test]
    fn tte_sic_noiseless_identity_channel() {
        let g = FrameGeometry::new(8, 8, 3, 1e-6).unwrap();
        let h = BlockMatrix::identity(8, 8);
        let t = truncate(&h, 1).unwrap();
        let coding = FrameCoding::new(ConvCode::standard(), Constellation::qam(4).unwrap(), g.dd_len(), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let info: Vec<u8> = (0..coding.info_len()).map(|_| rng.gen_range(0..2)).collect();
        let y = coding.encode(&info).unwrap();
        let det = tte_sic_detect(&coding, &t, &y, 1e-6, &TteSicConfig::default()).unwrap();
        assert_eq!(det.info_bits, info);
        assert_eq!(det.iterations.len(), 2);
        assert_eq!(det.iterations[0].cancellation_mults, 0);
    }

    #[test]
    fn zero_iterations_rejected() {
        let t = truncate(&BlockMatrix::identity(4, 4), 1).unwrap();
        let coding = FrameCoding::new(ConvCode::standard(), Constellation::qam(4).unwrap(), 16, 5).unwrap();
        let cfg = TteSicConfig {
            sic_iterations: 0,
            ..Default::default()
        };
        assert!(tte_sic_detect(&coding, &t, &[ZERO; 16], 0.1, &cfg).is_err());
    }
}
