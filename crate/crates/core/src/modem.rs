//! OTFS modulation with a cyclic prefix per block, and AWGN.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channel::FrameGeometry;
use crate::error::{check_len, OtfsError, Result};
use crate::grid_ops::{DdGrid, Direction, KronDft, C64};

/// Modulator/demodulator for one frame geometry. Plans the FFTs once.
#[derive(Clone, Debug)]
pub struct OtfsModem {
    geometry: FrameGeometry,
    dft: KronDft,
}

impl OtfsModem {
    pub fn new(geometry: FrameGeometry) -> Result<Self> {
        // Re-run validation in case the struct was built by hand.
        let g = FrameGeometry::new(geometry.m, geometry.n, geometry.m_cp, geometry.ts_s)?;
        Ok(Self {
            geometry: g,
            dft: KronDft::new(g.m, g.n),
        })
    }

    pub fn geometry(&self) -> &FrameGeometry {
        &self.geometry
    }

    pub fn dft(&self) -> &KronDft {
        &self.dft
    }

    /// `s = (F_N^H ⊗ A_cp) x`
    pub fn modulate(&self, grid: &DdGrid) -> Result<Vec<C64>> {
        if grid.delay_bins() != self.geometry.m || grid.doppler_bins() != self.geometry.n {
            return Err(OtfsError::LengthMismatch {
                expected: self.geometry.dd_len(),
                got: grid.delay_bins() * grid.doppler_bins(),
            });
        }
        self.modulate_vec(&grid.vectorize())
    }

    pub fn modulate_vec(&self, x: &[C64]) -> Result<Vec<C64>> {
        let FrameGeometry { m, m_cp, .. } = self.geometry;
        check_len(self.geometry.dd_len(), x.len())?;
        let mut blocks = x.to_vec();
        self.dft.apply_doppler_in_place(&mut blocks, Direction::Inverse)?;
        let mut s = Vec::with_capacity(self.geometry.frame_samples());
        for block in blocks.chunks_exact(m) {
            s.extend_from_slice(&block[m - m_cp..]);
            s.extend_from_slice(block);
        }
        Ok(s)
    }

    /// `y = (F_N ⊗ R_cp) r`
    pub fn demodulate(&self, r: &[C64]) -> Result<Vec<C64>> {
        let FrameGeometry { m, m_cp, .. } = self.geometry;
        check_len(self.geometry.frame_samples(), r.len())?;
        let mut y: Vec<C64> = r.chunks_exact(m + m_cp).flat_map(|b| b[m_cp..].iter().copied()).collect();
        self.dft.apply_doppler_in_place(&mut y, Direction::Forward)?;
        Ok(y)
    }
}

/// Adds circular complex Gaussian noise of variance `sigma2` per sample.
pub fn add_awgn<R: Rng + ?Sized>(s: &[C64], sigma2: f64, rng: &mut R) -> Result<Vec<C64>> {
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(OtfsError::Config(format!("noise variance must be non-negative, got {sigma2}")));
    }
    let scale = (sigma2 / 2.0).sqrt();
    Ok(s.iter()
        .map(|&v| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            v + C64::new(re, im) * scale
        })
        .collect())
}

pub fn add_awgn_seeded(s: &[C64], sigma2: f64, seed: u64) -> Result<Vec<C64>> {
    add_awgn(s, sigma2, &mut ChaCha8Rng::seed_from_u64(seed))
}
