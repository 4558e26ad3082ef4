//! Doubly-selective channel: power-delay profiles, path sampling, the
//! time-domain model, its delay-Doppler matrix and band truncation.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, OtfsError, Result};
use crate::grid_ops::{block_offset, offset_in_band, BlockMatrix, CMatrix, SparseMatrix, Structure, C64, ZERO};
use crate::modem::OtfsModem;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Maximum Doppler shift `v fc / c` for a speed in km/h.
pub fn max_doppler_hz(carrier_hz: f64, speed_kmh: f64) -> f64 {
    speed_kmh / 3.6 * carrier_hz / SPEED_OF_LIGHT
}

/// Frame dimensions: `m` delay bins, `n` Doppler bins, `m_cp` cyclic prefix
/// samples per block, sample period `ts_s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameGeometry {
    pub m: usize,
    pub n: usize,
    pub m_cp: usize,
    pub ts_s: f64,
}

impl FrameGeometry {
    pub fn new(m: usize, n: usize, m_cp: usize, ts_s: f64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(OtfsError::Config(format!("grid must be non-empty, got {m}x{n}")));
        }
        if m_cp >= m {
            return Err(OtfsError::Config(format!("cyclic prefix {m_cp} must be shorter than M = {m}")));
        }
        if !(ts_s > 0.0 && ts_s.is_finite()) {
            return Err(OtfsError::Config(format!("sample period must be positive, got {ts_s}")));
        }
        Ok(Self { m, n, m_cp, ts_s })
    }

    pub fn block_len(&self) -> usize {
        self.m + self.m_cp
    }

    pub fn frame_samples(&self) -> usize {
        self.n * self.block_len()
    }

    pub fn dd_len(&self) -> usize {
        self.m * self.n
    }

    /// Spacing of the Doppler grid, `1 / (N (M + Mcp) Ts)`.
    pub fn doppler_resolution_hz(&self) -> f64 {
        1.0 / (self.n as f64 * self.block_len() as f64 * self.ts_s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileTap {
    pub delay_ns: f64,
    pub power_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerDelayProfile {
    pub name: String,
    pub taps: Vec<ProfileTap>,
}

const EVA_DELAYS_NS: [f64; 9] = [0.0, 30.0, 150.0, 310.0, 370.0, 710.0, 1090.0, 1730.0, 2510.0];
const EVA_POWERS_DB: [f64; 9] = [0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9];

impl PowerDelayProfile {
    /// 3GPP Extended Vehicular A.
    pub fn eva() -> Self {
        let taps = EVA_DELAYS_NS
            .iter()
            .zip(EVA_POWERS_DB)
            .map(|(&delay_ns, power_db)| ProfileTap { delay_ns, power_db })
            .collect();
        Self { name: "EVA".into(), taps }
    }

    pub fn new(name: impl Into<String>, taps: Vec<ProfileTap>) -> Result<Self> {
        if taps.is_empty() {
            return Err(OtfsError::Config("power-delay profile has no taps".into()));
        }
        for t in &taps {
            if !(t.delay_ns >= 0.0 && t.delay_ns.is_finite() && t.power_db.is_finite()) {
                return Err(OtfsError::Config(format!("invalid tap {t:?}")));
            }
        }
        Ok(Self { name: name.into(), taps })
    }

    /// Parses one `delay_ns power_db` pair per line, whitespace or comma
    /// separated. `#` starts a comment.
    pub fn from_text(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut taps = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            if fields.len() != 2 {
                return Err(OtfsError::Parse(format!("profile line {}: expected `delay_ns power_db`", lineno + 1)));
            }
            let parse = |s: &str| s.parse::<f64>().map_err(|e| OtfsError::Parse(format!("profile line {}: {e}", lineno + 1)));
            taps.push(ProfileTap {
                delay_ns: parse(fields[0])?,
                power_db: parse(fields[1])?,
            });
        }
        Self::new(name, taps)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::from_text(name, &text)
    }

    /// Linear tap powers scaled to unit sum.
    pub fn normalized_powers(&self) -> Vec<f64> {
        let lin: Vec<f64> = self.taps.iter().map(|t| 10f64.powf(t.power_db / 10.0)).collect();
        let total: f64 = lin.iter().sum();
        lin.into_iter().map(|p| p / total).collect()
    }

    /// Tap delays rounded to the nearest sample.
    pub fn tap_indices(&self, ts_s: f64) -> Vec<usize> {
        self.taps.iter().map(|t| (t.delay_ns * 1e-9 / ts_s).round() as usize).collect()
    }

    /// Largest integer tap delay, i.e. the shortest admissible cyclic prefix.
    pub fn max_tap(&self, ts_s: f64) -> usize {
        self.tap_indices(ts_s).into_iter().max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelPath {
    pub gain: C64,
    pub delay_s: f64,
    pub doppler_hz: f64,
}

impl ChannelPath {
    pub fn delay_tap(&self, ts_s: f64) -> usize {
        (self.delay_s / ts_s).round() as usize
    }
}

/// How path Doppler shifts are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DopplerMode {
    /// Jakes: `nu = f_dmax cos(theta)`, `theta` uniform.
    #[default]
    Fractional,
    /// Jakes draw rounded to the nearest Doppler bin.
    Integer,
}

/// Where the Doppler phasor is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeVariation {
    /// Phasor advances every sample: the physical model.
    #[default]
    PerSample,
    /// Phasor held at its value at the start of each block. With integer
    /// Doppler this makes the delay-Doppler matrix exactly BCCB.
    PerBlock,
}

/// Draws one realization: Rayleigh gains with the profile's normalized power,
/// delays at the profile's taps and Jakes Doppler shifts.
pub fn sample_paths<R: Rng + ?Sized>(profile: &PowerDelayProfile, f_dmax_hz: f64, geometry: &FrameGeometry, mode: DopplerMode, rng: &mut R) -> Result<Vec<ChannelPath>> {
    if !(f_dmax_hz >= 0.0 && f_dmax_hz.is_finite()) {
        return Err(OtfsError::Config(format!("maximum Doppler must be non-negative, got {f_dmax_hz}")));
    }
    let max_tap = profile.max_tap(geometry.ts_s);
    if max_tap > geometry.m_cp {
        return Err(OtfsError::Config(format!(
            "profile delay spread ({max_tap} samples) exceeds the cyclic prefix ({})",
            geometry.m_cp
        )));
    }
    let resolution = geometry.doppler_resolution_hz();
    let powers = profile.normalized_powers();
    let paths = profile
        .taps
        .iter()
        .zip(powers)
        .map(|(tap, power)| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let gain = C64::new(re, im) * (power / 2.0).sqrt();
            let theta: f64 = rng.gen_range(0.0..2.0 * PI);
            let mut doppler_hz = f_dmax_hz * theta.cos();
            if mode == DopplerMode::Integer {
                doppler_hz = (doppler_hz / resolution).round() * resolution;
            }
            ChannelPath {
                gain,
                delay_s: tap.delay_ns * 1e-9,
                doppler_hz,
            }
        })
        .collect();
    Ok(paths)
}

/// [`sample_paths`] with a ChaCha stream seeded from `seed`.
pub fn sample_paths_seeded(profile: &PowerDelayProfile, f_dmax_hz: f64, geometry: &FrameGeometry, mode: DopplerMode, seed: u64) -> Result<Vec<ChannelPath>> {
    sample_paths(profile, f_dmax_hz, geometry, mode, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// A fixed set of paths on a fixed frame.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    paths: Vec<ChannelPath>,
    geometry: FrameGeometry,
    variation: TimeVariation,
    taps: Vec<usize>,
}

impl ChannelRealization {
    pub fn new(paths: Vec<ChannelPath>, geometry: FrameGeometry, variation: TimeVariation) -> Result<Self> {
        let mut taps = Vec::with_capacity(paths.len());
        for p in &paths {
            if !(p.gain.re.is_finite() && p.gain.im.is_finite() && p.doppler_hz.is_finite() && p.delay_s >= 0.0) {
                return Err(OtfsError::Config(format!("invalid path {p:?}")));
            }
            let l = p.delay_tap(geometry.ts_s);
            if l > geometry.m_cp {
                return Err(OtfsError::Config(format!("path delay {l} exceeds the cyclic prefix {}", geometry.m_cp)));
            }
            taps.push(l);
        }
        Ok(Self { paths, geometry, variation, taps })
    }

    pub fn paths(&self) -> &[ChannelPath] {
        &self.paths
    }

    pub fn geometry(&self) -> &FrameGeometry {
        &self.geometry
    }

    pub fn variation(&self) -> TimeVariation {
        self.variation
    }

    fn phase_time(&self, n: usize, l: usize) -> f64 {
        match self.variation {
            TimeVariation::PerSample => (n - l) as f64,
            TimeVariation::PerBlock => {
                let b = self.geometry.block_len();
                ((n / b) * b) as f64
            }
        }
    }

    /// `r = H_DT s` without forming the matrix.
    pub fn apply_time_domain(&self, s: &[C64]) -> Result<Vec<C64>> {
        check_len(self.geometry.frame_samples(), s.len())?;
        let ts = self.geometry.ts_s;
        let mut r = vec![ZERO; s.len()];
        for (p, &l) in self.paths.iter().zip(&self.taps) {
            let w = 2.0 * PI * p.doppler_hz * ts;
            for n in l..s.len() {
                r[n] += p.gain * C64::from_polar(1.0, w * self.phase_time(n, l)) * s[n - l];
            }
        }
        Ok(r)
    }

    /// Sparse `H_DT`: row `n` has entry `h_p e^{j 2 pi nu_p t Ts}` at column `n - l_p`.
    pub fn dt_matrix(&self) -> SparseMatrix {
        let len = self.geometry.frame_samples();
        let ts = self.geometry.ts_s;
        let mut triplets = Vec::with_capacity(len * self.paths.len());
        for (p, &l) in self.paths.iter().zip(&self.taps) {
            let w = 2.0 * PI * p.doppler_hz * ts;
            for n in l..len {
                triplets.push((n, n - l, p.gain * C64::from_polar(1.0, w * self.phase_time(n, l))));
            }
        }
        SparseMatrix::from_triplets(len, len, triplets)
    }

    /// Closed-form delay-Doppler matrix `(F_N ⊗ R_cp) H_DT (F_N^H ⊗ A_cp)`.
    ///
    /// It is always block circulant; the block at Doppler offset `d` has, for
    /// each path, the entry at `(m, (m - l_p) mod M)` equal to
    /// `h_p / N sum_i e^{-j 2 pi d i / N} e^{j 2 pi nu_p t_i(m) Ts}`.
    /// Tagged BCCB when the phasor is per block and the Doppler shifts sit on
    /// the grid.
    pub fn dd_matrix(&self) -> Result<BlockMatrix> {
        let (m, n) = (self.geometry.m, self.geometry.n);
        let block = self.geometry.block_len() as f64;
        let ts = self.geometry.ts_s;
        let mcp = self.geometry.m_cp as f64;
        // Generator blocks D_d, each M x M.
        let mut gens = vec![CMatrix::zeros(m, m); n];
        for (p, &l) in self.paths.iter().zip(&self.taps) {
            let bins = p.doppler_hz * ts * block;
            for (d, gen) in gens.iter_mut().enumerate() {
                let a: C64 = (0..n).map(|i| C64::from_polar(1.0, 2.0 * PI * i as f64 * (bins - d as f64 / n as f64))).sum::<C64>() / n as f64;
                for row in 0..m {
                    let col = (row + m - l) % m;
                    let intra = match self.variation {
                        TimeVariation::PerSample => C64::from_polar(1.0, 2.0 * PI * p.doppler_hz * ts * (mcp + row as f64 - l as f64)),
                        TimeVariation::PerBlock => C64::new(1.0, 0.0),
                    };
                    gen[(row, col)] += p.gain * a * intra;
                }
            }
        }
        let mat = CMatrix::from_fn(m * n, m * n, |r, c| gens[block_offset(r / m, c / m, n)][(r % m, c % m)]);
        let integer = self.paths.iter().all(|p| {
            let bins = p.doppler_hz / self.geometry.doppler_resolution_hz();
            (bins - bins.round()).abs() < 1e-9
        });
        let tag = if self.variation == TimeVariation::PerBlock && integer {
            Structure::Bccb
        } else {
            Structure::BlockCirculant
        };
        BlockMatrix::new(mat, m, n, tag)
    }
}

/// Delay-Doppler matrix by brute force: column `j` is the demodulated
/// response to the unit vector `e_j`.
pub fn dd_matrix_from_dt(h_dt: &SparseMatrix, geometry: &FrameGeometry) -> Result<BlockMatrix> {
    let modem = OtfsModem::new(*geometry)?;
    let len = geometry.dd_len();
    let mut mat = CMatrix::zeros(len, len);
    let mut e = vec![ZERO; len];
    for j in 0..len {
        e[j] = C64::new(1.0, 0.0);
        let s = modem.modulate_vec(&e)?;
        let y = modem.demodulate(&h_dt.matvec(&s))?;
        for (i, v) in y.into_iter().enumerate() {
            mat[(i, j)] = v;
        }
        e[j] = ZERO;
    }
    BlockMatrix::dense(mat, geometry.m, geometry.n)
}

/// Number of off-diagonal Doppler blocks kept on each side:
/// `ceil(f_dmax M N Ts)`. Products within `1e-9` of an integer are rounded
/// to it so that exact multiples do not pick up an extra block.
pub fn truncation_bandwidth(f_dmax_hz: f64, m: usize, n: usize, ts_s: f64) -> Result<usize> {
    if !(f_dmax_hz >= 0.0 && ts_s > 0.0 && f_dmax_hz.is_finite() && ts_s.is_finite()) || m == 0 || n == 0 {
        return Err(OtfsError::Config("truncation bandwidth needs non-negative Doppler and positive dimensions".into()));
    }
    let x = f_dmax_hz * (m * n) as f64 * ts_s;
    let nearest = x.round();
    Ok(if (x - nearest).abs() < 1e-9 { nearest as usize } else { x.ceil() as usize })
}

/// Split of a delay-Doppler matrix into the kept band and the residual.
#[derive(Clone, Debug)]
pub struct TruncatedChannel {
    pub full: BlockMatrix,
    pub significant: BlockMatrix,
    pub residual: BlockMatrix,
    pub bandwidth: usize,
}

impl TruncatedChannel {
    /// Number of kept block offsets, `2B + 1`.
    pub fn kept_offsets(&self) -> usize {
        2 * self.bandwidth + 1
    }
}

/// Keeps the blocks at Doppler offsets `{0..=B} ∪ {N-B..N}` (cyclically) and
/// moves every other block into the residual.
pub fn truncate(h_dd: &BlockMatrix, bandwidth: usize) -> Result<TruncatedChannel> {
    let (m, n) = (h_dd.block_size(), h_dd.block_count());
    if 2 * bandwidth + 1 > n {
        return Err(OtfsError::Config(format!("bandwidth {bandwidth} too large for N = {n}")));
    }
    let full = h_dd.matrix();
    let mut sig = CMatrix::zeros(m * n, m * n);
    let mut res = CMatrix::zeros(m * n, m * n);
    for r in 0..m * n {
        for c in 0..m * n {
            let v = full[(r, c)];
            if v == ZERO {
                continue;
            }
            if offset_in_band(block_offset(r / m, c / m, n), bandwidth, n) {
                sig[(r, c)] = v;
            } else {
                res[(r, c)] = v;
            }
        }
    }
    let circulant = matches!(h_dd.structure(), Structure::BlockCirculant | Structure::Bccb);
    let sig_tag = Structure::BlockBanded { bandwidth };
    let res_tag = match h_dd.structure() {
        Structure::Bccb => Structure::Bccb,
        _ if circulant => Structure::BlockCirculant,
        _ => Structure::Dense,
    };
    let significant = BlockMatrix::new(sig, m, n, sig_tag)?;
    let residual = BlockMatrix::new(res, m, n, res_tag)?;
    Ok(TruncatedChannel {
        full: h_dd.clone(),
        significant,
        residual,
        bandwidth,
    })
}

/// Mean squared Frobenius norm of the blocks at each Doppler offset.
pub fn block_energy_by_offset(h_dd: &BlockMatrix) -> Vec<f64> {
    let (m, n) = (h_dd.block_size(), h_dd.block_count());
    let mat = h_dd.matrix();
    let mut energy = vec![0.0; n];
    for r in 0..m * n {
        for c in 0..m * n {
            energy[block_offset(r / m, c / m, n)] += mat[(r, c)].norm_sqr();
        }
    }
    energy.iter_mut().for_each(|e| *e /= n as f64);
    energy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_ops::bccb_to_tf_diagonal;
    use crate::oracle;

    fn eva_geometry() -> FrameGeometry {
        FrameGeometry::new(64, 16, 7, 370.3e-9).unwrap()
    }

    fn small_geometry() -> FrameGeometry {
        FrameGeometry::new(8, 4, 3, 1e-6).unwrap()
    }

    #[test]
    fn eva_taps_round_to_expected_samples() {
        let idx = PowerDelayProfile::eva().tap_indices(370.3e-9);
        assert_eq!(idx, vec![0, 0, 0, 1, 1, 2, 3, 5, 7]);
        assert_eq!(PowerDelayProfile::eva().max_tap(370.3e-9), 7);
    }

    #[test]
    fn normalized_powers_sum_to_one() {
        let p = PowerDelayProfile::eva().normalized_powers();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > p[8]);
    }

    #[test]
    fn profile_text_round_trip() {
        let text = "# delay power\n0, 0\n100 -3.0\n\n250\t-6 # tail\n";
        let p = PowerDelayProfile::from_text("custom", text).unwrap();
        assert_eq!(p.taps.len(), 3);
        assert_eq!(p.taps[2].delay_ns, 250.0);
        assert!(PowerDelayProfile::from_text("bad", "1 2 3").is_err());
        assert!(PowerDelayProfile::from_text("empty", "# nothing").is_err());
    }

    #[test]
    fn doppler_from_speed() {
        assert!((max_doppler_hz(4e9, 120.0) - 444.7).abs() < 0.1);
        let fd = max_doppler_hz(5.9e9, 500.0);
        assert!((fd - 2733.0).abs() < 1.0, "{fd}");
    }

    #[test]
    fn bandwidth_examples() {
        assert_eq!(truncation_bandwidth(2.73e3, 64, 16, 370.3e-9).unwrap(), 2);
        assert_eq!(truncation_bandwidth(0.0, 64, 16, 370.3e-9).unwrap(), 0);
        assert_eq!(truncation_bandwidth(1e-12, 64, 16, 370.3e-9).unwrap(), 0);
        assert_eq!(truncation_bandwidth(1.0, 64, 16, 370.3e-9).unwrap(), 1);
        // exactly 2 blocks, not bumped to 3
        let ts = 1e-6;
        assert_eq!(truncation_bandwidth(2.0 / (64.0 * 16.0 * ts), 64, 16, ts).unwrap(), 2);
    }

    #[test]
    fn path_delay_beyond_cp_rejected() {
        let g = FrameGeometry::new(64, 16, 4, 370.3e-9).unwrap();
        let err = sample_paths_seeded(&PowerDelayProfile::eva(), 100.0, &g, DopplerMode::Fractional, 1);
        assert!(matches!(err, Err(OtfsError::Config(_))));
        assert!(FrameGeometry::new(8, 4, 8, 1e-6).is_err());
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let g = eva_geometry();
        let a = sample_paths_seeded(&PowerDelayProfile::eva(), 2.73e3, &g, DopplerMode::Fractional, 9).unwrap();
        let b = sample_paths_seeded(&PowerDelayProfile::eva(), 2.73e3, &g, DopplerMode::Fractional, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p.doppler_hz.abs() <= 2.73e3));
    }

    #[test]
    fn integer_doppler_sits_on_grid() {
        let g = eva_geometry();
        let paths = sample_paths_seeded(&PowerDelayProfile::eva(), 2.73e3, &g, DopplerMode::Integer, 3).unwrap();
        for p in paths {
            let bins = p.doppler_hz / g.doppler_resolution_hz();
            assert!((bins - bins.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn static_single_path_is_identity_channel() {
        let g = small_geometry();
        let path = ChannelPath {
            gain: C64::new(1.0, 0.0),
            delay_s: 0.0,
            doppler_hz: 0.0,
        };
        let ch = ChannelRealization::new(vec![path], g, TimeVariation::PerSample).unwrap();
        let h = ch.dd_matrix().unwrap();
        assert!(h.matrix().max_abs_diff(&CMatrix::identity(32)) < 1e-12);
    }

    fn random_paths(g: &FrameGeometry, seed: u64, integer: bool) -> Vec<ChannelPath> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..3)
            .map(|_| {
                let l = rng.gen_range(0..=g.m_cp);
                let mut nu = rng.gen_range(-1.5..1.5) * g.doppler_resolution_hz();
                if integer {
                    nu = (nu / g.doppler_resolution_hz()).round() * g.doppler_resolution_hz();
                }
                ChannelPath {
                    gain: C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    delay_s: l as f64 * g.ts_s,
                    doppler_hz: nu,
                }
            })
            .collect()
    }

    #[test]
    fn time_domain_paths_agree_with_scalar_loop() {
        let g = small_geometry();
        for variation in [TimeVariation::PerSample, TimeVariation::PerBlock] {
            let paths = random_paths(&g, 5, false);
            let ch = ChannelRealization::new(paths.clone(), g, variation).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let s: Vec<C64> = (0..g.frame_samples()).map(|_| C64::new(rng.gen(), rng.gen())).collect();
            let want = oracle::time_domain_convolution(&paths, &g, variation, &s);
            assert!(crate::grid_ops::max_abs_diff(&ch.apply_time_domain(&s).unwrap(), &want) < 1e-12);
            assert!(crate::grid_ops::max_abs_diff(&ch.dt_matrix().matvec(&s), &want) < 1e-12);
        }
    }

    #[test]
    fn closed_form_dd_matches_triple_product() {
        let g = small_geometry();
        for (seed, variation) in [(1, TimeVariation::PerSample), (2, TimeVariation::PerBlock)] {
            let ch = ChannelRealization::new(random_paths(&g, seed, false), g, variation).unwrap();
            let closed = ch.dd_matrix().unwrap();
            let dense = oracle::dd_from_dt_dense(&ch.dt_matrix().to_dense(), &g);
            assert!(closed.matrix().max_abs_diff(&dense) < 1e-10);
            let probed = dd_matrix_from_dt(&ch.dt_matrix(), &g).unwrap();
            assert!(probed.matrix().max_abs_diff(&dense) < 1e-10);
            assert!(closed.check(Structure::BlockCirculant, 1e-9));
        }
    }

    #[test]
    fn integer_per_block_channel_is_bccb() {
        let g = small_geometry();
        let ch = ChannelRealization::new(random_paths(&g, 4, true), g, TimeVariation::PerBlock).unwrap();
        let h = ch.dd_matrix().unwrap();
        assert_eq!(h.structure(), Structure::Bccb);
        assert!(bccb_to_tf_diagonal(&h).is_ok());
    }

    #[test]
    fn fractional_per_sample_channel_is_not_bccb() {
        let g = small_geometry();
        let ch = ChannelRealization::new(random_paths(&g, 4, false), g, TimeVariation::PerSample).unwrap();
        let h = ch.dd_matrix().unwrap();
        assert_eq!(h.structure(), Structure::BlockCirculant);
        assert!(!h.check(Structure::Bccb, 1e-6));
    }

    #[test]
    fn truncation_splits_exactly() {
        let g = FrameGeometry::new(8, 8, 3, 1e-6).unwrap();
        let ch = ChannelRealization::new(random_paths(&g, 7, false), g, TimeVariation::PerSample).unwrap();
        let h = ch.dd_matrix().unwrap();
        for b in 0..=3 {
            let t = truncate(&h, b).unwrap();
            assert_eq!(t.kept_offsets(), 2 * b + 1);
            let sum = t.significant.matrix().add(t.residual.matrix());
            assert_eq!(sum.max_abs_diff(h.matrix()), 0.0);
            for i in 0..8 {
                for j in 0..8 {
                    let d = block_offset(i, j, 8);
                    let (s, r) = (t.significant.block(i, j), t.residual.block(i, j));
                    if offset_in_band(d, b, 8) {
                        assert_eq!(r.max_abs(), 0.0);
                    } else {
                        assert_eq!(s.max_abs(), 0.0);
                    }
                }
            }
        }
        assert!(truncate(&h, 4).is_err());
    }

    #[test]
    fn eva_energy_beyond_band_is_small() {
        let g = eva_geometry();
        let mut total = vec![0.0; g.n];
        for seed in 0..8 {
            let paths = sample_paths_seeded(&PowerDelayProfile::eva(), 2.73e3, &g, DopplerMode::Fractional, seed).unwrap();
            let ch = ChannelRealization::new(paths, g, TimeVariation::PerSample).unwrap();
            for (t, e) in total.iter_mut().zip(block_energy_by_offset(&ch.dd_matrix().unwrap())) {
                *t += e;
            }
        }
        let kept: f64 = (0..g.n).filter(|&d| offset_in_band(d, 2, g.n)).map(|d| total[d]).sum();
        let all: f64 = total.iter().sum();
        assert!(kept / all > 0.95, "kept fraction {}", kept / all);
    }
}
