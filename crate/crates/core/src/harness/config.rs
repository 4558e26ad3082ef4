//! Simulation configuration, read from TOML. Unknown keys are rejected.
//!
//! ```toml
//! master_seed = 1
//!
//! [frame]
//! m = 64
//! n = 16
//! cp = 7            # optional, defaults to the profile's largest tap
//! qam = 4
//!
//! [code]
//! generators = ["5", "7"]   # octal
//! constraint_length = 3
//!
//! [channel]
//! profile = "eva"           # or a path to a `delay_ns power_db` file
//! fc_hz = 5.9e9
//! ts_s = 370.3e-9
//! velocity_kmh = 500.0
//! doppler = "fractional"    # or "integer"
//! time_variation = "per_sample"  # or "per_block"
//!
//! [sweep]
//! snr_db = [4.0, 6.0, 8.0]
//! frames_per_point = 200
//! target_bit_errors = 0     # 0 disables early stopping
//! batch = 8
//! common_frames = false     # true: same frames at every SNR point
//!
//! [receiver]                # defaults for every tte_sic method
//! sic_iterations = 2
//! lsqr_max_iterations = 20
//! lsqr_rel_tol = 1e-4
//! reference = "from_original"
//! demapper_priors = false
//!
//! [[method]]
//! kind = "tte_sic"
//! bandwidth = 2             # optional, defaults to the truncation criterion
//!
//! [[method]]
//! kind = "mmse"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{max_doppler_hz, truncation_bandwidth, DopplerMode, FrameGeometry, PowerDelayProfile, TimeVariation};
use crate::equalizer::MlsqrSettings;
use crate::error::{OtfsError, Result};
use crate::fec_chain::ConvCode;
use crate::mapping::Constellation;
use crate::receiver::{SicReference, TteSicConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub master_seed: u64,
    pub frame: FrameSection,
    #[serde(default)]
    pub code: CodeSection,
    pub channel: ChannelSection,
    pub sweep: SweepSection,
    #[serde(default)]
    pub receiver: ReceiverSection,
    #[serde(rename = "method")]
    pub methods: Vec<MethodSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSection {
    pub m: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cp: Option<usize>,
    pub qam: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeSection {
    pub generators: Vec<String>,
    pub constraint_length: usize,
}

impl Default for CodeSection {
    fn default() -> Self {
        Self {
            generators: vec!["5".into(), "7".into()],
            constraint_length: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub profile: String,
    pub fc_hz: f64,
    pub ts_s: f64,
    pub velocity_kmh: f64,
    #[serde(default)]
    pub doppler: DopplerMode,
    #[serde(default)]
    pub time_variation: TimeVariation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub snr_db: Vec<f64>,
    pub frames_per_point: u64,
    #[serde(default)]
    pub target_bit_errors: u64,
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Reuse the same frame seeds (bits, channel, unit-variance noise) at
    /// every SNR point.
    #[serde(default)]
    pub common_frames: bool,
}

fn default_batch() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverSection {
    pub sic_iterations: usize,
    pub lsqr_max_iterations: usize,
    pub lsqr_rel_tol: f64,
    pub reference: SicReference,
    pub demapper_priors: bool,
}

impl Default for ReceiverSection {
    fn default() -> Self {
        let d = TteSicConfig::default();
        Self {
            sic_iterations: d.sic_iterations,
            lsqr_max_iterations: d.lsqr.max_iterations,
            lsqr_rel_tol: d.lsqr.rel_tol,
            reference: d.reference,
            demapper_priors: d.demapper_priors,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    TteSic,
    Mmse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub kind: MethodKind,
    /// Label in the output; defaults to the kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sic_iterations: Option<usize>,
}

/// A method with every default filled in.
#[derive(Clone, Debug, PartialEq)]
pub enum ResolvedMethod {
    TteSic { name: String, bandwidth: usize, config: TteSicConfig },
    Mmse { name: String },
}

impl ResolvedMethod {
    pub fn name(&self) -> &str {
        match self {
            ResolvedMethod::TteSic { name, .. } | ResolvedMethod::Mmse { name } => name,
        }
    }

    pub fn bandwidth(&self) -> Option<usize> {
        match self {
            ResolvedMethod::TteSic { bandwidth, .. } => Some(*bandwidth),
            ResolvedMethod::Mmse { .. } => None,
        }
    }

    pub fn sic_iterations(&self) -> Option<usize> {
        match self {
            ResolvedMethod::TteSic { config, .. } => Some(config.sic_iterations),
            ResolvedMethod::Mmse { .. } => None,
        }
    }
}

/// Everything derived from a validated config that the sweep needs.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub geometry: FrameGeometry,
    pub profile: PowerDelayProfile,
    pub f_dmax_hz: f64,
    pub doppler: DopplerMode,
    pub time_variation: TimeVariation,
    /// Bandwidth from the truncation criterion.
    pub auto_bandwidth: usize,
    pub code: ConvCode,
    pub constellation: Constellation,
    pub methods: Vec<ResolvedMethod>,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(OtfsError::Config(format!("{name} must be positive, got {v}")))
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| OtfsError::Parse(e.to_string()))
    }

    /// Relative profile paths resolve against `base`.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::from_toml(&text)?, base))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| OtfsError::Parse(e.to_string()))
    }

    fn profile(&self, base: &Path) -> Result<PowerDelayProfile> {
        if self.channel.profile.eq_ignore_ascii_case("eva") {
            Ok(PowerDelayProfile::eva())
        } else {
            PowerDelayProfile::load(&base.join(&self.channel.profile))
        }
    }

    /// Checks every field and fills defaults. Infeasible setups (cyclic
    /// prefix shorter than the delay spread, impossible bandwidths, frame too
    /// small for the code) fail here, before any frame is simulated.
    pub fn resolve(&self, base: &Path) -> Result<Scenario> {
        positive("fc_hz", self.channel.fc_hz)?;
        positive("ts_s", self.channel.ts_s)?;
        positive("velocity_kmh", self.channel.velocity_kmh)?;
        if self.sweep.snr_db.is_empty() {
            return Err(OtfsError::Config("snr grid is empty".into()));
        }
        if self.sweep.snr_db.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return Err(OtfsError::Config("snr grid contains NaN or -inf".into()));
        }
        if self.sweep.frames_per_point == 0 {
            return Err(OtfsError::Config("frames_per_point must be positive".into()));
        }
        if self.sweep.batch == 0 {
            return Err(OtfsError::Config("batch must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(OtfsError::Config("no methods configured".into()));
        }
        let profile = self.profile(base)?;
        let cp = self.frame.cp.unwrap_or_else(|| profile.max_tap(self.channel.ts_s));
        let geometry = FrameGeometry::new(self.frame.m, self.frame.n, cp, self.channel.ts_s)?;
        if profile.max_tap(geometry.ts_s) > cp {
            return Err(OtfsError::Config(format!(
                "cyclic prefix {cp} is shorter than the delay spread ({} samples)",
                profile.max_tap(geometry.ts_s)
            )));
        }
        let generators = self
            .code
            .generators
            .iter()
            .map(|g| u32::from_str_radix(g, 8).map_err(|e| OtfsError::Config(format!("generator `{g}` is not octal: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let code = ConvCode::new(&generators, self.code.constraint_length)?;
        let constellation = Constellation::qam(self.frame.qam)?;
        code.info_len_for(geometry.dd_len() * constellation.bits_per_symbol())?;

        let f_dmax_hz = max_doppler_hz(self.channel.fc_hz, self.channel.velocity_kmh);
        let auto_b = truncation_bandwidth(f_dmax_hz, geometry.m, geometry.n, geometry.ts_s)?;
        let r = &self.receiver;
        if r.sic_iterations == 0 || r.lsqr_max_iterations == 0 || r.lsqr_rel_tol.is_nan() || r.lsqr_rel_tol < 0.0 {
            return Err(OtfsError::Config("receiver iteration counts must be positive".into()));
        }
        let mut methods = Vec::with_capacity(self.methods.len());
        for spec in &self.methods {
            let resolved = match spec.kind {
                MethodKind::TteSic => {
                    let bandwidth = spec.bandwidth.unwrap_or(auto_b);
                    if 2 * bandwidth + 1 > geometry.n {
                        return Err(OtfsError::Config(format!("bandwidth {bandwidth} too large for N = {}", geometry.n)));
                    }
                    let sic_iterations = spec.sic_iterations.unwrap_or(r.sic_iterations);
                    if sic_iterations == 0 {
                        return Err(OtfsError::Config("sic_iterations must be positive".into()));
                    }
                    ResolvedMethod::TteSic {
                        name: spec.name.clone().unwrap_or_else(|| "tte_sic".into()),
                        bandwidth,
                        config: TteSicConfig {
                            sic_iterations,
                            lsqr: MlsqrSettings {
                                max_iterations: r.lsqr_max_iterations,
                                rel_tol: r.lsqr_rel_tol,
                            },
                            reference: r.reference,
                            demapper_priors: r.demapper_priors,
                        },
                    }
                }
                MethodKind::Mmse => {
                    if spec.bandwidth.is_some() || spec.sic_iterations.is_some() {
                        return Err(OtfsError::Config("mmse takes no bandwidth or sic_iterations".into()));
                    }
                    ResolvedMethod::Mmse {
                        name: spec.name.clone().unwrap_or_else(|| "mmse".into()),
                    }
                }
            };
            if methods
                .iter()
                .any(|m: &ResolvedMethod| m.name() == resolved.name() && m.bandwidth() == resolved.bandwidth() && m.sic_iterations() == resolved.sic_iterations())
            {
                return Err(OtfsError::Config(format!("duplicate method `{}`", resolved.name())));
            }
            methods.push(resolved);
        }
        Ok(Scenario {
            geometry,
            profile,
            f_dmax_hz,
            doppler: self.channel.doppler,
            time_variation: self.channel.time_variation,
            auto_bandwidth: auto_b,
            code,
            constellation,
            methods,
        })
    }
}

/// `sigma^2 = 10^{-SNR/10}` for unit symbol energy.
pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
master_seed = 7

[frame]
m = 64
n = 16
qam = 4

[channel]
profile = "eva"
fc_hz = 5.9e9
ts_s = 370.3e-9
velocity_kmh = 500.0

[sweep]
snr_db = [4.0, 8.0]
frames_per_point = 10

[[method]]
kind = "tte_sic"

[[method]]
kind = "mmse"
"#;

    #[test]
    fn example_resolves_to_paper_setup() {
        let cfg = SimConfig::from_toml(EXAMPLE).unwrap();
        let sc = cfg.resolve(Path::new(".")).unwrap();
        assert_eq!(sc.geometry.m_cp, 7);
        assert_eq!(sc.methods[0].bandwidth(), Some(2));
        assert_eq!(sc.methods[0].sic_iterations(), Some(2));
        assert_eq!(sc.methods[1].bandwidth(), None);
        assert_eq!(sc.code, ConvCode::standard());
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = EXAMPLE.replace("qam = 4", "qam = 4\ncolour = 3");
        assert!(matches!(SimConfig::from_toml(&bad), Err(OtfsError::Parse(_))));
    }

    #[test]
    fn infeasible_configs_rejected() {
        let short_cp = EXAMPLE.replace("qam = 4", "qam = 4\ncp = 3");
        assert!(SimConfig::from_toml(&short_cp).unwrap().resolve(Path::new(".")).is_err());
        let empty = EXAMPLE.replace("snr_db = [4.0, 8.0]", "snr_db = []");
        assert!(SimConfig::from_toml(&empty).unwrap().resolve(Path::new(".")).is_err());
        let neg = EXAMPLE.replace("velocity_kmh = 500.0", "velocity_kmh = -1.0");
        assert!(SimConfig::from_toml(&neg).unwrap().resolve(Path::new(".")).is_err());
        let wide = EXAMPLE.replace("kind = \"tte_sic\"", "kind = \"tte_sic\"\nbandwidth = 8");
        assert!(SimConfig::from_toml(&wide).unwrap().resolve(Path::new(".")).is_err());
        let octal = EXAMPLE.replace("[channel]", "[code]\ngenerators = [\"9\"]\nconstraint_length = 3\n\n[channel]");
        assert!(SimConfig::from_toml(&octal).unwrap().resolve(Path::new(".")).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = SimConfig::from_toml(EXAMPLE).unwrap();
        assert_eq!(SimConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn snr_to_noise() {
        assert!((noise_variance(10.0) - 0.1).abs() < 1e-15);
        assert_eq!(noise_variance(f64::INFINITY), 0.0);
    }
}
