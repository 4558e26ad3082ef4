//! Complex-multiplication counts of the compared detectors, leading
//! constants set to one.
//!
//! | method        | CMs                                                        |
//! |---------------|------------------------------------------------------------|
//! | full MMSE     | `M^3 N^3`                                                  |
//! | MP            | `M N^2 L Q I_MP`                                           |
//! | LSMR with SIC | `M N^2 L I_LSMR I_SIC`                                     |
//! | TTE-SIC       | `M N I_SIC (B' L I_LSQR + 2Q + N - B' + 4 - (B'/N) log2 M + log2 N)` |
//!
//! `B' = 2B + 1`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{OtfsError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexityParams {
    pub m: u64,
    pub n: u64,
    /// Number of channel paths.
    pub l: u64,
    /// Constellation size.
    pub q: u64,
    pub b: u64,
    pub i_lsqr: u64,
    pub i_mp: u64,
    pub i_lsmr: u64,
    pub i_sic_lsmr: u64,
    pub i_sic_prop: u64,
}

impl ComplexityParams {
    pub fn kept_offsets(&self) -> u64 {
        2 * self.b + 1
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.m, self.n, self.l, self.q, self.i_lsqr, self.i_mp, self.i_lsmr, self.i_sic_lsmr, self.i_sic_prop];
        if all.contains(&0) {
            return Err(OtfsError::Config("complexity parameters must be positive".into()));
        }
        if self.kept_offsets() > self.n {
            return Err(OtfsError::Config(format!("B' = {} exceeds N = {}", self.kept_offsets(), self.n)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplexityRow {
    pub method: &'static str,
    pub complex_multiplications: f64,
}

pub fn full_mmse(p: &ComplexityParams) -> f64 {
    (p.m as f64).powi(3) * (p.n as f64).powi(3)
}

pub fn message_passing(p: &ComplexityParams) -> f64 {
    (p.m * p.n * p.n * p.l * p.q * p.i_mp) as f64
}

pub fn lsmr_sic(p: &ComplexityParams) -> f64 {
    (p.m * p.n * p.n * p.l * p.i_lsmr * p.i_sic_lsmr) as f64
}

pub fn tte_sic(p: &ComplexityParams) -> f64 {
    let (m, n, bp) = (p.m as f64, p.n as f64, p.kept_offsets() as f64);
    let per_symbol = bp * (p.l * p.i_lsqr) as f64 + 2.0 * p.q as f64 + n - bp + 4.0 - bp / n * m.log2() + n.log2();
    m * n * p.i_sic_prop as f64 * per_symbol
}

pub fn complexity_report(p: &ComplexityParams) -> Result<Vec<ComplexityRow>> {
    p.validate()?;
    Ok(vec![
        ComplexityRow {
            method: "full_mmse",
            complex_multiplications: full_mmse(p),
        },
        ComplexityRow {
            method: "mp",
            complex_multiplications: message_passing(p),
        },
        ComplexityRow {
            method: "lsmr_sic",
            complex_multiplications: lsmr_sic(p),
        },
        ComplexityRow {
            method: "tte_sic",
            complex_multiplications: tte_sic(p),
        },
    ])
}

/// File accepted by `otfs-sim complexity`: fixed parameters plus an
/// optional list of `N` values to evaluate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexityConfig {
    pub params: ComplexityParams,
    #[serde(default)]
    pub n_values: Vec<u64>,
}

impl ComplexityConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| OtfsError::Parse(e.to_string()))
    }

    /// CSV table `n,full_mmse,mp,lsmr_sic,tte_sic,mmse_over_tte,lsmr_over_tte`.
    pub fn table(&self) -> Result<String> {
        let ns = if self.n_values.is_empty() { vec![self.params.n] } else { self.n_values.clone() };
        let mut out = String::from("n,full_mmse,mp,lsmr_sic,tte_sic,mmse_over_tte,lsmr_over_tte\n");
        for n in ns {
            let p = ComplexityParams { n, ..self.params.clone() };
            p.validate()?;
            let prop = tte_sic(&p);
            let _ = writeln!(
                out,
                "{n},{:.6e},{:.6e},{:.6e},{:.6e},{:.4},{:.4}",
                full_mmse(&p),
                message_passing(&p),
                lsmr_sic(&p),
                prop,
                full_mmse(&p) / prop,
                lsmr_sic(&p) / prop
            );
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: u64) -> ComplexityParams {
        ComplexityParams {
            m: 64,
            n,
            l: 7,
            q: 4,
            b: 2,
            i_lsqr: 20,
            i_mp: 30,
            i_lsmr: 20,
            i_sic_lsmr: 5,
            i_sic_prop: 3,
        }
    }

    #[test]
    fn worked_example() {
        let p = params(16);
        // 1024 * 3 * (700 + 8 + 11 + 4 - 1.875 + 4)
        assert_eq!(tte_sic(&p), 1024.0 * 3.0 * 725.125);
        assert_eq!(full_mmse(&p), 1_073_741_824.0);
    }

    #[test]
    fn no_residual_term_when_band_is_full() {
        let mut p = params(5);
        p.b = 2;
        let with_full_band = tte_sic(&p);
        let (m, n, bp) = (64.0f64, 5.0f64, 5.0f64);
        let expected = m * n * 3.0 * (bp * 140.0 + 8.0 + 4.0 - bp / n * m.log2() + n.log2());
        assert!((with_full_band - expected).abs() < 1e-6);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = params(16);
        p.b = 8;
        assert!(complexity_report(&p).is_err());
        p.b = 2;
        p.l = 0;
        assert!(complexity_report(&p).is_err());
    }

    #[test]
    fn table_from_toml() {
        let cfg = ComplexityConfig::from_toml(
            "n_values = [16, 64]\n[params]\nm = 64\nn = 16\nl = 7\nq = 4\nb = 2\ni_lsqr = 20\ni_mp = 30\ni_lsmr = 20\ni_sic_lsmr = 5\ni_sic_prop = 3\n",
        )
        .unwrap();
        let t = cfg.table().unwrap();
        assert_eq!(t.lines().count(), 3);
        assert!(t.lines().nth(1).unwrap().starts_with("16,"));
        assert!(ComplexityConfig::from_toml("[params]\nm = 1\nbogus = 2\n").is_err());
    }
}
