//! Quick oracle comparisons run by `otfs-sim selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{truncate, ChannelPath, ChannelRealization, FrameGeometry, TimeVariation};
use crate::equalizer::{mlsqr, mmse_equalize, MlsqrEqualizer, MlsqrSettings};
use crate::error::Result;
use crate::fec_chain::{maxlog_bcjr, ConvCode};
use crate::grid_ops::{max_abs_diff, norm2, BlockMatrix, Direction, KronDft, Structure, C64};
use crate::mapping::Constellation;
use crate::modem::OtfsModem;
use crate::oracle;
use crate::receiver::{sic_cancel_tf, TfResidualChannel};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub error: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

fn cvec(rng: &mut ChaCha8Rng, len: usize) -> Vec<C64> {
    (0..len).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

fn channel(rng: &mut ChaCha8Rng, g: &FrameGeometry, integer: bool, variation: TimeVariation) -> Result<BlockMatrix> {
    let res = g.doppler_resolution_hz();
    let paths = (0..3)
        .map(|_| {
            let nu: f64 = rng.gen_range(-1.6..1.6);
            ChannelPath {
                gain: C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                delay_s: rng.gen_range(0..=g.m_cp) as f64 * g.ts_s,
                doppler_hz: if integer { nu.round() * res } else { nu * res },
            }
        })
        .collect();
    ChannelRealization::new(paths, *g, variation)?.dd_matrix()
}

fn checks(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let g = FrameGeometry::new(8, 8, 3, 1e-6)?;

    let x = cvec(rng, 64);
    let fast = KronDft::new(8, 8).apply(&x, Direction::Forward)?;
    out.push(Check {
        name: "kronecker dft vs dense",
        error: max_abs_diff(&fast, &oracle::kron_dft_matrix(8, 8).matvec(&x)),
        tolerance: 1e-10,
    });

    let modem = OtfsModem::new(g)?;
    out.push(Check {
        name: "modem round trip",
        error: max_abs_diff(&modem.demodulate(&modem.modulate_vec(&x)?)?, &x),
        tolerance: 1e-10,
    });

    let paths = vec![
        ChannelPath {
            gain: C64::new(0.8, 0.1),
            delay_s: 0.0,
            doppler_hz: 0.3 * g.doppler_resolution_hz(),
        },
        ChannelPath {
            gain: C64::new(-0.2, 0.5),
            delay_s: 2.0 * g.ts_s,
            doppler_hz: -1.7 * g.doppler_resolution_hz(),
        },
    ];
    let ch = ChannelRealization::new(paths, g, TimeVariation::PerSample)?;
    let h = ch.dd_matrix()?;
    out.push(Check {
        name: "delay-Doppler matrix vs triple product",
        error: h.matrix().max_abs_diff(&oracle::dd_from_dt_dense(&ch.dt_matrix().to_dense(), &g)),
        tolerance: 1e-10,
    });

    let t = truncate(&h, 1)?;
    out.push(Check {
        name: "truncation split",
        error: t.significant.matrix().add(t.residual.matrix()).max_abs_diff(h.matrix()),
        tolerance: 0.0,
    });

    let delta = TfResidualChannel::new(&t.residual)?;
    let dft = KronDft::new(8, 8);
    let y = cvec(rng, 64);
    let mu = cvec(rng, 64);
    let tf = sic_cancel_tf(&dft.apply(&y, Direction::Forward)?, &delta, &mu)?;
    let dd: Vec<C64> = y.iter().zip(t.residual.matrix().matvec(&mu)).map(|(a, b)| a - b).collect();
    out.push(Check {
        name: "TF cancellation vs delay-Doppler cancellation",
        error: max_abs_diff(&dft.apply(&tf, Direction::Inverse)?, &dd),
        tolerance: 1e-10,
    });

    let mut worst = 0.0f64;
    for _ in 0..10 {
        let h = channel(rng, &g, false, TimeVariation::PerSample)?;
        let y = cvec(rng, 64);
        let sigma2 = rng.gen_range(0.05..0.5);
        let eq = MlsqrEqualizer::new(&h)?;
        let settings = MlsqrSettings {
            max_iterations: 200,
            rel_tol: 0.0,
        };
        let got = mlsqr(eq.operator(), eq.gram(), &y, sigma2, &settings)?;
        let want = oracle::damped_least_squares(h.matrix(), &y, sigma2).unwrap_or_default();
        worst = worst.max(max_abs_diff(&got.x_hat, &want) / norm2(&want).max(1e-300));
    }
    out.push(Check {
        name: "mLSQR vs damped direct solve",
        error: worst,
        tolerance: 1e-6,
    });

    let g4 = FrameGeometry::new(4, 4, 2, 1e-6)?;
    let h = channel(rng, &g4, true, TimeVariation::PerBlock)?;
    let y = cvec(rng, 16);
    let eq = MlsqrEqualizer::new(&h)?;
    let settings = MlsqrSettings { max_iterations: 12, rel_tol: 0.0 };
    let worst = if h.structure() == Structure::Bccb {
        let run = eq.equalize(&y, 0.1, &settings)?;
        let dense = oracle::dense_w_recursion(&run.history, h.matrix(), 0.1);
        let (mu_d, nu_d) = oracle::first_row_sinr(dense.last().expect("at least one iteration"), h.matrix(), 0.1);
        ((run.mu[0] - mu_d).abs() + (run.nu[0] - nu_d).abs()) / (mu_d.abs() + nu_d.abs())
    } else {
        f64::INFINITY
    };
    out.push(Check {
        name: "TF filter recursion vs dense recursion",
        error: worst,
        tolerance: 1e-8,
    });

    let h = channel(rng, &g4, false, TimeVariation::PerSample)?;
    let mmse = mmse_equalize(&h, &y, 0.2)?;
    let w = oracle::inverse_dense(&oracle::damped_normal_matrix(h.matrix(), 0.2)).unwrap_or_else(|| h.matrix().clone());
    let (mu_l, nu_l) = oracle::equalizer_statistics(&w, h.matrix(), 0.2);
    let err = mmse.mu.iter().zip(&mu_l).chain(mmse.nu.iter().zip(&nu_l)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    out.push(Check {
        name: "MMSE statistics vs literal formulas",
        error: err,
        tolerance: 1e-9,
    });

    let c = Constellation::qam(16)?;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let x = C64::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
        let (m, v) = (rng.gen_range(0.1..1.0), rng.gen_range(0.05..1.0));
        let got = c.soft_demap(&[x], &[m], &[v], None)?;
        let want = oracle::brute_force_demap(x, m, v, c.points(), c.labels(), &[0.0; 4]);
        worst = worst.max(got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    out.push(Check {
        name: "max-log demapper vs brute force",
        error: worst,
        tolerance: 1e-9,
    });

    let code = ConvCode::standard();
    let llr: Vec<f64> = (0..20).map(|_| rng.gen_range(-4.0..4.0)).collect();
    let d = maxlog_bcjr(&code, &llr)?;
    let (coded, _) = oracle::exhaustive_maxlog_map(&llr, 8, &[0o5, 0o7], 3);
    out.push(Check {
        name: "max-log BCJR vs exhaustive MAP",
        error: d.coded_posterior.iter().zip(&coded).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
        tolerance: 1e-9,
    });
    Ok(out)
}

/// Runs every check with a fixed seed.
pub fn run_selftest() -> Result<Vec<Check>> {
    checks(&mut ChaCha8Rng::seed_from_u64(0x5e1f_7e57))
}
