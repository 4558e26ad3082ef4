//! Fixtures shared by the criterion benchmarks: one EVA frame in the
//! reference configuration (M = 64, N = 16, 4-QAM, 500 km/h at 5.9 GHz).

use otfs_core::channel::{max_doppler_hz, sample_paths_seeded};
use otfs_core::{
    add_awgn, truncate, truncation_bandwidth, ChannelRealization, Constellation, ConvCode, DopplerMode, FrameCoding, FrameGeometry, OtfsModem, PowerDelayProfile, TimeVariation,
    TruncatedChannel, C64,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Frame {
    pub geometry: FrameGeometry,
    pub coding: FrameCoding,
    pub channel: TruncatedChannel,
    pub y: Vec<C64>,
    pub sigma2: f64,
}

pub fn reference_frame(seed: u64, snr_db: f64) -> Frame {
    let geometry = FrameGeometry::new(64, 16, 7, 370.3e-9).expect("valid geometry");
    let f_d = max_doppler_hz(5.9e9, 500.0);
    let coding = FrameCoding::new(ConvCode::standard(), Constellation::qam(4).expect("4-QAM"), geometry.dd_len(), seed).expect("coding");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let info: Vec<u8> = (0..coding.info_len()).map(|_| rng.gen::<u8>() & 1).collect();
    let modem = OtfsModem::new(geometry).expect("modem");
    let s = modem.modulate_vec(&coding.encode(&info).expect("encode")).expect("modulate");
    let paths = sample_paths_seeded(&PowerDelayProfile::eva(), f_d, &geometry, DopplerMode::Fractional, seed).expect("paths");
    let ch = ChannelRealization::new(paths, geometry, TimeVariation::PerSample).expect("channel");
    let sigma2 = 10f64.powf(-snr_db / 10.0);
    let r = add_awgn(&ch.apply_time_domain(&s).expect("channel apply"), sigma2, &mut rng).expect("noise");
    let b = truncation_bandwidth(f_d, geometry.m, geometry.n, geometry.ts_s).expect("bandwidth");
    Frame {
        geometry,
        coding,
        channel: truncate(&ch.dd_matrix().expect("dd matrix"), b).expect("truncate"),
        y: modem.demodulate(&r).expect("demodulate"),
        sigma2,
    }
}
