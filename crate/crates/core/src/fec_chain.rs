//! Terminated feedforward convolutional code, max-log BCJR decoding and
//! seeded permutation interleavers.
//!
//! LLRs throughout are `ln P(bit = 0) / P(bit = 1)`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, OtfsError, Result};

/// Decoder input and output LLRs are clipped to this magnitude.
pub const LLR_CLIP: f64 = 50.0;

/// Rate `1/n` feedforward code. Generators are octal integers whose most
/// significant of `K` bits taps the current input (`0o5 = 1 + D^2`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvCode {
    generators: Vec<u32>,
    constraint_length: usize,
    trellis: Trellis,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Trellis {
    /// `next[s][u]`
    next: Vec<[usize; 2]>,
    /// `out[s][u]`: output bits for the branch, one per generator.
    out: Vec<[Vec<u8>; 2]>,
}

impl ConvCode {
    pub fn new(generators_octal: &[u32], constraint_length: usize) -> Result<Self> {
        if !(2..=16).contains(&constraint_length) {
            return Err(OtfsError::Config(format!("constraint length {constraint_length} out of range")));
        }
        if generators_octal.is_empty() {
            return Err(OtfsError::Config("convolutional code needs at least one generator".into()));
        }
        for &g in generators_octal {
            if g == 0 || g >> constraint_length != 0 {
                return Err(OtfsError::Config(format!("generator {g:o} does not fit constraint length {constraint_length}")));
            }
        }
        let memory = constraint_length - 1;
        let states = 1usize << memory;
        let mut next = Vec::with_capacity(states);
        let mut out = Vec::with_capacity(states);
        for s in 0..states {
            let branch = |u: usize| {
                let reg = (u << memory) | s;
                let bits = generators_octal.iter().map(|&g| ((reg as u32 & g).count_ones() & 1) as u8).collect();
                (reg >> 1, bits)
            };
            let (n0, o0) = branch(0);
            let (n1, o1) = branch(1);
            next.push([n0, n1]);
            out.push([o0, o1]);
        }
        Ok(Self {
            generators: generators_octal.to_vec(),
            constraint_length,
            trellis: Trellis { next, out },
        })
    }

    /// Rate 1/2, `K = 3`, generators `(5, 7)`.
    pub fn standard() -> Self {
        Self::new(&[0o5, 0o7], 3).expect("valid built-in code")
    }

    pub fn generators(&self) -> &[u32] {
        &self.generators
    }

    pub fn constraint_length(&self) -> usize {
        self.constraint_length
    }

    pub fn memory(&self) -> usize {
        self.constraint_length - 1
    }

    pub fn outputs_per_bit(&self) -> usize {
        self.generators.len()
    }

    pub fn coded_len(&self, info_len: usize) -> usize {
        (info_len + self.memory()) * self.outputs_per_bit()
    }

    /// Largest information length whose terminated codeword fits in
    /// `coded_len` bits exactly.
    pub fn info_len_for(&self, coded_len: usize) -> Result<usize> {
        let n = self.outputs_per_bit();
        if !coded_len.is_multiple_of(n) || coded_len / n <= self.memory() {
            return Err(OtfsError::Config(format!("{coded_len} coded bits cannot hold a terminated rate-1/{n} codeword")));
        }
        Ok(coded_len / n - self.memory())
    }

    /// Encodes and appends `K - 1` zero tail bits.
    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if let Some(&b) = info.iter().find(|&&b| b > 1) {
            return Err(OtfsError::Config(format!("information bit {b} is not 0 or 1")));
        }
        let mut state = 0usize;
        let mut out = Vec::with_capacity(self.coded_len(info.len()));
        for &u in info.iter().chain(std::iter::repeat_n(&0, self.memory())) {
            out.extend_from_slice(&self.trellis.out[state][u as usize]);
            state = self.trellis.next[state][u as usize];
        }
        debug_assert_eq!(state, 0);
        Ok(out)
    }
}

/// Max-log BCJR output.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    /// A posteriori LLRs of the coded bits (including tail).
    pub coded_posterior: Vec<f64>,
    /// Coded-bit posterior minus its own (clipped) channel LLR, computed
    /// before output clipping.
    pub coded_extrinsic: Vec<f64>,
    /// A posteriori LLRs of the information bits.
    pub info_posterior: Vec<f64>,
    pub info_bits: Vec<u8>,
}

/// Max-log MAP decoding of a terminated codeword from channel LLRs.
pub fn maxlog_bcjr(code: &ConvCode, llr: &[f64]) -> Result<Decoded> {
    let info_len = code.info_len_for(llr.len())?;
    let n_out = code.outputs_per_bit();
    let steps = info_len + code.memory();
    let states = code.trellis.next.len();
    let neg = f64::NEG_INFINITY;
    let llr: Vec<f64> = llr
        .iter()
        .map(|&l| {
            if l.is_nan() {
                Err(OtfsError::numerical("decoder input LLR"))
            } else {
                Ok(l.clamp(-LLR_CLIP, LLR_CLIP))
            }
        })
        .collect::<Result<_>>()?;

    let gamma = |t: usize, s: usize, u: usize| -> f64 {
        code.trellis.out[s][u]
            .iter()
            .zip(&llr[t * n_out..(t + 1) * n_out])
            .map(|(&c, &l)| if c == 0 { l / 2.0 } else { -l / 2.0 })
            .sum()
    };
    let inputs = |t: usize| if t < info_len { 0..2 } else { 0..1 };

    let mut alpha = vec![vec![neg; states]; steps + 1];
    alpha[0][0] = 0.0;
    for t in 0..steps {
        for s in 0..states {
            let a = alpha[t][s];
            if a == neg {
                continue;
            }
            for u in inputs(t) {
                let ns = code.trellis.next[s][u];
                let v = a + gamma(t, s, u);
                if v > alpha[t + 1][ns] {
                    alpha[t + 1][ns] = v;
                }
            }
        }
        let max = alpha[t + 1].iter().cloned().fold(neg, f64::max);
        alpha[t + 1].iter_mut().for_each(|a| *a -= max);
    }

    let mut beta = vec![vec![neg; states]; steps + 1];
    beta[steps][0] = 0.0;
    for t in (0..steps).rev() {
        for s in 0..states {
            let mut best = neg;
            for u in inputs(t) {
                let b = beta[t + 1][code.trellis.next[s][u]];
                if b != neg {
                    best = best.max(b + gamma(t, s, u));
                }
            }
            beta[t][s] = best;
        }
        let max = beta[t].iter().cloned().fold(neg, f64::max);
        beta[t].iter_mut().for_each(|b| *b -= max);
    }

    let mut coded_posterior = vec![0.0; llr.len()];
    let mut coded_extrinsic = vec![0.0; llr.len()];
    let mut info_posterior = vec![0.0; info_len];
    for t in 0..steps {
        let mut best_bit = vec![[neg; 2]; n_out];
        let mut best_u = [neg; 2];
        for (s, &a) in alpha[t].iter().enumerate() {
            if a == neg {
                continue;
            }
            for u in inputs(t) {
                let ns = code.trellis.next[s][u];
                if beta[t + 1][ns] == neg {
                    continue;
                }
                let metric = a + gamma(t, s, u) + beta[t + 1][ns];
                best_u[u] = best_u[u].max(metric);
                for (j, &c) in code.trellis.out[s][u].iter().enumerate() {
                    best_bit[j][c as usize] = best_bit[j][c as usize].max(metric);
                }
            }
        }
        for (j, [b0, b1]) in best_bit.into_iter().enumerate() {
            let i = t * n_out + j;
            coded_posterior[i] = clipped_difference(b0, b1);
            coded_extrinsic[i] = if b0 == neg || b1 == neg {
                coded_posterior[i]
            } else {
                (b0 - b1 - llr[i]).clamp(-LLR_CLIP, LLR_CLIP)
            };
        }
        if t < info_len {
            info_posterior[t] = clipped_difference(best_u[0], best_u[1]);
        }
    }
    let info_bits = info_posterior.iter().map(|&l| u8::from(l < 0.0)).collect();
    Ok(Decoded {
        coded_posterior,
        coded_extrinsic,
        info_posterior,
        info_bits,
    })
}

fn clipped_difference(a: f64, b: f64) -> f64 {
    match (a == f64::NEG_INFINITY, b == f64::NEG_INFINITY) {
        (true, true) => 0.0,
        (false, true) => LLR_CLIP,
        (true, false) => -LLR_CLIP,
        (false, false) => (a - b).clamp(-LLR_CLIP, LLR_CLIP),
    }
}

/// Permutation `out[i] = in[perm[i]]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<usize>,
    inverse: Vec<usize>,
}

impl Interleaver {
    pub fn identity(len: usize) -> Self {
        let perm: Vec<usize> = (0..len).collect();
        Self { inverse: perm.clone(), perm }
    }

    /// Uniformly random permutation from a ChaCha stream.
    pub fn random(len: usize, seed: u64) -> Self {
        let mut perm: Vec<usize> = (0..len).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Self::from_permutation(perm).expect("shuffle yields a permutation")
    }

    pub fn from_permutation(perm: Vec<usize>) -> Result<Self> {
        let mut inverse = vec![usize::MAX; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            if p >= perm.len() || inverse[p] != usize::MAX {
                return Err(OtfsError::Config("interleaver table is not a permutation".into()));
            }
            inverse[p] = i;
        }
        Ok(Self { perm, inverse })
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn interleave<T: Copy>(&self, v: &[T]) -> Result<Vec<T>> {
        check_len(self.perm.len(), v.len())?;
        Ok(self.perm.iter().map(|&p| v[p]).collect())
    }

    pub fn deinterleave<T: Copy>(&self, v: &[T]) -> Result<Vec<T>> {
        check_len(self.perm.len(), v.len())?;
        Ok(self.inverse.iter().map(|&i| v[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use proptest::prelude::*;

    #[test]
    fn impulse_response() {
        let code = ConvCode::standard();
        assert_eq!(code.encode(&[1]).unwrap(), vec![1, 1, 0, 1, 1, 1]);
        assert_eq!(code.encode(&[1, 0]).unwrap(), vec![1, 1, 0, 1, 1, 1, 0, 0]);
    }

    #[test]
    fn frame_lengths() {
        let code = ConvCode::standard();
        assert_eq!(code.info_len_for(2048).unwrap(), 1022);
        assert_eq!(code.coded_len(1022), 2048);
        assert!(code.info_len_for(3).is_err());
        assert!(code.info_len_for(4).is_err());
    }

    #[test]
    fn invalid_codes_rejected() {
        assert!(ConvCode::new(&[0o17], 3).is_err());
        assert!(ConvCode::new(&[], 3).is_err());
        assert!(ConvCode::new(&[0o5], 1).is_err());
        assert!(ConvCode::standard().encode(&[2]).is_err());
    }

    #[test]
    fn noiseless_decoding_and_clipping() {
        let code = ConvCode::standard();
        let info = [1u8, 0, 1, 1, 0, 0, 1];
        let c = code.encode(&info).unwrap();
        let llr: Vec<f64> = c.iter().map(|&b| if b == 0 { 1e3 } else { -1e3 }).collect();
        let d = maxlog_bcjr(&code, &llr).unwrap();
        assert_eq!(d.info_bits, info);
        assert!(d.coded_posterior.iter().all(|l| l.abs() <= LLR_CLIP));
        assert!(d.coded_posterior.iter().zip(&c).all(|(&l, &b)| (l < 0.0) == (b == 1)));
    }

    #[test]
    fn corrects_single_error() {
        let code = ConvCode::standard();
        let info = [0u8, 1, 1, 0, 1, 0, 0, 1, 1, 1];
        let c = code.encode(&info).unwrap();
        let mut llr: Vec<f64> = c.iter().map(|&b| if b == 0 { 2.0 } else { -2.0 }).collect();
        llr[5] = -llr[5];
        assert_eq!(maxlog_bcjr(&code, &llr).unwrap().info_bits, info);
    }

    #[test]
    fn nan_input_rejected() {
        let mut llr = vec![1.0; 8];
        llr[3] = f64::NAN;
        assert!(maxlog_bcjr(&ConvCode::standard(), &llr).is_err());
    }

    #[test]
    fn other_code_matches_convolution() {
        let code = ConvCode::new(&[0o15, 0o17, 0o13], 4).unwrap();
        let info = [1u8, 1, 0, 1, 0, 0, 0, 1];
        assert_eq!(code.encode(&info).unwrap(), oracle::convolve_encode(&info, &[0o15, 0o17, 0o13], 4));
    }

    #[test]
    fn interleaver_rejects_non_permutation() {
        assert!(Interleaver::from_permutation(vec![0, 0, 1]).is_err());
        assert!(Interleaver::from_permutation(vec![0, 3, 1]).is_err());
        assert!(Interleaver::random(5, 1).interleave(&[1, 2]).is_err());
    }

    #[test]
    fn interleaver_seeded() {
        assert_eq!(Interleaver::random(100, 4), Interleaver::random(100, 4));
        assert_ne!(Interleaver::random(100, 4), Interleaver::random(100, 5));
    }

    proptest! {
        #[test]
        fn encoder_matches_convolution(info in prop::collection::vec(0u8..2, 1..64)) {
            let code = ConvCode::standard();
            prop_assert_eq!(code.encode(&info).unwrap(), oracle::convolve_encode(&info, &[0o5, 0o7], 3));
        }

        #[test]
        fn bcjr_matches_exhaustive_map(llr in prop::collection::vec(-8.0f64..8.0, 2 * (8 + 2))) {
            let code = ConvCode::standard();
            let d = maxlog_bcjr(&code, &llr).unwrap();
            let (coded, info) = oracle::exhaustive_maxlog_map(&llr, 8, &[0o5, 0o7], 3);
            for (a, b) in d.coded_posterior.iter().zip(&coded) {
                prop_assert!((a - b.clamp(-LLR_CLIP, LLR_CLIP)).abs() < 1e-9, "{} vs {}", a, b);
            }
            for (a, b) in d.info_posterior.iter().zip(&info) {
                prop_assert!((a - b.clamp(-LLR_CLIP, LLR_CLIP)).abs() < 1e-9);
            }
        }

        #[test]
        fn extrinsic_excludes_own_llr(llr in prop::collection::vec(-8.0f64..8.0, 2 * (8 + 2)), i in 0usize..20, shift in -30.0f64..30.0) {
            let code = ConvCode::standard();
            let d = maxlog_bcjr(&code, &llr).unwrap();
            let mut moved = llr.clone();
            moved[i] += shift;
            let e = maxlog_bcjr(&code, &moved).unwrap();
            prop_assert!((d.coded_extrinsic[i] - e.coded_extrinsic[i]).abs() < 1e-9);
            for ((x, p), l) in d.coded_extrinsic.iter().zip(&d.coded_posterior).zip(&llr) {
                prop_assert!((x - (p - l)).abs() < 1e-9);
            }
        }

        #[test]
        fn extrinsic_survives_saturated_input(info in prop::collection::vec(0u8..2, 8)) {
            // Channel LLRs far beyond the clip must not flip the feedback sign.
            let code = ConvCode::standard();
            let c = code.encode(&info).unwrap();
            let llr: Vec<f64> = c.iter().map(|&b| if b == 0 { 5e3 } else { -5e3 }).collect();
            let d = maxlog_bcjr(&code, &llr).unwrap();
            for (x, &b) in d.coded_extrinsic.iter().zip(&c) {
                prop_assert_eq!(*x < 0.0, b == 1);
            }
        }

        #[test]
        fn interleaver_round_trip(len in 1usize..300, seed in any::<u64>()) {
            let il = Interleaver::random(len, seed);
            let v: Vec<usize> = (0..len).map(|i| i * 7 + 1).collect();
            let w = il.interleave(&v).unwrap();
            let mut sorted = w.clone();
            sorted.sort();
            let mut orig = v.clone();
            orig.sort();
            prop_assert_eq!(sorted, orig);
            prop_assert_eq!(il.deinterleave(&w).unwrap(), v);
        }
    }
}
