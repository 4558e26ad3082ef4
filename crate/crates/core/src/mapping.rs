//! Gray-labelled square QAM, max-log soft demapping and soft symbol
//! reconstruction from bit LLRs.

use std::fmt::Write as _;

use crate::error::{check_len, OtfsError, Result};
use crate::grid_ops::{C64, ZERO};

/// Bound on `|L / 2|` fed to `tanh`; beyond it the probability is 0 or 1 in
/// double precision anyway.
const TANH_CLIP: f64 = 25.0;

/// Unit-energy square QAM. Point `q` carries label bits `labels[q]`: the
/// first half select the in-phase level, the second half the quadrature
/// level, each axis Gray coded.
#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    bits: usize,
    points: Vec<C64>,
    labels: Vec<Vec<u8>>,
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

impl Constellation {
    /// Supported orders: 4 and 16.
    pub fn qam(order: usize) -> Result<Self> {
        let bits = match order {
            4 => 2,
            16 => 4,
            _ => return Err(OtfsError::Config(format!("unsupported QAM order {order} (use 4 or 16)"))),
        };
        let axis_bits = bits / 2;
        let levels = 1usize << axis_bits;
        let scale = (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
        // Level for each axis label value.
        let mut level_of = vec![0.0; levels];
        for i in 0..levels {
            level_of[gray(i)] = ((levels - 1) as f64 - 2.0 * i as f64) / scale;
        }
        let mut points = Vec::with_capacity(order);
        let mut labels = Vec::with_capacity(order);
        for label in 0..order {
            let (li, lq) = (label >> axis_bits, label & (levels - 1));
            points.push(C64::new(level_of[li], level_of[lq]));
            labels.push((0..bits).rev().map(|j| ((label >> j) & 1) as u8).collect());
        }
        Ok(Self { bits, points, labels })
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits
    }

    /// Points indexed by label value (MSB = first bit).
    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn labels(&self) -> &[Vec<u8>] {
        &self.labels
    }

    pub fn map(&self, bits: &[u8]) -> Result<Vec<C64>> {
        if !bits.len().is_multiple_of(self.bits) {
            return Err(OtfsError::Config(format!("{} bits is not a multiple of {} bits per symbol", bits.len(), self.bits)));
        }
        bits.chunks_exact(self.bits)
            .map(|chunk| {
                let mut label = 0usize;
                for &b in chunk {
                    if b > 1 {
                        return Err(OtfsError::Config(format!("bit value {b} is not 0 or 1")));
                    }
                    label = (label << 1) | b as usize;
                }
                Ok(self.points[label])
            })
            .collect()
    }

    /// Extrinsic max-log LLRs for the Gaussian model `x_hat = mu x + e`,
    /// `e ~ CN(0, nu)`: per bit,
    /// `gamma (min_{b=1} |x_hat/mu - q|^2 - min_{b=0} |x_hat/mu - q|^2)` with
    /// `gamma = mu^2 / nu`. With `prior`, every candidate also collects
    /// `(1 - 2 b') L' / 2` from the other bits of its label.
    pub fn soft_demap(&self, x_hat: &[C64], mu: &[f64], nu: &[f64], prior: Option<&[f64]>) -> Result<Vec<f64>> {
        check_len(x_hat.len(), mu.len())?;
        check_len(x_hat.len(), nu.len())?;
        if let Some(p) = prior {
            check_len(x_hat.len() * self.bits, p.len())?;
        }
        let mut out = Vec::with_capacity(x_hat.len() * self.bits);
        let mut metric = vec![0.0; self.order()];
        for (i, ((&x, &m), &v)) in x_hat.iter().zip(mu).zip(nu).enumerate() {
            if v.is_nan() || v <= 0.0 {
                return Err(OtfsError::Degenerate(format!("interference variance {v} at symbol {i}")));
            }
            if !(x.re.is_finite() && x.im.is_finite() && m.is_finite()) {
                return Err(OtfsError::numerical(format!("demapper input at symbol {i}")));
            }
            if m == 0.0 {
                out.extend(std::iter::repeat_n(0.0, self.bits));
                continue;
            }
            let gamma = m * m / v;
            let z = x / m;
            for (slot, &q) in metric.iter_mut().zip(&self.points) {
                *slot = gamma * (z - q).norm_sqr();
            }
            let pri = prior.map(|p| &p[i * self.bits..(i + 1) * self.bits]);
            for k in 0..self.bits {
                let mut best = [f64::INFINITY; 2];
                for (lab, &d) in self.labels.iter().zip(&metric) {
                    let mut cost = d;
                    if let Some(p) = pri {
                        for (j, (&b, &l)) in lab.iter().zip(p).enumerate() {
                            if j != k {
                                cost -= (1.0 - 2.0 * b as f64) * l / 2.0;
                            }
                        }
                    }
                    let slot = lab[k] as usize;
                    best[slot] = best[slot].min(cost);
                }
                out.push(best[1] - best[0]);
            }
        }
        Ok(out)
    }

    /// Soft symbols `sum_q q prod_j P(b_j(q))` with
    /// `P(b) = (1 + (1 - 2b) tanh(L / 2)) / 2`.
    pub fn soft_map(&self, llr: &[f64]) -> Result<Vec<C64>> {
        if !llr.len().is_multiple_of(self.bits) {
            return Err(OtfsError::Config(format!("{} LLRs is not a multiple of {}", llr.len(), self.bits)));
        }
        let mut p0 = vec![0.0; self.bits];
        llr.chunks_exact(self.bits)
            .map(|chunk| {
                for (p, &l) in p0.iter_mut().zip(chunk) {
                    if l.is_nan() {
                        return Err(OtfsError::numerical("soft mapper input LLR"));
                    }
                    *p = 0.5 * (1.0 + (l / 2.0).clamp(-TANH_CLIP, TANH_CLIP).tanh());
                }
                let mut s = ZERO;
                for (q, lab) in self.points.iter().zip(&self.labels) {
                    let prob: f64 = lab.iter().zip(&p0).map(|(&b, &p)| if b == 0 { p } else { 1.0 - p }).product();
                    s += q * prob;
                }
                Ok(s)
            })
            .collect()
    }

    /// Human-readable table: `label  re  im`, one point per line.
    pub fn table(&self) -> String {
        let mut s = String::new();
        for (q, lab) in self.points.iter().zip(&self.labels) {
            let bits: String = lab.iter().map(|b| char::from(b'0' + b)).collect();
            let _ = writeln!(s, "{bits}  {:+.6}  {:+.6}", q.re, q.im);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use proptest::prelude::*;

    #[test]
    fn qpsk_first_point() {
        let c = Constellation::qam(4).unwrap();
        let r = 1.0 / 2f64.sqrt();
        assert!((c.map(&[0, 0]).unwrap()[0] - C64::new(r, r)).norm() < 1e-15);
        assert!((c.map(&[1, 1]).unwrap()[0] - C64::new(-r, -r)).norm() < 1e-15);
        assert!((c.map(&[0, 1]).unwrap()[0] - C64::new(r, -r)).norm() < 1e-15);
    }

    #[test]
    fn unit_energy_and_gray_neighbours() {
        for order in [4, 16] {
            let c = Constellation::qam(order).unwrap();
            let e: f64 = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / order as f64;
            assert!((e - 1.0).abs() < 1e-12);
            let dmin = c
                .points()
                .iter()
                .enumerate()
                .flat_map(|(i, a)| c.points()[i + 1..].iter().map(move |b| (a - b).norm()))
                .fold(f64::INFINITY, f64::min);
            for (i, a) in c.points().iter().enumerate() {
                for (j, b) in c.points().iter().enumerate() {
                    if i != j && (a - b).norm() < dmin * 1.001 {
                        let diff = c.labels()[i].iter().zip(&c.labels()[j]).filter(|(x, y)| x != y).count();
                        assert_eq!(diff, 1);
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(Constellation::qam(8).is_err());
        let c = Constellation::qam(4).unwrap();
        assert!(c.map(&[0, 1, 1]).is_err());
        assert!(c.map(&[0, 2]).is_err());
        assert!(matches!(c.soft_demap(&[ZERO], &[1.0], &[0.0], None), Err(OtfsError::Degenerate(_))));
        assert!(c.soft_demap(&[ZERO], &[1.0, 1.0], &[1.0], None).is_err());
    }

    #[test]
    fn zero_gain_gives_no_information() {
        let c = Constellation::qam(16).unwrap();
        assert_eq!(c.soft_demap(&[C64::new(0.3, 0.1)], &[0.0], &[1.0], None).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn zero_llr_soft_symbol_is_zero() {
        for order in [4, 16] {
            let c = Constellation::qam(order).unwrap();
            let s = c.soft_map(&vec![0.0; c.bits_per_symbol()]).unwrap();
            assert!(s[0].norm() < 1e-15);
        }
    }

    #[test]
    fn table_lists_every_point() {
        let t = Constellation::qam(16).unwrap().table();
        assert_eq!(t.lines().count(), 16);
        assert!(t.starts_with("0000"));
    }

    fn order_strategy() -> impl Strategy<Value = usize> {
        prop_oneof![Just(4usize), Just(16usize)]
    }

    proptest! {
        #[test]
        fn demap_matches_brute_force(
            order in order_strategy(),
            re in -2.0f64..2.0, im in -2.0f64..2.0,
            mu in 0.05f64..1.5, nu in 0.01f64..2.0,
            prior in prop::collection::vec(-6.0f64..6.0, 4),
            with_prior in any::<bool>(),
        ) {
            let c = Constellation::qam(order).unwrap();
            let x = C64::new(re, im);
            let pri: Vec<f64> = if with_prior { prior[..c.bits_per_symbol()].to_vec() } else { vec![0.0; c.bits_per_symbol()] };
            let got = c.soft_demap(&[x], &[mu], &[nu], if with_prior { Some(&pri) } else { None }).unwrap();
            let want = oracle::brute_force_demap(x, mu, nu, c.points(), c.labels(), &pri);
            for (a, b) in got.iter().zip(&want) {
                prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{} vs {}", a, b);
            }
        }

        #[test]
        fn demap_sign_follows_nearest_point(order in order_strategy(), q in 0usize..16, gamma in 0.5f64..20.0) {
            let c = Constellation::qam(order).unwrap();
            let q = q % order;
            let l = c.soft_demap(&[c.points()[q]], &[1.0], &[1.0 / gamma], None).unwrap();
            for (&llr, &b) in l.iter().zip(&c.labels()[q]) {
                let expected_sign = if b == 0 { llr > 0.0 } else { llr < 0.0 };
                prop_assert!(expected_sign);
            }
        }

        #[test]
        fn maxlog_close_to_exact_at_high_sinr(order in order_strategy(), q in 0usize..16, re in -0.05f64..0.05, im in -0.05f64..0.05) {
            let c = Constellation::qam(order).unwrap();
            let x = c.points()[q % order] + C64::new(re, im);
            let nu = 1e-4;
            let approx = c.soft_demap(&[x], &[1.0], &[nu], None).unwrap();
            let exact = oracle::exact_demap(x, 1.0, nu, c.points(), c.labels());
            for (a, b) in approx.iter().zip(&exact) {
                prop_assert!((a - b).abs() <= 1e-3 * b.abs() + 1e-6, "{} vs {}", a, b);
            }
        }

        #[test]
        fn soft_map_matches_direct_sum(order in order_strategy(), llr in prop::collection::vec(-30.0f64..30.0, 4)) {
            let c = Constellation::qam(order).unwrap();
            let llr = &llr[..c.bits_per_symbol()];
            let got = c.soft_map(llr).unwrap()[0];
            let want = oracle::soft_symbol_direct(c.points(), c.labels(), llr);
            prop_assert!((got - want).norm() < 1e-9);
            prop_assert!(got.norm() <= c.points().iter().map(|p| p.norm()).fold(0.0, f64::max) + 1e-12);
        }

        #[test]
        fn confident_llrs_reproduce_point(order in order_strategy(), q in 0usize..16) {
            let c = Constellation::qam(order).unwrap();
            let q = q % order;
            let llr: Vec<f64> = c.labels()[q].iter().map(|&b| if b == 0 { 60.0 } else { -60.0 }).collect();
            prop_assert!((c.soft_map(&llr).unwrap()[0] - c.points()[q]).norm() < 1e-9);
        }
    }
}
