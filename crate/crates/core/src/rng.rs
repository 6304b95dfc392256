//! Counter-based Gaussian noise.
//!
//! Every draw is a pure function of `(seed, run, step, channel)`: a
//! Philox4x32-10 block keyed by the seed and indexed by the other three
//! coordinates, turned into a pair of normals with Box-Muller. Channels
//! `2k` and `2k + 1` share one block (cosine and sine branch).

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Uniform in `(0, 1]` from 53 random bits.
#[inline]
fn open_unit(hi: u32, lo: u32) -> f64 {
    let bits = ((u64::from(hi) << 32) | u64::from(lo)) >> 11;
    (bits + 1) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

#[inline]
fn normal_pair(seed: u64, run: u32, step: u64, pair: u32) -> (f64, f64) {
    let key = [seed as u32, (seed >> 32) as u32];
    let block = philox4x32([pair, run, step as u32, (step >> 32) as u32], key);
    let u1 = open_unit(block[0], block[1]);
    let u2 = open_unit(block[2], block[3]);
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}

/// One standard normal draw for the coordinate `(seed, run, step, channel)`.
pub fn gaussian_stream(seed: u64, run: u32, step: u64, channel: u32) -> f64 {
    let (a, b) = normal_pair(seed, run, step, channel / 2);
    if channel.is_multiple_of(2) {
        a
    } else {
        b
    }
}

/// Fills `out[c]` with `gaussian_stream(seed, run, step, c)` for every channel.
pub fn fill_normals(seed: u64, run: u32, step: u64, out: &mut [f64]) {
    let mut chunks = out.chunks_exact_mut(2);
    let mut pair = 0u32;
    for chunk in &mut chunks {
        let (a, b) = normal_pair(seed, run, step, pair);
        chunk[0] = a;
        chunk[1] = b;
        pair += 1;
    }
    if let [last] = chunks.into_remainder() {
        *last = normal_pair(seed, run, step, pair).0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32([0; 4], [0; 2]),
            [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]
        );
        assert_eq!(
            philox4x32([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32(
                [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
                [0xa409_3822, 0x299f_31d0]
            ),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x24126ea1]
        );
    }

    #[test]
    fn deterministic() {
        assert_eq!(
            gaussian_stream(42, 3, 1000, 5).to_bits(),
            gaussian_stream(42, 3, 1000, 5).to_bits()
        );
        assert_ne!(
            gaussian_stream(42, 3, 1000, 5),
            gaussian_stream(43, 3, 1000, 5)
        );
    }

    #[test]
    fn fill_matches_single_draws() {
        let mut buf = [0.0; 7];
        fill_normals(9, 2, 77, &mut buf);
        for (c, v) in buf.iter().enumerate() {
            assert_eq!(v.to_bits(), gaussian_stream(9, 2, 77, c as u32).to_bits());
        }
    }

    #[test]
    fn first_two_moments() {
        let m = 1_000_000u64;
        let (mut s1, mut s2) = (0.0, 0.0);
        for k in 0..m / 2 {
            let mut buf = [0.0; 2];
            fill_normals(1, 0, k, &mut buf);
            for v in buf {
                s1 += v;
                s2 += v * v;
            }
        }
        let mean = s1 / m as f64;
        let var = s2 / m as f64 - mean * mean;
        assert!(mean.abs() < 4.0 / (m as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn channels_uncorrelated() {
        // W1 and W2 components of agent 0 in a 3-agent system: channels 0 and 3.
        let steps = 100_000u64;
        for (a, b) in [(0u32, 3u32), (0, 1), (2, 5)] {
            let (mut sab, mut sa, mut sb, mut saa, mut sbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for k in 0..steps {
                let x = gaussian_stream(5, 0, k, a);
                let y = gaussian_stream(5, 0, k, b);
                sab += x * y;
                sa += x;
                sb += y;
                saa += x * x;
                sbb += y * y;
            }
            let n = steps as f64;
            let cov = sab / n - sa / n * sb / n;
            let corr = cov / ((saa / n - (sa / n).powi(2)) * (sbb / n - (sb / n).powi(2))).sqrt();
            assert!(corr.abs() < 0.01, "channels {a},{b}: corr {corr}");
        }
    }

    #[test]
    fn runs_uncorrelated() {
        let steps = 100_000u64;
        let mut sab = 0.0;
        for k in 0..steps {
            sab += gaussian_stream(5, 0, k, 0) * gaussian_stream(5, 1, k, 0);
        }
        assert!((sab / steps as f64).abs() < 0.015);
    }
}
