//! Counter-based random streams: draw `i` of a run always reads the
//! ChaCha8 stream `i` under the run seed, so results do not depend on how
//! draws are spread over worker threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc_inv;

pub fn draw_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform on the open interval (0, 1): midpoints of a 2^-52 grid, all
/// exactly representable.
pub fn uniform_open(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 12) as f64 + 0.5) / (1u64 << 52) as f64
}

/// Standard normal by inversion of the CDF.
pub fn std_normal(rng: &mut impl RngCore) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * uniform_open(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| draw_stream(7, 3).next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        assert_ne!(draw_stream(7, 3).next_u64(), draw_stream(7, 4).next_u64());
        assert_ne!(draw_stream(7, 3).next_u64(), draw_stream(8, 3).next_u64());
    }

    #[test]
    fn normal_moments() {
        let mut rng = draw_stream(1, 0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| std_normal(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var - 1.0).abs() < 0.01, "{var}");
        assert!(xs.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn uniform_never_hits_the_endpoints() {
        struct Fixed(u64);
        impl RngCore for Fixed {
            fn next_u32(&mut self) -> u32 {
                self.0 as u32
            }
            fn next_u64(&mut self) -> u64 {
                self.0
            }
            fn fill_bytes(&mut self, _: &mut [u8]) {}
            fn try_fill_bytes(&mut self, _: &mut [u8]) -> Result<(), rand::Error> {
                Ok(())
            }
        }
        assert!(uniform_open(&mut Fixed(0)) > 0.0);
        assert!(uniform_open(&mut Fixed(u64::MAX)) < 1.0);
        assert!(std_normal(&mut Fixed(0)).is_finite());
        assert!(std_normal(&mut Fixed(u64::MAX)).is_finite());
    }
}
