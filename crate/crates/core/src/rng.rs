//! Seed plumbing. Every random stream is derived from one run seed and a
//! stream name, so no component ever touches ambient entropy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

/// Derives a named sub-seed (`world`, `init`, `batches`, ...) from a run seed.
pub fn sub_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 has 32 bytes"))
}

pub fn rng_for(seed: u64, name: &str) -> SimRng {
    SimRng::seed_from_u64(sub_seed(seed, name))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateless hash of integer keys to a uniform in [0, 1).
pub fn hash_unit(keys: &[u64]) -> f64 {
    let mut h = 0x243F_6A88_85A3_08D3u64;
    for &k in keys {
        h = splitmix(h ^ k);
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Stateless standard normal from integer keys (Box-Muller on two hashed uniforms).
pub fn hash_normal(keys: &[u64]) -> f64 {
    let mut k1 = keys.to_vec();
    k1.push(1);
    let mut k2 = keys.to_vec();
    k2.push(2);
    let u1 = hash_unit(&k1).max(1e-300);
    let u2 = hash_unit(&k2);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn normal_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Uniform draw from the closed unit ball in R^n.
pub fn unit_ball<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v = normal_vec(rng, n);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let radius = rng.random::<f64>().powf(1.0 / n as f64);
    for x in &mut v {
        *x *= radius / norm;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sub_seeds_differ_by_name() {
        assert_ne!(sub_seed(7, "world"), sub_seed(7, "init"));
        assert_eq!(sub_seed(7, "world"), sub_seed(7, "world"));
    }

    #[test]
    fn unit_ball_inside() {
        let mut rng = rng_for(1, "t");
        for _ in 0..200 {
            let v = unit_ball(&mut rng, 5);
            assert!(v.iter().map(|x| x * x).sum::<f64>() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn hash_unit_range_and_determinism() {
        for i in 0..1000u64 {
            let u = hash_unit(&[3, i]);
            assert!((0.0..1.0).contains(&u));
            assert_eq!(u, hash_unit(&[3, i]));
        }
    }
}
