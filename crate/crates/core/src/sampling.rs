//! Reproducible random streams and exact samplers.
//!
//! Every replication owns a [`Generator`] derived from a [`SeedSpec`]
//! triple. The derivation is stateless: the key of a ChaCha8 stream is a
//! SplitMix64 hash of `(root_seed, stream_id)` and the replication index
//! selects the ChaCha stream, so results do not depend on how replications
//! are scheduled across threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::BesselParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub root_seed: u64,
    pub stream_id: u64,
    pub replication_index: u64,
}

impl SeedSpec {
    pub fn new(root_seed: u64, stream_id: u64, replication_index: u64) -> Self {
        Self {
            root_seed,
            stream_id,
            replication_index,
        }
    }

    pub fn with_replication(self, replication_index: u64) -> Self {
        Self {
            replication_index,
            ..self
        }
    }

    pub fn with_stream(self, stream_id: u64) -> Self {
        Self { stream_id, ..self }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-replication random source. Not shared between replications.
#[derive(Debug, Clone)]
pub struct Generator {
    rng: ChaCha8Rng,
}

pub fn derive(seed: SeedSpec) -> Generator {
    let mut state = seed.root_seed;
    let mixed_root = splitmix64(&mut state);
    let mut state = mixed_root ^ seed.stream_id.rotate_left(17);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(seed.replication_index);
    Generator { rng }
}

impl Generator {
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn std_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Unit-scale gamma variate; valid for every `shape > 0`, including the
    /// small shapes `δ/2 < 1` produced by dimensions below two.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        assert!(shape > 0.0 && shape.is_finite(), "gamma shape must be > 0, got {shape}");
        Gamma::new(shape, 1.0)
            .expect("validated shape")
            .sample(&mut self.rng)
    }

    pub fn poisson(&mut self, mean: f64) -> u64 {
        assert!(mean >= 0.0 && mean.is_finite(), "poisson mean must be finite and ≥ 0, got {mean}");
        if mean == 0.0 {
            return 0;
        }
        let k: f64 = Poisson::new(mean).expect("validated mean").sample(&mut self.rng);
        k as u64
    }

    pub fn chi_square(&mut self, df: f64) -> f64 {
        2.0 * self.gamma(0.5 * df)
    }

    /// Noncentral χ² as a Poisson mixture of central χ² variates, which is
    /// valid for every `df > 0`.
    pub fn noncentral_chisq(&mut self, df: f64, noncentrality: f64) -> f64 {
        let k = self.poisson(0.5 * noncentrality);
        self.chi_square(df + 2.0 * k as f64)
    }

    /// Exact draw of `Z_{t+dt}` given `Z_t = z` for
    /// `dZ = (δ − bZ) dt + 2 √Z dW`.
    pub fn exact_bessel_transition(&mut self, z: f64, p: &BesselParams, dt: f64) -> f64 {
        debug_assert!(z >= 0.0 && dt > 0.0);
        if p.b() == 0.0 {
            dt * self.noncentral_chisq(p.delta(), z / dt)
        } else {
            let scale = -(-p.b() * dt).exp_m1() / p.b();
            let lambda = z * (-p.b() * dt).exp() / scale;
            scale * self.noncentral_chisq(p.delta(), lambda)
        }
    }
}
