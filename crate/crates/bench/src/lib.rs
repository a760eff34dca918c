//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mrrl_core::sac::{ReplayMemory, Transition, ACTION_DIM, STATE_DIM};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_transition<R: Rng + ?Sized>(rng: &mut R) -> Transition {
    Transition {
        s: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
        u_l: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
        r: -rng.random::<f64>(),
        s_next: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
        done: false,
    }
}

/// A replay memory holding `n` random transitions.
pub fn filled_memory(n: usize, seed: u64) -> ReplayMemory {
    let mut r = rng(seed);
    let mut memory = ReplayMemory::new(n);
    for _ in 0..n {
        memory.push(random_transition(&mut r));
    }
    memory
}

pub fn random_inputs(batch: usize, dim: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..batch * dim).map(|_| r.random_range(-1.0..1.0)).collect()
}

pub const OBS_DIM: usize = STATE_DIM;
pub const ACT_DIM: usize = ACTION_DIM;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_the_requested_shape() {
        assert_eq!(filled_memory(50, 0).len(), 50);
        assert_eq!(random_inputs(4, OBS_DIM, 0).len(), 4 * OBS_DIM);
        assert!(random_transition(&mut rng(1)).r <= 0.0);
    }
}
