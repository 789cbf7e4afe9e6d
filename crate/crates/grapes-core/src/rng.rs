//! Seeded deterministic random stream.
//!
//! Everything random in the library flows through [`RandomStream`]: weight
//! initialization, dropout masks, shuffles, permutation tasks, deformation
//! fields, and update noise. The generator is xoshiro256++ seeded through
//! splitmix64, so a given seed reproduces the exact draw sequence on every
//! platform this crate builds for (the integer pipeline is exact; normal
//! draws go through ln/cos, which are stable within one libm build).

/// Deterministic pseudo-random stream (xoshiro256++ core).
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    state: [u64; 4],
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomStream {
    /// Stream for a seed; equal seeds yield equal draw sequences.
    pub fn new(seed: u64) -> RandomStream {
        let mut sm = seed;
        let mut state = [0u64; 4];
        for s in &mut state {
            *s = splitmix64(&mut sm);
        }
        if state.iter().all(|&s| s == 0) {
            state[0] = GOLDEN;
        }
        RandomStream { seed, state }
    }

    /// The seed this stream was created from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream; `stream_id` selects which child.
    ///
    /// Children with distinct ids are decorrelated from each other and from
    /// the parent, and depend only on the parent's seed (not its position).
    pub fn derive(&self, stream_id: u64) -> RandomStream {
        let mut sm = self.seed ^ stream_id.wrapping_mul(GOLDEN).rotate_left(31);
        RandomStream::new(splitmix64(&mut sm))
    }

    /// Next raw 64-bit value.
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard-normal draw via Box-Muller (two uniforms per draw).
    pub fn normal(&mut self) -> f64 {
        // u1 in (0, 1] keeps ln finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Unbiased uniform integer in [0, bound) via bitmask rejection.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        if bound == 1 {
            return 0;
        }
        let mask = u64::MAX >> (bound - 1).leading_zeros();
        loop {
            let v = self.next_u64() & mask;
            if v < bound {
                return v;
            }
        }
    }

    /// Unbiased in-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
