//! Counter-based splittable random streams.
//!
//! Every random decision in the simulator is drawn from a stream keyed by a
//! hierarchy of integers (experiment seed, round, client id, purpose tag).
//! Streams derived from the same key parts always produce the same sequence,
//! so results never depend on scheduling or call order. The core is
//! SplitMix64: the state is a plain counter and each output is a finalizer
//! of it, which keeps the generator trivially splittable.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Purpose tags that keep unrelated streams apart even when the numeric
/// key parts coincide.
pub mod tag {
    pub const DATA: u64 = 0x4441_5441; // synthetic dataset generation
    pub const SPLIT: u64 = 0x5350_4C49; // train/test split
    pub const PARTITION: u64 = 0x5041_5254; // client data partitioning
    pub const INIT: u64 = 0x494E_4954; // model parameter init
    pub const SAMPLING: u64 = 0x5345_4C43; // per-round client selection
    pub const CLIENT: u64 = 0x434C_4E54; // per-(round, client) batch stream
    pub const SHARPNESS: u64 = 0x5348_5250; // sharpness probe directions
    pub const QUADRATIC: u64 = 0x5155_4144; // per-client quadratic objectives
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic non-cryptographic stream generator (SplitMix64 core).
#[derive(Clone, Debug)]
pub struct StreamRng {
    state: u64,
}

impl StreamRng {
    /// Derive a stream from hierarchical key parts, e.g.
    /// `[seed, tag::CLIENT, round, client_id]`.
    pub fn from_parts(parts: &[u64]) -> Self {
        let mut state = GOLDEN;
        for &p in parts {
            state = mix(state.wrapping_add(GOLDEN) ^ mix(p));
        }
        StreamRng { state }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        const DEN: f64 = (1u64 << 53) as f64;
        ((self.next_u64() >> 11) as f64) / DEN
    }

    /// Uniform in `[0, n)`. Modulo bias is ~n/2^64, irrelevant at the
    /// problem sizes simulated here.
    #[inline]
    pub fn next_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Uniform in `[lo, hi)`.
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        // Shift into (0, 1] so ln() never sees zero.
        const DEN: f64 = (1u64 << 53) as f64;
        let u1 = (((self.next_u64() >> 11) + 1) as f64) / DEN;
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Gamma(shape, 1) via Marsaglia-Tsang, boosted for shape < 1.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        assert!(shape > 0.0, "gamma shape must be positive");
        if shape < 1.0 {
            let g = self.gamma(shape + 1.0);
            let u = self.next_f64().max(f64::MIN_POSITIVE);
            return g * u.powf(1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.normal();
            let v = (1.0 + c * x).powi(3);
            if v <= 0.0 {
                continue;
            }
            let u = self.next_f64().max(f64::MIN_POSITIVE);
            if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
                return d * v;
            }
        }
    }

    /// Dirichlet(concentration * 1) over `k` categories.
    pub fn dirichlet(&mut self, concentration: f64, k: usize) -> Vec<f64> {
        let mut draws: Vec<f64> = (0..k).map(|_| self.gamma(concentration)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            for d in &mut draws {
                *d /= total;
            }
        } else {
            // All gammas underflowed to zero; fall back to uniform.
            draws.iter_mut().for_each(|d| *d = 1.0 / k as f64);
        }
        draws
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }

    /// Uniform without-replacement sample of `m` items from `0..n`,
    /// returned in ascending order.
    pub fn sample_indices(&mut self, n: usize, m: usize) -> Vec<usize> {
        assert!(m <= n, "cannot sample {m} of {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for k in 0..m {
            let j = k + self.next_below(n - k);
            pool.swap(k, j);
        }
        let mut picked: Vec<usize> = pool[..m].to_vec();
        picked.sort_unstable();
        picked
    }
}
