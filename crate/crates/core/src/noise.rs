//! Seeded two-sided Brownian noise.
//!
//! Every time step `n` (an integer, possibly negative) owns its own ChaCha
//! stream, so the standard normals attached to a step depend only on
//! `(seed, n)` and never on how long the surrounding grid is. Extending or
//! restricting a grid therefore keeps every shared increment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::par::Execution;

/// Standard normals drawn per `(step, mode)`: the Brownian increment, the
/// heat convolution, and the two wave convolution components.
pub const NORMALS_PER_MODE: usize = 4;

const TAG_INCREMENTS: u64 = 0;
const TAG_STATIONARY: u64 = 1;

fn stream_rng(seed: u64, tag: u64, index: i64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&tag.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index as u64);
    rng
}

/// `count` standard normals from the stream `(seed, tag, index)`.
fn normals(seed: u64, tag: u64, index: i64, count: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, tag, index);
    (0..count).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Standard normals reserved for drawing initial states from a stationary
/// law; replica `index` gets `count` of them.
pub fn stationary_normals(seed: u64, index: i64, count: usize) -> Vec<f64> {
    normals(seed, TAG_STATIONARY, index, count)
}

/// Standard normals for steps `first .. first + steps` on a uniform grid of
/// width `dt`. Step `n` covers `[n dt, (n + 1) dt]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    seed: u64,
    dt: f64,
    modes: usize,
    first: i64,
    steps: usize,
    data: Vec<f64>,
}

impl NoisePath {
    pub fn new(seed: u64, dt: f64, modes: usize, first: i64, steps: usize) -> Result<Self> {
        Self::with_execution(seed, dt, modes, first, steps, Execution::default())
    }

    pub fn with_execution(
        seed: u64,
        dt: f64,
        modes: usize,
        first: i64,
        steps: usize,
        exec: Execution,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        if modes == 0 {
            return Err(Error::InvalidParameter("need at least one mode".into()));
        }
        let width = modes * NORMALS_PER_MODE;
        let mut data = vec![0.0; width * steps];
        exec.for_each_chunk(&mut data, width, |i, chunk| {
            let mut rng = stream_rng(seed, TAG_INCREMENTS, first + i as i64);
            for x in chunk.iter_mut() {
                *x = StandardNormal.sample(&mut rng);
            }
        });
        Ok(Self { seed, dt, modes, first, steps, data })
    }

    /// Grid covering `[t0, t1]`; both ends are rounded to the nearest grid
    /// point.
    pub fn covering(seed: u64, dt: f64, modes: usize, t0: f64, t1: f64) -> Result<Self> {
        if !(t1 > t0) {
            return Err(Error::InvalidParameter(format!("empty interval [{t0}, {t1}]")));
        }
        let first = (t0 / dt).round() as i64;
        let last = (t1 / dt).round() as i64;
        Self::new(seed, dt, modes, first, (last - first).max(1) as usize)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn first_step(&self) -> i64 {
        self.first
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn t0(&self) -> f64 {
        self.first as f64 * self.dt
    }

    pub fn t1(&self) -> f64 {
        (self.first + self.steps as i64) as f64 * self.dt
    }

    /// The `4 M` normals of step `n`, laid out mode by mode.
    pub fn normals(&self, n: i64) -> Result<&[f64]> {
        let i = n - self.first;
        if i < 0 || i >= self.steps as i64 {
            return Err(Error::OutsideGrid(n as f64 * self.dt));
        }
        let w = self.modes * NORMALS_PER_MODE;
        Ok(&self.data[i as usize * w..(i as usize + 1) * w])
    }

    /// Unit-rate Brownian increment of mode `k` (1-based) over step `n`.
    pub fn increment(&self, n: i64, k: usize) -> Result<f64> {
        Ok(self.dt.sqrt() * self.normals(n)?[(k - 1) * NORMALS_PER_MODE])
    }

    /// Sub-grid of steps `first .. first + steps`.
    pub fn restrict(&self, first: i64, steps: usize) -> Result<Self> {
        let lo = first - self.first;
        if lo < 0 || lo as usize + steps > self.steps {
            return Err(Error::OutsideGrid(first as f64 * self.dt));
        }
        let w = self.modes * NORMALS_PER_MODE;
        let lo = lo as usize;
        Ok(Self {
            seed: self.seed,
            dt: self.dt,
            modes: self.modes,
            first,
            steps,
            data: self.data[lo * w..(lo + steps) * w].to_vec(),
        })
    }
}
