use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::measures::Bounds;
use crate::noise::{grid_quantile, rejection_sample, MarkovKernel};
use crate::noise::catalog::Ar1TruncGauss;
use crate::rng::{stream, Purpose, StreamRng};

use super::buffer::{truncation_bound, PastBuffer, DEFAULT_IOTA, DEFAULT_MEMORY};

pub const DEFAULT_BURN_IN: usize = 10_000;
/// Steps between harvested noise states in a pool run.
pub const DEFAULT_SPACING: usize = 20;

/// Law of the next noise given the past, `Q(ξ; dz) = ρ(ξ, z) ℓ(dz)`.
pub trait ConditionalKernel: Send + Sync {
    fn name(&self) -> &str;
    fn support(&self) -> &Bounds;
    /// Number of recent entries the density depends on.
    fn memory(&self) -> usize;
    /// `ρ(ξ, z)`; `past` has at least [`ConditionalKernel::memory`] entries.
    fn density(&self, past: &PastBuffer, z: &[f64]) -> f64;
    /// Lipschitz constant in `d(ξ, ξ′) + |z − z′|`.
    fn lipschitz_bound(&self) -> f64;

    /// Inverse-CDF transform of `dim` uniforms.
    fn quantile(&self, past: &PastBuffer, u: &[f64]) -> Result<Vec<f64>> {
        grid_quantile(&Frozen { kernel: self, past }, &[], u)
    }

    fn sample_direct(&self, past: &PastBuffer, rng: &mut StreamRng) -> Result<Vec<f64>> {
        rejection_sample(&Frozen { kernel: self, past }, &[], rng)
    }
}

/// A conditional kernel with its past fixed, seen as a Markov kernel that
/// ignores its argument.
struct Frozen<'a, K: ?Sized> {
    kernel: &'a K,
    past: &'a PastBuffer,
}

impl<K: ConditionalKernel + ?Sized> MarkovKernel for Frozen<'_, K> {
    fn name(&self) -> &str {
        self.kernel.name()
    }
    fn support(&self) -> &Bounds {
        self.kernel.support()
    }
    fn density(&self, _y: &[f64], z: &[f64]) -> f64 {
        self.kernel.density(self.past, z)
    }
    fn lipschitz_bound(&self) -> f64 {
        self.kernel.lipschitz_bound()
    }
}

/// A Markov kernel read as a conditional kernel on the latest entry.
#[derive(Clone)]
pub struct MemoryOne {
    kernel: Arc<dyn MarkovKernel>,
}

impl MemoryOne {
    pub fn new(kernel: Arc<dyn MarkovKernel>) -> Self {
        Self { kernel }
    }
}

impl ConditionalKernel for MemoryOne {
    fn name(&self) -> &str {
        self.kernel.name()
    }
    fn support(&self) -> &Bounds {
        self.kernel.support()
    }
    fn memory(&self) -> usize {
        1
    }
    fn density(&self, past: &PastBuffer, z: &[f64]) -> f64 {
        self.kernel.density(past.latest(), z)
    }
    fn lipschitz_bound(&self) -> f64 {
        self.kernel.lipschitz_bound()
    }
    fn quantile(&self, past: &PastBuffer, u: &[f64]) -> Result<Vec<f64>> {
        self.kernel.quantile(past.latest(), u)
    }
    fn sample_direct(&self, past: &PastBuffer, rng: &mut StreamRng) -> Result<Vec<f64>> {
        self.kernel.sample_direct(past.latest(), rng)
    }
}

/// `ρ(ξ, z) ∝ exp(−(z − a₁ξ₀ − a₂ξ₋₁)²/2s²)` on `[−h, h]`, with
/// `|a₁| + |a₂| ≤ 1`.
#[derive(Debug, Clone)]
pub struct Ar2TruncGauss {
    a1: f64,
    a2: f64,
    base: Ar1TruncGauss,
    lipschitz: f64,
}

impl Ar2TruncGauss {
    pub fn new(a1: f64, a2: f64, s: f64, half_width: f64, iota: f64) -> Result<Self> {
        if !(a1.abs() + a2.abs() <= 1.0) {
            return Err(Error::invalid("need |a1| + |a2| <= 1"));
        }
        // unit-slope AR(1): its density at y = mean is the truncated normal
        let base = Ar1TruncGauss::new(1.0, s, half_width)?;
        let lipschitz = base.lipschitz_bound() * 1f64.max(a1.abs()).max(a2.abs() * iota);
        Ok(Self { a1, a2, base, lipschitz })
    }

    fn mean(&self, past: &PastBuffer) -> f64 {
        let older = if past.memory() > 1 { past.lag(1)[0] } else { 0.0 };
        self.a1 * past.latest()[0] + self.a2 * older
    }
}

impl ConditionalKernel for Ar2TruncGauss {
    fn name(&self) -> &str {
        "ar2_truncgauss"
    }
    fn support(&self) -> &Bounds {
        self.base.support()
    }
    fn memory(&self) -> usize {
        2
    }
    fn density(&self, past: &PastBuffer, z: &[f64]) -> f64 {
        self.base.density(&[self.mean(past)], z)
    }
    fn lipschitz_bound(&self) -> f64 {
        self.lipschitz
    }
    fn quantile(&self, past: &PastBuffer, u: &[f64]) -> Result<Vec<f64>> {
        self.base.quantile(&[self.mean(past)], u)
    }
    fn sample_direct(&self, past: &PastBuffer, rng: &mut StreamRng) -> Result<Vec<f64>> {
        self.base.sample_direct(&[self.mean(past)], rng)
    }
}

/// Stationary noise `{η_k}` seen through an `m`-entry past. When `m` is
/// shorter than the kernel's memory, missing entries read as the center of
/// `𝒦`; that is the truncation approximation.
#[derive(Clone)]
pub struct StationaryNoiseModel {
    kernel: Arc<dyn ConditionalKernel>,
    memory_m: usize,
    iota: f64,
    burn_in: usize,
}

impl fmt::Debug for StationaryNoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StationaryNoiseModel")
            .field("kernel", &self.kernel.name())
            .field("memory_m", &self.memory_m)
            .field("iota", &self.iota)
            .field("burn_in", &self.burn_in)
            .finish()
    }
}

impl StationaryNoiseModel {
    pub fn new(kernel: Arc<dyn ConditionalKernel>, memory_m: usize, iota: f64, burn_in: usize) -> Result<Self> {
        if memory_m == 0 {
            return Err(Error::invalid("memory must be positive"));
        }
        if !(iota > 1.0) {
            return Err(Error::invalid("iota must exceed 1"));
        }
        Ok(Self { kernel, memory_m, iota, burn_in })
    }

    pub fn with_defaults(kernel: Arc<dyn ConditionalKernel>) -> Self {
        Self::new(kernel, DEFAULT_MEMORY, DEFAULT_IOTA, DEFAULT_BURN_IN).expect("valid defaults")
    }

    pub fn kernel(&self) -> &Arc<dyn ConditionalKernel> {
        &self.kernel
    }

    pub fn memory(&self) -> usize {
        self.memory_m
    }

    pub fn iota(&self) -> f64 {
        self.iota
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn support(&self) -> &Bounds {
        self.kernel.support()
    }

    /// `L · diam(𝒦) · ι^{−m} / (1 − ι^{−1})`, zero when the buffer covers
    /// the kernel's memory.
    pub fn truncation_error_bound(&self) -> f64 {
        if self.memory_m >= self.kernel.memory() {
            0.0
        } else {
            crate::noise::lipschitz_slack(
                self.kernel.lipschitz_bound(),
                truncation_bound(self.support().diameter(), self.iota, self.memory_m),
            )
        }
    }

    /// Buffer of the model's length filled with the support center.
    pub fn initial_buffer(&self) -> PastBuffer {
        PastBuffer::filled(self.memory_m, &self.support().center(), self.iota).expect("valid buffer")
    }

    /// The buffer as the kernel sees it: padded with the support center when
    /// shorter than the kernel's memory.
    pub(crate) fn view(&self, past: &PastBuffer) -> PastBuffer {
        let need = self.kernel.memory();
        if past.memory() >= need {
            return past.clone();
        }
        let center = self.support().center();
        let mut entries = vec![center; need - past.memory()];
        entries.extend(past.entries().iter().cloned());
        PastBuffer::new(entries, past.iota()).expect("valid buffer")
    }

    pub fn density(&self, past: &PastBuffer, z: &[f64]) -> f64 {
        self.kernel.density(&self.view(past), z)
    }

    pub fn quantile(&self, past: &PastBuffer, u: &[f64]) -> Result<Vec<f64>> {
        self.kernel.quantile(&self.view(past), u)
    }
}

/// Noise component of an extended state.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseState {
    /// Current noise value (Markovian case).
    Markov(Vec<f64>),
    /// Truncated past (stationary case).
    Past(PastBuffer),
}

impl NoiseState {
    pub fn latest(&self) -> &[f64] {
        match self {
            NoiseState::Markov(v) => v,
            NoiseState::Past(b) => b.latest(),
        }
    }
}

/// The driving noise of a reduced system.
#[derive(Clone)]
pub enum NoiseModel {
    Markov { kernel: Arc<dyn MarkovKernel>, burn_in: usize },
    Stationary(StationaryNoiseModel),
}

impl fmt::Debug for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseModel::Markov { kernel, burn_in } => {
                f.debug_struct("Markov").field("kernel", &kernel.name()).field("burn_in", burn_in).finish()
            }
            NoiseModel::Stationary(m) => m.fmt(f),
        }
    }
}

impl NoiseModel {
    pub fn markov(kernel: Arc<dyn MarkovKernel>) -> Self {
        NoiseModel::Markov { kernel, burn_in: DEFAULT_BURN_IN }
    }

    pub fn support(&self) -> &Bounds {
        match self {
            NoiseModel::Markov { kernel, .. } => kernel.support(),
            NoiseModel::Stationary(m) => m.support(),
        }
    }

    pub fn dim(&self) -> usize {
        self.support().dim()
    }

    pub fn burn_in(&self) -> usize {
        match self {
            NoiseModel::Markov { burn_in, .. } => *burn_in,
            NoiseModel::Stationary(m) => m.burn_in,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            NoiseModel::Markov { kernel, .. } => kernel.name(),
            NoiseModel::Stationary(m) => m.kernel.name(),
        }
    }

    /// Next noise from `dim` uniforms (inverse CDF given the current state).
    pub fn draw(&self, state: &NoiseState, u: &[f64]) -> Result<Vec<f64>> {
        match (self, state) {
            (NoiseModel::Markov { kernel, .. }, NoiseState::Markov(y)) => kernel.quantile(y, u),
            (NoiseModel::Stationary(m), NoiseState::Past(b)) => m.quantile(b, u),
            _ => Err(Error::invalid("noise state does not match the noise model")),
        }
    }

    /// Next noise by the independent direct sampler, using the full memory
    /// of the kernel.
    pub fn draw_direct(&self, state: &NoiseState, rng: &mut StreamRng) -> Result<Vec<f64>> {
        match (self, state) {
            (NoiseModel::Markov { kernel, .. }, NoiseState::Markov(y)) => kernel.sample_direct(y, rng),
            (NoiseModel::Stationary(m), NoiseState::Past(b)) => m.kernel.sample_direct(&m.view(b), rng),
            _ => Err(Error::invalid("noise state does not match the noise model")),
        }
    }

    /// Noise update after `eta` was used: replace, or shift and append.
    pub fn advance(&self, state: &mut NoiseState, eta: &[f64]) {
        match state {
            NoiseState::Markov(y) => {
                y.clear();
                y.extend_from_slice(eta);
            }
            NoiseState::Past(b) => b.push(eta),
        }
    }

    fn start_state(&self, direct: bool) -> NoiseState {
        match self {
            NoiseModel::Markov { kernel, .. } => NoiseState::Markov(kernel.support().center()),
            NoiseModel::Stationary(m) => {
                let len = if direct { m.memory_m.max(m.kernel.memory()) } else { m.memory_m };
                NoiseState::Past(PastBuffer::filled(len, &m.support().center(), m.iota).expect("valid buffer"))
            }
        }
    }

    /// `n` noise states harvested every `spacing` steps from one long run
    /// after `burn_in` discarded steps; an approximate sample of the
    /// stationary past law. `direct` selects the direct sampler (with
    /// full-memory buffers) instead of the inverse-CDF draw.
    pub fn harvest(&self, n: usize, spacing: usize, seed: u64, direct: bool) -> Result<Vec<NoiseState>> {
        let purpose = if direct { Purpose::Direct } else { Purpose::Pilot };
        let mut rng = stream(seed, purpose, u64::MAX >> 16);
        let mut state = self.start_state(direct);
        let step = |state: &mut NoiseState, rng: &mut StreamRng| -> Result<()> {
            let eta = if direct {
                self.draw_direct(state, rng)?
            } else {
                let u: Vec<f64> = (0..self.dim()).map(|_| rng.gen::<f64>()).collect();
                self.draw(state, &u)?
            };
            self.advance(state, &eta);
            Ok(())
        };
        for _ in 0..self.burn_in() {
            step(&mut state, &mut rng)?;
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            for _ in 0..spacing.max(1) {
                step(&mut state, &mut rng)?;
            }
            out.push(state.clone());
        }
        Ok(out)
    }
}
