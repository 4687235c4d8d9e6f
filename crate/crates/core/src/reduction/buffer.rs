use crate::error::{Error, Result};

pub const DEFAULT_MEMORY: usize = 16;
pub const DEFAULT_IOTA: f64 = 2.0;

/// Truncated noise history `(ξ_{−m+1}, …, ξ_0)`, oldest first, with the
/// geometric weight `ι` of the past metric.
#[derive(Debug, Clone, PartialEq)]
pub struct PastBuffer {
    entries: Vec<Vec<f64>>,
    iota: f64,
}

impl PastBuffer {
    pub fn new(entries: Vec<Vec<f64>>, iota: f64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("a past buffer needs at least one entry"));
        }
        if !(iota > 1.0 && iota.is_finite()) {
            return Err(Error::invalid("iota must exceed 1"));
        }
        let dim = entries[0].len();
        if dim == 0 || entries.iter().any(|e| e.len() != dim) {
            return Err(Error::invalid("buffer entries must share a positive dimension"));
        }
        Ok(Self { entries, iota })
    }

    /// `m` copies of `value`.
    pub fn filled(memory: usize, value: &[f64], iota: f64) -> Result<Self> {
        Self::new(vec![value.to_vec(); memory], iota)
    }

    pub fn memory(&self) -> usize {
        self.entries.len()
    }

    pub fn iota(&self) -> f64 {
        self.iota
    }

    pub fn dim(&self) -> usize {
        self.entries[0].len()
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    /// `ξ_0`.
    pub fn latest(&self) -> &[f64] {
        self.entries.last().expect("nonempty")
    }

    /// `ξ_{−lag}`; lag 0 is the most recent entry.
    pub fn lag(&self, lag: usize) -> &[f64] {
        &self.entries[self.entries.len() - 1 - lag]
    }

    /// Drops the oldest entry and appends `eta`.
    pub fn push(&mut self, eta: &[f64]) {
        self.entries.rotate_left(1);
        let last = self.entries.last_mut().expect("nonempty");
        last.clear();
        last.extend_from_slice(eta);
    }

    pub fn pushed(&self, eta: &[f64]) -> Self {
        let mut b = self.clone();
        b.push(eta);
        b
    }

    /// The most recent `m` entries as a shorter buffer.
    pub fn tail(&self, m: usize) -> Self {
        let m = m.clamp(1, self.memory());
        Self { entries: self.entries[self.memory() - m..].to_vec(), iota: self.iota }
    }

    /// Flat `f64` array: `[m, ι, dim, entries…]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = vec![self.memory() as f64, self.iota, self.dim() as f64];
        self.entries.iter().for_each(|e| out.extend_from_slice(e));
        out
    }

    pub fn from_flat(data: &[f64]) -> Result<Self> {
        if data.len() < 3 {
            return Err(Error::Format("buffer header needs three values".into()));
        }
        let (m, iota, dim) = (data[0], data[1], data[2]);
        if m.fract() != 0.0 || dim.fract() != 0.0 || m < 1.0 || dim < 1.0 {
            return Err(Error::Format("memory and dimension must be positive integers".into()));
        }
        let (m, dim) = (m as usize, dim as usize);
        if data.len() != 3 + m * dim {
            return Err(Error::Format(format!("expected {} values, found {}", 3 + m * dim, data.len())));
        }
        Self::new(data[3..].chunks(dim).map(<[f64]>::to_vec).collect(), iota)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_flat().iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if !bytes.len().is_multiple_of(8) {
            return Err(Error::Format("byte length is not a multiple of 8".into()));
        }
        let flat: Vec<f64> =
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Self::from_flat(&flat)
    }
}

/// `Σ_{j<m} ι^{−j} |ξ_{−j} − ξ′_{−j}|`.
pub fn past_metric(b1: &PastBuffer, b2: &PastBuffer) -> Result<f64> {
    if b1.memory() != b2.memory() || b1.iota != b2.iota || b1.dim() != b2.dim() {
        return Err(Error::MismatchedBuffers(format!(
            "(m={}, ι={}) vs (m={}, ι={})",
            b1.memory(),
            b1.iota,
            b2.memory(),
            b2.iota
        )));
    }
    let mut weight = 1.0;
    let mut total = 0.0;
    for j in 0..b1.memory() {
        total += weight * crate::linalg::distance(b1.lag(j), b2.lag(j));
        weight /= b1.iota;
    }
    Ok(total)
}

/// Tail of the infinite sum dropped by an `m`-entry buffer:
/// `diam(𝒦) ι^{−m} / (1 − ι^{−1})`.
pub fn truncation_bound(noise_diameter: f64, iota: f64, memory: usize) -> f64 {
    noise_diameter * iota.powi(-(memory as i32)) / (1.0 - 1.0 / iota)
}
