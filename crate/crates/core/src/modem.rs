//! Source quantization and Gray-coded square QAM.
//!
//! A real source sample is quantized to `b` bits (natural binary cell index,
//! MSB first). A QAM symbol carries two such groups: the first selects the
//! in-phase level, the second the quadrature level. Each axis is Gray-coded
//! PAM on `{±1, ±3, …, ±(L-1)}` scaled by `1/sqrt(2(M-1)/3)` for unit average
//! energy.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Bits are stored one per byte, each `0` or `1`.
pub type Bits = Vec<u8>;

/// Uniform mid-rise quantizer with `2^bits` equal cells tiling `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    bits: u32,
    lo: f64,
    hi: f64,
}

impl Quantizer {
    pub fn new(bits: u32, lo: f64, hi: f64) -> Result<Self> {
        if bits == 0 || bits > 30 {
            return Err(Error::InvalidArgument(format!("quantizer bits must be in 1..=30, got {bits}")));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("bad quantizer range [{lo}, {hi}]")));
        }
        Ok(Self { bits, lo, hi })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn cells(&self) -> u32 {
        1 << self.bits
    }

    /// Cell width `(hi - lo) / 2^bits`.
    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / f64::from(self.cells())
    }

    /// Index of the cell containing `x`, after clamping into range.
    pub fn cell_index(&self, x: f64) -> u32 {
        let x = x.clamp(self.lo, self.hi);
        let idx = ((x - self.lo) / self.step()).floor() as i64;
        idx.clamp(0, i64::from(self.cells()) - 1) as u32
    }

    pub fn midpoint(&self, cell: u32) -> f64 {
        self.lo + (f64::from(cell) + 0.5) * self.step()
    }

    pub fn quantize(&self, x: &[f64]) -> Bits {
        let mut out = Vec::with_capacity(x.len() * self.bits as usize);
        for &v in x {
            push_bits(&mut out, self.cell_index(v), self.bits);
        }
        out
    }

    pub fn dequantize(&self, bits: &[u8]) -> Result<Vec<f64>> {
        let b = self.bits as usize;
        if bits.len() % b != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} bits is not a multiple of {b}",
                bits.len()
            )));
        }
        Ok(bits.chunks(b).map(|c| self.midpoint(read_bits(c))).collect())
    }
}

fn push_bits(out: &mut Bits, value: u32, width: u32) {
    for i in (0..width).rev() {
        out.push(((value >> i) & 1) as u8);
    }
}

fn read_bits(bits: &[u8]) -> u32 {
    bits.iter().fold(0, |acc, &b| (acc << 1) | u32::from(b & 1))
}

fn gray_encode(i: u32) -> u32 {
    i ^ (i >> 1)
}

fn gray_decode(mut g: u32) -> u32 {
    let mut i = g;
    while g > 1 {
        g >>= 1;
        i ^= g;
    }
    i
}

/// Square M-QAM with per-axis Gray coding and unit average energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QamSpec {
    order: u32,
}

impl QamSpec {
    pub const SUPPORTED: [u32; 3] = [16, 64, 256];

    pub fn new(order: u32) -> Result<Self> {
        if !Self::SUPPORTED.contains(&order) {
            return Err(Error::InvalidArgument(format!(
                "unsupported QAM order {order}; expected one of {:?}",
                Self::SUPPORTED
            )));
        }
        Ok(Self { order })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.order.trailing_zeros()
    }

    pub fn bits_per_axis(&self) -> u32 {
        self.bits_per_symbol() / 2
    }

    pub fn levels_per_axis(&self) -> u32 {
        1 << self.bits_per_axis()
    }

    /// Amplitude scale `1/sqrt(2(M-1)/3)`.
    pub fn scale(&self) -> f64 {
        1.0 / (2.0 * f64::from(self.order - 1) / 3.0).sqrt()
    }

    /// Scaled amplitude of level index `i` (0 is the most negative level).
    pub fn level(&self, i: u32) -> f64 {
        (2.0 * f64::from(i) - f64::from(self.levels_per_axis() - 1)) * self.scale()
    }

    /// Nearest level index to a (scaled) amplitude.
    pub fn nearest_level(&self, a: f64) -> u32 {
        let l = f64::from(self.levels_per_axis());
        let idx = ((a / self.scale() + (l - 1.0)) / 2.0).round();
        idx.clamp(0.0, l - 1.0) as u32
    }

    /// Symbol for a `bits_per_symbol`-bit label.
    pub fn symbol(&self, label: u32) -> Complex64 {
        let b = self.bits_per_axis();
        let mask = (1 << b) - 1;
        let i = gray_decode(label >> b);
        let q = gray_decode(label & mask);
        Complex64::new(self.level(i), self.level(q))
    }

    /// Label of the constellation point nearest to `y`.
    pub fn nearest_label(&self, y: Complex64) -> u32 {
        let b = self.bits_per_axis();
        (gray_encode(self.nearest_level(y.re)) << b) | gray_encode(self.nearest_level(y.im))
    }

    /// All `M` points, indexed by label.
    pub fn constellation(&self) -> Vec<Complex64> {
        (0..self.order).map(|l| self.symbol(l)).collect()
    }
}

pub fn qam_modulate(bits: &[u8], spec: &QamSpec) -> Result<Vec<Complex64>> {
    let b = spec.bits_per_symbol() as usize;
    if bits.len() % b != 0 {
        return Err(Error::InvalidArgument(format!(
            "{} bits is not a multiple of {b} bits per symbol",
            bits.len()
        )));
    }
    Ok(bits.chunks(b).map(|c| spec.symbol(read_bits(c))).collect())
}

/// Hard-decision demodulation: nearest level per axis, then Gray labels.
pub fn qam_demodulate(y: &[Complex64], spec: &QamSpec) -> Bits {
    let b = spec.bits_per_symbol();
    let mut out = Vec::with_capacity(y.len() * b as usize);
    for &v in y {
        push_bits(&mut out, spec.nearest_label(v), b);
    }
    out
}
