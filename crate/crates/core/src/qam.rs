//! Gray-coded square QAM with unit average symbol energy.
//!
//! Each symbol carries `log2(order)` bits. The first half of the bits (MSB
//! first) selects the in-phase level and the second half the quadrature
//! level; both halves are Gray coded along their axis, so neighbouring
//! constellation points differ in exactly one bit.

use crate::{Cplx, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    bits_per_axis: usize,
    levels: usize,
    scale: f64,
}

impl Constellation {
    pub fn new(order: usize) -> Result<Self> {
        let bits = match order {
            4 => 2,
            16 => 4,
            64 => 6,
            _ => return Err(Error::config(format!("unsupported QAM order {order}"))),
        };
        let bits_per_axis = bits / 2;
        let levels = 1usize << bits_per_axis;
        let energy = 2.0 * ((levels * levels) as f64 - 1.0) / 3.0;
        Ok(Self {
            order,
            bits_per_axis,
            levels,
            scale: energy.sqrt().recip(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis
    }

    /// Smallest distance between two constellation points.
    pub fn min_distance(&self) -> f64 {
        2.0 * self.scale
    }

    /// All points, indexed by the integer formed from the symbol's bits.
    pub fn points(&self) -> Vec<Cplx> {
        (0..self.order)
            .map(|word| {
                let bits: Vec<u8> = (0..self.bits_per_symbol())
                    .rev()
                    .map(|b| ((word >> b) & 1) as u8)
                    .collect();
                self.map_symbol(&bits)
            })
            .collect()
    }

    fn level(&self, gray: usize) -> f64 {
        let i = gray_to_binary(gray);
        (2.0 * i as f64 - (self.levels as f64 - 1.0)) * self.scale
    }

    fn slice_axis(&self, x: f64) -> usize {
        let top = self.levels as f64 - 1.0;
        let i = ((x / self.scale + top) / 2.0).round().clamp(0.0, top) as usize;
        i ^ (i >> 1)
    }

    fn map_symbol(&self, bits: &[u8]) -> Cplx {
        let (i_bits, q_bits) = bits.split_at(self.bits_per_axis);
        Cplx::new(self.level(pack(i_bits)), self.level(pack(q_bits)))
    }

    pub fn map(&self, bits: &[u8]) -> Result<Vec<Cplx>> {
        let k = self.bits_per_symbol();
        if !bits.len().is_multiple_of(k) {
            return Err(Error::input(format!(
                "{} bits is not a multiple of {k} bits per symbol",
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::input("bit values must be 0 or 1"));
        }
        Ok(bits.chunks(k).map(|c| self.map_symbol(c)).collect())
    }

    /// Hard decision: nearest constellation point.
    pub fn slice(&self, x: Cplx) -> Cplx {
        let gi = self.slice_axis(x.re);
        let gq = self.slice_axis(x.im);
        Cplx::new(self.level(gi), self.level(gq))
    }

    /// Hard-decision demapping; the input need not lie on the constellation.
    pub fn demap(&self, symbols: &[Cplx]) -> Vec<u8> {
        let mut out = Vec::with_capacity(symbols.len() * self.bits_per_symbol());
        for s in symbols {
            for g in [self.slice_axis(s.re), self.slice_axis(s.im)] {
                for b in (0..self.bits_per_axis).rev() {
                    out.push(((g >> b) & 1) as u8);
                }
            }
        }
        out
    }
}

fn pack(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

fn gray_to_binary(mut g: usize) -> usize {
    let mut shift = g >> 1;
    while shift != 0 {
        g ^= shift;
        shift >>= 1;
    }
    g
}

pub fn qam_map(bits: &[u8], order: usize) -> Result<Vec<Cplx>> {
    Constellation::new(order)?.map(bits)
}

pub fn qam_demap(symbols: &[Cplx], order: usize) -> Result<Vec<u8>> {
    Ok(Constellation::new(order)?.demap(symbols))
}

/// Number of positions where the two bit vectors differ.
pub fn bit_errors(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}
