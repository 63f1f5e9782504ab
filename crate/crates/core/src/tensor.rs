//! Dense integer tensors for feature maps and filter banks.

use rand::Rng;

use crate::{Error, Result};

/// Word-range bounds for a given data word width.
pub fn word_range(word_bits: u32) -> (i64, i64) {
    let half = 1i64 << (word_bits - 1);
    (-half, half - 1)
}

/// A dense 3-D tensor of signed integers, laid out `(channels, rows, cols)`.
///
/// Inputs hold square `IL x IL` planes; outputs hold `OL x OL` planes. Values
/// of freshly generated or loaded tensors fit the architecture's word width;
/// convolution outputs are kept exact and may exceed it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor3 {
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
    data: Vec<i64>,
}

impl Tensor3 {
    pub fn zeros(channels: usize, rows: usize, cols: usize) -> Self {
        Tensor3 {
            channels,
            rows,
            cols,
            data: vec![0; channels * rows * cols],
        }
    }

    pub fn from_values(channels: usize, rows: usize, cols: usize, data: Vec<i64>) -> Result<Self> {
        if data.len() != channels * rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values for a {channels}x{rows}x{cols} tensor, got {}",
                channels * rows * cols,
                data.len()
            )));
        }
        Ok(Tensor3 {
            channels,
            rows,
            cols,
            data,
        })
    }

    pub fn random<R: Rng>(rng: &mut R, channels: usize, side: usize, word_bits: u32) -> Self {
        let (lo, hi) = word_range(word_bits);
        let data = (0..channels * side * side)
            .map(|_| rng.gen_range(lo..=hi))
            .collect();
        Tensor3 {
            channels,
            rows: side,
            cols: side,
            data,
        }
    }

    #[inline]
    pub fn get(&self, c: usize, r: usize, col: usize) -> i64 {
        self.data[(c * self.rows + r) * self.cols + col]
    }

    /// Zero-padded read: out-of-range coordinates yield 0.
    #[inline]
    pub fn get_padded(&self, c: usize, r: isize, col: isize) -> i64 {
        if r < 0 || col < 0 || r as usize >= self.rows || col as usize >= self.cols {
            0
        } else {
            self.get(c, r as usize, col as usize)
        }
    }

    #[inline]
    pub fn add(&mut self, c: usize, r: usize, col: usize, v: i64) {
        self.data[(c * self.rows + r) * self.cols + col] += v;
    }

    pub fn values(&self) -> &[i64] {
        &self.data
    }

    pub fn scale(&self, a: i64) -> Tensor3 {
        Tensor3 {
            channels: self.channels,
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * a).collect(),
        }
    }
}

/// A bank of `K` filters of shape `(IC, FL, FL)` with an optional per-filter
/// bias. The bias only participates in the reference convolution; the
/// accelerator dataflows never process it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterBank {
    pub filters: usize,
    pub channels: usize,
    pub fl: usize,
    data: Vec<i64>,
    pub bias: Option<Vec<i64>>,
}

impl FilterBank {
    pub fn zeros(filters: usize, channels: usize, fl: usize) -> Self {
        FilterBank {
            filters,
            channels,
            fl,
            data: vec![0; filters * channels * fl * fl],
            bias: None,
        }
    }

    pub fn from_values(
        filters: usize,
        channels: usize,
        fl: usize,
        data: Vec<i64>,
        bias: Option<Vec<i64>>,
    ) -> Result<Self> {
        if data.len() != filters * channels * fl * fl {
            return Err(Error::ShapeMismatch(format!(
                "expected {} weights for {filters} filters of {channels}x{fl}x{fl}, got {}",
                filters * channels * fl * fl,
                data.len()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != filters {
                return Err(Error::ShapeMismatch(format!(
                    "expected {filters} bias values, got {}",
                    b.len()
                )));
            }
        }
        Ok(FilterBank {
            filters,
            channels,
            fl,
            data,
            bias,
        })
    }

    pub fn random<R: Rng>(
        rng: &mut R,
        filters: usize,
        channels: usize,
        fl: usize,
        word_bits: u32,
    ) -> Self {
        let (lo, hi) = word_range(word_bits);
        let data = (0..filters * channels * fl * fl)
            .map(|_| rng.gen_range(lo..=hi))
            .collect();
        FilterBank {
            filters,
            channels,
            fl,
            data,
            bias: None,
        }
    }

    #[inline]
    pub fn get(&self, k: usize, c: usize, j: usize, i: usize) -> i64 {
        self.data[((k * self.channels + c) * self.fl + j) * self.fl + i]
    }

    #[inline]
    pub fn bias_of(&self, k: usize) -> i64 {
        self.bias.as_ref().map_or(0, |b| b[k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_range_16_bits() {
        assert_eq!(word_range(16), (-32768, 32767));
    }

    #[test]
    fn padded_reads_are_zero_outside() {
        let t = Tensor3::from_values(1, 2, 2, vec![1, 2, 3, 4]).unwrap();
        assert_eq!(t.get_padded(0, -1, 0), 0);
        assert_eq!(t.get_padded(0, 0, 2), 0);
        assert_eq!(t.get_padded(0, 1, 1), 4);
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(Tensor3::from_values(1, 2, 2, vec![1]).is_err());
        assert!(FilterBank::from_values(2, 1, 1, vec![1, 2], Some(vec![1])).is_err());
    }
}
