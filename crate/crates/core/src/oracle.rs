//! Exact-integer direct convolution used as functional ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::netmodel::{output_length, ConvLayerConfig};
use crate::tensor::{FilterBank, Tensor3};
use crate::{Error, Result};

/// Output of the reference convolution plus MAC instrumentation.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub output: Tensor3,
    /// `OC * OL^2 * FL^2 * IC`: every multiply, including those against
    /// zero-pad positions.
    pub total_macs_including_pads: u64,
    /// Multiplies whose input coordinate falls inside the real feature map.
    pub non_pad_macs: u64,
}

/// Direct convolution:
/// `y_k(m,n) = b_k + sum_c sum_j sum_i x_c(mS+j-Z, nS+i-Z) * w_ck(j,i)`
/// with out-of-range input reads treated as zero (and counted as pad MACs).
///
/// The filter-tap bounds run over the filter extent `[0, FL)`.
pub fn conv_direct(
    layer: &ConvLayerConfig,
    input: &Tensor3,
    filters: &FilterBank,
) -> Result<OracleResult> {
    layer.validate()?;
    if input.channels != layer.ic || input.rows != layer.il || input.cols != layer.il {
        return Err(Error::ShapeMismatch(format!(
            "input is {}x{}x{}, layer {} expects {}x{}x{}",
            input.channels, input.rows, input.cols, layer.name, layer.ic, layer.il, layer.il
        )));
    }
    if filters.filters != layer.k || filters.channels != layer.ic || filters.fl != layer.fl {
        return Err(Error::ShapeMismatch(format!(
            "filter bank is {}x{}x{}x{}, layer {} expects {}x{}x{}x{}",
            filters.filters,
            filters.channels,
            filters.fl,
            filters.fl,
            layer.name,
            layer.k,
            layer.ic,
            layer.fl,
            layer.fl
        )));
    }

    let ol = layer.ol();
    let mut output = Tensor3::zeros(layer.k, ol, ol);
    let mut non_pad = 0u64;
    for k in 0..layer.k {
        for m in 0..ol {
            for n in 0..ol {
                let mut acc = filters.bias_of(k);
                for c in 0..layer.ic {
                    for j in 0..layer.fl {
                        let r = (m * layer.s + j) as isize - layer.z as isize;
                        for i in 0..layer.fl {
                            let col = (n * layer.s + i) as isize - layer.z as isize;
                            let in_range = r >= 0
                                && col >= 0
                                && (r as usize) < layer.il
                                && (col as usize) < layer.il;
                            if in_range {
                                non_pad += 1;
                                acc += input.get(c, r as usize, col as usize)
                                    * filters.get(k, c, j, i);
                            }
                        }
                    }
                }
                output.add(k, m, n, acc);
            }
        }
    }

    let total = (layer.k * ol * ol * layer.fl * layer.fl * layer.ic) as u64;
    debug_assert!(non_pad <= total);
    Ok(OracleResult {
        output,
        total_macs_including_pads: total,
        non_pad_macs: non_pad,
    })
}

/// Shape-determined count of non-pad MACs, without touching tensor data.
///
/// The count is separable: a `(j, m)` row pair is valid iff `mS+j-Z` lands in
/// the input, independently of the column indices, and vice versa.
pub fn non_pad_mac_count(layer: &ConvLayerConfig) -> u64 {
    let ol = layer.ol();
    let valid_1d = |extent: usize| -> u64 {
        let mut count = 0u64;
        for m in 0..ol {
            for j in 0..layer.fl {
                let p = (m * layer.s + j) as isize - layer.z as isize;
                if p >= 0 && (p as usize) < extent {
                    count += 1;
                }
            }
        }
        count
    };
    let v = valid_1d(layer.il);
    (layer.ic * layer.k) as u64 * v * v
}

/// Bounds for randomized layer generation.
#[derive(Debug, Clone)]
pub struct GenBounds {
    pub il: (usize, usize),
    pub ic: (usize, usize),
    pub k: (usize, usize),
    pub fl_choices: Vec<usize>,
    pub s_choices: Vec<usize>,
    pub z_choices: Vec<usize>,
    pub word_bits: u32,
}

impl Default for GenBounds {
    fn default() -> Self {
        GenBounds {
            il: (3, 20),
            ic: (1, 8),
            k: (1, 128),
            fl_choices: vec![1, 3, 5, 7],
            s_choices: vec![1, 2],
            z_choices: vec![0, 1, 3],
            word_bits: 16,
        }
    }
}

/// Deterministic pseudo-random layer, input and filter bank within bounds.
pub fn random_layer_gen(seed: u64, bounds: &GenBounds) -> (ConvLayerConfig, Tensor3, FilterBank) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layer = loop {
        let il = rng.gen_range(bounds.il.0..=bounds.il.1);
        let ic = rng.gen_range(bounds.ic.0..=bounds.ic.1);
        let k = rng.gen_range(bounds.k.0..=bounds.k.1);
        let fl = bounds.fl_choices[rng.gen_range(0..bounds.fl_choices.len())];
        let s = bounds.s_choices[rng.gen_range(0..bounds.s_choices.len())];
        let z = bounds.z_choices[rng.gen_range(0..bounds.z_choices.len())];
        if fl <= il + 2 * z && output_length(il, fl, z, s).is_some() {
            break ConvLayerConfig::new(format!("rand{seed}"), il, ic, fl, k, s, z).unwrap();
        }
    };
    let input = Tensor3::random(&mut rng, layer.ic, layer.il, bounds.word_bits);
    let filters = FilterBank::random(&mut rng, layer.k, layer.ic, layer.fl, bounds.word_bits);
    (layer, input, filters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::FilterBank;

    #[test]
    fn identity_filter_passes_input_through() {
        let layer = ConvLayerConfig::new("id", 4, 1, 1, 1, 1, 0).unwrap();
        let input = Tensor3::from_values(1, 4, 4, (0..16).map(|v| v as i64 - 8).collect()).unwrap();
        let filters = FilterBank::from_values(1, 1, 1, vec![1], None).unwrap();
        let res = conv_direct(&layer, &input, &filters).unwrap();
        assert_eq!(res.output.values(), input.values());
        assert_eq!(res.non_pad_macs, res.total_macs_including_pads);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let layer = ConvLayerConfig::new("z", 5, 2, 3, 3, 1, 1).unwrap();
        let input = Tensor3::zeros(2, 5, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let filters = FilterBank::random(&mut rng, 3, 2, 3, 16);
        let res = conv_direct(&layer, &input, &filters).unwrap();
        assert!(res.output.values().iter().all(|&v| v == 0));
    }

    #[test]
    fn ones_filter_counts_overlap() {
        // 3x3 ones-filter over a 4x4 ones-input with Z=1: corners overlap 4
        // input cells, the interior overlaps 9.
        let layer = ConvLayerConfig::new("ones", 4, 1, 3, 1, 1, 1).unwrap();
        let input = Tensor3::from_values(1, 4, 4, vec![1; 16]).unwrap();
        let filters = FilterBank::from_values(1, 1, 3, vec![1; 9], None).unwrap();
        let res = conv_direct(&layer, &input, &filters).unwrap();
        assert_eq!(res.output.get(0, 0, 0), 4);
        assert_eq!(res.output.get(0, 1, 1), 9);
        assert_eq!(res.output.get(0, 0, 1), 6);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let layer = ConvLayerConfig::new("bad", 4, 2, 1, 1, 1, 0).unwrap();
        let input = Tensor3::zeros(1, 4, 4);
        let filters = FilterBank::zeros(1, 2, 1);
        assert!(conv_direct(&layer, &input, &filters).is_err());
    }

    #[test]
    fn generator_is_deterministic_and_respects_bounds() {
        let bounds = GenBounds {
            fl_choices: vec![1, 3],
            ..GenBounds::default()
        };
        let (l1, x1, w1) = random_layer_gen(42, &bounds);
        let (l2, x2, w2) = random_layer_gen(42, &bounds);
        assert_eq!(l1, l2);
        assert_eq!(x1, x2);
        assert_eq!(w1, w2);
        for seed in 0..200 {
            let (l, _, _) = random_layer_gen(seed, &bounds);
            assert!(l.fl == 1 || l.fl == 3);
            l.validate().unwrap();
        }
    }

    #[test]
    fn non_pad_count_matches_brute_force() {
        for seed in 0..40 {
            let (layer, input, filters) = random_layer_gen(seed, &GenBounds::default());
            let res = conv_direct(&layer, &input, &filters).unwrap();
            assert_eq!(
                res.non_pad_macs,
                non_pad_mac_count(&layer),
                "layer {layer:?}"
            );
        }
    }
}
