//! Convolution layer and network descriptors, benchmark network builders,
//! and structured channel pruning.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Shape parameters of one convolutional layer.
///
/// `il`/`ic` describe the input feature maps (spatial length and channel
/// count), `fl` the filter spatial length, `k` the filter count (which is
/// also the output channel count), `s` the stride and `z` the zero-padding
/// width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerConfig {
    pub name: String,
    pub il: usize,
    pub ic: usize,
    pub fl: usize,
    pub k: usize,
    pub s: usize,
    pub z: usize,
}

impl ConvLayerConfig {
    pub fn new(
        name: impl Into<String>,
        il: usize,
        ic: usize,
        fl: usize,
        k: usize,
        s: usize,
        z: usize,
    ) -> Result<Self> {
        let layer = ConvLayerConfig {
            name: name.into(),
            il,
            ic,
            fl,
            k,
            s,
            z,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidLayer {
            name: self.name.clone(),
            reason,
        };
        if self.il < 1 || self.ic < 1 || self.fl < 1 || self.k < 1 || self.s < 1 {
            return Err(fail("IL, IC, FL, K and S must all be >= 1".into()));
        }
        if self.fl > self.il + 2 * self.z {
            return Err(fail(format!(
                "filter (FL={}) does not fit padded input (IL={} Z={})",
                self.fl, self.il, self.z
            )));
        }
        if output_length(self.il, self.fl, self.z, self.s).is_none() {
            return Err(fail("derived output length is < 1".into()));
        }
        Ok(())
    }

    /// Output spatial length of this layer.
    pub fn ol(&self) -> usize {
        output_length(self.il, self.fl, self.z, self.s).expect("validated layer always has OL >= 1")
    }
}

/// `OL = floor((IL - FL + 2Z) / S) + 1`, or `None` when the result would be
/// smaller than 1.
pub fn output_length(il: usize, fl: usize, z: usize, s: usize) -> Option<usize> {
    let padded = il + 2 * z;
    if fl > padded || s == 0 {
        return None;
    }
    Some((padded - fl) / s + 1)
}

/// An ordered sequence of convolutional layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub name: String,
    pub layers: Vec<ConvLayerConfig>,
}

impl NetworkModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: NetworkModel = serde_json::from_str(text)?;
        for layer in &net.layers {
            layer.validate()?;
        }
        Ok(net)
    }
}

/// Per-layer filter-keep counts: maps layer index to the pruned filter count.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneSpec {
    pub keep: BTreeMap<usize, usize>,
}

/// Builds the 49 convolutional layers of ResNet-50.
///
/// The network is organized as one 7x7 stem followed by bottleneck blocks
/// `[1x1, 3x3, 1x1]` in four groups (3 + 4 + 6 + 3 blocks). The 1-based
/// convolutional layers #11, #23 and #41 (the group-leading 1x1 of the
/// second, third and fourth bottleneck group) carry stride 2. The stem's
/// Z=3 padding is not stated in the usual layer tables; it is the only
/// padding that yields a 112x112 output at stride 2.
///
/// Projection-shortcut 1x1 convolutions are excluded by default so that the
/// layer census is exactly 49 (32 1x1, 16 3x3, one 7x7). `with_shortcuts`
/// appends them per transition block, named with a `_proj` suffix so reports
/// keep them clearly separated.
pub fn build_resnet50(with_shortcuts: bool) -> NetworkModel {
    let mut layers = Vec::new();
    layers.push(ConvLayerConfig::new("conv1", 224, 3, 7, 64, 2, 3).unwrap());

    // (group label, block count, bottleneck width, in-fmap size of the group)
    let groups: [(&str, usize, usize, usize); 4] = [
        ("conv2", 3, 64, 56),
        ("conv3", 4, 128, 28),
        ("conv4", 6, 256, 14),
        ("conv5", 3, 512, 7),
    ];

    // Channels entering the first block (conv1 output; pooling keeps channels).
    let mut prev_k = 64;
    let mut prev_fmap = 56; // in-fmap size seen by the first conv2 block
    for (label, blocks, width, fmap) in groups {
        for b in 0..blocks {
            let first = b == 0;
            // Strided transition happens in the group-leading 1x1 of conv3..conv5.
            let (il1, s1) = if first && fmap != prev_fmap {
                (prev_fmap, 2)
            } else {
                (fmap, 1)
            };
            let base = format!("{label}_{}", b + 1);
            if with_shortcuts && first {
                layers.push(
                    ConvLayerConfig::new(format!("{base}_proj"), il1, prev_k, 1, 4 * width, s1, 0)
                        .unwrap(),
                );
            }
            layers.push(
                ConvLayerConfig::new(format!("{base}_a1x1"), il1, prev_k, 1, width, s1, 0).unwrap(),
            );
            layers.push(
                ConvLayerConfig::new(format!("{base}_b3x3"), fmap, width, 3, width, 1, 1).unwrap(),
            );
            layers.push(
                ConvLayerConfig::new(format!("{base}_c1x1"), fmap, width, 1, 4 * width, 1, 0)
                    .unwrap(),
            );
            prev_k = 4 * width;
        }
        prev_fmap = fmap;
    }

    let net = NetworkModel {
        name: "resnet50".into(),
        layers,
    };
    assert_chained(&net);
    net
}

/// Builds the 13 3x3 convolutional layers of VGGNet-16 (S=1, Z=1).
pub fn build_vgg16() -> NetworkModel {
    let shapes: [(usize, usize, usize); 13] = [
        (64, 3, 224),
        (64, 64, 224),
        (128, 64, 112),
        (128, 128, 112),
        (256, 128, 56),
        (256, 256, 56),
        (256, 256, 56),
        (512, 256, 28),
        (512, 512, 28),
        (512, 512, 28),
        (512, 512, 14),
        (512, 512, 14),
        (512, 512, 14),
    ];
    let layers = shapes
        .iter()
        .enumerate()
        .map(|(i, &(k, ic, il))| {
            ConvLayerConfig::new(
                format!("conv{}_{}-{}-{}", i + 1, k, ic, il),
                il,
                ic,
                3,
                k,
                1,
                1,
            )
            .unwrap()
        })
        .collect();
    let net = NetworkModel {
        name: "vgg16".into(),
        layers,
    };
    assert_chained(&net);
    net
}

fn assert_chained(net: &NetworkModel) {
    for pair in net.layers.windows(2) {
        // A projection shortcut branches off the main path: it reads the
        // same input as the following 1x1 but its output merges at the block
        // exit, so it does not feed the next listed layer.
        if !pair[0].name.ends_with("_proj") {
            assert_eq!(
                pair[1].ic, pair[0].k,
                "builder wiring broken between {} and {}",
                pair[0].name, pair[1].name
            );
        }
    }
}

/// The built-in 50%-channel-pruned ResNet-50: the first two convolutions of
/// every bottleneck keep half their filters; the expanding 1x1 and the stem
/// are unchanged.
pub fn resnet50_sparse_spec() -> PruneSpec {
    let net = build_resnet50(false);
    let mut keep = BTreeMap::new();
    for (i, layer) in net.layers.iter().enumerate() {
        if layer.name.ends_with("_a1x1") || layer.name.ends_with("_b3x3") {
            keep.insert(i, layer.k / 2);
        }
    }
    PruneSpec { keep }
}

/// Applies structured channel pruning: replaces each listed layer's filter
/// count and propagates the reduction to the consumer's input channel count.
pub fn apply_channel_pruning(net: &NetworkModel, spec: &PruneSpec) -> Result<NetworkModel> {
    let mut pruned = net.clone();
    for (&idx, &new_k) in &spec.keep {
        let layer = pruned
            .layers
            .get(idx)
            .ok_or_else(|| Error::InvalidPruneSpec(format!("layer index {idx} out of range")))?;
        if new_k < 1 || new_k > net.layers[idx].k {
            return Err(Error::InvalidPruneSpec(format!(
                "layer {idx} ({}): pruned K={new_k} must be in [1, {}]",
                layer.name, net.layers[idx].k
            )));
        }
        if idx + 1 < net.layers.len() && net.layers[idx + 1].ic != net.layers[idx].k {
            return Err(Error::InvalidPruneSpec(format!(
                "layer {idx} ({}) output is not consumed by layer {} as-is; \
                 IC/K chaining would break",
                layer.name,
                idx + 1
            )));
        }
        pruned.layers[idx].k = new_k;
        if idx + 1 < pruned.layers.len() {
            pruned.layers[idx + 1].ic = new_k;
        }
    }
    if net.name == "resnet50" && !spec.keep.is_empty() {
        pruned.name = "resnet50-sparse".into();
    }
    Ok(pruned)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_length_cases() {
        assert_eq!(output_length(224, 7, 3, 2), Some(112));
        assert_eq!(output_length(17, 1, 0, 1), Some(17));
        assert_eq!(output_length(56, 3, 1, 1), Some(56));
        assert_eq!(output_length(3, 7, 0, 1), None);
    }

    #[test]
    fn resnet50_structure() {
        let net = build_resnet50(false);
        assert_eq!(net.layers.len(), 49);
        let first = &net.layers[0];
        assert_eq!((first.fl, first.k, first.ol()), (7, 64, 112));
        let last = net.layers.last().unwrap();
        assert_eq!((last.fl, last.k, last.ol()), (1, 2048, 7));

        let census_1x1 = net.layers.iter().filter(|l| l.fl == 1).count();
        let census_3x3 = net.layers.iter().filter(|l| l.fl == 3).count();
        let census_7x7 = net.layers.iter().filter(|l| l.fl == 7).count();
        assert_eq!((census_1x1, census_3x3, census_7x7), (32, 16, 1));

        // 1-based transition layers #11, #23, #41 carry the stride.
        for (idx, layer) in net.layers.iter().enumerate() {
            let expected_s = if idx == 0 || idx + 1 == 11 || idx + 1 == 23 || idx + 1 == 41 {
                2
            } else {
                1
            };
            assert_eq!(
                layer.s,
                expected_s,
                "stride of layer #{} ({})",
                idx + 1,
                layer.name
            );
        }
    }

    #[test]
    fn resnet50_with_shortcuts_separated() {
        let net = build_resnet50(true);
        assert_eq!(net.layers.len(), 53);
        assert_eq!(
            net.layers
                .iter()
                .filter(|l| l.name.ends_with("_proj"))
                .count(),
            4
        );
    }

    #[test]
    fn vgg16_structure() {
        let net = build_vgg16();
        assert_eq!(net.layers.len(), 13);
        let l0 = &net.layers[0];
        assert_eq!((l0.k, l0.ic, l0.il), (64, 3, 224));
        let l12 = &net.layers[12];
        assert_eq!((l12.k, l12.ic, l12.il), (512, 512, 14));
        for l in &net.layers {
            assert_eq!((l.fl, l.s, l.z), (3, 1, 1));
            assert_eq!(l.ol(), l.il);
        }
    }

    #[test]
    fn builtin_sparse_spec_matches_table() {
        let net = build_resnet50(false);
        let sparse = apply_channel_pruning(&net, &resnet50_sparse_spec()).unwrap();
        // conv2 bottleneck filter counts become (32, 32, 256)
        assert_eq!(sparse.layers[1].k, 32);
        assert_eq!(sparse.layers[2].k, 32);
        assert_eq!(sparse.layers[3].k, 256);
        // conv4 3x3: K=128 with IC=128 via producer pruning
        let conv4_3x3 = sparse
            .layers
            .iter()
            .find(|l| l.name == "conv4_1_b3x3")
            .unwrap();
        assert_eq!((conv4_3x3.k, conv4_3x3.ic), (128, 128));
        // conv1 and expanding 1x1 layers keep their filters
        assert_eq!(sparse.layers[0].k, 64);
        assert!(sparse
            .layers
            .iter()
            .filter(|l| l.name.ends_with("_c1x1"))
            .all(|l| l.k % 256 == 0));
    }

    #[test]
    fn pruning_noop_and_idempotent() {
        let net = build_resnet50(false);
        let same = apply_channel_pruning(&net, &PruneSpec::default()).unwrap();
        assert_eq!(net, same);

        let spec = resnet50_sparse_spec();
        let once = apply_channel_pruning(&net, &spec).unwrap();
        let twice = apply_channel_pruning(&once, &spec).unwrap();
        assert_eq!(once.layers, twice.layers);
    }

    #[test]
    fn pruning_rejects_bad_specs() {
        let net = build_resnet50(false);
        let mut spec = PruneSpec::default();
        spec.keep.insert(500, 1);
        assert!(apply_channel_pruning(&net, &spec).is_err());

        let mut spec = PruneSpec::default();
        spec.keep.insert(1, 0);
        assert!(apply_channel_pruning(&net, &spec).is_err());

        let mut spec = PruneSpec::default();
        spec.keep.insert(1, 128);
        assert!(apply_channel_pruning(&net, &spec).is_err());
    }

    #[test]
    fn json_round_trip() {
        let net = build_vgg16();
        let text = net.to_json().unwrap();
        assert!(text.contains("\"il\""));
        let back = NetworkModel::from_json(&text).unwrap();
        assert_eq!(net, back);
    }
}
