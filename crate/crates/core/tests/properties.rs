//! Property-based invariants over randomized layer shapes.

use proptest::prelude::*;

use convsim::costmodel::{
    decompose_rows, layer_cost, pieces_3x3, row_mode_partition_cycles, select_mode, ArchConfig,
    Mode,
};
use convsim::netmodel::{apply_channel_pruning, build_resnet50, ConvLayerConfig, PruneSpec};
use convsim::oracle::non_pad_mac_count;
use convsim::simulator::simulate_layer;

fn arb_layer() -> impl Strategy<Value = ConvLayerConfig> {
    (
        3usize..=20,
        1usize..=6,
        0usize..=3,
        1usize..=130,
        1usize..=2,
        0usize..=2,
    )
        .prop_filter_map("valid layer", |(il, ic, fl_idx, k, s, z)| {
            let fl = [1, 3, 5, 7][fl_idx];
            ConvLayerConfig::new("prop", il, ic, fl, k, s, z)
                .ok()
                .filter(|l| l.fl != 2)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cost_counters_match_simulation(layer in arb_layer()) {
        let arch = ArchConfig::default();
        let cost = layer_cost(&layer, &arch).unwrap();
        let sim = simulate_layer(&layer, &arch, None, false).unwrap();
        prop_assert_eq!(cost.cycles, sim.counters.cycles);
        prop_assert_eq!(cost.stall_cycles, sim.counters.stall_cycles);
        prop_assert_eq!(cost.dram_in_reads, sim.counters.dram_in_reads);
        prop_assert_eq!(cost.dram_w_reads, sim.counters.dram_w_reads);
        prop_assert_eq!(cost.dram_out_writes, sim.counters.dram_out_writes);
        prop_assert_eq!(cost.macs, sim.counters.active_mac_cycles);
    }

    #[test]
    fn puf_is_a_fraction(layer in arb_layer()) {
        let cost = layer_cost(&layer, &ArchConfig::default()).unwrap();
        prop_assert!(cost.puf_eq5 > 0.0 && cost.puf_eq5 <= 1.0,
            "puf {} for {:?}", cost.puf_eq5, layer);
    }

    #[test]
    fn cycles_monotonic_in_filters(layer in arb_layer()) {
        let arch = ArchConfig::default();
        let mut bigger = layer.clone();
        bigger.k = layer.k * 2;
        let a = layer_cost(&layer, &arch).unwrap();
        let b = layer_cost(&bigger, &arch).unwrap();
        prop_assert!(b.cycles >= a.cycles);
        prop_assert!(b.dram_w_reads >= a.dram_w_reads);
        prop_assert!(b.macs >= a.macs);
    }

    #[test]
    fn cycles_linear_in_channels(layer in arb_layer()) {
        // Every dataflow repeats its whole schedule per input channel.
        let arch = ArchConfig::default();
        let mut doubled = layer.clone();
        doubled.ic = layer.ic * 2;
        let a = layer_cost(&layer, &arch).unwrap();
        let b = layer_cost(&doubled, &arch).unwrap();
        prop_assert_eq!(b.cycles, 2 * a.cycles);
        prop_assert_eq!(b.dram_in_reads, 2 * a.dram_in_reads);
        prop_assert_eq!(b.dram_w_reads, 2 * a.dram_w_reads);
    }

    #[test]
    fn partition_cycles_sum_to_layer_total(layer in arb_layer()) {
        let arch = ArchConfig::default();
        let mode = select_mode(&layer, &arch).unwrap();
        let pieces = match mode {
            Mode::Conv3x3 => pieces_3x3(),
            Mode::RowDecomposed => decompose_rows(layer.fl),
            _ => return Ok(()),
        };
        let parts = row_mode_partition_cycles(&layer, &arch, &pieces).unwrap();
        let groups = layer.k.div_ceil(arch.u) as u64;
        let cost = layer_cost(&layer, &arch).unwrap();
        prop_assert_eq!(parts.iter().sum::<u64>() * groups, cost.cycles);
    }

    #[test]
    fn active_macs_equal_shape_count_and_fit_pes(layer in arb_layer()) {
        let arch = ArchConfig::default();
        let sim = simulate_layer(&layer, &arch, None, false).unwrap();
        prop_assert_eq!(sim.counters.active_mac_cycles, non_pad_mac_count(&layer));
        prop_assert!(
            sim.counters.active_mac_cycles <= arch.total_pes() as u64 * sim.counters.cycles
        );
    }

    #[test]
    fn pruning_is_idempotent(fractions in proptest::collection::vec(1usize..=4, 16)) {
        let net = build_resnet50(false);
        let mut spec = PruneSpec::default();
        let mut fi = fractions.iter().cycle();
        for (i, layer) in net.layers.iter().enumerate() {
            if layer.name.ends_with("_a1x1") || layer.name.ends_with("_b3x3") {
                let denom = *fi.next().unwrap();
                spec.keep.insert(i, (layer.k / denom).max(1));
            }
        }
        let once = apply_channel_pruning(&net, &spec).unwrap();
        let twice = apply_channel_pruning(&once, &spec).unwrap();
        prop_assert_eq!(once.layers, twice.layers);
    }
}
