//! Closed-form performance equations for every operating mode, mode
//! selection, and per-layer / per-network cost aggregation.
//!
//! The printed equations divide filter counts by the CU count with a floor;
//! every benchmark layer has `K` divisible by `U`, and a floor would skip
//! filters otherwise, so all repetition counts here use a ceiling. `Q`, the
//! number of weight-load steps per sub-out-fmap in 3x3 mode, is `FL * IC`
//! (one filter-row load per channel).

use serde::{Deserialize, Serialize};

use crate::netmodel::{ConvLayerConfig, NetworkModel};
use crate::oracle::non_pad_mac_count;
use crate::{Error, Result};

/// Accelerator parameters. `u` regular CUs of `n` PEs each plus one final CU
/// with `last_cu_pes` PEs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub u: usize,
    pub n: usize,
    pub last_cu_pes: usize,
    pub sram_words: usize,
    /// DRAM words deliverable per cycle. The register-resident 1x1 mode
    /// needs `2n + 1` buses to overlap the next phase's weight loads with
    /// feature streaming; with fewer, the reload serializes (see
    /// [`layer_cost`]). The default models the wide-bus configuration the
    /// reported network latencies assume.
    pub read_buses: usize,
    pub word_bits: u32,
    pub acc_bits: u32,
    pub clock_hz: f64,
    pub mb_base: MbBase,
}

/// Byte base for the reported "MB" figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MbBase {
    /// 10^6 bytes.
    Decimal,
    /// 2^20 bytes.
    Binary,
}

impl MbBase {
    pub fn bytes(self) -> f64 {
        match self {
            MbBase::Decimal => 1e6,
            MbBase::Binary => (1u64 << 20) as f64,
        }
    }
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            u: 64,
            n: 3,
            last_cu_pes: 4,
            sram_words: 224,
            read_buses: 7,
            word_bits: 16,
            acc_bits: 24,
            clock_hz: 200e6,
            mb_base: MbBase::Decimal,
        }
    }
}

impl ArchConfig {
    pub fn total_pes(&self) -> usize {
        self.u * self.n + self.last_cu_pes
    }

    pub fn validate(&self) -> Result<()> {
        if self.u < 1
            || self.n < 1
            || self.last_cu_pes < 1
            || self.sram_words < 1
            || self.read_buses < 1
            || self.word_bits < 2
            || self.acc_bits < 2
        {
            return Err(Error::InvalidArch(
                "all architecture fields must be >= 1".into(),
            ));
        }
        if self.clock_hz <= 0.0 {
            return Err(Error::InvalidArch(
                "clock frequency must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Operating mode of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Conv3x3,
    Conv1x1Standard,
    Conv1x1Resident,
    RowDecomposed,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::Conv3x3 => "3x3",
            Mode::Conv1x1Standard => "1x1-std",
            Mode::Conv1x1Resident => "1x1-res",
            Mode::RowDecomposed => "row-dec",
        };
        f.write_str(s)
    }
}

/// How a layer's outputs are split so partial results fit one SRAM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partitioning {
    pub p: usize,
    /// Output rows per sub-out-fmap (row modes).
    pub rows_per_block: Option<usize>,
    /// Output features per sub-out-fmap (standard 1x1 mode).
    pub features_per_partition: Option<usize>,
    /// Weight-load steps per sub-out-fmap (row modes): `FL * IC`.
    pub q: Option<usize>,
}

pub fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Row-mode partitioning: as many whole output rows per partition as fit the
/// SRAM word count.
pub fn partitions_3x3(ol: usize, sram_words: usize) -> Result<Partitioning> {
    if ol > sram_words {
        return Err(Error::UnsupportedShape {
            mode: "3x3",
            reason: format!("one output row ({ol} words) does not fit one SRAM ({sram_words})"),
        });
    }
    let rows_per_block = (sram_words / ol).min(ol);
    Ok(Partitioning {
        p: ceil_div(ol, rows_per_block),
        rows_per_block: Some(rows_per_block),
        features_per_partition: None,
        q: None,
    })
}

/// Standard 1x1 partitioning: `total_pes` output features per partition.
pub fn partitions_1x1(ol: usize, total_pes: usize) -> Partitioning {
    Partitioning {
        p: ceil_div(ol * ol, total_pes),
        rows_per_block: None,
        features_per_partition: Some(total_pes),
        q: None,
    }
}

// ---------------------------------------------------------------------------
// Closed-form per-mode counters.
// ---------------------------------------------------------------------------

/// 3x3-mode cycles: `(3*OL^2 - 2Z*OL) * IC * ceil(K/U)`.
pub fn cycles_3x3(ol: usize, z: usize, ic: usize, k: usize, u: usize) -> u64 {
    ((3 * ol * ol - 2 * z * ol) * ic) as u64 * ceil_div(k, u) as u64
}

/// 3x3-mode input reads: `(IL + 2P - 2Z) * IL * IC * ceil(K/U)`.
/// Interior partitions re-read their two halo rows; edge partitions skip the
/// rows that fall on fmap-level padding.
pub fn dram_in_3x3(il: usize, p: usize, z: usize, ic: usize, k: usize, u: usize) -> u64 {
    ((il + 2 * p - 2 * z) * il * ic) as u64 * ceil_div(k, u) as u64
}

/// 3x3-mode weight reads: `3 * U * Q * ceil(K/U) * P` with `Q = 3 * IC`.
pub fn dram_w_3x3(ic: usize, k: usize, u: usize, p: usize) -> u64 {
    (3 * u * 3 * ic) as u64 * ceil_div(k, u) as u64 * p as u64
}

/// Output writes: the out-fmap size, `OL^2 * K`.
pub fn dram_out(ol: usize, k: usize) -> u64 {
    (ol * ol * k) as u64
}

/// Non-pad MAC count `IC * K * (FL^2*OL^2 - 2Z*(2*FL*OL - 2Z))`. Exact for
/// stride-1 layers with `Z <= 1`.
pub fn mac_count(ic: usize, k: usize, fl: usize, ol: usize, z: usize) -> u64 {
    let spatial =
        (fl * fl * ol * ol) as u64 - 2 * z as u64 * (2 * fl as u64 * ol as u64 - 2 * z as u64);
    (ic * k) as u64 * spatial
}

/// PE utilization factor per the operation-count definition.
pub fn puf(macs: u64, total_pes: usize, cycles: u64) -> f64 {
    macs as f64 / (total_pes as u64 * cycles) as f64
}

/// Closed-form 3x3 PUF: `K / ((U+1) * ceil(K/U))`.
pub fn puf_closed_3x3(k: usize, u: usize) -> f64 {
    k as f64 / ((u + 1) * ceil_div(k, u)) as f64
}

/// Closed-form standard-1x1 PUF: `U / (U+1)`.
pub fn puf_closed_1x1(u: usize) -> f64 {
    u as f64 / (u + 1) as f64
}

/// Standard-1x1 cycles: `(U+1) * IC * P * ceil(K/U)`.
pub fn cycles_1x1(u: usize, ic: usize, p: usize, k: usize) -> u64 {
    ((u + 1) * ic * p) as u64 * ceil_div(k, u) as u64
}

/// Standard-1x1 weight reads: `U * IC * P * ceil(K/U)`.
pub fn dram_w_1x1(u: usize, ic: usize, p: usize, k: usize) -> u64 {
    (u * ic * p) as u64 * ceil_div(k, u) as u64
}

/// Standard-1x1 input reads: `OL^2 * IC * ceil(K/U)`.
pub fn dram_in_1x1(ol: usize, ic: usize, k: usize, u: usize) -> u64 {
    (ol * ol * ic) as u64 * ceil_div(k, u) as u64
}

/// Resident-1x1 cycles: `U * IC * ceil(K/(3U))`.
pub fn cycles_1x1_resident(u: usize, ic: usize, k: usize) -> u64 {
    (u * ic) as u64 * ceil_div(k, 3 * u) as u64
}

/// Resident-1x1 weight reads: each weight fetched once, `K * FL^2 * IC`.
pub fn dram_w_resident(k: usize, fl: usize, ic: usize) -> u64 {
    (k * fl * fl * ic) as u64
}

/// Resident-1x1 input reads: `IL^2 * IC * ceil(K/(3U))`.
pub fn dram_in_resident(il: usize, ic: usize, k: usize, u: usize) -> u64 {
    (il * il * ic) as u64 * ceil_div(k, 3 * u) as u64
}

// ---------------------------------------------------------------------------
// Row decomposition.
// ---------------------------------------------------------------------------

/// One width-<=3 slice of a filter row, placed at `col_offset` within the
/// `FL`-wide filter plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowPiece {
    pub row: usize,
    pub col_offset: usize,
    pub width: usize,
}

/// Splits each filter row into `ceil(FL/3)` pieces of width <= 3. A 7x7
/// filter yields 21 pieces: 14 with three weights and 7 with one.
pub fn decompose_rows(fl: usize) -> Vec<RowPiece> {
    let mut pieces = Vec::new();
    for row in 0..fl {
        let mut off = 0;
        while off < fl {
            let width = (fl - off).min(3);
            pieces.push(RowPiece {
                row,
                col_offset: off,
                width,
            });
            off += width;
        }
    }
    pieces
}

/// The pieces executed by the plain 3x3 mode: one full-width piece per
/// filter row.
pub fn pieces_3x3() -> Vec<RowPiece> {
    (0..3)
        .map(|row| RowPiece {
            row,
            col_offset: 0,
            width: 3,
        })
        .collect()
}

/// Selects the operating mode for a layer.
pub fn select_mode(layer: &ConvLayerConfig, arch: &ArchConfig) -> Result<Mode> {
    match layer.fl {
        3 => Ok(Mode::Conv3x3),
        1 => {
            let ol = layer.ol();
            if ol * ol >= arch.total_pes() {
                Ok(Mode::Conv1x1Standard)
            } else {
                Ok(Mode::Conv1x1Resident)
            }
        }
        fl if fl > 3 => Ok(Mode::RowDecomposed),
        fl => Err(Error::UnsupportedShape {
            mode: "select",
            reason: format!("no dataflow for FL={fl}"),
        }),
    }
}

// ---------------------------------------------------------------------------
// Row-pass geometry, shared vocabulary for the analytical counters. The
// simulator re-derives the same quantities operationally, pass by pass.
// ---------------------------------------------------------------------------

/// Input-column interval streamed by one row pass of `piece`, clipped to the
/// feature map. Returns `None` when nothing overlaps.
pub fn piece_col_span(layer: &ConvLayerConfig, piece: &RowPiece) -> Option<(usize, usize)> {
    let ol = layer.ol();
    let lo = (piece.col_offset as isize - layer.z as isize).max(0) as usize;
    let hi_unclipped =
        (layer.s * (ol - 1) + piece.col_offset + piece.width - 1) as isize - layer.z as isize;
    if hi_unclipped < lo as isize {
        return None;
    }
    let hi = (hi_unclipped as usize).min(layer.il - 1);
    if hi < lo {
        None
    } else {
        Some((lo, hi))
    }
}

/// Input row addressed by output row `m` under filter row `j`, or `None`
/// when it falls on fmap-level padding (those passes are skipped and cost
/// zero cycles).
pub fn pass_input_row(layer: &ConvLayerConfig, m: usize, j: usize) -> Option<usize> {
    let r = (m * layer.s + j) as isize - layer.z as isize;
    if r >= 0 && (r as usize) < layer.il {
        Some(r as usize)
    } else {
        None
    }
}

/// Per-output-row useful products of one piece: `sum_n #{i : column valid}`.
pub fn piece_valid_products(layer: &ConvLayerConfig, piece: &RowPiece) -> u64 {
    let ol = layer.ol();
    let mut count = 0u64;
    for n in 0..ol {
        for i in 0..piece.width {
            let col = (n * layer.s + piece.col_offset + i) as isize - layer.z as isize;
            if col >= 0 && (col as usize) < layer.il {
                count += 1;
            }
        }
    }
    count
}

/// Splits `k` filters into groups of at most `group_size`.
pub fn filter_groups(k: usize, group_size: usize) -> Vec<usize> {
    let mut groups = Vec::new();
    let mut left = k;
    while left > 0 {
        let g = left.min(group_size);
        groups.push(g);
        left -= g;
    }
    groups
}

/// Per-partition pipeline cycles of one filter group in a row mode
/// (summed over channels and pieces). The whole-layer cycle count is this
/// vector's sum times the number of filter groups.
pub fn row_mode_partition_cycles(
    layer: &ConvLayerConfig,
    arch: &ArchConfig,
    pieces: &[RowPiece],
) -> Result<Vec<u64>> {
    let ol = layer.ol();
    let part = partitions_3x3(ol, arch.sram_words)?;
    let rows_per_block = part.rows_per_block.unwrap();
    let mut per_partition = Vec::with_capacity(part.p);
    for p in 0..part.p {
        let m0 = p * rows_per_block;
        let m1 = ((p + 1) * rows_per_block).min(ol) - 1;
        let mut cycles = 0u64;
        for piece in pieces {
            let Some((lo, hi)) = piece_col_span(layer, piece) else {
                continue;
            };
            let ncols = (hi - lo + 1) as u64;
            let valid_rows = (m0..=m1)
                .filter(|&m| pass_input_row(layer, m, piece.row).is_some())
                .count() as u64;
            cycles += valid_rows * ncols;
        }
        per_partition.push(cycles * layer.ic as u64);
    }
    Ok(per_partition)
}

fn row_mode_cost(
    layer: &ConvLayerConfig,
    arch: &ArchConfig,
    pieces: &[RowPiece],
) -> Result<RawCounters> {
    let ol = layer.ol();
    let part = partitions_3x3(ol, arch.sram_words)?;
    let rows_per_block = part.rows_per_block.unwrap();
    let n_groups = ceil_div(layer.k, arch.u) as u64;

    // Streamed column span of a fetched input row: union of the piece spans.
    let mut union_lo = usize::MAX;
    let mut union_hi = 0usize;
    for piece in pieces {
        if let Some((lo, hi)) = piece_col_span(layer, piece) {
            union_lo = union_lo.min(lo);
            union_hi = union_hi.max(hi);
        }
    }
    let row_words = if union_lo == usize::MAX {
        0
    } else {
        (union_hi - union_lo + 1) as u64
    };

    let mut cycles_per_group = 0u64;
    let mut rows_fetched = 0u64;
    let mut active_per_filter = 0u64;
    let mut row_needed = vec![false; layer.il];
    for p in 0..part.p {
        let m0 = p * rows_per_block;
        let m1 = ((p + 1) * rows_per_block).min(ol) - 1;
        row_needed.iter_mut().for_each(|v| *v = false);
        for piece in pieces {
            let Some((lo, hi)) = piece_col_span(layer, piece) else {
                continue;
            };
            let ncols = (hi - lo + 1) as u64;
            let prods = piece_valid_products(layer, piece);
            for m in m0..=m1 {
                if let Some(r) = pass_input_row(layer, m, piece.row) {
                    cycles_per_group += ncols;
                    active_per_filter += prods;
                    row_needed[r] = true;
                }
            }
        }
        rows_fetched += row_needed.iter().filter(|&&v| v).count() as u64;
    }

    // Pieces whose column span is fully clipped away are never scheduled,
    // so their weights are never loaded.
    let live_pieces = pieces
        .iter()
        .filter(|p| piece_col_span(layer, p).is_some())
        .count() as u64;

    let ic = layer.ic as u64;
    Ok(RawCounters {
        cycles: cycles_per_group * ic * n_groups,
        stall_cycles: 0,
        dram_in_reads: rows_fetched * row_words * ic * n_groups,
        // Three words per (CU, piece, channel, partition), for the CUs that
        // hold real filters.
        dram_w_reads: 3 * live_pieces * ic * part.p as u64 * layer.k as u64,
        dram_out_writes: dram_out(ol, layer.k),
        active_mac_cycles: active_per_filter * ic * layer.k as u64,
    })
}

fn standard_1x1_cost(layer: &ConvLayerConfig, arch: &ArchConfig) -> Result<RawCounters> {
    if arch.read_buses < arch.n + 1 {
        return Err(Error::UnsupportedShape {
            mode: "1x1-std",
            reason: format!(
                "standard 1x1 mode needs {} read buses (N+1), have {}",
                arch.n + 1,
                arch.read_buses
            ),
        });
    }
    let ol = layer.ol();
    let positions = (ol * ol) as u64;
    let part = partitions_1x1(ol, arch.total_pes());
    let groups = filter_groups(layer.k, arch.u);
    let ic = layer.ic as u64;
    let p = part.p as u64;

    // One weight streamed per cycle per group, plus one stall when the last
    // CU's feature load consumes every read bus.
    let cycles: u64 = groups.iter().map(|&g| (g as u64 + 1) * ic * p).sum();
    let stalls = groups.len() as u64 * ic * p;
    let dram_w: u64 = groups.iter().map(|&g| g as u64 * ic * p).sum();
    let dram_in = positions * ic * groups.len() as u64;
    let valid = valid_positions_1x1(layer);
    Ok(RawCounters {
        cycles,
        stall_cycles: stalls,
        dram_in_reads: dram_in,
        dram_w_reads: dram_w,
        dram_out_writes: dram_out(ol, layer.k),
        active_mac_cycles: layer.k as u64 * ic * valid,
    })
}

/// Output positions of a 1x1 layer whose (single) input coordinate is a real
/// feature rather than padding.
pub fn valid_positions_1x1(layer: &ConvLayerConfig) -> u64 {
    let ol = layer.ol();
    let valid_1d = (0..ol)
        .filter(|&m| {
            let r = (m * layer.s) as isize - layer.z as isize;
            r >= 0 && (r as usize) < layer.il
        })
        .count() as u64;
    valid_1d * valid_1d
}

/// Per-channel phase cycles of one resident-mode filter group.
///
/// With `2n + 1` or more read buses the phase is weight-load bound:
/// `ceil(K_g / N)` cycles (U for a full group, matching the closed form),
/// floored by PE throughput `ceil(K_g * positions / total_pes)`. With fewer
/// buses the next group's weights cannot ride spare buses during streaming,
/// so the reload serializes after the `OL^2` feature stream.
pub fn resident_phase(arch: &ArchConfig, group_filters: usize, positions: u64) -> (u64, u64) {
    let load = ceil_div(group_filters, arch.n) as u64;
    if arch.read_buses > 2 * arch.n {
        let throughput = (group_filters as u64 * positions).div_ceil(arch.total_pes() as u64);
        let phase = load.max(throughput);
        (phase, phase.saturating_sub(positions.min(phase)))
    } else {
        let reload =
            (group_filters as u64).div_ceil(arch.read_buses.saturating_sub(1).max(1) as u64);
        (positions + reload, reload)
    }
}

fn resident_1x1_cost(layer: &ConvLayerConfig, arch: &ArchConfig) -> Result<RawCounters> {
    let ol = layer.ol();
    let positions = (ol * ol) as u64;
    let groups = filter_groups(layer.k, arch.n * arch.u);
    let ic = layer.ic as u64;

    let mut cycles = 0u64;
    let mut stalls = 0u64;
    for &g in &groups {
        let (phase, stall) = resident_phase(arch, g, positions);
        cycles += phase * ic;
        stalls += stall * ic;
    }
    let valid = valid_positions_1x1(layer);
    Ok(RawCounters {
        cycles,
        stall_cycles: stalls,
        dram_in_reads: positions * ic * groups.len() as u64,
        dram_w_reads: layer.k as u64 * ic,
        dram_out_writes: dram_out(ol, layer.k),
        active_mac_cycles: layer.k as u64 * ic * valid,
    })
}

/// Raw shape-determined counters shared by the cost model and (as exact
/// targets) the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RawCounters {
    pub cycles: u64,
    pub stall_cycles: u64,
    pub dram_in_reads: u64,
    pub dram_w_reads: u64,
    pub dram_out_writes: u64,
    pub active_mac_cycles: u64,
}

/// Analytical counters for one layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCost {
    pub name: String,
    pub mode: Mode,
    pub cycles: u64,
    pub stall_cycles: u64,
    pub dram_in_reads: u64,
    pub dram_w_reads: u64,
    pub dram_out_writes: u64,
    pub macs: u64,
    pub puf_eq5: f64,
    pub puf_closed: Option<f64>,
    pub latency_s: f64,
    pub dram_bytes: u64,
    pub dram_mb: f64,
}

pub fn layer_cost(layer: &ConvLayerConfig, arch: &ArchConfig) -> Result<LayerCost> {
    layer.validate()?;
    arch.validate()?;
    let mode = select_mode(layer, arch)?;
    let raw = match mode {
        Mode::Conv3x3 => row_mode_cost(layer, arch, &pieces_3x3())?,
        Mode::RowDecomposed => row_mode_cost(layer, arch, &decompose_rows(layer.fl))?,
        Mode::Conv1x1Standard => standard_1x1_cost(layer, arch)?,
        Mode::Conv1x1Resident => resident_1x1_cost(layer, arch)?,
    };

    let macs = if layer.s == 1 && layer.z <= 1 {
        mac_count(layer.ic, layer.k, layer.fl, layer.ol(), layer.z)
    } else {
        non_pad_mac_count(layer)
    };
    debug_assert_eq!(macs, raw.active_mac_cycles, "layer {}", layer.name);

    let puf_closed = match mode {
        Mode::Conv3x3 => Some(puf_closed_3x3(layer.k, arch.u)),
        Mode::Conv1x1Standard => Some(puf_closed_1x1(arch.u)),
        _ => None,
    };
    let dram_total = raw.dram_in_reads + raw.dram_w_reads + raw.dram_out_writes;
    let dram_bytes = dram_total * arch.word_bits as u64 / 8;
    Ok(LayerCost {
        name: layer.name.clone(),
        mode,
        cycles: raw.cycles,
        stall_cycles: raw.stall_cycles,
        dram_in_reads: raw.dram_in_reads,
        dram_w_reads: raw.dram_w_reads,
        dram_out_writes: raw.dram_out_writes,
        macs,
        puf_eq5: puf(macs, arch.total_pes(), raw.cycles),
        puf_closed,
        latency_s: raw.cycles as f64 / arch.clock_hz,
        dram_bytes,
        dram_mb: dram_bytes as f64 / arch.mb_base.bytes(),
    })
}

/// Column totals across a network's layers.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CostTotals {
    pub cycles: u64,
    pub stall_cycles: u64,
    pub dram_in_reads: u64,
    pub dram_w_reads: u64,
    pub dram_out_writes: u64,
    pub macs: u64,
    pub latency_s: f64,
    pub dram_bytes: u64,
    pub dram_mb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkCost {
    pub layers: Vec<LayerCost>,
    pub totals: CostTotals,
}

pub fn network_cost(net: &NetworkModel, arch: &ArchConfig) -> Result<NetworkCost> {
    let layers: Vec<LayerCost> = net
        .layers
        .iter()
        .map(|l| layer_cost(l, arch))
        .collect::<Result<_>>()?;
    let mut totals = CostTotals::default();
    for l in &layers {
        totals.cycles += l.cycles;
        totals.stall_cycles += l.stall_cycles;
        totals.dram_in_reads += l.dram_in_reads;
        totals.dram_w_reads += l.dram_w_reads;
        totals.dram_out_writes += l.dram_out_writes;
        totals.macs += l.macs;
        totals.dram_bytes += l.dram_bytes;
    }
    totals.latency_s = totals.cycles as f64 / arch.clock_hz;
    totals.dram_mb = totals.dram_bytes as f64 / arch.mb_base.bytes();
    Ok(NetworkCost { layers, totals })
}
