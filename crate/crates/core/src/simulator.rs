//! Pass-level execution of the four dataflows.
//!
//! The simulator walks the same loop nest the hardware sequencer would —
//! filter group, output partition, input channel, row pass — counting cycles
//! and DRAM words as they happen rather than from closed forms. With tensor
//! data attached it also performs the arithmetic of every pass, yielding
//! outputs that must match the direct-convolution reference bit for bit.
//!
//! Filter bias is a reference-only concept and never enters the dataflows.

use crate::costmodel::{
    decompose_rows, dram_out, filter_groups, partitions_1x1, partitions_3x3, pass_input_row,
    piece_col_span, pieces_3x3, resident_phase, select_mode, ArchConfig, Mode, RowPiece,
};
use crate::netmodel::ConvLayerConfig;
use crate::tensor::{FilterBank, Tensor3};
use crate::{Error, Result};

/// Counters measured during simulation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimCounters {
    pub cycles: u64,
    pub stall_cycles: u64,
    /// Useful multiply-accumulates actually issued; pad positions and idle
    /// PEs do not count.
    pub active_mac_cycles: u64,
    pub dram_in_reads: u64,
    pub dram_w_reads: u64,
    pub dram_out_writes: u64,
    /// Output positions whose running partial sum left the accumulator's
    /// two's-complement range at some point (functional runs only).
    pub acc_overflows: u64,
}

impl SimCounters {
    pub fn merge(&mut self, other: &SimCounters) {
        self.cycles += other.cycles;
        self.stall_cycles += other.stall_cycles;
        self.active_mac_cycles += other.active_mac_cycles;
        self.dram_in_reads += other.dram_in_reads;
        self.dram_w_reads += other.dram_w_reads;
        self.dram_out_writes += other.dram_out_writes;
        self.acc_overflows += other.acc_overflows;
    }
}

/// One scheduled unit of work: a row pass in the row modes, a weight-stream
/// or feature-stream phase in the 1x1 modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PassRecord {
    pub group: usize,
    pub partition: usize,
    pub channel: usize,
    /// Filter row of the piece (row modes; 0 for 1x1 phases).
    pub piece_row: usize,
    pub piece_col_offset: usize,
    /// Input row streamed (row modes; 0 for 1x1 phases).
    pub input_row: usize,
    pub cycles: u64,
}

/// Result of simulating one layer.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub mode: Mode,
    pub counters: SimCounters,
    /// Present when tensor data was supplied.
    pub output: Option<Tensor3>,
    /// Present when tracing was requested.
    pub trace: Vec<PassRecord>,
}

struct SimState<'a> {
    layer: &'a ConvLayerConfig,
    arch: &'a ArchConfig,
    data: Option<(&'a Tensor3, &'a FilterBank)>,
    counters: SimCounters,
    psum: Vec<i64>,
    overflowed: Vec<bool>,
    trace: Option<Vec<PassRecord>>,
}

impl<'a> SimState<'a> {
    fn new(
        layer: &'a ConvLayerConfig,
        arch: &'a ArchConfig,
        data: Option<(&'a Tensor3, &'a FilterBank)>,
        trace: bool,
    ) -> Result<Self> {
        if let Some((input, filters)) = data {
            if input.channels != layer.ic || input.rows != layer.il || input.cols != layer.il {
                return Err(Error::ShapeMismatch(format!(
                    "input tensor does not match layer {}",
                    layer.name
                )));
            }
            if filters.filters != layer.k || filters.channels != layer.ic || filters.fl != layer.fl
            {
                return Err(Error::ShapeMismatch(format!(
                    "filter bank does not match layer {}",
                    layer.name
                )));
            }
        }
        let ol = layer.ol();
        let len = if data.is_some() { layer.k * ol * ol } else { 0 };
        Ok(SimState {
            layer,
            arch,
            data,
            counters: SimCounters::default(),
            psum: vec![0; len],
            overflowed: vec![false; len],
            trace: trace.then(Vec::new),
        })
    }

    #[inline]
    fn accumulate(&mut self, k: usize, m: usize, n: usize, product: i64) {
        let ol = self.layer.ol();
        let idx = (k * ol + m) * ol + n;
        self.psum[idx] += product;
        let half = 1i64 << (self.arch.acc_bits - 1);
        if (self.psum[idx] < -half || self.psum[idx] >= half) && !self.overflowed[idx] {
            self.overflowed[idx] = true;
            self.counters.acc_overflows += 1;
        }
    }

    fn record(&mut self, rec: PassRecord) {
        if let Some(t) = &mut self.trace {
            t.push(rec);
        }
    }

    fn finish(mut self, mode: Mode) -> SimOutcome {
        let ol = self.layer.ol();
        self.counters.dram_out_writes = dram_out(ol, self.layer.k);
        let output = self.data.map(|_| {
            Tensor3::from_values(self.layer.k, ol, ol, std::mem::take(&mut self.psum)).unwrap()
        });
        SimOutcome {
            mode,
            counters: self.counters,
            output,
            trace: self.trace.unwrap_or_default(),
        }
    }
}

/// Row-wise dataflow: 3x3 mode when `pieces` is the three full filter rows,
/// row-decomposed mode when the pieces come from [`decompose_rows`].
fn run_row_mode(state: &mut SimState<'_>, pieces: &[RowPiece]) -> Result<()> {
    let layer = state.layer;
    let arch = state.arch;
    let ol = layer.ol();
    let part = partitions_3x3(ol, arch.sram_words)?;
    let rows_per_block = part.rows_per_block.unwrap();
    let groups = filter_groups(layer.k, arch.u);

    // Column span of a fetched input row: the union over pieces, streamed
    // once and replayed to later passes through the feedback path.
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

    let mut f0 = 0;
    for (g, &kg) in groups.iter().enumerate() {
        for p in 0..part.p {
            let m0 = p * rows_per_block;
            let m1 = ((p + 1) * rows_per_block).min(ol) - 1;
            for c in 0..layer.ic {
                let mut fetched = vec![false; layer.il];
                for piece in pieces {
                    let Some((lo, hi)) = piece_col_span(layer, piece) else {
                        continue;
                    };
                    let ncols = (hi - lo + 1) as u64;
                    // One filter-row load per CU holding a real filter.
                    state.counters.dram_w_reads += 3 * kg as u64;
                    for m in m0..=m1 {
                        let Some(r) = pass_input_row(layer, m, piece.row) else {
                            continue;
                        };
                        if !fetched[r] {
                            fetched[r] = true;
                            state.counters.dram_in_reads += row_words;
                        }
                        state.counters.cycles += ncols;
                        state.record(PassRecord {
                            group: g,
                            partition: p,
                            channel: c,
                            piece_row: piece.row,
                            piece_col_offset: piece.col_offset,
                            input_row: r,
                            cycles: ncols,
                        });
                        for n in 0..ol {
                            for i in 0..piece.width {
                                let col = (n * layer.s + piece.col_offset + i) as isize
                                    - layer.z as isize;
                                if col < 0 || col as usize >= layer.il {
                                    continue;
                                }
                                state.counters.active_mac_cycles += kg as u64;
                                if let Some((input, filters)) = state.data {
                                    let x = input.get(c, r, col as usize);
                                    for f in f0..f0 + kg {
                                        let w = filters.get(f, c, piece.row, piece.col_offset + i);
                                        state.accumulate(f, m, n, x * w);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        f0 += kg;
    }
    Ok(())
}

/// Standard 1x1 dataflow: output features resident in PEs, one weight
/// streamed per cycle, one stall per group while the last CU's features
/// monopolize the read buses.
fn run_1x1_standard(state: &mut SimState<'_>) -> Result<()> {
    let layer = state.layer;
    let arch = state.arch;
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
    let positions = ol * ol;
    let part = partitions_1x1(ol, arch.total_pes());
    let groups = filter_groups(layer.k, arch.u);

    let mut f0 = 0;
    for (g, &kg) in groups.iter().enumerate() {
        for p in 0..part.p {
            let i0 = p * arch.total_pes();
            let i1 = ((p + 1) * arch.total_pes()).min(positions);
            for c in 0..layer.ic {
                state.counters.dram_in_reads += (i1 - i0) as u64;
                state.counters.dram_w_reads += kg as u64;
                state.counters.cycles += kg as u64 + 1;
                state.counters.stall_cycles += 1;
                state.record(PassRecord {
                    group: g,
                    partition: p,
                    channel: c,
                    piece_row: 0,
                    piece_col_offset: 0,
                    input_row: 0,
                    cycles: kg as u64 + 1,
                });
                for idx in i0..i1 {
                    let (m, n) = (idx / ol, idx % ol);
                    let r = (m * layer.s) as isize - layer.z as isize;
                    let col = (n * layer.s) as isize - layer.z as isize;
                    if r < 0 || col < 0 || r as usize >= layer.il || col as usize >= layer.il {
                        continue;
                    }
                    state.counters.active_mac_cycles += kg as u64;
                    if let Some((input, filters)) = state.data {
                        let x = input.get(c, r as usize, col as usize);
                        for f in f0..f0 + kg {
                            state.accumulate(f, m, n, x * filters.get(f, c, 0, 0));
                        }
                    }
                }
            }
        }
        f0 += kg;
    }
    Ok(())
}

/// Register-resident 1x1 dataflow: up to `3U` filter weights parked in the
/// PEs, the whole (tiny) feature map streamed past them per channel.
fn run_1x1_resident(state: &mut SimState<'_>) -> Result<()> {
    let layer = state.layer;
    let arch = state.arch;
    let ol = layer.ol();
    let positions = (ol * ol) as u64;
    let groups = filter_groups(layer.k, arch.n * arch.u);

    let mut f0 = 0;
    for (g, &kg) in groups.iter().enumerate() {
        for c in 0..layer.ic {
            let (phase, stall) = resident_phase(arch, kg, positions);
            state.counters.cycles += phase;
            state.counters.stall_cycles += stall;
            state.counters.dram_in_reads += positions;
            state.counters.dram_w_reads += kg as u64;
            state.record(PassRecord {
                group: g,
                partition: 0,
                channel: c,
                piece_row: 0,
                piece_col_offset: 0,
                input_row: 0,
                cycles: phase,
            });
            for m in 0..ol {
                for n in 0..ol {
                    let r = (m * layer.s) as isize - layer.z as isize;
                    let col = (n * layer.s) as isize - layer.z as isize;
                    if r < 0 || col < 0 || r as usize >= layer.il || col as usize >= layer.il {
                        continue;
                    }
                    state.counters.active_mac_cycles += kg as u64;
                    if let Some((input, filters)) = state.data {
                        let x = input.get(c, r as usize, col as usize);
                        for f in f0..f0 + kg {
                            state.accumulate(f, m, n, x * filters.get(f, c, 0, 0));
                        }
                    }
                }
            }
        }
        f0 += kg;
    }
    Ok(())
}

/// Simulates one layer. Supplying `data` enables functional execution;
/// `trace` collects one [`PassRecord`] per scheduled pass.
pub fn simulate_layer(
    layer: &ConvLayerConfig,
    arch: &ArchConfig,
    data: Option<(&Tensor3, &FilterBank)>,
    trace: bool,
) -> Result<SimOutcome> {
    let mode = select_mode(layer, arch)?;
    simulate_layer_with_mode(layer, arch, mode, data, trace)
}

/// Simulates one layer under an explicitly chosen mode, bypassing
/// [`select_mode`]. Both 1x1 dataflows accept any FL=1 layer, which makes
/// them directly comparable.
pub fn simulate_layer_with_mode(
    layer: &ConvLayerConfig,
    arch: &ArchConfig,
    mode: Mode,
    data: Option<(&Tensor3, &FilterBank)>,
    trace: bool,
) -> Result<SimOutcome> {
    layer.validate()?;
    arch.validate()?;
    let compatible = match mode {
        Mode::Conv3x3 => layer.fl == 3,
        Mode::RowDecomposed => layer.fl >= 3,
        Mode::Conv1x1Standard | Mode::Conv1x1Resident => layer.fl == 1,
    };
    if !compatible {
        return Err(Error::UnsupportedShape {
            mode: "forced",
            reason: format!("mode {mode} cannot run an FL={} layer", layer.fl),
        });
    }
    let mut state = SimState::new(layer, arch, data, trace)?;
    match mode {
        Mode::Conv3x3 => run_row_mode(&mut state, &pieces_3x3())?,
        Mode::RowDecomposed => run_row_mode(&mut state, &decompose_rows(layer.fl))?,
        Mode::Conv1x1Standard => run_1x1_standard(&mut state)?,
        Mode::Conv1x1Resident => run_1x1_resident(&mut state)?,
    }
    Ok(state.finish(mode))
}

/// Simulates every layer of a network (counters only) and returns the
/// per-layer outcomes plus the merged totals.
pub fn simulate_network(
    net: &crate::netmodel::NetworkModel,
    arch: &ArchConfig,
) -> Result<(Vec<(String, SimOutcome)>, SimCounters)> {
    let mut out = Vec::with_capacity(net.layers.len());
    let mut totals = SimCounters::default();
    for layer in &net.layers {
        let res = simulate_layer(layer, arch, None, false)?;
        totals.merge(&res.counters);
        out.push((layer.name.clone(), res));
    }
    Ok((out, totals))
}
