//! Report assembly and deterministic CSV / JSON emission.
//!
//! Floating-point columns are printed with fixed six-decimal precision so
//! repeated runs produce byte-identical files.

use serde::Serialize;

use crate::costmodel::{puf, ArchConfig, NetworkCost};
use crate::simulator::SimOutcome;

/// One layer's worth of report columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub layer: String,
    pub mode: String,
    pub cycles: u64,
    pub stall_cycles: u64,
    pub dram_in_reads: u64,
    pub dram_w_reads: u64,
    pub dram_out_writes: u64,
    pub dram_mb: f64,
    pub macs: u64,
    pub puf_eq5: f64,
    pub puf_closed: Option<f64>,
    pub latency_ms: f64,
}

/// Aggregates across all rows. The aggregate PUF is recomputed from the
/// total MACs and cycles, not averaged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportTotals {
    pub cycles: u64,
    pub stall_cycles: u64,
    pub dram_in_reads: u64,
    pub dram_w_reads: u64,
    pub dram_out_writes: u64,
    pub dram_mb: f64,
    pub macs: u64,
    pub puf_eq5: f64,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub network: String,
    pub rows: Vec<ReportRow>,
    pub totals: ReportTotals,
}

impl RunReport {
    /// Builds a report from analytical layer costs.
    pub fn from_cost(network: &str, arch: &ArchConfig, cost: &NetworkCost) -> RunReport {
        let rows = cost
            .layers
            .iter()
            .map(|l| ReportRow {
                layer: l.name.clone(),
                mode: l.mode.to_string(),
                cycles: l.cycles,
                stall_cycles: l.stall_cycles,
                dram_in_reads: l.dram_in_reads,
                dram_w_reads: l.dram_w_reads,
                dram_out_writes: l.dram_out_writes,
                dram_mb: l.dram_mb,
                macs: l.macs,
                puf_eq5: l.puf_eq5,
                puf_closed: l.puf_closed,
                latency_ms: l.latency_s * 1e3,
            })
            .collect();
        Self::finish(network, arch, rows)
    }

    /// Builds a report from measured simulation outcomes.
    pub fn from_sim(
        network: &str,
        arch: &ArchConfig,
        layers: &[(String, SimOutcome)],
    ) -> RunReport {
        let rows = layers
            .iter()
            .map(|(name, o)| {
                let c = &o.counters;
                let words = c.dram_in_reads + c.dram_w_reads + c.dram_out_writes;
                let bytes = words * arch.word_bits as u64 / 8;
                ReportRow {
                    layer: name.clone(),
                    mode: o.mode.to_string(),
                    cycles: c.cycles,
                    stall_cycles: c.stall_cycles,
                    dram_in_reads: c.dram_in_reads,
                    dram_w_reads: c.dram_w_reads,
                    dram_out_writes: c.dram_out_writes,
                    dram_mb: bytes as f64 / arch.mb_base.bytes(),
                    macs: c.active_mac_cycles,
                    puf_eq5: puf(c.active_mac_cycles, arch.total_pes(), c.cycles),
                    puf_closed: None,
                    latency_ms: c.cycles as f64 / arch.clock_hz * 1e3,
                }
            })
            .collect();
        Self::finish(network, arch, rows)
    }

    fn finish(network: &str, arch: &ArchConfig, rows: Vec<ReportRow>) -> RunReport {
        let mut t = ReportTotals {
            cycles: 0,
            stall_cycles: 0,
            dram_in_reads: 0,
            dram_w_reads: 0,
            dram_out_writes: 0,
            dram_mb: 0.0,
            macs: 0,
            puf_eq5: 0.0,
            latency_ms: 0.0,
        };
        for r in &rows {
            t.cycles += r.cycles;
            t.stall_cycles += r.stall_cycles;
            t.dram_in_reads += r.dram_in_reads;
            t.dram_w_reads += r.dram_w_reads;
            t.dram_out_writes += r.dram_out_writes;
            t.dram_mb += r.dram_mb;
            t.macs += r.macs;
        }
        t.puf_eq5 = if t.cycles > 0 {
            puf(t.macs, arch.total_pes(), t.cycles)
        } else {
            0.0
        };
        t.latency_ms = t.cycles as f64 / arch.clock_hz * 1e3;
        RunReport {
            network: network.to_string(),
            rows,
            totals: t,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "layer,mode,cycles,stall_cycles,dram_in_reads,dram_w_reads,dram_out_writes,\
             dram_mb,macs,puf_eq5,puf_closed,latency_ms\n",
        );
        for r in &self.rows {
            let closed = r.puf_closed.map(fmt_f).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.layer,
                r.mode,
                r.cycles,
                r.stall_cycles,
                r.dram_in_reads,
                r.dram_w_reads,
                r.dram_out_writes,
                fmt_f(r.dram_mb),
                r.macs,
                fmt_f(r.puf_eq5),
                closed,
                fmt_f(r.latency_ms),
            ));
        }
        let t = &self.totals;
        out.push_str(&format!(
            "TOTAL,-,{},{},{},{},{},{},{},{},,{}\n",
            t.cycles,
            t.stall_cycles,
            t.dram_in_reads,
            t.dram_w_reads,
            t.dram_out_writes,
            fmt_f(t.dram_mb),
            t.macs,
            fmt_f(t.puf_eq5),
            fmt_f(t.latency_ms),
        ));
        out
    }

    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:.6}")
}
