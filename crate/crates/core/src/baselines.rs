//! Roofline and ECM estimates used as comparison models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hw::{HardwareDescriptor, OverlapHypothesis};
use crate::kernel::{self, KernelSpec};

/// FLOPs per byte of kernel-level traffic (both arrays read and written).
pub fn arithmetic_intensity(spec: &KernelSpec) -> f64 {
    let one = KernelSpec { elements: 1, ..*spec };
    kernel::flops(&one) as f64 / kernel::data_footprint_bytes(&one).traffic_bytes as f64
}

/// `min(peak, bandwidth * ai)`.
pub fn roofline_gflops(ai: f64, peak_gflops: f64, mem_bw_gbs: f64) -> f64 {
    peak_gflops.min(mem_bw_gbs * ai)
}

/// Roofline for one core of `hw`, using the memory level's per-core read bandwidth.
pub fn roofline_for(spec: &KernelSpec, hw: &HardwareDescriptor, active_cores: u32) -> Option<f64> {
    let (bw, _) = hw.per_core_bandwidth("Mem", active_cores)?;
    Some(roofline_gflops(arithmetic_intensity(spec), hw.peak_gflops_per_core(), bw))
}

/// Cycle inputs of the ECM model for `work_flops` floating-point operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcmInputs {
    pub t_c_ol: f64,
    pub t_l1_ld: f64,
    pub t_l1_st: f64,
    pub t_l2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_l3_rd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_l3_wr: Option<f64>,
    pub t_mem: f64,
    pub work_flops: f64,
}

impl EcmInputs {
    pub fn validate(&self, hyp: OverlapHypothesis) -> Result<()> {
        let times = [
            ("t_c_ol", Some(self.t_c_ol)),
            ("t_l1_ld", Some(self.t_l1_ld)),
            ("t_l1_st", Some(self.t_l1_st)),
            ("t_l2", Some(self.t_l2)),
            ("t_l3_rd", self.t_l3_rd),
            ("t_l3_wr", self.t_l3_wr),
            ("t_mem", Some(self.t_mem)),
        ];
        for (name, v) in times {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
                }
            }
        }
        if self.work_flops.is_nan() || self.work_flops <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "work_flops must be > 0, got {}",
                self.work_flops
            )));
        }
        match hyp {
            OverlapHypothesis::CascadeLakeStyle => {
                if self.t_l3_rd.is_none() {
                    return Err(Error::MissingEcmField("t_l3_rd"));
                }
                if self.t_l3_wr.is_none() {
                    return Err(Error::MissingEcmField("t_l3_wr"));
                }
            }
            OverlapHypothesis::A64fxStyle => {
                if self.t_l3_rd.is_some() || self.t_l3_wr.is_some() {
                    return Err(Error::InvalidArgument(
                        "L3 cycles are only meaningful for CASCADE_LAKE_STYLE".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Non-overlapping data-transfer time under the machine's overlap hypothesis.
pub fn ecm_transfer_time(inp: &EcmInputs, hyp: OverlapHypothesis) -> Result<f64> {
    inp.validate(hyp)?;
    Ok(match hyp {
        OverlapHypothesis::A64fxStyle => (inp.t_l1_ld + inp.t_l1_st.max(inp.t_l2)).max(inp.t_mem),
        OverlapHypothesis::CascadeLakeStyle => {
            let l3 = inp.t_l3_rd.unwrap_or(0.0).max(inp.t_l3_wr.unwrap_or(0.0));
            inp.t_l1_ld.max(inp.t_l1_st) + inp.t_l2 + l3 + inp.t_mem
        }
    })
}

/// Total ECM cycles: in-core overlapping time or transfer time, whichever dominates.
pub fn ecm_cycles(inp: &EcmInputs, hyp: OverlapHypothesis) -> Result<f64> {
    Ok(inp.t_c_ol.max(ecm_transfer_time(inp, hyp)?))
}

pub fn ecm_gflops(inp: &EcmInputs, hw: &HardwareDescriptor) -> Result<f64> {
    let t = ecm_cycles(inp, hw.overlap_hypothesis)?;
    if t == 0.0 {
        return Err(Error::InvalidArgument("ECM time is zero".into()));
    }
    Ok(inp.work_flops / t * hw.frequency_ghz)
}

/// Cycles to move `bytes` at `gbs` GB/s on a core clocked at `ghz`.
fn transfer_cycles(bytes: f64, gbs: f64, ghz: f64) -> f64 {
    bytes / (gbs / ghz)
}

/// Transfer cycles derived from the descriptor's per-core bandwidths.
///
/// Reads are `q_in` and `q_tmp`, writes their updated values; each level moves
/// the full kernel traffic. In-core time is the FMA issue time at full
/// throughput, a stand-in for a static analyzer's estimate.
pub fn derive_ecm_inputs(spec: &KernelSpec, hw: &HardwareDescriptor, active_cores: u32) -> Result<EcmInputs> {
    let fp = kernel::data_footprint_bytes(spec);
    let total = fp.traffic_bytes as f64 * spec.elements as f64;
    let (reads, writes) = (total / 2.0, total / 2.0);
    let ghz = hw.frequency_ghz;
    let level = |name: &str| {
        hw.per_core_bandwidth(name, active_cores).ok_or_else(|| {
            Error::InvalidArgument(format!("{} has no bandwidth for level {name}", hw.name))
        })
    };
    let (l1_rd, l1_wr) = level("L1")?;
    let (l2_rd, l2_wr) = level("L2")?;
    let (mem_rd, mem_wr) = level("Mem")?;
    let (t_l3_rd, t_l3_wr) = match hw.overlap_hypothesis {
        OverlapHypothesis::CascadeLakeStyle => {
            let (rd, wr) = level("L3")?;
            (
                Some(transfer_cycles(reads, rd, ghz)),
                Some(transfer_cycles(writes, wr, ghz)),
            )
        }
        OverlapHypothesis::A64fxStyle => (None, None),
    };
    Ok(EcmInputs {
        t_c_ol: kernel::fma_count(spec, hw) as f64 * hw.fma_throughput_cycles,
        t_l1_ld: transfer_cycles(reads, l1_rd, ghz),
        t_l1_st: transfer_cycles(writes, l1_wr, ghz),
        t_l2: transfer_cycles(reads, l2_rd, ghz) + transfer_cycles(writes, l2_wr, ghz),
        t_l3_rd,
        t_l3_wr,
        t_mem: transfer_cycles(reads, mem_rd, ghz) + transfer_cycles(writes, mem_wr, ghz),
        work_flops: kernel::flops(spec) as f64,
    })
}

/// One entry of an ECM inputs file. `hw` and `p` are optional keys that bind
/// the inputs to a machine and polynomial order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hw: Option<String>,
    #[serde(default, rename = "P", alias = "p", skip_serializing_if = "Option::is_none")]
    pub p: Option<u32>,
    #[serde(flatten)]
    pub inputs: EcmInputs,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EcmTable {
    pub entries: Vec<EcmEntry>,
}

impl EcmTable {
    /// Accepts a single JSON object or an array of objects.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let entries = match value {
            serde_json::Value::Array(_) => serde_json::from_value(value)?,
            other => vec![serde_json::from_value(other)?],
        };
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.entries)?)
    }

    /// Most specific match: exact (hw, P), then hw only, then P only, then unbound.
    pub fn lookup(&self, hw: &str, p: u32) -> Option<&EcmInputs> {
        let score = |e: &EcmEntry| -> Option<u8> {
            let hw_ok = e.hw.as_deref().map(|h| h == hw);
            let p_ok = e.p.map(|q| q == p);
            match (hw_ok, p_ok) {
                (Some(false), _) | (_, Some(false)) => None,
                (Some(true), Some(true)) => Some(3),
                (Some(true), None) => Some(2),
                (None, Some(true)) => Some(1),
                (None, None) => Some(0),
            }
        };
        self.entries
            .iter()
            .filter_map(|e| score(e).map(|s| (s, e)))
            .max_by_key(|(s, _)| *s)
            .map(|(_, e)| &e.inputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hw::preset;

    fn a64(ld: f64, st: f64, l2: f64, mem: f64) -> EcmInputs {
        EcmInputs {
            t_c_ol: 0.0,
            t_l1_ld: ld,
            t_l1_st: st,
            t_l2: l2,
            t_l3_rd: None,
            t_l3_wr: None,
            t_mem: mem,
            work_flops: 1.0,
        }
    }

    #[test]
    fn arithmetic_intensity_values() {
        assert_eq!(arithmetic_intensity(&KernelSpec::new(7)), 1.5);
        let bf = 1.0 / arithmetic_intensity(&KernelSpec::new(7));
        assert!((0.5..=0.7).contains(&bf));
        let one = KernelSpec::from_np(1).with_directions(1);
        assert_eq!(arithmetic_intensity(&one), 0.0625);
        // Independent of the element count.
        assert_eq!(arithmetic_intensity(&KernelSpec::new(7).with_elements(100)), 1.5);
    }

    #[test]
    fn roofline_branches() {
        let peak = preset("a64fx").unwrap().peak_gflops_per_core();
        assert!((peak - 70.4).abs() < 1e-12);
        assert_eq!(roofline_gflops(1.5, peak, 10.0), 15.0);
        assert_eq!(roofline_gflops(1e12, peak, 10.0), peak);
        assert_eq!(roofline_gflops(0.0, peak, 10.0), 0.0);
    }

    #[test]
    fn a64fx_overlap() {
        let hyp = OverlapHypothesis::A64fxStyle;
        assert_eq!(ecm_transfer_time(&a64(10.0, 4.0, 6.0, 12.0), hyp).unwrap(), 16.0);
        assert_eq!(ecm_transfer_time(&a64(10.0, 8.0, 6.0, 30.0), hyp).unwrap(), 30.0);
    }

    #[test]
    fn cascade_lake_overlap() {
        let inp = EcmInputs {
            t_l3_rd: Some(5.0),
            t_l3_wr: Some(3.0),
            ..a64(10.0, 4.0, 6.0, 12.0)
        };
        let t = ecm_transfer_time(&inp, OverlapHypothesis::CascadeLakeStyle).unwrap();
        assert_eq!(t, 33.0);
    }

    #[test]
    fn missing_l3_is_an_error() {
        let err = ecm_transfer_time(&a64(1.0, 1.0, 1.0, 1.0), OverlapHypothesis::CascadeLakeStyle);
        assert!(matches!(err, Err(Error::MissingEcmField("t_l3_rd"))));
    }

    #[test]
    fn ecm_gflops_branches() {
        let hw = preset("a64fx").unwrap();
        let compute = EcmInputs {
            t_c_ol: 13_824.0,
            work_flops: 24_576.0,
            ..a64(1.0, 1.0, 1.0, 1.0)
        };
        let g = ecm_gflops(&compute, &hw).unwrap();
        assert!((g - 24_576.0 * 2.2 / 13_824.0).abs() < 1e-12);
        assert!((g - 3.91).abs() < 0.005);

        let transfer = EcmInputs {
            t_c_ol: 1.0,
            work_flops: 100.0,
            ..a64(10.0, 4.0, 6.0, 50.0)
        };
        assert!((ecm_gflops(&transfer, &hw).unwrap() - 100.0 / 50.0 * 2.2).abs() < 1e-12);

        let zero = EcmInputs {
            work_flops: 1.0,
            ..a64(0.0, 0.0, 0.0, 0.0)
        };
        assert!(ecm_gflops(&zero, &hw).is_err());
    }

    #[test]
    fn derived_inputs_follow_hypothesis() {
        let spec = KernelSpec::new(7);
        let a = derive_ecm_inputs(&spec, &preset("a64fx").unwrap(), 48).unwrap();
        assert!(a.t_l3_rd.is_none());
        assert_eq!(a.t_c_ol, 1536.0 * 0.5);
        // 8 KiB read at 281.6 GB/s per core and 2.2 GHz = 128 B/cycle.
        assert!((a.t_l1_ld - 8192.0 / 128.0).abs() < 1e-9);
        let x = derive_ecm_inputs(&spec, &preset("xeon").unwrap(), 20).unwrap();
        assert!(x.t_l3_rd.is_some() && x.t_l3_wr.is_some());
        assert!(ecm_gflops(&x, &preset("xeon").unwrap()).unwrap() > 0.0);
    }

    #[test]
    fn ecm_table_lookup() {
        let json = r#"[
            {"t_c_ol": 1, "t_l1_ld": 1, "t_l1_st": 1, "t_l2": 1, "t_mem": 1, "work_flops": 1},
            {"hw": "a64fx", "t_c_ol": 2, "t_l1_ld": 1, "t_l1_st": 1, "t_l2": 1, "t_mem": 1, "work_flops": 1},
            {"hw": "a64fx", "P": 7, "t_c_ol": 3, "t_l1_ld": 1, "t_l1_st": 1, "t_l2": 1, "t_mem": 1, "work_flops": 1}
        ]"#;
        let table = EcmTable::from_json(json).unwrap();
        assert_eq!(table.lookup("a64fx", 7).unwrap().t_c_ol, 3.0);
        assert_eq!(table.lookup("a64fx", 3).unwrap().t_c_ol, 2.0);
        assert_eq!(table.lookup("other", 3).unwrap().t_c_ol, 1.0);
        let single = EcmTable::from_json(r#"{"t_c_ol": 1, "t_l1_ld": 1, "t_l1_st": 1, "t_l2": 1, "t_mem": 1, "work_flops": 8}"#).unwrap();
        assert_eq!(single.entries.len(), 1);
        let again = EcmTable::from_json(&table.to_json().unwrap()).unwrap();
        assert_eq!(again, table);
    }
}
