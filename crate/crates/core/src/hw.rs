//! Machine descriptions.
//!
//! A descriptor carries every hardware symbol the models use: FMA latency and
//! throughput, FPU count, vector width, register and reservation-station sizes,
//! L1 capacity and the per-level bandwidth table. Descriptors are read from a
//! flat `key = value` text format:
//!
//! ```text
//! name = a64fx
//! frequency_ghz = 2.2
//! fma_latency_cycles = 9
//! fma_throughput_cycles = 0.5
//! fpu_count = 2
//! vector_bits = 512
//! l1_capacity_bytes = 65536
//! overlap_hypothesis = A64FX_STYLE
//! bw.L1.read = 13516.8
//! bw.L1.write = 6758.4
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Optional keys
//! (`fp_register_count`, `reservation_station_entries`, `cores`) may be omitted.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const A64FX_PRESET: &str = include_str!("../presets/a64fx.hw");
const XEON_PRESET: &str = include_str!("../presets/xeon-gold-6230.hw");

/// Names of the descriptors bundled with the crate.
pub const PRESET_NAMES: [&str; 2] = ["a64fx", "xeon-gold-6230"];

/// How transfers between memory levels overlap in the ECM model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OverlapHypothesis {
    /// `max{L1_LD + max{L1_ST, L2}, Mem}`
    A64fxStyle,
    /// `max{L1_LD, L1_ST} + L2 + max{L3_RD, L3_WR} + Mem`
    CascadeLakeStyle,
}

impl fmt::Display for OverlapHypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OverlapHypothesis::A64fxStyle => "A64FX_STYLE",
            OverlapHypothesis::CascadeLakeStyle => "CASCADE_LAKE_STYLE",
        })
    }
}

impl FromStr for OverlapHypothesis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A64FX_STYLE" => Ok(OverlapHypothesis::A64fxStyle),
            "CASCADE_LAKE_STYLE" => Ok(OverlapHypothesis::CascadeLakeStyle),
            other => Err(format!(
                "unknown overlap hypothesis '{other}' (expected A64FX_STYLE or CASCADE_LAKE_STYLE)"
            )),
        }
    }
}

/// Read/write bandwidth of one memory level, GB/s aggregated over the socket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub level: String,
    pub read_gbs: f64,
    pub write_gbs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareDescriptor {
    pub name: String,
    pub frequency_ghz: f64,
    pub fma_latency_cycles: f64,
    /// Average cycles between FMA issues with all FPUs busy.
    pub fma_throughput_cycles: f64,
    pub fpu_count: u32,
    pub vector_bits: u32,
    pub fp_register_count: Option<u32>,
    /// Not every vendor publishes this; `None` means unknown, never zero.
    pub reservation_station_entries: Option<u32>,
    pub l1_capacity_bytes: u64,
    /// Cores per socket. Per-core bandwidth is the socket aggregate divided by this.
    pub cores: Option<u32>,
    pub bandwidths: Vec<Bandwidth>,
    pub overlap_hypothesis: OverlapHypothesis,
}

impl HardwareDescriptor {
    /// Double-precision lanes per vector register.
    pub fn lanes(&self) -> u32 {
        (self.vector_bits / 64).max(1)
    }

    /// Peak double-precision GFLOPS of one core (two flops per FMA lane).
    pub fn peak_gflops_per_core(&self) -> f64 {
        self.frequency_ghz / self.fma_throughput_cycles * f64::from(self.lanes()) * 2.0
    }

    pub fn bandwidth(&self, level: &str) -> Option<&Bandwidth> {
        self.bandwidths
            .iter()
            .find(|b| b.level.eq_ignore_ascii_case(level))
    }

    /// Per-core share of a level's bandwidth, in GB/s.
    pub fn per_core_bandwidth(&self, level: &str, active_cores: u32) -> Option<(f64, f64)> {
        let cores = f64::from(active_cores.max(1));
        self.bandwidth(level)
            .map(|b| (b.read_gbs / cores, b.write_gbs / cores))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| {
            Err(Error::InvalidHardware {
                name: self.name.clone(),
                msg,
            })
        };
        if self.name.trim().is_empty() {
            return fail("name must not be empty".into());
        }
        if !(self.frequency_ghz > 0.0 && self.frequency_ghz.is_finite()) {
            return fail(format!("frequency_ghz must be > 0, got {}", self.frequency_ghz));
        }
        if !(self.fma_throughput_cycles > 0.0 && self.fma_throughput_cycles.is_finite()) {
            return fail(format!(
                "fma_throughput_cycles must be > 0, got {}",
                self.fma_throughput_cycles
            ));
        }
        if !(self.fma_latency_cycles >= self.fma_throughput_cycles
            && self.fma_latency_cycles.is_finite())
        {
            return fail(format!(
                "fma_latency_cycles ({}) must be >= fma_throughput_cycles ({})",
                self.fma_latency_cycles, self.fma_throughput_cycles
            ));
        }
        if self.fpu_count < 1 {
            return fail("fpu_count must be >= 1".into());
        }
        // 64 is accepted as the scalar descriptor (one lane).
        if ![64, 128, 256, 512].contains(&self.vector_bits) {
            return fail(format!(
                "vector_bits must be one of 128, 256, 512 (or 64 for scalar), got {}",
                self.vector_bits
            ));
        }
        if self.l1_capacity_bytes == 0 {
            return fail("l1_capacity_bytes must be > 0".into());
        }
        if self.cores == Some(0) {
            return fail("cores must be >= 1 when present".into());
        }
        for bw in &self.bandwidths {
            if !(bw.read_gbs > 0.0 && bw.write_gbs > 0.0) {
                return fail(format!(
                    "bandwidth of level {} must be > 0 (read {}, write {})",
                    bw.level, bw.read_gbs, bw.write_gbs
                ));
            }
        }
        Ok(())
    }

    /// Parses and validates descriptor text. `origin` is only used in messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut fields: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        let mut bw: Vec<(String, Option<f64>, Option<f64>, usize)> = Vec::new();

        let parse_err = |line: usize, msg: String| Error::Parse {
            path: origin.to_string(),
            line,
            msg,
        };

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(line_no, format!("expected `key = value`, got '{line}'")))?;
            let key = key.trim();
            let value = value.trim();

            if let Some(rest) = key.strip_prefix("bw.") {
                let (level, dir) = rest.rsplit_once('.').ok_or_else(|| {
                    parse_err(line_no, format!("bandwidth key '{key}' must be bw.<level>.read|write"))
                })?;
                let gbs: f64 = value
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("{key}: '{value}' is not a number")))?;
                let slot = match bw.iter().position(|b| b.0 == level) {
                    Some(i) => i,
                    None => {
                        bw.push((level.to_string(), None, None, line_no));
                        bw.len() - 1
                    }
                };
                let entry = &mut bw[slot];
                let target = match dir {
                    "read" => &mut entry.1,
                    "write" => &mut entry.2,
                    other => {
                        return Err(parse_err(
                            line_no,
                            format!("bandwidth direction '{other}' must be read or write"),
                        ))
                    }
                };
                if target.replace(gbs).is_some() {
                    return Err(parse_err(line_no, format!("duplicate key '{key}'")));
                }
                continue;
            }

            if !KNOWN_KEYS.contains(&key) {
                return Err(parse_err(line_no, format!("unknown key '{key}'")));
            }
            if fields.insert(key, (line_no, value)).is_some() {
                return Err(parse_err(line_no, format!("duplicate key '{key}'")));
            }
        }

        fn required<'a>(
            fields: &BTreeMap<&str, (usize, &'a str)>,
            key: &str,
            origin: &str,
        ) -> Result<(usize, &'a str)> {
            fields.get(key).copied().ok_or_else(|| Error::Parse {
                path: origin.to_string(),
                line: 0,
                msg: format!("missing required key '{key}'"),
            })
        }
        fn num<T: FromStr>(origin: &str, key: &str, (line, v): (usize, &str)) -> Result<T> {
            v.parse().map_err(|_| Error::Parse {
                path: origin.to_string(),
                line,
                msg: format!("{key}: '{v}' is not a valid number"),
            })
        }
        let opt = |key: &str| -> Result<Option<u32>> {
            fields.get(key).map(|&lv| num(origin, key, lv)).transpose()
        };

        let mut bandwidths = Vec::with_capacity(bw.len());
        for (level, read, write, line) in bw {
            match (read, write) {
                (Some(read_gbs), Some(write_gbs)) => bandwidths.push(Bandwidth {
                    level,
                    read_gbs,
                    write_gbs,
                }),
                _ => {
                    return Err(parse_err(
                        line,
                        format!("bandwidth level '{level}' needs both .read and .write"),
                    ))
                }
            }
        }

        let (hline, hval) = required(&fields, "overlap_hypothesis", origin)?;
        let desc = HardwareDescriptor {
            name: required(&fields, "name", origin)?.1.to_string(),
            frequency_ghz: num(origin, "frequency_ghz", required(&fields, "frequency_ghz", origin)?)?,
            fma_latency_cycles: num(
                origin,
                "fma_latency_cycles",
                required(&fields, "fma_latency_cycles", origin)?,
            )?,
            fma_throughput_cycles: num(
                origin,
                "fma_throughput_cycles",
                required(&fields, "fma_throughput_cycles", origin)?,
            )?,
            fpu_count: num(origin, "fpu_count", required(&fields, "fpu_count", origin)?)?,
            vector_bits: num(origin, "vector_bits", required(&fields, "vector_bits", origin)?)?,
            fp_register_count: opt("fp_register_count")?,
            reservation_station_entries: opt("reservation_station_entries")?,
            l1_capacity_bytes: num(
                origin,
                "l1_capacity_bytes",
                required(&fields, "l1_capacity_bytes", origin)?,
            )?,
            cores: opt("cores")?,
            bandwidths,
            overlap_hypothesis: hval.parse().map_err(|msg| parse_err(hline, msg))?,
        };
        desc.validate()?;
        Ok(desc)
    }

    /// Renders the descriptor in the text format accepted by [`HardwareDescriptor::parse`].
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "frequency_ghz = {}", self.frequency_ghz);
        let _ = writeln!(s, "fma_latency_cycles = {}", self.fma_latency_cycles);
        let _ = writeln!(s, "fma_throughput_cycles = {}", self.fma_throughput_cycles);
        let _ = writeln!(s, "fpu_count = {}", self.fpu_count);
        let _ = writeln!(s, "vector_bits = {}", self.vector_bits);
        if let Some(v) = self.fp_register_count {
            let _ = writeln!(s, "fp_register_count = {v}");
        }
        if let Some(v) = self.reservation_station_entries {
            let _ = writeln!(s, "reservation_station_entries = {v}");
        }
        let _ = writeln!(s, "l1_capacity_bytes = {}", self.l1_capacity_bytes);
        if let Some(v) = self.cores {
            let _ = writeln!(s, "cores = {v}");
        }
        let _ = writeln!(s, "overlap_hypothesis = {}", self.overlap_hypothesis);
        for b in &self.bandwidths {
            let _ = writeln!(s, "bw.{}.read = {}", b.level, b.read_gbs);
            let _ = writeln!(s, "bw.{}.write = {}", b.level, b.write_gbs);
        }
        s
    }
}

const KNOWN_KEYS: [&str; 11] = [
    "name",
    "frequency_ghz",
    "fma_latency_cycles",
    "fma_throughput_cycles",
    "fpu_count",
    "vector_bits",
    "fp_register_count",
    "reservation_station_entries",
    "l1_capacity_bytes",
    "cores",
    "overlap_hypothesis",
];

/// Returns a bundled descriptor by name. `xeon` is accepted as a short alias.
pub fn preset(name: &str) -> Option<HardwareDescriptor> {
    let text = match name {
        "a64fx" => A64FX_PRESET,
        "xeon-gold-6230" | "xeon" => XEON_PRESET,
        _ => return None,
    };
    Some(HardwareDescriptor::parse(text, name).expect("bundled preset is valid"))
}

pub fn load_hardware(path: impl AsRef<Path>) -> Result<HardwareDescriptor> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    HardwareDescriptor::parse(&text, &path.display().to_string())
}

/// Resolves a preset name or a descriptor file path.
pub fn resolve(name_or_path: &str) -> Result<HardwareDescriptor> {
    match preset(name_or_path) {
        Some(hw) => Ok(hw),
        None if Path::new(name_or_path).exists() => load_hardware(name_or_path),
        None => Err(Error::UnknownHardware(name_or_path.to_string())),
    }
}

/// Name-keyed set of descriptors, used to join measurement rows with machines.
#[derive(Debug, Clone, Default)]
pub struct HardwareRegistry {
    machines: BTreeMap<String, HardwareDescriptor>,
}

impl HardwareRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_presets() -> Self {
        let mut reg = Self::new();
        for name in PRESET_NAMES {
            reg.insert(preset(name).expect("preset exists"));
        }
        reg
    }

    pub fn insert(&mut self, hw: HardwareDescriptor) {
        self.machines.insert(hw.name.clone(), hw);
    }

    pub fn get(&self, name: &str) -> Option<&HardwareDescriptor> {
        self.machines
            .get(name)
            .or_else(|| (name == "xeon").then(|| self.machines.get("xeon-gold-6230")).flatten())
    }

    pub fn iter(&self) -> impl Iterator<Item = &HardwareDescriptor> {
        self.machines.values()
    }

    pub fn len(&self) -> usize {
        self.machines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.machines.is_empty()
    }
}
