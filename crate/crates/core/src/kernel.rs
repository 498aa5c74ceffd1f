//! Tensor n-mode product kernel description and loop-body split configurations.

use std::cmp::Reverse;
use std::fmt::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hw::HardwareDescriptor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelSpec {
    pub polynomial_order: u32,
    pub np: u32,
    pub directions: u32,
    pub elements: u64,
    pub precision_bytes: u32,
}

impl KernelSpec {
    /// Three mode products over one element in double precision.
    pub fn new(polynomial_order: u32) -> Self {
        Self {
            polynomial_order,
            np: polynomial_order + 1,
            directions: 3,
            elements: 1,
            precision_bytes: 8,
        }
    }

    /// Kernel with `np` points per dimension. `np = 1` is the degenerate single-term kernel.
    pub fn from_np(np: u32) -> Self {
        Self::new(np.saturating_sub(1)).with_np(np)
    }

    fn with_np(mut self, np: u32) -> Self {
        self.np = np;
        self
    }

    pub fn with_elements(mut self, elements: u64) -> Self {
        self.elements = elements;
        self
    }

    pub fn with_directions(mut self, directions: u32) -> Self {
        self.directions = directions;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.np == 0 {
            return Err(Error::InvalidKernel("np must be >= 1".into()));
        }
        if self.polynomial_order >= 1 && self.np != self.polynomial_order + 1 {
            return Err(Error::InvalidKernel(format!(
                "np ({}) must equal polynomial_order + 1 ({})",
                self.np,
                self.polynomial_order + 1
            )));
        }
        if !(1..=3).contains(&self.directions) {
            return Err(Error::InvalidKernel(format!(
                "directions must be 1, 2 or 3, got {}",
                self.directions
            )));
        }
        if self.elements == 0 {
            return Err(Error::InvalidKernel("elements must be >= 1".into()));
        }
        if self.precision_bytes == 0 {
            return Err(Error::InvalidKernel("precision_bytes must be >= 1".into()));
        }
        Ok(())
    }

    fn np3(&self) -> u64 {
        u64::from(self.np).pow(3)
    }
}

/// Split count `N` plus the ordered lengths of the partial inner products.
///
/// Textual form is `N:l1+l2+...+ln`, e.g. `3:3+3+2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SplitConfig {
    lengths: Vec<u32>,
}

impl SplitConfig {
    pub fn new(lengths: Vec<u32>) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::InvalidSplit("at least one split is required".into()));
        }
        if lengths.contains(&0) {
            return Err(Error::InvalidSplit(format!(
                "split lengths must be >= 1, got {lengths:?}"
            )));
        }
        Ok(Self { lengths })
    }

    /// The unsplit loop body `{np}`.
    pub fn unsplit(np: u32) -> Self {
        Self { lengths: vec![np] }
    }

    /// Every term in its own partial product, `{1, ..., 1}`.
    pub fn max_split(np: u32) -> Self {
        Self {
            lengths: vec![1; np as usize],
        }
    }

    pub fn split_count(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[u32] {
        &self.lengths
    }

    pub fn total(&self) -> u32 {
        self.lengths.iter().sum()
    }

    pub fn max_length(&self) -> u32 {
        *self.lengths.iter().max().expect("non-empty")
    }

    pub fn min_length(&self) -> u32 {
        *self.lengths.iter().min().expect("non-empty")
    }

    /// Lengths in non-increasing order.
    pub fn sorted_desc(&self) -> Vec<u32> {
        let mut v = self.lengths.clone();
        v.sort_unstable_by(|a, b| b.cmp(a));
        v
    }

    /// Checks the configuration against a kernel's `np`.
    pub fn check(&self, np: u32) -> Result<()> {
        let sum = self.total();
        if sum != np {
            return Err(Error::SplitMismatch {
                split: self.to_string(),
                sum: sum as usize,
                np: np as usize,
            });
        }
        Ok(())
    }
}

impl fmt::Display for SplitConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.lengths.len())?;
        for (i, l) in self.lengths.iter().enumerate() {
            if i > 0 {
                f.write_char('+')?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl FromStr for SplitConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (count, body) = match s.split_once(':') {
            Some((n, body)) => {
                let n: usize = n
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidSplit(format!("bad split count in '{s}'")))?;
                (Some(n), body)
            }
            None => (None, s),
        };
        let lengths = body
            .split('+')
            .map(|t| {
                t.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::InvalidSplit(format!("bad split length '{t}' in '{s}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(n) = count {
            if n != lengths.len() {
                return Err(Error::InvalidSplit(format!(
                    "'{s}' declares {n} splits but lists {}",
                    lengths.len()
                )));
            }
        }
        SplitConfig::new(lengths)
    }
}

impl TryFrom<String> for SplitConfig {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SplitConfig> for String {
    fn from(c: SplitConfig) -> String {
        c.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnumMode {
    /// Ordered compositions: `{3,1}` and `{1,3}` are distinct.
    Compositions,
    /// Unordered partitions, one representative in non-increasing order.
    #[default]
    Partitions,
}

impl FromStr for EnumMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "compositions" | "composition" => Ok(EnumMode::Compositions),
            "partitions" | "partition" => Ok(EnumMode::Partitions),
            other => Err(Error::InvalidArgument(format!(
                "unknown enumeration mode '{other}'"
            ))),
        }
    }
}

/// Enumerates the split configurations of an `np`-term inner product.
///
/// Output order: fewer splits first; within a split count, partitions in
/// descending lexicographic order of their sorted lengths; within a partition,
/// its orderings in descending lexicographic order.
pub fn enumerate_splits(np: u32, mode: EnumMode) -> Vec<SplitConfig> {
    if np == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    match mode {
        EnumMode::Partitions => {
            let mut cur = Vec::new();
            partitions_rec(np, np, &mut cur, &mut out);
        }
        EnumMode::Compositions => {
            let mut cur = Vec::new();
            compositions_rec(np, &mut cur, &mut out);
        }
    }
    let mut configs: Vec<SplitConfig> = out.into_iter().map(|lengths| SplitConfig { lengths }).collect();
    configs.sort_by_cached_key(|c| (c.split_count(), Reverse(c.sorted_desc()), Reverse(c.lengths.clone())));
    configs
}

fn partitions_rec(remaining: u32, max_part: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if remaining == 0 {
        out.push(cur.clone());
        return;
    }
    for part in (1..=remaining.min(max_part)).rev() {
        cur.push(part);
        partitions_rec(remaining - part, part, cur, out);
        cur.pop();
    }
}

fn compositions_rec(remaining: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if remaining == 0 {
        out.push(cur.clone());
        return;
    }
    for part in (1..=remaining).rev() {
        cur.push(part);
        compositions_rec(remaining - part, cur, out);
        cur.pop();
    }
}

/// Floating-point operations: one multiply and one add per inner-product term,
/// `np^3` outputs per direction, `np` terms per output.
pub fn flops(spec: &KernelSpec) -> u64 {
    spec.elements * u64::from(spec.directions) * u64::from(spec.np).pow(4) * 2
}

/// Vector FMA instructions retired: `ceil(flops / 2 / lanes)`.
pub fn fma_count(spec: &KernelSpec, hw: &HardwareDescriptor) -> u64 {
    fma_count_for_flops(flops(spec), hw)
}

pub fn fma_count_for_flops(flops: u64, hw: &HardwareDescriptor) -> u64 {
    (flops / 2).div_ceil(u64::from(hw.lanes()))
}

/// Per-element data volumes of one mode product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Footprint {
    /// `q_in` and `q_tmp` resident together.
    pub working_set_bytes: u64,
    /// Read and write of both arrays, the arithmetic-intensity denominator.
    pub traffic_bytes: u64,
    /// The three `np x np` operator matrices, assumed cache resident.
    pub operator_bytes: u64,
}

impl Footprint {
    pub fn working_set_with_operators(&self) -> u64 {
        self.working_set_bytes + self.operator_bytes
    }
}

pub fn data_footprint_bytes(spec: &KernelSpec) -> Footprint {
    let prec = u64::from(spec.precision_bytes);
    let np = u64::from(spec.np);
    Footprint {
        working_set_bytes: 2 * spec.np3() * prec,
        traffic_bytes: 4 * spec.np3() * prec,
        operator_bytes: 3 * np * np * prec,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    #[default]
    Fortran,
    C,
}

impl FromStr for Dialect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fortran" | "fortran_like" | "f" => Ok(Dialect::Fortran),
            "c" | "c_like" => Ok(Dialect::C),
            other => Err(Error::InvalidArgument(format!("unknown dialect '{other}'"))),
        }
    }
}

/// Emits the x-direction mode product with its loop body split per `cfg`.
///
/// With one split the inner product is assigned to `q_tmp` directly; otherwise
/// each split becomes a temporary `tmpK` and a final statement sums them.
pub fn emit_kernel_source(spec: &KernelSpec, cfg: &SplitConfig, dialect: Dialect) -> Result<String> {
    spec.validate()?;
    cfg.check(spec.np)?;
    let mut s = String::new();
    match dialect {
        Dialect::Fortran => emit_fortran(spec, cfg, &mut s),
        Dialect::C => emit_c(spec, cfg, &mut s),
    }
    Ok(s)
}

fn emit_fortran(spec: &KernelSpec, cfg: &SplitConfig, s: &mut String) {
    let np = spec.np;
    let _ = writeln!(s, "! x-direction mode product, Np = {np}, split {cfg}");
    let _ = writeln!(s, "do k = 1, {np}");
    let _ = writeln!(s, "do j = 1, {np}");
    let _ = writeln!(s, "do i = 1, {np}");
    let unsplit = cfg.split_count() == 1;
    let mut term = 1;
    for (part, &len) in cfg.lengths().iter().enumerate() {
        let lhs = if unsplit {
            "q_tmp(i,j,k)".to_string()
        } else {
            format!("tmp{}", part + 1)
        };
        let indent = " ".repeat(4 + lhs.len() + 3);
        for t in 0..len {
            let prefix = if t == 0 {
                format!("    {lhs} = ")
            } else {
                indent.clone()
            };
            let cont = if t + 1 < len { " +&" } else { "" };
            let _ = writeln!(s, "{prefix}mat(i,{term}) * q({term},j,k){cont}");
            term += 1;
        }
    }
    if !unsplit {
        let sum = (1..=cfg.split_count())
            .map(|p| format!("tmp{p}"))
            .collect::<Vec<_>>()
            .join(" + ");
        let _ = writeln!(s, "    q_tmp(i,j,k) = {sum}");
    }
    let _ = writeln!(s, "end do");
    let _ = writeln!(s, "end do");
    let _ = writeln!(s, "end do");
}

fn emit_c(spec: &KernelSpec, cfg: &SplitConfig, s: &mut String) {
    let np = spec.np;
    let _ = writeln!(s, "/* x-direction mode product, Np = {np}, split {cfg} */");
    let _ = writeln!(s, "for (int k = 0; k < {np}; ++k)");
    let _ = writeln!(s, "for (int j = 0; j < {np}; ++j)");
    let _ = writeln!(s, "for (int i = 0; i < {np}; ++i) {{");
    let unsplit = cfg.split_count() == 1;
    let mut term = 0;
    for (part, &len) in cfg.lengths().iter().enumerate() {
        let lhs = if unsplit {
            "q_tmp[k][j][i]".to_string()
        } else {
            format!("const double tmp{}", part + 1)
        };
        let indent = " ".repeat(4 + lhs.len() + 3);
        for t in 0..len {
            let prefix = if t == 0 {
                format!("    {lhs} = ")
            } else {
                indent.clone()
            };
            let end = if t + 1 < len { " +" } else { ";" };
            let _ = writeln!(s, "{prefix}mat[{term}][i] * q[k][j][{term}]{end}");
            term += 1;
        }
    }
    if !unsplit {
        let sum = (1..=cfg.split_count())
            .map(|p| format!("tmp{p}"))
            .collect::<Vec<_>>()
            .join(" + ");
        let _ = writeln!(s, "    q_tmp[k][j][i] = {sum};");
    }
    let _ = writeln!(s, "}}");
}
