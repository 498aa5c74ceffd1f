//! Side-by-side comparison of the learning-augmented model with Roofline and ECM.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::baselines::{self, EcmTable};
use crate::dataset::SampleRow;
use crate::error::{Error, Result};
use crate::gbt::{self, GbtModel};

/// Where ECM inputs come from.
#[derive(Debug, Clone, Default)]
pub enum EcmSource {
    #[default]
    Unavailable,
    Table(EcmTable),
    /// Derived from the descriptor's bandwidths.
    Derived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub hw: String,
    #[serde(rename = "P")]
    pub p: u32,
    pub split: String,
    pub measured_gflops: f64,
    pub learned_gflops: f64,
    pub roofline_gflops: Option<f64>,
    pub ecm_gflops: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub hw: String,
    #[serde(rename = "P")]
    pub p: u32,
    pub rows: usize,
    pub mape_learned: f64,
    pub mape_roofline: Option<f64>,
    pub mape_ecm: Option<f64>,
    /// No training row shared this (hardware, P).
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<ReportRow>,
    pub groups: Vec<GroupSummary>,
}

pub fn build_report(rows: &[SampleRow], model: &GbtModel, ecm: &EcmSource) -> Result<CompareReport> {
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        let ratio = gbt::predict_ratio(model, &r.features())?;
        let cores = r.hw.cores.unwrap_or(1);
        let ecm_gflops = match ecm {
            EcmSource::Unavailable => None,
            EcmSource::Table(t) => match t.lookup(&r.hw.name, r.polynomial_order()) {
                Some(inp) => Some(baselines::ecm_gflops(inp, &r.hw)?),
                None => None,
            },
            EcmSource::Derived => {
                let inp = baselines::derive_ecm_inputs(&r.spec, &r.hw, cores)?;
                Some(baselines::ecm_gflops(&inp, &r.hw)?)
            }
        };
        out.push(ReportRow {
            hw: r.hw.name.clone(),
            p: r.polynomial_order(),
            split: r.split.to_string(),
            measured_gflops: r.measured_gflops_per_core,
            learned_gflops: r.gflops_for_ratio(ratio)?,
            roofline_gflops: baselines::roofline_for(&r.spec, &r.hw, cores),
            ecm_gflops,
        });
    }
    out.sort_by(|a, b| (&a.hw, a.p, &a.split).cmp(&(&b.hw, b.p, &b.split)));
    let groups = summarize(&out, |hw, p| !model.trained_on(hw, p))?;
    Ok(CompareReport { rows: out, groups })
}

/// Per-(hardware, P) MAPE of each model. A baseline's MAPE is reported only
/// when every row of the group has a value for it.
pub fn summarize(rows: &[ReportRow], extrapolated: impl Fn(&str, u32) -> bool) -> Result<Vec<GroupSummary>> {
    let mut groups: BTreeMap<(&str, u32), Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.hw.as_str(), r.p)).or_default().push(r);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((hw, p), members) in groups {
        let truth: Vec<f64> = members.iter().map(|r| r.measured_gflops).collect();
        let column = |get: fn(&ReportRow) -> Option<f64>| -> Result<Option<f64>> {
            let vals: Option<Vec<f64>> = members.iter().map(|r| get(r)).collect();
            vals.map(|v| gbt::mape(&v, &truth)).transpose()
        };
        out.push(GroupSummary {
            hw: hw.to_string(),
            p,
            rows: members.len(),
            mape_learned: gbt::mape(&members.iter().map(|r| r.learned_gflops).collect::<Vec<_>>(), &truth)?,
            mape_roofline: column(|r| r.roofline_gflops)?,
            mape_ecm: column(|r| r.ecm_gflops)?,
            extrapolated: extrapolated(hw, p),
        });
    }
    Ok(out)
}

const UNAVAILABLE: &str = "unavailable";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| UNAVAILABLE.to_string(), |x| x.to_string())
}

fn parse_opt(v: &str, row: usize, column: &str) -> Result<Option<f64>> {
    if v == UNAVAILABLE {
        return Ok(None);
    }
    v.parse().map(Some).map_err(|_| Error::Schema {
        row,
        column: column.into(),
        msg: format!("cannot parse '{v}'"),
    })
}

impl CompareReport {
    /// One line per configuration. Floats are written in shortest round-trip form.
    pub fn rows_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["hw", "P", "split", "measured_gflops", "learned_gflops", "roofline_gflops", "ecm_gflops"])?;
        for r in &self.rows {
            w.write_record([
                r.hw.clone(),
                r.p.to_string(),
                r.split.clone(),
                r.measured_gflops.to_string(),
                r.learned_gflops.to_string(),
                opt(r.roofline_gflops),
                opt(r.ecm_gflops),
            ])?;
        }
        finish(w)
    }

    pub fn groups_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["hw", "P", "rows", "mape_learned", "mape_roofline", "mape_ecm", "status"])?;
        for g in &self.groups {
            w.write_record([
                g.hw.clone(),
                g.p.to_string(),
                g.rows.to_string(),
                g.mape_learned.to_string(),
                opt(g.mape_roofline),
                opt(g.mape_ecm),
                if g.extrapolated { "EXTRAPOLATED" } else { "" }.to_string(),
            ])?;
        }
        finish(w)
    }

    /// Reads the per-configuration CSV written by [`CompareReport::rows_csv`].
    pub fn parse_rows_csv(text: &str) -> Result<Vec<ReportRow>> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 1;
            let get = |k: usize| rec.get(k).unwrap_or("");
            let num = |k: usize, name: &str| -> Result<f64> {
                parse_opt(get(k), row, name)?.ok_or_else(|| Error::Schema {
                    row,
                    column: name.into(),
                    msg: "value required".into(),
                })
            };
            rows.push(ReportRow {
                hw: get(0).to_string(),
                p: get(1).parse().map_err(|_| Error::Schema {
                    row,
                    column: "P".into(),
                    msg: format!("cannot parse '{}'", get(1)),
                })?,
                split: get(2).to_string(),
                measured_gflops: num(3, "measured_gflops")?,
                learned_gflops: num(4, "learned_gflops")?,
                roofline_gflops: parse_opt(get(5), row, "roofline_gflops")?,
                ecm_gflops: parse_opt(get(6), row, "ecm_gflops")?,
            });
        }
        Ok(rows)
    }

    pub fn table(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| UNAVAILABLE.to_string(), |x| format!("{x:.2}"));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<16} {:>3} {:>5} {:>12} {:>12} {:>12}  status",
            "hw", "P", "rows", "MAPE LA %", "Roofline %", "ECM %"
        );
        for g in &self.groups {
            let _ = writeln!(
                s,
                "{:<16} {:>3} {:>5} {:>12.2} {:>12} {:>12}  {}",
                g.hw,
                g.p,
                g.rows,
                g.mape_learned,
                cell(g.mape_roofline),
                cell(g.mape_ecm),
                if g.extrapolated { "EXTRAPOLATED" } else { "" }
            );
        }
        s
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
