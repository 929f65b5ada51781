//! CSV forms of link reports and sweeps.
//!
//! Report files start with a `#schema=link-report/1` line. Reals are written
//! in shortest round-trip form, so parsing a row gives back the same `f64`.
//! A BER or APSNR that could not be computed is written as `undefined`.

use std::io::{Read, Write};

use anyhow::{bail, Context};
use lowvhf_core::metrics::LinkReport;

pub const REPORT_SCHEMA: &str = "#schema=link-report/1";
pub const SWEEP_SCHEMA: &str = "#schema=link-sweep/1";
pub const UNDEFINED: &str = "undefined";

pub const REPORT_COLUMNS: [&str; 10] = [
    "session_id",
    "ber",
    "bit_errors",
    "bits_compared",
    "packets_tx",
    "packets_rx",
    "packets_dropped",
    "apsnr_db",
    "frames_absent",
    "acceptable_flag",
];

pub fn format_opt(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| format!("{x:?}"))
}

pub fn parse_opt(s: &str) -> anyhow::Result<Option<f64>> {
    if s == UNDEFINED {
        Ok(None)
    } else {
        Ok(Some(s.parse().with_context(|| format!("bad number {s:?}"))?))
    }
}

fn report_row(r: &LinkReport) -> [String; 10] {
    [
        r.session_id.clone(),
        format_opt(r.ber),
        r.bit_errors.to_string(),
        r.bits_compared.to_string(),
        r.packets_tx.to_string(),
        r.packets_rx.to_string(),
        r.packets_dropped.to_string(),
        format_opt(r.apsnr_db),
        r.frames_absent.to_string(),
        u8::from(r.acceptable).to_string(),
    ]
}

pub fn write_reports<W: Write>(mut w: W, reports: &[LinkReport]) -> anyhow::Result<()> {
    writeln!(w, "{REPORT_SCHEMA}")?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(REPORT_COLUMNS)?;
    for r in reports {
        out.write_record(report_row(r))?;
    }
    out.flush()?;
    Ok(())
}

/// The CSV columns of each row. Fields not in the CSV (the PSNR series and
/// the extra packet counters) are left at their defaults.
pub fn read_reports<R: Read>(r: R) -> anyhow::Result<Vec<LinkReport>> {
    let mut text = String::new();
    let mut r = r;
    r.read_to_string(&mut text)?;
    let mut lines = text.splitn(2, '\n');
    let schema = lines.next().unwrap_or("").trim_end_matches('\r');
    if schema != REPORT_SCHEMA {
        bail!("unsupported report schema line {schema:?}");
    }
    let mut rdr = csv::Reader::from_reader(lines.next().unwrap_or("").as_bytes());
    if rdr.headers()?.iter().ne(REPORT_COLUMNS) {
        bail!("unexpected report columns");
    }
    let mut reports = Vec::new();
    for row in rdr.records() {
        let row = row?;
        if row.len() != REPORT_COLUMNS.len() {
            bail!("report row with {} fields", row.len());
        }
        let acceptable = match &row[9] {
            "0" => false,
            "1" => true,
            other => bail!("bad acceptable_flag {other:?}"),
        };
        reports.push(LinkReport {
            session_id: row[0].to_string(),
            ber: parse_opt(&row[1])?,
            bit_errors: row[2].parse()?,
            bits_compared: row[3].parse()?,
            packets_tx: row[4].parse()?,
            packets_rx: row[5].parse()?,
            packets_dropped: row[6].parse()?,
            apsnr_db: parse_opt(&row[7])?,
            frames_absent: row[8].parse()?,
            acceptable,
            ..LinkReport::default()
        });
    }
    Ok(reports)
}

/// One sweep point; `report` is `Err` with the failure message when the
/// point could not be run.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub report: Result<LinkReport, String>,
}

pub fn write_sweep<W: Write>(mut w: W, rows: &[SweepRow]) -> anyhow::Result<()> {
    writeln!(w, "{SWEEP_SCHEMA}")?;
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["axis", "value", "status"];
    header.extend(REPORT_COLUMNS);
    header.push("error");
    out.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.axis.clone(), format!("{:?}", row.value)];
        match &row.report {
            Ok(r) => {
                rec.push("ok".into());
                rec.extend(report_row(r));
                rec.push(String::new());
            }
            Err(e) => {
                rec.push("failed".into());
                rec.extend(std::iter::repeat_n(String::new(), REPORT_COLUMNS.len()));
                rec.push(e.clone());
            }
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
