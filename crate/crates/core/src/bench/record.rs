//! Result rows and their CSV form.

use std::io::Write;

use crate::error::Result;
use crate::sim::CsiMethod;

pub const CSV_HEADER: &str = "detector,snr_db,block,csi,trials,symbols,errors,ser,nmse,wall_s,seed";

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRecord {
    pub detector: String,
    pub snr_db: f64,
    pub block: usize,
    pub csi: CsiMethod,
    pub trials: u64,
    pub symbols: u64,
    pub errors: u64,
    /// `errors / symbols`; absent for NMSE rows.
    pub ser: Option<f64>,
    /// Absent for SER rows.
    pub nmse: Option<f64>,
    /// Only filled when timing is requested, so default output is reproducible.
    pub wall_s: Option<f64>,
    pub seed: u64,
}

/// `printf("%.6g")` formatting.
pub fn format_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mant = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_g6).unwrap_or_default()
}

impl ResultRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.detector,
            format_g6(self.snr_db),
            self.block,
            self.csi,
            self.trials,
            self.symbols,
            self.errors,
            opt(self.ser),
            opt(self.nmse),
            opt(self.wall_s),
            self.seed
        )
    }
}

pub fn write_csv<W: Write>(mut out: W, records: &[ResultRecord]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_line())?;
    }
    out.flush()?;
    Ok(())
}

pub fn to_csv_string(records: &[ResultRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, records).expect("writing to memory");
    String::from_utf8(buf).expect("ASCII output")
}
