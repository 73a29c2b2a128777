//! Plain-text error tables.

use std::fmt::Write as _;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub label: String,
    /// RMSE of `v` from the heart trace `u_e`, in mV.
    pub protocol1: Option<f64>,
    /// RMSE of `v` from torso data, in mV.
    pub protocol2: Option<f64>,
}

impl ReportRow {
    pub fn new(label: &str, protocol1: f64, protocol2: f64) -> Self {
        ReportRow {
            label: label.to_string(),
            protocol1: Some(protocol1),
            protocol2: Some(protocol2),
        }
    }
}

pub const HEADER: &str = "region  u_e->v  u_b->u_e->v";

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2} mV"))
}

/// One header line and one line per row, e.g. `LV  5.71 mV  19.81 mV`.
pub fn report_table(rows: &[ReportRow]) -> String {
    let mut s = String::from(HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}  {}  {}", r.label, cell(r.protocol1), cell(r.protocol2));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_use_two_decimals() {
        let t = report_table(&[ReportRow::new("LV", 5.71, 19.81), ReportRow::new("APEX", 12.56, 13.84)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines, [HEADER, "LV  5.71 mV  19.81 mV", "APEX  12.56 mV  13.84 mV"]);
    }

    #[test]
    fn empty_table_is_the_header() {
        assert_eq!(report_table(&[]), format!("{HEADER}\n"));
    }

    #[test]
    fn missing_protocol_is_marked() {
        let row = ReportRow {
            label: "RV".into(),
            protocol1: Some(13.71),
            protocol2: None,
        };
        assert_eq!(report_table(&[row]).lines().nth(1), Some("RV  13.71 mV  n/a"));
    }
}
