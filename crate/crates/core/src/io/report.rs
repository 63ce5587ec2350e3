//! Evaluation report serialization, as JSON or aligned text.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::RunReport;

pub const FORMAT: &str = "vq2d.report";

#[derive(Debug, Serialize, Deserialize)]
struct ReportFile {
    format: String,
    schema_version: u32,
    #[serde(flatten)]
    report: RunReport,
}

/// Single-line JSON object with the format header fields inlined.
pub fn report_json(report: &RunReport) -> String {
    let file = ReportFile {
        format: FORMAT.into(),
        schema_version: super::SCHEMA_VERSION,
        report: report.clone(),
    };
    let mut s = serde_json::to_string(&file).expect("report serializes");
    s.push('\n');
    s
}

pub fn report_text(report: &RunReport) -> String {
    let m = &report.metrics;
    format!(
        "stAP25        {:.4}\n\
         tAP25         {:.4}\n\
         success (%)   {:.2}\n\
         recovery (%)  {:.2}\n\
         queries       {}\n\
         answered      {}\n\
         no response   {}\n\
         errored       {}\n",
        m.st_ap_25,
        m.t_ap_25,
        m.success_rate,
        m.recovery,
        m.num_queries,
        report.answered,
        report.no_response,
        report.errored
    )
}

pub fn save_report(path: &Path, report: &RunReport) -> Result<()> {
    super::write_text(path, &report_json(report))
}

pub fn load_report(path: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ReportFile = serde_json::from_str(text.trim()).map_err(|e| Error::Parse {
        path: path.to_owned(),
        line: 1,
        message: e.to_string(),
    })?;
    if file.format != FORMAT || file.schema_version != super::SCHEMA_VERSION {
        return Err(Error::Schema {
            path: path.to_owned(),
            expected: format!("{FORMAT} v{}", super::SCHEMA_VERSION),
            found: format!("{} v{}", file.format, file.schema_version),
        });
    }
    Ok(file.report)
}
