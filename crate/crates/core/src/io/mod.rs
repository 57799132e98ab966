//! CSV ingestion, sample filters and report serialization.

pub mod filter;
pub mod records;
pub mod report;

pub use filter::{apply_filters, Exclusion, FilterCounts, FilterOutcome, FilterSpec, RatioTrim};
pub use records::{read_csv_long, read_csv_long_from, write_csv_long, CsvColumns, RawRecords, RawUnit};
pub use report::{ConfigEcho, EstimateReport, RunReport, SampleSummary, REPORT_VERSION};
