//! Travel-diary reconstruction and mobility analytics over aggregated
//! origin-destination and footfall counts on a hexagonal grid.
//!
//! The pipeline runs bottom-up:
//!
//! * [`ingest`] loads OD and footfall CSV files into columnar stores.
//! * [`homework`] detects home/work hexagon pairs from repeated morning and
//!   evening reversals.
//! * [`diary`] chains flows across the day from each home anchor and mines
//!   frequent flow patterns per weekday with [`mining::eclat`].
//! * [`analytics`] computes temporal profiles, day-of-week totals, day
//!   difference layers and top-k hubs.
//! * [`synth`] generates synthetic months with a ground-truth ledger.
//! * [`geojson`] turns hex-valued layers into map layers.

pub mod analytics;
pub mod diary;
pub mod error;
pub mod geojson;
pub mod homework;
pub mod ingest;
pub mod mining;
pub mod model;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    interval_of, regime_of, CalendarDay, FlowRecord, FootfallRecord, HexId, Interval, Month, Role,
    TemporalRegime, UserType,
};
