//! Data pipeline: trip ingestion, demand tensors, chronological splits,
//! sliding windows, attribute tables, group labels and normalization.
//!
//! Everything produced here is immutable after construction and safe to share
//! read-only across parallel training runs.

mod attributes;
mod demand;
mod normalize;
mod trips;

pub use attributes::{
    align_nodes, default_direction, label_groups, read_attribute_csv, Direction, GroupLabel,
    GroupLabeling, ProtectedAttributeTable,
};
pub use demand::{
    chronological_split, make_windows, DemandTensor, SplitSpec, WindowSample, WindowedSamples,
};
pub use normalize::{Normalizer, NormalizerMode};
pub use trips::{
    aggregate_trips, read_trip_csv, AggregateStats, RejectedLine, TripReadOutcome, TripRecord,
};
