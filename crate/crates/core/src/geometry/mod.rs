//! Pullback-metric geometry of weight space.

mod christoffel;
mod metric;
mod path;

pub use christoffel::{
    christoffel_at, integrate_geodesic, ChristoffelOptions, ChristoffelTensor, Geodesic,
    GeodesicOptions, Stencil, CHRISTOFFEL_CAP,
};
pub use metric::{
    inner, metric_at, BatchPolicy, DenseOperator, MetricOperator, SymmetricOperator,
    DEFAULT_DENSE_CAP,
};
pub use path::{
    path_energy_and_length, straight_line, CheckpointRecord, Path, PathMeasure, SegmentRecord,
};

pub(crate) use metric::metric_raw;
pub(crate) use path::segment_record;
