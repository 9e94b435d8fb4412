//! Fairness quantities: APE, prediction accuracy gap, guarded Pearson
//! correlation, the attribute correlation matrix and the multiple correlation
//! coefficient, plus the benchmark regularizers — as eager metrics for
//! reporting and as differentiable expressions for training.

mod expr;
mod metrics;
mod omega;
mod report;

pub use expr::{
    ape_expr, benchmark_regularizer_expr, group_mean_selectors, masked_attr_stats,
    multiple_corr_expr, pearson_expr, GroupSelectors, MaskedAttrStats, RegularizerContext,
    RegularizerKind,
};
pub use metrics::{
    ape, mae, pag, pag_named, pearson, pearson_epsilon, pearson_vec, rmse, AccuracyVector,
    ZERO_DEMAND_FLOOR,
};
pub use omega::{
    attribute_corr_matrix, multiple_correlation, AttributeCorrelationMatrix, MultipleCorrelation,
    OMEGA_RIDGE,
};
pub use report::{AttrMetrics, FairnessReport};
