//! Evaluation on frozen embeddings: linear probe, k-means with NMI, and
//! link prediction with AUC.

pub mod kmeans;
pub mod linkpred;
pub mod metrics;
pub mod probe;
pub mod report;
pub mod split;

pub use kmeans::{kmeans, KMeansConfig, KMeansResult};
pub use linkpred::{link_predict, Decoder, LinkPredConfig, LinkPredResult};
pub use metrics::{accuracy, auc, nmi, nmi_with, NmiNorm};
pub use probe::{fit_logistic, linear_probe, LogisticModel, ProbeConfig, ProbeResult, L2_GRID};
pub use report::{aggregate, mean_std, read_reports, summary_table, write_report, MetricsReport};
pub use split::{split_edges, split_nodes, EdgeSplit, NodeSplit};
