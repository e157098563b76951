//! Detection of oversegmented tree crowns in labeled rasters.

pub mod hac;
pub mod links;
pub mod params;
pub mod pipeline;
pub mod ranking;
pub mod raster;
pub mod synth;
pub mod termination;

pub use hac::{agglomerate, HacError, Hierarchy, HierarchyNode, MergeStep, NodeId};
pub use links::{cast_rays, ConnectiveLink, Direction, Distance, IsolPair, LinkError, LinkStore};
pub use params::{compute_params, parameter_stream, NodeParams, ParamChoice, ParamField, ParamStream, ParamTable};
pub use pipeline::{
    analyze, run_pipeline, trace_command, Analysis, CandidateReport, CandidateRow, PipelineConfig, PipelineError,
};
pub use ranking::{
    rank_candidates, score_cluster, score_points, DispersionStats, RankedCandidate, RankingError, ScoreKey,
};
pub use raster::{extract_isols, load_raster, Isol, LabeledRaster, PixelCoord, RasterError, RasterFormat};
pub use synth::{generate_random, generate_ring, SynthError, SynthScene};
pub use termination::{
    count_breaks, differences, filter_terminals, min_max_scale, significance_threshold, trace_all, trace_path, trim,
    trim_at, BreakCounts, PathTrace, TerminationError, TrimmedHierarchy,
};
