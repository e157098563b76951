//! End-to-end run: raster in, ranked candidates and diagnostics out.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::hac::{agglomerate, Hierarchy, NodeId};
use crate::links::{cast_rays, LinkStore};
use crate::params::{compute_params, parameter_stream, ParamChoice, ParamStream, ParamTable};
use crate::ranking::{rank_candidates, RankedCandidate, RankingError, ScoreKey};
use crate::raster::{
    extract_isols, load_raster, write_cluster_raster, write_pgm, Isol, LabeledRaster, RasterError, RasterFormat,
};
use crate::termination::{
    count_breaks, filter_terminals, trace_all, trace_path, trim, BreakCounts, PathTrace, TerminationError,
    TrimmedHierarchy,
};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Input { path: PathBuf, source: RasterError },
    #[error("unknown ISOL id {0}")]
    UnknownIsol(u32),
    #[error("{path}: {source}")]
    Output { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Termination(#[from] TerminationError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
}

impl PipelineError {
    /// Bad input or configuration, as opposed to a failure while running or
    /// writing results.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            PipelineError::Config(_) | PipelineError::Input { .. } | PipelineError::UnknownIsol(_)
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub input: PathBuf,
    /// Guessed from the extension when `None`.
    pub format: Option<RasterFormat>,
    pub param: ParamChoice,
    pub significance_p: f64,
    pub min_group_size: usize,
    pub max_ray: Option<usize>,
    pub score: ScoreKey,
    pub out_dir: PathBuf,
    /// Also dump every connective link to `links.csv`.
    pub write_links: bool,
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            input: input.into(),
            format: None,
            param: ParamChoice::default(),
            significance_p: 0.25,
            min_group_size: 7,
            max_ray: None,
            score: ScoreKey::default(),
            out_dir: out_dir.into(),
            write_links: false,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.significance_p > 0.0 && self.significance_p < 1.0) {
            return Err(PipelineError::Config(format!(
                "significance p must lie in (0, 1), got {}",
                self.significance_p
            )));
        }
        if self.min_group_size < 1 {
            return Err(PipelineError::Config("min group size must be at least 1".into()));
        }
        if self.max_ray == Some(0) {
            return Err(PipelineError::Config("max ray length must be positive".into()));
        }
        Ok(())
    }

    pub fn input_format(&self) -> RasterFormat {
        self.format.unwrap_or_else(|| RasterFormat::from_path(&self.input))
    }

    pub fn load(&self) -> Result<LabeledRaster, PipelineError> {
        let input_err = |source| PipelineError::Input {
            path: self.input.clone(),
            source,
        };
        let file = File::open(&self.input).map_err(|e| input_err(RasterError::Io(e)))?;
        load_raster(io::BufReader::new(file), self.input_format()).map_err(input_err)
    }
}

/// Every intermediate product of one run.
#[derive(Debug)]
pub struct Analysis {
    pub raster: LabeledRaster,
    pub isols: Vec<Isol>,
    pub links: LinkStore,
    pub hierarchy: Hierarchy,
    pub params: ParamTable,
    pub stream: ParamStream,
    pub traces: Vec<PathTrace>,
    pub counts: BreakCounts,
    pub trimmed: TrimmedHierarchy,
    /// Terminals that pass the group size filter.
    pub candidates: BTreeSet<NodeId>,
    pub ranked: Vec<RankedCandidate>,
}

/// Run every stage on an in-memory raster.
pub fn analyze(raster: LabeledRaster, config: &PipelineConfig) -> Result<Analysis, PipelineError> {
    config.validate()?;
    let isols = extract_isols(&raster);
    let links = cast_rays(&raster, &isols, config.max_ray);
    let hierarchy = agglomerate(&isols, &links);
    let params = compute_params(&hierarchy, &isols, &links);
    let stream = parameter_stream(&hierarchy, &params, config.param);
    let traces = trace_all(&hierarchy, &stream)?;
    let counts = count_breaks(&hierarchy, &traces, config.significance_p)?;
    let trimmed = trim(&hierarchy, &counts);
    let candidates = filter_terminals(&trimmed, &hierarchy, config.min_group_size);
    let ranked = rank_candidates(&hierarchy, &isols, &candidates, config.score)?;
    Ok(Analysis {
        raster,
        isols,
        links,
        hierarchy,
        params,
        stream,
        traces,
        counts,
        trimmed,
        candidates,
        ranked,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CandidateRow {
    pub rank: usize,
    pub node_id: usize,
    pub merge_iteration: Option<usize>,
    pub member_count: usize,
    pub members: Vec<u32>,
    pub pixel_count: usize,
    pub centroid: [f64; 2],
    #[serde(rename = "MAD")]
    pub mad: f64,
    pub sum_abs_dev: f64,
    #[serde(rename = "MaxAD")]
    pub max_ad: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub ratio_table: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CandidateReport {
    pub schema: u32,
    pub param: String,
    pub significance_p: f64,
    pub significance_count: usize,
    pub min_group_size: usize,
    pub score_key: ScoreKey,
    pub isol_count: usize,
    pub terminal_count: usize,
    pub candidates: Vec<CandidateRow>,
}

impl CandidateReport {
    pub fn new(analysis: &Analysis, config: &PipelineConfig) -> Self {
        let nodes = analysis.hierarchy.nodes();
        let candidates = analysis
            .ranked
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let node = &nodes[c.node.index()];
                CandidateRow {
                    rank: i + 1,
                    node_id: c.node.index(),
                    merge_iteration: node.merge_iteration,
                    member_count: node.members.len(),
                    members: node.members.clone(),
                    pixel_count: c.stats.pixel_count,
                    centroid: c.stats.centroid,
                    mad: c.stats.mean_abs_dev,
                    sum_abs_dev: c.stats.sum_abs_dev,
                    max_ad: c.stats.max_abs_dev,
                    s: c.stats.score,
                    ratio_table: c.stats.ratio_table,
                }
            })
            .collect();
        CandidateReport {
            schema: REPORT_SCHEMA,
            param: config.param.to_string(),
            significance_p: config.significance_p,
            significance_count: analysis.counts.significance,
            min_group_size: config.min_group_size,
            score_key: config.score,
            isol_count: analysis.isols.len(),
            terminal_count: analysis.trimmed.terminals.len(),
            candidates,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| PipelineError::Output {
            path: path.to_path_buf(),
            source,
        })
}

fn finish<E: Into<Box<dyn std::error::Error + Send + Sync>>>(
    path: &Path,
    written: Result<(), E>,
    out: BufWriter<File>,
) -> Result<(), PipelineError> {
    let output_err = |source| PipelineError::Output {
        path: path.to_path_buf(),
        source,
    };
    written.map_err(|e| output_err(io::Error::other(e)))?;
    out.into_inner()
        .map_err(|e| output_err(e.into_error()))?
        .sync_all()
        .map_err(output_err)
}

fn write_with<F, E>(path: &Path, write: F) -> Result<(), PipelineError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), E>,
    E: Into<Box<dyn std::error::Error + Send + Sync>>,
{
    let mut out = create(path)?;
    let written = write(&mut out);
    finish(path, written, out)
}

/// Write every output file of `analysis` into `config.out_dir`.
pub fn write_outputs(analysis: &Analysis, config: &PipelineConfig) -> Result<CandidateReport, PipelineError> {
    let dir = &config.out_dir;
    let traces_dir = dir.join("traces");
    fs::create_dir_all(&traces_dir).map_err(|source| PipelineError::Output {
        path: traces_dir.clone(),
        source,
    })?;

    let report = CandidateReport::new(analysis, config);
    write_with(&dir.join("report.json"), |out| -> Result<(), serde_json::Error> {
        serde_json::to_writer_pretty(&mut *out, &report)?;
        out.write_all(b"\n").map_err(serde_json::Error::io)
    })?;
    write_with(&dir.join("hierarchy.json"), |out| analysis.hierarchy.write_json(out))?;
    write_with(&dir.join("params.csv"), |out| {
        analysis.params.write_csv(&analysis.hierarchy, out)
    })?;
    write_with(&dir.join("histogram.csv"), |out| {
        analysis.counts.write_histogram_csv(&analysis.hierarchy, out)
    })?;
    for trace in &analysis.traces {
        let isol = analysis.hierarchy.nodes()[trace.start.index()].members[0];
        write_with(&traces_dir.join(format!("{isol}.csv")), |out| trace.write_csv(out))?;
    }

    let groups: Vec<(u32, Vec<u32>)> = report
        .candidates
        .iter()
        .map(|c| (c.rank as u32, c.members.clone()))
        .collect();
    let clusters = write_cluster_raster(&analysis.raster, &groups)?;
    write_with(&dir.join("clusters.pgm"), |out| write_pgm(&clusters, out))?;

    if config.write_links {
        write_with(&dir.join("links.csv"), |out| analysis.links.write_csv(out))?;
    }
    Ok(report)
}

/// Load, analyze and write. Returns the report that was written.
pub fn run_pipeline(config: &PipelineConfig) -> Result<CandidateReport, PipelineError> {
    config.validate()?;
    let raster = config.load()?;
    let analysis = analyze(raster, config)?;
    write_outputs(&analysis, config)
}

/// Trace the path starting at `isol_id` and write it as CSV.
pub fn trace_command<W: Write>(config: &PipelineConfig, isol_id: u32, out: W) -> Result<PathTrace, PipelineError> {
    config.validate()?;
    let raster = config.load()?;
    let isols = extract_isols(&raster);
    let links = cast_rays(&raster, &isols, config.max_ray);
    let hierarchy = agglomerate(&isols, &links);
    let h0 = hierarchy
        .singleton(isol_id)
        .ok_or(PipelineError::UnknownIsol(isol_id))?;
    let params = compute_params(&hierarchy, &isols, &links);
    let stream = parameter_stream(&hierarchy, &params, config.param);
    let trace = trace_path(&hierarchy, &stream, h0)?;
    trace.write_csv(out).map_err(|e| PipelineError::Output {
        path: PathBuf::from("-"),
        source: io::Error::other(e),
    })?;
    Ok(trace)
}
