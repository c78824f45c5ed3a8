//! Worker-pool versions of the pipeline and the evaluator. Results are
//! collected in input order, so output does not depend on the worker count.

use layplan_core::codec::LayoutFormat;
use layplan_core::metrics::{align, score_item, summarize, EmbeddingProvider, EvalError, EvalReport, GenItem, MatchConfig, MatchMode, RefItem};
use layplan_core::pipeline::{process_record, FilterConfig, InstructionRecord, PipelineError, PipelineStats, SourceRecord};
use rayon::prelude::*;

/// Runs `f` on a pool of `workers` threads; 0 picks the core count.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    pool.install(f)
}

pub fn run_pipeline(
    records: &[SourceRecord],
    cfg: &FilterConfig,
    formats: &[LayoutFormat],
    seed: u64,
    workers: usize,
) -> Result<(Vec<InstructionRecord>, PipelineStats), PipelineError> {
    cfg.check()?;
    if formats.is_empty() {
        return Err(PipelineError::NoFormats);
    }
    let results: Vec<_> = with_workers(workers, || {
        records.par_iter().map(|r| process_record(r, cfg, formats, seed)).collect()
    });
    let mut stats = PipelineStats::default();
    let mut out = Vec::new();
    for (rec, res) in records.iter().zip(results) {
        stats.absorb(rec.source, &res);
        out.extend(res.records);
    }
    Ok((out, stats))
}

pub fn evaluate(
    gen: &[GenItem],
    refs: &[RefItem],
    mode: MatchMode,
    provider: &dyn EmbeddingProvider,
    cfg: &MatchConfig,
    workers: usize,
) -> Result<EvalReport, EvalError> {
    let pairs = align(gen, refs)?;
    let scores = with_workers(workers, || {
        pairs
            .par_iter()
            .map(|(g, r)| score_item(g, r, mode, provider, cfg))
            .collect::<Result<Vec<_>, _>>()
    })?;
    summarize(scores, mode)
}
