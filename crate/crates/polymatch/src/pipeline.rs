//! End-to-end orchestration: two-view geometry, guided search, candidate
//! annotation and assignment.

use std::time::Instant;

use polymatch_core::epipolar::{estimate_two_view, Consensus, TwoViewGeometry};
use polymatch_core::local_match::{greedy_match, lojogm, MatchResult};
use polymatch_core::pyramid::{
    bidir_pyramid_search, build_pyramid, coarse_candidates, fixed_window_search, CandidateMatch, CandidateMatrix,
    ImagePyramid, SearchOutcome, SearchWindow,
};
use polymatch_core::local_match::annotate_pair;
use polymatch_core::vectorize::{masks_to_polygons, KeypointMatch, LabelImage};
use polymatch_core::{GrayImage, Polygon};
use rayon::prelude::*;

use crate::config::{Matcher, PipelineConfig, SearchMode};
use crate::error::CliError;

/// Wall-clock seconds per stage; stages are timed back to back.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTimings {
    pub epipolar: f64,
    pub pyramid: f64,
    pub search: f64,
    pub candidates: f64,
    pub local: f64,
    pub assignment: f64,
    pub total: f64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> f64 {
        self.epipolar + self.pyramid + self.search + self.candidates + self.local + self.assignment
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub geometry: TwoViewGeometry,
    pub windows: Vec<Option<SearchWindow>>,
    /// Total pixels examined by the guided search over all sources.
    pub visited: usize,
    pub candidates: CandidateMatrix,
    pub annotated: Vec<CandidateMatch>,
    pub result: MatchResult,
    pub timings: StageTimings,
}

pub fn detect_polygons(labels: &LabelImage, cfg: &PipelineConfig) -> Result<Vec<Polygon>, CliError> {
    Ok(masks_to_polygons(labels, cfg.dp_eps, cfg.min_area)?)
}

struct Clock {
    last: Instant,
    start: Instant,
}

impl Clock {
    fn new() -> Self {
        let now = Instant::now();
        Self { last: now, start: now }
    }

    fn lap(&mut self) -> f64 {
        let now = Instant::now();
        let d = now.duration_since(self.last).as_secs_f64();
        self.last = now;
        d
    }
}

pub fn run_pipeline(
    left: &GrayImage,
    right: &GrayImage,
    src: &[Polygon],
    tgt: &[Polygon],
    matches: &[KeypointMatch],
    cfg: &PipelineConfig,
) -> Result<PipelineOutput, CliError> {
    cfg.validate()?;
    let mut clock = Clock::new();
    let mut t = StageTimings::default();

    let geometry = estimate_two_view(matches, &cfg.robust, &Consensus { cfg: cfg.robust })?;
    t.epipolar = clock.lap();
    log::debug!(
        "two-view: {} F inliers, {} near epipolar, {} retained",
        geometry.inliers_f.len(),
        geometry.near_epipolar.len(),
        geometry.retained.len()
    );

    let pyramids: Option<(ImagePyramid, ImagePyramid)> = match cfg.search_mode {
        SearchMode::Pyramid => {
            let (pl, pr) = rayon::join(|| build_pyramid(left, &cfg.pyramid), || build_pyramid(right, &cfg.pyramid));
            Some((pl?, pr?))
        }
        SearchMode::Fixed => None,
    };
    t.pyramid = clock.lap();

    let (h, gate) = (&geometry.homography, geometry.constraint());
    let outcomes: Vec<SearchOutcome> = src
        .par_iter()
        .map(|p| match &pyramids {
            Some((pl, pr)) => bidir_pyramid_search(pl, pr, h, &gate, p.centroid(), &cfg.search),
            None => fixed_window_search(left, right, h, &gate, p.centroid(), &cfg.search),
        })
        .collect();
    let visited = outcomes.iter().map(|o| o.visited).sum();
    let windows: Vec<Option<SearchWindow>> = outcomes.into_iter().map(|o| o.window).collect();
    t.search = clock.lap();

    let candidates = coarse_candidates(src, tgt, &windows);
    t.candidates = clock.lap();

    let annotated: Vec<CandidateMatch> = candidates
        .pairs()
        .into_par_iter()
        .map(|(i, j)| annotate_pair(i, j, &src[i], &tgt[j], left, right, matches, &cfg.local))
        .collect();
    t.local = clock.lap();

    let result = match cfg.matcher {
        Matcher::Lojogm => lojogm(&annotated, src, tgt, &cfg.local),
        Matcher::Greedy => greedy_match(&annotated, src, tgt),
    };
    t.assignment = clock.lap();
    t.total = clock.last.duration_since(clock.start).as_secs_f64();
    log::debug!("{} candidates, {} matches, {:.3} s", annotated.len(), result.pairs.len(), t.total);

    Ok(PipelineOutput { geometry, windows, visited, candidates, annotated, result, timings: t })
}
