//! Pipeline tunables and the flat `key = value` config format.

use std::str::FromStr;

use polymatch_core::epipolar::RobustConfig;
use polymatch_core::groundtruth::GtWeights;
use polymatch_core::local_match::LocalMatchConfig;
use polymatch_core::pyramid::{PyramidConfig, SearchConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    Pyramid,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Matcher {
    Lojogm,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub robust: RobustConfig,
    pub pyramid: PyramidConfig,
    pub search: SearchConfig,
    pub local: LocalMatchConfig,
    pub gt: GtWeights,
    /// SAS exponent.
    pub z: f64,
    /// Centroid tolerance of depth-derived ground truth.
    pub lambda_px: f64,
    pub dp_eps: f64,
    pub min_area: f64,
    pub seed: u64,
    pub search_mode: SearchMode,
    pub matcher: Matcher,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            robust: RobustConfig::default(),
            pyramid: PyramidConfig::default(),
            search: SearchConfig::default(),
            local: LocalMatchConfig::default(),
            gt: GtWeights::default(),
            z: 5.0,
            lambda_px: 10.0,
            dp_eps: 1.5,
            min_area: 50.0,
            seed: 0,
            search_mode: SearchMode::Pyramid,
            matcher: Matcher::Lojogm,
        }
    }
}

/// Splits `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Schema(format!("config line {}: expected key = value", n + 1)));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::Schema(format!("config key {key}: cannot parse {v:?}")))
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        let p = |v: &str| parse_value::<f64>(key, v);
        let u = |v: &str| parse_value::<usize>(key, v);
        match key {
            "phi" => self.search.phi = u(v)?,
            "tau" => self.search.tau = u(v)?,
            "baseline_window" => self.search.baseline_window = u(v)?,
            "final_window" => self.search.final_window = u(v)?,
            "min_clip_fraction" => self.search.min_clip_fraction = p(v)?,
            "max_levels" => self.search.max_levels = u(v)?,
            "pyramid_factor" => self.pyramid.factor = u(v)?,
            "stop_dim" => self.pyramid.stop_dim = u(v)?,
            "pyramid_sigma" => self.pyramid.sigma = p(v)?,
            "epsilon" | "epipolar_eps" => {
                self.robust.epipolar_eps = p(v)?;
                self.search.epipolar_eps = self.robust.epipolar_eps;
            }
            "ransac_iterations" => self.robust.max_iterations = u(v)?,
            "inlier_threshold" => self.robust.inlier_threshold = p(v)?,
            "confidence" => self.robust.confidence = p(v)?,
            "gamma" => self.local.gamma = u(v)?,
            "xi" => self.local.xi = p(v)?,
            "k_scale" => self.local.k_scale = p(v)?,
            "k_neighbors" => self.local.k_neighbors = u(v)?,
            "iota" => self.local.iota = p(v)?,
            "ncc_floor" => self.local.ncc_floor = p(v)?,
            "rectify_min_pts" => self.local.rectify_min_pts = u(v)?,
            "z" => self.z = p(v)?,
            "sigma" => self.gt.sigma = p(v)?,
            "alpha" => {
                let (sigma, abs, conf) = (self.gt.sigma, self.gt.abs_threshold, self.gt.confidence_margin);
                self.gt = GtWeights::new(p(v)?).map_err(|e| CliError::Schema(format!("alpha: {e}")))?;
                (self.gt.sigma, self.gt.abs_threshold, self.gt.confidence_margin) = (sigma, abs, conf);
            }
            "lambda_px" => self.lambda_px = p(v)?,
            "lambda_conf" => self.gt.confidence_margin = p(v)?,
            "abs_threshold" => self.gt.abs_threshold = p(v)?,
            "dp_eps" => self.dp_eps = p(v)?,
            "min_area" => self.min_area = p(v)?,
            "seed" => {
                self.seed = parse_value(key, v)?;
                self.robust.seed = self.seed;
            }
            "search_mode" => {
                self.search_mode = match v {
                    "pyramid" => SearchMode::Pyramid,
                    "fixed" => SearchMode::Fixed,
                    _ => return Err(CliError::Schema(format!("search_mode: expected pyramid|fixed, got {v:?}"))),
                }
            }
            "matcher" => {
                self.matcher = match v {
                    "lojogm" => Matcher::Lojogm,
                    "greedy" => Matcher::Greedy,
                    _ => return Err(CliError::Schema(format!("matcher: expected lojogm|greedy, got {v:?}"))),
                }
            }
            _ => return Err(CliError::Schema(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.robust.seed = seed;
        self
    }

    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (k, v) in parse_pairs(text)? {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let wrap = |r: polymatch_core::Result<()>| r.map_err(|e| CliError::Schema(format!("config: {e}")));
        wrap(self.robust.validate())?;
        wrap(self.search.validate())?;
        wrap(self.local.validate())?;
        if self.pyramid.factor < 2 || self.pyramid.stop_dim == 0 || !(self.pyramid.sigma >= 0.0) {
            return Err(CliError::Schema("config: pyramid needs factor >= 2, stop_dim >= 1, sigma >= 0".into()));
        }
        let positive = [self.z, self.lambda_px, self.gt.sigma, self.min_area + 1.0];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.dp_eps >= 0.0) {
            return Err(CliError::Schema("config: z, lambda_px, sigma must be > 0; dp_eps, min_area >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.gt.abs_threshold) || !(self.gt.confidence_margin >= 0.0) {
            return Err(CliError::Schema("config: abs_threshold in [0, 1], lambda_conf >= 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!((c.search.phi, c.search.tau, c.search.baseline_window), (15, 25, 50));
        assert_eq!((c.pyramid.factor, c.pyramid.stop_dim), (3, 200));
        assert_eq!((c.local.gamma, c.local.k_neighbors), (8, 4));
        assert_eq!((c.local.xi, c.local.k_scale, c.local.iota), (6.0, 0.1, 5.0));
        assert_eq!((c.z, c.gt.sigma, c.gt.alpha, c.lambda_px), (5.0, 40.0, 0.5, 10.0));
        assert_eq!((c.gt.confidence_margin, c.gt.abs_threshold, c.dp_eps, c.min_area), (0.1, 0.3, 1.5, 50.0));
        assert_eq!(c.robust.epipolar_eps, 3.0);
    }

    #[test]
    fn parses_and_overrides() {
        let c = PipelineConfig::from_text("# comment\ntau = 31\n\nmatcher = greedy\nalpha = 0.8\nseed=7\n").unwrap();
        assert_eq!(c.search.tau, 31);
        assert_eq!(c.matcher, Matcher::Greedy);
        assert!((c.gt.sum() - 1.0).abs() < 1e-12);
        assert_eq!((c.seed, c.robust.seed), (7, 7));
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(PipelineConfig::from_text("taw = 3"), Err(CliError::Schema(_))));
        assert!(PipelineConfig::from_text("tau = 4").is_err());
        assert!(PipelineConfig::from_text("tau").is_err());
        assert!(PipelineConfig::from_text("iota = abc").is_err());
    }
}
