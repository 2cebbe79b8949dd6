//! Pipeline settings and their `key=value` file format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::LocalScale;
use crate::outlier::{ForestOptions, DEFAULT_SUBSAMPLE};
use crate::postprocess::GhtParams;
use crate::se::RefineScope;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    Ss,
    #[default]
    Ms,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ss" => Ok(Mode::Ss),
            "ms" => Ok(Mode::Ms),
            other => Err(Error::Config(format!("mode must be ss or ms, got {other:?}"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ss => "ss",
            Mode::Ms => "ms",
        })
    }
}

/// How `sigma_k` is read: a neighbor rank or a fixed color distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SigmaMode {
    #[default]
    Local,
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub target_width: usize,
    pub target_height: usize,
    /// Spatial neighborhood as a fraction of image height and width.
    pub r: f64,
    pub sigma_k: f64,
    pub sigma_mode: SigmaMode,
    pub knn_k: usize,
    pub ss_scale: usize,
    pub ms_scales: Vec<usize>,
    pub n_trees: usize,
    pub seed: u64,
    /// `None` means proportional to the pixel count (`10 N` and `0.1 N`).
    pub ght_nu: Option<f64>,
    pub ght_kappa: Option<f64>,
    pub ght_tau: f64,
    pub ght_omega: f64,
    pub mode: Mode,
    pub refine_max_iters: usize,
    pub refine_scope: RefineScope,
    pub forest_train_all: bool,
    pub remove_artifacts: bool,
    pub color_constancy: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            target_width: 768,
            target_height: 560,
            r: 0.3,
            sigma_k: 30.0,
            sigma_mode: SigmaMode::Local,
            knn_k: 50,
            ss_scale: 400,
            ms_scales: (200..=700).step_by(50).collect(),
            n_trees: 100,
            seed: 0,
            ght_nu: None,
            ght_kappa: None,
            ght_tau: GhtParams::DEFAULT_TAU,
            ght_omega: GhtParams::DEFAULT_OMEGA,
            mode: Mode::Ms,
            refine_max_iters: 100,
            refine_scope: RefineScope::Adjacent,
            forest_train_all: false,
            remove_artifacts: true,
            color_constancy: true,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn parse_auto(key: &str, value: &str) -> Result<Option<f64>> {
    if value.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn fmt_auto(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |v| v.to_string())
}

impl PipelineConfig {
    /// Applies `key=value` lines on top of the defaults. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "target_width" => self.target_width = parse_num(key, value)?,
            "target_height" => self.target_height = parse_num(key, value)?,
            "r" => self.r = parse_num(key, value)?,
            "sigma_k" => self.sigma_k = parse_num(key, value)?,
            "sigma_mode" => {
                self.sigma_mode = match value.to_ascii_lowercase().as_str() {
                    "local" => SigmaMode::Local,
                    "fixed" => SigmaMode::Fixed,
                    _ => return Err(Error::Config(format!("sigma_mode must be local or fixed, got {value:?}"))),
                }
            }
            "knn_k" => self.knn_k = parse_num(key, value)?,
            "ss_scale" => self.ss_scale = parse_num(key, value)?,
            "ms_scales" => {
                self.ms_scales = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_num(key, s))
                    .collect::<Result<_>>()?
            }
            "n_trees" => self.n_trees = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "ght_nu" => self.ght_nu = parse_auto(key, value)?,
            "ght_kappa" => self.ght_kappa = parse_auto(key, value)?,
            "ght_tau" => self.ght_tau = parse_num(key, value)?,
            "ght_omega" => self.ght_omega = parse_num(key, value)?,
            "mode" => self.mode = value.parse()?,
            "refine_max_iters" => self.refine_max_iters = parse_num(key, value)?,
            "refine_scope" => {
                self.refine_scope = match value.to_ascii_lowercase().as_str() {
                    "adjacent" => RefineScope::Adjacent,
                    "all" => RefineScope::All,
                    _ => return Err(Error::Config(format!("refine_scope must be adjacent or all, got {value:?}"))),
                }
            }
            "forest_train_all" => self.forest_train_all = parse_bool(key, value)?,
            "remove_artifacts" => self.remove_artifacts = parse_bool(key, value)?,
            "color_constancy" => self.color_constancy = parse_bool(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("target_width", self.target_width),
            ("target_height", self.target_height),
            ("knn_k", self.knn_k),
            ("ss_scale", self.ss_scale),
            ("n_trees", self.n_trees),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.ms_scales.is_empty() && self.mode == Mode::Ms {
            return Err(Error::Config("ms_scales must not be empty in ms mode".into()));
        }
        if self.ms_scales.contains(&0) {
            return Err(Error::Config("ms_scales must be positive".into()));
        }
        if !(self.r > 0.0 && self.r <= 1.0) {
            return Err(Error::Config(format!("r must lie in (0, 1], got {}", self.r)));
        }
        if !(self.sigma_k > 0.0 && self.sigma_k.is_finite()) {
            return Err(Error::Config("sigma_k must be positive".into()));
        }
        if self.sigma_mode == SigmaMode::Local && self.sigma_k.fract() != 0.0 {
            return Err(Error::Config("sigma_k must be a whole neighbor rank in local mode".into()));
        }
        for (name, v) in [("ght_nu", self.ght_nu), ("ght_kappa", self.ght_kappa)] {
            if v.is_some_and(|v| !(v >= 0.0)) {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        if !(self.ght_tau >= 0.0) {
            return Err(Error::Config("ght_tau must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.ght_omega) {
            return Err(Error::Config("ght_omega must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn local_scale(&self) -> LocalScale {
        match self.sigma_mode {
            SigmaMode::Local => LocalScale::Neighbor(self.sigma_k as usize),
            SigmaMode::Fixed => LocalScale::Fixed(self.sigma_k),
        }
    }

    pub fn ght_params(&self, n_pixels: usize) -> GhtParams {
        let auto = GhtParams::for_pixels(n_pixels);
        GhtParams {
            nu: self.ght_nu.unwrap_or(auto.nu),
            tau: self.ght_tau,
            kappa: self.ght_kappa.unwrap_or(auto.kappa),
            omega: self.ght_omega,
        }
    }

    /// Forest settings for one superpixel scale, seeded by `seed + scale`.
    pub fn forest_options(&self, scale: usize) -> ForestOptions {
        ForestOptions {
            n_trees: self.n_trees,
            subsample: (!self.forest_train_all).then_some(DEFAULT_SUBSAMPLE),
            seed: self.seed.wrapping_add(scale as u64),
        }
    }

    /// Superpixel counts used by the current mode.
    pub fn scales(&self) -> Vec<usize> {
        match self.mode {
            Mode::Ss => vec![self.ss_scale],
            Mode::Ms => self.ms_scales.clone(),
        }
    }
}

/// Renders every key in the format accepted by [`PipelineConfig::parse`].
impl fmt::Display for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scales: Vec<String> = self.ms_scales.iter().map(|s| s.to_string()).collect();
        writeln!(f, "target_width={}", self.target_width)?;
        writeln!(f, "target_height={}", self.target_height)?;
        writeln!(f, "r={}", self.r)?;
        writeln!(f, "sigma_k={}", self.sigma_k)?;
        writeln!(f, "sigma_mode={}", if self.sigma_mode == SigmaMode::Local { "local" } else { "fixed" })?;
        writeln!(f, "knn_k={}", self.knn_k)?;
        writeln!(f, "ss_scale={}", self.ss_scale)?;
        writeln!(f, "ms_scales={}", scales.join(","))?;
        writeln!(f, "n_trees={}", self.n_trees)?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "ght_nu={}", fmt_auto(self.ght_nu))?;
        writeln!(f, "ght_kappa={}", fmt_auto(self.ght_kappa))?;
        writeln!(f, "ght_tau={}", self.ght_tau)?;
        writeln!(f, "ght_omega={}", self.ght_omega)?;
        writeln!(f, "mode={}", self.mode)?;
        writeln!(f, "refine_max_iters={}", self.refine_max_iters)?;
        writeln!(f, "refine_scope={}", if self.refine_scope == RefineScope::All { "all" } else { "adjacent" })?;
        writeln!(f, "forest_train_all={}", self.forest_train_all)?;
        writeln!(f, "remove_artifacts={}", self.remove_artifacts)?;
        writeln!(f, "color_constancy={}", self.color_constancy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!((c.target_width, c.target_height), (768, 560));
        assert_eq!((c.r, c.sigma_k, c.knn_k, c.ss_scale), (0.3, 30.0, 50, 400));
        assert_eq!(c.ms_scales, vec![200, 250, 300, 350, 400, 450, 500, 550, 600, 650, 700]);
        assert_eq!(c.local_scale(), LocalScale::Neighbor(30));
        c.validate().unwrap();
    }

    #[test]
    fn parse_overrides() {
        let c = PipelineConfig::parse("# comment\nmode = ss\nms_scales=100, 150\nseed=9\nght_nu=auto\nght_kappa=3.5\n\n")
            .unwrap();
        assert_eq!(c.mode, Mode::Ss);
        assert_eq!(c.ms_scales, vec![100, 150]);
        assert_eq!(c.seed, 9);
        assert_eq!((c.ght_nu, c.ght_kappa), (None, Some(3.5)));
        assert_eq!(c.scales(), vec![400]);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(PipelineConfig::parse("knn=5"), Err(Error::Config(_))));
        assert!(matches!(PipelineConfig::parse("just text"), Err(Error::Config(_))));
        assert!(matches!(PipelineConfig::parse("n_trees=0"), Err(Error::Config(_))));
        assert!(matches!(PipelineConfig::parse("ms_scales="), Err(Error::Config(_))));
    }

    #[test]
    fn display_round_trips() {
        let mut c = PipelineConfig::default();
        c.ght_nu = Some(12.5);
        c.refine_scope = RefineScope::All;
        c.sigma_mode = SigmaMode::Fixed;
        c.sigma_k = 12.25;
        assert_eq!(PipelineConfig::parse(&c.to_string()).unwrap(), c);
    }

    #[test]
    fn auto_ght_scales_with_pixels() {
        let p = PipelineConfig::default().ght_params(1000);
        assert_eq!((p.nu, p.kappa, p.tau, p.omega), (10000.0, 100.0, 24.0, 0.5));
    }

    #[test]
    fn per_scale_seeds() {
        let c = PipelineConfig { seed: 5, ..Default::default() };
        assert_eq!(c.forest_options(200).seed, 205);
        assert_eq!(c.forest_options(200).subsample, Some(256));
    }
}
