use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use resrmn::experiment::{ModelKind, SearchSpace, DEFAULT_SWEEP_FRACTIONS};
use resrmn::readout::DEFAULT_LAMBDA_GRID;
use resrmn::reservoir::OrthoKind;

use crate::Failure;

/// Environment variable that replaces the top-level `seed`.
pub const SEED_ENV: &str = "RESRMN_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    #[default]
    Csv,
    Idx,
}

/// Memory reservoir size: `"auto"` means the sequence length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MemorySize {
    #[default]
    Auto,
    Fixed(usize),
}

impl Serialize for MemorySize {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            MemorySize::Auto => s.serialize_str("auto"),
            MemorySize::Fixed(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for MemorySize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(usize),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(n) => Ok(MemorySize::Fixed(n)),
            Raw::Str(s) if s == "auto" => Ok(MemorySize::Auto),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "n_m must be \"auto\" or an integer, got \"{s}\""
            ))),
        }
    }
}

impl fmt::Display for MemorySize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemorySize::Auto => f.write_str("auto"),
            MemorySize::Fixed(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stratified: Option<bool>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
}

fn default_fractions() -> Vec<f64> {
    DEFAULT_SWEEP_FRACTIONS.to_vec()
}

/// Model and evaluation point for eigenvalue dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub n_h: usize,
    pub n_m: usize,
    pub n_x: usize,
    pub rho: f64,
    pub omega_x: f64,
    pub omega_m: f64,
    pub omega_xm: f64,
    pub omega_b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub kinds: Vec<OrthoKind>,
    pub seed: u64,
    /// Seed of the uniform state and input probe.
    pub state_seed: u64,
    /// Evaluate at the last step of a drive over the first training
    /// sequence instead of a random probe.
    pub from_drive: bool,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            n_h: 100,
            n_m: 100,
            n_x: 1,
            rho: 1.0,
            omega_x: 1.0,
            omega_m: 1.0,
            omega_xm: 1.0,
            omega_b: 0.0,
            alpha: 1.0,
            beta: 1.0,
            kinds: OrthoKind::ALL.to_vec(),
            seed: 0,
            state_seed: 0,
            from_drive: false,
        }
    }
}

fn default_n_features() -> usize {
    1
}

fn default_n_h() -> usize {
    100
}

fn default_max_configs() -> usize {
    1000
}

fn default_grid() -> Vec<f64> {
    DEFAULT_LAMBDA_GRID.to_vec()
}

/// The configuration file. Paths are relative to the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(default)]
    pub format: DataFormat,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_labels: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,
    #[serde(default = "default_n_features")]
    pub n_features: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_kind: Option<ModelKind>,
    #[serde(default = "default_n_h")]
    pub n_h: usize,
    #[serde(default)]
    pub n_m: MemorySize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_inits: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_configs")]
    pub max_configs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_seconds: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "default_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Time-step permutation applied to training and test data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub permute_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsample: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_subsample: Option<usize>,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub search: SearchSpace,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub spectrum: SpectrumSection,
}

fn config_err(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

impl Config {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, Failure> {
        toml::from_str(text).map_err(|e| config_err(format!("{}: {e}", origin.display())))
    }

    /// Reads the file, applies the seed override and resolves defaults and
    /// relative paths.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, path)?;
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.seed = v
                .trim()
                .parse()
                .map_err(|_| config_err(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?;
        }
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let base = std::fs::canonicalize(if base.as_os_str().is_empty() { Path::new(".") } else { &base })
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        cfg.resolve(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let abs = |p: &mut Option<PathBuf>| {
            if let Some(v) = p {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        };
        abs(&mut self.train);
        abs(&mut self.test);
        abs(&mut self.train_labels);
        abs(&mut self.test_labels);
        abs(&mut self.output_dir);
        let idx = self.format == DataFormat::Idx;
        self.n_inits.get_or_insert(if idx { 5 } else { 10 });
        self.split.fraction.get_or_insert(if idx { 0.05 } else { 0.3 });
        self.split.stratified.get_or_insert(!idx);
        self.workers.get_or_insert_with(|| {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        });
    }

    fn validate(&self) -> Result<(), Failure> {
        if self.n_features == 0 {
            return Err(config_err("n_features must be at least 1"));
        }
        if self.n_h == 0 {
            return Err(config_err("n_h must be at least 1"));
        }
        if self.n_m == MemorySize::Fixed(0) {
            return Err(config_err("n_m must be \"auto\" or at least 1"));
        }
        if self.n_inits == Some(0) {
            return Err(config_err("n_inits must be at least 1"));
        }
        if self.max_configs == 0 {
            return Err(config_err("max_configs must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(config_err("workers must be at least 1"));
        }
        if self.lambda_grid.is_empty() {
            return Err(config_err("lambda_grid is empty"));
        }
        if let Some(bad) = self.lambda_grid.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(config_err(format!("lambda_grid value {bad} is not a finite non-negative number")));
        }
        if let Some(f) = self.split.fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(config_err(format!("split.fraction must be in (0, 1), got {f}")));
            }
        }
        Ok(())
    }

    pub fn required<'a, T>(value: &'a Option<T>, key: &str) -> Result<&'a T, Failure> {
        value
            .as_ref()
            .ok_or_else(|| config_err(format!("missing required key `{key}`")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let mut c = Config::parse("model_kind = \"RMN\"\n", Path::new("x.toml")).unwrap();
        c.resolve(Path::new("/base"));
        assert_eq!(c.model_kind, Some(ModelKind::Rmn));
        assert_eq!(c.n_m, MemorySize::Auto);
        assert_eq!(c.n_inits, Some(10));
        assert_eq!(c.split.fraction, Some(0.3));
        assert_eq!(c.lambda_grid, DEFAULT_LAMBDA_GRID.to_vec());
        assert_eq!(c.search, SearchSpace::default());
    }

    #[test]
    fn idx_defaults() {
        let mut c = Config::parse("format = \"idx\"\n", Path::new("x.toml")).unwrap();
        c.resolve(Path::new("/base"));
        assert_eq!(c.n_inits, Some(5));
        assert_eq!(c.split.fraction, Some(0.05));
        assert_eq!(c.split.stratified, Some(false));
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let mut c = Config::parse("train = \"a.csv\"\ntest = \"/abs/b.csv\"\n", Path::new("x")).unwrap();
        c.resolve(Path::new("/base"));
        assert_eq!(c.train.unwrap(), PathBuf::from("/base/a.csv"));
        assert_eq!(c.test.unwrap(), PathBuf::from("/abs/b.csv"));
    }

    #[test]
    fn bad_keys_are_config_errors() {
        for text in ["n_m = \"big\"\n", "unknown = 1\n", "model_kind = \"ESN\"\n", "[search]\ngamma = [1.0]\n"] {
            assert!(matches!(Config::parse(text, Path::new("x")), Err(Failure::Config(_))), "{text}");
        }
    }

    #[test]
    fn search_overrides_are_partial() {
        let c = Config::parse("[search]\nalpha = [0.5]\n", Path::new("x")).unwrap();
        assert_eq!(c.search.alpha, vec![0.5]);
        assert_eq!(c.search.beta, SearchSpace::default().beta);
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut c = Config::parse(
            "name = \"w\"\nmodel_kind = \"ResRMN_R\"\nn_m = 12\n[sweep]\n",
            Path::new("x"),
        )
        .unwrap();
        c.resolve(Path::new("/base"));
        let text = c.to_toml();
        assert_eq!(Config::parse(&text, Path::new("y")).unwrap(), c);
    }
}
