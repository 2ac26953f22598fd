//! Flat `key = value` run configuration.
//!
//! Precedence, lowest first: built-in defaults, the config file, `GSURE_MA_<KEY>`
//! environment variables, command-line flags. The resolved form lists every
//! key in a fixed order, so it can be fed back in unchanged.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gsure_core::adaptation::{Architecture, ExperimentConfig, MaskSpec, Strategy};
use gsure_core::losses::RangeMode;
use gsure_core::operators::MaskKind;

pub const ENV_PREFIX: &str = "GSURE_MA_";

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub out_dir: PathBuf,
    /// Pre-trained parameters; `None` means `<out_dir>/pretrained.tnsr`.
    pub params: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentConfig::default(),
            out_dir: PathBuf::from("out"),
            params: None,
        }
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn params_path(&self) -> PathBuf {
        self.params
            .clone()
            .unwrap_or_else(|| self.out_dir.join("pretrained.tnsr"))
    }

    /// Every key with its value, in canonical order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let e = &self.experiment;
        let s = &e.setup;
        let u = &e.net.unrolled;
        let a = &e.adaptation;
        let (range, order) = match a.gsure.range {
            RangeMode::Exact => ("exact", 16),
            RangeMode::Polynomial(k) => ("polynomial", k),
        };
        vec![
            ("size", s.size.to_string()),
            ("coils", s.coils.to_string()),
            ("ellipses", s.ellipses.to_string()),
            ("snr_db", s.snr_db.to_string()),
            ("mask", s.mask.kind.as_str().to_string()),
            ("center_lines", s.mask.center_lines.to_string()),
            ("density_power", s.mask.density_power.to_string()),
            ("center_fraction", s.mask.center_fraction.to_string()),
            ("arch", e.net.arch.as_str().to_string()),
            ("blocks", u.denoiser.blocks.to_string()),
            ("features", u.denoiser.features.to_string()),
            ("unrolls", u.unrolls.to_string()),
            ("dc_lambda", u.lambda.to_string()),
            ("dc_iters", u.dc_iters.to_string()),
            ("train_images", e.train_images.to_string()),
            ("validation_images", e.validation_images.to_string()),
            ("test_images", e.test_images.to_string()),
            ("data_seed", e.data_seed.to_string()),
            ("pretrain_acceleration", e.pretrain_acceleration.to_string()),
            ("pretrain_epochs", e.pretrain.epochs.to_string()),
            ("pretrain_lr", e.pretrain.lr.to_string()),
            ("batch_size", e.pretrain.batch_size.to_string()),
            ("strategy", a.strategy.to_string()),
            ("adapt_acceleration", e.adapt_acceleration.to_string()),
            ("adapt_epochs", a.epochs.to_string()),
            ("adapt_lr", a.lr.to_string()),
            ("test_index", e.test_index.to_string()),
            ("ssdu_dc_fraction", a.ssdu_dc_fraction.to_string()),
            ("gsure_probes", a.gsure.mc_probes.to_string()),
            ("gsure_epsilon_scale", a.gsure.epsilon_scale.to_string()),
            (
                "gsure_weight",
                if a.gsure.divergence_weight_sigma2 {
                    "sigma2"
                } else {
                    "unit"
                }
                .to_string(),
            ),
            ("gsure_range", range.to_string()),
            ("gsure_order", order.to_string()),
            ("sweep_accelerations", join(&e.sweep_accelerations)),
            ("sweep_strategies", join(&e.sweep_strategies)),
            ("seed", e.seed.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            (
                "params",
                self.params
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
        ]
    }

    pub fn keys() -> Vec<&'static str> {
        Self::default().pairs().into_iter().map(|(k, _)| k).collect()
    }

    /// The resolved config as config-file text.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# resolved configuration\n");
        for (k, v) in self.pairs() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Applies `key = value` overrides on top of `self`.
    pub fn with_overrides(&self, overrides: &BTreeMap<String, String>) -> Result<Self> {
        let known = Self::keys();
        if let Some(bad) = overrides.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(ConfigError(format!("unknown config key `{bad}`")));
        }
        let mut map: BTreeMap<&str, String> = self.pairs().into_iter().collect();
        for (k, v) in overrides {
            let key = known.iter().find(|q| **q == k.as_str()).expect("checked above");
            map.insert(key, v.clone());
        }
        from_map(&map)
    }

    /// Defaults, then `file`, then environment, then `flags`.
    pub fn load(
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        flags: &BTreeMap<String, String>,
    ) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
            cfg = cfg.with_overrides(&parse_text(&text)?)?;
        }
        let mut from_env = BTreeMap::new();
        for (name, value) in env {
            if let Some(key) = name.strip_prefix(ENV_PREFIX) {
                from_env.insert(key.to_ascii_lowercase(), value);
            }
        }
        cfg = cfg
            .with_overrides(&from_env)
            .map_err(|e| ConfigError(format!("{e} (from environment, prefix {ENV_PREFIX})")))?;
        cfg.with_overrides(flags)
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(ConfigError(format!("line {}: empty key", n + 1)));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(ConfigError(format!("line {}: duplicate key `{key}`", n + 1)));
        }
    }
    Ok(out)
}

fn get<T: std::str::FromStr>(map: &BTreeMap<&str, String>, key: &str) -> Result<T> {
    let raw = &map[key];
    raw.parse()
        .map_err(|_| ConfigError(format!("invalid value `{raw}` for `{key}`")))
}

fn list<T: std::str::FromStr>(map: &BTreeMap<&str, String>, key: &str) -> Result<Vec<T>> {
    map[key]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| ConfigError(format!("invalid entry `{s}` in `{key}`")))
        })
        .collect()
}

fn from_map(map: &BTreeMap<&str, String>) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let e = &mut cfg.experiment;
    e.setup.size = get(map, "size")?;
    e.setup.coils = get(map, "coils")?;
    e.setup.ellipses = get(map, "ellipses")?;
    e.setup.snr_db = get(map, "snr_db")?;
    let mask = &map["mask"];
    e.setup.mask = MaskSpec {
        kind: MaskKind::parse(mask).ok_or_else(|| ConfigError(format!("invalid value `{mask}` for `mask`")))?,
        center_lines: get(map, "center_lines")?,
        density_power: get(map, "density_power")?,
        center_fraction: get(map, "center_fraction")?,
    };
    let arch = &map["arch"];
    e.net.arch = Architecture::parse(arch).ok_or_else(|| ConfigError(format!("invalid value `{arch}` for `arch`")))?;
    e.net.unrolled.denoiser.blocks = get(map, "blocks")?;
    e.net.unrolled.denoiser.features = get(map, "features")?;
    e.net.unrolled.unrolls = get(map, "unrolls")?;
    e.net.unrolled.lambda = get(map, "dc_lambda")?;
    e.net.unrolled.dc_iters = get(map, "dc_iters")?;
    e.train_images = get(map, "train_images")?;
    e.validation_images = get(map, "validation_images")?;
    e.test_images = get(map, "test_images")?;
    e.data_seed = get(map, "data_seed")?;
    e.pretrain_acceleration = get(map, "pretrain_acceleration")?;
    e.pretrain.epochs = get(map, "pretrain_epochs")?;
    e.pretrain.lr = get(map, "pretrain_lr")?;
    e.pretrain.batch_size = get(map, "batch_size")?;
    e.adaptation.strategy = get::<Strategy>(map, "strategy")?;
    e.adapt_acceleration = get(map, "adapt_acceleration")?;
    e.adaptation.epochs = get(map, "adapt_epochs")?;
    e.adaptation.lr = get(map, "adapt_lr")?;
    e.test_index = get(map, "test_index")?;
    e.adaptation.ssdu_dc_fraction = get(map, "ssdu_dc_fraction")?;
    e.adaptation.gsure.mc_probes = get(map, "gsure_probes")?;
    e.adaptation.gsure.epsilon_scale = get(map, "gsure_epsilon_scale")?;
    e.adaptation.gsure.divergence_weight_sigma2 = match map["gsure_weight"].as_str() {
        "sigma2" => true,
        "unit" => false,
        other => return Err(ConfigError(format!("invalid value `{other}` for `gsure_weight`"))),
    };
    let order: usize = get(map, "gsure_order")?;
    e.adaptation.gsure.range = match map["gsure_range"].as_str() {
        "exact" => RangeMode::Exact,
        "polynomial" => RangeMode::Polynomial(order),
        other => return Err(ConfigError(format!("invalid value `{other}` for `gsure_range`"))),
    };
    e.sweep_accelerations = list(map, "sweep_accelerations")?;
    e.sweep_strategies = list(map, "sweep_strategies")?;
    e.seed = get(map, "seed")?;
    cfg.out_dir = PathBuf::from(&map["out_dir"]);
    cfg.params = Some(&map["params"]).filter(|p| !p.is_empty()).map(PathBuf::from);
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<()> {
    let e = &cfg.experiment;
    let fail = |m: String| Err(ConfigError(m));
    if e.setup.size < 4 {
        return fail(format!("size {} must be at least 4", e.setup.size));
    }
    if e.setup.coils == 0 || e.setup.ellipses == 0 {
        return fail("coils and ellipses must be positive".into());
    }
    if e.net.unrolled.denoiser.features == 0 {
        return fail("features must be positive".into());
    }
    if e.net.arch == Architecture::Unrolled && (e.net.unrolled.unrolls == 0 || e.net.unrolled.lambda <= 0.0) {
        return fail("unrolled nets need unrolls >= 1 and dc_lambda > 0".into());
    }
    if e.pretrain.batch_size == 0 || e.pretrain.lr <= 0.0 {
        return fail("batch_size and pretrain_lr must be positive".into());
    }
    if let RangeMode::Polynomial(0) = e.adaptation.gsure.range {
        return fail("gsure_order must be at least 1".into());
    }
    e.validate().map_err(|err| ConfigError(err.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn resolved_text_round_trips() {
        let cfg = RunConfig::default()
            .with_overrides(&flags(&[
                ("size", "16"),
                ("sweep_strategies", "gsure"),
                ("gsure_range", "exact"),
            ]))
            .unwrap();
        let again = RunConfig::default()
            .with_overrides(&parse_text(&cfg.to_text()).unwrap())
            .unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_text(), cfg.to_text());
    }

    #[test]
    fn defaults_parse_back_to_defaults() {
        let text = RunConfig::default().to_text();
        let parsed = RunConfig::default()
            .with_overrides(&parse_text(&text).unwrap())
            .unwrap();
        assert_eq!(parsed, RunConfig::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::default()
            .with_overrides(&flags(&[("sizee", "3")]))
            .unwrap_err();
        assert!(err.0.contains("`sizee`"), "{err}");
    }

    #[test]
    fn comments_blank_lines_and_errors() {
        let m = parse_text("# header\n\nsize = 8  # inline\n coils=2\n").unwrap();
        assert_eq!(m["size"], "8");
        assert_eq!(m["coils"], "2");
        assert!(parse_text("size 8").unwrap_err().0.contains("line 1"));
        assert!(parse_text("size = 8\nsize = 9").unwrap_err().0.contains("duplicate"));
        let err = RunConfig::default()
            .with_overrides(&flags(&[("adapt_lr", "fast")]))
            .unwrap_err();
        assert!(err.0.contains("adapt_lr"));
    }

    #[test]
    fn precedence_is_file_env_flag() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "size = 16\ncoils = 2\nseed = 1\n").unwrap();
        let env = vec![
            ("GSURE_MA_COILS".to_string(), "3".to_string()),
            ("GSURE_MA_SEED".to_string(), "2".to_string()),
            ("HOME".to_string(), "/".to_string()),
        ];
        let cfg = RunConfig::load(Some(&path), env, &flags(&[("seed", "7")])).unwrap();
        assert_eq!(cfg.experiment.setup.size, 16);
        assert_eq!(cfg.experiment.setup.coils, 3);
        assert_eq!(cfg.experiment.seed, 7);

        let bad = RunConfig::load(
            None,
            vec![("GSURE_MA_NOPE".to_string(), "1".to_string())],
            &BTreeMap::new(),
        );
        assert!(bad.unwrap_err().0.contains("`nope`"));
    }

    #[test]
    fn invalid_combinations_are_config_errors() {
        for f in [
            flags(&[("adapt_epochs", "0")]),
            flags(&[("test_index", "9")]),
            flags(&[("gsure_order", "0")]),
            flags(&[("strategy", "sure")]),
            flags(&[("mask", "radial")]),
        ] {
            assert!(RunConfig::default().with_overrides(&f).is_err(), "{f:?}");
        }
    }

    #[test]
    fn params_default_to_out_dir() {
        let cfg = RunConfig::default()
            .with_overrides(&flags(&[("out_dir", "/tmp/x")]))
            .unwrap();
        assert_eq!(cfg.params_path(), PathBuf::from("/tmp/x/pretrained.tnsr"));
    }
}
