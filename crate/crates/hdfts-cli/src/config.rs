//! Key-value run configuration: `key = value` lines, `#` comments.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

use hdfts::conformal::PiMode;
use hdfts::factor::FactorSelectConfig;
use hdfts::fanova::DecompositionMode;
use hdfts::smoothing::{LambdaChoice, SmootherConfig, WeightMode};
use hdfts::tsf::EngineKind;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub method: DecompositionMode,
    pub engine: EngineKind,
    pub pi_mode: PiMode,
    pub alpha: f64,
    /// Explicit horizons; empty means "1..=10 capped by the test window".
    pub horizons: Vec<usize>,
    pub split_proportions: (f64, f64, f64),
    /// Last training year; `None` derives it from the split plan.
    pub first_train_end: Option<i32>,
    pub smoother: SmootherConfig,
    /// Explicit age range for the grid; `None` derives the grid from the
    /// first input file.
    pub ages: Option<(u32, u32)>,
    /// Rate column names; `None` takes every non-Year/Age column of the
    /// first input file.
    pub groups: Option<Vec<String>>,
    pub factor: FactorSelectConfig,
    pub quantile_p_max: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: DecompositionMode::TwaOwa,
            engine: EngineKind::Ets,
            pi_mode: PiMode::None,
            alpha: 0.05,
            horizons: Vec::new(),
            split_proportions: (0.6, 0.2, 0.2),
            first_train_end: None,
            smoother: SmootherConfig::default(),
            ages: None,
            groups: None,
            factor: FactorSelectConfig::default(),
            quantile_p_max: 3,
        }
    }
}

fn parse_range(value: &str) -> Result<Vec<usize>> {
    if let Some((lo, hi)) = value.split_once('-') {
        let lo: usize = lo.trim().parse()?;
        let hi: usize = hi.trim().parse()?;
        if lo == 0 || hi < lo {
            bail!("bad horizon range {value:?}");
        }
        return Ok((lo..=hi).collect());
    }
    value
        .split(',')
        .map(|s| Ok(s.trim().parse::<usize>()?))
        .collect()
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let Some(path) = path else {
        return Ok(cfg);
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;

    let mut pairs = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected key = value", path.display(), lineno + 1);
        };
        pairs.insert(
            key.trim().to_ascii_lowercase().replace('_', "-"),
            value.trim().to_string(),
        );
    }

    for (key, value) in pairs {
        match key.as_str() {
            "method" => {
                cfg.method = match value.to_ascii_lowercase().as_str() {
                    "twa-owa-ffm" | "twa+owa+ffm" => DecompositionMode::TwaOwa,
                    "twa-ffm" | "twa+ffm" => DecompositionMode::TwaOnly,
                    other => bail!("unknown method {other:?}"),
                }
            }
            "engine" => cfg.engine = value.parse()?,
            "pi" | "pi-mode" => cfg.pi_mode = value.parse()?,
            "alpha" => cfg.alpha = value.parse()?,
            "horizons" => cfg.horizons = parse_range(&value)?,
            "split" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()?;
                if parts.len() != 3 {
                    bail!("split needs three proportions, got {value:?}");
                }
                cfg.split_proportions = (parts[0], parts[1], parts[2]);
            }
            "first-train-end" => cfg.first_train_end = Some(value.parse()?),
            "lambda" => {
                cfg.smoother.lambda = if value.eq_ignore_ascii_case("auto") {
                    LambdaChoice::Auto
                } else {
                    LambdaChoice::Fixed(value.parse()?)
                }
            }
            "penalty-order" => cfg.smoother.penalty_order = value.parse()?,
            "monotone-from" => {
                cfg.smoother.monotone_from = if value.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(value.parse()?)
                }
            }
            "weight-mode" => {
                cfg.smoother.weight_mode = match value.to_ascii_lowercase().as_str() {
                    "uniform" => WeightMode::Uniform,
                    "inverse-variance-proxy" => WeightMode::InverseVarianceProxy,
                    other => bail!("unknown weight mode {other:?}"),
                }
            }
            "ages" => {
                let (lo, hi) = value
                    .split_once('-')
                    .with_context(|| format!("ages must be lo-hi, got {value:?}"))?;
                cfg.ages = Some((lo.trim().parse()?, hi.trim().parse()?));
            }
            "groups" => {
                cfg.groups = Some(value.split(',').map(|s| s.trim().to_string()).collect())
            }
            "q-max" => cfg.factor.q_max = Some(value.parse()?),
            "phi" => {
                cfg.factor.phi = if value.eq_ignore_ascii_case("auto") {
                    None
                } else {
                    Some(value.parse()?)
                }
            }
            "q" => {
                cfg.factor.q_override = if value.eq_ignore_ascii_case("auto") {
                    None
                } else {
                    Some(value.parse()?)
                }
            }
            "quantile-p-max" => cfg.quantile_p_max = value.parse()?,
            other => bail!("unknown config key {other:?}"),
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn parses_every_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(
            f,
            "method = twa-ffm\nengine = arima\npi = sequential\nalpha = 0.1\n\
             horizons = 1-5\nsplit = 0.5,0.3,0.2\nfirst-train-end = 2010\n\
             lambda = 2.5\npenalty-order = 3\nmonotone-from = none\n\
             ages = 0-99\ngroups = F,M\nq-max = 7\nphi = 0.2\nq = 2\n\
             quantile-p-max = 4\n# comment"
        )
        .unwrap();
        let cfg = load_config(Some(&path)).unwrap();
        assert_eq!(cfg.method, DecompositionMode::TwaOnly);
        assert_eq!(cfg.engine, EngineKind::Arima);
        assert_eq!(cfg.pi_mode, PiMode::Sequential);
        assert_eq!(cfg.horizons, vec![1, 2, 3, 4, 5]);
        assert_eq!(cfg.first_train_end, Some(2010));
        assert_eq!(cfg.smoother.lambda, LambdaChoice::Fixed(2.5));
        assert_eq!(cfg.smoother.monotone_from, None);
        assert_eq!(cfg.ages, Some((0, 99)));
        assert_eq!(cfg.factor.q_override, Some(2));
        assert_eq!(cfg.quantile_p_max, 4);
    }

    #[test]
    fn missing_config_gives_defaults() {
        let cfg = load_config(None).unwrap();
        assert_eq!(cfg.method, DecompositionMode::TwaOwa);
        assert_eq!(cfg.pi_mode, PiMode::None);
        assert!(cfg.horizons.is_empty());
    }

    #[test]
    fn unknown_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "bogus = 1\n").unwrap();
        assert!(load_config(Some(&path)).is_err());
    }
}
