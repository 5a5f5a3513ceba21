use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::solvers::{SolverConfig, SolverKind, StepPolicy};

use super::{ExperimentSpec, MOverN};

/// Partial experiment settings from a config file or command line. Later
/// layers win field by field.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpecOverrides {
    pub n: Option<usize>,
    pub m_over_n: Option<Vec<MOverN>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub solvers: Option<Vec<SolverKind>>,
    pub tau0: Option<f64>,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    pub step: Option<StepPolicy>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub threshold: Option<f64>,
    pub power_iters: Option<usize>,
    pub truncate_twf: Option<bool>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub deterministic: Option<bool>,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Format(format!(
            "invalid boolean '{value}' for '{key}'"
        ))),
    }
}

impl SpecOverrides {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut o = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim().replace('-', "_");
            let value = value.trim();
            o.set(&key, value)
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(o)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n" => self.n = Some(parse(key, value)?),
            "m_over_n" => self.m_over_n = Some(MOverN::parse_list(value)?),
            "trials" => self.trials = Some(parse(key, value)?),
            "seed" | "base_seed" => self.seed = Some(parse(key, value)?),
            "solvers" | "solver" => {
                self.solvers = Some(
                    value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(str::parse)
                        .collect::<Result<_>>()?,
                )
            }
            "tau0" => self.tau0 = Some(parse(key, value)?),
            "tau1" => self.tau1 = Some(parse(key, value)?),
            "tau2" => self.tau2 = Some(parse(key, value)?),
            "step" => self.step = Some(value.parse()?),
            "max_iters" | "iter_cap" => self.max_iters = Some(parse(key, value)?),
            "tol" | "mse_tol" => self.tol = Some(parse(key, value)?),
            "threshold" => self.threshold = Some(parse(key, value)?),
            "power_iters" => self.power_iters = Some(parse(key, value)?),
            "truncate_twf" => self.truncate_twf = Some(parse_bool(key, value)?),
            "out" => self.out = Some(PathBuf::from(value)),
            "threads" => self.threads = Some(parse(key, value)?),
            "deterministic" => self.deterministic = Some(parse_bool(key, value)?),
            other => return Err(Error::Format(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// `self` with every field set in `higher` replaced.
    pub fn merged(self, higher: SpecOverrides) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => {
                Self { $($f: higher.$f.or(self.$f)),* }
            };
        }
        pick!(
            n,
            m_over_n,
            trials,
            seed,
            solvers,
            tau0,
            tau1,
            tau2,
            step,
            max_iters,
            tol,
            threshold,
            power_iters,
            truncate_twf,
            out,
            threads,
            deterministic
        )
    }

    /// Applies the overrides on top of `base`.
    pub fn apply(&self, mut base: ExperimentSpec) -> Result<ExperimentSpec> {
        if let Some(n) = self.n {
            base.n = n;
        }
        if let Some(r) = &self.m_over_n {
            base.m_over_n = r.clone();
        }
        if let Some(t) = self.trials {
            base.trials = t;
        }
        if let Some(s) = self.seed {
            base.base_seed = s;
        }
        if let Some(s) = &self.solvers {
            base.solvers = s.clone();
        }
        if let Some(t) = self.threshold {
            base.threshold = t;
        }
        if let Some(c) = self.max_iters {
            base.iter_cap = c;
        }
        if let Some(o) = &self.out {
            base.out = Some(o.clone());
        }
        if let Some(t) = self.threads {
            base.threads = t;
        }
        if let Some(d) = self.deterministic {
            base.deterministic = d;
        }
        for kind in base.solvers.clone() {
            let mut cfg = base
                .configs
                .get(&kind)
                .copied()
                .unwrap_or_else(|| SolverConfig::for_solver(kind));
            self.apply_to_config(kind, &mut cfg);
            base.configs.insert(kind, cfg);
        }
        base.validate()?;
        Ok(base)
    }

    fn apply_to_config(&self, kind: SolverKind, cfg: &mut SolverConfig) {
        if let Some(t) = self.tau0 {
            cfg.truncation.tau0 = t;
        }
        if let Some(t) = self.tau1 {
            cfg.truncation.tau1 = t;
        }
        if let Some(t) = self.tau2 {
            cfg.truncation.tau2 = t;
        }
        if let Some(s) = self.step {
            cfg.step = s;
        }
        if let Some(c) = self.max_iters {
            cfg.max_iters = c;
        }
        if let Some(t) = self.tol {
            cfg.mse_tol = t;
        }
        if let Some(p) = self.power_iters {
            cfg.power_iters = p;
        }
        if kind == SolverKind::Twf {
            if let Some(t) = self.truncate_twf {
                cfg.truncated = t;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let o = SpecOverrides::parse_str(
            "# sweep\nn = 64\nm-over-n = 10..14:2\nsolvers = twrgd, twf\nstep = fixed:0.1\ntruncate_twf = yes\n",
        )
        .unwrap();
        assert_eq!(o.n, Some(64));
        assert_eq!(o.m_over_n.as_ref().unwrap().len(), 3);
        assert_eq!(o.solvers, Some(vec![SolverKind::Twrgd, SolverKind::Twf]));
        assert_eq!(o.step, Some(StepPolicy::Fixed(0.1)));
        assert_eq!(o.truncate_twf, Some(true));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_lines() {
        assert!(matches!(
            SpecOverrides::parse_str("colour = red"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            SpecOverrides::parse_str("n 5"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            SpecOverrides::parse_str("n = five"),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn later_layer_wins() {
        let file = SpecOverrides::parse_str("n = 64\ntrials = 3").unwrap();
        let cli = SpecOverrides {
            n: Some(32),
            ..Default::default()
        };
        let merged = file.merged(cli);
        assert_eq!(merged.n, Some(32));
        assert_eq!(merged.trials, Some(3));
    }
}
