//! Run configuration: defaults, overridden by a JSON config file, overridden
//! by command-line flags.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

/// Contents of a `--config` file. Every field is optional.
#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub genus: Option<usize>,
    pub refine: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub eps_schedule: Option<Vec<f64>>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub newton_tol: Option<f64>,
    pub newton_max_iter: Option<usize>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RunConfig {
    pub genus: usize,
    pub refine: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub eps_schedule: Vec<f64>,
    pub max_iters: usize,
    pub tol: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            genus: 2,
            refine: 3,
            seed: 2024,
            out_dir: PathBuf::from("."),
            eps_schedule: vec![1.0, 0.3, 0.1, 0.03, 0.0],
            max_iters: 100,
            tol: 1e-10,
            newton_tol: 1e-9,
            newton_max_iter: 50,
        }
    }
}

impl RunConfig {
    /// Later layers win.
    pub fn layered(layers: &[&ConfigFile]) -> RunConfig {
        let mut c = RunConfig::default();
        for l in layers {
            if let Some(v) = l.genus {
                c.genus = v;
            }
            if let Some(v) = l.refine {
                c.refine = v;
            }
            if let Some(v) = l.seed {
                c.seed = v;
            }
            if let Some(v) = &l.out_dir {
                c.out_dir = v.clone();
            }
            if let Some(v) = &l.eps_schedule {
                c.eps_schedule = v.clone();
            }
            if let Some(v) = l.max_iters {
                c.max_iters = v;
            }
            if let Some(v) = l.tol {
                c.tol = v;
            }
            if let Some(v) = l.newton_tol {
                c.newton_tol = v;
            }
            if let Some(v) = l.newton_max_iter {
                c.newton_max_iter = v;
            }
        }
        c
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.genus < 2 {
            return Err(format!("genus {} has no hyperbolic structure (need genus >= 2)", self.genus));
        }
        if self.refine > 6 {
            return Err(format!("refinement level {} is beyond desk scale (max 6)", self.refine));
        }
        if !(self.tol > 0.0) || !(self.newton_tol > 0.0) {
            return Err("tolerances must be positive".into());
        }
        if self.max_iters == 0 || self.newton_max_iter == 0 {
            return Err("iteration limits must be positive".into());
        }
        let s = &self.eps_schedule;
        if s.is_empty() || s.iter().any(|e| !(*e >= 0.0)) || s.windows(2).any(|w| w[1] >= w[0]) {
            return Err("eps schedule must be strictly decreasing and nonnegative".into());
        }
        Ok(())
    }

    /// True when the last stage minimizes the unregularized energy.
    pub fn exact_energy(&self) -> bool {
        self.eps_schedule.last() == Some(&0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let file = ConfigFile { genus: Some(3), tol: Some(1e-6), ..Default::default() };
        let flags = ConfigFile { genus: Some(4), ..Default::default() };
        let c = RunConfig::layered(&[&file, &flags]);
        assert_eq!(c.genus, 4);
        assert_eq!(c.tol, 1e-6);
        assert_eq!(c.refine, 3);
    }

    #[test]
    fn validation() {
        assert!(RunConfig::default().validate().is_ok());
        assert!(RunConfig { genus: 1, ..Default::default() }.validate().is_err());
        assert!(RunConfig { eps_schedule: vec![1.0, 1.0, 0.0], ..Default::default() }.validate().is_err());
        assert!(RunConfig { tol: 0.0, ..Default::default() }.validate().is_err());
        assert!(!RunConfig { eps_schedule: vec![1.0, 0.1], ..Default::default() }.exact_energy());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ConfigFile>(r#"{"genus": 2, "colour": 1}"#).is_err());
        let c: ConfigFile = serde_json::from_str(r#"{"eps_schedule": [0.5, 0]}"#).unwrap();
        assert_eq!(c.eps_schedule, Some(vec![0.5, 0.0]));
    }
}
