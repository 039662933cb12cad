use std::ops::Range;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::samplers::SamplerKind;

/// A benchmark grid: every method at every acceleration and NFE, on
/// `trials` test phantoms.
///
/// Plan files hold one `key = value` pair per line; `#` starts a comment and
/// lists are comma separated:
///
/// ```text
/// methods       = ppn, ddnm, medscore, dps
/// accelerations = 4, 8, 12
/// nfes          = 50
/// trials        = 50
/// ```
///
/// Keys: `methods`, `accelerations`, `nfes`, `trials`, `sigma_e`, `seed`,
/// `test_seed`, `size`, `acs_fraction`, `lambda`, `zeta`, `workers`,
/// `zero_filled`, `train_seed`, `train_size`, `rank`, `floor`,
/// `diffusion_steps`. Unlisted keys keep their defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub methods: Vec<SamplerKind>,
    pub accelerations: Vec<usize>,
    pub nfes: Vec<usize>,
    pub trials: usize,
    pub sigma_e: f64,
    /// Base seed for sampler noise and measurement noise.
    pub seed: u64,
    /// Test phantoms use seeds `test_seed .. test_seed + trials`.
    pub test_seed: u64,
    pub size: usize,
    pub acs_fraction: f64,
    pub lambda: f64,
    pub zeta: f64,
    /// Worker threads; 0 picks the number of CPUs.
    pub workers: usize,
    /// Add a zero-filled row per acceleration and trial.
    pub zero_filled: bool,
    pub prior: PriorSettings,
}

/// How a prior is fitted when the caller does not supply one.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSettings {
    /// Training phantoms use seeds `train_seed .. train_seed + train_size`.
    pub train_seed: u64,
    pub train_size: usize,
    pub rank: usize,
    pub floor: f64,
    pub diffusion_steps: usize,
}

pub const DEFAULT_FLOOR: f64 = 1e-5;

impl Default for PriorSettings {
    fn default() -> Self {
        Self { train_seed: 0, train_size: 500, rank: 32, floor: DEFAULT_FLOOR, diffusion_steps: 1000 }
    }
}

impl PriorSettings {
    pub fn train_seeds(&self) -> Range<u64> {
        self.train_seed..self.train_seed + self.train_size as u64
    }
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            methods: SamplerKind::CONDITIONAL.to_vec(),
            accelerations: vec![4, 8, 12],
            nfes: vec![50],
            trials: 50,
            sigma_e: 0.0,
            seed: 0,
            test_seed: 1_000_000,
            size: 64,
            acs_fraction: crate::kspace::DEFAULT_ACS_FRACTION,
            lambda: 1.0,
            zeta: 10.0,
            workers: 0,
            zero_filled: true,
            prior: PriorSettings::default(),
        }
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Plan { line, msg: format!("cannot parse '{value}' for '{key}'") })
}

fn parse_list<T: FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse_value(line, key, s)).collect()
}

impl ExperimentPlan {
    pub fn parse(text: &str) -> Result<Self> {
        let mut plan = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Plan { line, msg: format!("expected 'key = value', got '{content}'") })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Plan { line, msg: format!("duplicate key '{key}'") });
            }
            match key {
                "methods" => plan.methods = parse_list(line, key, value)?,
                "accelerations" => plan.accelerations = parse_list(line, key, value)?,
                "nfes" => plan.nfes = parse_list(line, key, value)?,
                "trials" => plan.trials = parse_value(line, key, value)?,
                "sigma_e" => plan.sigma_e = parse_value(line, key, value)?,
                "seed" => plan.seed = parse_value(line, key, value)?,
                "test_seed" => plan.test_seed = parse_value(line, key, value)?,
                "size" => plan.size = parse_value(line, key, value)?,
                "acs_fraction" => plan.acs_fraction = parse_value(line, key, value)?,
                "lambda" => plan.lambda = parse_value(line, key, value)?,
                "zeta" => plan.zeta = parse_value(line, key, value)?,
                "workers" => plan.workers = parse_value(line, key, value)?,
                "zero_filled" => plan.zero_filled = parse_value(line, key, value)?,
                "train_seed" => plan.prior.train_seed = parse_value(line, key, value)?,
                "train_size" => plan.prior.train_size = parse_value(line, key, value)?,
                "rank" => plan.prior.rank = parse_value(line, key, value)?,
                "floor" => plan.prior.floor = parse_value(line, key, value)?,
                "diffusion_steps" => plan.prior.diffusion_steps = parse_value(line, key, value)?,
                other => return Err(Error::Plan { line, msg: format!("unknown key '{other}'") }),
            }
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.methods.is_empty() && !self.zero_filled {
            return fail("plan has no methods".into());
        }
        if let Some(k) = self.methods.iter().find(|k| !k.is_conditional()) {
            return fail(format!("{k} is not a reconstruction method"));
        }
        if self.accelerations.is_empty() || self.accelerations.contains(&0) {
            return fail("accelerations must be a nonempty list of positive integers".into());
        }
        if self.nfes.is_empty() || self.nfes.contains(&0) {
            return fail("nfes must be a nonempty list of positive integers".into());
        }
        if self.trials == 0 {
            return fail("trials must be >= 1".into());
        }
        if !(self.sigma_e >= 0.0 && self.sigma_e.is_finite()) {
            return fail(format!("sigma_e must be >= 0, got {}", self.sigma_e));
        }
        if self.nfes.iter().any(|&s| s > self.prior.diffusion_steps) {
            return fail(format!("every NFE must be <= diffusion_steps = {}", self.prior.diffusion_steps));
        }
        if self.test_seeds().start < self.prior.train_seeds().end
            && self.prior.train_seeds().start < self.test_seeds().end
        {
            return fail("test seeds overlap the prior's training seeds".into());
        }
        Ok(())
    }

    pub fn test_seeds(&self) -> Range<u64> {
        self.test_seed..self.test_seed + self.trials as u64
    }

    /// Number of sampler runs, excluding zero-filled rows.
    pub fn total_runs(&self) -> usize {
        self.methods.len() * self.accelerations.len() * self.nfes.len() * self.trials
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_comments_and_defaults() {
        let plan = ExperimentPlan::parse(
            "# table\nmethods = ppn, dps\naccelerations=4,8 # two cells\n\nnfes = 10, 50\ntrials = 3\nsigma_e = 0.01\n",
        )
        .unwrap();
        assert_eq!(plan.methods, vec![SamplerKind::Ppn, SamplerKind::Dps]);
        assert_eq!(plan.accelerations, vec![4, 8]);
        assert_eq!(plan.nfes, vec![10, 50]);
        assert_eq!(plan.trials, 3);
        assert_eq!(plan.sigma_e, 0.01);
        assert_eq!(plan.size, 64);
        assert_eq!(plan.total_runs(), 2 * 2 * 2 * 3);
    }

    #[test]
    fn reports_line_numbers() {
        match ExperimentPlan::parse("trials = 2\nbogus = 1\n") {
            Err(Error::Plan { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match ExperimentPlan::parse("trials = two\n") {
            Err(Error::Plan { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        assert!(ExperimentPlan::parse("trials\n").is_err());
        assert!(ExperimentPlan::parse("trials = 1\ntrials = 2\n").is_err());
    }

    #[test]
    fn rejects_invalid_plans() {
        assert!(ExperimentPlan::parse("methods = ddim\n").is_err());
        assert!(ExperimentPlan::parse("methods = repaint\n").is_err());
        assert!(ExperimentPlan::parse("accelerations = 0\n").is_err());
        assert!(ExperimentPlan::parse("trials = 0\n").is_err());
        assert!(ExperimentPlan::parse("nfes = 2000\n").is_err());
        assert!(ExperimentPlan::parse("test_seed = 10\n").is_err());
    }

    #[test]
    fn default_seed_ranges_are_disjoint() {
        let plan = ExperimentPlan::default();
        assert!(plan.prior.train_seeds().end <= plan.test_seeds().start);
        plan.validate().unwrap();
    }
}
