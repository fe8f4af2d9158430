//! Step-function pacing: which tasks are visible at an epoch and how many
//! adaptation steps they get.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::artifacts::ArtifactFamily;
use crate::error::{Error, Result};
use crate::tasks::Task;

const TRAIN_FAMILIES: [ArtifactFamily; 3] = [
    ArtifactFamily::Motion,
    ArtifactFamily::Undersampling,
    ArtifactFamily::SuperResolution,
];

/// Cumulative tiers of task ids, ordered from easy to hard.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacingSchedule {
    tiers: Vec<Vec<String>>,
    step_epochs: Vec<usize>,
    steps_per_tier: Vec<usize>,
    max_epochs: usize,
}

impl PacingSchedule {
    /// `steps_per_tier[k]` is the number of adaptation steps once tier `k`
    /// has been added.
    pub fn new(
        tiers: Vec<Vec<String>>,
        step_epochs: Vec<usize>,
        steps_per_tier: Vec<usize>,
        max_epochs: usize,
    ) -> Result<Self> {
        if tiers.is_empty() || tiers.iter().any(Vec::is_empty) {
            return Err(Error::Config("every pacing tier needs at least one task".into()));
        }
        let mut seen = BTreeSet::new();
        for id in tiers.iter().flatten() {
            if !seen.insert(id.as_str()) {
                return Err(Error::Config(format!("task {id} appears in more than one tier")));
            }
        }
        if step_epochs.len() != tiers.len() || steps_per_tier.len() != tiers.len() {
            return Err(Error::Config(format!(
                "{} tiers need as many step epochs and step counts (got {} and {})",
                tiers.len(),
                step_epochs.len(),
                steps_per_tier.len()
            )));
        }
        if step_epochs[0] != 1 || step_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "step epochs must start at 1 and increase strictly, got {step_epochs:?}"
            )));
        }
        if *step_epochs.last().unwrap() > max_epochs {
            return Err(Error::Config(format!(
                "last step epoch {} exceeds max_epochs {max_epochs}",
                step_epochs.last().unwrap()
            )));
        }
        if steps_per_tier.contains(&0) || steps_per_tier.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config(format!(
                "adaptation steps must be positive and non-decreasing, got {steps_per_tier:?}"
            )));
        }
        Ok(Self {
            tiers,
            step_epochs,
            steps_per_tier,
            max_epochs,
        })
    }

    /// Every task visible from the first epoch with a fixed step count.
    pub fn single_tier(ids: Vec<String>, steps: usize, max_epochs: usize) -> Result<Self> {
        Self::new(vec![ids], vec![1], vec![steps], max_epochs)
    }

    pub fn tiers(&self) -> &[Vec<String>] {
        &self.tiers
    }

    pub fn step_epochs(&self) -> &[usize] {
        &self.step_epochs
    }

    pub fn steps_per_tier(&self) -> &[usize] {
        &self.steps_per_tier
    }

    pub fn max_epochs(&self) -> usize {
        self.max_epochs
    }

    /// Number of tiers whose step epoch has been reached.
    pub fn active_tiers(&self, epoch: usize) -> Result<usize> {
        if epoch == 0 || epoch > self.max_epochs {
            return Err(Error::arg(format!(
                "epoch {epoch} is outside 1..={}",
                self.max_epochs
            )));
        }
        Ok(self.step_epochs.iter().take_while(|&&s| s <= epoch).count())
    }

    /// Visible task ids (easy tiers first) and the adaptation step count.
    pub fn available_tasks(&self, epoch: usize) -> Result<(Vec<String>, usize)> {
        let active = self.active_tiers(epoch)?;
        let ids = self.tiers[..active].iter().flatten().cloned().collect();
        Ok((ids, self.steps_per_tier[active - 1]))
    }

    /// Checks that the tiers partition exactly the ids of `tasks`.
    pub fn check_covers(&self, tasks: &[Task]) -> Result<()> {
        let scheduled: BTreeSet<&str> = self.tiers.iter().flatten().map(String::as_str).collect();
        let available: BTreeSet<&str> = tasks.iter().map(|t| t.id.as_str()).collect();
        if scheduled != available {
            let missing: Vec<_> = available.difference(&scheduled).collect();
            let unknown: Vec<_> = scheduled.difference(&available).collect();
            return Err(Error::Config(format!(
                "schedule does not match the training tasks (unscheduled {missing:?}, unknown {unknown:?})"
            )));
        }
        Ok(())
    }
}

/// Overrides for the default schedule.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    pub tiers: Option<Vec<Vec<String>>>,
    pub step_epochs: Option<Vec<usize>>,
    pub steps_per_tier: Option<Vec<usize>>,
}

impl CurriculumConfig {
    /// The default schedule with any configured fields replaced.
    pub fn schedule(&self, tasks: &[Task], max_epochs: usize) -> Result<PacingSchedule> {
        let schedule = match &self.tiers {
            Some(tiers) => {
                let n = tiers.len();
                PacingSchedule::new(
                    tiers.clone(),
                    self.step_epochs.clone().unwrap_or_else(|| thirds(n, max_epochs)),
                    self.steps_per_tier.clone().unwrap_or_else(|| (1..=n).collect()),
                    max_epochs,
                )?
            }
            None => {
                let base = default_schedule(tasks, max_epochs)?;
                PacingSchedule::new(
                    base.tiers,
                    self.step_epochs.clone().unwrap_or(base.step_epochs),
                    self.steps_per_tier.clone().unwrap_or(base.steps_per_tier),
                    max_epochs,
                )?
            }
        };
        schedule.check_covers(tasks)?;
        Ok(schedule)
    }
}

fn thirds(tiers: usize, max_epochs: usize) -> Vec<usize> {
    (0..tiers).map(|k| 1 + (k * max_epochs).div_ceil(tiers)).collect()
}

/// Tasks ordered by rank within their family, families interleaved:
/// all easiest levels first, then all second levels, and so on.
pub fn sort_tasks_by_score(tasks: &[Task]) -> Vec<&Task> {
    let mut families: Vec<ArtifactFamily> = Vec::new();
    for t in tasks {
        if !families.contains(&t.family()) {
            families.push(t.family());
        }
    }
    let ranked: Vec<Vec<&Task>> = families
        .iter()
        .map(|&f| {
            let mut group: Vec<&Task> = tasks.iter().filter(|t| t.family() == f).collect();
            group.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.id.cmp(&b.id)));
            group
        })
        .collect();
    let depth = ranked.iter().map(Vec::len).max().unwrap_or(0);
    (0..depth)
        .flat_map(|r| ranked.iter().filter_map(move |g| g.get(r).copied()))
        .collect()
}

/// One tier per amount level of the motion, undersampling and
/// super-resolution families, added at thirds of the run.
pub fn default_schedule(tasks: &[Task], max_epochs: usize) -> Result<PacingSchedule> {
    let mut levels = None;
    for family in TRAIN_FAMILIES {
        let count = tasks.iter().filter(|t| t.family() == family).count();
        if count == 0 {
            return Err(Error::Config(format!("no {} tasks to schedule", family.as_str())));
        }
        if *levels.get_or_insert(count) != count {
            return Err(Error::Config(
                "every task family needs the same number of levels".into(),
            ));
        }
    }
    if let Some(t) = tasks.iter().find(|t| !TRAIN_FAMILIES.contains(&t.family())) {
        return Err(Error::Config(format!("task {} is not a training family", t.id)));
    }
    let levels = levels.unwrap_or(0);
    if max_epochs < levels {
        return Err(Error::Config(format!(
            "max_epochs must be at least {levels}, got {max_epochs}"
        )));
    }
    let sorted = sort_tasks_by_score(tasks);
    let tiers: Vec<Vec<String>> = sorted
        .chunks(TRAIN_FAMILIES.len())
        .map(|c| c.iter().map(|t| t.id.clone()).collect())
        .collect();
    PacingSchedule::new(
        tiers,
        thirds(levels, max_epochs),
        (1..=levels).collect(),
        max_epochs,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifacts::ArtifactSpec;
    use crate::data::{ImageTensor, PairedSample};
    use crate::tasks::TaskConfig;
    use proptest::prelude::*;

    fn fake_tasks(specs: &[ArtifactSpec]) -> Vec<Task> {
        let pair = PairedSample::new(ImageTensor::zeros(4, 4), ImageTensor::zeros(4, 4)).unwrap();
        specs
            .iter()
            .map(|s| Task::new(s.clone(), vec![pair.clone()], vec![pair.clone()], vec![]).unwrap())
            .collect()
    }

    fn train_tasks() -> Vec<Task> {
        fake_tasks(&TaskConfig::default().train_specs())
    }

    #[test]
    fn default_tiers_group_one_level_per_family() {
        let s = default_schedule(&train_tasks(), 200).unwrap();
        assert_eq!(s.step_epochs(), &[1, 68, 135]);
        assert_eq!(s.steps_per_tier(), &[1, 2, 3]);
        assert_eq!(s.tiers()[0], vec!["motion_s1", "us_x02", "sr_x2"]);
        assert_eq!(s.tiers()[1], vec!["motion_s2", "us_x04", "sr_x3"]);
        assert_eq!(s.tiers()[2], vec!["motion_s3", "us_x06", "sr_x5"]);
    }

    #[test]
    fn visible_tasks_at_boundaries() {
        let s = default_schedule(&train_tasks(), 200).unwrap();
        for (epoch, count, u) in [
            (1, 3, 1),
            (67, 3, 1),
            (68, 6, 2),
            (134, 6, 2),
            (135, 9, 3),
            (200, 9, 3),
        ] {
            let (ids, steps) = s.available_tasks(epoch).unwrap();
            assert_eq!((ids.len(), steps), (count, u), "epoch {epoch}");
        }
        assert!(s.available_tasks(0).is_err());
        assert!(s.available_tasks(201).is_err());
    }

    #[test]
    fn short_runs() {
        let s = default_schedule(&train_tasks(), 20).unwrap();
        assert_eq!(s.step_epochs(), &[1, 8, 15]);
        let s = default_schedule(&train_tasks(), 3).unwrap();
        assert_eq!(s.step_epochs(), &[1, 2, 3]);
        assert!(default_schedule(&train_tasks(), 2).is_err());
    }

    #[test]
    fn incomplete_families_are_rejected() {
        let tasks = train_tasks();
        assert!(default_schedule(&tasks[..8], 20).is_err());
        assert!(default_schedule(&tasks[3..], 20).is_err());
        let mut extra = train_tasks();
        extra.extend(fake_tasks(&[ArtifactSpec::None]));
        assert!(default_schedule(&extra, 20).is_err());
    }

    #[test]
    fn sorting_is_ascending_within_family() {
        let specs = [
            ArtifactSpec::undersampling(6, 0),
            ArtifactSpec::motion(3),
            ArtifactSpec::undersampling(2, 0),
            ArtifactSpec::motion(1),
            ArtifactSpec::undersampling(4, 0),
            ArtifactSpec::motion(2),
        ];
        let tasks = fake_tasks(&specs);
        let ids: Vec<&str> = sort_tasks_by_score(&tasks)
            .iter()
            .map(|t| t.id.as_str())
            .collect();
        assert_eq!(
            ids,
            [
                "us_x02",
                "motion_s1",
                "us_x04",
                "motion_s2",
                "us_x06",
                "motion_s3"
            ]
        );
    }

    #[test]
    fn schedule_validation() {
        let ids = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert!(PacingSchedule::new(vec![ids(&["a"]), ids(&["a"])], vec![1, 2], vec![1, 2], 5).is_err());
        assert!(PacingSchedule::new(vec![ids(&["a"]), ids(&["b"])], vec![2, 3], vec![1, 2], 5).is_err());
        assert!(PacingSchedule::new(vec![ids(&["a"]), ids(&["b"])], vec![1, 1], vec![1, 2], 5).is_err());
        assert!(PacingSchedule::new(vec![ids(&["a"]), ids(&["b"])], vec![1, 6], vec![1, 2], 5).is_err());
        assert!(PacingSchedule::new(vec![ids(&["a"])], vec![1], vec![0], 5).is_err());
        assert!(PacingSchedule::new(vec![vec![]], vec![1], vec![1], 5).is_err());
        let s = PacingSchedule::single_tier(ids(&["a", "b"]), 1, 5).unwrap();
        assert_eq!(s.available_tasks(5).unwrap(), (ids(&["a", "b"]), 1));
    }

    #[test]
    fn config_overrides() {
        let tasks = train_tasks();
        let cfg = CurriculumConfig {
            step_epochs: Some(vec![1, 3, 5]),
            ..Default::default()
        };
        let s = cfg.schedule(&tasks, 10).unwrap();
        assert_eq!(s.step_epochs(), &[1, 3, 5]);
        let all: Vec<String> = tasks.iter().map(|t| t.id.clone()).collect();
        let cfg = CurriculumConfig {
            tiers: Some(vec![all.clone()]),
            ..Default::default()
        };
        let s = cfg.schedule(&tasks, 10).unwrap();
        assert_eq!(s.available_tasks(1).unwrap().0.len(), 9);
        let cfg = CurriculumConfig {
            tiers: Some(vec![all[..4].to_vec()]),
            ..Default::default()
        };
        assert!(cfg.schedule(&tasks, 10).is_err());
    }

    proptest! {
        #[test]
        fn visibility_is_cumulative(max_epochs in 3usize..400) {
            let s = default_schedule(&train_tasks(), max_epochs).unwrap();
            let (mut prev, mut prev_u) = s.available_tasks(1).unwrap();
            prop_assert_eq!(prev.len(), 3);
            for e in 2..=max_epochs {
                let (ids, u) = s.available_tasks(e).unwrap();
                let before: BTreeSet<&String> = prev.iter().collect();
                let now: BTreeSet<&String> = ids.iter().collect();
                prop_assert!(before.is_subset(&now));
                prop_assert!(u >= prev_u);
                prev = ids;
                prev_u = u;
            }
            prop_assert_eq!(prev.len(), 9);
            prop_assert_eq!(prev_u, 3);
        }
    }
}
