use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::StepsizeSchedule;
use crate::rng::{self, Rng};

/// Which iterate a run reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IterateSelection {
    #[default]
    Final,
    /// `(1/k) Σ_{i=1}^k x_i`.
    UniformAverage,
    /// `x_j` with probability `α_j / Σ_i α_i`.
    WeightedRandom,
}

/// Online tracker for all three rules.
///
/// Points are offered in order `x_1, x_2, ...` (the point a step starts
/// from), each with the stepsize used at that step. The weighted rule keeps
/// a single-slot weighted reservoir, so `x_j` survives with probability
/// `α_j / Σ α_i` without storing the trajectory.
#[derive(Debug, Clone)]
pub(crate) struct SelectionTracker {
    count: u64,
    mean: Vec<f64>,
    reservoir: Vec<f64>,
    weight_total: f64,
    rng: Rng,
}

impl SelectionTracker {
    pub(crate) fn new(dim: usize, seed: u64) -> Self {
        SelectionTracker {
            count: 0,
            mean: vec![0.0; dim],
            reservoir: vec![0.0; dim],
            weight_total: 0.0,
            rng: rng::stream_rng(seed, &[rng::stream::SELECTION]),
        }
    }

    pub(crate) fn offer(&mut self, point: &[f64], stepsize: f64) {
        self.count += 1;
        let inv = 1.0 / self.count as f64;
        for (m, p) in self.mean.iter_mut().zip(point) {
            *m += (p - *m) * inv;
        }
        self.weight_total += stepsize;
        if self.count == 1 || self.rng.gen::<f64>() * self.weight_total < stepsize {
            self.reservoir.copy_from_slice(point);
        }
    }

    pub(crate) fn select(&self, rule: IterateSelection, final_point: &[f64]) -> Vec<f64> {
        if self.count == 0 {
            return final_point.to_vec();
        }
        match rule {
            IterateSelection::Final => final_point.to_vec(),
            IterateSelection::UniformAverage => self.mean.clone(),
            IterateSelection::WeightedRandom => self.reservoir.clone(),
        }
    }
}

/// Offline selection from a stored trajectory `x_1, ..., x_k`.
///
/// `x_j` is paired with `α_j`, the stepsize of the step taken from it.
pub fn select_iterate(
    trajectory: &[Vec<f64>],
    schedule: &StepsizeSchedule,
    rule: IterateSelection,
    seed: u64,
) -> Vec<f64> {
    assert!(!trajectory.is_empty(), "cannot select from an empty trajectory");
    match rule {
        IterateSelection::Final => trajectory.last().unwrap().clone(),
        IterateSelection::UniformAverage => {
            let dim = trajectory[0].len();
            let k = trajectory.len() as f64;
            (0..dim)
                .map(|c| trajectory.iter().map(|x| x[c]).sum::<f64>() / k)
                .collect()
        }
        IterateSelection::WeightedRandom => {
            let weights: Vec<f64> = (1..=trajectory.len() as u64)
                .map(|j| schedule.stepsize(j))
                .collect();
            let total: f64 = weights.iter().sum();
            let mut rng = rng::stream_rng(seed, &[rng::stream::SELECTION]);
            let mut target = rng.gen::<f64>() * total;
            for (x, w) in trajectory.iter().zip(&weights) {
                if target < *w {
                    return x.clone();
                }
                target -= w;
            }
            trajectory.last().unwrap().clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_trajectory_selects_the_constant() {
        let traj = vec![vec![1.5, -2.0]; 7];
        let sched = StepsizeSchedule::new(1.0, 0.6).unwrap();
        for rule in [
            IterateSelection::Final,
            IterateSelection::UniformAverage,
            IterateSelection::WeightedRandom,
        ] {
            assert_eq!(select_iterate(&traj, &sched, rule, 3), vec![1.5, -2.0]);
            let mut tracker = SelectionTracker::new(2, 3);
            for x in &traj {
                tracker.offer(x, 0.5);
            }
            assert_eq!(tracker.select(rule, &traj[6]), vec![1.5, -2.0]);
        }
    }

    #[test]
    fn equal_weights_pick_each_half_the_time() {
        // Schedules are strictly decreasing, so equal weights go through the tracker.
        let draws = 10_000u64;
        let mut first = 0u64;
        for seed in 0..draws {
            let mut tracker = SelectionTracker::new(1, seed);
            tracker.offer(&[0.0], 0.3);
            tracker.offer(&[1.0], 0.3);
            if tracker.select(IterateSelection::WeightedRandom, &[1.0])[0] == 0.0 {
                first += 1;
            }
        }
        let expected = draws as f64 / 2.0;
        let chi2 = 2.0 * (first as f64 - expected).powi(2) / expected;
        // 99.9% quantile of χ² with one degree of freedom.
        assert!(chi2 < 10.83, "chi2 = {chi2}, first = {first}");
    }

    #[test]
    fn offline_weighted_rule_follows_stepsizes() {
        let sched = StepsizeSchedule::new(1.0, 1.0).unwrap();
        // weights 1, 1/2 -> probabilities 2/3, 1/3
        let traj = vec![vec![0.0], vec![1.0]];
        let draws = 30_000u64;
        let first = (0..draws)
            .filter(|&s| select_iterate(&traj, &sched, IterateSelection::WeightedRandom, s)[0] == 0.0)
            .count() as f64;
        let p = first / draws as f64;
        assert!((p - 2.0 / 3.0).abs() < 0.015, "p = {p}");
    }

    #[test]
    fn tracker_average_matches_offline_average() {
        let sched = StepsizeSchedule::new(1.0, 0.6).unwrap();
        let traj: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, (i * i) as f64 * 0.1]).collect();
        let mut tracker = SelectionTracker::new(2, 0);
        for (j, x) in traj.iter().enumerate() {
            tracker.offer(x, sched.stepsize(j as u64 + 1));
        }
        let online = tracker.select(IterateSelection::UniformAverage, &traj[49]);
        let offline = select_iterate(&traj, &sched, IterateSelection::UniformAverage, 0);
        for (a, b) in online.iter().zip(&offline) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
