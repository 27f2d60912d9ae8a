//! Tabular epsilon-greedy Q-learning over the over-sampling scale.
//! State = the scale discretized in delta-kappa bins; actions raise,
//! lower or hold the scale; reward = validation-accuracy improvement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Documented action ordering: greedy ties resolve to the earliest
/// listed action, so an all-zero table picks `Increase`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Increase,
    Decrease,
    Hold,
}

pub const ACTIONS: [Action; 3] = [Action::Increase, Action::Decrease, Action::Hold];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QControllerConfig {
    pub epsilon: f64,
    pub epsilon_decay: f64,
    pub gamma: f64,
    pub alpha_rl: f64,
    pub delta_kappa: f64,
    pub alpha_max: f64,
}

impl Default for QControllerConfig {
    fn default() -> Self {
        QControllerConfig {
            epsilon: 0.9,
            epsilon_decay: 0.99,
            gamma: 1.0,
            alpha_rl: 0.1,
            delta_kappa: 0.05,
            alpha_max: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QStep {
    pub scale: f64,
    pub reward: f64,
    pub action: Action,
}

#[derive(Debug, Clone)]
pub struct QController {
    q: HashMap<(usize, usize), f64>,
    pub scale: f64,
    pub epsilon: f64,
    cfg: QControllerConfig,
    prev: Option<(usize, usize)>,
    prev_metric: f64,
    rng: ChaCha8Rng,
}

impl QController {
    pub fn new(initial_scale: f64, cfg: QControllerConfig, seed: u64) -> Self {
        let scale = initial_scale.clamp(0.0, cfg.alpha_max);
        QController {
            q: HashMap::new(),
            scale,
            epsilon: cfg.epsilon,
            cfg,
            prev: None,
            prev_metric: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn state(&self) -> usize {
        (self.scale / self.cfg.delta_kappa).round() as usize
    }

    fn q_value(&self, s: usize, a: usize) -> f64 {
        *self.q.get(&(s, a)).unwrap_or(&0.0)
    }

    fn best_action(&self, s: usize) -> (usize, f64) {
        let mut best = (0usize, self.q_value(s, 0));
        for a in 1..ACTIONS.len() {
            let v = self.q_value(s, a);
            if v > best.1 {
                best = (a, v);
            }
        }
        best
    }

    /// Greedy action at the current state, for inspection.
    pub fn greedy_action(&self) -> Action {
        ACTIONS[self.best_action(self.state()).0]
    }

    /// One controller invocation with the freshly observed validation
    /// metric. Updates the table for the previous action with reward =
    /// metric improvement, then takes an epsilon-greedy action on the
    /// scale and returns the trace record.
    pub fn step(&mut self, metric: f64) -> QStep {
        let s_now = self.state();
        let reward = if self.prev.is_some() {
            metric - self.prev_metric
        } else {
            0.0
        };
        if let Some((s_prev, a_prev)) = self.prev {
            let target = reward + self.cfg.gamma * self.best_action(s_now).1;
            let entry = self.q.entry((s_prev, a_prev)).or_insert(0.0);
            *entry += self.cfg.alpha_rl * (target - *entry);
            debug_assert!(entry.is_finite());
        }

        let a = if self.rng.gen::<f64>() < self.epsilon {
            self.rng.gen_range(0..ACTIONS.len())
        } else {
            self.best_action(s_now).0
        };
        match ACTIONS[a] {
            Action::Increase => self.scale += self.cfg.delta_kappa,
            Action::Decrease => self.scale -= self.cfg.delta_kappa,
            Action::Hold => {}
        }
        self.scale = self.scale.clamp(0.0, self.cfg.alpha_max);
        self.epsilon *= self.cfg.epsilon_decay;
        self.prev = Some((s_now, a));
        self.prev_metric = metric;
        QStep {
            scale: self.scale,
            reward,
            action: ACTIONS[a],
        }
    }

    pub fn table_is_finite(&self) -> bool {
        self.q.values().all(|v| v.is_finite())
    }

    pub fn max_abs_q(&self) -> f64 {
        self.q.values().fold(0.0, |m, v| m.max(v.abs()))
    }
}
