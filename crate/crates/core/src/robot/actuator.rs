//! Command delays and magnitude-dependent scaling errors.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::params::{RobotConfig, RobotParams};
use crate::rng;

pub const MAX_DELAY: f64 = 0.1;
pub const SCALE_ERROR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSwitches {
    pub delays: bool,
    pub scaling: bool,
}

impl NoiseSwitches {
    pub const ON: Self = Self {
        delays: true,
        scaling: true,
    };
    pub const OFF: Self = Self {
        delays: false,
        scaling: false,
    };
}

/// Scaled command before clamping.
pub fn scale_command(cmd: &RobotConfig, q1_max: f64) -> RobotConfig {
    RobotConfig {
        q1: cmd.q1 * (1.0 + SCALE_ERROR * cmd.q1.abs() / q1_max),
        q2: cmd.q2 * (1.0 + SCALE_ERROR * cmd.q2.abs() / TAU),
        q3: cmd.q3,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    cmd: RobotConfig,
    issued: f64,
    active_from: f64,
}

/// FIFO of issued commands, each becoming active after its own random delay.
#[derive(Debug, Clone)]
pub struct ActuatorState {
    seed: u64,
    noise: NoiseSwitches,
    q1_max: f64,
    queue: VecDeque<Pending>,
    last_activation: f64,
    active: RobotConfig,
    delays: Vec<f64>,
}

impl ActuatorState {
    pub fn new(seed: u64, noise: NoiseSwitches, params: &RobotParams, initial: RobotConfig) -> Self {
        let mut s = Self {
            seed,
            noise,
            q1_max: params.q1_max,
            queue: VecDeque::new(),
            last_activation: f64::NEG_INFINITY,
            active: RobotConfig::default(),
            delays: Vec::new(),
        };
        s.active = s.effective(&initial);
        s
    }

    /// Queues `cmd` issued at time `now`; `tick` keys the delay draw.
    /// Returns the sampled delay.
    pub fn issue(&mut self, cmd: RobotConfig, now: f64, tick: u64) -> f64 {
        let delay = if self.noise.delays {
            Uniform::new_inclusive(0.0, MAX_DELAY).sample(&mut rng::keyed(self.seed, rng::ACTUATOR, tick))
        } else {
            0.0
        };
        let active_from = (now + delay).max(self.last_activation);
        self.last_activation = active_from;
        self.queue.push_back(Pending {
            cmd,
            issued: now,
            active_from,
        });
        self.delays.push(delay);
        delay
    }

    /// Effective configuration at time `now`: the newest command whose
    /// activation time has passed, scaled and clamped.
    pub fn effective_at(&mut self, now: f64) -> RobotConfig {
        while let Some(front) = self.queue.front() {
            if front.active_from <= now {
                let p = self.queue.pop_front().unwrap();
                debug_assert!(p.active_from >= p.issued);
                self.active = self.effective(&p.cmd);
            } else {
                break;
            }
        }
        self.active
    }

    fn effective(&self, cmd: &RobotConfig) -> RobotConfig {
        let mut q = if self.noise.scaling {
            scale_command(cmd, self.q1_max)
        } else {
            *cmd
        };
        q.q1 = q.q1.clamp(-self.q1_max, self.q1_max);
        q
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }
}

/// One-shot helper: issue `cmd` at `issued` and read the effective value at `now`.
pub fn apply_actuator_noise(cmd: RobotConfig, state: &mut ActuatorState, issued: f64, now: f64, tick: u64) -> RobotConfig {
    state.issue(cmd, issued, tick);
    state.effective_at(now)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> RobotParams {
        RobotParams::default()
    }

    #[test]
    fn zero_is_fixed_point() {
        let s = scale_command(&RobotConfig::new(0.0, 0.0, 0.3), 0.008);
        assert_eq!(s, RobotConfig::new(0.0, 0.0, 0.3));
    }

    #[test]
    fn full_tendon_scales_then_clamps() {
        let s = scale_command(&RobotConfig::new(0.008, 0.0, 0.0), 0.008);
        assert!((s.q1 - 0.0084).abs() < 1e-15);
        let mut a = ActuatorState::new(0, NoiseSwitches::ON, &p(), RobotConfig::default());
        let q = apply_actuator_noise(RobotConfig::new(0.008, 0.0, 0.0), &mut a, 0.0, 1.0, 0);
        assert_eq!(q.q1, 0.008);
    }

    #[test]
    fn full_turn_scales_by_five_percent() {
        let s = scale_command(&RobotConfig::new(0.0, TAU, 0.0), 0.008);
        assert!((s.q2 - TAU * 1.05).abs() < 1e-12);
    }

    #[test]
    fn delayed_command_activates_late_and_in_order() {
        let mut a = ActuatorState::new(3, NoiseSwitches::ON, &p(), RobotConfig::default());
        let d0 = a.issue(RobotConfig::new(0.001, 0.0, 0.0), 0.0, 0);
        assert!((0.0..=MAX_DELAY).contains(&d0));
        if d0 > 0.0 {
            assert_eq!(a.effective_at(d0 * 0.5).q1, 0.0);
        }
        let later = a.effective_at(MAX_DELAY);
        assert!(later.q1 > 0.001);
        a.issue(RobotConfig::new(0.002, 0.0, 0.0), 0.1, 1);
        a.issue(RobotConfig::new(0.003, 0.0, 0.0), 0.1, 2);
        let q = a.effective_at(0.3);
        assert!((q.q1 - scale_command(&RobotConfig::new(0.003, 0.0, 0.0), 0.008).q1).abs() < 1e-15);
        assert_eq!(a.pending(), 0);
    }

    #[test]
    fn noise_off_is_passthrough() {
        let mut a = ActuatorState::new(9, NoiseSwitches::OFF, &p(), RobotConfig::default());
        let cmd = RobotConfig::new(0.005, 1.0, 0.01);
        assert_eq!(apply_actuator_noise(cmd, &mut a, 0.0, 0.0, 0), cmd);
    }
}
