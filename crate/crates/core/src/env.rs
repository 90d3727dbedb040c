//! Episodic exploration environment over a system's input space.
//!
//! The state is the current input vector; an action is a per-component
//! perturbation. Reward is 1.0 exactly when the perturbed input makes the
//! black box's output change, 0.0 otherwise. Episodes run for a fixed
//! number of steps with no early termination.

use rand::Rng;

use crate::blackbox::{Bounds, InputVector, OutputValue, SystemUnderTest};
use crate::error::{Error, Result};

pub struct ExplorerEnv<'a> {
    system: &'a dyn SystemUnderTest,
    bounds: Bounds,
    action_scale: f64,
    max_steps: usize,
    state: Vec<f64>,
    last_output: OutputValue,
    step_count: usize,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: Vec<f64>,
    /// The clamped perturbation that was actually applied.
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub prev_output: OutputValue,
    pub curr_output: OutputValue,
}

impl<'a> ExplorerEnv<'a> {
    pub fn new(system: &'a dyn SystemUnderTest, action_scale: f64, max_steps: usize) -> Result<Self> {
        let bounds = system.bounds().clone();
        // any in-bounds placeholder; callers must reset() before stepping
        let state: Vec<f64> = bounds.low.clone();
        let last_output = system.evaluate(&InputVector::new(state.clone())?)?;
        Ok(Self {
            system,
            bounds,
            action_scale,
            max_steps,
            state,
            last_output,
            step_count: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn action_scale(&self) -> f64 {
        self.action_scale
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    /// Sample a fresh uniform state within bounds and restart the episode.
    pub fn reset<R: Rng>(&mut self, rng: &mut R) -> Result<Vec<f64>> {
        self.state = (0..self.bounds.dim())
            .map(|i| rng.gen_range(self.bounds.low[i]..self.bounds.high[i]))
            .collect();
        self.step_count = 0;
        self.last_output = self.system.evaluate(&InputVector::new(self.state.clone())?)?;
        Ok(self.state.clone())
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if action.len() != self.bounds.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.bounds.dim(),
                got: action.len(),
            });
        }
        let prev_state = self.state.clone();
        let prev_output = self.last_output.clone();

        let clamped: Vec<f64> = action
            .iter()
            .map(|a| a.clamp(-self.action_scale, self.action_scale))
            .collect();
        let mut next: Vec<f64> = prev_state.iter().zip(&clamped).map(|(s, a)| s + a).collect();
        self.bounds.clamp(&mut next);
        // the applied perturbation, after both clamps
        let applied: Vec<f64> = next.iter().zip(&prev_state).map(|(n, s)| n - s).collect();

        let curr_output = self.system.evaluate(&InputVector::new(next.clone())?)?;
        let reward = if curr_output != prev_output { 1.0 } else { 0.0 };

        self.state = next.clone();
        self.last_output = curr_output.clone();
        self.step_count += 1;

        Ok(StepResult {
            state: prev_state,
            action: applied,
            next_state: next,
            reward,
            done: self.step_count >= self.max_steps,
            prev_output,
            curr_output,
        })
    }

    /// Reset, then step under `policy` until the step limit.
    pub fn run_episode<R, P>(&mut self, policy: P, rng: &mut R) -> Result<Vec<StepResult>>
    where
        R: Rng,
        P: Fn(&[f64]) -> Vec<f64>,
    {
        self.reset(rng)?;
        let mut results = Vec::with_capacity(self.max_steps);
        loop {
            let action = policy(&self.state);
            let result = self.step(&action)?;
            let done = result.done;
            results.push(result);
            if done {
                break;
            }
        }
        Ok(results)
    }
}
