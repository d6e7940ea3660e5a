//! Intermittent-power simulation.
//!
//! A processor runs a deterministic workload while a [`PowerTrace`] supplies
//! one voltage sample per tick. The monitor compares the voltage against two
//! thresholds:
//!
//! * below `threshold_save`, the controller stores the context and the
//!   processor halts;
//! * below `threshold_off`, power is lost and the volatile context is zeroed;
//! * back at or above `threshold_save`, the context is loaded and execution
//!   resumes.
//!
//! A drop straight from running to below `threshold_off` in a single sample
//! loses power with no checkpoint taken. Storing a context is modelled as
//! instantaneous.

use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::controller::{retire_checkpoint, CheckpointRecord, Context, Seccs, SeccsError};
use crate::nvm::NvmDevice;

pub const DEFAULT_THRESHOLD_SAVE: f64 = 2.8;
pub const DEFAULT_THRESHOLD_OFF: f64 = 2.0;
pub const NOMINAL_VOLTAGE: f64 = 3.3;

const LCG_MULTIPLIER: u64 = 6_364_136_223_846_793_005;
const LCG_INCREMENT: u64 = 1_442_695_040_888_963_407;

/// Largest workload whose step counter fits in the 32-bit program counter.
pub const MAX_TOTAL_STEPS: u64 = (u32::MAX / 4) as u64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("processor is halted")]
    ProcessorHalted,
    #[error("invalid power trace: {0}")]
    InvalidTrace(String),
    #[error("total_steps {0} exceeds the supported maximum {MAX_TOTAL_STEPS}")]
    TooManySteps(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Executed,
    Complete,
}

/// The "accumulate" workload: an LCG in r0 folded into r1, one step per
/// instruction. The number of completed steps is `pc / 4`, so it travels
/// with the context through a checkpoint.
#[derive(Debug, Clone)]
pub struct Processor {
    pub ctx: Context,
    pub halted: bool,
    total_steps: u64,
}

impl Processor {
    pub fn new(total_steps: u64) -> Result<Self, SimError> {
        if total_steps > MAX_TOTAL_STEPS {
            return Err(SimError::TooManySteps(total_steps));
        }
        Ok(Self {
            ctx: Context::default(),
            halted: false,
            total_steps,
        })
    }

    pub fn steps_done(&self) -> u64 {
        (self.ctx.pc / 4) as u64
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn is_complete(&self) -> bool {
        self.steps_done() >= self.total_steps
    }

    pub fn step(&mut self) -> Result<StepOutcome, SimError> {
        if self.halted {
            return Err(SimError::ProcessorHalted);
        }
        if self.is_complete() {
            return Ok(StepOutcome::Complete);
        }
        let r = &mut self.ctx.gpr;
        r[0] = (r[0] as u64)
            .wrapping_mul(LCG_MULTIPLIER)
            .wrapping_add(LCG_INCREMENT) as u32;
        r[1] ^= r[0];
        self.ctx.pc = self.ctx.pc.wrapping_add(4);
        Ok(StepOutcome::Executed)
    }

    /// Models power loss: registers cleared, processor halted.
    pub fn power_loss(&mut self) {
        self.ctx = Context::default();
        self.halted = true;
    }

    /// The workload result `(r0, r1)`.
    pub fn result(&self) -> (u32, u32) {
        (self.ctx.gpr[0], self.ctx.gpr[1])
    }
}

/// Runs the workload to completion with no power model.
pub fn run_uninterrupted(total_steps: u64) -> Result<Context, SimError> {
    let mut p = Processor::new(total_steps)?;
    while p.step()? == StepOutcome::Executed {}
    Ok(p.ctx)
}

/// Supply voltage over time as `(tick, volts)` samples. The voltage holds
/// its value until the next sample, and the last sample holds forever.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace {
    samples: Vec<(u64, f64)>,
    threshold_save: f64,
    threshold_off: f64,
}

impl PowerTrace {
    pub fn new(
        samples: Vec<(u64, f64)>,
        threshold_save: f64,
        threshold_off: f64,
    ) -> Result<Self, SimError> {
        if samples.is_empty() {
            return Err(SimError::InvalidTrace("no samples".into()));
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(SimError::InvalidTrace(
                "step indices must be strictly increasing".into(),
            ));
        }
        if samples.iter().any(|(_, v)| !v.is_finite()) {
            return Err(SimError::InvalidTrace("non-finite voltage".into()));
        }
        if !(threshold_off.is_finite() && threshold_save.is_finite())
            || threshold_off >= threshold_save
        {
            return Err(SimError::InvalidTrace(format!(
                "threshold_off ({threshold_off}) must be below threshold_save ({threshold_save})"
            )));
        }
        Ok(Self {
            samples,
            threshold_save,
            threshold_off,
        })
    }

    /// A constant supply.
    pub fn flat(volts: f64, threshold_save: f64, threshold_off: f64) -> Result<Self, SimError> {
        Self::new(vec![(0, volts)], threshold_save, threshold_off)
    }

    /// Parses the trace file format: one `step_index voltage` pair per line,
    /// `#` starts a comment.
    pub fn parse(text: &str, threshold_save: f64, threshold_off: f64) -> Result<Self, SimError> {
        let mut samples = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || SimError::InvalidTrace(format!("line {}: {raw:?}", lineno + 1));
            let mut fields = line.split_whitespace();
            let step = fields
                .next()
                .ok_or_else(bad)?
                .parse::<u64>()
                .map_err(|_| bad())?;
            let volts = fields
                .next()
                .ok_or_else(bad)?
                .parse::<f64>()
                .map_err(|_| bad())?;
            if fields.next().is_some() {
                return Err(bad());
            }
            samples.push((step, volts));
        }
        Self::new(samples, threshold_save, threshold_off)
    }

    pub fn samples(&self) -> &[(u64, f64)] {
        &self.samples
    }

    pub fn threshold_save(&self) -> f64 {
        self.threshold_save
    }

    pub fn threshold_off(&self) -> f64 {
        self.threshold_off
    }

    pub fn last_index(&self) -> u64 {
        self.samples.last().unwrap().0
    }

    pub fn voltage_at(&self, tick: u64) -> f64 {
        let i = self.samples.partition_point(|&(t, _)| t <= tick);
        if i == 0 {
            self.samples[0].1
        } else {
            self.samples[i - 1].1
        }
    }

    /// Whether every excursion below `threshold_save` spends at least one
    /// sample in the save band before dropping under `threshold_off`.
    pub fn has_monitoring_headroom(&self) -> bool {
        let mut prev_running = true;
        for &(_, v) in &self.samples {
            if prev_running && v < self.threshold_off {
                return false;
            }
            prev_running = v >= self.threshold_save;
        }
        true
    }
}

/// Builds a trace with `dips` power failures placed at random ticks within
/// `0..horizon`. Each dip drops into the save band for 1-3 ticks, stays off
/// for 1-20 ticks, then returns to nominal voltage.
pub fn random_dip_trace<R: Rng>(
    rng: &mut R,
    horizon: u64,
    dips: usize,
    threshold_save: f64,
    threshold_off: f64,
) -> Result<PowerTrace, SimError> {
    let band = |rng: &mut R| rng.random_range(threshold_off..threshold_save);
    let mut starts: Vec<u64> = (0..dips)
        .map(|_| rng.random_range(1..horizon.max(2)))
        .collect();
    starts.sort_unstable();
    starts.dedup();

    let mut samples = vec![(0, NOMINAL_VOLTAGE)];
    // Dips are laid out on a shifted timeline so they never overlap.
    let mut shift = 0;
    for start in starts {
        let t = start + shift;
        let save_ticks = rng.random_range(1..=3);
        let off_ticks = rng.random_range(1..=20);
        samples.push((t, band(rng)));
        samples.push((t + save_ticks, rng.random_range(0.0..threshold_off)));
        samples.push((t + save_ticks + off_ticks, NOMINAL_VOLTAGE));
        shift += save_ticks + off_ticks;
    }
    PowerTrace::new(samples, threshold_save, threshold_off)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    StepExecuted,
    SaveTriggered,
    SaveFailed(SeccsError),
    PowerLost,
    PowerRestored,
    /// Voltage recovered after a save but before power was lost; execution
    /// resumed from the still-valid registers.
    BrownoutRecovered,
    LoadSucceeded,
    LoadFailed(SeccsError),
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::StepExecuted => f.write_str("StepExecuted"),
            Event::SaveTriggered => f.write_str("SaveTriggered"),
            Event::SaveFailed(e) => write!(f, "SaveFailed({e})"),
            Event::PowerLost => f.write_str("PowerLost"),
            Event::PowerRestored => f.write_str("PowerRestored"),
            Event::BrownoutRecovered => f.write_str("BrownoutRecovered"),
            Event::LoadSucceeded => f.write_str("LoadSucceeded"),
            Event::LoadFailed(e) => write!(f, "LoadFailed({})", load_failure_name(e)),
        }
    }
}

pub fn load_failure_name(e: &SeccsError) -> &'static str {
    match e {
        SeccsError::NvmTooSmall { .. } => "NvmTooSmall",
        SeccsError::EntropyUnavailable(_) => "EntropyUnavailable",
        SeccsError::NoCheckpoint => "NoCheckpoint",
        SeccsError::NoKeyRecord => "NoKeyRecord",
        SeccsError::MalformedRecord(_) => "MalformedRecord",
        SeccsError::TamperDetected => "TamperDetected",
        SeccsError::KeyGeneration(_) => "KeyGeneration",
    }
}

/// Tick-stamped event log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    events: Vec<(u64, Event)>,
}

impl EventLog {
    fn push(&mut self, tick: u64, event: Event) {
        self.events.push((tick, event));
    }

    pub fn entries(&self) -> &[(u64, Event)] {
        &self.events
    }

    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().map(|(_, e)| e)
    }

    pub fn count(&self, pred: impl Fn(&Event) -> bool) -> usize {
        self.events().filter(|e| pred(e)).count()
    }

    /// Everything except `StepExecuted`.
    pub fn controller_events(&self) -> impl Iterator<Item = &(u64, Event)> {
        self.events
            .iter()
            .filter(|(_, e)| *e != Event::StepExecuted)
    }

    /// Checks `(Step* Save Lost Restored LoadOk)* Step*`, allowing the log
    /// to stop after a save, a power loss or a failed load.
    pub fn is_well_formed(&self) -> bool {
        #[derive(PartialEq)]
        enum S {
            Steps,
            Saved,
            Lost,
            Restored,
            Failed,
        }
        let mut s = S::Steps;
        for e in self.events() {
            s = match (s, e) {
                (S::Steps, Event::StepExecuted) => S::Steps,
                (S::Steps, Event::SaveTriggered) => S::Saved,
                (S::Saved, Event::PowerLost) => S::Lost,
                (S::Lost, Event::PowerRestored) => S::Restored,
                (S::Restored, Event::LoadSucceeded) => S::Steps,
                (S::Restored, Event::LoadFailed(_)) => S::Failed,
                _ => return false,
            };
        }
        s == S::Steps || s == S::Failed || s == S::Saved || s == S::Lost
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    /// Workload finished; the checkpoint slot has been retired.
    Completed,
    /// The trace ended with the device halted or unpowered. The last
    /// checkpoint stays in NVM for the next run.
    Incomplete,
    /// Restoring a context failed; the run stopped.
    Aborted(SeccsError),
    /// Storing a context failed; the run stopped.
    SaveFailed(SeccsError),
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub final_ctx: Context,
    pub log: EventLog,
    pub outcome: RunOutcome,
    pub ticks: u64,
}

impl RunReport {
    pub fn result(&self) -> (u32, u32) {
        (self.final_ctx.gpr[0], self.final_ctx.gpr[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PowerState {
    /// Never booted; the first power-up starts the workload from scratch.
    Cold,
    Running,
    /// Context saved, processor halted, still powered.
    Halted,
    Off,
}

/// Runs `total_steps` of the workload under `trace`.
///
/// If `target_nvm` already holds a checkpoint, the device is treated as
/// having lost power mid-computation and the first power-up restores it.
pub fn run_with_power(
    trace: &PowerTrace,
    total_steps: u64,
    seccs: &mut Seccs,
    target_nvm: &mut NvmDevice,
    key_nvm: &mut NvmDevice,
) -> Result<RunReport, SimError> {
    let mut cpu = Processor::new(total_steps)?;
    let mut log = EventLog::default();
    let save_at = trace.threshold_save();
    let off_at = trace.threshold_off();

    let mut state = match CheckpointRecord::parse(target_nvm) {
        Err(SeccsError::NoCheckpoint) => PowerState::Cold,
        _ => {
            cpu.power_loss();
            PowerState::Off
        }
    };

    let mut tick = 0u64;
    let outcome = loop {
        let v = trace.voltage_at(tick);
        match state {
            PowerState::Cold => {
                if v >= save_at {
                    state = PowerState::Running;
                    continue;
                }
            }
            PowerState::Running => {
                if cpu.is_complete() {
                    retire_checkpoint(target_nvm);
                    break RunOutcome::Completed;
                }
                if v >= save_at {
                    cpu.step()?;
                    log.push(tick, Event::StepExecuted);
                } else if v >= off_at {
                    log.push(tick, Event::SaveTriggered);
                    if let Err(e) = seccs.save_context(&cpu.ctx, target_nvm, key_nvm) {
                        log.push(tick, Event::SaveFailed(e.clone()));
                        break RunOutcome::SaveFailed(e);
                    }
                    cpu.halted = true;
                    state = PowerState::Halted;
                } else {
                    log.push(tick, Event::PowerLost);
                    cpu.power_loss();
                    state = PowerState::Off;
                }
            }
            PowerState::Halted => {
                if v < off_at {
                    log.push(tick, Event::PowerLost);
                    cpu.power_loss();
                    state = PowerState::Off;
                } else if v >= save_at {
                    log.push(tick, Event::BrownoutRecovered);
                    cpu.halted = false;
                    state = PowerState::Running;
                    continue;
                }
            }
            PowerState::Off => {
                if v >= save_at {
                    log.push(tick, Event::PowerRestored);
                    match seccs.load_context(target_nvm, key_nvm) {
                        Ok(ctx) => {
                            log.push(tick, Event::LoadSucceeded);
                            cpu.ctx = ctx;
                            cpu.halted = false;
                            state = PowerState::Running;
                            continue;
                        }
                        Err(e) => {
                            log.push(tick, Event::LoadFailed(e.clone()));
                            break RunOutcome::Aborted(e);
                        }
                    }
                }
            }
        }
        if tick >= trace.last_index() && state != PowerState::Running {
            break RunOutcome::Incomplete;
        }
        tick += 1;
    };

    Ok(RunReport {
        final_ctx: cpu.ctx,
        log,
        outcome,
        ticks: tick,
    })
}
