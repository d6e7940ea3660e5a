//! Run the accumulate workload under an intermittent supply and compare
//! the result with an uninterrupted run.
//!
//!     cargo run --example power_failures [trace-file]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seccs::config::Config;
use seccs::simulator::{random_dip_trace, run_uninterrupted, Event};
use seccs::{run_with_power, NvmDevice, PowerTrace};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = Config::default();
    let trace = match std::env::args().nth(1) {
        Some(path) => PowerTrace::parse(
            &std::fs::read_to_string(path)?,
            cfg.threshold_save,
            cfg.threshold_off,
        )?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            random_dip_trace(
                &mut rng,
                cfg.total_steps,
                6,
                cfg.threshold_save,
                cfg.threshold_off,
            )?
        }
    };

    let mut seccs = cfg.build_seccs();
    let mut target = NvmDevice::new(256, "target")?;
    let mut key = NvmDevice::new(64, "key")?;
    let report = run_with_power(&trace, cfg.total_steps, &mut seccs, &mut target, &mut key)?;

    for (tick, event) in report.log.controller_events() {
        println!("{tick:>6}  {event}");
    }
    let reference = run_uninterrupted(cfg.total_steps)?;
    println!("outcome {:?} after {} ticks", report.outcome, report.ticks);
    println!(
        "result r0={:#010x} r1={:#010x} (uninterrupted: {:#010x} {:#010x})",
        report.final_ctx.gpr[0], report.final_ctx.gpr[1], reference.gpr[0], reference.gpr[1]
    );
    println!(
        "{} steps executed, {} restores",
        report.log.count(|e| *e == Event::StepExecuted),
        report.log.count(|e| *e == Event::LoadSucceeded)
    );
    Ok(())
}
