//! Command-line front end: `run`, `attack`, `kat` and `inspect`.
//!
//! Exit codes follow the sysexits convention where one applies:
//! 0 success, 1 failed check, 2 a context failed to load during `run`,
//! 64 usage or config error, 65 malformed input data, 66 missing input.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attack::{self, FlipScope, SavedSession};
use crate::config::{Config, ConfigError, KEY_NVM_CAPACITY, TARGET_NVM_CAPACITY};
use crate::controller::{CheckpointRecord, MacMode, SeccsError, RECORD_HEADER_LEN};
use crate::kat::{self, KatError};
use crate::keygen::{StoredChallenges, KEY_RECORD_MAGIC};
use crate::nvm::{NvmDevice, NvmError, ERASED};
use crate::simulator::{run_with_power, Event, PowerTrace, RunOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_LOAD_FAILED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_NO_INPUT: i32 = 66;

const CAMPAIGN_RNG_TWEAK: u64 = 0xA77A_C4ED;

#[derive(Debug, Parser)]
#[command(name = "seccs", version, about = "Secure context saving simulator")]
struct Cli {
    /// Path to a key=value config file. Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the workload under a power trace.
    Run {
        /// Trace file: one "step_index voltage" pair per line.
        trace: PathBuf,
    },
    /// Run an attack campaign against a freshly saved checkpoint.
    Attack {
        /// bitflip-target, bitflip-key, bitflip-both, replay,
        /// confidentiality, multibit or region-zero
        campaign: String,
        /// Sample count for the randomized campaigns.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Check Trivium, SHA-256 and HMAC against known-answer fixtures.
    Kat {
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
    /// Print the header of an NVM image without decrypting anything.
    Inspect { image: PathBuf },
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    match cli.command {
        Command::Run { trace } => cmd_run(cli.config.as_deref(), &trace, out, err),
        Command::Attack { campaign, samples } => {
            cmd_attack(cli.config.as_deref(), &campaign, samples, out, err)
        }
        Command::Kat { fixtures } => {
            let dir = fixtures.unwrap_or_else(kat::default_fixture_dir);
            cmd_kat(&dir, out, err)
        }
        Command::Inspect { image } => cmd_inspect(&image, out, err),
    }
}

fn load_config(path: Option<&Path>, err: &mut dyn Write) -> Result<Config, i32> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    Config::load(path).map_err(|e| {
        let _ = writeln!(err, "error: {e}");
        match e {
            ConfigError::Io { .. } => EXIT_NO_INPUT,
            _ => EXIT_USAGE,
        }
    })
}

fn load_or_create(path: &Path, capacity: usize, label: &str) -> Result<NvmDevice, NvmError> {
    if path.exists() {
        let dev = NvmDevice::load_image(path)?;
        if dev.capacity() != capacity {
            return Err(NvmError::CorruptImage(format!(
                "{} holds {} bytes, expected {capacity}",
                path.display(),
                dev.capacity()
            )));
        }
        Ok(dev)
    } else {
        NvmDevice::new(capacity, label)
    }
}

fn nvm_exit(e: &NvmError) -> i32 {
    match e {
        NvmError::Io(_) => EXIT_NO_INPUT,
        _ => EXIT_DATA,
    }
}

pub fn cmd_run(
    config: Option<&Path>,
    trace_path: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cfg = match load_config(config, err) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let text = match std::fs::read_to_string(trace_path) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(
                err,
                "error: cannot read trace {}: {e}",
                trace_path.display()
            );
            return EXIT_NO_INPUT;
        }
    };
    let trace = match PowerTrace::parse(&text, cfg.threshold_save, cfg.threshold_off) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", trace_path.display());
            return EXIT_DATA;
        }
    };
    let images = load_or_create(&cfg.target_path, TARGET_NVM_CAPACITY, "target")
        .and_then(|t| load_or_create(&cfg.key_path, KEY_NVM_CAPACITY, "key").map(|k| (t, k)));
    let (mut target, mut key) = match images {
        Ok(pair) => pair,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return nvm_exit(&e);
        }
    };

    let mut seccs = cfg.build_seccs();
    let report = match run_with_power(&trace, cfg.total_steps, &mut seccs, &mut target, &mut key) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };

    for (tick, event) in report.log.controller_events() {
        let _ = writeln!(out, "tick={tick} event={event}");
    }
    let steps = report.log.count(|e| *e == Event::StepExecuted);
    let controller_events = report.log.controller_events().count();
    let outcome = match &report.outcome {
        RunOutcome::Completed => "completed".to_string(),
        RunOutcome::Incomplete => "incomplete".to_string(),
        RunOutcome::Aborted(e) => format!("aborted ({e})"),
        RunOutcome::SaveFailed(e) => format!("save-failed ({e})"),
    };
    let (r0, r1) = report.result();
    let _ = writeln!(out, "outcome={outcome}");
    let _ = writeln!(out, "steps_executed={steps}");
    let _ = writeln!(out, "seccs_events={controller_events}");
    let _ = writeln!(out, "result_r0={r0:#010x}");
    let _ = writeln!(out, "result_r1={r1:#010x}");

    for (dev, path) in [(&target, &cfg.target_path), (&key, &cfg.key_path)] {
        if let Err(e) = dev.save_image(path) {
            let _ = writeln!(err, "error: cannot write {}: {e}", path.display());
            return EXIT_NO_INPUT;
        }
    }

    match report.outcome {
        RunOutcome::Completed | RunOutcome::Incomplete => EXIT_OK,
        RunOutcome::Aborted(_) | RunOutcome::SaveFailed(_) => EXIT_LOAD_FAILED,
    }
}

pub const CAMPAIGNS: &[&str] = &[
    "bitflip-target",
    "bitflip-key",
    "bitflip-both",
    "replay",
    "confidentiality",
    "multibit",
    "region-zero",
];

pub fn cmd_attack(
    config: Option<&Path>,
    campaign: &str,
    samples: usize,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    if !CAMPAIGNS.contains(&campaign) {
        let _ = writeln!(
            err,
            "error: unknown campaign {campaign:?}; expected one of {}",
            CAMPAIGNS.join(", ")
        );
        return EXIT_USAGE;
    }
    if samples == 0 {
        let _ = writeln!(err, "error: --samples must be at least 1");
        return EXIT_USAGE;
    }
    let cfg = match load_config(config, err) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let mut seccs = cfg.build_seccs();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.trng_seed ^ CAMPAIGN_RNG_TWEAK);

    let result = match campaign {
        "replay" => attack::campaign_replay(
            &mut seccs,
            attack::random_context(&mut rng),
            attack::random_context(&mut rng),
            TARGET_NVM_CAPACITY,
            KEY_NVM_CAPACITY,
        ),
        "confidentiality" => attack::campaign_confidentiality(
            &mut seccs,
            samples,
            TARGET_NVM_CAPACITY,
            KEY_NVM_CAPACITY,
            &mut rng,
        ),
        _ => {
            let session = match persisted_session(&cfg, &mut seccs, &mut rng) {
                Ok(s) => s,
                Err(msg) => {
                    let _ = writeln!(err, "error: {msg}");
                    return EXIT_NO_INPUT;
                }
            };
            match campaign {
                "bitflip-target" => {
                    attack::campaign_bitflip(&seccs, &session, FlipScope::TargetRecord)
                }
                "bitflip-key" => attack::campaign_bitflip(&seccs, &session, FlipScope::KeyRecord),
                "bitflip-both" => attack::campaign_bitflip(&seccs, &session, FlipScope::Both),
                "multibit" => attack::campaign_multibit(&seccs, &session, samples, &mut rng),
                "region-zero" => attack::campaign_region_zero(&seccs, &session, samples, &mut rng),
                _ => unreachable!("campaign names validated above"),
            }
        }
    };
    match result {
        Ok(report) => {
            let _ = write!(out, "{report}");
            report.exit_code()
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_CHECK_FAILED
        }
    }
}

/// Saves a random context, writes both images to the configured paths and
/// reads them back, so campaigns mutate exactly what is on disk.
fn persisted_session(
    cfg: &Config,
    seccs: &mut crate::controller::Seccs,
    rng: &mut ChaCha8Rng,
) -> Result<SavedSession, String> {
    let fresh = SavedSession::create(
        seccs,
        attack::random_context(rng),
        TARGET_NVM_CAPACITY,
        KEY_NVM_CAPACITY,
    )
    .map_err(|e| e.to_string())?;
    fresh
        .target
        .save_image(&cfg.target_path)
        .and_then(|_| fresh.key.save_image(&cfg.key_path))
        .map_err(|e| format!("cannot write NVM images: {e}"))?;
    let target = NvmDevice::load_image(&cfg.target_path).map_err(|e| e.to_string())?;
    let key = NvmDevice::load_image(&cfg.key_path).map_err(|e| e.to_string())?;
    Ok(SavedSession {
        target,
        key,
        context: fresh.context,
    })
}

pub fn cmd_kat(dir: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let report = match kat::run_all(dir) {
        Ok(r) => r,
        Err(e @ (KatError::Missing(_) | KatError::Empty(_))) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_NO_INPUT;
        }
    };
    for r in &report.results {
        let status = if r.passed { "pass" } else { "FAIL" };
        let _ = write!(out, "kat={} vector={} result={status}", r.suite, r.name);
        if let Some(detail) = &r.detail {
            let _ = write!(out, " detail={detail:?}");
        }
        let _ = writeln!(out);
    }
    let failed = report.failures().count();
    let _ = writeln!(out, "passed={}", report.results.len() - failed);
    let _ = writeln!(out, "failed={failed}");
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

pub fn cmd_inspect(image: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let dev = match NvmDevice::load_image(image) {
        Ok(d) => d,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", image.display());
            return nvm_exit(&e);
        }
    };
    let _ = writeln!(out, "image={} capacity={}", image.display(), dev.capacity());
    let cells = dev.cells();
    if cells.iter().all(|&b| b == ERASED) {
        let _ = writeln!(out, "no checkpoint (erased)");
        return EXIT_OK;
    }
    if cells.len() >= 4 && &cells[..4] == KEY_RECORD_MAGIC {
        return match StoredChallenges::read_from(&dev) {
            Ok(ch) => {
                let _ = writeln!(out, "magic=SKEY version={}", cells[4]);
                let _ = writeln!(out, "base_stream={:#018x}", ch.base_stream);
                let _ = writeln!(out, "base_mac={:#018x}", ch.base_mac);
                EXIT_OK
            }
            Err(_) => {
                let _ = writeln!(
                    err,
                    "error: key record header invalid: version={:#04x} reserved={}",
                    cells.get(4).copied().unwrap_or(0),
                    hex::encode(cells.get(5..8).unwrap_or(&[]))
                );
                EXIT_DATA
            }
        };
    }
    match CheckpointRecord::parse(&dev) {
        Ok(rec) => {
            let mode = match rec.mode() {
                MacMode::EncryptAndMac => "paper",
                MacMode::EncryptThenMac => "etm",
            };
            let _ = writeln!(
                out,
                "magic=SCCS version={} flags={:#04x} context_len={}",
                rec.version,
                rec.flags,
                rec.ciphertext.len()
            );
            let _ = writeln!(out, "mode={mode}");
            let _ = writeln!(out, "tag={}", rec.tag.to_hex());
            EXIT_OK
        }
        Err(SeccsError::NoCheckpoint) => {
            let _ = writeln!(
                err,
                "error: magic={} is neither \"SCCS\" nor \"SKEY\"",
                hex::encode(&cells[..4.min(cells.len())])
            );
            EXIT_DATA
        }
        Err(e) => {
            let header = &cells[..RECORD_HEADER_LEN.min(cells.len())];
            let _ = writeln!(err, "error: {e} (header bytes {})", hex::encode(header));
            EXIT_DATA
        }
    }
}
