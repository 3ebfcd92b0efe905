//! `coaug` command line. Exit codes: 0 success, 1 invalid input or usage,
//! 2 I/O failure.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use coaug_core::ergonomics::{evaluate, ErgonomicReport, GuidelineSpec, Measure};
use coaug_core::geometry::RigidTransform;
use coaug_core::pose_io::{parse_pose_stream, PoseFormat};
use coaug_core::session::{canonical_json, parse_event_log, replay, snapshot, SessionConfig};
use coaug_core::skeleton::{FrameTag, TrackingMode};
use coaug_core::workstation::{default_workstation, WorkstationSpec, WorkstationType};
use coaug_server::{log, serve, ServerConfig};

use crate::recording::{generate, load_calibration, RecordingParams};
use crate::runner::{run_scenario, RunOptions};
use crate::script::ScenarioScript;

pub const LOG_DIR_ENV: &str = "COAUG_LOG_DIR";

#[derive(Debug, Parser)]
#[command(name = "coaug", version, about = "Collaborative workstation design session tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the session server until interrupted.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7400")]
        listen: SocketAddr,
        /// Browser endpoint (WebSocket at /ws plus static files).
        #[arg(long)]
        ui_listen: Option<SocketAddr>,
        #[arg(long)]
        session_config: Option<PathBuf>,
        /// Event log directory; COAUG_LOG_DIR takes precedence.
        #[arg(long)]
        log_dir: Option<PathBuf>,
        /// Directory served on the browser endpoint.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 5000)]
        heartbeat_ms: u64,
    },
    /// Evaluate every frame of a pose recording; JSONL reports on stdout.
    ErgoEval {
        pose_file: PathBuf,
        #[arg(long)]
        workstation: Option<PathBuf>,
        #[arg(long)]
        guidelines: Option<PathBuf>,
        /// Sensor pose in the shared frame, for sensor-frame recordings.
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Scenario scripts.
    Scenario {
        #[command(subcommand)]
        command: ScenarioCommand,
    },
    /// Rebuild a session from its event log and print the snapshot.
    Replay {
        event_log: PathBuf,
        /// Defaults to `<id>.config.json` next to the log, if present.
        #[arg(long)]
        session_config: Option<PathBuf>,
    },
    /// Generate a synthetic pose recording from a params file.
    Synth {
        params: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum ScenarioCommand {
    Run {
        script: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the transcript JSON here.
        #[arg(long)]
        transcript: Option<PathBuf>,
        #[arg(long)]
        log_dir: Option<PathBuf>,
        /// Connect to a running server instead of starting one.
        #[arg(long)]
        server: Option<SocketAddr>,
        /// Pace the script by the wall clock.
        #[arg(long)]
        realtime: bool,
    },
}

#[derive(Debug)]
enum CliError {
    Invalid(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Invalid(m) | CliError::Io(m) => m,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| io_err(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_slice(&read(path)?).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn write_out(out: &mut dyn Write, bytes: &[u8]) -> Result<(), CliError> {
    out.write_all(bytes).map_err(|e| CliError::Io(format!("stdout: {e}")))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run(args: impl IntoIterator<Item = OsString>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Serve {
            listen,
            ui_listen,
            session_config,
            log_dir,
            static_dir,
            heartbeat_ms,
        } => {
            let log_dir = std::env::var_os(LOG_DIR_ENV).map(PathBuf::from).or(log_dir);
            cmd_serve(listen, ui_listen, session_config, log_dir, static_dir, heartbeat_ms, err)
        }
        Command::ErgoEval {
            pose_file,
            workstation,
            guidelines,
            calibration,
        } => cmd_ergo_eval(&pose_file, workstation.as_deref(), guidelines.as_deref(), calibration.as_deref(), out),
        Command::Scenario {
            command:
                ScenarioCommand::Run {
                    script,
                    seed,
                    transcript,
                    log_dir,
                    server,
                    realtime,
                },
        } => {
            let opts = RunOptions {
                seed,
                server,
                log_dir,
                realtime,
            };
            cmd_scenario_run(&script, transcript.as_deref(), &opts, out)
        }
        Command::Replay {
            event_log,
            session_config,
        } => cmd_replay(&event_log, session_config.as_deref(), out),
        Command::Synth { params, output } => cmd_synth(&params, &output, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.code()
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Runtime::new().map_err(|e| CliError::Io(format!("starting runtime: {e}")))
}

fn cmd_serve(
    listen: SocketAddr,
    ui_listen: Option<SocketAddr>,
    session_config: Option<PathBuf>,
    log_dir: Option<PathBuf>,
    static_dir: Option<PathBuf>,
    heartbeat_ms: u64,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let session: SessionConfig = match &session_config {
        Some(p) => read_json(p)?,
        None => SessionConfig::default(),
    };
    if heartbeat_ms == 0 {
        return Err(CliError::Invalid("--heartbeat-ms must be > 0".into()));
    }
    let config = ServerConfig {
        listen,
        ui_listen,
        session,
        log_dir,
        static_dir,
        heartbeat: std::time::Duration::from_millis(heartbeat_ms),
        ..ServerConfig::default()
    };
    runtime()?.block_on(async {
        let handle = serve(config).await.map_err(|e| match e {
            coaug_server::ServerError::Bind { .. } | coaug_server::ServerError::Log { .. } => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        })?;
        let _ = writeln!(err, "line-stream endpoint on {}", handle.tcp_addr());
        if let Some(ui) = handle.ui_addr() {
            let _ = writeln!(err, "browser endpoint on http://{ui}/ (socket at /ws)");
        }
        if let Some(p) = handle.log_path() {
            let _ = writeln!(err, "event log {}", p.display());
        }
        tokio::signal::ctrl_c()
            .await
            .map_err(|e| CliError::Io(format!("waiting for interrupt: {e}")))?;
        handle.shutdown().await;
        Ok(())
    })
}

/// Per-frame evaluation used by `ergo-eval`.
pub fn evaluate_recording(
    bytes: &[u8],
    format: PoseFormat,
    workstation: Option<&WorkstationSpec>,
    guidelines: &GuidelineSpec,
    calibration: &RigidTransform,
) -> Result<Vec<ErgonomicReport>, String> {
    let stream = parse_pose_stream(bytes, format).map_err(|e| e.to_string())?;
    let mut reports = Vec::with_capacity(stream.frames.len());
    for frame in &stream.frames {
        let w = match workstation {
            Some(w) => *w,
            None => default_workstation(match frame.mode() {
                TrackingMode::Sitting => WorkstationType::SittingDesk,
                TrackingMode::Standing => WorkstationType::StandingDesk,
            }),
        };
        let shared = match frame.frame_tag() {
            FrameTag::Sensor => frame.project_to_shared(calibration).map_err(|e| e.to_string())?,
            FrameTag::Shared => frame.clone(),
        };
        reports.push(evaluate(&shared, &w, guidelines).map_err(|e| format!("t_ms {}: {e}", frame.timestamp_ms()))?);
    }
    Ok(reports)
}

fn cmd_ergo_eval(
    pose_file: &Path,
    workstation: Option<&Path>,
    guidelines: Option<&Path>,
    calibration: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let format = PoseFormat::from_path(pose_file).ok_or_else(|| {
        CliError::Invalid(format!("{}: expected a .csv or .jsonl file", pose_file.display()))
    })?;
    let bytes = read(pose_file)?;
    let workstation: Option<WorkstationSpec> = workstation.map(read_json).transpose()?;
    let guidelines: GuidelineSpec = match guidelines {
        Some(p) => {
            let text = String::from_utf8(read(p)?).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?;
            GuidelineSpec::from_json(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?
        }
        None => GuidelineSpec::shipped().clone(),
    };
    let calibration = match calibration {
        Some(p) => load_calibration(p).map_err(|e| CliError::Invalid(e.to_string()))?,
        None => RigidTransform::IDENTITY,
    };
    let reports = evaluate_recording(&bytes, format, workstation.as_ref(), &guidelines, &calibration)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", pose_file.display())))?;

    let mut text = Vec::new();
    let mut per_measure: std::collections::BTreeMap<Measure, usize> = Default::default();
    for r in &reports {
        text.extend(canonical_json(r));
        text.push(b'\n');
        for (m, _) in r.violations() {
            *per_measure.entry(m).or_default() += 1;
        }
    }
    let with = reports.iter().filter(|r| r.violation_count() > 0).count();
    let total: usize = per_measure.values().sum();
    let detail: Vec<String> = per_measure.iter().map(|(m, n)| format!("{}={n}", m.as_str())).collect();
    let detail = if detail.is_empty() { String::new() } else { format!(" ({})", detail.join(", ")) };
    text.extend(
        format!(
            "# summary: {} reports, {with} with violations, {total} violations{detail}\n",
            reports.len()
        )
        .into_bytes(),
    );
    write_out(out, &text)
}

fn cmd_scenario_run(script: &Path, transcript: Option<&Path>, opts: &RunOptions, out: &mut dyn Write) -> Result<(), CliError> {
    let loaded = ScenarioScript::load(script).map_err(|e| {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    })?;
    let t = runtime()?.block_on(run_scenario(&loaded, opts)).map_err(|e| {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    })?;
    if let Some(path) = transcript {
        std::fs::write(path, t.to_bytes()).map_err(|e| io_err(path, e))?;
    }
    let s = &t.summary;
    let phases: Vec<String> = s.phases.iter().map(|p| p.to_string()).collect();
    let text = format!(
        "scenario: {} (seed {})\n\
         events: {} applied, {} rejected\n\
         reports: {}, {} with violations; final {}: {} violations\n\
         desk: height {} m, layer {} m, width {} m, length {} m\n\
         phases: {}\n\
         phase: {}\n",
        t.name,
        t.seed,
        s.applied_events,
        s.rejected_events,
        s.reports,
        s.reports_with_violations,
        s.final_window,
        s.final_window_violations,
        s.final_dimensions.height_m,
        s.final_dimensions.layer_to_ground_m,
        s.final_dimensions.width_m,
        s.final_dimensions.length_m,
        phases.join(" -> "),
        s.final_phase,
    );
    write_out(out, text.as_bytes())
}

fn cmd_replay(event_log: &Path, session_config: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let config: SessionConfig = match session_config {
        Some(p) => read_json(p)?,
        None => match log::sibling_config(event_log).filter(|p| p.is_file()) {
            Some(p) => read_json(&p)?,
            None => SessionConfig::default(),
        },
    };
    let bytes = read(event_log)?;
    let events = parse_event_log(&bytes).map_err(|e| CliError::Invalid(format!("{}: {e}", event_log.display())))?;
    let state = replay(&config, &events).map_err(|e| CliError::Invalid(format!("{}: {e}", event_log.display())))?;
    let mut snap = snapshot(&state);
    snap.push(b'\n');
    write_out(out, &snap)
}

fn cmd_synth(params: &Path, output: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let format = PoseFormat::from_path(output)
        .ok_or_else(|| CliError::Invalid(format!("{}: expected a .csv or .jsonl output", output.display())))?;
    let text = String::from_utf8(read(params)?).map_err(|e| CliError::Invalid(format!("{}: {e}", params.display())))?;
    let p = RecordingParams::from_yaml(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", params.display())))?;
    let calibration = match &p.sensor_calibration {
        Some(rel) => {
            let path = params.parent().unwrap_or(Path::new(".")).join(rel);
            Some(load_calibration(&path).map_err(|e| CliError::Invalid(e.to_string()))?)
        }
        None => None,
    };
    let stream = generate(&p, calibration.as_ref()).map_err(|e| CliError::Invalid(e.to_string()))?;
    std::fs::write(output, stream.to_bytes(format)).map_err(|e| io_err(output, e))?;
    write_out(
        out,
        format!("wrote {} frames to {}\n", stream.frames.len(), output.display()).as_bytes(),
    )
}
