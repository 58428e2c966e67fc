use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Subcommand, ValueEnum};
use promptlab_core::presample::{
    run_cycle, Backend, CycleMode, HttpBackend, HttpBackendConfig, MockBackend, PipelineConfig,
    Step,
};
use promptlab_core::prompt::parse_prompt;
use promptlab_core::seed;
use promptlab_core::LengthClass;
use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{create_output, read_input, write_err};
use crate::config::{parse_file_value, pick};
use crate::{CliError, Context};

#[derive(Debug, Subcommand)]
pub enum PresampleCmd {
    /// Expand every prompt in a file.
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    TwoStep,
    ThreeStep,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// One prompt per line: plain text, a JSON string or `{"id", "prompt"}`.
    #[arg(long)]
    pub input: PathBuf,
    /// Output JSONL; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, env = "PROMPTLAB_BACKEND")]
    pub backend: Option<BackendKind>,
    /// Completion endpoint for the http backend.
    #[arg(long, env = "PROMPTLAB_ENDPOINT")]
    pub endpoint: Option<String>,
    #[arg(long, env = "PROMPTLAB_LENGTH")]
    pub length: Option<LengthClass>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_new_units: Option<usize>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum InputLine {
    Text(String),
    Object {
        #[serde(default)]
        id: Option<String>,
        prompt: String,
    },
}

#[derive(Serialize)]
struct OutputLine<'a> {
    id: &'a str,
    input: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_prompt: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    overflow: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    steps: &'a [Step],
}

fn parse_inputs(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let default_id = (i + 1).to_string();
        let (id, prompt) = if trimmed.starts_with('{') || trimmed.starts_with('"') {
            match serde_json::from_str::<InputLine>(trimmed)
                .map_err(|e| CliError::Input(format!("line {}: {e}", i + 1)))?
            {
                InputLine::Text(p) => (default_id, p),
                InputLine::Object { id, prompt } => (id.unwrap_or(default_id), prompt),
            }
        } else {
            (default_id, trimmed.to_string())
        };
        out.push((id, prompt));
    }
    Ok(out)
}

fn backend(args: &RunArgs, ctx: &Context) -> Result<Box<dyn Backend>, CliError> {
    let file = &ctx.file.presample;
    let kind = match args.backend {
        Some(k) => k,
        None => match file.backend.as_deref() {
            None | Some("mock") => BackendKind::Mock,
            Some("http") => BackendKind::Http,
            Some(other) => {
                return Err(CliError::Input(format!(
                    "config key presample.backend: unknown backend {other:?}"
                )))
            }
        },
    };
    Ok(match kind {
        BackendKind::Mock => Box::new(MockBackend::default()),
        BackendKind::Http => {
            let endpoint = args
                .endpoint
                .clone()
                .or_else(|| file.endpoint.clone())
                .ok_or_else(|| CliError::Input("the http backend needs --endpoint".into()))?;
            let mut cfg = HttpBackendConfig::new(endpoint).with_env_token();
            if let Some(t) = file.timeout_secs {
                if !(t.is_finite() && t > 0.0) {
                    return Err(CliError::Input(
                        "presample.timeout_secs must be positive".into(),
                    ));
                }
                cfg.timeout = Duration::from_secs_f64(t);
            }
            cfg.max_attempts = file.max_attempts.unwrap_or(cfg.max_attempts).max(1);
            cfg.max_in_flight = file.max_in_flight.unwrap_or(cfg.max_in_flight).max(1);
            Box::new(HttpBackend::new(cfg))
        }
    })
}

pub fn run(cmd: PresampleCmd, ctx: &Context, out: &mut dyn Write) -> Result<(), CliError> {
    let PresampleCmd::Run(args) = cmd;
    let file = &ctx.file.presample;
    let length = pick(
        args.length,
        parse_file_value("presample.length", file.length.as_deref())?,
        LengthClass::Long,
    );
    let mode = match args.mode {
        Some(ModeArg::TwoStep) => CycleMode::TwoStep,
        Some(ModeArg::ThreeStep) => CycleMode::ThreeStep,
        None => match file.mode.as_deref() {
            None | Some("two_step") | Some("two-step") => CycleMode::TwoStep,
            Some("three_step") | Some("three-step") => CycleMode::ThreeStep,
            Some(other) => return Err(CliError::Input(format!("unknown mode {other:?}"))),
        },
    };
    let mut pipeline = PipelineConfig {
        mode,
        ..PipelineConfig::default()
    };
    pipeline.temperature = pick(args.temperature, file.temperature, pipeline.temperature);
    pipeline.max_new_units = pick(
        args.max_new_units,
        file.max_new_units,
        pipeline.max_new_units,
    );
    if !(pipeline.temperature.is_finite() && pipeline.temperature >= 0.0)
        || pipeline.max_new_units == 0
    {
        return Err(CliError::Input(
            "temperature must be >= 0 and max_new_units >= 1".into(),
        ));
    }
    let backend = backend(&args, ctx)?;
    let inputs = parse_inputs(&read_input(&args.input)?)?;
    let global = ctx.seed_or(0);

    let mut file_out = args.out.as_deref().map(create_output).transpose()?;
    let sink: &mut dyn Write = match file_out.as_mut() {
        Some(f) => f,
        None => out,
    };
    let mut failures = 0usize;
    for (id, prompt) in &inputs {
        let user = parse_prompt(prompt);
        let line = match run_cycle(
            backend.as_ref(),
            &user,
            length,
            seed::derive(global, id),
            &pipeline,
        ) {
            Ok(res) => serde_json::to_string(&OutputLine {
                id,
                input: prompt,
                final_prompt: Some(res.final_text()),
                overflow: Some(res.overflow),
                error: None,
                steps: &res.steps,
            }),
            Err(e) => {
                warn!(%id, error = %e, "cycle failed");
                failures += 1;
                serde_json::to_string(&OutputLine {
                    id,
                    input: prompt,
                    final_prompt: None,
                    overflow: None,
                    error: Some(e.error.to_string()),
                    steps: &e.steps,
                })
            }
        }
        .map_err(|e| CliError::Runtime(e.to_string()))?;
        writeln!(sink, "{line}").map_err(write_err)?;
    }
    sink.flush().map_err(write_err)?;
    if failures > 0 {
        return Err(CliError::Runtime(format!(
            "{failures} of {} prompts failed",
            inputs.len()
        )));
    }
    Ok(())
}
