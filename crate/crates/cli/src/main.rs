use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use souschef_cli::demo::{run_demo, DemoError};
use souschef_cli::scenario::Scenario;
use souschef_cli::survey::{aggregate_survey, read_csv};
use souschef_cli::{exit, DEFAULT_FIXTURES};
use souschef_core::SurveySection;
use souschef_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "souschef", version, about = "Sous-chef cooking assistant: service, demo and survey tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Replay a scripted session against the mock provider.
    Demo {
        /// Scenario file, or the name of a bundled scenario.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = DEFAULT_FIXTURES)]
        fixtures: PathBuf,
    },
    /// Score Likert survey responses.
    Survey {
        /// CSV with header participant_id,round,section,question_id,score.
        #[arg(long)]
        input: PathBuf,
        /// Round to score; all rounds are pooled when omitted.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        round: Option<u8>,
        #[arg(long)]
        section: Section,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Section {
    Usability,
    Background,
}

impl From<Section> for SurveySection {
    fn from(s: Section) -> Self {
        match s {
            Section::Usability => SurveySection::Usability,
            Section::Background => SurveySection::Background,
        }
    }
}

fn fail(code: u8, err: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Serve { config } => serve(config),
        Command::Demo { scenario, fixtures } => demo(&scenario, fixtures),
        Command::Survey {
            input,
            round,
            section,
            json,
        } => survey(input, round, section.into(), json),
    }
}

fn runtime() -> std::io::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()
}

fn serve(path: PathBuf) -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let config = match ServiceConfig::load(&path) {
        Ok(c) => c,
        Err(e) => return fail(exit::SETUP, e),
    };
    let rt = match runtime() {
        Ok(rt) => rt,
        Err(e) => return fail(exit::SETUP, e),
    };
    match rt.block_on(souschef_service::serve(config)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(exit::FAILED, e),
    }
}

fn demo(arg: &str, fixtures: PathBuf) -> ExitCode {
    let scenario = match Scenario::load(arg) {
        Ok(s) => s,
        Err(e) => return fail(exit::SETUP, e),
    };
    let rt = match runtime() {
        Ok(rt) => rt,
        Err(e) => return fail(exit::SETUP, e),
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match rt.block_on(run_demo(&scenario, &fixtures, &mut out)) {
        Ok(summary) => {
            let line = serde_json::to_string(&summary).expect("summary serializes");
            let _ = writeln!(out, "\n{line}");
            ExitCode::SUCCESS
        }
        Err(e @ DemoError::Setup(_)) => fail(exit::SETUP, e),
        Err(e) => {
            let _ = writeln!(out, "\nFAILED {e}");
            fail(exit::FAILED, e)
        }
    }
}

fn survey(input: PathBuf, round: Option<u8>, section: SurveySection, json: bool) -> ExitCode {
    let file = match std::fs::File::open(&input) {
        Ok(f) => f,
        Err(e) => return fail(exit::SETUP, format_args!("{}: {e}", input.display())),
    };
    let report = match read_csv(file).and_then(|rs| aggregate_survey(&rs, round, section)) {
        Ok(r) => r,
        Err(e) => return fail(exit::SETUP, format_args!("{}: {e}", input.display())),
    };
    if json {
        println!("{}", serde_json::to_string(&report).expect("report serializes"));
    } else {
        println!("{report}");
    }
    ExitCode::SUCCESS
}
