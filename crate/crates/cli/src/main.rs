use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use dwg_cli::commands::{self, Inputs, EXIT_LOAD};
use dwg_cli::load::engine_from_files;
use dwg_cli::server::{serve, AppState};
use dwg_core::compiler::CompileOptions;

#[derive(Parser)]
#[command(name = "dwg", version, about = "Compile, inspect and run dialogue workflow graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    /// Dialogue model (.dwg)
    model: PathBuf,
    /// Ontology the model refers to (.onto)
    #[arg(short = 'O', long)]
    ontology: PathBuf,
    /// Accept cycles among immediate nodes (they are cut at run time)
    #[arg(long)]
    allow_immediate_cycles: bool,
}

impl ModelArgs {
    fn inputs(&self) -> Inputs<'_> {
        Inputs {
            model: &self.model,
            ontology: &self.ontology,
            options: CompileOptions {
                allow_immediate_cycles: self.allow_immediate_cycles,
            },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the IR as JSON and print model metrics
    Compile {
        #[command(flatten)]
        args: ModelArgs,
        /// IR output path [default: model path with .ir.json]
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Write the graph in DOT format
    Viz {
        #[command(flatten)]
        args: ModelArgs,
        /// DOT output path [default: stdout]
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Compile without writing anything
    Validate {
        #[command(flatten)]
        args: ModelArgs,
    },
    /// Chat with the model on the terminal
    Run {
        #[command(flatten)]
        args: ModelArgs,
    },
    /// Run a scripted dialogue and check its expectations
    Replay {
        #[command(flatten)]
        args: ModelArgs,
        /// Script of U:, E: and E=: lines
        script: PathBuf,
    },
    /// Serve the session API over HTTP
    Serve {
        #[command(flatten)]
        args: ModelArgs,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Seconds a session may stay idle before it is dropped
        #[arg(long, default_value_t = 1800)]
        idle_timeout: u64,
    },
}

fn ir_path(model: &Path) -> PathBuf {
    model.with_extension("ir.json")
}

fn run_serve(args: &ModelArgs, host: &str, port: u16, idle: u64) -> i32 {
    let inputs = args.inputs();
    let (engine, warnings) = match engine_from_files(inputs.model, inputs.ontology, inputs.options) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_LOAD;
        }
    };
    for w in warnings {
        eprintln!("{w}");
    }
    let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
    rt.block_on(async {
        let listener = match tokio::net::TcpListener::bind((host, port)).await {
            Ok(l) => l,
            Err(e) => {
                eprintln!("cannot listen on {host}:{port}: {e}");
                return EXIT_LOAD;
            }
        };
        if let Ok(addr) = listener.local_addr() {
            eprintln!("listening on http://{addr}");
        }
        match serve(listener, AppState::new(engine, Duration::from_secs(idle))).await {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("server error: {e}");
                EXIT_LOAD
            }
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut err = io::stderr();
    let code = match &cli.command {
        Command::Compile { args, out: path } => {
            let path = path.clone().unwrap_or_else(|| ir_path(&args.model));
            commands::compile(&args.inputs(), &path, &mut out, &mut err)
        }
        Command::Viz { args, out: path } => commands::viz(&args.inputs(), path.as_deref(), &mut out, &mut err),
        Command::Validate { args } => commands::validate(&args.inputs(), &mut out, &mut err),
        Command::Run { args } => commands::run(&args.inputs(), &mut io::stdin().lock(), &mut out, &mut err),
        Command::Replay { args, script } => commands::replay(&args.inputs(), script, &mut out, &mut err),
        Command::Serve {
            args,
            port,
            host,
            idle_timeout,
        } => run_serve(args, host, *port, *idle_timeout),
    };
    let _ = out.flush();
    ExitCode::from(code as u8)
}
