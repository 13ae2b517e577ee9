use std::path::PathBuf;
use std::process::ExitCode;

use ciliumcheck::{
    cmd_check, cmd_expand, cmd_explain, cmd_reachability, CheckArgs, ExplainArgs, Format,
    ReachabilityArgs,
};
use ciliumcheck_core::MatchMode;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ciliumcheck",
    version,
    about = "Check CiliumNetworkPolicy documents against deployment scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and compare each step with its expected outcome.
    Check {
        #[arg(long, num_args = 1.., value_name = "FILE")]
        policies: Vec<PathBuf>,
        #[arg(long, value_name = "FILE")]
        topology: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        scenario: PathBuf,
        /// Overrides the mode declared in the scenario file.
        #[arg(long)]
        mode: Option<MatchMode>,
        #[arg(long, default_value = "table")]
        format: Format,
        #[arg(long)]
        check_listen: bool,
    },
    /// Evaluate every sender, receiver and listen endpoint in a topology.
    Reachability {
        #[arg(long, num_args = 1.., value_name = "FILE")]
        policies: Vec<PathBuf>,
        #[arg(long, value_name = "FILE")]
        topology: PathBuf,
        #[arg(long, default_value = "strict")]
        mode: MatchMode,
        #[arg(long, default_value = "table")]
        format: Format,
        #[arg(long)]
        check_listen: bool,
    },
    /// Show which policies permit a single flow and why the others do not.
    Explain {
        #[arg(long, num_args = 1.., value_name = "FILE")]
        policies: Vec<PathBuf>,
        /// Endpoint spec, e.g. `cidr=10.28.1.2/32`
        #[arg(long)]
        sender: String,
        /// Endpoint spec, e.g. `namespace=NS-UI,port=443,label=WebUI`
        #[arg(long)]
        receiver: String,
        #[arg(long, default_value = "strict")]
        mode: MatchMode,
        #[arg(long, default_value = "table")]
        format: Format,
    },
    /// Print the expanded policies in canonical JSON form.
    Expand {
        #[arg(long, num_args = 1.., value_name = "FILE", required = true)]
        policies: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mut out, mut err) = (std::io::stdout().lock(), std::io::stderr().lock());
    let exit = match cli.command {
        Command::Check {
            policies,
            topology,
            scenario,
            mode,
            format,
            check_listen,
        } => cmd_check(
            &CheckArgs {
                policies,
                topology,
                scenario,
                mode,
                format,
                check_listen,
            },
            &mut out,
            &mut err,
        ),
        Command::Reachability {
            policies,
            topology,
            mode,
            format,
            check_listen,
        } => cmd_reachability(
            &ReachabilityArgs {
                policies,
                topology,
                mode,
                format,
                check_listen,
            },
            &mut out,
            &mut err,
        ),
        Command::Explain {
            policies,
            sender,
            receiver,
            mode,
            format,
        } => cmd_explain(
            &ExplainArgs {
                policies,
                sender,
                receiver,
                mode,
                format,
            },
            &mut out,
            &mut err,
        ),
        Command::Expand { policies } => cmd_expand(&policies, &mut out, &mut err),
    };
    ExitCode::from(exit.code() as u8)
}
