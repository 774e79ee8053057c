use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("BTT_LOG", "warn")).init();
    diaghpo_cli::main_with(std::env::args_os())
}
