fn main() -> std::process::ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    skydive_core::service::cli::main_with(std::env::args_os())
}
