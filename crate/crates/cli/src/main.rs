fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VIBENCH_LOG", "warn")).init();
    std::process::exit(vibench_cli::run_cli(std::env::args_os()));
}
