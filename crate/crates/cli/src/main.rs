fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QTRADE_LOG", "warn")).init();
    std::process::exit(qtrade::cli::run(std::env::args_os()));
}
