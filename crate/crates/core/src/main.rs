fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SETNET_LOG", "error")).init();
    std::process::exit(setnet::cli::run(std::env::args_os()));
}
