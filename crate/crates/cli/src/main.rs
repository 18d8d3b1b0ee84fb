fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let env: Vec<(String, String)> = std::env::vars().collect();
    std::process::exit(medreg_cli::run(std::env::args_os(), &env));
}
