use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = padic_heat::cli::Cli::parse();
    std::process::exit(padic_heat::cli::main_with(&cli));
}
