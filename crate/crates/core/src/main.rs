fn main() {
    std::process::exit(wsn_forecast::cli::run(std::env::args_os()));
}
