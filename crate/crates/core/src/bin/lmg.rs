fn main() {
    std::process::exit(monitored_lmg::cli::run(std::env::args_os()));
}
