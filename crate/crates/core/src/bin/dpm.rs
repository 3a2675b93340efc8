fn main() {
    std::process::exit(dpm_core::cli::run(std::env::args_os()));
}
