fn main() {
    std::process::exit(umis_app::cli::run_from(std::env::args_os()));
}
