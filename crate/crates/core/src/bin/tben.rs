fn main() {
    std::process::exit(tben_core::cli::run(std::env::args_os()));
}
