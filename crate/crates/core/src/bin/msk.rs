fn main() {
    std::process::exit(msk_core::cli::run(std::env::args_os()));
}
