fn main() {
    std::process::exit(pme::cli::run(std::env::args_os()));
}
