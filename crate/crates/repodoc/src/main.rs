fn main() {
    std::process::exit(repodoc::cli::run(std::env::args_os()));
}
