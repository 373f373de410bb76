fn main() {
    std::process::exit(mfgplan::cli::run(std::env::args_os()));
}
