fn main() {
    std::process::exit(vagueness::cli::run(std::env::args_os()));
}
