fn main() {
    std::process::exit(refmi::cli::run(std::env::args_os()));
}
