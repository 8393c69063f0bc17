fn main() {
    std::process::exit(kinetics::cli::run(std::env::args_os()));
}
