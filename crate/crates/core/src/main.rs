fn main() {
    std::process::exit(specsurv::cli::run(std::env::args_os()));
}
