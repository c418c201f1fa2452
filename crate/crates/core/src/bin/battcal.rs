fn main() {
    std::process::exit(battcal::cli::run(std::env::args_os()));
}
