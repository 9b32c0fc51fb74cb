fn main() {
    std::process::exit(donorspin::cli::run(std::env::args_os()));
}
