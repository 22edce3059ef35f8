fn main() {
    std::process::exit(momsens::cli::run(std::env::args()));
}
