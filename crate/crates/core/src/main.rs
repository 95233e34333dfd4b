fn main() {
    std::process::exit(coralpp::cli::run());
}
