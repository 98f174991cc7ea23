fn main() {
    std::process::exit(rot::cli::run());
}
