fn main() {
    std::process::exit(biofuse::cli::run());
}
