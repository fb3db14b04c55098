fn main() {
    std::process::exit(conduct_engine::cli::run());
}
