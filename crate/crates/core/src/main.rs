fn main() {
    std::process::exit(mima_twin::cli::main());
}
