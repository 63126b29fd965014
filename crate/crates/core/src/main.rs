fn main() {
    std::process::exit(caet::cli::main());
}
