fn main() {
    std::process::exit(turbdecay::cli::main());
}
