fn main() {
    std::process::exit(pronassess::cli::main());
}
