fn main() {
    std::process::exit(magdirac::cli::main());
}
