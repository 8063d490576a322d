fn main() {
    std::process::exit(typegraph::cli::main());
}
