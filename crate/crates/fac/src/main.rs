fn main() {
    std::process::exit(fac::cli::main());
}
