fn main() {
    std::process::exit(tokenlattice_service::cli::main());
}
