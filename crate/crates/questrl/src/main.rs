fn main() {
    std::process::exit(questrl::harness::cli::cli_main(std::env::args()));
}
