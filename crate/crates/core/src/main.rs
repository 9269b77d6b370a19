fn main() {
    std::process::exit(factor_mcls::cli::main_with_args(std::env::args_os()));
}
