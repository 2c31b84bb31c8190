fn main() -> std::process::ExitCode {
    volmetric::cli::main()
}
