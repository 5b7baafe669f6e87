fn main() -> std::process::ExitCode {
    lcr_core::cli::main()
}
