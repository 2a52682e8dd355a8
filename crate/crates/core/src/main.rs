fn main() -> std::process::ExitCode {
    emgbench::harness::cli::main()
}
