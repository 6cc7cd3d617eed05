fn main() -> std::process::ExitCode {
    ezsort::cli::main()
}
