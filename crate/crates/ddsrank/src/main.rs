fn main() -> std::process::ExitCode {
    ddsrank::cli::main()
}
