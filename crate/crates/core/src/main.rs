fn main() -> std::process::ExitCode {
    hexcommand::cli::main()
}
