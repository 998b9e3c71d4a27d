fn main() -> std::process::ExitCode {
    bikenet::cli::main()
}
