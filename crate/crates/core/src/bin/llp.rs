fn main() -> std::process::ExitCode {
    llp::cli::main()
}
