fn main() -> std::process::ExitCode {
    mmhm::cli::main()
}
