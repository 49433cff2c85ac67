fn main() -> std::process::ExitCode {
    aemr::cli::main()
}
