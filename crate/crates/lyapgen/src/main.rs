fn main() -> std::process::ExitCode {
    lyapgen::cli::main()
}
