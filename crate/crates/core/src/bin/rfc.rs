fn main() -> std::process::ExitCode {
    rfclust::cli::main()
}
