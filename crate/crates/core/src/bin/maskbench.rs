fn main() -> std::process::ExitCode {
    maskbench::cli::main()
}
