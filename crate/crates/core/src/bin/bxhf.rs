fn main() -> std::process::ExitCode {
    bxhf::cli::main()
}
