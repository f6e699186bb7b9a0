fn main() -> std::process::ExitCode {
    ipcae::cli::main()
}
