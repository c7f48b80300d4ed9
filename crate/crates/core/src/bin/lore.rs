fn main() -> std::process::ExitCode {
    std::process::ExitCode::from(lore::cli::run(std::env::args_os()))
}
