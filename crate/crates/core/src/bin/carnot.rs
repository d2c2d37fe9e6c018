fn main() {
    std::process::exit(carnot::cli::run_command(std::env::args_os()));
}
