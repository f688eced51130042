fn main() {
    std::process::exit(sensegloss::cli::run(std::env::args_os()));
}
