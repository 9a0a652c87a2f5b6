fn main() {
    std::process::exit(homographic::cli::run(std::env::args_os()));
}
