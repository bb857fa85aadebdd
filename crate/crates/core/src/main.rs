fn main() {
    std::process::exit(hypomimia::cli::run(std::env::args_os()));
}
