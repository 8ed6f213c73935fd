fn main() {
    std::process::exit(d3hr::cli::run(std::env::args_os()));
}
