//! `glocal` command-line entry point.

fn main() {
    std::process::exit(glocal::cli::execute(std::env::args_os()));
}
