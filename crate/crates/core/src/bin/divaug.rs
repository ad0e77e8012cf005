use std::process::exit;

fn main() {
    exit(divaug::pipeline::cli::run_cli(std::env::args()));
}
