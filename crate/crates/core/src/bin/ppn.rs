fn main() {
    std::process::exit(ppn::cli::run_cli(std::env::args_os()));
}
