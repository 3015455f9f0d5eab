fn main() {
    std::process::exit(molcap::cli::main_with_args(std::env::args_os()));
}
