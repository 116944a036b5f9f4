fn main() {
    std::process::exit(mfrisk_cli::run(std::env::args_os()));
}
