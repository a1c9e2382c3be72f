fn main() {
    std::process::exit(spinlayer::cli::main(std::env::args_os()));
}
