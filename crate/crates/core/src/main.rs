fn main() {
    std::process::exit(adaptive_im::harness::main_with_args(std::env::args_os()));
}
