fn main() {
    let code = gfft::cli::run(std::env::args_os());
    std::process::exit(code);
}
