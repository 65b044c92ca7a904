fn main() {
    let code = btd_core::cli::run(std::env::args_os());
    std::process::exit(code);
}
