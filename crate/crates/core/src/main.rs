fn main() {
    std::process::exit(lambda_var::cli::run(std::env::args_os()));
}
