fn main() {
    std::process::exit(capcurate::cli::run(std::env::args_os()));
}
