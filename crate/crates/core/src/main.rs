fn main() {
    std::process::exit(nested_brdf::cli::run(std::env::args_os()));
}
