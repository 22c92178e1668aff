fn main() {
    std::process::exit(bessel_field::cli::run(std::env::args_os()));
}
