fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(cirlab::cli::run(&args));
}
