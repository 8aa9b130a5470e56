fn main() {
    let status = persuakit::cli::dispatch(std::env::args_os());
    std::process::exit(status.code());
}
