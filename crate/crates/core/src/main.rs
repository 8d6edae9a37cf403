fn main() {
    std::process::exit(tangled_currents::cli::run(std::env::args_os()));
}
