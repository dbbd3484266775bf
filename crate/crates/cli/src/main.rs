fn main() {
    std::process::exit(otshift::run(std::env::args_os()));
}
