fn main() {
    std::process::exit(fbmlab::run(std::env::args()));
}
