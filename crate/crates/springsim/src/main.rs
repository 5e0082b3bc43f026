fn main() {
    std::process::exit(springsim::run());
}
