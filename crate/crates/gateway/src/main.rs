fn main() {
    std::process::exit(glyphforge_gateway::cli::run(std::env::args_os()));
}
