fn main() {
    std::process::exit(fusion_gcn::cli::run(std::env::args_os()));
}
