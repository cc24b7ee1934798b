fn main() { std::process::exit(entroseed::cli::run()) }
