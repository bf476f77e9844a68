fn main() {
    std::process::exit(consensus_latency::cli::run(std::env::args_os()));
}
