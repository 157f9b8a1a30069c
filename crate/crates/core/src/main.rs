fn main() {
    std::process::exit(lora_merge::cli::run(std::env::args_os()));
}
