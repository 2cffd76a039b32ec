fn main() {
    std::process::exit(plastic_speech::commands::main_with_args(std::env::args_os()));
}
