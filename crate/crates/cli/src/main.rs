fn main() {
    std::process::exit(fkverify_cli::main_with(std::env::args_os()));
}
