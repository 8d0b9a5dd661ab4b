fn main() {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let code = seqclass_cli::run(std::env::args_os(), &mut stdin.lock(), &mut stdout.lock());
    std::process::exit(code);
}
