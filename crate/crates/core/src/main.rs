fn main() {
    let code = flsbathy::evalcli::run(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
