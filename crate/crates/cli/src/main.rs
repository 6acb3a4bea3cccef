use clap::Parser;

fn main() {
    let cli = ppcf_cli::Cli::parse();
    let code = ppcf_cli::run(&cli, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
