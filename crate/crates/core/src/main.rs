use clap::Parser;

fn main() {
    let cli = gpclip::cli::Cli::parse();
    let code = gpclip::cli::run(cli, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
