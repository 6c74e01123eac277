use clap::Parser;

fn main() {
    let cli = cocycle_lab::cli::Cli::parse();
    let code = cocycle_lab::cli::execute(cli, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
