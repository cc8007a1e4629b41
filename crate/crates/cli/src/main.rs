use clap::Parser;

fn main() {
    std::process::exit(cyqlone_cli::execute(cyqlone_cli::Cli::parse()));
}
