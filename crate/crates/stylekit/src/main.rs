use clap::Parser;
use serde_json::json;

fn main() {
    let cli = match stylekit::cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own help/usage text; 2 means usage error.
            let _ = e.print();
            std::process::exit(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(err) = stylekit::cli::run(cli) {
        eprintln!("{}", json!({"error": err.to_string(), "kind": err.kind()}));
        std::process::exit(1);
    }
}
