use clap::Parser;
use qstc_cli::{execute, Cli, EXIT_OK};

fn main() {
    let cli = Cli::parse();
    let code = match execute(&cli) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
