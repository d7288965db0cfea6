use std::panic;

use instapoly::cli::{run, EXIT_INTERNAL};

fn main() {
    let code = panic::catch_unwind(|| run(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr()))
        .unwrap_or(EXIT_INTERNAL);
    std::process::exit(code);
}
