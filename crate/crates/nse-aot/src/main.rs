fn main() {
    match nse_aot::cli::run() {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(nse_aot::cli::exit_code(&e));
        }
    }
}
