//! Command-line entry point. Placeholder; filled in with the pipeline.

pub fn run(_args: &[String]) -> u8 {
    eprintln!("not yet wired");
    1
}
