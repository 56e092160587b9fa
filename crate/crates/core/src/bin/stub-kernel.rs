//! Serves the stub kernel over stdin/stdout, so it can be used as a
//! sidecar command.

use decomp_core::exec::stub::StubKernel;

fn main() -> std::io::Result<()> {
    let dir = std::env::current_dir()?;
    let stdin = std::io::stdin().lock();
    let stdout = std::io::stdout().lock();
    StubKernel::new(dir).serve(stdin, stdout)
}
