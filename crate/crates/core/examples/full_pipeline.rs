//! All four steps from the bundled configuration, writing the report bundle
//! to a directory of your choice.
//!
//! ```text
//! cargo run --release --example full_pipeline -- [out_dir]
//! ```

use std::path::Path;

use bayes_cfa::config::Config;
use bayes_cfa::pipeline::Pipeline;

fn main() -> bayes_cfa::Result<()> {
    let mut config = Config::load(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/data/config.toml")))?;
    if let Some(dir) = std::env::args().nth(1) {
        config.out_dir = dir.into();
    }
    let pipeline = Pipeline::new(config);
    let report = pipeline.all()?;
    print!("{}", report.text());
    println!("\nbundle written to {}", pipeline.out_dir().join("report").display());
    Ok(())
}
