//! Data preparation: log transforms, standardization, the sample
//! correlation matrix and Kaiser-Meyer-Olkin sampling adequacy.
//!
//! ```text
//! cargo run --example preprocess_kmo -- [data.csv] [column ...]
//! ```

use bayes_cfa::preprocess::{self, kmo};

fn main() -> bayes_cfa::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/metabolic.csv").into());
    let mut columns: Vec<String> = args.collect();
    if columns.is_empty() {
        columns = ["trig", "IR", "GB", "G2"].map(String::from).to_vec();
    }

    let raw = preprocess::read_csv(&path)?;
    let data = preprocess::standardize(&preprocess::log_transform(&raw, &columns)?)?;
    let corr = preprocess::correlation_matrix(&data);

    println!("{} rows, {} variables; log of {}", data.n(), data.p(), columns.join(", "));
    let names = data.names();
    print!("{:>6}", "");
    for n in &names {
        print!("{n:>7}");
    }
    println!();
    for (j, n) in names.iter().enumerate() {
        print!("{n:>6}");
        for k in 0..data.p() {
            print!("{:>7.3}", corr.values[(j, k)]);
        }
        println!();
    }
    println!("smallest eigenvalue {:.4}, nonsingular: {}", corr.min_eigenvalue(), corr.nonsingular);
    println!("KMO {}", kmo(&corr));
    match preprocess::factor_upper_bound(data.p()) {
        Some(m) => println!("at most {m} factors are identifiable from {} variables", data.p()),
        None => println!("too few variables for a factor model"),
    }
    Ok(())
}
