//! Writes a synthetic metabolic dataset on raw clinical scales.
//!
//! Rows are drawn from the two-factor glucose/lipid solution, then mapped to
//! plausible units; triglycerides, insulin resistance and both glucose
//! measures are log-normal, so the pipeline should log-transform them.
//!
//! ```text
//! cargo run --example generate_synthetic -- [rows] [seed] [out.csv]
//! ```

use std::io::Write;

use bayes_cfa::sampler::simulate;
use bayes_cfa::synthetic::{metabolic_reference, METABOLIC_NAMES};

/// (location, scale, log-normal) per indicator.
const SCALES: [(f64, f64, bool); 8] = [
    (27.0, 4.5, false),  // BMI, kg/m2
    (0.3, 0.45, true),   // triglycerides, log mmol/l
    (1.3, 0.35, false),  // HDL, mmol/l
    (0.9, 0.6, true),    // insulin resistance, log HOMA
    (1.65, 0.12, true),  // fasting glucose, log mmol/l
    (1.8, 0.25, true),   // glucose after 2 h, log mmol/l
    (135.0, 18.0, false), // systolic BP, mmHg
    (82.0, 10.0, false), // diastolic BP, mmHg
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let rows: usize = args.first().map_or(Ok(464), |s| s.parse())?;
    let seed: u64 = args.get(1).map_or(Ok(204), |s| s.parse())?;
    let x = simulate(&metabolic_reference(), rows, None, seed)?;

    let mut out: Box<dyn Write> = match args.get(2) {
        Some(path) => Box::new(std::fs::File::create(path)?),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(out, "{}", METABOLIC_NAMES.join(","))?;
    for i in 0..rows {
        let fields: Vec<String> = SCALES
            .iter()
            .enumerate()
            .map(|(j, &(loc, scale, log))| {
                let v = loc + scale * x[(i, j)];
                format!("{:.4}", if log { v.exp() } else { v })
            })
            .collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}
