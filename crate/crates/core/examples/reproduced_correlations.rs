//! Reproduced and residual correlations: the correlation matrix implied by
//! a factor solution against an observed one.

use bayes_cfa::preprocess::correlation_matrix;
use bayes_cfa::report::reproduced_residual;
use bayes_cfa::synthetic::{self, METABOLIC_NAMES};

fn main() -> bayes_cfa::Result<()> {
    let params = synthetic::metabolic_reference();
    let data = synthetic::dataset(&params, &METABOLIC_NAMES, 464, None, 204)?;
    let rr = reproduced_residual(&correlation_matrix(&data), &params)?;

    println!("{:<12} {:>9} {:>11} {:>9}", "pair", "observed", "reproduced", "residual");
    for j in 0..8 {
        for k in 0..j {
            println!(
                "{:<12} {:>9.3} {:>11.3} {:>9.3}",
                format!("{}-{}", METABOLIC_NAMES[j], METABOLIC_NAMES[k]),
                rr.observed[(j, k)],
                rr.reproduced[(j, k)],
                rr.residual[(j, k)]
            );
        }
    }
    let rms = (rr.residual.iter().map(|r| r * r).sum::<f64>() / 64.0).sqrt();
    println!("root mean square residual {rms:.4}");
    Ok(())
}
