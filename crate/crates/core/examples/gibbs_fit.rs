//! Gibbs sampling of an unrestricted two-factor model on simulated data,
//! with a posterior summary table and the true values alongside.

use bayes_cfa::report::posterior_summary;
use bayes_cfa::sampler::{gibbs_run_chains, ChainSettings, PriorSpec};
use bayes_cfa::synthetic::{self, METABOLIC_NAMES};

fn main() -> bayes_cfa::Result<()> {
    let truth = synthetic::metabolic_reference();
    let data = synthetic::dataset(&truth, &METABOLIC_NAMES, 464, None, 204)?;
    let spec = synthetic::metabolic_spec();
    println!("base model:\n{}", spec.to_text());

    let draws = gibbs_run_chains(&data, &spec, &PriorSpec::default(), ChainSettings::new(12_000, 2_000), 11, 2)?;
    let summary = posterior_summary(&draws)?;

    println!("{:<8} {:>7} {:>8} {:>17}", "param", "true", "mean", "95% interval");
    for row in summary.rows.iter().take(2 * 8 + 1) {
        let (j, k) = row.index;
        let true_value = match row.kind {
            bayes_cfa::report::ParamKind::Loading => truth.lambda[(j, k)],
            _ => truth.phi[(j, k)],
        };
        if row.fixed {
            println!("{:<8} {true_value:>7.3} {:>8}", row.label(), "fixed");
        } else {
            println!("{:<8} {true_value:>7.3} {:>8.3}   [{:.3}, {:.3}]", row.label(), row.mean, row.lower, row.upper);
        }
    }
    Ok(())
}
