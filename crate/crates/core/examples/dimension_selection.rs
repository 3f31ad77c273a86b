//! Choosing the number of factors: a two-factor population with one
//! correlated error pair, candidates m = 1..4, rank screen and posterior
//! model probabilities from training-sample marginal likelihoods.

use bayes_cfa::dimension::{select_dimension_with, DimensionSettings};
use bayes_cfa::marginal::MarginalSettings;
use bayes_cfa::sampler::{ChainSettings, PriorSpec};
use bayes_cfa::synthetic;

fn main() -> bayes_cfa::Result<()> {
    let names = synthetic::generic_names(8);
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    // error covariance between x7 and x8
    let data = synthetic::dataset(&synthetic::simple_two_factor(), &names, 500, Some((6, 7, 0.05)), 101)?;
    let settings = DimensionSettings {
        marginal: MarginalSettings { chain: ChainSettings::new(4_000, 1_000), splits: 5 },
        ..Default::default()
    };
    let report = select_dimension_with(&data, &PriorSpec::default(), &settings, 1)?;

    println!("{:>2}  {:<12} {:<10} {:>12} {:>8}", "m", "anchors", "screen", "log m(X)", "PMP");
    for e in &report.entries {
        let anchors: Vec<String> = e.anchors.iter().map(|a| names[*a].to_string()).collect();
        let lm = e.log_marginal.map_or("-".to_string(), |v| format!("{v:.2}"));
        let screen = if e.screen.passed() { "pass" } else { "fail" };
        println!("{:>2}  {:<12} {:<10} {lm:>12} {:>8.4}", e.m, anchors.join(","), screen, e.pmp);
    }
    println!("selected m = {}", report.best());
    Ok(())
}
