//! The inequality-constraint language: parsing a model file, canonical
//! rendering, expansion into linear atoms and evaluation at a loading
//! matrix.

use bayes_cfa::dsl::{self, expand, parse_model_file, satisfies};
use bayes_cfa::synthetic;

fn main() -> bayes_cfa::Result<()> {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/data/models.txt"))
        .map_err(|e| bayes_cfa::Error::Data(e.to_string()))?;
    let spec = synthetic::metabolic_spec();
    let lambda = synthetic::metabolic_reference().lambda;

    for model in parse_model_file(&text)? {
        let set = expand(&model.ast, &spec)?;
        println!("[{}] {} statements, {} atoms", model.name, model.ast.statements.len(), set.atoms.len());
        for atom in &set.atoms {
            let mark = if atom.holds(&lambda) { "ok " } else { "NO " };
            println!("  {mark} {atom}   (value {:+.3})", atom.value(&lambda));
        }
        println!("  satisfied at the reference loadings: {}\n", satisfies(&lambda, &set));
    }

    for bad in ["L[1,1] > abs(L[1,2]", "abs(L[1,1]) > 0.3", "L[3,1] > 0"] {
        match dsl::parse(bad).map_err(bayes_cfa::Error::from).and_then(|ast| expand(&ast, &spec)) {
            Ok(_) => println!("accepted: {bad}"),
            Err(e) => println!("rejected: {bad}\n  {e}"),
        }
    }
    Ok(())
}
