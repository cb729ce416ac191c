use masque::data::{synth_corpus, write_jsonl, SynthSpec};

use crate::{resolve_seed, CliError, SynthArgs};

pub fn run(args: SynthArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&args.unanswerable_frac) {
        return Err(CliError::Invalid(format!(
            "--unanswerable-frac must lie in [0, 1], got {}",
            args.unanswerable_frac
        )));
    }
    if args.k == 0 || args.n_keys <= args.k {
        return Err(CliError::Invalid(format!(
            "--n-keys ({}) must exceed --k ({}), which must be at least 1",
            args.n_keys, args.k
        )));
    }
    let seed = resolve_seed(args.seed, 0)?;
    let spec = SynthSpec {
        k: args.k,
        n_keys: args.n_keys,
        unanswerable_frac: args.unanswerable_frac,
        id_prefix: args.id_prefix,
        ..SynthSpec::default()
    };
    let corpus = synth_corpus(args.n, seed, &spec);
    write_jsonl(&args.out, &corpus)?;
    log::info!("wrote {} examples to {}", corpus.len(), args.out.display());
    Ok(())
}
