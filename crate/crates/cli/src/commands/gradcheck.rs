use masque::data::{encode_example, synth_corpus, SynthSpec, Vocabulary};
use masque::config::RunConfig;
use masque::tensor::{gradient_check, GradCheckOptions, GradCheckReport, Stencil};
use masque::training::batch_loss;
use masque::{Masque, ModelError};

use crate::files::load_run_config;
use crate::{CliError, GradcheckArgs};

/// Configuration checked when no `--config` is given.
pub const TOY_PRESET: &str = include_str!("../../presets/toy.json");

/// Largest relative error accepted.
pub const TOLERANCE: f64 = 1e-4;

/// Checks the total loss of a small synthetic batch built from `cfg`.
pub fn check(cfg: &RunConfig, examples: usize, coords: usize, h: f64) -> Result<GradCheckReport, CliError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(CliError::Invalid(format!("--h must be positive, got {h}")));
    }
    if examples == 0 || coords == 0 {
        return Err(CliError::Invalid("--examples and --coords must be at least 1".into()));
    }
    let seed = cfg.train.seed;
    let spec = SynthSpec {
        k: cfg.data.k,
        n_keys: cfg.data.k + 20,
        ..SynthSpec::default()
    };
    let corpus = synth_corpus(examples, seed, &spec);
    let vocab = Vocabulary::build(&corpus, cfg.data.vocab_size, &cfg.data.styles)?;
    let limits = cfg.data.limits();
    let batch = corpus
        .iter()
        .enumerate()
        .map(|(i, raw)| encode_example(raw, &vocab, &cfg.data.styles[i % cfg.data.styles.len()], &limits))
        .collect::<Result<Vec<_>, _>>()?;
    let (model, mut ps) = Masque::new::<f64>(&cfg.model, vocab.common_size(), limits.k, seed)?;
    let ids: Vec<_> = ps.ids().collect();
    let opts = GradCheckOptions {
        h,
        stencil: Stencil::Ridders,
        coords_per_param: coords,
        seed,
    };
    Ok(gradient_check(&mut ps, &ids, &opts, |g, ps| {
        Ok::<_, ModelError>(batch_loss(g, &model, ps, &batch, &cfg.train)?.total)
    })?)
}

pub fn run(args: GradcheckArgs) -> Result<(), CliError> {
    let cfg = load_run_config(&args.config, Some(TOY_PRESET))?;
    let report = check(&cfg, args.examples, args.coords, args.h)?;
    let worst = report
        .worst
        .as_ref()
        .zip(report.worst_values)
        .map(|((name, i), (a, n))| format!("{name}[{i}]: analytic {a:.6e}, numeric {n:.6e}"))
        .unwrap_or_else(|| "-".into());
    println!(
        "max rel. err {:.3e} over {} coordinates (worst {worst})",
        report.max_rel_err, report.checked
    );
    if report.max_rel_err < TOLERANCE {
        println!("gradcheck passed (< {TOLERANCE:e})");
        Ok(())
    } else {
        Err(CliError::Invalid(format!(
            "gradcheck failed: {:.3e} is not below {TOLERANCE:e}",
            report.max_rel_err
        )))
    }
}
