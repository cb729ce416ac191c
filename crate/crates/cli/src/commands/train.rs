use std::fs;
use std::path::Path;

use masque::config::RunConfig;
use masque::data::{expand_instances, Vocabulary};
use masque::training::{metrics_csv, save_checkpoint};
use masque::{Masque, ModelError, Trainer};
use serde_json::json;

use crate::files::{load_run_config, read_corpus, write_json, write_text, CONFIG_FILE, METRICS_FILE, VOCAB_FILE};
use crate::{CliError, TrainArgs};

/// Vocabulary and run configuration, which decode reads next to a checkpoint.
fn write_side_files(dir: &Path, vocab: &Vocabulary, cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    write_json(&dir.join(VOCAB_FILE), vocab)?;
    write_json(&dir.join(CONFIG_FILE), cfg)
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let cfg = load_run_config(&args.config, None)?;
    let corpus = read_corpus(&args.data)?;
    let vocab = Vocabulary::build(&corpus, cfg.data.vocab_size, &cfg.data.styles)?;
    let limits = cfg.data.limits();
    let instances = expand_instances(&corpus, &vocab, &limits, &cfg.data.mixing())?;
    let n_instances = instances.len();
    let (model, params) = Masque::new::<f64>(&cfg.model, vocab.common_size(), limits.k, cfg.train.seed)?;

    write_side_files(&args.out, &vocab, &cfg)?;
    log::info!(
        "{} examples, {} training instances, |V| = {}, {} parameters",
        corpus.len(),
        n_instances,
        vocab.common_size(),
        params.numel()
    );

    let mut trainer = Trainer::new(&model, params, instances, cfg.train.clone())?;
    let every = cfg.train.checkpoint_every;
    let out = args.out.clone();
    trainer.run(|tr, row| {
        if args.log_every > 0 && (row.step % args.log_every == 0 || row.step == tr.cfg.total_steps) {
            log::info!(
                "step {} lr {:.3e} L_dec {:.4} L_rank {:.4} L_cls {:.4} L {:.4} |g| {:.3}",
                row.step,
                row.lr,
                row.l_dec,
                row.l_rank,
                row.l_cls,
                row.total,
                row.grad_norm
            );
        }
        if every > 0 && row.step % every == 0 && row.step < tr.cfg.total_steps {
            let dir = out.join(format!("step-{:06}", row.step));
            save_checkpoint(&dir, tr.model, &tr.cfg, &tr.params, &tr.state, json!({ "data": cfg.data }))?;
            write_side_files(&dir, &vocab, &cfg).map_err(|e| ModelError::Checkpoint {
                path: dir.clone(),
                detail: e.to_string(),
            })?;
        }
        Ok(())
    })?;

    save_checkpoint(
        &args.out,
        &model,
        &trainer.cfg,
        &trainer.params,
        &trainer.state,
        json!({ "data": cfg.data, "instances": n_instances }),
    )?;
    write_text(&args.out.join(METRICS_FILE), &metrics_csv(&trainer.log))?;
    log::info!("checkpoint written to {}", args.out.display());
    Ok(())
}
