//! Answer, ranking and answerability metrics, and decode reports.

mod metrics;
mod report;

pub use metrics::{
    bleu_1, exact_match, map_mrr, pr_curve_max_f1, ranking, rouge_l, rouge_l_tokens, Normalize, PrCurve, PrPoint,
    ROUGE_BETA,
};
pub use report::{decode_report, lambda_profile, length_table, DecodeReport, LambdaRow, LengthStats};
