use masque::data::read_jsonl;
use masque::decoder::traces_from_records;
use masque::eval::decode_report;
use serde_json::Value;

use crate::files::write_text;
use crate::{CliError, TraceArgs};

pub fn run(args: TraceArgs) -> Result<(), CliError> {
    let records: Vec<Value> = read_jsonl(&args.input)?;
    let traces =
        traces_from_records(&records).map_err(|e| CliError::Invalid(format!("{}: {e}", args.input.display())))?;
    let report = decode_report(&traces);
    write_text(&args.out, &report.to_csv())?;
    for l in &report.lengths {
        println!("{}: {} answers, mean length {:.3} (s.e. {:.3})", l.style, l.count, l.mean, l.stderr);
    }
    Ok(())
}
