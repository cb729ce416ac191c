use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::decoder::DecodeTrace;

/// Answer length summary for one style.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthStats {
    pub style: String,
    pub count: usize,
    pub mean: f64,
    /// Standard error of the mean (sample standard deviation over √n).
    pub stderr: f64,
}

/// Mean mixture weights at one decoding step for one style.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaRow {
    pub style: String,
    pub t: usize,
    pub count: usize,
    pub lambda: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecodeReport {
    pub lengths: Vec<LengthStats>,
    pub lambda: Vec<LambdaRow>,
}

/// Per-style length statistics of `(style, token count)` pairs, styles in
/// lexicographic order.
pub fn length_table(answers: &[(String, usize)]) -> Vec<LengthStats> {
    let mut by_style: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (style, n) in answers {
        by_style.entry(style).or_default().push(*n as f64);
    }
    by_style
        .into_iter()
        .map(|(style, xs)| {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let stderr = if xs.len() > 1 {
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            LengthStats {
                style: style.to_string(),
                count: xs.len(),
                mean,
                stderr,
            }
        })
        .collect()
}

/// Per-style, per-step mean of λ over every trace reaching that step.
pub fn lambda_profile(traces: &[DecodeTrace]) -> Vec<LambdaRow> {
    let mut acc: BTreeMap<(&str, usize), (usize, [f64; 3])> = BTreeMap::new();
    for tr in traces {
        for s in &tr.steps {
            let e = acc.entry((tr.style.as_str(), s.t)).or_insert((0, [0.0; 3]));
            e.0 += 1;
            for i in 0..3 {
                e.1[i] += s.lambda[i];
            }
        }
    }
    acc.into_iter()
        .map(|((style, t), (count, sum))| LambdaRow {
            style: style.to_string(),
            t,
            count,
            lambda: sum.map(|x| x / count as f64),
        })
        .collect()
}

/// Lengths are counted without EOS.
pub fn decode_report(traces: &[DecodeTrace]) -> DecodeReport {
    let answers: Vec<(String, usize)> = traces
        .iter()
        .map(|t| {
            let n = t.steps.len() - usize::from(!t.truncated && !t.steps.is_empty());
            (t.style.clone(), n)
        })
        .collect();
    DecodeReport {
        lengths: length_table(&answers),
        lambda: lambda_profile(traces),
    }
}

impl DecodeReport {
    /// Both tables in one CSV: a `section` column tells them apart.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,style,t,count,mean_len,stderr_len,lambda_v,lambda_q,lambda_p\n");
        for l in &self.lengths {
            let _ = writeln!(out, "length,{},,{},{},{},,,", l.style, l.count, l.mean, l.stderr);
        }
        for r in &self.lambda {
            let _ = writeln!(
                out,
                "lambda,{},{},{},,,{},{},{}",
                r.style, r.t, r.count, r.lambda[0], r.lambda[1], r.lambda[2]
            );
        }
        out
    }
}
