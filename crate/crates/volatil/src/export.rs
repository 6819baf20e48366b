//! Fixed-schema CSV and JSON artifacts.

use serde_json::{json, Value};
use volatil_core::driver::{DrawMatrix, SummaryRecord, SummaryTable, SvDraws};
use volatil_core::stats;

use crate::error::CliResult;
use crate::io::{num, OutputSet};

pub fn quantile_header(probs: &[f64]) -> Vec<String> {
    probs.iter().map(|p| format!("q{p}")).collect()
}

pub fn record_json(r: &SummaryRecord, probs: &[f64]) -> Value {
    let q: serde_json::Map<String, Value> = probs
        .iter()
        .zip(&r.quantiles)
        .map(|(p, v)| (format!("q{p}"), json!(v)))
        .collect();
    json!({ "name": r.name, "mean": r.mean, "sd": r.sd, "quantiles": q, "ess": r.ess })
}

pub fn summarize_column(name: &str, x: &[f64], probs: &[f64]) -> SummaryRecord {
    SummaryRecord {
        name: name.to_string(),
        mean: stats::mean(x),
        sd: stats::sd(x),
        quantiles: stats::quantiles(x, probs),
        ess: stats::ess_batch_means(x),
    }
}

pub fn summary_json(table: &SummaryTable) -> Value {
    let probs = &table.quantile_probs;
    json!({
        "quantile_probs": probs,
        "parameters": table.para.iter().map(|r| record_json(r, probs)).collect::<Vec<_>>(),
        "volatility_percent": table.latent.iter().map(|r| record_json(r, probs)).collect::<Vec<_>>(),
    })
}

/// Rows `t, [date], mean, sd, q...` from the per-time records of the summary.
pub fn write_volatility(
    out: &mut OutputSet,
    time_index: &[usize],
    records: &[SummaryRecord],
    probs: &[f64],
    labels: Option<&[String]>,
) -> CliResult<()> {
    let mut header = vec!["t".to_string()];
    if labels.is_some() {
        header.push("date".into());
    }
    header.extend(["mean".to_string(), "sd".to_string()]);
    header.extend(quantile_header(probs));
    let rows = time_index.iter().zip(records).map(|(&t, r)| {
        let mut row = vec![t.to_string()];
        if let Some(l) = labels {
            row.push(l[t - 1].clone());
        }
        row.push(num(r.mean));
        row.push(num(r.sd));
        row.extend(r.quantiles.iter().map(|&q| num(q)));
        row
    });
    out.csv("volatility.csv", &header, rows)
}

/// Column summaries of 100 exp(h/2) for each stored time point.
pub fn volatility_records(time_index: &[usize], values: &DrawMatrix, probs: &[f64]) -> Vec<SummaryRecord> {
    (0..values.cols())
        .map(|j| {
            let col: Vec<f64> = values.column(j).iter().map(|h| 100.0 * (h / 2.0).exp()).collect();
            summarize_column(&format!("h_{}", time_index[j]), &col, probs)
        })
        .collect()
}

/// One fitted chain with its label and seed.
pub struct Chain {
    pub index: usize,
    pub seed: u64,
    pub draws: SvDraws,
}

pub fn write_sv_draws(out: &mut OutputSet, chains: &[Chain]) -> CliResult<()> {
    let header: Vec<String> = ["chain", "iteration", "mu", "phi", "sigma"].map(String::from).to_vec();
    let mut rows = Vec::new();
    for c in chains {
        let p = &c.draws.para;
        let thin = c.draws.thinning.para;
        for i in 0..p.len() {
            rows.push(vec![
                c.index.to_string(),
                ((i + 1) * thin).to_string(),
                num(p.mu[i]),
                num(p.phi[i]),
                num(p.sigma[i]),
            ]);
        }
    }
    out.csv("para.csv", &header, rows)?;

    let time_index = &chains[0].draws.latent.time_index;
    let mut header: Vec<String> = vec!["chain".into(), "iteration".into()];
    header.extend(time_index.iter().map(|t| format!("h_{t}")));
    let mut rows = Vec::new();
    let mut rows0 = Vec::new();
    for c in chains {
        let l = &c.draws.latent.values;
        let thin = c.draws.thinning.latent;
        for i in 0..l.rows() {
            let it = ((i + 1) * thin).to_string();
            let mut row = vec![c.index.to_string(), it.clone()];
            row.extend(l.row(i).iter().map(|&h| num(h)));
            rows.push(row);
            rows0.push(vec![c.index.to_string(), it, num(c.draws.latent0[i])]);
        }
    }
    out.csv("latent.csv", &header, rows)?;
    let header0: Vec<String> = ["chain", "iteration", "h_0"].map(String::from).to_vec();
    out.csv("latent0.csv", &header0, rows0)
}

pub fn write_forecast(out: &mut OutputSet, forecast: &DrawMatrix, probs: &[f64]) -> CliResult<()> {
    let mut header = vec!["step".to_string(), "mean".to_string(), "sd".to_string()];
    header.extend(quantile_header(probs));
    let rows = (0..forecast.cols()).map(|j| {
        let col: Vec<f64> = forecast.column(j).iter().map(|h| 100.0 * (h / 2.0).exp()).collect();
        let r = summarize_column("", &col, probs);
        let mut row = vec![(j + 1).to_string(), num(r.mean), num(r.sd)];
        row.extend(r.quantiles.iter().map(|&q| num(q)));
        row
    });
    out.csv("forecast.csv", &header, rows)
}
