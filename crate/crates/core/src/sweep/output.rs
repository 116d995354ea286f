//! CSV emission. Floats are written with [`g17`], so every value read back
//! is the exact `f64` that was computed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::enco::EncoRecord;
use crate::error::{Error, Result};
use crate::fmt::g17;

use super::stats::Quartiles;
use super::{summarize, BiasHPoint, BiasSSweep, EncoSweep, MetaSweep, TrainSweep};

pub const BIAS_H: &str = "bias_h.csv";
pub const BIAS_S: &str = "bias_s.csv";
pub const CASE_RATIOS: &str = "case_ratios.csv";
pub const SCATTER_MARGINAL: &str = "scatter_marginal.csv";
pub const SCATTER_CONDITIONAL: &str = "scatter_conditional.csv";
pub const RUNS: &str = "runs.csv";
pub const TRAJECTORIES: &str = "trajectories.csv";
pub const RUNS_SUMMARY: &str = "runs_summary.csv";
pub const META: &str = "meta.csv";
pub const META_SUMMARY: &str = "meta_summary.csv";
pub const ENCO: &str = "enco.csv";
pub const ENCO_SUMMARY: &str = "enco_summary.csv";

pub const SUMMARY_HEADER: &str = "model,epsilon,lambda,metric,n,min,q1,median,q3,max";

fn write_file(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn summary_row(out: &mut String, model: &str, epsilon: f64, lambda: f64, metric: &str, q: &Quartiles) {
    writeln!(
        out,
        "{model},{},{},{metric},{},{},{},{},{},{}",
        g17(epsilon),
        g17(lambda),
        q.n,
        g17(q.min),
        g17(q.q1),
        g17(q.median),
        g17(q.q3),
        g17(q.max)
    )
    .expect("writing to a String");
}

pub fn write_bias_h(dir: &Path, points: &[BiasHPoint]) -> Result<Vec<PathBuf>> {
    let mut s = String::from("epsilon,mean_dh,stderr,n\n");
    for p in points {
        writeln!(
            s,
            "{},{},{},{}",
            g17(p.epsilon),
            g17(p.estimate.mean),
            g17(p.estimate.stderr),
            p.estimate.n
        )
        .expect("writing to a String");
    }
    Ok(vec![write_file(dir, BIAS_H, &s)?])
}

pub fn write_bias_s(dir: &Path, sweep: &BiasSSweep) -> Result<Vec<PathBuf>> {
    let mut shift = String::from("lambda,mean_ds,mean_ds_ce,stderr_ds,n\n");
    let mut ratios = String::from("lambda,r1,r2,r3,r4\n");
    let mut marginal = String::from("lambda,case,s1,s2\n");
    let mut conditional = String::from("lambda,case,s1,s2\n");
    for p in &sweep.points {
        let lam = g17(p.lambda);
        writeln!(
            shift,
            "{lam},{},{},{},{}",
            g17(p.mean_ds),
            g17(p.mean_ds_ce),
            g17(p.stderr_ds),
            p.n
        )
        .expect("writing to a String");
        let r = p.case_ratios();
        writeln!(ratios, "{lam},{},{},{},{}", g17(r[0]), g17(r[1]), g17(r[2]), g17(r[3]))
            .expect("writing to a String");
        for sample in &p.scatter {
            let case = sample.case.expect("chain samples carry a case").number();
            writeln!(marginal, "{lam},{case},{},{}", g17(sample.s1), g17(sample.s2))
                .expect("writing to a String");
            writeln!(
                conditional,
                "{lam},{case},{},{}",
                g17(sample.s1_cond),
                g17(sample.s2_cond)
            )
            .expect("writing to a String");
        }
    }
    Ok(vec![
        write_file(dir, BIAS_S, &shift)?,
        write_file(dir, CASE_RATIOS, &ratios)?,
        write_file(dir, SCATTER_MARGINAL, &marginal)?,
        write_file(dir, SCATTER_CONDITIONAL, &conditional)?,
    ])
}

pub fn write_train(dir: &Path, sweep: &TrainSweep) -> Result<Vec<PathBuf>> {
    let model = sweep.kind.label();
    let mut runs = String::from("run_id,model,epsilon,lambda,mode,seed,final_c1\n");
    let mut traj = String::from("run_id,epoch,mean_c1\n");
    for (slot, rec) in &sweep.runs {
        writeln!(
            runs,
            "{},{model},{},{},{},{},{}",
            slot.run_id,
            g17(slot.epsilon),
            g17(slot.lambda),
            rec.config.mode,
            rec.seed,
            g17(rec.final_c1)
        )
        .expect("writing to a String");
        for (epoch, c1) in rec.c1_trajectory.iter().enumerate() {
            writeln!(traj, "{},{epoch},{}", slot.run_id, g17(*c1)).expect("writing to a String");
        }
    }
    let mut summary = format!("{SUMMARY_HEADER}\n");
    for (eps, lam, q) in summarize(&sweep.runs, |r| r.final_c1) {
        summary_row(&mut summary, model, eps, lam, "final_c1", &q);
    }
    Ok(vec![
        write_file(dir, RUNS, &runs)?,
        write_file(dir, TRAJECTORIES, &traj)?,
        write_file(dir, RUNS_SUMMARY, &summary)?,
    ])
}

pub fn write_meta(dir: &Path, sweep: &MetaSweep) -> Result<Vec<PathBuf>> {
    let mut rows = String::from("run_id,lambda,epsilon,episode,sigma_gamma,cum_loglik_diff\n");
    for (slot, rec) in &sweep.runs {
        for (episode, (sg, diff)) in rec.sigma_gamma.iter().zip(&rec.loglik_diff).enumerate() {
            writeln!(
                rows,
                "{},{},{},{episode},{},{}",
                slot.run_id,
                g17(slot.lambda),
                g17(slot.epsilon),
                g17(*sg),
                g17(*diff)
            )
            .expect("writing to a String");
        }
    }
    let mut summary = format!("{SUMMARY_HEADER}\n");
    for (eps, lam, q) in summarize(&sweep.runs, |r| r.final_belief()) {
        summary_row(&mut summary, "meta", eps, lam, "sigma_gamma", &q);
    }
    Ok(vec![
        write_file(dir, META, &rows)?,
        write_file(dir, META_SUMMARY, &summary)?,
    ])
}

pub fn write_enco(dir: &Path, sweep: &EncoSweep) -> Result<Vec<PathBuf>> {
    let mut rows = String::from("run_id,lambda,epsilon,stage,sigma_gamma12,sigma_gamma21,sigma_theta12\n");
    for (slot, rec) in &sweep.runs {
        for (stage, b) in rec.stages.iter().enumerate() {
            writeln!(
                rows,
                "{},{},{},{stage},{},{},{}",
                slot.run_id,
                g17(slot.lambda),
                g17(slot.epsilon),
                g17(b.sigma_gamma12),
                g17(b.sigma_gamma21),
                g17(b.sigma_theta12)
            )
            .expect("writing to a String");
        }
    }
    let mut summary = format!("{SUMMARY_HEADER}\n");
    type Metric = fn(&EncoRecord) -> f64;
    let metrics: [(&str, Metric); 3] = [
        ("sigma_gamma12", |r| r.final_beliefs().sigma_gamma12),
        ("sigma_gamma21", |r| r.final_beliefs().sigma_gamma21),
        ("sigma_theta12", |r| r.final_beliefs().sigma_theta12),
    ];
    let per_metric: Vec<_> = metrics
        .iter()
        .map(|(name, f)| (*name, summarize(&sweep.runs, f)))
        .collect();
    for i in 0..per_metric[0].1.len() {
        for (name, rows) in &per_metric {
            let (eps, lam, q) = &rows[i];
            summary_row(&mut summary, "enco", *eps, *lam, name, q);
        }
    }
    Ok(vec![
        write_file(dir, ENCO, &rows)?,
        write_file(dir, ENCO_SUMMARY, &summary)?,
    ])
}
