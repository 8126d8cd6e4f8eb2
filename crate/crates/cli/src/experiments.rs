//! Builtin figure experiments and config-driven sweeps.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use shadownet::engine::{run_replicated, AggregateReport, MetricsReport};
use shadownet::propagation::{PropagationModel, RadioParams};
use shadownet::study::{
    exceedance_curve, hop_table, mitigation_comparison, model_comparison, path_loss_densities,
    suite_delivery, tworay_curve, HOP_RANGE_M, PATH_LOSS_DISTANCES_M,
};
use shadownet::ConfigError;

use crate::config::ExperimentSpec;
use crate::error::CliError;
use crate::output::{num, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Builtin {
    Fig5,
    Fig6,
    Fig7,
    Fig8,
    Fig9,
    Fig10,
}

impl Builtin {
    pub fn runs_simulations(self) -> bool {
        matches!(self, Builtin::Fig8 | Builtin::Fig9 | Builtin::Fig10)
    }
}

#[derive(Debug, Clone)]
pub struct BuiltinOptions {
    pub seeds: u32,
    pub seed: u64,
    pub out_dir: PathBuf,
}

fn runtime(e: ConfigError) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Runs a builtin experiment and returns the files written.
pub fn run_builtin(which: Builtin, opts: &BuiltinOptions) -> Result<Vec<PathBuf>, CliError> {
    if which.runs_simulations() && opts.seeds == 0 && which != Builtin::Fig8 {
        return Err(CliError::Config(ConfigError::Invalid {
            field: "seeds",
            reason: "must be at least 1".into(),
        }));
    }
    let radio = RadioParams::baseline();
    let dir = &opts.out_dir;
    let mut written = Vec::new();
    match which {
        Builtin::Fig5 => {
            let mut t = Table::new(&["area_m2", "d1_m", "d2_m", "mean_link_distance_m", "hop_estimate"]);
            t.note(format!("range_m: {}", num(HOP_RANGE_M)));
            for r in hop_table(HOP_RANGE_M) {
                t.row(vec![
                    num(r.area_m2),
                    num(r.d1_m),
                    num(r.d2_m),
                    num(r.mean_link_distance_m),
                    r.hop_estimate.to_string(),
                ]);
            }
            written.push(emit(&t, dir, "fig5_hops.csv")?);
        }
        Builtin::Fig6 => {
            let mut t = Table::new(&["d_m", "mean_pl_db", "x_db", "pdf"]);
            for r in path_loss_densities(&radio, &PATH_LOSS_DISTANCES_M, 0.1)? {
                t.row(vec![num(r.d_m), num(r.mean_pl_db), num(r.x_db), num(r.pdf)]);
            }
            written.push(emit(&t, dir, "fig6_path_loss_pdf.csv")?);
        }
        Builtin::Fig7 => {
            let mut t = Table::new(&["d_m", "area_pi_d2_m2", "prob_above_threshold"]);
            for r in exceedance_curve(&radio, 1.0, 250.0, 1.0)? {
                t.row(vec![num(r.d_m), num(r.area_pi_d2_m2), num(r.prob_above_threshold)]);
            }
            written.push(emit(&t, dir, "fig7_exceedance.csv")?);
        }
        Builtin::Fig8 => {
            let mut t = Table::new(&["d_m", "pr_dbm_two_ray", "pth_dbm"]);
            for r in tworay_curve(&radio, 1.0, 300.0, 1.0)? {
                t.row(vec![num(r.d_m), num(r.pr_dbm_two_ray), num(r.pth_dbm)]);
            }
            written.push(emit(&t, dir, "fig8_two_ray.csv")?);
            if opts.seeds > 0 {
                let runs = suite_delivery(opts.seeds, opts.seed, |c| {
                    c.propagation = PropagationModel::TwoRay
                })
                .map_err(runtime)?;
                let mut d = Table::new(&["area_m2", "node_count", "dr_two_ray_mean", "dr_two_ray_std"]);
                d.note(format!("seeds: {}", opts.seeds));
                for (c, agg) in &runs {
                    d.row(vec![
                        num(c.region.area()),
                        c.node_count.to_string(),
                        num(agg.delivery_ratio.mean),
                        num(agg.delivery_ratio.std),
                    ]);
                }
                written.push(emit(&d, dir, "fig8_delivery.csv")?);
            }
        }
        Builtin::Fig9 => {
            let cmp = model_comparison(opts.seeds, opts.seed).map_err(runtime)?;
            let mut t = Table::new(&[
                "area_m2",
                "dr_two_ray",
                "dr_shadowing_mean",
                "dr_shadowing_std",
                "dr_predicted",
            ]);
            t.note(format!("k: {}", num(cmp.k)));
            t.note(format!("seeds: {}", opts.seeds));
            for r in &cmp.rows {
                t.row(vec![
                    num(r.area_m2),
                    num(r.two_ray.mean),
                    num(r.shadowing.mean),
                    num(r.shadowing.std),
                    num(r.predicted),
                ]);
            }
            println!("calibrated k = {:.6}", cmp.k);
            written.push(emit(&t, dir, "fig9_delivery.csv")?);
        }
        Builtin::Fig10 => {
            let rows = mitigation_comparison(opts.seeds, opts.seed).map_err(runtime)?;
            let mut t = Table::new(&[
                "area_m2",
                "dr_baseline",
                "dr_high_power",
                "dr_retry12",
                "std_baseline",
                "std_high_power",
                "std_retry12",
            ]);
            t.note(format!("seeds: {}", opts.seeds));
            for r in &rows {
                t.row(vec![
                    num(r.area_m2),
                    num(r.baseline.mean),
                    num(r.high_power.mean),
                    num(r.high_retry.mean),
                    num(r.baseline.std),
                    num(r.high_power.std),
                    num(r.high_retry.std),
                ]);
            }
            written.push(emit(&t, dir, "fig10_mitigation.csv")?);
        }
    }
    Ok(written)
}

fn emit(t: &Table, dir: &Path, name: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    t.write(&path)?;
    Ok(path)
}

/// Output location of a config-driven run: the configured path, or its
/// file name inside `out_dir` when an output directory is given.
pub fn resolve_output(spec: &ExperimentSpec, out_dir: Option<&Path>) -> PathBuf {
    match out_dir {
        Some(dir) => dir.join(spec.output_path.file_name().unwrap_or_else(|| "out.csv".as_ref())),
        None => spec.output_path.clone(),
    }
}

fn detail_path(summary: &Path) -> PathBuf {
    let stem = summary.file_stem().map_or("out".into(), |s| s.to_string_lossy().into_owned());
    summary.with_file_name(format!("{stem}_seeds.csv"))
}

/// Runs every sweep point of `spec` and writes the summary CSV (and the
/// per-replication CSV when requested).
pub fn run_experiment(spec: &ExperimentSpec, out_dir: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let results: Vec<AggregateReport> = spec
        .points()
        .map(|c| run_replicated(&c, spec.n_seeds))
        .collect::<Result<_, _>>()
        .map_err(runtime)?;

    let mut summary = Table::new(&[
        "point",
        "area_m2",
        "node_count",
        "propagation",
        "tx_power_dbm",
        "long_retry_limit",
        "n_seeds",
        "dr_mean",
        "dr_std",
        "n_sent_mean",
        "n_recvd_mean",
    ]);
    summary.note(format!("experiment: {}", spec.name));
    let mut detail = Table::new(&[
        "point",
        "replica",
        "seed",
        "n_sent",
        "n_recvd",
        "delivery_ratio",
        "drop_ifq",
        "drop_no_route",
        "drop_link_break",
        "drop_misroute",
        "in_flight_at_end",
        "loss_subthreshold",
        "loss_collision",
        "loss_retry",
        "rreq_sent",
        "rrep_sent",
        "rerr_sent",
        "mean_delay_s",
    ]);
    for (i, (c, agg)) in spec.points().zip(&results).enumerate() {
        summary.row(vec![
            i.to_string(),
            num(c.region.area()),
            c.node_count.to_string(),
            c.propagation.name().to_string(),
            num(c.radio.tx_power.0),
            c.mac.long_retry_limit.to_string(),
            spec.n_seeds.to_string(),
            num(agg.delivery_ratio.mean),
            num(agg.delivery_ratio.std),
            num(agg.n_sent.mean),
            num(agg.n_recvd.mean),
        ]);
        for (j, r) in agg.reports.iter().enumerate() {
            detail.row(detail_row(i, j, r));
        }
    }
    let path = resolve_output(spec, out_dir);
    summary.write(&path)?;
    let mut written = vec![path.clone()];
    if spec.detail {
        let d = detail_path(&path);
        detail.write(&d)?;
        written.push(d);
    }
    Ok(written)
}

fn detail_row(point: usize, replica: usize, r: &MetricsReport) -> Vec<String> {
    vec![
        point.to_string(),
        replica.to_string(),
        r.seed.to_string(),
        r.n_sent.to_string(),
        r.n_recvd.to_string(),
        num(r.delivery_ratio),
        r.drops.ifq.to_string(),
        r.drops.no_route.to_string(),
        r.drops.link_break.to_string(),
        r.drops.misroute.to_string(),
        r.in_flight_at_end.to_string(),
        r.frame_losses.subthreshold.to_string(),
        r.frame_losses.collision.to_string(),
        r.frame_losses.retry.to_string(),
        r.control.rreq_sent.to_string(),
        r.control.rrep_sent.to_string(),
        r.control.rerr_sent.to_string(),
        num(r.mean_delay_s),
    ]
}
