//! CSV and SVG bundle for one search or a pair of searches.

use std::fmt::Write as _;
use std::path::Path;

use akd_core::analysis::{
    centroid_separation, family_divergence, operator_probability, pareto_front, plot, project_2d,
    select_top_k, AnalysisError, CandidateRecord, SeparationStats,
};
use akd_core::orchestrator::Trajectory;

use crate::{write_file, CliError, ReportArgs};

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Other(format!("analysis: {e}"))
    }
}

struct Series {
    name: String,
    t: Trajectory,
}

impl Series {
    fn load(path: &Path) -> Result<Self, CliError> {
        let t = Trajectory::read(path)?;
        let name = path
            .parent()
            .and_then(|p| p.file_name())
            .or_else(|| path.file_stem())
            .map_or("run".into(), |n| n.to_string_lossy().into_owned());
        Ok(Self { name, t })
    }

    fn tail(&self, n: usize) -> &[CandidateRecord] {
        let r = &self.t.records;
        &r[r.len().saturating_sub(n)..]
    }

    fn initial(&self) -> Vec<CandidateRecord> {
        let first = self.t.records.first().map_or(0, |r| r.generation);
        self.t
            .records
            .iter()
            .filter(|r| r.generation == first)
            .cloned()
            .collect()
    }
}

fn arch_string(arch: &[usize]) -> String {
    arch.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn onehots(records: &[CandidateRecord]) -> Vec<Vec<u8>> {
    records.iter().map(|r| r.onehot.clone()).collect()
}

pub fn run(
    trajectory: &Path,
    compare: Option<&Path>,
    dir: &Path,
    opts: &ReportArgs,
    print_summary: bool,
) -> Result<(), CliError> {
    let mut series = vec![Series::load(trajectory)?];
    if let Some(p) = compare {
        let b = Series::load(p)?;
        if b.t.header.space_fingerprint != series[0].t.header.space_fingerprint {
            return Err(CliError::Config(
                "compared searches use different spaces".into(),
            ));
        }
        if b.name == series[0].name {
            series[0].name.push_str("-a");
            series.push(Series {
                name: format!("{}-b", b.name),
                t: b.t,
            });
        } else {
            series.push(b);
        }
    }
    let space = series[0].t.header.space.clone();
    let window = opts
        .window
        .unwrap_or(series[0].t.header.config.finalize.window);

    let mut fronts = Vec::new();
    let mut pareto_csv =
        String::from("series,generation,candidate_index,accuracy,latency_ms,mflops,reward,arch\n");
    for s in &series {
        let front = pareto_front(&s.t.records)?;
        for r in &front {
            let _ = writeln!(
                pareto_csv,
                "{},{},{},{},{},{},{},{}",
                s.name,
                r.generation,
                r.candidate_index,
                r.accuracy,
                r.latency_ms,
                r.mflops,
                r.reward,
                arch_string(&r.arch)
            );
        }
        fronts.push(front);
    }

    let tops: Vec<Vec<CandidateRecord>> = series
        .iter()
        .map(|s| select_top_k(&s.t.records, window, opts.top))
        .collect();
    if let Some((s, _)) = series.iter().zip(&tops).find(|(_, t)| t.is_empty()) {
        return Err(CliError::Other(format!(
            "{}: no candidates inside the latency window {}:{} ms; pass --window",
            s.name, window.0, window.1
        )));
    }
    let probs = tops
        .iter()
        .map(|t| operator_probability(t, &space))
        .collect::<Result<Vec<_>, _>>()?;
    let mut opprob_csv = String::from("bit,label");
    for s in &series {
        let _ = write!(opprob_csv, ",probability_{0},std_{0}", s.name);
    }
    opprob_csv.push('\n');
    for (b, label) in probs[0].labels.iter().enumerate() {
        let _ = write!(opprob_csv, "{b},{label}");
        for p in &probs {
            let _ = write!(opprob_csv, ",{},{}", p.probability[b], p.std[b]);
        }
        opprob_csv.push('\n');
    }

    // two searches: their top-k against each other; one search: top-k against its first generation
    let (div, populations, pop_names) = match series.get(1) {
        Some(b) => (
            family_divergence(&tops[0], &tops[1], &space)?,
            (
                series[0].tail(opts.tail).to_vec(),
                b.tail(opts.tail).to_vec(),
            ),
            [series[0].name.clone(), b.name.clone()],
        ),
        None => {
            let init = series[0].initial();
            (
                family_divergence(&tops[0], &init, &space)?,
                (init, series[0].tail(opts.tail).to_vec()),
                ["initial".to_string(), "final".to_string()],
            )
        }
    };
    let mut div_csv = String::from("rank,bit,label,difference\n");
    for (rank, &b) in div.order.iter().enumerate() {
        let _ = writeln!(
            div_csv,
            "{},{b},{},{}",
            rank + 1,
            div.labels[b],
            div.difference[b]
        );
    }

    let sep: Option<SeparationStats> =
        centroid_separation(&onehots(&populations.0), &onehots(&populations.1)).ok();
    let mut stats_csv = String::from("series,metric,value\n");
    for ((s, front), top) in series.iter().zip(&fronts).zip(&tops) {
        let r = &s.t.records;
        let best = r.iter().map(|r| r.reward).fold(f64::NEG_INFINITY, f64::max);
        let generations = r.last().map_or(0, |x| x.generation + 1);
        for (k, v) in [
            ("records", r.len() as f64),
            ("generations", generations as f64),
            ("pareto_size", front.len() as f64),
            ("best_reward", best),
            ("top_k", top.len() as f64),
        ] {
            let _ = writeln!(stats_csv, "{},{k},{v}", s.name);
        }
    }
    let pair = format!("{}|{}", pop_names[0], pop_names[1]);
    if let Some(sep) = &sep {
        for (k, v) in [
            ("separation_inter", sep.inter),
            ("separation_intra_a", sep.intra_a),
            ("separation_intra_b", sep.intra_b),
            ("separation_ratio", sep.ratio),
        ] {
            let _ = writeln!(stats_csv, "{pair},{k},{v}");
        }
    }

    write_file(&dir.join("pareto.csv"), &pareto_csv)?;
    write_file(&dir.join("opprob.csv"), &opprob_csv)?;
    write_file(&dir.join("divergence.csv"), &div_csv)?;
    write_file(&dir.join("stats.csv"), &stats_csv)?;

    let plotted: Vec<(String, Vec<CandidateRecord>, Vec<CandidateRecord>)> = series
        .iter()
        .zip(&fronts)
        .map(|(s, f)| (s.name.clone(), s.t.records.clone(), f.clone()))
        .collect();
    write_file(&dir.join("pareto.svg"), &plot::pareto_svg(&plotted))?;
    write_file(&dir.join("divergence.svg"), &plot::divergence_svg(&div, 20))?;

    let rows: Vec<Vec<f64>> = populations
        .0
        .iter()
        .chain(&populations.1)
        .map(|r| r.onehot.iter().map(|&b| f64::from(b)).collect())
        .collect();
    let group: Vec<usize> = (0..rows.len())
        .map(|i| usize::from(i >= populations.0.len()))
        .collect();
    match project_2d(&rows) {
        Ok(p) => write_file(
            &dir.join("projection.svg"),
            &plot::projection_svg(
                "One-hot projection",
                &p.points,
                &group,
                &pop_names,
                p.explained,
            ),
        )?,
        Err(e) => eprintln!("akd: projection skipped: {e}"),
    }

    if print_summary {
        for ((s, front), top) in series.iter().zip(&fronts).zip(&tops) {
            println!(
                "{}: {} records, Pareto front {}, top-{} in {}:{} ms",
                s.name,
                s.t.records.len(),
                front.len(),
                top.len(),
                window.0,
                window.1
            );
        }
        if let Some(sep) = sep {
            println!(
                "separation {pair}: inter {:.4}, intra {:.4}/{:.4}, ratio {:.4}",
                sep.inter, sep.intra_a, sep.intra_b, sep.ratio
            );
        }
        for (label, d) in div.sorted().iter().take(5) {
            println!("  {label}: {d:+.3}");
        }
    }
    println!("report written to {}", dir.display());
    Ok(())
}
