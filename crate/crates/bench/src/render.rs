//! Markdown and CSV renderings of an [`ExperimentReport`].
//!
//! Reals carry 4 significant digits, p-values 3 in scientific notation.
//! Accuracies are percentages in markdown and fractions in CSV.

use std::fmt::Write;

use harlab::classifiers::ModelFamily;
use harlab::format::{sci, sig};
use harlab::stats::TestMethod;

use crate::report::{ExperimentReport, PairMatrix, SpecSource};

fn pct(v: f64) -> String {
    sig(100.0 * v, 4)
}

fn name(f: ModelFamily) -> &'static str {
    f.display_name()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn source_name(s: SpecSource) -> &'static str {
    match s {
        SpecSource::Config => "config",
        SpecSource::GridSearch => "grid-search",
    }
}

fn pair_table(out: &mut String, m: &PairMatrix) {
    out.push_str("| Model |");
    for c in &m.models {
        let _ = write!(out, " {} (t) | {} (p) |", name(*c), name(*c));
    }
    out.push_str("\n|---|");
    out.push_str(&"---|---|".repeat(m.models.len()));
    out.push('\n');
    for r in &m.models {
        let _ = write!(out, "| {} |", name(*r));
        for c in &m.models {
            match m.cell(*r, *c) {
                Some(cell) => {
                    let mark = if cell.reject_null { "*" } else { "" };
                    let _ = write!(out, " {} | {}{} |", sig(cell.t_value, 4), sci(cell.p_value, 3), mark);
                }
                None => out.push_str(" | |"),
            }
        }
        out.push('\n');
    }
    let _ = writeln!(out, "\n`*` rejects equal means at alpha = {}.", m.alpha);
}

pub fn markdown(r: &ExperimentReport) -> String {
    let mut out = String::from("# HAR benchmark report\n\n");
    let p = &r.provenance;
    let _ = writeln!(
        out,
        "Master seed `{}`; {} train and {} test rows with {} features.\n",
        p.master_seed, p.dataset.train_rows, p.dataset.test_rows, p.dataset.features
    );

    if let Some(e) = &r.explore {
        out.push_str("## Class distribution\n\n| Class | Activity | Train | Test |\n|---|---|---|---|\n");
        for c in &e.class_counts {
            let _ = writeln!(out, "| {} | {} | {} | {} |", c.class, c.name, c.train, c.test);
        }
        let _ = writeln!(out, "| | total | {} | {} |\n", e.train_total, e.test_total);
        let _ = writeln!(
            out,
            "## Static and dynamic activities\n\n`{}` on the training split.\n\n| Group | n | Mean | Std | Min | Max |\n|---|---|---|---|---|---|",
            e.magnitude_feature
        );
        for g in &e.magnitude {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                g.group,
                g.n,
                sig(g.mean, 4),
                sig(g.std, 4),
                sig(g.min, 4),
                sig(g.max, 4)
            );
        }
        out.push('\n');
    }

    if let Some(grids) = &r.grid_search {
        out.push_str("## Grid search\n\n| Model | Combinations | Folds | Best CV accuracy (%) | Std (%) | Failed | Table |\n|---|---|---|---|---|---|---|\n");
        for g in grids {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | `{}` |",
                name(g.family),
                g.combinations,
                g.folds,
                pct(g.best_mean_accuracy),
                pct(g.best_std_accuracy),
                g.failed_combinations,
                g.table_csv
            );
        }
        out.push('\n');
    }

    out.push_str("## Parameters\n\n| Model | Source | Parameters |\n|---|---|---|\n");
    for b in &r.best_specs {
        let _ = writeln!(out, "| {} | {} | {} |", name(b.family), source_name(b.source), b.description);
    }
    out.push('\n');

    if let Some(points) = &r.feature_sweep {
        let families: Vec<ModelFamily> = ModelFamily::ALL
            .into_iter()
            .filter(|f| points.iter().any(|p| p.family == *f))
            .collect();
        out.push_str("## Feature sweep\n\nTest accuracy (%) on the top-k ANOVA features.\n\n| k |");
        for f in &families {
            let _ = write!(out, " {} |", name(*f));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(families.len()));
        out.push('\n');
        let mut ks: Vec<(usize, usize)> = points.iter().map(|p| (p.requested_k, p.k)).collect();
        ks.dedup();
        for (requested, k) in ks {
            if requested == k {
                let _ = write!(out, "| {k} |");
            } else {
                let _ = write!(out, "| {requested} ({k}) |");
            }
            for f in &families {
                let acc = points
                    .iter()
                    .find(|p| p.requested_k == requested && p.family == *f)
                    .map(|p| pct(p.accuracy))
                    .unwrap_or_default();
                let _ = write!(out, " {acc} |");
            }
            out.push('\n');
        }
        out.push('\n');
    }

    if let Some(e) = &r.evaluation {
        let _ = writeln!(
            out,
            "## Accuracy\n\nMean over {} stratified {}% test subsamples, with the full test split alongside.\n\n| Model | Mean (%) | Std (%) | Full test (%) |\n|---|---|---|---|",
            e.table_seeds.len(),
            sig(100.0 * e.subsample_fraction, 4)
        );
        for m in &e.models {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} |",
                name(m.family),
                pct(m.mean_accuracy),
                pct(m.std_accuracy),
                pct(m.full_test_accuracy)
            );
        }
        out.push('\n');
        if e.models.iter().any(|m| m.per_class.is_some()) {
            out.push_str("## Per-class scores\n\nAveraged over the same subsamples.\n\n");
            for m in &e.models {
                let Some(rows) = &m.per_class else { continue };
                let _ = writeln!(
                    out,
                    "### {}\n\n| Class | Precision | Recall | F1-score |\n|---|---|---|---|",
                    name(m.family)
                );
                for c in rows {
                    let flag = if c.undefined { "*" } else { "" };
                    let _ = writeln!(
                        out,
                        "| {}{} | {} | {} | {} |",
                        c.class,
                        flag,
                        sig(c.precision, 4),
                        sig(c.recall, 4),
                        sig(c.f1, 4)
                    );
                }
                out.push('\n');
            }
        }
    }

    for m in [&r.welch, &r.cv52].into_iter().flatten() {
        match m.method {
            TestMethod::Welch => {
                let n = r.evaluation.as_ref().map_or(0, |e| e.welch_seeds.len());
                let _ = writeln!(out, "## Welch's t-test\n\nAccuracies on {n} stratified test subsamples.\n");
            }
            TestMethod::Cv52 => {
                out.push_str("## 5x2cv paired t-test\n\nFive stratified 2-fold splits of train and test together; the statistic depends on argument order.\n\n");
            }
        }
        pair_table(&mut out, m);
        out.push('\n');
    }

    if let Some(points) = &r.hidden_sweep {
        out.push_str("## Hidden-layer sweep\n\n| Depth | Hidden sizes | Accuracy (%) | Epochs | Converged |\n|---|---|---|---|---|\n");
        for h in points {
            let _ = writeln!(
                out,
                "| {} | {:?} | {} | {} | {} |",
                h.depth,
                h.hidden_sizes,
                pct(h.accuracy),
                h.epochs,
                h.converged
            );
        }
        out.push('\n');
    }

    out.push_str("## Provenance\n\n| Stage | Seed |\n|---|---|\n");
    for s in &p.stages {
        let _ = writeln!(out, "| {} | {} |", s.stage, s.seed);
    }
    let _ = writeln!(
        out,
        "\n{} {} on {}/{}; config sha256 `{}`; data sha256 `{}`.",
        p.tool, p.tool_version, p.os, p.arch, p.config_sha256, p.dataset.sha256
    );
    out
}

fn pair_csv(m: &PairMatrix) -> String {
    let mut out = String::from("row,column,t_value,p_value,df,reject_null,degenerate\n");
    for c in &m.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.row.short_name(),
            c.column.short_name(),
            sig(c.t_value, 4),
            sci(c.p_value, 3),
            sig(c.df, 4),
            c.reject_null,
            c.degenerate
        );
    }
    out
}

/// One CSV per table present in the report, as (file name, contents).
pub fn csv_tables(r: &ExperimentReport) -> Vec<(String, String)> {
    let mut tables = Vec::new();
    if let Some(e) = &r.explore {
        let mut t = String::from("class,activity,train,test\n");
        for c in &e.class_counts {
            let _ = writeln!(t, "{},{},{},{}", c.class, c.name, c.train, c.test);
        }
        tables.push(("class_counts.csv".into(), t));
        let mut t = String::from("group,n,mean,std,min,max\n");
        for g in &e.magnitude {
            let _ = writeln!(
                t,
                "{},{},{},{},{},{}",
                g.group,
                g.n,
                sig(g.mean, 4),
                sig(g.std, 4),
                sig(g.min, 4),
                sig(g.max, 4)
            );
        }
        tables.push(("magnitude.csv".into(), t));
    }
    if let Some(grids) = &r.grid_search {
        let mut t = String::from("model,combinations,folds,best_mean_accuracy,best_std_accuracy,failed,table\n");
        for g in grids {
            let _ = writeln!(
                t,
                "{},{},{},{},{},{},{}",
                g.family.short_name(),
                g.combinations,
                g.folds,
                sig(g.best_mean_accuracy, 4),
                sig(g.best_std_accuracy, 4),
                g.failed_combinations,
                g.table_csv
            );
        }
        tables.push(("grid_search.csv".into(), t));
    }
    let mut t = String::from("model,source,parameters\n");
    for b in &r.best_specs {
        let _ = writeln!(
            t,
            "{},{},{}",
            b.family.short_name(),
            source_name(b.source),
            csv_field(&b.description)
        );
    }
    tables.push(("parameters.csv".into(), t));
    if let Some(points) = &r.feature_sweep {
        let mut t = String::from("requested_k,k,model,accuracy\n");
        for p in points {
            let _ = writeln!(t, "{},{},{},{}", p.requested_k, p.k, p.family.short_name(), sig(p.accuracy, 4));
        }
        tables.push(("feature_sweep.csv".into(), t));
    }
    if let Some(e) = &r.evaluation {
        let mut t = String::from("model,mean_accuracy,std_accuracy,full_test_accuracy\n");
        for m in &e.models {
            let _ = writeln!(
                t,
                "{},{},{},{}",
                m.family.short_name(),
                sig(m.mean_accuracy, 4),
                sig(m.std_accuracy, 4),
                sig(m.full_test_accuracy, 4)
            );
        }
        tables.push(("accuracy.csv".into(), t));
        let mut t = String::from("model,subsample,table_accuracy,welch_accuracy\n");
        for m in &e.models {
            let n = m.subsample_accuracies.len().max(m.welch_scores.len());
            for j in 0..n {
                let cell = |v: Option<&f64>| v.map(|v| sig(*v, 4)).unwrap_or_default();
                let _ = writeln!(
                    t,
                    "{},{},{},{}",
                    m.family.short_name(),
                    j,
                    cell(m.subsample_accuracies.get(j)),
                    cell(m.welch_scores.get(j))
                );
            }
        }
        tables.push(("subsample_accuracy.csv".into(), t));
        if e.models.iter().any(|m| m.per_class.is_some()) {
            let mut t = String::from("model,class,precision,recall,f1,support,undefined\n");
            for m in &e.models {
                for c in m.per_class.iter().flatten() {
                    let _ = writeln!(
                        t,
                        "{},{},{},{},{},{},{}",
                        m.family.short_name(),
                        c.class,
                        sig(c.precision, 4),
                        sig(c.recall, 4),
                        sig(c.f1, 4),
                        c.support,
                        c.undefined
                    );
                }
            }
            tables.push(("per_class.csv".into(), t));
        }
    }
    if let Some(m) = &r.welch {
        tables.push(("welch.csv".into(), pair_csv(m)));
    }
    if let Some(m) = &r.cv52 {
        tables.push(("cv52.csv".into(), pair_csv(m)));
    }
    if let Some(points) = &r.hidden_sweep {
        let mut t = String::from("depth,hidden_sizes,accuracy,epochs,converged\n");
        for h in points {
            let sizes: Vec<String> = h.hidden_sizes.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(
                t,
                "{},{},{},{},{}",
                h.depth,
                sizes.join(" "),
                sig(h.accuracy, 4),
                h.epochs,
                h.converged
            );
        }
        tables.push(("hidden_sweep.csv".into(), t));
    }
    tables
}
