use std::fmt::Write;
use std::path::PathBuf;

use clap::{Args, ValueEnum};

use mvdet_core::dgfa::{grad_check, GradCheckConfig, GradField};
use mvdet_core::synth::FieldKind;

use crate::output::{write_json, Outcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Field {
    Noise,
    Constant,
    Linear,
    Bilinear,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    /// Pass threshold on |analytic - fd| / (1 + |analytic|).
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Kink-free sample points.
    #[arg(long, default_value_t = 1000)]
    points: usize,
    #[arg(long, value_enum, default_value_t = Field::Noise)]
    field: Field,
    #[arg(long, default_value_t = 8)]
    channels: usize,
    #[arg(long, default_value_t = 16)]
    neighbors: usize,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: GradcheckArgs) -> anyhow::Result<Outcome> {
    let field = match args.field {
        Field::Noise => GradField::Noise,
        Field::Constant => GradField::Analytic(FieldKind::Constant),
        Field::Linear => GradField::Analytic(FieldKind::Linear),
        Field::Bilinear => GradField::Analytic(FieldKind::Bilinear),
    };
    let report = grad_check(&GradCheckConfig {
        seed: args.seed,
        eps: args.eps,
        tol: args.tol,
        points: args.points,
        field,
        channels: args.channels,
        neighbors: args.neighbors,
        ..GradCheckConfig::default()
    })?;
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }

    let mut human = format!(
        "gradient check seed {} eps {:e} tol {:e}: {} points ({} jittered, {} skipped)\n",
        report.seed, report.eps, report.tol, report.points, report.jittered, report.skipped
    );
    let _ = writeln!(human, "  {:<9} {:>8} {:>14} {:>14} {:>12}  result", "path", "entries", "max |dev|", "max rel dev", "max |grad|");
    for p in &report.paths {
        let _ = writeln!(
            human,
            "  {:<9} {:>8} {:>14.3e} {:>14.3e} {:>12.3e}  {}",
            p.path.as_str(),
            p.entries,
            p.max_abs_deviation,
            p.max_rel_deviation,
            p.max_abs_gradient,
            if p.passed { "pass" } else { "FAIL" }
        );
    }
    let _ = writeln!(human, "{}", if report.passed { "PASS" } else { "FAIL" });
    let passed = report.passed;
    Outcome::checked(report, human, passed)
}
