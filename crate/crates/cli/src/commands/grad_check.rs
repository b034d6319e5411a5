use kgqa::treelstm::{random_gradient_checks, GradCheckSpec};
use serde_json::json;

use crate::args::GradCheckArgs;
use crate::config::{pick, FileConfig};
use crate::error::{Classify, ErrorClass, Failure};
use crate::output::Staging;

pub fn run(a: GradCheckArgs, file: &FileConfig) -> Result<(), Failure> {
    let defaults = GradCheckSpec::default();
    let spec = GradCheckSpec {
        instances: a.instances.unwrap_or(defaults.instances),
        tolerance: a.tolerance.unwrap_or(defaults.tolerance),
        seed: pick(a.seed, &file.seed).unwrap_or(defaults.seed),
        ..defaults
    };
    if spec.instances == 0 {
        return Err(Failure::config("--instances must be at least 1"));
    }
    let reports = random_gradient_checks(&spec).class(ErrorClass::Model)?;
    let worst = reports.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    let failed = reports.iter().filter(|r| !r.passed).count();
    if let Some(out) = a.out {
        let rows: Vec<_> = reports
            .iter()
            .enumerate()
            .map(|(i, r)| {
                json!({
                    "instance": i,
                    "max_rel_err": r.max_rel_err,
                    "coordinates": r.coordinates,
                    "worst_index": r.worst_index,
                    "passed": r.passed,
                })
            })
            .collect();
        let stage = Staging::new(&out)?;
        stage.write_json(
            "gradcheck.json",
            &json!({"tolerance": spec.tolerance, "seed": spec.seed, "max_rel_err": worst, "instances": rows}),
        )?;
        stage.commit()?;
    }
    for (i, r) in reports.iter().enumerate() {
        log::info!("instance {i}: {r}");
    }
    let verdict = if failed == 0 { "PASS" } else { "FAIL" };
    println!("max rel err {worst:.1e} {verdict} ({} instances, tolerance {:.0e})", reports.len(), spec.tolerance);
    if failed > 0 {
        return Err(Failure::new(
            ErrorClass::Check,
            format!("{failed} of {} instances exceed tolerance {:.0e}", reports.len(), spec.tolerance),
        ));
    }
    Ok(())
}
