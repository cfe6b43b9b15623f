//! The verification suite: named checks with residuals, thresholds, and
//! wall times. The pipeline runs stage by stage so that a failure (say, a
//! starved tightness tolerance that cannot carry the marginals) surfaces as
//! a failed check with a note instead of aborting the report. Checks
//! depending on a failed stage are reported as skipped failures, keeping
//! the overall verdict the plain conjunction of all checks.

use std::time::Instant;

use serde::Serialize;

use monge_core::cost::{certify_metric_axioms, CostTable};
use monge_core::pipeline::model_delta;
use monge_core::rays::{calibrated_edges, decompose, ray_audits};
use monge_core::selector::monotonicity_check;
use monge_core::solver::{certify_optimality, solve_primary, tight_set};
use monge_core::{Error, Result};

use crate::config::RunConfig;
use crate::output::OutDir;

const FEASIBILITY_SAMPLES: usize = 20_000;
const METRIC_TRIPLES: usize = 20_000;
const MONOTONICITY_SAMPLES: usize = 10_000;

#[derive(Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub residual: f64,
    pub threshold: f64,
    pub wall_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    fn new(name: &'static str, pass: bool, residual: f64, threshold: f64, wall_ms: f64) -> Self {
        Check { name, pass, residual, threshold, wall_ms, note: None }
    }

    fn with_note(mut self, note: String) -> Self {
        self.note = Some(note);
        self
    }

    fn error(name: &'static str, wall_ms: f64, err: &Error) -> Self {
        Check::new(name, false, 0.0, 0.0, wall_ms).with_note(err.to_string())
    }

    fn skipped(name: &'static str, upstream: &'static str) -> Self {
        Check::new(name, false, 0.0, 0.0, 0.0)
            .with_note(format!("skipped: {upstream} did not pass"))
    }
}

#[derive(Serialize)]
pub struct VerificationReport {
    pub overall: bool,
    pub checks: Vec<Check>,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let value = f();
    (value, start.elapsed().as_secs_f64() * 1e3)
}

/// Runs every check, writes `verify.json`, prints one line per check, and
/// returns whether all of them passed.
pub fn cmd_verify(cfg: &RunConfig, out: &OutDir) -> Result<bool> {
    let manifold = cfg.build_manifold()?;
    let model = cfg.build_model(&manifold)?;
    let marginals = cfg.build_marginals(&manifold)?;
    let tol = cfg.tolerances()?;
    let mut checks: Vec<Check> = Vec::new();

    // Stage 1: edge costs must exist with positive weights.
    let (costs_res, ms) = timed(|| model.edge_costs(&manifold, tol.time));
    let costs = match costs_res {
        Ok(costs) => {
            let min_w = costs.min_weight();
            checks.push(Check::new("edge-costs-supercritical", min_w > 0.0, min_w, 0.0, ms));
            Some(costs)
        }
        Err(e) => {
            checks.push(Check::error("edge-costs-supercritical", ms, &e));
            None
        }
    };

    let mut primary = None;
    if let Some(costs) = &costs {
        // Stage 2: primary solve, cost rows, optimality certificate.
        let (solved, ms) = timed(|| {
            let (plan, potential) = solve_primary(&manifold, costs, &marginals)?;
            let table = CostTable::for_sources(&manifold, costs, &marginals.support0())?;
            let cert = certify_optimality(
                &plan,
                &potential,
                &table,
                &marginals,
                FEASIBILITY_SAMPLES,
                cfg.seed,
            )?;
            Ok::<_, Error>((plan, potential, table, cert))
        });
        match solved {
            Ok((plan, potential, table, cert)) => {
                let gap_bound = 1e-8 * (1.0 + cert.primal_value.abs());
                checks.push(Check::new(
                    "primary-duality-gap",
                    cert.duality_gap <= gap_bound,
                    cert.duality_gap,
                    gap_bound,
                    ms,
                ));
                checks.push(Check::new(
                    "dual-feasibility",
                    cert.max_feasibility_violation <= 1e-9,
                    cert.max_feasibility_violation,
                    1e-9,
                    0.0,
                ));
                checks.push(Check::new(
                    "complementary-slackness",
                    cert.max_slackness_residual <= 1e-9,
                    cert.max_slackness_residual,
                    1e-9,
                    0.0,
                ));
                checks.push(Check::new(
                    "marginal-residual",
                    cert.max_marginal_residual <= 1e-9,
                    cert.max_marginal_residual,
                    1e-9,
                    0.0,
                ));

                let (axioms, ms) = timed(|| certify_metric_axioms(&table, METRIC_TRIPLES, cfg.seed));
                checks.push(Check::new(
                    "metric-triangle",
                    axioms.max_triangle_violation <= 1e-9,
                    axioms.max_triangle_violation,
                    1e-9,
                    ms,
                ));
                checks.push(Check::new(
                    "metric-diagonal",
                    axioms.max_diagonal_abs == 0.0,
                    axioms.max_diagonal_abs,
                    0.0,
                    0.0,
                ));
                checks.push(Check::new(
                    "metric-asymmetric-positivity",
                    axioms.min_pair_sum > 0.0,
                    axioms.min_pair_sum,
                    0.0,
                    0.0,
                ));
                primary = Some((plan, potential, table));
            }
            Err(e) => {
                checks.push(Check::error("primary-duality-gap", ms, &e));
                for name in [
                    "dual-feasibility",
                    "complementary-slackness",
                    "marginal-residual",
                    "metric-triangle",
                    "metric-diagonal",
                    "metric-asymmetric-positivity",
                ] {
                    checks.push(Check::skipped(name, "primary-duality-gap"));
                }
            }
        }
    } else {
        for name in [
            "primary-duality-gap",
            "dual-feasibility",
            "complementary-slackness",
            "marginal-residual",
            "metric-triangle",
            "metric-diagonal",
            "metric-asymmetric-positivity",
        ] {
            checks.push(Check::skipped(name, "edge-costs-supercritical"));
        }
    }

    // Stage 3: the tight restriction and the selected vertex plan.
    let mut vertex_plan = None;
    if let (Some(costs), Some((plan, potential, table))) = (&costs, &primary) {
        let tight_tol = tol.tight_for(costs);
        let (selected, ms) = timed(|| {
            let pairs = tight_set(potential, table, &marginals, tight_tol)?;
            let sel = monge_core::selector::solve_secondary(&pairs, table, &marginals)?;
            Ok::<_, Error>((pairs, sel))
        });
        match selected {
            Ok((pairs, sel)) => {
                checks.push(Check::new(
                    "tight-restriction-feasible",
                    true,
                    pairs.len() as f64,
                    0.0,
                    ms,
                ));
                let drift_bound = sel.support.len().max(1) as f64 * tight_tol;
                let drift = (sel.plan.cost - plan.cost).abs();
                checks.push(Check::new(
                    "secondary-preserves-primary",
                    drift <= drift_bound,
                    drift,
                    drift_bound,
                    0.0,
                ));
                let bound = (marginals.support0().len() + marginals.support1().len() - 1) as f64;
                checks.push(Check::new(
                    "vertex-support-bound",
                    sel.support.len() as f64 <= bound,
                    sel.support.len() as f64,
                    bound,
                    0.0,
                ));
                let (mono, ms) = timed(|| {
                    monotonicity_check(
                        &sel.plan,
                        potential,
                        table,
                        &pairs,
                        MONOTONICITY_SAMPLES,
                        cfg.seed,
                    )
                });
                match mono {
                    Ok(m) => {
                        let mut check = Check::new(
                            "swap-monotonicity",
                            m.negative_increments == 0,
                            if m.min_swap_increment.is_finite() { m.min_swap_increment } else { 0.0 },
                            -1e-9,
                            ms,
                        );
                        if m.applicable_quadruples == 0 {
                            check = check.with_note("no applicable quadruples sampled".into());
                        }
                        checks.push(check);
                    }
                    Err(e) => checks.push(Check::error("swap-monotonicity", ms, &e)),
                }
                vertex_plan = Some(sel.plan);
            }
            Err(e) => {
                checks.push(Check::error("tight-restriction-feasible", ms, &e));
                for name in
                    ["secondary-preserves-primary", "vertex-support-bound", "swap-monotonicity"]
                {
                    checks.push(Check::skipped(name, "tight-restriction-feasible"));
                }
            }
        }
    } else {
        for name in [
            "tight-restriction-feasible",
            "secondary-preserves-primary",
            "vertex-support-bound",
            "swap-monotonicity",
        ] {
            checks.push(Check::skipped(name, "primary-duality-gap"));
        }
    }

    // Stage 4: ray structure over the calibrated edges.
    if let (Some(costs), Some((plan, potential, _))) = (&costs, &primary) {
        let cal_tol = tol.cal_for(costs);
        let (rays, ms) = timed(|| {
            let graph = calibrated_edges(&manifold, costs, potential, cal_tol)?;
            let dec = decompose(&graph, tol.epsilon)?;
            Ok::<_, Error>((graph, dec))
        });
        match rays {
            Ok((graph, dec)) => {
                checks.push(Check::new(
                    "calibration-acyclic",
                    true,
                    graph.edges().len() as f64,
                    0.0,
                    ms,
                ));
                let delta = model_delta(&model, manifold.node_count());
                // Monotone chain order is a property of the selected vertex
                // plan; an arbitrary optimal plan may legitimately cross.
                let audit_plan = vertex_plan.as_ref().unwrap_or(plan);
                let (audit, ms) =
                    timed(|| ray_audits(&graph, &dec, audit_plan, &marginals, delta));
                if vertex_plan.is_some() {
                    checks.push(Check::new(
                        "chain-order",
                        audit.order_violations == 0,
                        audit.order_violations as f64,
                        0.0,
                        ms,
                    ));
                } else {
                    checks.push(Check::skipped("chain-order", "tight-restriction-feasible"));
                }
                let mut check = Check::new(
                    "speed-floor",
                    audit.speed_floor_violations == 0,
                    if audit.min_speed.is_finite() { audit.min_speed } else { 0.0 },
                    delta - 1e-9,
                    0.0,
                );
                if audit.calibrated_edges == 0 {
                    check = check.with_note("no calibrated edges".into());
                }
                checks.push(check);
            }
            Err(e) => {
                checks.push(Check::error("calibration-acyclic", ms, &e));
                for name in ["chain-order", "speed-floor"] {
                    checks.push(Check::skipped(name, "calibration-acyclic"));
                }
            }
        }
    } else {
        for name in ["calibration-acyclic", "chain-order", "speed-floor"] {
            checks.push(Check::skipped(name, "primary-duality-gap"));
        }
    }

    let overall = checks.iter().all(|c| c.pass);
    for c in &checks {
        println!(
            "[{}] {:<32} residual {:e}  threshold {:e}  ({:.1} ms){}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.residual,
            c.threshold,
            c.wall_ms,
            c.note.as_deref().map(|n| format!("  [{n}]")).unwrap_or_default()
        );
    }
    let passed = checks.iter().filter(|c| c.pass).count();
    println!("verification: {passed}/{} checks passed", checks.len());
    out.json("verify.json", VerificationReport { overall, checks })?;
    Ok(overall)
}
