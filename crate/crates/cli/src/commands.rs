//! The artifact-producing commands. Each one loads the shared config,
//! drives the core pipeline, and writes CSV/JSON outputs through [`OutDir`].

use serde::Serialize;

use monge_core::cost::critical::{recheck_high, recheck_low};
use monge_core::cost::{CostModel, CostTable};
use monge_core::geometry::DiscreteManifold;
use monge_core::oracle::{brute_lexicographic, compare, synthetic_metric_instance};
use monge_core::pipeline::{run_full, solve_dense, FullRun};
use monge_core::{Error, Result};

use crate::config::RunConfig;
use crate::output::OutDir;

/// Dual-feasibility sample count used by `solve`, `rays`, and `export`.
pub const FEASIBILITY_SAMPLES: usize = 20_000;

/// Which rows of the cost closure `cost` writes.
#[derive(Clone)]
pub enum SourceSpan {
    /// The support of the first marginal.
    Support,
    /// Every node.
    All,
    /// An explicit node list.
    List(Vec<usize>),
}

impl std::str::FromStr for SourceSpan {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "support" => Ok(SourceSpan::Support),
            "all" => Ok(SourceSpan::All),
            list => list
                .split(',')
                .map(|t| t.trim().parse::<usize>().map_err(|e| format!("source {t:?}: {e}")))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(SourceSpan::List),
        }
    }
}

pub fn full_run(cfg: &RunConfig) -> Result<(DiscreteManifold, CostModel, FullRun)> {
    let manifold = cfg.build_manifold()?;
    let model = cfg.build_model(&manifold)?;
    let marginals = cfg.build_marginals(&manifold)?;
    let tol = cfg.tolerances()?;
    let run = run_full(&manifold, &model, marginals, &tol, FEASIBILITY_SAMPLES, cfg.seed)?;
    Ok((manifold, model, run))
}

pub fn cmd_cost(cfg: &RunConfig, out: &OutDir, critical: bool, span: &SourceSpan) -> Result<()> {
    let manifold = cfg.build_manifold()?;
    let model = cfg.build_model(&manifold)?;
    let tol = cfg.tolerances()?;
    let costs = model.edge_costs(&manifold, tol.time)?;

    let edge_rows = costs.costs.iter().map(|c| {
        let e = manifold.edge(c.edge);
        format!(
            "{},{},{},{:e},{:e},{:e},{:e},{:e}",
            c.edge, e.source, e.target, e.displacement.x, e.displacement.y, c.weight, c.time,
            c.energy_residual
        )
    });
    out.csv(
        "edge_costs.csv",
        "edge,source,target,dx,dy,weight,time,energy_residual",
        edge_rows,
    )?;

    let sources: Vec<usize> = match span {
        SourceSpan::Support => cfg.build_marginals(&manifold)?.support0(),
        SourceSpan::All => (0..manifold.node_count()).collect(),
        SourceSpan::List(list) => {
            if let Some(&bad) = list.iter().find(|&&x| x >= manifold.node_count()) {
                return Err(Error::InvalidConfig(format!(
                    "source {bad} out of range for {} nodes",
                    manifold.node_count()
                )));
            }
            list.clone()
        }
    };
    let table = CostTable::for_sources(&manifold, &costs, &sources)?;
    let mut rows = Vec::with_capacity(table.source_count() * manifold.node_count());
    for x in table.sources() {
        let row = table.row(x).expect("requested row is present");
        for (y, &c) in row.values.iter().enumerate() {
            rows.push(format!("{x},{y},{c:e}"));
        }
    }
    out.csv("cost_rows.csv", "source,target,cost", rows)?;

    if critical {
        let CostModel::Lagrangian { lagrangian } = &model else {
            return Err(Error::InvalidConfig(
                "--critical needs a running-cost model (quadratic or quad-norm)".into(),
            ));
        };
        let base = lagrangian.with_shift(0.0);
        let bracket = cfg.critical_bracket();
        let cv = monge_core::cost::critical_value(&manifold, &base, bracket, tol.critical)?;

        #[derive(Serialize)]
        struct CriticalDoc<'a> {
            bracket: (f64, f64),
            tol: f64,
            record: &'a monge_core::cost::CriticalValue,
            low_certificate_rechecked: bool,
            high_certificate_rechecked: bool,
        }
        out.json(
            "critical.json",
            CriticalDoc {
                bracket,
                tol: tol.critical,
                low_certificate_rechecked: recheck_low(
                    &manifold,
                    &base,
                    cv.k_lo,
                    &cv.low_certificate,
                ),
                high_certificate_rechecked: recheck_high(
                    &manifold,
                    &base,
                    cv.k_hi,
                    &cv.high_certificate,
                ),
                record: &cv,
            },
        )?;
        println!(
            "critical shift in [{:e}, {:e}], estimate {:e}",
            cv.k_lo, cv.k_hi, cv.estimate
        );
    }
    Ok(())
}

/// Headline numbers of a finished run.
#[derive(Serialize)]
struct Metrics {
    transport_cost: f64,
    dual_value: f64,
    duality_gap: f64,
    relative_gap: f64,
    max_feasibility_violation: f64,
    max_slackness_residual: f64,
    max_marginal_residual: f64,
    secondary_objective: f64,
    support_size: usize,
    multivalued_count: usize,
    multivalued_mass: f64,
    tie_count: usize,
    tight_pairs: usize,
    tight_tol: f64,
    calibrated_edges: usize,
    speed_floor: f64,
}

impl Metrics {
    fn of(run: &FullRun) -> Metrics {
        Metrics {
            transport_cost: run.certificate.primal_value,
            dual_value: run.certificate.dual_value,
            duality_gap: run.certificate.duality_gap,
            relative_gap: run.certificate.relative_gap,
            max_feasibility_violation: run.certificate.max_feasibility_violation,
            max_slackness_residual: run.certificate.max_slackness_residual,
            max_marginal_residual: run.certificate.max_marginal_residual,
            secondary_objective: run.selection.secondary_objective,
            support_size: run.selection.support.len(),
            multivalued_count: run.selection.lambda.len(),
            multivalued_mass: run.selection.lambda_mass,
            tie_count: run.selection.degenerate_pivots,
            tight_pairs: run.tight_pairs.len(),
            tight_tol: run.tight_tol,
            calibrated_edges: run.ray_audit.calibrated_edges,
            speed_floor: run.delta,
        }
    }
}

pub fn cmd_solve(cfg: &RunConfig, out: &OutDir) -> Result<()> {
    let (_, _, run) = full_run(cfg)?;

    #[derive(Serialize)]
    struct PlanDoc<'a> {
        transport_cost: f64,
        secondary_objective: f64,
        anchor: usize,
        primary_plan: &'a monge_core::solver::TransportPlan,
        selected_plan: &'a monge_core::solver::TransportPlan,
        map: &'a [(usize, usize)],
        multivalued_sources: &'a [usize],
        multivalued_mass: f64,
        tie_count: usize,
        certificate: &'a monge_core::solver::OptimalityCertificate,
    }
    out.json(
        "plan.json",
        PlanDoc {
            transport_cost: run.certificate.primal_value,
            secondary_objective: run.selection.secondary_objective,
            anchor: run.potential.anchor,
            primary_plan: &run.primary_plan,
            selected_plan: &run.selection.plan,
            map: &run.selection.map,
            multivalued_sources: &run.selection.lambda,
            multivalued_mass: run.selection.lambda_mass,
            tie_count: run.selection.degenerate_pivots,
            certificate: &run.certificate,
        },
    )?;

    out.csv(
        "potential.csv",
        "node,potential",
        run.potential.u.iter().enumerate().map(|(v, &u)| format!("{v},{u:e}")),
    )?;
    out.csv(
        "map.csv",
        "source,target",
        run.selection.map.iter().map(|&(x, y)| format!("{x},{y}")),
    )?;
    out.json("metrics.json", Metrics::of(&run))?;

    println!(
        "transport cost {:e}, secondary objective {:e}, support {}, multivalued mass {:e}",
        run.certificate.primal_value,
        run.selection.secondary_objective,
        run.selection.support.len(),
        run.selection.lambda_mass
    );
    Ok(())
}

pub fn cmd_rays(cfg: &RunConfig, out: &OutDir) -> Result<()> {
    let (manifold, _, run) = full_run(cfg)?;
    let n = manifold.node_count();
    let dec = &run.decomposition;

    let mut in_transport = vec![false; n];
    let mut interior = vec![false; n];
    let mut interior_eps = vec![false; n];
    let mut endpoint = vec![false; n];
    for &v in &dec.transport_set {
        in_transport[v] = true;
    }
    for &v in &dec.interior {
        interior[v] = true;
    }
    for &v in &dec.interior_eps {
        interior_eps[v] = true;
    }
    for &v in &dec.ends {
        endpoint[v] = true;
    }
    out.csv(
        "rays.csv",
        "node,alpha,beta,in_transport,interior,interior_eps,endpoint",
        (0..n).map(|v| {
            format!(
                "{v},{:e},{:e},{},{},{},{}",
                dec.alpha[v],
                dec.beta[v],
                u8::from(in_transport[v]),
                u8::from(interior[v]),
                u8::from(interior_eps[v]),
                u8::from(endpoint[v])
            )
        }),
    )?;

    out.csv(
        "calibrated.csv",
        "edge,source,target,time,gain",
        run.calibrated.edges().iter().map(|e| {
            format!("{},{},{},{:e},{:e}", e.edge, e.source, e.target, e.time, e.gain)
        }),
    )?;

    #[derive(Serialize)]
    struct ChainsDoc<'a> {
        epsilon: f64,
        speed_floor: f64,
        cal_tol: f64,
        transport_nodes: usize,
        interior_nodes: usize,
        interior_eps_nodes: usize,
        end_nodes: usize,
        chain_count: usize,
        chains: &'a [Vec<usize>],
        audit: &'a monge_core::rays::RayAuditReport,
    }
    out.json(
        "chains.json",
        ChainsDoc {
            epsilon: dec.epsilon,
            speed_floor: run.delta,
            cal_tol: run.cal_tol,
            transport_nodes: dec.transport_set.len(),
            interior_nodes: dec.interior.len(),
            interior_eps_nodes: dec.interior_eps.len(),
            end_nodes: dec.ends.len(),
            chain_count: dec.chains.len(),
            chains: &dec.chains,
            audit: &run.ray_audit,
        },
    )?;

    println!(
        "{} calibrated edges, {} chains, {} transport nodes ({} interior, {} ends)",
        run.ray_audit.calibrated_edges,
        dec.chains.len(),
        dec.transport_set.len(),
        dec.interior.len(),
        dec.ends.len()
    );
    Ok(())
}

pub fn cmd_oracle(cfg: &RunConfig, out: &OutDir, seeds: u64) -> Result<()> {
    if seeds == 0 {
        return Err(Error::InvalidConfig("--seeds must be at least 1".into()));
    }

    #[derive(Serialize)]
    struct InstanceRecord {
        seed: u64,
        atoms: usize,
        primary_diff: f64,
        secondary_diff: f64,
        unique: bool,
        support_matches: bool,
        pass: bool,
    }
    let mut records = Vec::with_capacity(seeds as usize);
    let mut failures = 0usize;
    for i in 1..=seeds {
        let seed = cfg.seed + i;
        let n = 2 + ((i - 1) as usize) % 6;
        let inst = synthetic_metric_instance(seed, n)?;
        let brute = brute_lexicographic(&inst)?;
        let mass = vec![1.0 / n as f64; n];
        let max_cost = inst.cost.iter().flat_map(|r| r.iter().copied()).fold(0.0, f64::max);
        let dense = solve_dense(&inst.cost, &mass, &mass, 1e-9 * (1.0 + max_cost))?;
        let support: Vec<(usize, usize)> = dense.plan.iter().map(|&(a, b, _)| (a, b)).collect();
        let v = compare(&brute, dense.primary * n as f64, dense.secondary * n as f64, &support);
        failures += usize::from(!v.pass);
        records.push(InstanceRecord {
            seed,
            atoms: n,
            primary_diff: v.primary_diff,
            secondary_diff: v.secondary_diff,
            unique: brute.unique,
            support_matches: v.support_matches,
            pass: v.pass,
        });
    }

    #[derive(Serialize)]
    struct OracleDoc {
        instances: Vec<InstanceRecord>,
        checked: usize,
        failures: usize,
        all_pass: bool,
    }
    let checked = records.len();
    out.json(
        "oracle.json",
        OracleDoc { instances: records, checked, failures, all_pass: failures == 0 },
    )?;
    println!("oracle: {} of {checked} instances match the enumeration", checked - failures);
    if failures > 0 {
        return Err(Error::Numerical(format!(
            "solver disagrees with exhaustive enumeration on {failures} of {checked} instances"
        )));
    }
    Ok(())
}

pub fn cmd_export(cfg: &RunConfig, out: &OutDir) -> Result<()> {
    let (manifold, _, run) = full_run(cfg)?;

    #[derive(Serialize)]
    struct ExportDoc<'a> {
        node_count: usize,
        edge_count: usize,
        metrics: Metrics,
        tight_pairs: &'a [(usize, usize)],
        cal_tol: f64,
        primary_plan: &'a monge_core::solver::TransportPlan,
        selected_plan: &'a monge_core::solver::TransportPlan,
        map: &'a [(usize, usize)],
        multivalued_sources: &'a [usize],
        potential: &'a [f64],
        anchor: usize,
        certificate: &'a monge_core::solver::OptimalityCertificate,
        decomposition: &'a monge_core::rays::RayDecomposition,
        audit: &'a monge_core::rays::RayAuditReport,
    }
    let path = out.json(
        "export.json",
        ExportDoc {
            node_count: manifold.node_count(),
            edge_count: manifold.edge_count(),
            metrics: Metrics::of(&run),
            tight_pairs: &run.tight_pairs,
            cal_tol: run.cal_tol,
            primary_plan: &run.primary_plan,
            selected_plan: &run.selection.plan,
            map: &run.selection.map,
            multivalued_sources: &run.selection.lambda,
            potential: &run.potential.u,
            anchor: run.potential.anchor,
            certificate: &run.certificate,
            decomposition: &run.decomposition,
            audit: &run.ray_audit,
        },
    )?;
    println!("wrote {}", path.display());
    Ok(())
}
