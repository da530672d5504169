//! One function per subcommand. Each returns the serialized report and the
//! verdict; `main` decides where the bytes go.

use std::collections::BTreeMap;
use std::path::Path;

use nfl_core::continuum_checks::{
    expected_g_identity_check, k_limit_probe, mesh_variance_study, write_identity_csv, IdentityReport,
    KProbeReport, MeshStudy, ROUNDING_FLOOR,
};
use nfl_core::finite_enum::{
    check_all_pairs, schumacher_scan, AllPairsReport, FunctionMeasure, FunctionSet, FunctionSpace, OrbitKey,
};
use nfl_core::mc_lab::{
    check_constant_covariance, check_identical_marginals, nfl_mc_test, resolve_policy,
    standardization_invariance_test, CovarianceReport, MarginalPairReport, NamedPolicy, NflMcReport,
    StandardizationReport,
};
use nfl_core::process_models::{sample_batch, write_paths_csv, Grid, ProcessKind, ProcessSpec};
use nfl_core::seed::derive_seed;
use nfl_core::trace_core::{EnumerationCaps, FiniteDomain, Policy};
use serde::Serialize;

use crate::config::{
    ContinuumConfig, CupScanConfig, Experiment, FiniteMeasureConfig, McNflConfig, NecessaryConfig,
    SamplePathsConfig, VerifyWmConfig,
};
use crate::report::{file_name, sibling, to_json, RunReport, Verdict, TOOL, VERSION};
use crate::CliError;

pub struct Completed {
    pub report: String,
    pub pass: bool,
    /// `(suffix, bytes)` side tables, written beside the report.
    pub side_tables: Vec<(String, Vec<u8>)>,
}

fn finish<C: Experiment, R: Serialize>(
    command: &'static str,
    seed_scheme: &'static str,
    config: &C,
    verdict: Verdict,
    result: R,
    side_tables: Vec<(String, Vec<u8>)>,
    out: Option<&Path>,
) -> Result<Completed, CliError> {
    let artifacts = match out {
        Some(p) => side_tables.iter().map(|(s, _)| file_name(&sibling(p, s))).collect(),
        None => Vec::new(),
    };
    let pass = verdict.pass;
    let report = to_json(&RunReport {
        tool: TOOL,
        version: VERSION,
        command,
        master_seed: config.seed(),
        seed_scheme,
        config,
        verdict,
        result,
        artifacts,
    })?;
    Ok(Completed {
        report,
        pass,
        side_tables,
    })
}

fn finite_space(points: usize, values: usize, max_points: usize, max_values: usize) -> Result<(FunctionSpace, EnumerationCaps), CliError> {
    let caps = EnumerationCaps {
        max_points,
        max_values,
    };
    let space = FunctionSpace::new(FiniteDomain::with_sizes(points, values)?)?;
    Ok((space, caps))
}

fn finite_measure(space: &FunctionSpace, m: &FiniteMeasureConfig, fallback_seed: u64) -> Result<FunctionMeasure, CliError> {
    Ok(match m {
        FiniteMeasureConfig::UniformOnAll => FunctionMeasure::UniformAll,
        FiniteMeasureConfig::UniformOnSubset { functions } => {
            FunctionMeasure::UniformSubset(FunctionSet::from_indices(space, functions.iter().copied())?)
        }
        FiniteMeasureConfig::OrbitUniform { weights: Some(w), .. } => {
            let parsed = w
                .iter()
                .map(|(k, v)| Ok((k.parse::<OrbitKey>()?, *v)))
                .collect::<Result<BTreeMap<_, _>, CliError>>()?;
            FunctionMeasure::orbit_from_integer_weights(parsed)?
        }
        FiniteMeasureConfig::OrbitUniform { weights: None, seed } => {
            FunctionMeasure::random_orbit_uniform(space, seed.unwrap_or(fallback_seed))?
        }
    })
}

#[derive(Serialize)]
struct VerifyWmResult {
    policies: usize,
    pairs: u128,
    measures: Vec<AllPairsReport>,
}

pub fn verify_wm(config: &VerifyWmConfig, out: Option<&Path>) -> Result<Completed, CliError> {
    let (space, caps) = finite_space(config.points, config.values, config.max_points, config.max_values)?;
    let m = config.steps.unwrap_or(config.points);
    let mut reports = Vec::with_capacity(config.measures.len());
    for (k, mc) in config.measures.iter().enumerate() {
        let measure = finite_measure(&space, mc, derive_seed(config.seed, k as u64))?;
        reports.push(check_all_pairs(&space, &measure, m, caps)?);
    }
    let pass = reports.iter().all(|r| r.all_equal);
    let (policies, pairs) = (reports[0].policies, reports[0].pairs);
    let summary = if pass {
        format!(
            "all {pairs} policy pairs have identical laws under each of {} measure(s)",
            reports.len()
        )
    } else {
        let r = reports.iter().find(|r| !r.all_equal).expect("one fails");
        let (a, b, _) = r.counterexample.as_ref().expect("counterexample");
        format!("laws differ under {}: {a} vs {b}", r.measure)
    };
    finish(
        "verify-wm",
        "orbit-uniform measure k without explicit weights or seed draws weights from derive_seed(master, k)",
        config,
        Verdict { pass, summary },
        VerifyWmResult {
            policies,
            pairs,
            measures: reports,
        },
        Vec::new(),
        out,
    )
}

pub fn cup_scan(config: &CupScanConfig, out: Option<&Path>) -> Result<Completed, CliError> {
    let (space, caps) = finite_space(config.points, config.values, config.max_points, config.max_values)?;
    let m = config.steps.unwrap_or(config.points);
    let report = schumacher_scan(&space, m, &config.scan_mode(), caps)?;
    let pass = report.characterization_holds();
    let summary = if pass {
        let failing = report.entries.iter().filter(|e| !e.nfl).count();
        let mut s = format!(
            "closure under permutation matches law-equality on all {} scanned subsets",
            report.scanned
        );
        if failing > 0 {
            s.push_str(&format!("; NFL fails on {failing}, each with a witness pair"));
        }
        s
    } else {
        format!("{} subsets where closure and law-equality disagree", report.disagreements)
    };
    finish(
        "cup-scan",
        "sampled subsets draw from the master seed directly",
        config,
        Verdict { pass, summary },
        report,
        Vec::new(),
        out,
    )
}

/// Zoo name, descriptor, or `at(t)` for the grid point `t`.
fn grid_policy(name: &str, grid: &Grid, seed: u64) -> Result<NamedPolicy, CliError> {
    let trimmed = name.trim();
    if let Some(inner) = trimmed.strip_prefix("at(").and_then(|s| s.strip_suffix(')')) {
        let t: f64 = inner
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("bad point in `{trimmed}`")))?;
        return Ok(NamedPolicy {
            name: trimmed.to_string(),
            policy: Policy::FixedSequence(vec![grid.index_of(t)?]),
        });
    }
    Ok(resolve_policy(trimmed, grid.len(), seed)?)
}

fn pairs(p: &[[f64; 2]]) -> Vec<(f64, f64)> {
    p.iter().map(|&[t, s]| (t, s)).collect()
}

#[derive(Serialize)]
struct McNflResult {
    nfl: NflMcReport,
    marginals: Option<Vec<MarginalPairReport>>,
    covariance: Option<CovarianceReport>,
}

pub fn mc_nfl(config: &McNflConfig, out: Option<&Path>) -> Result<Completed, CliError> {
    let grid = Grid::equispaced(config.grid_points)?;
    let policies = config
        .policies
        .iter()
        .map(|p| grid_policy(p, &grid, config.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let measures = config.measures.iter().map(|m| m.resolve()).collect::<Result<Vec<_>, _>>()?;
    let nfl = nfl_mc_test(
        &config.process,
        &grid,
        &policies,
        &measures,
        config.steps,
        config.samples,
        config.alpha,
        config.seed,
    )?;
    let marginals = if config.marginal_pairs.is_empty() {
        None
    } else {
        Some(check_identical_marginals(
            &config.process,
            &grid,
            &pairs(&config.marginal_pairs),
            config.samples,
            config.alpha,
            derive_seed(config.seed, 1001),
        )?)
    };
    let covariance = if config.covariance_pairs.is_empty() {
        None
    } else {
        Some(check_constant_covariance(
            &config.process,
            &grid,
            &pairs(&config.covariance_pairs),
            config.samples,
            config.covariance_tolerance,
            derive_seed(config.seed, 1002),
        )?)
    };
    let marginal_rejections = marginals.iter().flatten().filter(|r| r.report.reject).count();
    let covariance_violation = covariance.as_ref().is_some_and(|c| c.violation);
    let pass = nfl.no_violation_detected && marginal_rejections == 0 && !covariance_violation;
    let mut findings = Vec::new();
    if !nfl.no_violation_detected {
        findings.push(format!(
            "{} of {} comparisons reject at adjusted alpha {}",
            nfl.adjusted_rejections, nfl.comparisons, nfl.adjusted_alpha
        ));
    }
    if marginal_rejections > 0 {
        findings.push(format!("{marginal_rejections} marginal pair(s) differ"));
    }
    if covariance_violation {
        findings.push("covariance is not constant".into());
    }
    let summary = if pass {
        format!("no violation detected ({} comparisons)", nfl.comparisons)
    } else {
        format!("violation certified: {}", findings.join("; "))
    };
    finish(
        "mc-nfl",
        "policy i samples paths under derive_seed(master, i), path j on stream j; seeded-random uses master; \
         marginal checks use derive_seed(master, 1001), covariance check derive_seed(master, 1002)",
        config,
        Verdict { pass, summary },
        McNflResult {
            nfl,
            marginals,
            covariance,
        },
        Vec::new(),
        out,
    )
}

#[derive(Serialize)]
struct NecessaryResult {
    marginals: Vec<MarginalPairReport>,
    covariance: Option<CovarianceReport>,
    standardization: Option<StandardizationReport>,
}

pub fn necessary(config: &NecessaryConfig, out: Option<&Path>) -> Result<Completed, CliError> {
    let grid = Grid::equispaced(config.grid_points)?;
    let marginals = if config.marginal_pairs.is_empty() {
        Vec::new()
    } else {
        check_identical_marginals(
            &config.process,
            &grid,
            &pairs(&config.marginal_pairs),
            config.samples,
            config.alpha,
            derive_seed(config.seed, 1),
        )?
    };
    let covariance = if config.covariance_pairs.is_empty() {
        None
    } else {
        Some(check_constant_covariance(
            &config.process,
            &grid,
            &pairs(&config.covariance_pairs),
            config.samples,
            config.covariance_tolerance,
            derive_seed(config.seed, 2),
        )?)
    };
    let standardization = if config.standardization_policy.is_empty() {
        None
    } else {
        let p = grid_policy(&config.standardization_policy, &grid, config.seed)?;
        Some(standardization_invariance_test(
            &config.process,
            &grid,
            &p.policy,
            config.standardization_steps,
            config.samples,
            derive_seed(config.seed, 3),
        )?)
    };
    let mut findings = Vec::new();
    let rejected = marginals.iter().filter(|r| r.report.reject).count();
    if rejected > 0 {
        findings.push(format!("{rejected} marginal pair(s) differ"));
    }
    if covariance.as_ref().is_some_and(|c| c.violation) {
        findings.push("covariance is not constant".to_string());
    }
    if standardization.as_ref().is_some_and(|s| !s.identity_holds) {
        findings.push("standardization identity fails".to_string());
    }
    let pass = findings.is_empty();
    let summary = if pass {
        "necessary conditions not contradicted".to_string()
    } else {
        format!("necessary condition fails: {}", findings.join("; "))
    };
    finish(
        "necessary",
        "marginal checks use derive_seed(master, 1), covariance derive_seed(master, 2), \
         standardization derive_seed(master, 3); path j on stream j",
        config,
        Verdict { pass, summary },
        NecessaryResult {
            marginals,
            covariance,
            standardization,
        },
        Vec::new(),
        out,
    )
}

#[derive(Serialize)]
struct KProbeGate {
    report: KProbeReport,
    /// Every estimate lies within `4 SE` of the model's `K(t)`.
    matches_kernel: bool,
}

#[derive(Serialize)]
struct MeshGate {
    study: MeshStudy,
    /// `1` for iid cells, `0` for the constant process, otherwise none.
    expected_slope: Option<f64>,
    slope_tolerance: Option<f64>,
    pass: bool,
}

#[derive(Serialize)]
struct ContinuumResult {
    identity: Option<IdentityReport>,
    k_probe: Option<KProbeGate>,
    mesh: Vec<MeshGate>,
}

fn mesh_gate(study: MeshStudy) -> MeshGate {
    let (expected_slope, slope_tolerance) = match study.spec.kind {
        ProcessKind::Iid => (Some(1.0), Some(0.1)),
        ProcessKind::Constant => (Some(0.0), Some(0.05)),
        _ => (None, None),
    };
    let slope_ok = match (expected_slope, slope_tolerance) {
        (Some(e), Some(tol)) => (study.slope - e).abs() <= tol,
        _ => true,
    };
    let pass = slope_ok && study.rows.iter().all(|r| r.within_4se != Some(false));
    MeshGate {
        study,
        expected_slope,
        slope_tolerance,
        pass,
    }
}

pub fn continuum(config: &ContinuumConfig, out: Option<&Path>) -> Result<Completed, CliError> {
    let mut findings = Vec::new();
    let mut side_tables = Vec::new();
    let identity = if config.identity_t.is_empty() {
        None
    } else {
        let r = expected_g_identity_check(
            &config.process,
            &config.identity_t,
            config.samples,
            &config.quadrature,
            derive_seed(config.seed, 1),
        )?;
        let mut csv = Vec::new();
        write_identity_csv(&r, &mut csv).map_err(|e| CliError::Io(e.to_string()))?;
        side_tables.push(("identity.csv".to_string(), csv));
        if !r.all_pass {
            findings.push("E[G] identity outside its gates".to_string());
        }
        Some(r)
    };
    let k_probe = if config.k_probe_t.is_empty() {
        None
    } else {
        let report = k_limit_probe(
            &config.process,
            &config.k_probe_t,
            config.samples,
            &config.quadrature,
            derive_seed(config.seed, 2),
        )?;
        let matches_kernel = report
            .rows
            .iter()
            .all(|r| (r.estimate - r.kernel).abs() <= 4.0 * r.standard_error + ROUNDING_FLOOR);
        if !matches_kernel {
            findings.push("K estimates disagree with the model kernel".to_string());
        }
        Some(KProbeGate {
            report,
            matches_kernel,
        })
    };
    let mut mesh = Vec::new();
    if let Some(mc) = &config.mesh {
        let mut specs = vec![mc.process];
        if mc.control {
            specs.push(ProcessSpec::new(ProcessKind::Constant, mc.process.marginal));
        }
        for (k, spec) in specs.iter().enumerate() {
            let study = mesh_variance_study(spec, &mc.meshes, mc.t, mc.samples, derive_seed(config.seed, 3 + k as u64))?;
            let gate = mesh_gate(study);
            if !gate.pass {
                findings.push(format!("mesh study for {} outside its gates", spec.name()));
            }
            mesh.push(gate);
        }
    }
    let pass = findings.is_empty();
    let mut summary = if pass {
        "all tolerance gates pass".to_string()
    } else {
        findings.join("; ")
    };
    if let Some(k) = &k_probe {
        summary.push_str(&format!("; {}", k.report.verdict));
    }
    finish(
        "continuum",
        "identity row k uses derive_seed(derive_seed(master, 1), k), K-probe row k \
         derive_seed(derive_seed(master, 2), k), mesh study derive_seed(master, 3), control \
         derive_seed(master, 4); path j on stream j",
        config,
        Verdict { pass, summary },
        ContinuumResult {
            identity,
            k_probe,
            mesh,
        },
        side_tables,
        out,
    )
}

/// CSV of sampled paths; the only subcommand whose primary output is not JSON.
pub fn sample_paths(config: &SamplePathsConfig) -> Result<Vec<u8>, CliError> {
    let grid = Grid::equispaced(config.grid_points)?;
    let paths = sample_batch(&config.process, &grid, config.seed, config.count)?;
    let mut csv = Vec::new();
    write_paths_csv(&paths, &mut csv).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(csv)
}
