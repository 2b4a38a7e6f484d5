use mvssm_core::ensembles::{draw_path, AdversarialKind, EnsembleKind, EnsembleSpec};
use mvssm_core::estimates::{estimate_sweep, EnsembleTemplate, SweepConfig};
use mvssm_core::ssm::DEFAULT_MOMENT_DEGREE;
use mvssm_core::{moment_table, run_verify, DerivTermSpec, Suite, VerifyConfig};
use serde::{Deserialize, Serialize};

use crate::output::{emit_json, write_atomic, Console};
use crate::{load_config, parse, Failure, MomentsArgs, SweepArgs, VerifyArgs};

pub fn verify(a: VerifyArgs) -> Result<(), Failure> {
    let mut cfg: VerifyConfig = load_config(a.common.config.as_deref())?;
    let suite: Suite = parse(&a.suite)?;
    if let Some(v) = a.common.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.draws {
        cfg.draws = v;
    }
    if let Some(v) = a.common.dim {
        cfg.dim = v;
    }
    if let Some(v) = a.common.nvars {
        cfg.n_vars = v;
    }
    if let Some(v) = a.common.v_scale {
        cfg.v_scale = v;
    }
    if let Some(v) = a.m_min {
        cfg.m_min = v;
    }
    if let Some(v) = a.m_max {
        cfg.m_max = v;
    }
    if let Some(v) = &a.ensemble {
        cfg.ensemble = Some(parse(v)?);
    }
    if a.tol.is_some() {
        cfg.tol = a.tol;
    }
    cfg.validate()?;

    let report = run_verify(suite, &cfg)?;
    let console = Console::new(a.common.out.is_some());
    for s in &report.suites {
        console.line(format!(
            "{:<12} {}/{} passed, {} out of hypothesis, worst error/tol {:.3e}",
            s.suite.to_string(),
            s.passed,
            s.checks,
            s.out_of_hypothesis,
            s.worst_margin
        ));
    }
    emit_json(&report, a.common.out.as_deref())?;

    let failing: Vec<String> = report
        .suites
        .iter()
        .flat_map(|s| {
            s.failures
                .iter()
                .map(move |f| format!("{} {} seed {} ({})", s.suite, f.check, f.seed, f.detail))
        })
        .collect();
    if failing.is_empty() {
        return Ok(());
    }
    for f in &failing {
        eprintln!("  {f}");
    }
    Err(Failure::Check(format!(
        "{} failing checks; rerun one with --seed <seed> --draws 1",
        failing.len()
    )))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MomentsConfig {
    pub term: Option<String>,
    pub ensemble: EnsembleKind,
    pub dim: usize,
    /// Defaults to at least 3 and at least the largest coordinate in the term.
    pub n_vars: Option<usize>,
    pub v_scale: f64,
    pub seed: u64,
    pub max_degree: u32,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        Self {
            term: None,
            ensemble: EnsembleKind::JointlyDiagonal,
            dim: 6,
            n_vars: None,
            v_scale: 0.5,
            seed: 0,
            max_degree: DEFAULT_MOMENT_DEGREE,
        }
    }
}

pub fn moments(a: MomentsArgs) -> Result<(), Failure> {
    let mut cfg: MomentsConfig = load_config(a.common.config.as_deref())?;
    if a.term.is_some() {
        cfg.term = a.term;
    }
    if let Some(v) = &a.ensemble {
        cfg.ensemble = parse(v)?;
    }
    if let Some(v) = a.common.dim {
        cfg.dim = v;
    }
    if a.common.nvars.is_some() {
        cfg.n_vars = a.common.nvars;
    }
    if let Some(v) = a.common.v_scale {
        cfg.v_scale = v;
    }
    if let Some(v) = a.common.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.max_degree {
        cfg.max_degree = v;
    }

    let text = cfg
        .term
        .as_deref()
        .ok_or_else(|| Failure::Usage("--term is required".into()))?;
    let term: DerivTermSpec = parse(text)?;
    if let Some(m) = a.m {
        if m != term.order() {
            return Err(Failure::Usage(format!(
                "term {term} has order {}, but --m {m} was given",
                term.order()
            )));
        }
    }
    let needed = term.coords().iter().map(|&(j, _)| j + 1).max().unwrap_or(1);
    let n = match cfg.n_vars {
        Some(n) if n < needed => {
            return Err(Failure::Usage(format!(
                "term {term} uses variable {needed} but nvars is {n}"
            )));
        }
        Some(n) => n,
        None => needed.max(3),
    };
    let spec = EnsembleSpec {
        kind: cfg.ensemble,
        n,
        dim: cfg.dim,
        v_scale: cfg.v_scale,
        seed: cfg.seed,
    };
    let path = draw_path(&spec)?;
    let table = moment_table(&term, &path, &vec![cfg.max_degree; n])?;

    let console = Console::new(a.common.out.is_some());
    console.line(format!("term {term}  m {}  moments {}", table.m, table.entries.len()));
    console.line(format!("tv_bound {:.6e}", table.tv_bound));
    console.line(format!("max |entry| {:.6e}", table.max_abs_entry()));
    emit_json(&table, a.common.out.as_deref())
}

pub fn sweep(a: SweepArgs) -> Result<(), Failure> {
    let mut cfg: SweepConfig = load_config(a.common.config.as_deref())?;
    if let Some(v) = a.common.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.draws {
        cfg.draws = v;
    }
    if !a.ensemble.is_empty() {
        let like = cfg.ensembles.first().cloned().unwrap_or(EnsembleTemplate {
            kind: EnsembleKind::JointlyDiagonal,
            n: 3,
            dim: 6,
            v_scale: 0.5,
        });
        cfg.ensembles = a
            .ensemble
            .iter()
            .map(|s| {
                Ok(EnsembleTemplate {
                    kind: parse(s)?,
                    ..like.clone()
                })
            })
            .collect::<Result<_, Failure>>()?;
    }
    for t in &mut cfg.ensembles {
        if let Some(v) = a.common.dim {
            t.dim = v;
        }
        if let Some(v) = a.common.nvars {
            t.n = v;
        }
        if let Some(v) = a.common.v_scale {
            t.v_scale = v;
        }
    }
    if !a.adversarial.is_empty() {
        cfg.adversarial = a
            .adversarial
            .iter()
            .map(|s| parse::<AdversarialKind>(s))
            .collect::<Result<_, _>>()?;
    }
    if a.m_min.is_some() || a.m_max.is_some() {
        let lo = a
            .m_min
            .unwrap_or_else(|| cfg.m_values.iter().copied().min().unwrap_or(2));
        let hi = a
            .m_max
            .unwrap_or_else(|| cfg.m_values.iter().copied().max().unwrap_or(4));
        if lo > hi {
            return Err(Failure::Usage(format!("--m-min {lo} exceeds --m-max {hi}")));
        }
        cfg.m_values = (lo..=hi).collect();
    }
    if let Some(v) = a.max_k {
        cfg.max_k = v;
    }
    cfg.general_trace |= a.general_trace;
    cfg.validate()?;

    let report = estimate_sweep(&cfg)?;
    let console = Console::new(a.common.out.is_some());
    console.line(format!(
        "backed: {} cases, sound {}/{}, strict-grid {}/{}, max ratio {:.4}",
        report.total, report.passed_sound, report.total, report.passed_strict, report.total, report.max_ratio
    ));
    console.line(format!(
        "unbacked: {} cases, max ratio {:.4}",
        report.unbacked.total, report.unbacked.max_ratio
    ));
    console.line(format!(
        "out of hypothesis: {} cases, max ratio {:.4}",
        report.out_of_hypothesis.total, report.out_of_hypothesis.max_ratio
    ));
    if let Some(path) = &a.max_ratio_csv {
        write_atomic(path, report.to_csv().as_bytes())?;
    }
    emit_json(&report, a.common.out.as_deref())?;

    if report.all_sound() {
        return Ok(());
    }
    for f in &report.failures {
        eprintln!(
            "  {} term {} m {} t {} seed {}: {:.6e} > {:.6e}",
            f.ensemble, f.term, f.m, f.t, f.seed, f.lhs, f.bound
        );
    }
    Err(Failure::Check(format!(
        "{} sound-check failures",
        report.failures.len()
    )))
}
