use anyhow::Result;
use qclab::catalog::Catalog;
use qclab::chart::{frame_field, recover_structure, PointFrame};
use qclab::connection::newtor_check;
use qclab::curvature::{alpha_identity_check, analyse, ricci_checks, PointAnalysis};
use qclab::twistor::{
    cr_nijenhuis_residual, d_eta_z_oracle, fibre_points, lie_chi_g, normality_direct_oracle, TwistorReport, Verdict,
};
use qclab::{NumericSettings, QcError, Tolerances};
use serde_json::{json, Map, Value};

use crate::spec::{ListArgs, RunSpec};
use crate::table::{Cell, Format, Report};

/// What a command produced and whether every check passed.
pub struct Outcome {
    pub text: String,
    pub passed: bool,
}

impl Outcome {
    fn new(report: &Report, format: Format, passed: bool) -> Self {
        Self {
            text: report.render(format),
            passed,
        }
    }
}

fn point_cells(u: &[f64]) -> impl Iterator<Item = Cell> + '_ {
    u.iter().map(|&v| Cell::Num(v))
}

fn first_error<T>(results: Vec<Result<T, QcError>>) -> Result<Vec<T>> {
    Ok(results.into_iter().collect::<Result<Vec<T>, QcError>>()?)
}

pub fn list(args: &ListArgs) -> Result<Outcome> {
    let catalog = match &args.config_dir {
        Some(dir) => Catalog::with_config_dir(dir)?,
        None => Catalog::builtin(),
    };
    if args.format == Format::Json {
        let entries: Vec<Value> = catalog
            .entries()
            .map(
                |e| json!({ "name": e.name(), "n": e.n(), "dimension": 4 * e.n() + 3, "description": e.description() }),
            )
            .collect();
        let mut text = serde_json::to_string_pretty(&entries)?;
        text.push('\n');
        return Ok(Outcome { text, passed: true });
    }
    let columns = ["name", "n", "dimension", "description"].map(String::from).to_vec();
    let mut report = Report::new("list", Map::new(), columns);
    for e in catalog.entries() {
        report.push(vec![
            e.name().into(),
            e.n().into(),
            (4 * e.n() + 3).into(),
            e.description().into(),
        ]);
    }
    Ok(Outcome::new(&report, args.format, true))
}

fn relaxed(settings: &NumericSettings) -> NumericSettings {
    let inf = f64::INFINITY;
    NumericSettings {
        tol: Tolerances {
            exact: inf,
            frame: inf,
            levi: inf,
            bi1: inf,
            quaternion: inf,
            q_preserve: inf,
            torsion: inf,
            normal: inf,
            t0: inf,
        },
        ..settings.clone()
    }
}

/// The first invariant a frame violates, Biquard condition first.
fn frame_failure(f: &PointFrame, tol: &Tolerances) -> Option<String> {
    if !(f.bi1_residual <= tol.bi1) {
        return Some("Biquard condition".into());
    }
    match f.residuals.check(&f.point, tol) {
        Err(QcError::Validation { invariant, .. }) => Some(invariant),
        Err(e) => Some(e.to_string()),
        Ok(()) => None,
    }
}

const VALIDATE_COLUMNS: [&str; 9] = [
    "quaternion",
    "metric_symmetry",
    "metric_consistency",
    "bi1",
    "reeb_min_singular",
    "eta_on_h",
    "eta_on_xi",
    "orthonormality",
    "levi",
];

fn validate_point(spec: &RunSpec, u: &[f64]) -> (Option<String>, [f64; 9]) {
    let loose = relaxed(&spec.settings);
    let tol = &spec.settings.tol;
    let mut r = [f64::NAN; 9];
    let rec = match recover_structure(&spec.chart, u, &loose.tol) {
        Ok(rec) => rec,
        Err(e) => return (Some(format!("structure recovery: {e}")), r),
    };
    r[0] = rec.residuals.quaternion;
    r[1] = rec.residuals.symmetry;
    r[2] = rec.residuals.metric_consistency;
    let frame = match frame_field(&spec.chart, u, &loose) {
        Ok(f) => f,
        Err(e) => return (Some(e.to_string()), r),
    };
    let fr = &frame.residuals;
    r[3..].copy_from_slice(&[
        frame.bi1_residual,
        frame.reeb_min_singular,
        fr.eta_on_h,
        fr.eta_on_xi,
        fr.orthonormality,
        fr.levi,
    ]);
    if !(frame.bi1_residual <= tol.bi1) {
        return (Some("Biquard condition".into()), r);
    }
    if !(r[0] <= tol.quaternion) {
        return (Some("quaternion relations".into()), r);
    }
    if !(r[1] <= tol.quaternion) {
        return (Some("metric symmetry".into()), r);
    }
    (frame_failure(&frame, tol), r)
}

pub fn validate(spec: &RunSpec) -> Result<Outcome> {
    let results = spec.map_points(|_, u| validate_point(spec, u))?;
    let mut columns = vec!["index".to_string()];
    columns.extend(spec.coord_columns());
    columns.extend(["status", "failed_check"].map(String::from));
    columns.extend(VALIDATE_COLUMNS.map(String::from));
    let mut report = Report::new("validate", spec.meta(false), columns);
    let mut failed = 0;
    for (k, (u, (failure, r))) in spec.points.iter().zip(results).enumerate() {
        failed += usize::from(failure.is_some());
        let mut row: Vec<Cell> = vec![k.into()];
        row.extend(point_cells(u));
        row.push(if failure.is_some() { "fail" } else { "pass" }.into());
        row.push(failure.unwrap_or_default().into());
        row.extend(r.iter().map(|&v| Cell::Num(v)));
        report.push(row);
    }
    report.summary.insert("points".into(), spec.points.len().into());
    report.summary.insert("failed".into(), failed.into());
    report
        .summary
        .insert("status".into(), if failed == 0 { "pass" } else { "fail" }.into());
    Ok(Outcome::new(&report, spec.format, failed == 0))
}

pub fn invariants(spec: &RunSpec) -> Result<Outcome> {
    let results = first_error(spec.map_points(|_, u| analyse(&spec.chart, u, &spec.settings))?)?;
    let mut columns = vec!["index".to_string()];
    columns.extend(spec.coord_columns());
    columns.extend(
        [
            "t0_norm",
            "u_norm",
            "scal",
            "tau",
            "ric_decomposition",
            "ric_i_invariance",
            "ric_i_defect",
            "propt",
            "newtor",
            "traces",
            "bi1",
        ]
        .map(String::from),
    );
    let mut report = Report::new("invariants", spec.meta(false), columns);
    let (mut t0, mut ric) = (0.0f64, 0.0f64);
    for (k, (u, pa)) in spec.points.iter().zip(&results).enumerate() {
        let rc = ricci_checks(&pa.curv, &pa.tensors);
        let tt = &pa.tensors;
        t0 = t0.max(tt.t0_norm());
        ric = ric.max(rc.decomposition);
        let mut row: Vec<Cell> = vec![k.into()];
        row.extend(point_cells(u));
        row.extend(
            [
                tt.t0_norm(),
                tt.u_norm(),
                pa.curv.scal,
                pa.curv.tau,
                rc.decomposition,
                rc.i_invariance,
                rc.i_defect,
                tt.propt,
                newtor_check(pa.conn(), tt),
                tt.traces,
                pa.frame().bi1_residual,
            ]
            .map(Cell::Num),
        );
        report.push(row);
    }
    report.summary.insert("max_t0_norm".into(), t0.into());
    report.summary.insert("max_ric_decomposition".into(), ric.into());
    Ok(Outcome::new(&report, spec.format, true))
}

fn summary_verdict(verdicts: impl Iterator<Item = Verdict>) -> Verdict {
    let mut all_normal = true;
    for v in verdicts {
        match v {
            Verdict::NotNormal => return Verdict::NotNormal,
            Verdict::Inconclusive => all_normal = false,
            Verdict::Normal => {}
        }
    }
    if all_normal {
        Verdict::Normal
    } else {
        Verdict::Inconclusive
    }
}

struct FibreEval {
    report: TwistorReport,
    oracle: Option<(f64, f64)>,
}

fn twistor_point(
    spec: &RunSpec,
    u: &[f64],
    oracle_pairs: Option<usize>,
) -> Result<(PointAnalysis, Vec<FibreEval>), QcError> {
    let st = &spec.settings;
    let pa = analyse(&spec.chart, u, st)?.with_d_tau(&spec.chart, st)?;
    let evals = fibre_points(spec.fiber, spec.seed)
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let report = lie_chi_g(&spec.chart, &pa, x, st)?;
            let oracle = match oracle_pairs {
                Some(pairs) => {
                    let o = normality_direct_oracle(&spec.chart, &pa, &report, pairs, spec.seed + j as u64, st)?;
                    Some((o.max_deviation, o.max_direct))
                }
                None => None,
            };
            Ok(FibreEval { report, oracle })
        })
        .collect::<Result<Vec<_>, QcError>>()?;
    Ok((pa, evals))
}

fn twistor_columns(spec: &RunSpec, extra: &[&str]) -> Vec<String> {
    let mut columns = ["index", "point", "fibre"].map(String::from).to_vec();
    columns.extend(spec.coord_columns());
    columns.extend(["fibre_x1", "fibre_x2", "fibre_x3"].map(String::from));
    columns.extend(extra.iter().map(|s| s.to_string()));
    columns
}

pub fn normality(spec: &RunSpec, oracle_pairs: Option<usize>) -> Result<Outcome> {
    let results = first_error(spec.map_points(|_, u| twistor_point(spec, u, oracle_pairs))?)?;
    let mut extra = vec![
        "normality_residual",
        "t0_norm",
        "tau",
        "verdict",
        "mte1",
        "mte2",
        "mte3",
        "mte4",
    ];
    if oracle_pairs.is_some() {
        extra.extend(["oracle_deviation", "oracle_direct"]);
    }
    let mut meta = spec.meta(true);
    if let Some(p) = oracle_pairs {
        meta["settings"]["oracle_pairs"] = p.into();
    }
    let mut report = Report::new("normality", meta, twistor_columns(spec, &extra));
    let mut index = 0usize;
    let (mut worst, mut worst_oracle) = (0.0f64, 0.0f64);
    for (k, (u, (_, evals))) in spec.points.iter().zip(&results).enumerate() {
        for (j, e) in evals.iter().enumerate() {
            let r = &e.report;
            worst = worst.max(r.normality_residual);
            let mut row: Vec<Cell> = vec![index.into(), k.into(), j.into()];
            row.extend(point_cells(u));
            row.extend(r.x.0.map(Cell::Num));
            row.extend([r.normality_residual, r.t0_norm, r.tau].map(Cell::Num));
            row.push(r.verdict.as_str().into());
            row.extend([r.mte.mte1, r.mte.mte2, r.mte.mte3, r.mte.mte4].map(Cell::Num));
            if let Some((dev, direct)) = e.oracle {
                worst_oracle = worst_oracle.max(dev);
                row.extend([dev, direct].map(Cell::Num));
            }
            report.push(row);
            index += 1;
        }
    }
    let verdict = summary_verdict(results.iter().flat_map(|(_, ev)| ev.iter().map(|e| e.report.verdict)));
    report.summary.insert("verdict".into(), verdict.as_str().into());
    report.summary.insert("max_normality_residual".into(), worst.into());
    let mut passed = true;
    if oracle_pairs.is_some() {
        passed = worst_oracle <= spec.checks.oracle;
        report
            .summary
            .insert("max_oracle_deviation".into(), worst_oracle.into());
        report
            .summary
            .insert("oracle_agreement".into(), if passed { "pass" } else { "fail" }.into());
    }
    Ok(Outcome::new(&report, spec.format, passed))
}

fn verdict_slot(v: Verdict) -> usize {
    match v {
        Verdict::Normal => 0,
        Verdict::NotNormal => 1,
        Verdict::Inconclusive => 2,
    }
}

pub fn sweep(spec: &RunSpec) -> Result<Outcome> {
    let results = first_error(spec.map_points(|_, u| twistor_point(spec, u, None))?)?;
    let extra = ["t0_norm", "u_norm", "scal", "tau", "normality_residual", "verdict"];
    let mut report = Report::new("sweep", spec.meta(true), twistor_columns(spec, &extra));
    let mut counts = [0usize; 3];
    let mut index = 0usize;
    for (k, (u, (pa, evals))) in spec.points.iter().zip(&results).enumerate() {
        for (j, e) in evals.iter().enumerate() {
            let r = &e.report;
            counts[verdict_slot(r.verdict)] += 1;
            let mut row: Vec<Cell> = vec![index.into(), k.into(), j.into()];
            row.extend(point_cells(u));
            row.extend(r.x.0.map(Cell::Num));
            row.extend(
                [
                    r.t0_norm,
                    pa.tensors.u_norm(),
                    pa.curv.scal,
                    r.tau,
                    r.normality_residual,
                ]
                .map(Cell::Num),
            );
            row.push(r.verdict.as_str().into());
            report.push(row);
            index += 1;
        }
    }
    report.summary.insert("evaluations".into(), index.into());
    for v in [Verdict::Normal, Verdict::NotNormal, Verdict::Inconclusive] {
        report.summary.insert(v.as_str().into(), counts[verdict_slot(v)].into());
    }
    Ok(Outcome::new(&report, spec.format, true))
}

#[derive(Debug, Clone)]
enum Check {
    Value(f64),
    Error(String),
    Skipped,
    NotApplicable,
}

const IDENTITIES: [&str; 15] = [
    "Biquard condition",
    "frame orthonormality",
    "Levi form",
    "quaternion relations",
    "Q preservation",
    "torsion structure",
    "trace-free torsion",
    "newtor",
    "alpha identity",
    "Ricci decomposition",
    "Ricci I-defect",
    "d eta^Z closed form",
    "CR Nijenhuis",
    "Levi J-invariance",
    "MTE system",
];

fn identity_tolerances(spec: &RunSpec) -> [f64; 15] {
    let t = &spec.settings.tol;
    let c = &spec.checks;
    [
        t.bi1,
        t.frame,
        t.levi,
        t.quaternion,
        t.q_preserve,
        t.torsion,
        t.torsion,
        t.torsion,
        c.alpha,
        c.ricci,
        c.ricci,
        c.d_eta,
        c.cr,
        c.levi_j,
        c.mte,
    ]
}

fn identities_point(spec: &RunSpec, u: &[f64]) -> Vec<Check> {
    let st = &spec.settings;
    let chart = &spec.chart;
    let mut out = vec![Check::Skipped; IDENTITIES.len()];
    let frame = match frame_field(chart, u, &relaxed(st)) {
        Ok(f) => f,
        Err(e) => {
            out[0] = Check::Error(e.to_string());
            return out;
        }
    };
    let fr = &frame.residuals;
    out[0] = Check::Value(frame.bi1_residual);
    out[1] = Check::Value(fr.eta_on_h.max(fr.eta_on_xi).max(fr.orthonormality));
    out[2] = Check::Value(fr.levi);
    out[3] = Check::Value(fr.quaternion);
    if frame_failure(&frame, &st.tol).is_some() {
        return out;
    }
    let pa = match analyse(chart, u, st) {
        Ok(pa) => pa,
        Err(e) => {
            out[4] = Check::Error(e.to_string());
            return out;
        }
    };
    let c = pa.conn();
    let tt = &pa.tensors;
    let rc = ricci_checks(&pa.curv, tt);
    out[4] = Check::Value(c.vertical.q_residual.max(c.xi.h_q_residual));
    out[5] = Check::Value(tt.propt.max(tt.u_invariance).max(tt.symmetry));
    out[6] = Check::Value(tt.traces);
    out[7] = Check::Value(newtor_check(c, tt).max(tt.newequiv));
    out[8] = Check::Value(alpha_identity_check(&pa.curv));
    out[9] = Check::Value(rc.decomposition);
    out[10] = Check::Value(rc.i_defect);

    let torsion_free = tt.t0_norm() <= st.tol.t0;
    let pa = if torsion_free {
        match pa.with_d_tau(chart, st) {
            Ok(pa) => pa,
            Err(e) => {
                out[14] = Check::Error(e.to_string());
                return out;
            }
        }
    } else {
        out[14] = Check::NotApplicable;
        pa
    };
    let (mut deta, mut nij, mut levi, mut mte) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (j, x) in fibre_points(spec.fiber, spec.seed).iter().enumerate() {
        let seed = spec.seed + j as u64;
        match d_eta_z_oracle(chart, &pa, x, 10, seed, st) {
            Ok(d) => deta = deta.max(d.max_deviation).max((d.xi23 + 2.0 * d.tau).abs()),
            Err(e) => out[11] = Check::Error(e.to_string()),
        }
        match cr_nijenhuis_residual(chart, &pa, x, 6, seed, st) {
            Ok(cr) => {
                nij = nij.max(cr.nijenhuis);
                levi = levi.max(cr.levi_invariance);
            }
            Err(e) => out[12] = Check::Error(e.to_string()),
        }
        if torsion_free {
            match lie_chi_g(chart, &pa, x, st) {
                Ok(r) => mte = mte.max(r.mte.mte2).max(r.mte.mte3).max(r.mte.mte4),
                Err(e) => out[14] = Check::Error(e.to_string()),
            }
        }
    }
    for (slot, v) in [(11, deta), (12, nij), (13, levi)] {
        if !matches!(out[slot], Check::Error(_)) {
            out[slot] = Check::Value(v);
        }
    }
    if torsion_free && !matches!(out[14], Check::Error(_)) {
        out[14] = Check::Value(mte);
    }
    out
}

pub fn identities(spec: &RunSpec) -> Result<Outcome> {
    let per_point = spec.map_points(|_, u| identities_point(spec, u))?;
    let tols = identity_tolerances(spec);
    let columns = [
        "check",
        "status",
        "residual",
        "tolerance",
        "worst_point",
        "evaluated",
        "skipped",
        "not_applicable",
        "detail",
    ]
    .map(String::from)
    .to_vec();
    let mut report = Report::new("identities", spec.meta(true), columns);
    let mut failed = 0;
    for (i, name) in IDENTITIES.iter().enumerate() {
        let (mut worst, mut at) = (0.0f64, None);
        let (mut evaluated, mut skipped, mut na) = (0usize, 0usize, 0usize);
        let mut detail = String::new();
        for (k, checks) in per_point.iter().enumerate() {
            match &checks[i] {
                Check::Value(v) => {
                    evaluated += 1;
                    if !(*v <= worst) {
                        worst = *v;
                        at = Some(k);
                    }
                }
                Check::Error(e) => {
                    if detail.is_empty() {
                        detail = format!("point {k}: {e}");
                        at = Some(k);
                    }
                    worst = f64::NAN;
                }
                Check::Skipped => skipped += 1,
                Check::NotApplicable => na += 1,
            }
        }
        let status = if !detail.is_empty() || !(worst <= tols[i]) {
            "fail"
        } else if evaluated > 0 {
            "pass"
        } else if skipped > 0 {
            "skipped"
        } else {
            "n/a"
        };
        if evaluated == 0 && detail.is_empty() {
            worst = f64::NAN;
        }
        failed += usize::from(status == "fail");
        let worst_cell = at.map_or(Cell::Text(String::new()), Cell::from);
        report.push(vec![
            (*name).into(),
            status.into(),
            worst.into(),
            tols[i].into(),
            worst_cell,
            evaluated.into(),
            skipped.into(),
            na.into(),
            detail.into(),
        ]);
    }
    report.summary.insert("checks".into(), IDENTITIES.len().into());
    report.summary.insert("failed".into(), failed.into());
    report
        .summary
        .insert("status".into(), if failed == 0 { "pass" } else { "fail" }.into());
    Ok(Outcome::new(&report, spec.format, failed == 0))
}
