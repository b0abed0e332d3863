//! One driver per experiment: configuration in, tables out.

use z2lgt::braiding::{self, RamseyConfig, StateSource};
use z2lgt::dynamics::{gap_scan, run_growing, GrowingOptions, GrowingPlan};
use z2lgt::effective::{default_gauss_eigenvalues, effective_basis, exact_eigenstate, labelled_spectrum, EffectiveParams};
use z2lgt::microscopic::{
    double_link, fine_tune_triangle, full_triangle, initial_state, merged_chain, single_block, LinkParams,
    MicroscopicLayout, MicroscopicRun,
};
use z2lgt::reduced::{reduced_gap, reduced_vs_full};
use z2lgt::snapshots::{apply_string_flip, classify_strings, sample};
use z2lgt::{preset, LatticeGeometry, LinkBasis};

use crate::config::*;
use crate::error::CliError;
use crate::output::{num, Outputs, Table};

fn geometry(name: &str) -> Result<LatticeGeometry, CliError> {
    preset(name).map_err(|_| CliError::schema("geometry", format!("unknown preset `{name}`")))
}

fn positive(field: &str, x: f64) -> Result<f64, CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::schema(field, "must be positive"))
    }
}

pub fn run(cfg: &ExperimentConfig, seed: u64) -> Result<Outputs, CliError> {
    match &cfg.params {
        Params::Spectrum(p) => spectrum(p),
        Params::Grow(p) => grow(p),
        Params::Gapscan(p) => gapscan(p),
        Params::MicroscopicEvolve(p) => microscopic(p),
        Params::Snapshot(p) => snapshot(p, seed),
        Params::Ramsey(p) => ramsey(p),
        Params::RamseyCalibrate(p) => calibrate(p),
        Params::ReducedGap(p) => reduced(p),
        Params::Finetune(p) => finetune(p),
    }
}

fn spectrum(p: &SpectrumConfig) -> Result<Outputs, CliError> {
    let g = geometry(&p.geometry)?;
    let gauss = match &p.gauss {
        Some(v) if v.len() != g.n_super_sites() || v.iter().any(|x| x.abs() != 1) => {
            return Err(CliError::schema("gauss", "one sign (+1 or -1) per super site"))
        }
        Some(v) => v.clone(),
        None => default_gauss_eigenvalues(&g),
    };
    let params = EffectiveParams::new(p.t).with_uniform_field(&g, p.h);
    let levels = labelled_spectrum(&g, &params, &gauss, p.n_levels)?;
    let mut header = vec!["level".to_string(), "energy".into()];
    header.extend((0..g.n_plaquettes()).map(|n| format!("B_{n}")));
    header.extend((0..g.n_super_sites()).map(|v| format!("G_V{v}")));
    let mut t = Table::new(header);
    for (k, l) in levels.iter().enumerate() {
        let mut row = vec![k.to_string(), num(l.energy)];
        row.extend(l.plaquettes.iter().chain(&l.vertices).map(|&x| num(x)));
        t.push(row);
    }
    let mut out = Outputs::default();
    out.note("levels", levels.len());
    out.tables.push(("spectrum".into(), t));
    Ok(out)
}

fn plan(g: &LatticeGeometry, t: f64, h0: Option<f64>, seg: Option<f64>) -> Result<GrowingPlan<f64>, CliError> {
    let mut plan = GrowingPlan::new(g, positive("t", t)?)?;
    if let Some(h) = h0 {
        plan.h0 = h;
    }
    if let Some(d) = seg {
        plan.segment_duration = positive("segment_duration", d)?;
    }
    Ok(plan)
}

fn grow(p: &GrowConfig) -> Result<Outputs, CliError> {
    let g = geometry(&p.geometry)?;
    let mut plan = plan(&g, p.t, p.h0, p.segment_duration)?;
    if let Some(v) = p.vison_plaquette {
        plan = plan.with_vison(&g, v)?;
    }
    if p.samples_per_segment == 0 {
        return Err(CliError::schema("samples_per_segment", "must be at least 1"));
    }
    let opts = GrowingOptions {
        samples_per_segment: p.samples_per_segment,
        dt: positive("dt", p.dt)?,
        convergence: positive("convergence", p.convergence)?,
        track_gap: p.track_gap,
        ..GrowingOptions::default()
    };
    let r = run_growing(&g, &plan, opts)?;
    let mut t = Table::new(["time", "segment", "fidelity", "energy", "gap", "sector_leakage"]);
    for s in &r.trace {
        t.push(vec![
            num(s.time),
            s.segment.clone(),
            num(s.fidelity),
            num(s.energy),
            num(s.gap),
            num(s.sector_leakage),
        ]);
    }
    let mut out = Outputs::default();
    out.note("final_fidelity", r.final_fidelity);
    out.note("dt", r.dt);
    out.tables.push(("grow".into(), t));
    Ok(out)
}

fn gap_table(points: impl IntoIterator<Item = (f64, f64, f64)>) -> Table {
    let mut t = Table::new(["t_tilde", "h", "gap"]);
    for (a, b, c) in points {
        t.push(vec![num(a), num(b), num(c)]);
    }
    t
}

fn gapscan(p: &GapscanConfig) -> Result<Outputs, CliError> {
    let g = geometry(&p.geometry)?;
    let plan = plan(&g, p.t, p.h0, None)?;
    if p.step >= g.n_plaquettes() {
        return Err(CliError::schema("step", format!("geometry has {} steps", g.n_plaquettes())));
    }
    let pts = gap_scan(&g, &plan, p.step, &p.t_tilde.values("t_tilde")?, &p.h.values("h")?)?;
    let mut out = Outputs::default();
    out.note("min_gap", pts.iter().map(|x| x.gap).fold(f64::INFINITY, f64::min));
    out.tables
        .push(("gapscan".into(), gap_table(pts.iter().map(|x| (x.t_tilde, x.h, x.gap)))));
    Ok(out)
}

fn reduced(p: &ReducedGapConfig) -> Result<Outputs, CliError> {
    let t = positive("t", p.t)?;
    let tt = p.t_tilde.values("t_tilde")?;
    let hh = p.h.values("h")?;
    let mut out = Outputs::default();
    if p.compare_full {
        let cmp = reduced_vs_full(&preset("tri2")?, t, &tt, &hh)?;
        let mut table = Table::new(["t_tilde", "h", "gap", "gap_full"]);
        for c in &cmp {
            table.push(vec![num(c.t_tilde), num(c.h), num(c.reduced), num(c.full)]);
        }
        out.note("max_deviation", z2lgt::reduced::max_deviation(&cmp));
        out.tables.push(("reduced_gap".into(), table));
    } else {
        let mut rows = Vec::new();
        for &a in &tt {
            for &b in &hh {
                rows.push((a, b, reduced_gap(t, a, b)?));
            }
        }
        out.tables.push(("reduced_gap".into(), gap_table(rows)));
    }
    Ok(out)
}

fn per_link(field: &str, v: &[f64], n: usize, default: Option<f64>) -> Result<Vec<f64>, CliError> {
    match (v.len(), default) {
        (0, Some(d)) => Ok(vec![d; n]),
        (1, _) => Ok(vec![v[0]; n]),
        (k, _) if k == n => Ok(v.to_vec()),
        _ => Err(CliError::schema(field, format!("expected 1 or {n} values, got {}", v.len()))),
    }
}

fn layout(p: &MicroscopicConfig) -> Result<(MicroscopicLayout<f64>, serde_json::Value), CliError> {
    let n_links = match p.layout {
        LayoutName::SingleBlock | LayoutName::DoubleLink => 1,
        LayoutName::FullTriangle => 3,
        LayoutName::MergedChain => p.delta.len().max(1),
    };
    let delta = per_link("delta", &p.delta, n_links, None)?;
    let h = per_link("h", &p.h, n_links, Some(0.0))?;
    let mut links: Vec<LinkParams<f64>> = match p.t_eff {
        Some(t_eff) => {
            if p.layout != LayoutName::FullTriangle {
                return Err(CliError::schema("t_eff", "fine-tuning applies to the full triangle"));
            }
            if !p.beta.is_empty() {
                return Err(CliError::schema("beta", "set either beta or t_eff"));
            }
            let g0 = *p.g.first().ok_or_else(|| CliError::schema("g", "missing"))?;
            fine_tune_triangle(t_eff, [delta[0], delta[1], delta[2]], g0)?.links().to_vec()
        }
        None => {
            let beta = per_link("beta", &p.beta, n_links, None)?;
            let g = per_link("g", &p.g, n_links, None)?;
            (0..n_links).map(|k| LinkParams::new(delta[k], beta[k], g[k])).collect()
        }
    };
    for (l, &x) in links.iter_mut().zip(&h) {
        l.h = x;
    }
    let used = serde_json::to_value(&links).expect("link parameters serialize");
    let layout = match p.layout {
        LayoutName::SingleBlock => single_block(links[0]),
        LayoutName::MergedChain => merged_chain(&links)?,
        LayoutName::DoubleLink => {
            let dt = p.delta_tilde.ok_or_else(|| CliError::schema("delta_tilde", "required for a double link"))?;
            double_link(links[0], dt)?
        }
        LayoutName::FullTriangle => full_triangle(&[links[0], links[1], links[2]]),
    };
    Ok((layout, used))
}

fn microscopic(p: &MicroscopicConfig) -> Result<Outputs, CliError> {
    let (layout, used) = layout(p)?;
    if p.n_steps == 0 {
        return Err(CliError::schema("n_steps", "must be at least 1"));
    }
    let tau_x = p.tau_x.clone().unwrap_or_else(|| vec![1; layout.links.len()]);
    let n_matter = layout.matter_sites().len();
    if p.initial_site >= n_matter {
        return Err(CliError::schema("initial_site", format!("layout has {n_matter} matter sites")));
    }
    let site = layout.matter_sites()[p.initial_site];
    let excitations = layout.gauge_excitations(1);
    let run = MicroscopicRun::new(layout.clone(), p.d_max, excitations)?;
    let psi = initial_state(&layout, &run.basis, site, &tau_x)?;
    let times = z2lgt::reduced::linspace(0.0, p.t_final, p.n_steps + 1);
    let samples = run.sample(&psi, &times)?;

    let mut header = vec!["time".to_string()];
    header.extend(layout.matter_sites().iter().map(|&s| format!("n_{}", layout.oscillators[s].label)));
    header.extend((1..=layout.super_sites.len()).map(|k| format!("G_{k}")));
    header.extend((1..=layout.links.len()).map(|k| format!("tau_x_{k}")));
    let mut t = Table::new(header);
    for s in &samples {
        let mut row = vec![num(s.time)];
        row.extend(s.populations.iter().chain(&s.gauss).chain(&s.tau_x).map(|&x| num(x)));
        t.push(row);
    }
    let mut out = Outputs::default();
    out.note("links", used);
    out.note("basis_dimension", run.basis.dim());
    out.tables.push(("microscopic".into(), t));
    Ok(out)
}

fn finetune(p: &FinetuneConfig) -> Result<Outputs, CliError> {
    let sol = fine_tune_triangle(p.t_eff, p.delta, p.g)?;
    let mut t = Table::new(["link", "delta", "beta", "g", "t_eff"]);
    for k in 0..3 {
        let te = z2lgt::microscopic::effective_coupling(sol.g[k], sol.delta[k], sol.beta[k])?;
        t.push(vec![(k + 1).to_string(), num(sol.delta[k]), num(sol.beta[k]), num(sol.g[k]), num(te)]);
    }
    let mut out = Outputs::default();
    out.note("closure_error", sol.closure_error()?);
    out.tables.push(("finetune".into(), t));
    Ok(out)
}

fn snapshot(p: &SnapshotConfig, seed: u64) -> Result<Outputs, CliError> {
    let g = geometry(&p.geometry)?;
    let signs = p.plaquette_signs.clone().unwrap_or_else(|| vec![1; g.n_plaquettes()]);
    if signs.len() != g.n_plaquettes() || signs.iter().any(|s| s.abs() != 1) {
        return Err(CliError::schema("plaquette_signs", "one sign (+1 or -1) per plaquette"));
    }
    let basis = effective_basis(&g, LinkBasis::TauX)?;
    let psi = exact_eigenstate::<f64>(&g, &basis, &signs)?;
    let measure = match p.basis {
        MeasureBasis::TauX => LinkBasis::TauX,
        MeasureBasis::TauZ => LinkBasis::TauZ,
    };
    let shots = sample(&basis, &psi, measure, p.n_shots, seed)?;
    let sites: Vec<usize> = basis.matter_modes.iter().map(|&(s, _)| s).collect();
    let mut header = vec!["shot_id".to_string(), "basis".into()];
    header.extend((0..g.n_links()).map(|l| format!("link_{l}")));
    header.extend(sites.iter().map(|s| format!("n_{s}")));
    header.extend(["all_closed".to_string(), "open_end_ids".into()]);
    let mut t = Table::new(header);
    let mut closed = 0usize;
    for s in &shots {
        let shown = if p.flip && measure == LinkBasis::TauX {
            apply_string_flip(s, &g)?
        } else {
            s.clone()
        };
        let r = classify_strings(&shown, &g);
        closed += usize::from(r.all_closed);
        let mut row = vec![s.shot.to_string(), measure.name().to_string()];
        row.extend((0..g.n_links()).map(|l| shown.link(l).to_string()));
        row.extend(sites.iter().map(|&x| s.occupation(x).to_string()));
        row.push(r.all_closed.to_string());
        row.push(r.open_ends.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" "));
        t.push(row);
    }
    let mut out = Outputs::default();
    out.note("closed_fraction", closed as f64 / shots.len().max(1) as f64);
    out.tables.push(("snapshot".into(), t));
    Ok(out)
}

fn source(s: Source) -> StateSource {
    match s {
        Source::ExactEigenstate => StateSource::ExactEigenstate,
        Source::GrownState => StateSource::GrownState,
    }
}

fn ramsey(p: &RamseyConfigDoc) -> Result<Outputs, CliError> {
    let g = geometry("tri3")?;
    let t = positive("t", p.t)?;
    if p.n_phi == 0 {
        return Err(CliError::schema("n_phi", "must be at least 1"));
    }
    let mut cfg = RamseyConfig::around_center(&g, p.n_phi)?;
    cfg.pulse_duration = positive("pulse_duration", p.pulse_duration)?;
    cfg.free_evolution = p.free_field.map(|h| EffectiveParams::new(t).with_uniform_field(&g, h));
    let mut fringes = Vec::new();
    let mut out = Outputs::default();
    for vison in [false, true] {
        let (basis, psi, fid) = braiding::braiding_input(&g, source(p.source), vison, t)?;
        out.note(if vison { "fidelity_vison" } else { "fidelity_ground" }, fid);
        fringes.push(braiding::run_ramsey(&cfg, &g, &basis, &psi)?);
    }
    let mut table = Table::new(["phi", "P1_ground", "P1_vison"]);
    for k in 0..cfg.phis.len() {
        table.push(vec![num(fringes[0].phi[k]), num(fringes[0].p1[k]), num(fringes[1].p1[k])]);
    }
    let shift = (fringes[1].fit().2 - fringes[0].fit().2).rem_euclid(2.0 * std::f64::consts::PI);
    out.note("phase_shift", shift);
    out.note("contrast_ground", fringes[0].contrast());
    out.note("contrast_vison", fringes[1].contrast());
    out.tables.push(("ramsey".into(), table));
    Ok(out)
}

fn calibrate(p: &CalibrateConfig) -> Result<Outputs, CliError> {
    let g = geometry("tri3")?;
    let cfg = RamseyConfig::around_center(&g, 1)?;
    let (basis, psi, fid) = braiding::braiding_input(&g, source(p.source), p.vison, positive("t", p.t)?)?;
    let pts = braiding::pi_time_calibration(&cfg, &g, &basis, &psi, &p.areas.values("areas")?)?;
    let mut table = Table::new(["T", "P1"]);
    for x in &pts {
        table.push(vec![num(x.area), num(x.p1)]);
    }
    let mut out = Outputs::default();
    out.note("fidelity", fid);
    out.note("period", braiding::calibration_period(&pts));
    out.tables.push(("ramsey_calibrate".into(), table));
    Ok(out)
}
