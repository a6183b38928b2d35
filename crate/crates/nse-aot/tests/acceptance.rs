//! Acceptance suite: one integration test per release criterion.
//!
//! Each test prints exactly one `criterion N (<name>): PASS/FAIL — detail`
//! line. A criterion that cannot hold at its stated parameters prints FAIL
//! with the measured quantitative gap and panics, so the suite reports the
//! shortfall honestly instead of weakening the check. Sub-experiments that
//! demonstrate the same machinery in a regime where it is attainable run
//! first, so a FAIL line always isolates the parameter regime rather than
//! the implementation.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use nse_aot::adaptive::{run_adaptive, uniform_boundaries, AdaptiveOptions};
use nse_aot::assimilation::{
    compute_data_bound, determining_modes_experiment, find_k_inf, mu_window, settling_time,
    tracking_report, DataBound, TrackingOptions, WindowPurpose,
};
use nse_aot::dynamics::{
    integrate, low_mode_forcing, steady_beltrami_forcing, stokes_steady_state, Integrator,
    NudgeConfig, RunKind, RunOptions, SolverConfig,
};
use nse_aot::error::Error;
use nse_aot::field::{beltrami_field, random_div_free_field, SpectralField};
use nse_aot::grid::{Dealias, GridSpec};
use nse_aot::interpolant::{apply_interpolant, decode, estimate_type1_constants, InterpolantSpec};
use nse_aot::io::{ObservationRecordReader, ObservationRecordWriter, OutputEntry, RecordHeader, RunManifest};
use nse_aot::operators::bilinear_term;

fn grid(n: usize) -> GridSpec {
    GridSpec::new(n, TAU, Dealias::TwoThirds).unwrap()
}

/// Collects sub-checks for one criterion and prints the single verdict line.
struct Criterion {
    number: u32,
    name: &'static str,
    notes: Vec<String>,
    failures: Vec<String>,
}

impl Criterion {
    fn new(number: u32, name: &'static str) -> Self {
        Self { number, name, notes: Vec::new(), failures: Vec::new() }
    }

    fn check(&mut self, ok: bool, detail: String) {
        if ok {
            self.notes.push(detail);
        } else {
            self.failures.push(detail);
        }
    }

    fn finish(self) {
        if self.failures.is_empty() {
            println!("criterion {} ({}): PASS — {}", self.number, self.name, self.notes.join("; "));
        } else {
            let gaps = self.failures.join("; ");
            let mut line = format!("criterion {} ({}): FAIL — {}", self.number, self.name, gaps);
            if !self.notes.is_empty() {
                line.push_str(&format!(" [verified sub-checks: {}]", self.notes.join("; ")));
            }
            println!("{line}");
            panic!("criterion {} ({}) failed: {}", self.number, self.name, gaps);
        }
    }
}

// ---------------------------------------------------------------------------
// Criterion 1 — single-shell viscous decay oracle and time-stepping order.
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_viscous_decay_oracle_and_time_order() {
    let mut crit = Criterion::new(1, "viscous decay oracle and time order");

    // Unforced single-shell flow at 32³: |u(t)| = e^{-νt}|u(0)| exactly in
    // the continuum, and the exponential factor integrates the shell without
    // truncation error, so the discrete answer must be at machine level.
    let g = grid(32);
    let u0 = beltrami_field(g, 1.0, 1.0, 1.0);
    let nu = 0.1;
    let l2_0 = u0.sobolev_norm(0.0);
    for dt in [1e-3, 5e-4] {
        let cfg = SolverConfig::new(g, nu, dt, 1.0, Integrator::IfRk4);
        let opts = RunOptions { emit_every: usize::MAX, ..Default::default() };
        let out = integrate(&u0, &cfg, RunKind::Reference, opts).unwrap();
        let l2_t = out.final_u.unwrap().sobolev_norm(0.0);
        let expected = (-nu * 1.0).exp() * l2_0;
        let rel = ((l2_t - expected) / expected).abs();
        crit.check(
            rel <= 1e-6,
            format!("|u(1)| relative error {rel:.2e} at dt = {dt:.0e} (tolerance 1e-6)"),
        );
    }

    // The decay oracle is exact at every dt, so the dt-halving ratio there is
    // 0/0 noise; the scheme's order is measured by self-convergence on a
    // multi-shell nonlinear flow where truncation error is visible.
    let g16 = grid(16);
    let v0 = random_div_free_field(g16, 9, 1.5, 3).unwrap().scaled(2.0);
    let run_at = |dt: f64| {
        let mut cfg = SolverConfig::new(g16, 0.05, dt, 0.1, Integrator::IfRk4);
        cfg.cfl = 10.0;
        integrate(&v0, &cfg, RunKind::Reference, RunOptions::default())
            .unwrap()
            .final_u
            .unwrap()
    };
    let reference = run_at(2.5e-4);
    let e1 = run_at(4e-3).sub(&reference).sobolev_norm(0.0);
    let e2 = run_at(2e-3).sub(&reference).sobolev_norm(0.0);
    let order = (e1 / e2).log2();
    crit.check(
        (3.8..=4.2).contains(&order),
        format!("halving dt shrinks the error by 2^{order:.2} (need 2^(4±0.2))"),
    );
    crit.finish();
}

// ---------------------------------------------------------------------------
// Criterion 2 — advective energy orthogonality, discrete energy balance, and
// the forced-flow energy cap after the transient.
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_energy_identities_and_grashof_settling() {
    let mut crit = Criterion::new(2, "energy identities and settling bound");
    let g = grid(24);

    // ⟨B(u,w), w⟩ = 0 discretely for dealiased divergence-free pairs.
    let spectra = [0.5, 1.5, 3.0];
    let kmaxes = [3i64, 6, 8];
    let mut worst_rel = 0.0f64;
    let mut violations = 0usize;
    for i in 0..50u64 {
        let u = random_div_free_field(g, 100 + i, spectra[(i % 3) as usize], kmaxes[(i % 3) as usize]).unwrap();
        let w = random_div_free_field(g, 200 + i, spectra[((i + 1) % 3) as usize], kmaxes[((i + 1) % 3) as usize]).unwrap();
        let ip = bilinear_term(&u, &w).inner_product(&w);
        let scale = u.sobolev_norm(0.0) * w.sobolev_norm(1.0) * w.sobolev_norm(0.0);
        let rel = ip.abs() / scale;
        worst_rel = worst_rel.max(rel);
        if rel > 1e-10 {
            violations += 1;
        }
    }
    crit.check(
        violations == 0,
        format!("advective flux orthogonality over 50 random pairs: worst relative {worst_rel:.2e} (tolerance 1e-10)"),
    );

    // Forced run from a state above the asymptotic energy level: the
    // discrete energy balance must close to quadrature accuracy, and the
    // flow must settle under |u|² ≤ 2G²ν²λ₁ and stay within +5% of it.
    let nu = 0.5;
    let f_norm = 1.0;
    let f = low_mode_forcing(g, 7, 1.0, 2, f_norm).unwrap();
    let u_start = {
        let v = random_div_free_field(g, 11, 1.5, 3).unwrap();
        let n0 = v.sobolev_norm(0.0);
        v.scaled(4.0 / n0)
    };
    let cfg = SolverConfig::new(g, nu, 5e-3, 4.0, Integrator::IfRk4).with_forcing(f);
    let out = integrate(&u_start, &cfg, RunKind::Reference, RunOptions::default()).unwrap();

    let max_half_e = out.series.rows.iter().fold(0.0f64, |m, r| m.max(0.5 * r.l2_u * r.l2_u));
    let worst_resid = out.series.rows.iter().fold(0.0f64, |m, r| m.max(r.energy_residual.abs()));
    let scale = max_half_e.max(1.0);
    crit.check(
        worst_resid <= 1e-6 * scale,
        format!("energy balance residual sup {worst_resid:.2e} ≤ 1e-6 × {scale:.2} over a forced run"),
    );

    let bound = DataBound::from_sup(0.0, (0.0, 4.0), f_norm, nu, g.lambda1());
    let gr = bound.grashof();
    let energy_cap = 2.0 * gr * gr * nu * nu * g.lambda1();
    match settling_time(&out.series, f_norm, nu, g.lambda1()) {
        Some(t_settle) => {
            let worst_frac = out
                .series
                .rows
                .iter()
                .filter(|r| r.time >= t_settle)
                .fold(0.0f64, |m, r| m.max(r.l2_u * r.l2_u / energy_cap));
            crit.check(
                worst_frac <= 1.05,
                format!(
                    "G = {gr}: settled under |u|² ≤ {energy_cap} at t = {t_settle:.3}, post-transient sup fraction {worst_frac:.3} ≤ 1.05"
                ),
            );
        }
        None => crit.check(
            false,
            format!("flow never settled under the energy cap 2G²ν²λ₁ = {energy_cap}"),
        ),
    }
    crit.finish();
}

// ---------------------------------------------------------------------------
// Criterion 3 — interpolant bounds: modal contraction/tail with zero
// violations, volume-constant stability across grids, exact annihilation of
// constants.
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_interpolant_type1_bounds() {
    let mut crit = Criterion::new(3, "interpolant type-1 bounds");
    let g = grid(24);

    // Shell projection: |Pv| ≤ |v| and |Pv − v| ≤ Λ^{-1/2}‖v‖, no violations
    // allowed over 200 random fields spanning cutoffs and spectra.
    let cutoffs = [3.0, 9.0, 16.0, 27.0, 48.0, 75.0, 108.0, 147.0, 192.0];
    let spectra = [0.5, 1.0, 1.5, 2.0, 3.0];
    let kmaxes = [2i64, 3, 4, 6, 8];
    let mut violations = 0usize;
    for i in 0..200u64 {
        let v = random_div_free_field(g, 1000 + i, spectra[(i % 5) as usize], kmaxes[(i % 5) as usize]).unwrap();
        let lam = cutoffs[(i % 9) as usize];
        let p = apply_interpolant(&InterpolantSpec::modal(lam), &v).unwrap();
        if p.sobolev_norm(0.0) > v.sobolev_norm(0.0) * (1.0 + 1e-12) {
            violations += 1;
        }
        if p.sub(&v).sobolev_norm(0.0) > v.sobolev_norm(1.0) / lam.sqrt() * (1.0 + 1e-12) {
            violations += 1;
        }
    }
    crit.check(
        violations == 0,
        format!("modal contraction and tail bounds over 200 fields × 9 cutoffs: {violations} violations (tolerance 1e-12 relative)"),
    );

    // Volume-element constants must be a property of the observation
    // operator, not of the grid it is sampled on.
    let mut stable = true;
    let mut details = Vec::new();
    for denom in [4.0f64, 8.0] {
        let h = TAU / denom;
        let mut per_grid = Vec::new();
        for n in [32usize, 64] {
            let mut spec = InterpolantSpec::volume(h);
            let (c1, c2, _) = estimate_type1_constants(&mut spec, &grid(n), 100, 4242).unwrap();
            per_grid.push((c1, c2));
        }
        let (a1, a2) = per_grid[0];
        let (b1, b2) = per_grid[1];
        let d1 = ((a1 - b1) / a1).abs();
        let d2 = ((a2 - b2) / a2).abs();
        if d1 > 0.20 || d2 > 0.20 {
            stable = false;
        }
        details.push(format!(
            "h = L/{denom:.0}: c1 {a1:.3}→{b1:.3} ({:.1}%), c2 {a2:.3}→{b2:.3} ({:.1}%)",
            d1 * 100.0,
            d2 * 100.0
        ));
    }
    crit.check(stable, format!("volume constants 32³→64³ within ±20% [{}]", details.join("; ")));

    // Mean-corrected cell averages annihilate constants exactly (bitwise).
    let mut exact = true;
    for (n, denom) in [(32usize, 4.0f64), (64, 8.0)] {
        let gn = grid(n);
        let mut c = SpectralField::zeros(gn);
        for comp in 0..3 {
            c.coeffs[comp][[0, 0, 0]] = Complex64::new(0.7 - 0.2 * comp as f64, 0.0);
        }
        let ih = apply_interpolant(&InterpolantSpec::volume(TAU / denom), &c).unwrap();
        if ih.sobolev_norm(0.0) != 0.0 {
            exact = false;
        }
    }
    crit.check(exact, "volume interpolant of a constant field is exactly zero".to_string());
    crit.finish();
}

// ---------------------------------------------------------------------------
// Criterion 4 — feedback-gain window arithmetic: hand values exactly, then
// monotonicity/feasibility invariants over 1000 seeded draws.
// ---------------------------------------------------------------------------

fn bound_with_m(m: f64, nu: f64) -> DataBound {
    DataBound { value: 0.0, window: (0.0, 1.0), m, f_norm: 0.0, nu, lambda1: 1.0, t_star: None }
}

#[test]
fn criterion_4_gain_window_arithmetic() {
    let mut crit = Criterion::new(4, "feedback gain window arithmetic");

    // Modal window at cutoff 16 with ν = 1, λ₁ = 1, M = 1:
    // [ν·max(2M⁴/ν⁴, λ₁), ν·Λ/4] = [2, 4].
    let w1 = mu_window(&InterpolantSpec::modal(16.0), &bound_with_m(1.0, 1.0), WindowPurpose::Regular).unwrap();
    crit.check(
        w1.lower == 2.0 && w1.upper == 4.0 && w1.feasible,
        format!("modal hand window [{}, {}] = [2, 4]", w1.lower, w1.upper),
    );

    // Weak window for cell side h = 1 with c = 1: [νλ₁, ν/(4h²)] = [1, 1/4],
    // empty — reported as infeasible, not as an error.
    let mut sv = InterpolantSpec::volume(1.0);
    sv.c1 = Some(1.0);
    sv.c2 = Some(1.0);
    let w2 = mu_window(&sv, &bound_with_m(0.0, 1.0), WindowPurpose::Weak).unwrap();
    crit.check(
        w2.lower == 1.0 && w2.upper == 0.25 && !w2.feasible,
        format!("weak hand window [{}, {}] empty and flagged infeasible", w2.lower, w2.upper),
    );

    // Boundary case: modal cutoff 4 at ν = 0.1 with negligible data gives
    // the single admissible point [νλ₁, νΛ/4] = [0.1, 0.1].
    let b3 = DataBound::from_sup(0.01, (0.0, 1.0), 0.0, 0.1, 1.0);
    let w3 = mu_window(&InterpolantSpec::modal(4.0), &b3, WindowPurpose::Regular).unwrap();
    crit.check(
        w3.lower == 0.1 && w3.upper == 0.1 && w3.feasible,
        format!("boundary hand window [{}, {}] feasible as a single point", w3.lower, w3.upper),
    );

    // Invariants over 1000 seeded draws: a larger data bound or a coarser
    // observation never loosens a window, the feasibility flag is exactly
    // the interval test, and the recommended gain lies inside.
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    let mut bad = 0usize;
    for _ in 0..1000 {
        let nu = rng.random_range(0.05..5.0);
        let lambda1 = rng.random_range(0.25..4.0);
        let f_norm = rng.random_range(0.0..10.0);
        let sup = rng.random_range(0.0..10.0);
        let sup_hi = sup + rng.random_range(0.0..5.0);
        let h = rng.random_range(0.05..2.0);
        let h_hi = h * rng.random_range(1.0..4.0);
        let lam = rng.random_range(1.0..1000.0);
        let c1 = rng.random_range(1.0..4.0);
        let c2 = rng.random_range(1.0..4.0);

        let b = DataBound::from_sup(sup, (0.0, 1.0), f_norm, nu, lambda1);
        let b_hi = DataBound::from_sup(sup_hi, (0.0, 1.0), f_norm, nu, lambda1);
        let modal = InterpolantSpec::modal(lam);
        let mut vol = InterpolantSpec::volume(h);
        vol.c1 = Some(c1);
        vol.c2 = Some(c2);
        let mut vol_hi = InterpolantSpec::volume(h_hi);
        vol_hi.c1 = Some(c1);
        vol_hi.c2 = Some(c2);

        let wm = mu_window(&modal, &b, WindowPurpose::Regular).unwrap();
        let wm_hi = mu_window(&modal, &b_hi, WindowPurpose::Regular).unwrap();
        if wm_hi.lower < wm.lower || wm_hi.upper != wm.upper {
            bad += 1;
        }
        let wv = mu_window(&vol, &b, WindowPurpose::Regular).unwrap();
        let wv_hi = mu_window(&vol_hi, &b, WindowPurpose::Regular).unwrap();
        if wv_hi.upper > wv.upper || wv_hi.lower != wv.lower {
            bad += 1;
        }
        let ww = mu_window(&vol, &b, WindowPurpose::Weak).unwrap();
        let ww_hi = mu_window(&vol_hi, &b, WindowPurpose::Weak).unwrap();
        if ww_hi.upper > ww.upper || ww_hi.lower != ww.lower {
            bad += 1;
        }
        for w in [&wm, &wm_hi, &wv, &wv_hi, &ww, &ww_hi] {
            if w.feasible != (w.lower <= w.upper) {
                bad += 1;
            }
            match w.recommended_mu() {
                Some(mu) => {
                    if !w.feasible || mu < w.lower * (1.0 - 1e-12) || mu > w.upper * (1.0 + 1e-12) {
                        bad += 1;
                    }
                }
                None => {
                    if w.feasible {
                        bad += 1;
                    }
                }
            }
        }
    }
    crit.check(bad == 0, format!("window monotonicity and feasibility invariants over 1000 draws: {bad} violations"));
    crit.finish();
}

// ---------------------------------------------------------------------------
// Criterion 5 — nudged twin tracking through the full observed-data pipeline
// (record → cutoff scan → window → gain → twin → envelope), modal and volume.
// ---------------------------------------------------------------------------

/// Record a reference run, scan the record for the smallest adequate modal
/// cutoff, derive the gain from the window, rerun as a live twin, and verify
/// the tracking guarantee. `crit` failures carry the quantitative gap.
#[allow(clippy::too_many_arguments)]
fn modal_tracking_pipeline(
    crit: &mut Criterion,
    label: &str,
    g: GridSpec,
    f: &SpectralField,
    u0: &SpectralField,
    nu: f64,
    dt: f64,
    t_end: f64,
    record_every: usize,
) {
    let f_norm = f.sobolev_norm(0.0);
    let cfg = SolverConfig::new(g, nu, dt, t_end, Integrator::IfRk2).with_forcing(f.clone());

    // Phase A: reference run, recording full-spectrum observation blocks.
    let record_spec = InterpolantSpec::modal(f64::INFINITY);
    let mut blocks: Vec<(f64, Vec<u8>)> = Vec::new();
    {
        let mut sink = |t: f64, payload: &[u8]| {
            blocks.push((t, payload.to_vec()));
            Ok(())
        };
        let opts = RunOptions {
            emit_every: usize::MAX,
            obs_every: record_every,
            obs_sink: Some(&mut sink),
            record_spec: Some(record_spec.clone()),
            ..Default::default()
        };
        integrate(u0, &cfg, RunKind::Reference, opts).unwrap();
    }

    // Phase B: smallest cutoff whose own observed data passes the condition,
    // evaluated from the recorded blocks alone.
    let scan = find_k_inf(
        blocks.iter().map(|(t, p)| decode(&record_spec, g, p).map(|field| (*t, field))),
        g,
        nu,
        f_norm,
        1.0,
        (0.0, t_end),
    )
    .unwrap();

    let lambda_star = match scan.lambda_star {
        Some(l) => l,
        None => {
            crit.check(false, format!("{label}: {}", scan.verdict));
            return;
        }
    };
    let point = scan.curve.iter().find(|p| p.lambda_k == lambda_star).unwrap();
    let bound = DataBound::from_sup(point.sup_h1, (0.0, t_end), f_norm, nu, g.lambda1());
    let spec = InterpolantSpec::modal(lambda_star);
    let window = mu_window(&spec, &bound, WindowPurpose::Regular).unwrap();
    if !window.feasible {
        crit.check(
            false,
            format!("{label}: window [{:.3e}, {:.3e}] empty at cutoff λ = {lambda_star}", window.lower, window.upper),
        );
        return;
    }
    let mu = window.recommended_mu().unwrap();

    // Phase C: live twin from w(0) = 0 under the derived gain.
    let nudge = NudgeConfig { mu, interpolant: spec };
    let out = integrate(
        u0,
        &cfg,
        RunKind::LiveTwin { nudge, w0: SpectralField::zeros(g) },
        RunOptions::default(),
    )
    .unwrap();
    let report = tracking_report(&out.series, mu, Some(&bound), TrackingOptions::default()).unwrap();
    crit.check(
        report.envelope_ok == Some(true),
        format!(
            "{label}: cutoff λ* = {lambda_star}, μ = {mu:.1} from [{:.1}, {:.1}]; squared-error envelope at rate μ/2 held above the floor ({} samples, fitted rate {:.1} vs guaranteed {:.1})",
            window.lower,
            window.upper,
            report.samples_above_floor,
            report.fitted_rate.unwrap_or(f64::NAN),
            report.guaranteed_rate
        ),
    );
    crit.check(
        report.h1_bound_ok == Some(true),
        format!("{label}: sup‖w‖ = {:.3} ≤ M = {:.3}", report.sup_h1_w, bound.m),
    );
}

/// Volume-observation twin: record cell-average observations from a
/// reference run, window the gain from their H¹ sups, rerun as a live twin.
#[allow(clippy::too_many_arguments)]
fn volume_tracking_leg(
    crit: &mut Criterion,
    label: &str,
    spec: InterpolantSpec,
    g: GridSpec,
    f: &SpectralField,
    u0: &SpectralField,
    nu: f64,
    dt: f64,
    t_end: f64,
    record_every: usize,
) {
    let f_norm = f.sobolev_norm(0.0);
    let cfg = SolverConfig::new(g, nu, dt, t_end, Integrator::IfRk2).with_forcing(f.clone());

    // Phase A: observed-data H¹ samples from a reference run.
    let mut samples: Vec<(f64, f64)> = Vec::new();
    {
        let mut sink = |t: f64, payload: &[u8]| {
            let obs = decode(&spec, g, payload)?;
            samples.push((t, obs.sobolev_norm(1.0)));
            Ok(())
        };
        let opts = RunOptions {
            emit_every: usize::MAX,
            obs_every: record_every,
            obs_sink: Some(&mut sink),
            record_spec: Some(spec.clone()),
            ..Default::default()
        };
        integrate(u0, &cfg, RunKind::Reference, opts).unwrap();
    }

    let bound = compute_data_bound(samples.iter().copied(), (0.0, t_end), f_norm, nu, g.lambda1()).unwrap();
    let window = mu_window(&spec, &bound, WindowPurpose::Regular).unwrap();
    if !window.feasible {
        crit.check(
            false,
            format!(
                "{label}: tracking window [{:.3e}, {:.3e}] is empty (lower exceeds upper by ×{:.1e}) with c = {:.2}, M = {:.2}",
                window.lower,
                window.upper,
                window.lower / window.upper,
                spec.worst_case_c().unwrap(),
                bound.m
            ),
        );
        return;
    }
    let mu = window.recommended_mu().unwrap();

    let nudge = NudgeConfig { mu, interpolant: spec };
    let out = integrate(
        u0,
        &cfg,
        RunKind::LiveTwin { nudge, w0: SpectralField::zeros(g) },
        RunOptions::default(),
    )
    .unwrap();
    let report = tracking_report(&out.series, mu, Some(&bound), TrackingOptions::default()).unwrap();
    crit.check(
        report.envelope_ok == Some(true),
        format!(
            "{label}: μ = {mu:.1} from [{:.1}, {:.1}] with μ·dt = {:.3}; envelope held ({} samples above floor, fitted rate {:.1} vs guaranteed {:.1})",
            window.lower,
            window.upper,
            mu * dt,
            report.samples_above_floor,
            report.fitted_rate.unwrap_or(f64::NAN),
            report.guaranteed_rate
        ),
    );
    crit.check(
        report.h1_bound_ok == Some(true),
        format!("{label}: sup‖w‖ = {:.3} ≤ M = {:.3}", report.sup_h1_w, bound.m),
    );
}

#[test]
fn criterion_5_nudged_twin_tracking_modal_and_volume() {
    let mut crit = Criterion::new(5, "nudged twin tracking");

    // Pipeline demonstrations in a regime the data admit: the same record →
    // scan → window → twin chain that the stated regime requires. The modal
    // demo forces a steady single-shell flow, so the observations are
    // time-constant and the discrete twin can be held against the
    // continuous-time envelope without a zero-order-hold error floor.
    let g48 = grid(48);
    let amp = 0.42 / (3.0 * g48.volume()).sqrt();
    let (f_b, u_b) = steady_beltrami_forcing(g48, 1.0, amp, amp, amp);
    modal_tracking_pipeline(
        &mut crit,
        "modal pipeline at G ≈ 0.4 (48³, steady truth)",
        g48,
        &f_b,
        &u_b,
        1.0,
        1e-3,
        0.5,
        20,
    );

    // Cell side L/30 keeps the window's upper edge ν/(4ch²) above its
    // Poincaré floor νλ₁; constants are estimated on the run grid itself.
    let g60 = grid(60);
    let mut moll = InterpolantSpec::mollified_volume(TAU / 30.0, 0.5);
    let (c1, c2, c3) = estimate_type1_constants(&mut moll, &g60, 100, 9001).unwrap();
    let f_v = low_mode_forcing(g60, 37, 1.0, 2, 40.0).unwrap();
    let u_v = stokes_steady_state(&f_v, 20.0);
    volume_tracking_leg(
        &mut crit,
        &format!("volume pipeline at G = 0.1 (60³, h = L/30, c1 = {c1:.2}, c2 = {c2:.2}, c3 = {c3:.2})"),
        moll,
        g60,
        &f_v,
        &u_v,
        20.0,
        5e-3,
        0.6,
        5,
    );

    // The stated regime, G ≈ 50 at 48³. The observed-data cutoff condition
    // scales like M⁴/ν⁴ ≥ (8|f|²/(ν²λ₁))²/ν⁴ = 4096·G⁴λ₁² regardless of ν,
    // so the required eigenvalue (~10⁹·λ₁ and up) exceeds the largest
    // resolvable one at 48³ (768·λ₁) by six-plus orders of magnitude; the
    // legs below report that gap from the measured data rather than
    // asserting a vacuous pass.
    let f50 = low_mode_forcing(g48, 31, 1.0, 2, 50.0).unwrap();
    let u50 = stokes_steady_state(&f50, 1.0);
    modal_tracking_pipeline(&mut crit, "modal leg at G ≈ 50 (48³)", g48, &f50, &u50, 1.0, 2e-3, 0.3, 10);

    let mut vol_red = InterpolantSpec::volume(TAU / 12.0);
    vol_red.c1 = Some(1.0); // the most favorable admissible constants:
    vol_red.c2 = Some(1.0); // any measured c only narrows the window further
    volume_tracking_leg(
        &mut crit,
        "volume leg at G ≈ 50 (48³, h = L/12, c = 1)",
        vol_red,
        g48,
        &f50,
        &u50,
        1.0,
        2e-3,
        0.3,
        5,
    );

    crit.finish();
}

// ---------------------------------------------------------------------------
// Criterion 6 — adaptive gain schedule: degenerate schedule ≡ constant-μ run
// bitwise, feasible multi-interval schedule verified, stated G ≈ 50 regime
// reported with its gap.
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_adaptive_gain_schedule() {
    let mut crit = Criterion::new(6, "adaptive gain schedule");
    let g = grid(16);

    // Degenerate single-interval schedule must reproduce a constant-μ twin
    // exactly, bit for bit.
    let amp = (0.04f64 / (3.0 * g.volume())).sqrt();
    let u0 = beltrami_field(g, amp, amp, amp);
    let mut cfg = SolverConfig::new(g, 0.3, 2e-3, 0.05, Integrator::IfRk2);
    cfg.cfl = 10.0;
    let single = run_adaptive(&u0, &cfg, &[0.0, 0.05], 27.0, AdaptiveOptions::default()).unwrap();
    let mu0 = single.schedule.intervals[0].mu;
    let plain = integrate(
        &u0,
        &cfg,
        RunKind::LiveTwin {
            nudge: NudgeConfig { mu: mu0, interpolant: InterpolantSpec::modal(27.0) },
            w0: SpectralField::zeros(g),
        },
        RunOptions::default(),
    )
    .unwrap();
    crit.check(
        single.final_w == plain.final_w.unwrap() && single.final_u == plain.final_u.unwrap(),
        format!("single-interval schedule matches a constant-μ twin bitwise (μ = {mu0:.3})"),
    );

    // Feasible two-interval schedule on a decaying flow: assumption, per-
    // interval envelope, and the H¹ cap all verified from the run itself.
    let amp2 = (0.038f64 / (3.0 * g.volume())).sqrt();
    let v0 = beltrami_field(g, amp2, amp2, amp2);
    let mut cfg2 = SolverConfig::new(g, 0.3, 2e-3, 0.8, Integrator::IfRk2);
    cfg2.cfl = 10.0;
    let opts = AdaptiveOptions { emit_every: 10, ..Default::default() };
    match run_adaptive(&v0, &cfg2, &[0.0, 0.4, 0.8], 27.0, opts) {
        Ok(out) => {
            let mus: Vec<String> = out.schedule.intervals.iter().map(|iv| format!("{:.3}", iv.mu)).collect();
            crit.check(
                out.assumption.ok && out.envelope_ok && out.bound_ok,
                format!(
                    "two-interval schedule verified (assumption margin {:.2}, gains [{}], envelope and H¹ cap held)",
                    out.assumption.margin,
                    mus.join(", ")
                ),
            );
        }
        Err(e) => crit.check(false, format!("feasible two-interval schedule aborted: {e}")),
    }

    // The stated regime: the G ≈ 50 flow over four uniform intervals with
    // the full resolvable cutoff. Interval planning needs
    // ν·max(2cM⁴/ν⁴, λ₁) ≤ νλ_K/8 and M⁴ alone exceeds that cap by orders
    // of magnitude (same forcing floor as criterion 5).
    let g48 = grid(48);
    let f50 = low_mode_forcing(g48, 31, 1.0, 2, 50.0).unwrap();
    let u50 = stokes_steady_state(&f50, 1.0);
    let cfg50 = SolverConfig::new(g48, 1.0, 2e-3, 0.4, Integrator::IfRk2).with_forcing(f50);
    let boundaries = uniform_boundaries(0.4, 4);
    match run_adaptive(&u50, &cfg50, &boundaries, g48.max_eigenvalue(), AdaptiveOptions::default()) {
        Ok(out) => {
            crit.check(
                out.assumption.ok && out.envelope_ok && out.bound_ok,
                format!(
                    "G ≈ 50 four-interval schedule verified (assumption margin {:.2})",
                    out.assumption.margin
                ),
            );
        }
        Err(Error::Infeasible(msg)) => crit.check(false, format!("G ≈ 50 leg: {msg}")),
        Err(e) => crit.check(false, format!("G ≈ 50 leg aborted: {e}")),
    }
    crit.finish();
}

// ---------------------------------------------------------------------------
// Criterion 7 — low modes determine the flow: two states differing in a
// single high shell converge observably, then fully, under one forcing.
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_determining_low_modes() {
    let mut crit = Criterion::new(7, "determining low modes");
    let g = grid(32);
    let nu = 2.0;
    // Spectrum exponent −2 weights the forcing toward its highest shells,
    // keeping the observed H¹ sups (and hence the cutoff condition) small.
    let f = low_mode_forcing(g, 21, -2.0, 2, 1.5).unwrap();
    let u1 = stokes_steady_state(&f, nu);

    // Perturb one kept high shell: |k|² = 136 > Λ = 108, divergence-free
    // (k·e = 0) and Hermitian, with |δ| = 1e-4 in L².
    let mut u2 = u1.clone();
    {
        let k = (10i64, 6i64, 0i64);
        let e = [6.0, -10.0, 0.0];
        let e_norm = 136.0f64.sqrt();
        let amp = 1e-4 / (2.0 * g.volume()).sqrt();
        let pos = (g.index_of(k.0), g.index_of(k.1), g.index_of(k.2));
        let neg = (g.index_of(-k.0), g.index_of(-k.1), g.index_of(-k.2));
        for comp in 0..3 {
            let v = Complex64::new(amp * e[comp] / e_norm, 0.0);
            u2.coeffs[comp][[pos.0, pos.1, pos.2]] += v;
            u2.coeffs[comp][[neg.0, neg.1, neg.2]] += v.conj();
        }
    }

    let cfg = SolverConfig::new(g, nu, 5e-3, 2.0, Integrator::IfRk2).with_forcing(f);
    let report = determining_modes_experiment(&cfg, &u1, &u2, 108.0, 1e-6, 1e-3, 1).unwrap();
    let full0 = report.series.first().unwrap().2;

    crit.check(
        report.hypotheses_met,
        "cutoff condition verified on both trajectories' own observed data".to_string(),
    );
    match (report.t_obs_cross, report.t_full_cross) {
        (Some(t_obs), Some(t_full)) => crit.check(
            t_full <= 2.0 && report.verdict.starts_with("determining"),
            format!(
                "observed gap below 1e-6 from t = {t_obs:.3}; full gap below 1e-3 × {full0:.1e} at t = {t_full:.3}{}",
                report.implied_rate.map(|r| format!(" (implied rate {r:.1})")).unwrap_or_default()
            ),
        ),
        _ => crit.check(false, format!("no crossing before the horizon: {}", report.verdict)),
    }
    crit.finish();
}

// ---------------------------------------------------------------------------
// Criterion 8 — record/replay fidelity: replayed assimilation is bitwise
// identical to live assimilation; manifests and record headers round-trip.
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_record_replay_fidelity() {
    let mut crit = Criterion::new(8, "record/replay fidelity");
    let dir = std::env::temp_dir().join(format!("nse-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();

    let g = grid(16);
    let nu = 0.5;
    let (f, u0) = steady_beltrami_forcing(g, nu, 0.05, 0.05, 0.05);
    let cfg = SolverConfig::new(g, nu, 2e-3, 0.1, Integrator::IfRk2).with_forcing(f.clone());
    let spec = InterpolantSpec::modal(9.0);
    let w0 = random_div_free_field(g, 3, 1.5, 3).unwrap().scaled(0.1);

    // Live twin, recording every refresh (dt_obs = dt).
    let path = dir.join("obs.nserec");
    let header = RecordHeader {
        spec: spec.clone(),
        dt_obs: cfg.dt,
        grid: g,
        f_norm: f.sobolev_norm(0.0),
        nu,
        run_hash: "acceptance".into(),
    };
    let live = {
        let mut writer = ObservationRecordWriter::create(&path, &header).unwrap();
        let mut sink = |t: f64, payload: &[u8]| writer.append(t, payload);
        let opts = RunOptions { obs_sink: Some(&mut sink), ..Default::default() };
        integrate(
            &u0,
            &cfg,
            RunKind::LiveTwin {
                nudge: NudgeConfig { mu: 8.0, interpolant: spec.clone() },
                w0: w0.clone(),
            },
            opts,
        )
        .unwrap()
    };

    // Replay the record into a fresh twin: identical bits out.
    let reader = ObservationRecordReader::open(&path).unwrap();
    crit.check(reader.header() == &header, "record header round-trips".to_string());
    let mut blocks = reader.blocks().unwrap();
    let replay = integrate(
        &SpectralField::zeros(g),
        &cfg,
        RunKind::Replay {
            nudge: NudgeConfig { mu: 8.0, interpolant: spec },
            w0,
            blocks: &mut blocks,
            hold_dt: header.dt_obs,
        },
        RunOptions::default(),
    )
    .unwrap();
    let w_live = live.final_w.unwrap();
    let w_replay = replay.final_w.unwrap();
    crit.check(
        w_live == w_replay,
        format!("replayed nudged state is bitwise identical to live after {} steps", replay.steps_taken),
    );

    // Manifest round-trip, including outputs and the config hash.
    let mut config = BTreeMap::new();
    config.insert("grid.n".to_string(), "16".to_string());
    config.insert("solver.nu".to_string(), "0.5".to_string());
    let mut manifest = RunManifest::new("assimilate", config, Some(7));
    manifest.outputs.push(OutputEntry { path: "obs.nserec".into(), kind: "observation-record".into() });
    let mpath = dir.join("run.json");
    manifest.save(&mpath).unwrap();
    let loaded = RunManifest::load(&mpath).unwrap();
    crit.check(loaded == manifest, "manifest round-trips".to_string());

    std::fs::remove_dir_all(&dir).ok();
    crit.finish();
}
