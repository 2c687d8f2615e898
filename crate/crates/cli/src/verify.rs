//! The kernel and intervention property suite behind `acia verify`.

use acia_core::causal_space::{
    check_measure, marginal_e_invariance_gap, observational_kernel, per_environment_kernel,
    verify_anti_causal_independence, Event, FiniteScm, Omega, ProductCausalSpace,
};
use acia_core::intervention::{interventional_kernel, soft_blend, verify_invariance_criteria, Intervention, Target};
use acia_core::rng::rng_for;
use acia_core::tol;
use serde::{Deserialize, Serialize};

use crate::manifest::TOOL_VERSION;

const RANDOM_SCMS: u64 = 20;
const RANDOM_STREAM: u64 = 0x7e21;
const MIN_DEPENDENCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub scm: String,
    pub pass: bool,
    pub value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub tool_version: String,
    pub pass: bool,
    pub n_checks: usize,
    pub n_failed: usize,
    pub checks: Vec<Check>,
}

struct Collector<'a> {
    scm: &'a str,
    out: Vec<Check>,
}

impl Collector<'_> {
    /// `value <= tolerance`.
    fn at_most(&mut self, name: &str, value: f64, tolerance: f64) {
        self.out.push(Check {
            name: name.into(),
            scm: self.scm.into(),
            pass: value <= tolerance,
            value,
            tolerance,
        });
    }

    fn flag(&mut self, name: &str, pass: bool, value: f64) {
        self.out.push(Check { name: name.into(), scm: self.scm.into(), pass, value, tolerance: 0.0 });
    }

    fn error(&mut self, name: &str, err: acia_core::Error) {
        self.out.push(Check {
            name: format!("{name}: {err}"),
            scm: self.scm.into(),
            pass: false,
            value: 0.0,
            tolerance: 0.0,
        });
    }
}

fn subsets(n: usize) -> Vec<Vec<usize>> {
    (1u32..(1 << n)).map(|m| (0..n).filter(|&i| m >> i & 1 == 1).collect()).collect()
}

fn generic_checks(c: &mut Collector<'_>, scm: &FiniteScm) {
    let ne = scm.n_envs();
    let all: Vec<usize> = (0..ne).collect();
    // Every conditioning set for small environment supports, otherwise singletons and the full set.
    let sets = if ne <= 6 { subsets(ne) } else { (0..ne).map(|e| vec![e]).chain([all.clone()]).collect() };
    let (mut measure, mut invariance) = (0.0_f64, 0.0_f64);
    for s in &sets {
        for k in [observational_kernel(scm, s), per_environment_kernel(scm, s)] {
            match k.and_then(|k| check_measure(&k)) {
                Ok(v) => measure = measure.max(v),
                Err(e) => return c.error("kernel-measure", e),
            }
        }
        match observational_kernel(scm, s).and_then(|k| marginal_e_invariance_gap(&k)) {
            Ok(v) => invariance = invariance.max(v),
            Err(e) => return c.error("marginalized-constant-in-e", e),
        }
    }
    c.at_most("kernel-measure", measure, tol::EXACT);
    c.at_most("marginalized-constant-in-e", invariance, 0.0);

    let Ok(marg) = observational_kernel(scm, &all) else { return };
    let report = verify_anti_causal_independence(&marg, scm);
    c.flag("anti-causal-independence", report.pass, report.max_discrepancy);

    let Ok(base) = per_environment_kernel(scm, &all) else { return };
    let nx = scm.n_obs();
    let uniform = vec![1.0 / nx as f64; nx];
    match interventional_kernel(&base, &Intervention::hard(Target::X, uniform.clone())) {
        Ok(done) => {
            let gap = done
                .cells()
                .iter()
                .flat_map(|&o| done.row(o).map(|r| r.to_vec()).unwrap_or_default())
                .zip(uniform.iter().cycle())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            c.at_most("hard-do-x-equals-q", gap, 0.0);
        }
        Err(e) => c.error("hard-do-x-equals-q", e),
    }

    let q = scm.p_label().to_vec();
    let hard = match interventional_kernel(&base, &Intervention::hard(Target::Y, q.clone())) {
        Ok(h) => h,
        Err(e) => return c.error("do-y", e),
    };
    match check_measure(&hard) {
        Ok(v) => c.at_most("interventional-kernel-measure", v, tol::EXACT),
        Err(e) => c.error("interventional-kernel-measure", e),
    }
    let mut affine = 0.0_f64;
    for a in [0.25, 0.5, 0.75] {
        let soft = soft_blend(&base, &hard, a).and_then(|s| {
            let mut worst = 0.0_f64;
            for omega in s.cells() {
                for ((v, b), h) in s.row(omega)?.iter().zip(base.row(omega)?).zip(hard.row(omega)?) {
                    worst = worst.max((v - ((1.0 - a) * b + a * h)).abs());
                }
            }
            Ok(worst)
        });
        match soft {
            Ok(v) => affine = affine.max(v),
            Err(e) => return c.error("soft-blend-affine", e),
        }
    }
    c.at_most("soft-blend-affine", affine, tol::EXACT);
    let endpoints = soft_blend(&base, &hard, 0.0).map(|k| k == base).unwrap_or(false)
        && soft_blend(&base, &hard, 1.0).map(|k| k == hard).unwrap_or(false);
    c.flag("soft-blend-endpoints", endpoints, 0.0);

    match verify_invariance_criteria(scm, &all) {
        Ok(r) => {
            c.at_most("y-shift-under-do-x", r.y_shift_under_do_x, tol::EXACT);
            c.flag("anti-causal-asymmetry", r.verdict, r.x_shift_under_do_y);
        }
        Err(e) => c.error("anti-causal-asymmetry", e),
    }

    if (2..=6).contains(&ne) {
        match ProductCausalSpace::from_scm(scm) {
            Ok(space) => {
                c.at_most("product-rectangle-rule", space.rectangle_gap(), tol::EXACT);
                let mut restriction = 0.0_f64;
                for s1 in subsets(ne) {
                    match space.restriction_gap(&s1, &all) {
                        Ok(v) => restriction = restriction.max(v),
                        Err(e) => return c.error("restriction-consistency", e),
                    }
                }
                c.at_most("restriction-consistency", restriction, tol::EXACT);
            }
            Err(e) => c.error("product-space", e),
        }
    }
}

fn toy_checks(c: &mut Collector<'_>) {
    let scm = FiniteScm::toy();
    let x1 = Event::singleton(1);
    let table = [[0.2, 0.4], [0.6, 0.8]];
    let mut gap = 0.0_f64;
    for e in 0..2 {
        let k = observational_kernel(&scm, &[e]).expect("toy kernel");
        for y in 0..2 {
            gap = gap.max((k.eval(Omega::new(y, e), &x1).expect("defined") - table[y][e]).abs());
            let x0 = k.eval(Omega::new(y, e), &Event::singleton(0)).expect("defined");
            gap = gap.max((x0 - (1.0 - table[y][e])).abs());
        }
    }
    c.at_most("toy-conditionals", gap, tol::EXACT);
    let mixed = observational_kernel(&scm, &[0, 1]).expect("toy kernel").eval(Omega::label(0), &x1).expect("defined");
    c.at_most("toy-mixed-environment", (mixed - 0.3).abs(), tol::EXACT);
    let base = per_environment_kernel(&scm, &[0, 1]).expect("toy kernel");
    let done = interventional_kernel(&base, &Intervention::point(Target::Y, 1, 2)).expect("toy do");
    let d0 = done.eval(Omega::new(0, 0), &x1).expect("defined");
    let d1 = done.eval(Omega::new(0, 1), &x1).expect("defined");
    c.at_most("toy-do-y", (d0 - 0.6).abs().max((d1 - 0.8).abs()), tol::EXACT);
    let r = verify_invariance_criteria(&scm, &[0]).expect("toy report");
    c.at_most("toy-x-shift", 0.2 - r.x_shift_under_do_y, tol::EXACT);
}

/// Run the suite over the toy SCM, an optional supplied SCM and a fixed set of random ones.
pub fn verify_suite(supplied: Option<(&str, &FiniteScm)>) -> VerifyReport {
    let mut checks = Vec::new();
    let mut c = Collector { scm: "toy", out: Vec::new() };
    toy_checks(&mut c);
    generic_checks(&mut c, &FiniteScm::toy());
    checks.extend(c.out);
    if let Some((name, scm)) = supplied {
        let mut c = Collector { scm: name, out: Vec::new() };
        generic_checks(&mut c, scm);
        checks.extend(c.out);
    }
    let mut seed = 0;
    let mut used = 0;
    while used < RANDOM_SCMS {
        seed += 1;
        let mut r = rng_for(0, RANDOM_STREAM, seed);
        let (ny, ne, nx) = (2 + seed as usize % 3, 1 + seed as usize % 3, 2 + seed as usize % 4);
        let scm = FiniteScm::random(&mut r, ny, ne, nx);
        if scm.label_dependence() < MIN_DEPENDENCE {
            continue;
        }
        let name = format!("random-{seed}");
        let mut c = Collector { scm: &name, out: Vec::new() };
        generic_checks(&mut c, &scm);
        checks.extend(c.out);
        used += 1;
    }
    let n_failed = checks.iter().filter(|c| !c.pass).count();
    VerifyReport { tool_version: TOOL_VERSION.into(), pass: n_failed == 0, n_checks: checks.len(), n_failed, checks }
}
