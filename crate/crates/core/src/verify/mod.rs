//! Mechanical checks of the pulse-layer structure of `(id − P_n) f` and of
//! the quasi-linearity identities
//!
//! ```text
//! U_n (id − A U_n) = U_n − A U_n
//! L_n (id − A L_n) = L_n − A L_n
//! ```
//!
//! for fully trend preserving `A`, on fields with no local extremal sets of
//! fewer than `n` cells.
//!
//! Every check has a stable id. The `a.*` ids cover the layer structure,
//! the `b.*` ids the identities and the intermediate facts behind them,
//! and the `inv.*` ids the operator and transform invariants that the
//! suite runs alongside.

mod suite;

pub use suite::{run_suite, CheckTally, SuiteConfig, SuiteReport};

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dpt::{extract_layer, Pulse};
use crate::error::{Error, Result};
use crate::field::{
    adjacent_witness, brute_force_extremal_sets, extremal_zones, is_local_max_set, label_flat_zones, Polarity,
    ScalarField, Witness,
};
use crate::lattice::{Boundary, CellSet, Lattice, ENUM_MAX_CELLS, ENUM_MAX_SIZE};
use crate::lulu::{l_n_fast, p_cascade, trend_check, u_n_fast, OperatorExpr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The operator under test failed its trend-preservation witness, so
    /// the identities do not apply to this trial.
    Inapplicable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub id: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialKind {
    LemmaA,
    LemmaB,
    Invariants,
}

/// Outcome of one trial, with enough context to replay it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialReport {
    pub kind: TrialKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub lattice: Lattice,
    pub input: Vec<i64>,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operator: Option<String>,
    pub checks: Vec<CheckResult>,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl TrialReport {
    fn new(kind: TrialKind, f: &ScalarField, n: usize) -> Self {
        Self {
            kind,
            seed: None,
            lattice: f.lattice().clone(),
            input: f.values().to_vec(),
            n,
            operator: None,
            checks: Vec::new(),
            verdict: Verdict::Pass,
            note: None,
        }
    }

    fn check(&mut self, id: &str, outcome: std::result::Result<(), String>) {
        let passed = outcome.is_ok();
        if !passed && self.verdict == Verdict::Pass {
            self.verdict = Verdict::Fail;
        }
        self.checks.push(CheckResult { id: id.to_string(), passed, witness: outcome.err() });
    }

    fn inapplicable(mut self, note: String) -> Self {
        self.verdict = Verdict::Inapplicable;
        self.note = Some(note);
        self
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &CheckResult> + '_ {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn field(&self) -> Result<ScalarField> {
        ScalarField::new(self.lattice.clone(), self.input.clone())
    }

    /// Re-runs the trial from its recorded input.
    pub fn replay(&self, options: &CheckOptions) -> Result<TrialReport> {
        let f = self.field()?;
        let mut report = match self.kind {
            TrialKind::LemmaA => check_lemma_a_with(&f, self.n, options),
            TrialKind::LemmaB => {
                let op = self.operator.as_deref().unwrap_or("id");
                let expr: OperatorExpr = op.parse().map_err(|e| Error::Config { line: 0, message: e })?;
                check_lemma_b_with(&f, self.n, &expr, options)
            }
            TrialKind::Invariants => check_invariants(&f, self.n),
        };
        report.seed = self.seed;
        Ok(report)
    }
}

/// Test hooks for the checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CheckOptions {
    /// Perturbs one value of the operator outputs the checks compare
    /// against. Every trial touching a non-empty window must then fail.
    pub inject_fault: bool,
}

fn ensure(cond: bool, witness: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(witness())
    }
}

fn first_mismatch(expected: &ScalarField, got: &ScalarField) -> std::result::Result<(), String> {
    match expected.values().iter().zip(got.values()).position(|(a, b)| a != b) {
        None => Ok(()),
        Some(c) => {
            Err(format!("cell {:?}: expected {}, got {}", expected.lattice().coords(c), expected.get(c), got.get(c)))
        }
    }
}

fn brute_force_feasible(lat: &Lattice, size: usize) -> bool {
    lat.len() <= ENUM_MAX_CELLS && size <= ENUM_MAX_SIZE
}

/// Smallest local extremal set of `f` with fewer than `n` cells, if any.
///
/// Exhaustive over connected sets when the window is small enough; falls
/// back to flat zones otherwise (exact, since a smallest extremal set is
/// always a flat zone).
pub fn find_small_extremal_set(f: &ScalarField, n: usize) -> Result<Option<(Polarity, CellSet)>> {
    for polarity in [Polarity::Min, Polarity::Max] {
        if let Some(set) = find_small_set_of(f, n, polarity)? {
            return Ok(Some((polarity, set)));
        }
    }
    Ok(None)
}

/// [`find_small_extremal_set`] restricted to one polarity.
pub fn find_small_set_of(f: &ScalarField, n: usize, polarity: Polarity) -> Result<Option<CellSet>> {
    if n <= 1 {
        return Ok(None);
    }
    if brute_force_feasible(f.lattice(), n - 1) {
        return Ok(brute_force_extremal_sets(f, n - 1, polarity)?.into_iter().next());
    }
    Ok((1..n).find_map(|k| extremal_zones(f, k, polarity).into_iter().next()).map(|z| z.cells))
}

/// Applies `P_{n-1} ∘ … ∘ P_1` to `f`.
pub fn precondition(f: &ScalarField, n: usize) -> ScalarField {
    p_cascade(f, n.saturating_sub(1))
}

/// A preconditioned field and how it was obtained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generated {
    pub field: ScalarField,
    pub raw: ScalarField,
    /// Draws rejected because the cascade left a small extremal set. Any
    /// nonzero count means the smoothers disagree with their own theory.
    pub alarms: usize,
}

pub const GENERATOR_ATTEMPTS: usize = 8;

pub fn random_field(lat: &Lattice, values: RangeInclusive<i64>, rng: &mut impl Rng) -> ScalarField {
    let v = (0..lat.len()).map(|_| rng.gen_range(values.clone())).collect();
    ScalarField::new(lat.clone(), v).expect("one value per cell")
}

/// Draws a random field and preconditions it for scale `n`, verifying that
/// no local extremal set of fewer than `n` cells survives.
pub fn generate_preconditioned(lat: &Lattice, n: usize, seed: u64, values: RangeInclusive<i64>) -> Result<Generated> {
    if n == 0 {
        return Err(Error::ZeroScale);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for alarms in 0..GENERATOR_ATTEMPTS {
        let raw = random_field(lat, values.clone(), &mut rng);
        let field = precondition(&raw, n);
        if find_small_extremal_set(&field, n)?.is_none() {
            return Ok(Generated { field, raw, alarms });
        }
    }
    Err(Error::RetriesExhausted(GENERATOR_ATTEMPTS))
}

fn separated(lat: &Lattice, sets: &[&CellSet]) -> std::result::Result<(), String> {
    for (i, a) in sets.iter().enumerate() {
        let adj = lat.adjacency_set(a).map_err(|e| e.to_string())?;
        for (j, b) in sets.iter().enumerate() {
            if i == j {
                continue;
            }
            if !a.is_disjoint(b) {
                return Err(format!("supports {:?} and {:?} overlap", a.coords(lat), b.coords(lat)));
            }
            if !adj.cells.is_disjoint(b) {
                return Err(format!("support {:?} is adjacent to {:?}", b.coords(lat), a.coords(lat)));
            }
        }
    }
    Ok(())
}

/// Brute-force extreme of `g` over `adj(set)`, OUTSIDE counting as 0.
fn adjacent_extreme(g: &ScalarField, set: &CellSet, polarity: Polarity) -> Option<i64> {
    let adj = g.lattice().adjacency_set(set).ok()?;
    let values = adj.cells.iter().map(|&c| g.get(c)).chain(adj.outside.then_some(0));
    match polarity {
        Polarity::Min => values.min(),
        Polarity::Max => values.max(),
    }
}

/// Checks the witness `(value, at)` returned for `set` in `g`.
fn witness_is_optimal(
    g: &ScalarField,
    set: &CellSet,
    polarity: Polarity,
    value: i64,
    at: Witness,
) -> std::result::Result<(), String> {
    let lat = g.lattice();
    let adj = lat.adjacency_set(set).map_err(|e| e.to_string())?;
    let member = match at {
        Witness::Cell(c) => adj.cells.contains(c),
        Witness::Outside => adj.outside,
    };
    ensure(member, || format!("witness {at:?} is not adjacent to {:?}", set.coords(lat)))?;
    ensure(g.value_at(at) == value, || format!("witness {at:?} has value {} not {value}", g.value_at(at)))?;
    let best = adjacent_extreme(g, set, polarity);
    ensure(best == Some(value), || format!("witness value {value} but adjacent extreme is {best:?}"))
}

fn pulses_sum(lattice: &Lattice, pulses: &[&Pulse]) -> ScalarField {
    let mut sum = ScalarField::zeros(lattice.clone());
    for p in pulses {
        p.add_to(&mut sum);
    }
    sum
}

/// Connected constant components of the nonzero part of `g`.
fn nonzero_components(g: &ScalarField) -> Vec<(CellSet, i64)> {
    let window_only = g.relabel(g.lattice().with_boundary(Boundary::DomainOnly)).expect("same extents");
    let (labels, count) = label_flat_zones(&window_only);
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (c, &z) in labels.iter().enumerate() {
        cells[z as usize].push(c);
    }
    cells
        .into_iter()
        .filter(|c| g.get(c[0]) != 0)
        .map(|c| {
            let v = g.get(c[0]);
            (CellSet::from_unsorted(c), v)
        })
        .collect()
}

fn perturb(mut g: ScalarField, options: &CheckOptions) -> ScalarField {
    if options.inject_fault {
        let v = g.get(0);
        g.set(0, v + 1);
    }
    g
}

fn check_precondition(report: &mut TrialReport, id: &str, f: &ScalarField, n: usize) -> bool {
    let outcome = match find_small_extremal_set(f, n) {
        Ok(None) => Ok(()),
        Ok(Some((p, set))) => Err(format!("{p:?} set {:?} has fewer than {n} cells", set.coords(f.lattice()))),
        Err(e) => Err(e.to_string()),
    };
    let ok = outcome.is_ok();
    report.check(id, outcome);
    ok
}

fn same_supports(
    kind: &str,
    lat: &Lattice,
    emitted: &[Pulse],
    expected: Vec<CellSet>,
) -> std::result::Result<(), String> {
    let mut got: Vec<&CellSet> = emitted.iter().map(|p| &p.support).collect();
    got.sort();
    let mut expected = expected;
    expected.sort();
    ensure(got.iter().copied().eq(expected.iter()), || {
        format!(
            "{kind} supports {:?} differ from expected {:?}",
            got.iter().map(|s| s.coords(lat)).collect::<Vec<_>>(),
            expected.iter().map(|s| s.coords(lat)).collect::<Vec<_>>()
        )
    })
}

/// Checks the structure of `(id − P_n) f` on a field with no local extremal
/// sets of fewer than `n` cells.
pub fn check_lemma_a(f: &ScalarField, n: usize) -> TrialReport {
    check_lemma_a_with(f, n, &CheckOptions::default())
}

pub fn check_lemma_a_with(f: &ScalarField, n: usize, options: &CheckOptions) -> TrialReport {
    let mut r = TrialReport::new(TrialKind::LemmaA, f, n);
    let lat = f.lattice();
    if n == 0 {
        r.check("a.precondition", Err("scale must be at least 1".into()));
        return r;
    }
    if !check_precondition(&mut r, "a.precondition", f, n) {
        return r;
    }

    let (layer, layer_state) = match extract_layer(f, n) {
        Ok(v) => v,
        Err(e) => {
            r.check("a.extract", Err(e.to_string()));
            return r;
        }
    };
    let upper = u_n_fast(f, n);
    let smoothed = perturb(l_n_fast(&upper, n), options);
    let residual = f - &smoothed;

    r.check("a.layer_state_is_p_n", first_mismatch(&smoothed, &layer_state));

    let pulses: Vec<&Pulse> = layer.pulses().collect();
    r.check("a.pulse_sum", first_mismatch(&residual, &pulses_sum(lat, &pulses)));

    r.check(
        "a.pulse_shape",
        layer.down.iter().map(|p| (p, false)).chain(layer.up.iter().map(|p| (p, true))).try_for_each(|(p, up)| {
            let at = || p.support.coords(lat);
            ensure(p.scale() == n, || format!("pulse on {:?} has scale {} not {n}", at(), p.scale()))?;
            ensure(lat.is_connected(&p.support), || format!("pulse on {:?} is disconnected", at()))?;
            ensure((p.value > 0) == up && p.value != 0, || {
                format!("pulse on {:?} has value {} in the wrong phase", at(), p.value)
            })
        }),
    );

    r.check("a.components", {
        let mut components = nonzero_components(&residual);
        components.sort();
        let mut emitted: Vec<(CellSet, i64)> = pulses.iter().map(|p| (p.support.clone(), p.value)).collect();
        emitted.sort();
        ensure(components == emitted, || {
            format!("components of (id - P_n) f {components:?} differ from emitted pulses {emitted:?}")
        })
    });

    let min_zones: Vec<CellSet> = extremal_zones(f, n, Polarity::Min).into_iter().map(|z| z.cells).collect();
    let max_zones: Vec<CellSet> = extremal_zones(&upper, n, Polarity::Max).into_iter().map(|z| z.cells).collect();
    r.check("a.down_supports", same_supports("down", lat, &layer.down, min_zones));
    r.check("a.up_supports", same_supports("up", lat, &layer.up, max_zones));

    if brute_force_feasible(lat, n) {
        let exhaustive = |g: &ScalarField, p: Polarity| -> Vec<CellSet> {
            brute_force_extremal_sets(g, n, p).unwrap_or_default().into_iter().filter(|s| s.len() == n).collect()
        };
        r.check("a.down_supports_exhaustive", same_supports("down", lat, &layer.down, exhaustive(f, Polarity::Min)));
        r.check("a.up_supports_exhaustive", same_supports("up", lat, &layer.up, exhaustive(&upper, Polarity::Max)));
    }

    r.check(
        "a.up_supports_are_max_sets_of_f",
        layer.up.iter().try_for_each(|p| {
            ensure(is_local_max_set(f, &p.support).unwrap_or(false), || {
                format!("up support {:?} is not a local max set of f", p.support.coords(lat))
            })
        }),
    );

    let downs: Vec<&CellSet> = layer.down.iter().map(|p| &p.support).collect();
    let ups: Vec<&CellSet> = layer.up.iter().map(|p| &p.support).collect();
    r.check("a.down_separation", separated(lat, &downs));
    r.check("a.up_separation", separated(lat, &ups));
    r.check(
        "a.cross_disjoint",
        downs.iter().try_for_each(|v| {
            ups.iter().try_for_each(|w| {
                ensure(v.is_disjoint(w), || format!("down {:?} meets up {:?}", v.coords(lat), w.coords(lat)))
            })
        }),
    );

    let mut expected_upper = f.clone();
    let mut witness_outcome = Ok(());
    let mut cross_outcome = Ok(());
    for p in &layer.down {
        match adjacent_witness(f, &p.support, Polarity::Min) {
            Ok((value, at)) => {
                if witness_outcome.is_ok() {
                    witness_outcome = witness_is_optimal(f, &p.support, Polarity::Min, value, at).and_then(|_| {
                        ensure(p.value == f.get(p.support.first().unwrap()) - value, || {
                            format!("down pulse value {} does not match witness value {value}", p.value)
                        })
                    });
                }
                for &c in p.support.iter() {
                    expected_upper.set(c, value);
                }
                if let Witness::Cell(y) = at {
                    let grown = p.support.union(&CellSet::singleton(y));
                    if cross_outcome.is_ok() {
                        cross_outcome = ups.iter().try_for_each(|w| {
                            ensure(grown.is_disjoint(w), || {
                                format!(
                                    "down support plus witness {:?} meets up {:?}",
                                    grown.coords(lat),
                                    w.coords(lat)
                                )
                            })
                        });
                    }
                }
            }
            Err(e) => witness_outcome = Err(e.to_string()),
        }
    }
    r.check("a.witness_min", witness_outcome);
    r.check("a.witness_cross", cross_outcome);
    r.check("a.piecewise_upper", first_mismatch(&expected_upper, &upper));

    let mut expected_lower = upper.clone();
    let mut witness_outcome = Ok(());
    for p in &layer.up {
        match adjacent_witness(&upper, &p.support, Polarity::Max) {
            Ok((value, at)) => {
                if witness_outcome.is_ok() {
                    witness_outcome = witness_is_optimal(&upper, &p.support, Polarity::Max, value, at).and_then(|_| {
                        ensure(p.value == upper.get(p.support.first().unwrap()) - value, || {
                            format!("up pulse value {} does not match witness value {value}", p.value)
                        })
                    });
                }
                for &c in p.support.iter() {
                    expected_lower.set(c, value);
                }
            }
            Err(e) => witness_outcome = Err(e.to_string()),
        }
    }
    r.check("a.witness_max", witness_outcome);
    r.check("a.piecewise_lower_upper", first_mismatch(&expected_lower, &smoothed));
    r
}

/// Checks both identities for `A` on a field with no local extremal sets
/// of fewer than `n` cells. Trials where `A` or `id − A` fails to preserve
/// neighbour trends on `U_n f` or `L_n f` are inapplicable.
pub fn check_lemma_b(f: &ScalarField, n: usize, a: &OperatorExpr) -> TrialReport {
    check_lemma_b_with(f, n, a, &CheckOptions::default())
}

pub fn check_lemma_b_with(f: &ScalarField, n: usize, a: &OperatorExpr, options: &CheckOptions) -> TrialReport {
    let mut r = TrialReport::new(TrialKind::LemmaB, f, n);
    r.operator = Some(a.to_string());
    if n == 0 {
        r.check("b.precondition", Err("scale must be at least 1".into()));
        return r;
    }
    if !check_precondition(&mut r, "b.precondition", f, n) {
        return r;
    }

    let sides = [(Polarity::Min, "upper"), (Polarity::Max, "lower")];
    let mut smoothed = Vec::with_capacity(2);
    for (polarity, name) in sides {
        let s = match polarity {
            Polarity::Min => u_n_fast(f, n),
            Polarity::Max => l_n_fast(f, n),
        };
        let image = a.apply(&s);
        if let Err(v) = trend_check(&s, &image) {
            return r.inapplicable(format!("{a} breaks a trend of the {name} smoothing at {:?} -> {:?}", v.x, v.y));
        }
        if let Err(v) = trend_check(&s, &(&s - &image)) {
            return r
                .inapplicable(format!("id - {a} breaks a trend of the {name} smoothing at {:?} -> {:?}", v.x, v.y));
        }
        smoothed.push((polarity, name, s, image));
    }

    for (polarity, name, s, image) in smoothed {
        identity_checks(&mut r, f, n, a, polarity, name, &s, &image, options);
    }
    r
}

#[allow(clippy::too_many_arguments)]
fn identity_checks(
    r: &mut TrialReport,
    f: &ScalarField,
    n: usize,
    a: &OperatorExpr,
    polarity: Polarity,
    name: &str,
    smoothed: &ScalarField,
    image: &ScalarField,
    options: &CheckOptions,
) {
    let lat = f.lattice();
    let smoother = |m: usize| match polarity {
        Polarity::Min => OperatorExpr::Upper(m),
        Polarity::Max => OperatorExpr::Lower(m),
    };
    let smooth = |g: &ScalarField| match polarity {
        Polarity::Min => u_n_fast(g, n),
        Polarity::Max => l_n_fast(g, n),
    };
    let id = |suffix: &str| format!("b.{name}.{suffix}");

    // g = (id − A S_n) f
    let g = f - image;

    // Evaluated through the expression tree rather than the fields above.
    let detail = OperatorExpr::complement(&smoother(n)).apply(f);
    let coarse = OperatorExpr::compose(a.complement(), smoother(n)).apply(f);
    r.check(&id("split"), first_mismatch(&g, &(&detail + &coarse)));

    let mut constancy = Ok(());
    let mut adjacent = Ok(());
    for zone in extremal_zones(f, n, polarity) {
        let at = |s: &CellSet| s.coords(lat);
        let (_, witness) = match adjacent_witness(f, &zone.cells, polarity) {
            Ok(w) => w,
            Err(e) => {
                constancy = Err(e.to_string());
                continue;
            }
        };
        let w = coarse.get(zone.cells.first().unwrap());
        if constancy.is_ok() {
            constancy = zone
                .cells
                .iter()
                .map(|&c| coarse.get(c))
                .chain(std::iter::once(coarse.value_at(witness)))
                .try_for_each(|v| {
                    ensure(v == w, || {
                        format!("(id - A) S_n f is not constant on {:?} plus witness {witness:?}", at(&zone.cells))
                    })
                });
        }
        if adjacent.is_ok() {
            let best = adjacent_extreme(&coarse, &zone.cells, polarity);
            adjacent = ensure(best == Some(w), || {
                format!("extreme of (id - A) S_n f around {:?} is {best:?}, expected {w}", at(&zone.cells))
            });
        }
    }
    r.check(&id("constancy"), constancy);
    r.check(&id("adjacent_extreme"), adjacent);

    // The extremal sets of g of at most n cells are exactly those of f.
    r.check(&id("extremal_sets_of_g"), {
        let of_f: Vec<CellSet> = extremal_zones(f, n, polarity).into_iter().map(|z| z.cells).collect();
        let of_g: Vec<CellSet> = extremal_zones(&g, n, polarity).into_iter().map(|z| z.cells).collect();
        let smaller = find_small_set_of(&g, n, polarity).ok().flatten();
        ensure(of_f == of_g && smaller.is_none(), || {
            format!("size-{n} {polarity:?} zones of g {of_g:?} differ from those of f {of_f:?} (smaller: {smaller:?})")
        })
    });

    let smoothed_g = perturb(smooth(&g), options);
    r.check(&id("residual_invariance"), first_mismatch(&(f - smoothed), &(&g - &smoothed_g)));
    r.check(&id("identity"), first_mismatch(&(smoothed - image), &smoothed_g));
}

/// Operator laws and transform invariants on an arbitrary field.
pub fn check_invariants(f: &ScalarField, n: usize) -> TrialReport {
    use crate::dpt::{decompose, decompose_reference, reconstruct_full};
    use crate::lulu::{l_n_oracle, p_n, u_n_oracle, ORACLE_MAX_CELLS};

    let mut r = TrialReport::new(TrialKind::Invariants, f, n);
    let lat = f.lattice();

    let dpt = decompose(f);
    r.check("inv.reconstruction", first_mismatch(f, &reconstruct_full(&dpt)));
    r.check(
        "inv.engine_equivalence",
        match decompose_reference(f) {
            Ok(reference) => ensure(reference == dpt, || "zone-graph and reference decompositions differ".into()),
            Err(e) => Err(e.to_string()),
        },
    );
    r.check(
        "inv.scale_bound",
        ensure(dpt.n_max() <= lat.len(), || format!("largest scale {} exceeds window size {}", dpt.n_max(), lat.len())),
    );

    let upper = u_n_fast(f, n);
    let lower = l_n_fast(f, n);
    if lat.len() <= ORACLE_MAX_CELLS {
        r.check(
            "inv.oracle_upper",
            u_n_oracle(f, n).map_err(|e| e.to_string()).and_then(|o| first_mismatch(&o, &upper)),
        );
        r.check(
            "inv.oracle_lower",
            l_n_oracle(f, n).map_err(|e| e.to_string()).and_then(|o| first_mismatch(&o, &lower)),
        );
    }
    r.check("inv.ordering", ensure(lower.le(f) && f.le(&upper), || "expected L_n f <= f <= U_n f".into()));
    r.check("inv.idempotence_upper", first_mismatch(&upper, &u_n_fast(&upper, n)));
    r.check("inv.idempotence_lower", first_mismatch(&lower, &l_n_fast(&lower, n)));

    let smoothed = p_n(f, n);
    r.check(
        "inv.p_n_clears_small_sets",
        match find_small_extremal_set(&smoothed, n + 1) {
            Ok(None) => Ok(()),
            Ok(Some((p, set))) => Err(format!("{p:?} set {:?} survives P_n", set.coords(lat))),
            Err(e) => Err(e.to_string()),
        },
    );
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Connectivity;

    fn line(values: &[i64], b: Boundary) -> ScalarField {
        ScalarField::new(Lattice::line(values.len(), b).unwrap(), values.to_vec()).unwrap()
    }

    fn all_passed(r: &TrialReport) -> bool {
        r.verdict == Verdict::Pass && r.checks.iter().all(|c| c.passed)
    }

    #[test]
    fn preconditioning_examples() {
        let f = line(&[-3, 0, 5], Boundary::ZeroPadded);
        assert_eq!(precondition(&f, 1), f);
        assert!(precondition(&f, 2).is_zero());

        let f = line(&[0, 4, 4, 2, 0], Boundary::ZeroPadded);
        assert_eq!(find_small_extremal_set(&f, 2).unwrap(), None);
        assert_eq!(precondition(&f, 2), f);
        // without padding both end cells are strict minima
        let f = line(&[0, 4, 4, 2, 0], Boundary::DomainOnly);
        assert_eq!(find_small_extremal_set(&f, 2).unwrap(), Some((Polarity::Min, CellSet::singleton(0))));
        assert_eq!(precondition(&f, 2).values(), &[4, 4, 4, 2, 2]);
    }

    #[test]
    fn generator_is_deterministic_and_clean() {
        let lat = Lattice::grid(3, 4, Connectivity::Facet, Boundary::ZeroPadded).unwrap();
        for n in 1..=3 {
            let a = generate_preconditioned(&lat, n, 7, -4..=4).unwrap();
            let b = generate_preconditioned(&lat, n, 7, -4..=4).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.alarms, 0);
            assert_eq!(find_small_extremal_set(&a.field, n).unwrap(), None);
        }
        assert_eq!(generate_preconditioned(&lat, 0, 7, 0..=1), Err(Error::ZeroScale));
    }

    #[test]
    fn lemma_a_examples() {
        let r = check_lemma_a(&line(&[-3, 0, 5], Boundary::ZeroPadded), 1);
        assert!(all_passed(&r), "{r:#?}");

        let r = check_lemma_a(&line(&[4, 4, 2], Boundary::ZeroPadded), 2);
        assert!(all_passed(&r), "{r:#?}");

        let r = check_lemma_a(&line(&[0, 0, 0, 0], Boundary::ZeroPadded), 3);
        assert!(all_passed(&r), "{r:#?}");
    }

    #[test]
    fn lemma_a_rejects_unprepared_fields() {
        let r = check_lemma_a(&line(&[-3, 0, 5], Boundary::ZeroPadded), 2);
        assert_eq!(r.verdict, Verdict::Fail);
        assert_eq!(r.failed_checks().next().unwrap().id, "a.precondition");
    }

    #[test]
    fn lemma_b_examples() {
        let f = line(&[-3, 0, 5], Boundary::ZeroPadded);
        for op in [
            OperatorExpr::Identity,
            OperatorExpr::Lower(1),
            OperatorExpr::compose(OperatorExpr::Upper(2), OperatorExpr::Lower(2)),
        ] {
            let r = check_lemma_b(&f, 1, &op);
            assert!(all_passed(&r), "{r:#?}");
        }
        // U_1 (f - U_1 f) = 0 and U_1 (f - L_1 U_1 f) = [0, 0, 5].
        let upper = u_n_fast(&f, 1);
        assert!(u_n_fast(&(&f - &upper), 1).is_zero());
        let g = &f - &l_n_fast(&upper, 1);
        assert_eq!(u_n_fast(&g, 1).values(), &[0, 0, 5]);
    }

    #[test]
    fn negation_is_gated_not_failed() {
        let f = line(&[1, 3, 3, 0, 2], Boundary::ZeroPadded);
        let r = check_lemma_b(&f, 1, &OperatorExpr::negation());
        assert_eq!(r.verdict, Verdict::Inapplicable);
        assert!(r.note.is_some());
    }

    #[test]
    fn injected_fault_is_caught() {
        let f = line(&[-3, 0, 5], Boundary::ZeroPadded);
        let opts = CheckOptions { inject_fault: true };
        assert_eq!(check_lemma_a_with(&f, 1, &opts).verdict, Verdict::Fail);
        assert_eq!(check_lemma_b_with(&f, 1, &OperatorExpr::Identity, &opts).verdict, Verdict::Fail);
    }

    #[test]
    fn invariants_pass_on_small_field() {
        let lat = Lattice::grid(3, 3, Connectivity::Full, Boundary::DomainOnly).unwrap();
        let f = ScalarField::new(lat, vec![1, 5, 2, 0, 0, 3, 4, 1, 1]).unwrap();
        for n in 1..=3 {
            let r = check_invariants(&f, n);
            assert!(all_passed(&r), "{r:#?}");
        }
    }

    #[test]
    fn replay_reproduces_verdict() {
        let lat = Lattice::line(8, Boundary::ZeroPadded).unwrap();
        let generated = generate_preconditioned(&lat, 2, 99, -3..=3).unwrap();
        let mut r = check_lemma_b(&generated.field, 2, &OperatorExpr::p(2));
        r.seed = Some(99);
        let again = r.replay(&CheckOptions::default()).unwrap();
        assert_eq!(again, r);
    }
}
