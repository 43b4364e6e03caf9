//! Regression proofs: exhaustive checks over finite domains that fail when
//! the model drifts.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::claims::ClaimBag;
use crate::compile::CompiledBundle;
use crate::eval::{EvalError, Evaluator};
use crate::model::{EntityStore, EnumDecl};
use crate::policy::TypedPolicy;
use crate::value::{EntityId, Value};

pub const DEFAULT_TUPLE_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("cell `{cell}` contains `{atom}`, which is not a member of `{enum_name}`")]
    ForeignAtom { enum_name: String, cell: String, atom: String },
    #[error("duplicate cell `{0}`")]
    DuplicateCell(String),
    #[error("{tuples} argument tuples exceed the budget of {budget}")]
    DomainTooLarge { tuples: u128, budget: u64 },
    #[error("`{left}` and `{right}` have different parameter kinds")]
    ParamMismatch { left: String, right: String },
    #[error("unknown {what} `{name}`")]
    Unknown { what: &'static str, name: String },
    #[error("constant `{0}` is not a list of enumeration atoms")]
    NotACell(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Named lists of atoms of one enumeration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub enum_name: String,
    pub cells: Vec<(String, Vec<String>)>,
}

impl PartitionSpec {
    /// Every atom of every cell must belong to `decl`.
    pub fn new(decl: &EnumDecl, cells: Vec<(String, Vec<String>)>) -> Result<Self, AnalysisError> {
        Self::over_members(&decl.name, &decl.members, cells)
    }

    /// As [`PartitionSpec::new`], for a member list that may be empty.
    pub fn over_members(enum_name: &str, members: &[String], cells: Vec<(String, Vec<String>)>) -> Result<Self, AnalysisError> {
        let mut seen = std::collections::BTreeSet::new();
        for (cell, atoms) in &cells {
            if !seen.insert(cell) {
                return Err(AnalysisError::DuplicateCell(cell.clone()));
            }
            if let Some(a) = atoms.iter().find(|a| !members.contains(a)) {
                return Err(AnalysisError::ForeignAtom { enum_name: enum_name.into(), cell: cell.clone(), atom: a.clone() });
            }
        }
        Ok(Self { enum_name: enum_name.into(), cells })
    }

    /// Cells taken from list constants of a compiled bundle.
    pub fn from_bundle(bundle: &CompiledBundle, enum_name: &str, cells: &[String]) -> Result<Self, AnalysisError> {
        let decl = bundle
            .store
            .decls()
            .enum_decl(enum_name)
            .ok_or_else(|| AnalysisError::Unknown { what: "enumeration", name: enum_name.into() })?;
        let mut out = Vec::new();
        for name in cells {
            let v = bundle.consts.get(name).ok_or_else(|| AnalysisError::Unknown { what: "constant", name: name.clone() })?;
            let atoms = v
                .as_list()
                .and_then(|items| {
                    items
                        .iter()
                        .map(|i| match i {
                            Value::Enum { name: n, atom } if n == enum_name => Some(atom.clone()),
                            _ => None,
                        })
                        .collect::<Option<Vec<_>>>()
                })
                .ok_or_else(|| AnalysisError::NotACell(name.clone()))?;
            out.push((name.clone(), atoms));
        }
        Self::new(decl, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnalysisVerdict {
    Holds,
    Fails,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Counterexample {
    /// An atom, or the argument tuple of an equivalence check.
    pub subject: Vec<String>,
    pub explanation: String,
}

/// Where an atom was found by a totality check: cell name and index in it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub atom: String,
    pub cell: String,
    pub index: usize,
}

/// `Holds` exactly when `counterexamples` is empty; counterexamples are sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub check: String,
    pub verdict: AnalysisVerdict,
    pub counterexamples: Vec<Counterexample>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub witnesses: Vec<Witness>,
}

impl AnalysisReport {
    fn new(check: impl Into<String>, mut counterexamples: Vec<Counterexample>) -> Self {
        counterexamples.sort();
        counterexamples.dedup();
        let verdict = if counterexamples.is_empty() { AnalysisVerdict::Holds } else { AnalysisVerdict::Fails };
        Self { check: check.into(), verdict, counterexamples, witnesses: Vec::new() }
    }

    pub fn holds(&self) -> bool {
        self.verdict == AnalysisVerdict::Holds
    }
}

impl fmt::Display for AnalysisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:?}", self.check, self.verdict)?;
        for c in &self.counterexamples {
            write!(f, "\n  counterexample {}: {}", c.subject.join(", "), c.explanation)?;
        }
        Ok(())
    }
}

/// Holds iff no atom is in two cells.
pub fn check_exclusive(spec: &PartitionSpec) -> AnalysisReport {
    let mut cex = Vec::new();
    for (i, (a, xs)) in spec.cells.iter().enumerate() {
        for (b, ys) in &spec.cells[i + 1..] {
            for x in xs.iter().filter(|x| ys.contains(x)) {
                cex.push(Counterexample { subject: vec![x.clone()], explanation: format!("in both `{a}` and `{b}`") });
            }
        }
    }
    AnalysisReport::new(format!("exclusive({})", spec.enum_name), cex)
}

/// Holds iff every member is in some cell; each covered atom gets its first
/// (cell, index) witness, in cell order.
pub fn check_total(members: &[String], spec: &PartitionSpec) -> AnalysisReport {
    let mut cex = Vec::new();
    let mut witnesses = Vec::new();
    for m in members {
        let found = spec.cells.iter().find_map(|(cell, atoms)| atoms.iter().position(|a| a == m).map(|i| (cell, i)));
        match found {
            Some((cell, index)) => witnesses.push(Witness { atom: m.clone(), cell: cell.clone(), index }),
            None => cex.push(Counterexample { subject: vec![m.clone()], explanation: "in no cell".into() }),
        }
    }
    let mut r = AnalysisReport::new(format!("total({})", spec.enum_name), cex);
    r.witnesses = witnesses;
    r
}

/// Number of argument tuples a policy ranges over in `store`.
pub fn tuple_count(pol: &TypedPolicy, store: &EntityStore) -> u128 {
    pol.params.iter().map(|p| store.entities_of_kind(&p.kind).count() as u128).product()
}

/// Decides both policies on every argument tuple; holds iff they agree.
pub fn check_equivalent(
    a: &TypedPolicy,
    b: &TypedPolicy,
    store: &EntityStore,
    claims: &ClaimBag,
    budget: u64,
) -> Result<AnalysisReport, AnalysisError> {
    let kinds = |p: &TypedPolicy| p.params.iter().map(|x| x.kind.clone()).collect::<Vec<_>>();
    if kinds(a) != kinds(b) {
        return Err(AnalysisError::ParamMismatch { left: a.name.clone(), right: b.name.clone() });
    }
    let tuples = tuple_count(a, store);
    if tuples > budget as u128 {
        return Err(AnalysisError::DomainTooLarge { tuples, budget });
    }
    let domains: Vec<Vec<EntityId>> =
        a.params.iter().map(|p| store.entities_of_kind(&p.kind).map(|e| e.id.clone()).collect()).collect();
    let ev = Evaluator::new(store, claims);
    let holds = |p: &TypedPolicy, args: &[EntityId]| -> Result<(bool, Option<String>), EvalError> {
        if p.rules.is_empty() {
            return Ok((false, None));
        }
        let d = ev.decide_policy(p, args)?;
        Ok((d.dec.is_yes(), d.rule))
    };
    let mut cex = Vec::new();
    let mut tuple = Vec::with_capacity(domains.len());
    if tuples > 0 {
        let mut idx = vec![0usize; domains.len()];
        'tuples: loop {
            tuple.clear();
            tuple.extend(idx.iter().zip(&domains).map(|(&i, d)| d[i].clone()));
            let (x, rx) = holds(a, &tuple)?;
            let (y, ry) = holds(b, &tuple)?;
            if x != y {
                let say = |name: &str, yes: bool, rule: Option<String>| match (yes, rule) {
                    (true, Some(r)) => format!("`{name}` holds by rule `{r}`"),
                    _ => format!("`{name}` fails"),
                };
                cex.push(Counterexample {
                    subject: tuple.iter().map(|i| i.to_string()).collect(),
                    explanation: format!("{}; {}", say(&a.name, x, rx), say(&b.name, y, ry)),
                });
            }
            // odometer over the argument domains, last position fastest
            let mut k = idx.len();
            loop {
                if k == 0 {
                    break 'tuples;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < domains[k].len() {
                    continue 'tuples;
                }
                idx[k] = 0;
            }
        }
    }
    Ok(AnalysisReport::new(format!("equivalent({}, {})", a.name, b.name), cex))
}

/// One entry of an analysis suite.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SuiteCheck {
    Exclusive {
        name: String,
        #[serde(rename = "enum")]
        enum_name: String,
        cells: Vec<String>,
        #[serde(default)]
        expect: Expectation,
    },
    Total {
        name: String,
        #[serde(rename = "enum")]
        enum_name: String,
        cells: Vec<String>,
        #[serde(default)]
        expect: Expectation,
    },
    Equivalent {
        name: String,
        left: String,
        right: String,
        #[serde(default)]
        budget: Option<u64>,
        #[serde(default)]
        expect: Expectation,
    },
}

/// The verdict a suite entry requires; documenting a known difference is
/// done with `expect = "fails"`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expectation {
    #[default]
    Holds,
    Fails,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    #[serde(rename = "check", default)]
    pub checks: Vec<SuiteCheck>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub expect: Expectation,
    /// `None` when the check could not run.
    pub report: Option<AnalysisReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SuiteOutcome {
    /// The check ran and its verdict is the expected one.
    pub fn passed(&self) -> bool {
        match &self.report {
            Some(r) => r.holds() == (self.expect == Expectation::Holds),
            None => false,
        }
    }
}

impl SuiteCheck {
    pub fn name(&self) -> &str {
        match self {
            SuiteCheck::Exclusive { name, .. } | SuiteCheck::Total { name, .. } | SuiteCheck::Equivalent { name, .. } => name,
        }
    }

    fn expect(&self) -> Expectation {
        match self {
            SuiteCheck::Exclusive { expect, .. } | SuiteCheck::Total { expect, .. } | SuiteCheck::Equivalent { expect, .. } => {
                *expect
            }
        }
    }

    pub fn run(&self, bundle: &CompiledBundle) -> Result<AnalysisReport, AnalysisError> {
        let mut report = match self {
            SuiteCheck::Exclusive { enum_name, cells, .. } => check_exclusive(&PartitionSpec::from_bundle(bundle, enum_name, cells)?),
            SuiteCheck::Total { enum_name, cells, .. } => {
                let spec = PartitionSpec::from_bundle(bundle, enum_name, cells)?;
                let members = &bundle.store.decls().enum_decl(enum_name).expect("checked by from_bundle").members;
                check_total(members, &spec)
            }
            SuiteCheck::Equivalent { left, right, budget, .. } => {
                let get = |n: &String| bundle.policy(n).ok_or_else(|| AnalysisError::Unknown { what: "policy", name: n.clone() });
                check_equivalent(
                    get(left)?,
                    get(right)?,
                    &bundle.store,
                    &ClaimBag::empty(),
                    budget.unwrap_or(DEFAULT_TUPLE_BUDGET),
                )?
            }
        };
        report.check = self.name().to_owned();
        Ok(report)
    }
}

impl Suite {
    pub fn run(&self, bundle: &CompiledBundle) -> Vec<SuiteOutcome> {
        self.checks
            .iter()
            .map(|c| {
                let (report, error) = match c.run(bundle) {
                    Ok(r) => (Some(r), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                SuiteOutcome { name: c.name().to_owned(), expect: c.expect(), report, error }
            })
            .collect()
    }
}

/// Counterexamples grouped by check, for the text rendering.
pub fn render_text(outcomes: &[SuiteOutcome]) -> String {
    let mut out = String::new();
    for o in outcomes {
        let status = if o.passed() { "ok" } else { "FAILED" };
        match (&o.report, &o.error) {
            (Some(r), _) => {
                let expect = if o.expect == Expectation::Fails { " (expected Fails)" } else { "" };
                out.push_str(&format!("{status} {r}{expect}\n"));
            }
            (None, Some(e)) => out.push_str(&format!("{status} {}: error: {e}\n", o.name)),
            (None, None) => unreachable!("an outcome has a report or an error"),
        }
    }
    out
}

/// Atom → first cell containing it, the classification a totality witness encodes.
pub fn classify(spec: &PartitionSpec) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for (cell, atoms) in &spec.cells {
        for a in atoms {
            out.entry(a.clone()).or_insert_with(|| cell.clone());
        }
    }
    out
}
