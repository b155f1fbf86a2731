//! Shared fixtures, random generators and independent oracles for the
//! integration tests.
#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

use journal_core::article::{
    Affiliation, ArticlePipeline, AuthorEntry, BibliographyRef, DepositSettings, Manuscript,
};
use journal_core::checklist::{ChecklistTemplate, ItemState};
use journal_core::clock::SteppingClock;
use journal_core::config::JournalConfig;
use journal_core::forge::SimulatedForge;
use journal_core::journal::{Action, Journal};
use journal_core::person::{PersonRef, Role};
use journal_core::workflow::{
    create_submission, ScreeningVerdict, SequenceCounter, Submission, SubmissionRequest, SubmissionState,
    WorkflowSettings,
};

pub const HDBSCAN_PAPER: &str = include_str!("../fixtures/hdbscan/paper.md");
pub const HDBSCAN_SCENARIO: &str = include_str!("../fixtures/hdbscan/scenario.json");
pub const CHECKLIST_GOLDEN: &str = include_str!("../fixtures/checklist_prompts.txt");

pub fn fixtures_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures"))
}

pub fn start_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2017, 2, 26, 9, 0, 0).unwrap()
}

pub fn person(handle: &str, role: Role) -> PersonRef {
    PersonRef::new(handle, role).unwrap()
}

/// Cast used by the random workflow model. Index 0 is the submitting author.
pub fn cast() -> Vec<PersonRef> {
    vec![
        person("lmcinnes", Role::Author),
        person("arfon", Role::EditorInChief),
        person("danielskatz", Role::Editor),
        person("hlee", Role::Editor),
        person("zhaozhang", Role::Reviewer),
        person("okafor", Role::Reviewer),
        person("sysadmin", Role::Admin),
        person("outsider", Role::Author),
    ]
}

pub fn hdbscan_request(author: PersonRef) -> SubmissionRequest {
    SubmissionRequest {
        title: "hdbscan: Hierarchical density based clustering".into(),
        repository_url: "https://github.com/scikit-learn-contrib/hdbscan".into(),
        software_version: "0.8.12".into(),
        author,
        presubmission_inquiry: None,
    }
}

/// One step of the random workflow model. Person and reviewer fields are
/// indices into [`cast`].
#[derive(Debug, Clone)]
pub enum Op {
    OpenPreReview { fail_forge: bool },
    Screen { in_scope: bool, actor: usize },
    Reject { actor: usize },
    Withdraw { actor: usize },
    AssignEditor { editor: usize, actor: usize },
    AssignReviewer { reviewer: usize, actor: usize },
    UnassignReviewer { reviewer: usize, actor: usize },
    StartReview { right_word: bool, actor: usize, fail_forge: bool },
    SetArchive { valid: bool, actor: usize },
    SetFastTrack { on: bool, actor: usize },
    Check { reviewer: usize, item: usize, checked: bool, actor: usize },
    CheckAll { reviewer: usize, actor: usize },
    Accept { actor: usize, fail_forge: bool },
}

impl Op {
    pub fn random(rng: &mut impl Rng) -> Op {
        let n = cast().len();
        // mostly plausible actors, sometimes anyone
        let pick = |rng: &mut dyn rand::RngCore, likely: &[usize]| {
            if rng.random_bool(0.8) {
                likely[rng.random_range(0..likely.len())]
            } else {
                rng.random_range(0..n)
            }
        };
        let editorial = |rng: &mut dyn rand::RngCore| pick(rng, &[1, 2, 3, 6]);
        let reviewer = |rng: &mut dyn rand::RngCore| pick(rng, &[4, 5]);
        let anyone = |rng: &mut dyn rand::RngCore| rng.random_range(0..n);
        // weights favour the operations that move a submission forward
        match rng.random_range(0..100) {
            0..=7 => Op::OpenPreReview { fail_forge: rng.random_bool(0.1) },
            8..=10 => Op::Screen { in_scope: rng.random_bool(0.9), actor: editorial(rng) },
            11 => Op::Reject { actor: anyone(rng) },
            12 => Op::Withdraw { actor: pick(rng, &[0]) },
            13..=22 => Op::AssignEditor { editor: pick(rng, &[2, 3]), actor: editorial(rng) },
            23..=34 => Op::AssignReviewer { reviewer: reviewer(rng), actor: editorial(rng) },
            35..=37 => Op::UnassignReviewer { reviewer: reviewer(rng), actor: editorial(rng) },
            38..=47 => Op::StartReview {
                right_word: rng.random_bool(0.8),
                actor: editorial(rng),
                fail_forge: rng.random_bool(0.1),
            },
            48..=57 => Op::SetArchive { valid: rng.random_bool(0.8), actor: editorial(rng) },
            58..=60 => Op::SetFastTrack { on: rng.random_bool(0.5), actor: editorial(rng) },
            61..=72 => {
                let r = reviewer(rng);
                Op::Check {
                    reviewer: r,
                    item: rng.random_range(0..18),
                    checked: rng.random_bool(0.8),
                    actor: if rng.random_bool(0.7) { r } else { anyone(rng) },
                }
            }
            73..=86 => {
                let r = reviewer(rng);
                Op::CheckAll { reviewer: r, actor: if rng.random_bool(0.7) { r } else { anyone(rng) } }
            }
            _ => Op::Accept { actor: pick(rng, &[1, 6]), fail_forge: rng.random_bool(0.1) },
        }
    }
}

/// A single submission driven directly through workflow-core.
pub struct Model {
    pub submission: Submission,
    pub forge: SimulatedForge,
    pub pipeline: ArticlePipeline,
    pub settings: WorkflowSettings,
    pub clock: Arc<SteppingClock>,
    pub people: Vec<PersonRef>,
}

impl Model {
    pub fn new() -> Model {
        let clock = Arc::new(SteppingClock::new(start_time(), Duration::hours(1)));
        let settings = WorkflowSettings::default();
        let mut forge = SimulatedForge::new("whedon", clock.clone());
        forge.add_repository(&settings.reviews_repository);
        let people = cast();
        let counter = SequenceCounter::starting_at(205);
        let submission = create_submission(&counter, hdbscan_request(people[0].clone()), start_time()).unwrap();
        Model {
            submission,
            forge,
            pipeline: ArticlePipeline::new(DepositSettings::default()),
            settings,
            clock,
            people,
        }
    }

    /// Applies one operation; returns whether it succeeded.
    pub fn apply(&mut self, op: &Op) -> bool {
        let template = ChecklistTemplate::standard();
        let p = |i: usize| self.people[i].clone();
        let now = self.clock.as_ref();
        let s = &mut self.submission;
        let fail = |forge: &mut SimulatedForge, yes: bool| {
            if yes {
                forge.fail_next(1);
            }
        };
        let result = match op {
            Op::OpenPreReview { fail_forge } => {
                fail(&mut self.forge, *fail_forge);
                s.open_pre_review(&mut self.forge, &self.settings).map(drop)
            }
            Op::Screen { in_scope, actor } => {
                let verdict = if *in_scope { ScreeningVerdict::InScope } else { ScreeningVerdict::OutOfScope };
                s.screen(verdict, &p(*actor), &mut self.forge, &self.settings)
            }
            Op::Reject { actor } => s.reject(&p(*actor)),
            Op::Withdraw { actor } => s.withdraw(&p(*actor)),
            Op::AssignEditor { editor, actor } => s.assign_editor(p(*editor), &p(*actor)),
            Op::AssignReviewer { reviewer, actor } => s.assign_reviewer(p(*reviewer), &p(*actor), template),
            Op::UnassignReviewer { reviewer, actor } => s.unassign_reviewer(&p(*reviewer).handle, &p(*actor)),
            Op::StartReview { right_word, actor, fail_forge } => {
                fail(&mut self.forge, *fail_forge);
                let word = if *right_word { "bananas" } else { "apples" };
                s.start_review(word, &p(*actor), &mut self.forge, &self.settings, template)
                    .map(drop)
            }
            Op::SetArchive { valid, actor } => {
                let doi = if *valid { "https://doi.org/10.5281/zenodo.401403" } else { "zenodo 401403" };
                s.set_archive(doi, &p(*actor)).map(drop)
            }
            Op::SetFastTrack { on, actor } => s.set_fast_track(*on, &p(*actor), template),
            Op::Check { reviewer, item, checked, actor } => {
                let id = template.items().nth(*item).unwrap().id.clone();
                let value = if *checked { ItemState::Checked } else { ItemState::Unchecked };
                s.set_checklist_item(&p(*reviewer).handle, &id, value, &p(*actor), clock_now(now))
            }
            Op::CheckAll { reviewer, actor } => {
                let mut r = Ok(());
                for item in template.items() {
                    r = s.set_checklist_item(&p(*reviewer).handle, &item.id, ItemState::Checked, &p(*actor), clock_now(now));
                    if r.is_err() {
                        break;
                    }
                }
                r
            }
            Op::Accept { actor, fail_forge } => {
                fail(&mut self.forge, *fail_forge);
                s.accept_and_publish(&p(*actor), &self.pipeline, &mut self.forge, &self.settings, clock_now(now))
                    .map(drop)
            }
        };
        result.is_ok()
    }
}

fn clock_now(clock: &SteppingClock) -> DateTime<Utc> {
    use journal_core::clock::Clock;
    clock.now()
}

/// The acceptance gate restated independently of `Submission::reviews_complete`.
pub fn gate_holds(s: &Submission) -> bool {
    let template = ChecklistTemplate::standard();
    let checklists_done = !s.reviewers().is_empty()
        && s.reviewers().iter().all(|r| {
            s.checklist_for(&r.handle).is_some_and(|c| {
                template
                    .items()
                    .all(|item| c.state(&item.id) == Some(ItemState::Checked))
            })
        });
    s.archive_doi().is_some() && (s.fast_track() || checklists_done)
}

pub fn reached_acceptance(state: SubmissionState) -> bool {
    matches!(state, SubmissionState::Accepted | SubmissionState::Published)
}

// ---- journal fixtures ----

pub fn journal_config(storage: Option<&Path>) -> JournalConfig {
    let mut config = JournalConfig {
        first_sequence_number: 205,
        people: cast(),
        snapshot_every: 5,
        ..JournalConfig::default()
    };
    if let Some(dir) = storage {
        config.storage_path = dir.to_path_buf();
    }
    config
}

pub fn sim_forge(clock: Arc<SteppingClock>) -> SimulatedForge {
    let mut forge = SimulatedForge::new("whedon", clock);
    forge.add_repository("openjournals/joss-reviews");
    forge
}

pub fn memory_journal() -> (Journal<SimulatedForge>, Arc<SteppingClock>) {
    let clock = Arc::new(SteppingClock::new(start_time(), Duration::minutes(7)));
    let journal = Journal::in_memory(journal_config(None), sim_forge(clock.clone()), clock.clone());
    (journal, clock)
}

/// Operations of the journal-level workload used by the durability harness.
#[derive(Debug, Clone)]
pub enum JournalOp {
    Submit { title: String, key: Option<String> },
    Act { target: usize, action: Action, actor: &'static str },
}

/// A mixed workload: several submissions, each pushed some way through review.
pub fn journal_workload(rng: &mut StdRng, submissions: usize) -> Vec<JournalOp> {
    let mut ops = Vec::new();
    for i in 0..submissions {
        ops.push(JournalOp::Submit {
            title: format!("Package {i}"),
            key: rng.random_bool(0.3).then(|| format!("key-{i}")),
        });
        let depth = rng.random_range(0..=5);
        let mut script = vec![
            ("arfon", Action::AssignEditor { editor: "danielskatz".into() }),
            ("danielskatz", Action::AssignReviewer { reviewer: "zhaozhang".into() }),
            ("danielskatz", Action::StartReview { magic_word: "bananas".into() }),
            ("danielskatz", Action::SetArchive { doi: format!("10.5281/zenodo.{}", 400000 + i) }),
        ];
        for item in ChecklistTemplate::standard().items() {
            script.push((
                "zhaozhang",
                Action::SetChecklistItem {
                    reviewer: "zhaozhang".into(),
                    item: item.id.clone(),
                    checked: true,
                },
            ));
        }
        script.push(("arfon", Action::Accept));
        let keep = match depth {
            0 => 0,
            1 => 2,
            2 => 3,
            3 => 4 + rng.random_range(0..18),
            _ => script.len(),
        };
        for (actor, action) in script.into_iter().take(keep) {
            ops.push(JournalOp::Act { target: i, action, actor });
        }
        if depth == 0 && rng.random_bool(0.5) {
            ops.push(JournalOp::Act { target: i, action: Action::Withdraw, actor: "lmcinnes" });
        }
    }
    // a few duplicate submissions replaying an earlier idempotency key
    let keyed: Vec<_> = ops
        .iter()
        .filter_map(|o| match o {
            JournalOp::Submit { title, key: Some(k) } => Some((title.clone(), k.clone())),
            _ => None,
        })
        .collect();
    if let Some((title, key)) = keyed.choose(rng) {
        ops.push(JournalOp::Submit { title: title.clone(), key: Some(key.clone()) });
    }
    ops
}

/// Runs one workload op. Submissions are tracked by workload index.
pub fn run_journal_op(journal: &mut Journal<SimulatedForge>, ids: &mut Vec<journal_core::workflow::SubmissionId>, op: &JournalOp) {
    match op {
        JournalOp::Submit { title, key } => {
            let mut request = hdbscan_request(person("lmcinnes", Role::Author));
            request.title = title.clone();
            request.repository_url = format!("https://github.com/example/{}", title.replace(' ', "-"));
            let s = journal.submit(request, key.as_deref()).expect("submit");
            let id = s.id();
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        JournalOp::Act { target, action, actor } => {
            journal.apply(ids[*target], action.clone(), actor).expect("workload action");
        }
    }
}

// ---- manuscripts ----

const WORDS: [&str; 16] = [
    "Fast", "hierarchical", "clustering", "for", "R", "&", "Python", "<tools>", "Ünïcode", "naïve", "\"quoted\"",
    "it's", "10%", "x:y", "#tag", "solver",
];
const GIVEN: [&str; 8] = ["Leland", "Priya", "Maria J.", "Zhao", "Tomasz", "Ines", "José", "Anne-Marie"];
const SURNAMES: [&str; 8] = ["McInnes", "Raman", "Ortega", "Zhang", "Kowalski", "Berg", "Núñez", "O'Neil"];

fn words(rng: &mut StdRng, range: std::ops::RangeInclusive<usize>) -> String {
    let n = rng.random_range(range);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn orcid(rng: &mut StdRng) -> String {
    let d: Vec<u32> = (0..15).map(|_| rng.random_range(0..10)).collect();
    let check = if rng.random_bool(0.1) { "X".to_string() } else { rng.random_range(0..10).to_string() };
    format!(
        "{}{}{}{}-{}{}{}{}-{}{}{}{}-{}{}{}{}",
        d[0], d[1], d[2], d[3], d[4], d[5], d[6], d[7], d[8], d[9], d[10], d[11], d[12], d[13], d[14], check
    )
}

/// A random manuscript with no blocking violations.
pub fn random_manuscript(rng: &mut StdRng) -> Manuscript {
    let affiliations: Vec<Affiliation> = (1..=rng.random_range(0..=3u32))
        .map(|index| Affiliation { index, name: format!("Institute of {}", words(rng, 1..=3)) })
        .collect();
    let authors = (0..rng.random_range(1..=5))
        .map(|_| {
            let mononym = rng.random_bool(0.1);
            let name = if mononym {
                SURNAMES.choose(rng).unwrap().to_string()
            } else {
                format!("{} {}", GIVEN.choose(rng).unwrap(), SURNAMES.choose(rng).unwrap())
            };
            let mut a = AuthorEntry::new(name);
            if rng.random_bool(0.6) {
                a.orcid = Some(orcid(rng));
            }
            if !affiliations.is_empty() {
                let k = rng.random_range(0..=affiliations.len());
                a.affiliation_indices = (1..=k as u32).collect();
            }
            if rng.random_bool(0.1) {
                a.given_name = Some("Vincent".into());
                a.surname = Some("van Gogh".into());
            }
            a
        })
        .collect();
    let bibliography = (0..rng.random_range(0..=3))
        .map(|i| BibliographyRef {
            key: format!("ref{i}"),
            title: rng.random_bool(0.7).then(|| words(rng, 2..=6)),
            doi: rng.random_bool(0.8).then(|| format!("10.{}/{}", rng.random_range(1000..99999), i)),
            url: rng.random_bool(0.3).then(|| format!("https://example.org/{i}")),
        })
        .collect::<Vec<_>>();
    let bibliography_file = (bibliography.is_empty() && rng.random_bool(0.3)).then(|| "paper.bib".to_string());
    Manuscript {
        title: words(rng, 1..=8).trim().to_string().replace("  ", " ") + " toolkit",
        authors,
        affiliations,
        date: NaiveDate::from_ymd_opt(rng.random_range(2016..2030), rng.random_range(1..=12), rng.random_range(1..=28)),
        tags: (0..rng.random_range(1..=4)).map(|_| words(rng, 1..=2)).collect(),
        body_markdown: format!("\n# Summary\n\n{}.\n\n---\n\n# References\n", words(rng, 5..=30)),
        bibliography,
        bibliography_file,
    }
}

pub fn seeded(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

// ---- statistics oracles ----

/// Straightforward sample statistics used to check the analytics module.
pub mod oracle {
    pub fn mean(xs: &[f64]) -> f64 {
        let mut total = 0.0;
        for x in xs {
            total += x;
        }
        total / xs.len() as f64
    }

    /// Top-down merge sort, deliberately unlike the library's sort.
    pub fn sorted(xs: &[f64]) -> Vec<f64> {
        if xs.len() <= 1 {
            return xs.to_vec();
        }
        let (l, r) = xs.split_at(xs.len() / 2);
        let (l, r) = (sorted(l), sorted(r));
        let mut out = Vec::with_capacity(xs.len());
        let (mut i, mut j) = (0, 0);
        while i < l.len() && j < r.len() {
            if l[i] <= r[j] {
                out.push(l[i]);
                i += 1;
            } else {
                out.push(r[j]);
                j += 1;
            }
        }
        out.extend_from_slice(&l[i..]);
        out.extend_from_slice(&r[j..]);
        out
    }

    pub fn median(xs: &[f64]) -> f64 {
        let v = sorted(xs);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        }
    }

    /// Type-7 quantile: position p*(n-1), linear interpolation.
    pub fn quantile(xs: &[f64], p: f64) -> f64 {
        let v = sorted(xs);
        let pos = p * (v.len() as f64 - 1.0);
        let below = pos.floor();
        let frac = pos - below;
        let i = below as usize;
        if i + 1 >= v.len() {
            return v[v.len() - 1];
        }
        v[i] * (1.0 - frac) + v[i + 1] * frac
    }

    pub fn iqr(xs: &[f64]) -> f64 {
        quantile(xs, 0.75) - quantile(xs, 0.25)
    }

    /// Population standard deviation, two-pass.
    pub fn std_dev(xs: &[f64]) -> f64 {
        let m = mean(xs);
        let mut acc = 0.0;
        for x in xs {
            acc += (x - m) * (x - m);
        }
        (acc / xs.len() as f64).sqrt()
    }

    pub fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
    }
}

/// Independent checks on Crossref deposit XML.
pub mod deposit {
    use chrono::Datelike;

    use journal_core::article::{
        build_crossref_deposit, mint_article_doi, validate_archive_doi, DepositSettings, Manuscript,
    };

    /// Elements that appear exactly once in every deposit.
    pub const SINGLE_ELEMENTS: [&str; 21] = [
        "doi_batch",
        "head",
        "doi_batch_id",
        "timestamp",
        "body",
        "journal",
        "journal_metadata",
        "journal_title",
        "issn",
        "journal_article",
        "article_title",
        "contributors",
        "publication_date",
        "year",
        "month",
        "day",
        "license_ref",
        "archive_doi",
        "doi_data",
        "doi",
        "resource",
    ];

    pub fn count(doc: &roxmltree::Document, name: &str) -> usize {
        doc.descendants().filter(|n| n.has_tag_name(name)).count()
    }

    pub fn text_of<'a>(doc: &'a roxmltree::Document, name: &str) -> Option<&'a str> {
        doc.descendants().find(|n| n.has_tag_name(name)).and_then(|n| n.text())
    }

    /// Given/surname split on the last run of whitespace, written without the
    /// library's helper.
    pub fn split_name(name: &str) -> (Option<String>, String) {
        let words: Vec<&str> = name.split_whitespace().collect();
        match words.split_last() {
            Some((last, [])) => (None, last.to_string()),
            Some((last, rest)) => (Some(rest.join(" ")), last.to_string()),
            None => (None, String::new()),
        }
    }

    pub fn check_deposit(m: &Manuscript, seq: u64) -> Result<(), String> {
        let doi = mint_article_doi(seq).unwrap();
        let archive = validate_archive_doi("10.5281/zenodo.401403").unwrap();
        let date = m.date.unwrap();
        let deposit = build_crossref_deposit(m, &doi, &archive, date, &DepositSettings::default())
            .map_err(|e| e.to_string())?;
        let xml = deposit.to_xml();
        let doc = roxmltree::Document::parse(&xml).map_err(|e| format!("not well-formed: {e}"))?;
        for name in SINGLE_ELEMENTS {
            let n = count(&doc, name);
            if n != 1 {
                return Err(format!("<{name}> appears {n} times"));
            }
        }
        if count(&doc, "person_name") != m.authors.len() || count(&doc, "surname") != m.authors.len() {
            return Err("contributor count mismatch".into());
        }
        if text_of(&doc, "article_title") != Some(m.title.as_str()) {
            return Err(format!("title {:?}", text_of(&doc, "article_title")));
        }
        if text_of(&doc, "doi") != Some(doi.to_string().as_str()) {
            return Err("doi text".into());
        }
        if text_of(&doc, "year") != Some(date.year().to_string().as_str()) {
            return Err("year".into());
        }
        if text_of(&doc, "license_ref") != Some("https://creativecommons.org/licenses/by/4.0/") {
            return Err("license".into());
        }
        let people: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("person_name")).collect();
        for (author, node) in m.authors.iter().zip(people) {
            let (given, surname) = match (&author.given_name, &author.surname) {
                (g, Some(s)) => (g.clone(), s.clone()),
                _ => split_name(&author.name),
            };
            let child = |tag: &str| node.children().find(|c| c.has_tag_name(tag)).and_then(|c| c.text()).map(str::to_owned);
            if child("surname") != Some(surname.clone()) || child("given_name") != given {
                return Err(format!("name split for {:?}", author.name));
            }
            let orcid = child("ORCID");
            if orcid != author.orcid.as_ref().map(|o| format!("https://orcid.org/{o}")) {
                return Err(format!("orcid for {:?}", author.name));
            }
        }
        Ok(())
    }
}
