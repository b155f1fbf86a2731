//! Chat-ops commands addressed to the bot in issue comments.
//!
//! ```text
//! @bot assign @<handle> as editor
//! @bot assign @<handle> as reviewer
//! @bot start review magic-word=<token>
//! @bot set <doi> as archive
//! @bot generate pdf
//! @bot commands
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::article::{PipelineHandle, Severity};
use crate::checklist::ChecklistTemplate;
use crate::forge::{Forge, IssueRef};
use crate::person::{PersonRef, PersonRegistry, Role};
use crate::workflow::{Submission, SubmissionState, WorkflowError, WorkflowSettings};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "command", content = "argument", rename_all = "snake_case")]
pub enum Command {
    AssignEditor(String),
    AssignReviewer(String),
    StartReview(String),
    SetArchive(String),
    GeneratePdf,
    Commands,
}

impl Command {
    /// Canonical text form; parsing it yields the same command.
    pub fn to_text(&self, bot_handle: &str) -> String {
        match self {
            Command::AssignEditor(h) => format!("@{bot_handle} assign @{h} as editor"),
            Command::AssignReviewer(h) => format!("@{bot_handle} assign @{h} as reviewer"),
            Command::StartReview(w) => format!("@{bot_handle} start review magic-word={w}"),
            Command::SetArchive(d) => format!("@{bot_handle} set {d} as archive"),
            Command::GeneratePdf => format!("@{bot_handle} generate pdf"),
            Command::Commands => format!("@{bot_handle} commands"),
        }
    }

    /// Commands that change a submission are limited to editorial roles.
    pub fn allowed(&self, role: Role) -> bool {
        match self {
            Command::AssignEditor(_)
            | Command::AssignReviewer(_)
            | Command::StartReview(_)
            | Command::SetArchive(_) => role.is_editorial(),
            Command::GeneratePdf | Command::Commands => true,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::AssignEditor(_) => "assign an editor",
            Command::AssignReviewer(_) => "assign a reviewer",
            Command::StartReview(_) => "start the review",
            Command::SetArchive(_) => "set the archive",
            Command::GeneratePdf => "generate the article",
            Command::Commands => "list commands",
        }
    }
}

/// The comment mentions the bot but is not a command.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("comment addresses the bot but is not a command: {text:?}")]
pub struct MalformedCommand {
    pub text: String,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("@{0} is not registered")]
pub struct UnknownActor(pub String);

fn is_handle(text: &str) -> bool {
    !text.is_empty() && text.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

/// True when `token` starts with the mention and the mention is not the
/// prefix of a longer handle (`@whedon!` mentions, `@whedonbot` does not).
fn mentions(token: &str, mention: &str) -> bool {
    let Some(head) = token.get(..mention.len()) else {
        return false;
    };
    head.eq_ignore_ascii_case(mention)
        && token[mention.len()..]
            .chars()
            .next()
            .is_none_or(|c| !(c.is_ascii_alphanumeric() || c == '-'))
}

/// Parses a comment. `Ok(None)` means the bot was not addressed at all.
pub fn parse_command(text: &str, bot_handle: &str) -> Result<Option<Command>, MalformedCommand> {
    let mention = format!("@{}", bot_handle.trim_start_matches('@'));
    let mut tokens = text.split_whitespace();
    let Some(first) = tokens.next() else {
        return Ok(None);
    };
    if !first.eq_ignore_ascii_case(&mention) {
        if text.split_whitespace().any(|t| mentions(t, &mention)) {
            return Err(MalformedCommand { text: text.to_owned() });
        }
        return Ok(None);
    }
    let words: Vec<&str> = tokens.take(4).collect();
    let command = match words.as_slice() {
        ["assign", target, "as", "editor", ..] => target
            .strip_prefix('@')
            .filter(|h| is_handle(h))
            .map(|h| Command::AssignEditor(h.to_owned())),
        ["assign", target, "as", "reviewer", ..] => target
            .strip_prefix('@')
            .filter(|h| is_handle(h))
            .map(|h| Command::AssignReviewer(h.to_owned())),
        ["start", "review", arg, ..] => arg
            .strip_prefix("magic-word=")
            .filter(|w| !w.is_empty())
            .map(|w| Command::StartReview(w.to_owned())),
        ["set", doi, "as", "archive", ..] => Some(Command::SetArchive((*doi).to_owned())),
        ["generate", "pdf", ..] => Some(Command::GeneratePdf),
        ["commands", ..] => Some(Command::Commands),
        _ => None,
    };
    command
        .map(Some)
        .ok_or_else(|| MalformedCommand { text: text.to_owned() })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotCommand {
    pub command: Command,
    pub actor: PersonRef,
    pub issue: IssueRef,
    pub raw_text: String,
}

impl BotCommand {
    /// Parses `text` and attaches the comment's context.
    pub fn parse(
        text: &str,
        bot_handle: &str,
        actor: PersonRef,
        issue: IssueRef,
    ) -> Result<Option<Self>, MalformedCommand> {
        Ok(parse_command(text, bot_handle)?.map(|command| BotCommand {
            command,
            actor,
            issue,
            raw_text: text.trim_start().to_owned(),
        }))
    }
}

/// Looks the actor up in the registry; the registered role is authoritative.
pub fn authorize(cmd: &BotCommand, registry: &PersonRegistry) -> Result<bool, UnknownActor> {
    let person = registry
        .get(&cmd.actor.handle)
        .ok_or_else(|| UnknownActor(cmd.actor.handle.clone()))?;
    Ok(cmd.command.allowed(person.role))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandStatus {
    Applied,
    RejectedUnauthorized,
    RejectedInvalid,
    Ignored,
}

impl fmt::Display for CommandStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommandStatus::Applied => "applied",
            CommandStatus::RejectedUnauthorized => "rejected_unauthorized",
            CommandStatus::RejectedInvalid => "rejected_invalid",
            CommandStatus::Ignored => "ignored",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandOutcome {
    pub status: CommandStatus,
    pub reply: Option<String>,
}

impl CommandOutcome {
    pub fn ignored() -> Self {
        Self {
            status: CommandStatus::Ignored,
            reply: None,
        }
    }

    fn applied(reply: String) -> Self {
        Self {
            status: CommandStatus::Applied,
            reply: Some(reply),
        }
    }

    fn invalid(reply: String) -> Self {
        Self {
            status: CommandStatus::RejectedInvalid,
            reply: Some(reply),
        }
    }
}

pub fn help_text(bot_handle: &str) -> String {
    let examples = [
        Command::AssignEditor("username".into()),
        Command::AssignReviewer("username".into()),
        Command::StartReview("<magic word>".into()),
        Command::SetArchive("10.0000/zenodo.00000".into()),
        Command::GeneratePdf,
        Command::Commands,
    ];
    let mut out = String::from("Here are the commands I understand:\n\n```\n");
    for cmd in examples {
        out.push_str(&cmd.to_text(bot_handle));
        out.push('\n');
    }
    out.push_str("```\n");
    out
}

/// Everything `execute` needs besides the submission and the forge.
pub struct CommandContext<'a> {
    pub registry: &'a PersonRegistry,
    pub settings: &'a WorkflowSettings,
    pub template: &'a ChecklistTemplate,
    pub pipeline: &'a dyn PipelineHandle,
    pub bot_handle: &'a str,
}

/// Runs an authorized command against `submission` and posts the reply to the
/// originating issue. Delegate errors become `RejectedInvalid`.
pub fn execute(
    cmd: &BotCommand,
    submission: &mut Submission,
    forge: &mut dyn Forge,
    ctx: &CommandContext<'_>,
) -> CommandOutcome {
    let actor = ctx
        .registry
        .get(&cmd.actor.handle)
        .cloned()
        .unwrap_or_else(|| cmd.actor.clone());
    let result: Result<String, WorkflowError> = match &cmd.command {
        Command::AssignEditor(handle) => match ctx.registry.get(handle) {
            Some(editor) => submission
                .assign_editor(editor.clone(), &actor)
                .map(|_| format!("Editor assigned: @{}", editor.handle)),
            None => Err(WorkflowError::NotAnEditor(handle.clone())),
        },
        Command::AssignReviewer(handle) => {
            let reviewer = match ctx.registry.get(handle) {
                Some(p) => Ok(p.clone()),
                None => PersonRef::new(handle.as_str(), Role::Reviewer)
                    .map_err(|e| WorkflowError::InvalidField(e.to_string())),
            };
            reviewer.and_then(|reviewer| {
                let handle = reviewer.handle.clone();
                submission
                    .assign_reviewer(reviewer, &actor, ctx.template)
                    .map(|_| format!("Reviewer assigned: @{handle}"))
            })
        }
        Command::StartReview(word) => submission
            .start_review(word, &actor, forge, ctx.settings, ctx.template)
            .map(|issue| format!("Review started in {issue}. The reviewer checklists are in its description.")),
        Command::SetArchive(doi) => submission
            .set_archive(doi, &actor)
            .map(|archive| format!("Archive set: {archive} ({})", archive.url())),
        Command::GeneratePdf => match ctx.pipeline.preview(submission) {
            Ok(violations) if violations.is_empty() => {
                Ok("The article compiled cleanly; no metadata problems found.".to_owned())
            }
            Ok(violations) => {
                let mut reply = String::from("The article compiled with these metadata problems:\n\n");
                for v in violations {
                    let tag = match v.severity() {
                        Severity::Blocking => "blocking",
                        Severity::Warning => "warning",
                    };
                    reply.push_str(&format!("- ({tag}) {v}\n"));
                }
                Ok(reply)
            }
            Err(e) => Err(WorkflowError::Pipeline(e)),
        },
        Command::Commands => Ok(help_text(ctx.bot_handle)),
    };

    let outcome = match result {
        Ok(reply) => CommandOutcome::applied(reply),
        Err(WorkflowError::WrongMagicWord) => CommandOutcome::invalid(
            "That magic word is not correct, so no review issue was opened. \
             The magic word is a safeguard that keeps a review from starting by accident."
                .to_owned(),
        ),
        Err(err) => CommandOutcome::invalid(format!("I couldn't {}: {err}", cmd.command.name())),
    };

    if outcome.status == CommandStatus::Applied && submission.state() == SubmissionState::UnderReview {
        sync_review_issue(submission, forge, ctx.template);
    }
    if let Some(reply) = &outcome.reply {
        if let Err(err) = forge.post_comment(&cmd.issue, reply) {
            tracing::warn!(issue = %cmd.issue, %err, "could not post command reply");
        }
    }
    outcome
}

/// Rewrites the review issue description from the stored submission.
pub fn sync_review_issue(submission: &Submission, forge: &mut dyn Forge, template: &ChecklistTemplate) {
    let Some(issue) = submission.review_issue() else {
        return;
    };
    let body = submission.review_body(template);
    if forge.issue_body(issue).as_deref() == Some(body.as_str()) {
        return;
    }
    if let Err(err) = forge.edit_issue(issue, &body) {
        tracing::warn!(%issue, %err, "could not update review issue");
    }
}

/// Parse, authorize and execute one comment.
///
/// Unauthorized commands touch neither the submission nor the forge; the
/// explanation is returned in the outcome only.
pub fn handle_comment(
    text: &str,
    actor: PersonRef,
    issue: IssueRef,
    submission: &mut Submission,
    forge: &mut dyn Forge,
    ctx: &CommandContext<'_>,
) -> CommandOutcome {
    let cmd = match BotCommand::parse(text, ctx.bot_handle, actor, issue.clone()) {
        Ok(None) => return CommandOutcome::ignored(),
        Ok(Some(cmd)) => cmd,
        Err(_) => {
            let reply = format!(
                "Sorry, I didn't understand that. {}",
                help_text(ctx.bot_handle)
            );
            if let Err(err) = forge.post_comment(&issue, &reply) {
                tracing::warn!(%issue, %err, "could not post help reply");
            }
            return CommandOutcome::invalid(reply);
        }
    };
    match authorize(&cmd, ctx.registry) {
        Ok(true) => execute(&cmd, submission, forge, ctx),
        Ok(false) | Err(_) => CommandOutcome {
            status: CommandStatus::RejectedUnauthorized,
            reply: Some(format!(
                "@{} is not allowed to {}.",
                cmd.actor.handle,
                cmd.command.name()
            )),
        },
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::article::ArticlePipeline;
    use crate::clock::{Clock, SteppingClock};
    use crate::forge::SimulatedForge;
    use crate::workflow::{create_submission, SequenceCounter, SubmissionRequest};

    fn parse(text: &str) -> Result<Option<Command>, MalformedCommand> {
        parse_command(text, "whedon")
    }

    #[test]
    fn golden_commands() {
        assert_eq!(
            parse("@whedon assign @danielskatz as editor"),
            Ok(Some(Command::AssignEditor("danielskatz".into())))
        );
        assert_eq!(
            parse("@whedon start review magic-word=bananas"),
            Ok(Some(Command::StartReview("bananas".into())))
        );
        assert_eq!(
            parse("@whedon set 10.5281/zenodo.401403 as archive"),
            Ok(Some(Command::SetArchive("10.5281/zenodo.401403".into())))
        );
        assert_eq!(
            parse("@whedon assign @zhaozhang as reviewer"),
            Ok(Some(Command::AssignReviewer("zhaozhang".into())))
        );
    }

    #[test]
    fn addressing_without_production_is_malformed() {
        assert!(parse("Great work @whedon!").is_err());
        assert!(parse("@whedon please do something").is_err());
        assert!(parse("@whedon assign danielskatz as editor").is_err());
        assert!(parse("@whedon Assign @x as editor").is_err());
        assert!(parse("@whedon start review magic-word=").is_err());
        assert!(parse("@whedon").is_err());
    }

    #[test]
    fn unaddressed_comments_are_ignored() {
        assert_eq!(parse("Thanks everyone"), Ok(None));
        assert_eq!(parse(""), Ok(None));
        assert_eq!(parse("ping @whedonbot"), Ok(None));
        assert_eq!(parse("email me at x@whedon.org"), Ok(None));
    }

    #[test]
    fn separators_and_trailing_text() {
        assert_eq!(
            parse("  @whedon   assign\t@a-b1   as  editor  thanks!\nmore"),
            Ok(Some(Command::AssignEditor("a-b1".into())))
        );
        assert_eq!(parse("@Whedon commands"), Ok(Some(Command::Commands)));
        assert_eq!(parse("@whedon generate pdf"), Ok(Some(Command::GeneratePdf)));
    }

    #[test]
    fn policy_table() {
        let all = [
            Role::Author,
            Role::Reviewer,
            Role::Editor,
            Role::EditorInChief,
            Role::Admin,
        ];
        for role in all {
            let editorial = matches!(role, Role::Editor | Role::EditorInChief | Role::Admin);
            assert_eq!(Command::AssignEditor("x".into()).allowed(role), editorial);
            assert_eq!(Command::AssignReviewer("x".into()).allowed(role), editorial);
            assert_eq!(Command::StartReview("x".into()).allowed(role), editorial);
            assert_eq!(Command::SetArchive("x".into()).allowed(role), editorial);
            assert!(Command::GeneratePdf.allowed(role));
            assert!(Command::Commands.allowed(role));
        }
    }

    #[test]
    fn unknown_actor_is_an_error() {
        let cmd = BotCommand::parse(
            "@whedon commands",
            "whedon",
            PersonRef::new("ghost", Role::Author).unwrap(),
            IssueRef::new("o/r", 1),
        )
        .unwrap()
        .unwrap();
        assert_eq!(
            authorize(&cmd, &PersonRegistry::new()),
            Err(UnknownActor("ghost".into()))
        );
    }

    struct World {
        registry: PersonRegistry,
        settings: WorkflowSettings,
        pipeline: ArticlePipeline,
        forge: SimulatedForge,
        submission: Submission,
        issue: IssueRef,
    }

    impl World {
        fn new() -> Self {
            let clock = Arc::new(SteppingClock::new(
                "2017-02-26T09:00:00Z".parse().unwrap(),
                chrono::Duration::minutes(5),
            ));
            let settings = WorkflowSettings::default();
            let mut forge = SimulatedForge::new("whedon", clock.clone());
            forge.add_repository(&settings.reviews_repository);
            let mut registry = PersonRegistry::new();
            for (h, r) in [
                ("lmcinnes", Role::Author),
                ("arfon", Role::EditorInChief),
                ("danielskatz", Role::Editor),
                ("zhaozhang", Role::Reviewer),
            ] {
                registry.register(PersonRef::new(h, r).unwrap()).unwrap();
            }
            let mut submission = create_submission(
                &SequenceCounter::starting_at(205),
                SubmissionRequest {
                    title: "hdbscan".into(),
                    repository_url: "https://github.com/scikit-learn-contrib/hdbscan".into(),
                    software_version: "0.8.12".into(),
                    author: registry.get("lmcinnes").unwrap().clone(),
                    presubmission_inquiry: None,
                },
                clock.now(),
            )
            .unwrap();
            let issue = submission.open_pre_review(&mut forge, &settings).unwrap();
            World {
                registry,
                settings,
                pipeline: ArticlePipeline::default(),
                forge,
                submission,
                issue,
            }
        }

        fn say(&mut self, actor: &str, text: &str) -> CommandOutcome {
            let ctx = CommandContext {
                registry: &self.registry,
                settings: &self.settings,
                template: ChecklistTemplate::standard(),
                pipeline: &self.pipeline,
                bot_handle: "whedon",
            };
            let actor = self
                .registry
                .get(actor)
                .cloned()
                .unwrap_or_else(|| PersonRef::new(actor, Role::Author).unwrap());
            handle_comment(text, actor, self.issue.clone(), &mut self.submission, &mut self.forge, &ctx)
        }
    }

    #[test]
    fn assign_editor_end_to_end() {
        let mut w = World::new();
        let out = w.say("arfon", "@whedon assign @danielskatz as editor");
        assert_eq!(out.status, CommandStatus::Applied);
        assert!(out.reply.unwrap().starts_with("Editor assigned"));
        assert_eq!(w.submission.editor().unwrap().handle, "danielskatz");
        let comments = &w.forge.issue(&w.issue).unwrap().comments;
        assert!(comments.last().unwrap().starts_with("Editor assigned"));
    }

    #[test]
    fn wrong_magic_word_mentions_safeguard() {
        let mut w = World::new();
        w.say("arfon", "@whedon assign @danielskatz as editor");
        w.say("danielskatz", "@whedon assign @zhaozhang as reviewer");
        let out = w.say("danielskatz", "@whedon start review magic-word=apples");
        assert_eq!(out.status, CommandStatus::RejectedInvalid);
        assert!(out.reply.unwrap().contains("safeguard"));
        assert_eq!(w.submission.state(), SubmissionState::PreReview);
        let out = w.say("danielskatz", "@whedon start review magic-word=bananas");
        assert_eq!(out.status, CommandStatus::Applied);
        assert_eq!(w.submission.state(), SubmissionState::UnderReview);
    }

    #[test]
    fn unauthorized_command_has_no_side_effects() {
        let mut w = World::new();
        let before = (w.submission.clone(), w.forge.event_log_text());
        let out = w.say("lmcinnes", "@whedon set 10.5281/zenodo.401403 as archive");
        assert_eq!(out.status, CommandStatus::RejectedUnauthorized);
        assert_eq!((w.submission.clone(), w.forge.event_log_text()), before);
        let out = w.say("stranger", "@whedon assign @stranger as editor");
        assert_eq!(out.status, CommandStatus::RejectedUnauthorized);
        assert_eq!((w.submission.clone(), w.forge.event_log_text()), before);
    }

    #[test]
    fn ignored_comments_produce_no_reply() {
        let mut w = World::new();
        let before = w.forge.event_log_text();
        assert_eq!(w.say("lmcinnes", "Thanks everyone"), CommandOutcome::ignored());
        assert_eq!(w.forge.event_log_text(), before);
    }

    #[test]
    fn malformed_gets_help() {
        let mut w = World::new();
        let out = w.say("lmcinnes", "Great work @whedon!");
        assert_eq!(out.status, CommandStatus::RejectedInvalid);
        assert!(out.reply.unwrap().contains("@whedon assign @username as editor"));
    }

    #[test]
    fn open_commands_for_authors() {
        let mut w = World::new();
        assert_eq!(w.say("lmcinnes", "@whedon commands").status, CommandStatus::Applied);
        let out = w.say("lmcinnes", "@whedon generate pdf");
        assert_eq!(out.status, CommandStatus::Applied);
    }

    #[test]
    fn help_lists_parseable_commands() {
        let help = help_text("whedon");
        let commands: Vec<_> = help
            .lines()
            .filter(|l| l.starts_with("@whedon"))
            .map(|l| parse(l).unwrap().unwrap())
            .collect();
        assert_eq!(commands.len(), 6);
    }
}
