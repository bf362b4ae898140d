//! Text-mode desk sessions. Every command maps onto one [`EngineHandle`] call;
//! the REPL only parses input and formats output.

use std::path::{Path, PathBuf};

use tokio::io::{AsyncBufRead, AsyncBufReadExt, AsyncWrite, AsyncWriteExt};

use crate::error::{Error, Result, StorageError};
use crate::memory::{MemoryMode, MemoryQuery};
use crate::ritual::devices::load_image;
use crate::ritual::StepReport;
use crate::transcript::TranscriptSpeaker;

use super::EngineHandle;

pub const HELP: &str = "commands:
  awaken [image-file]   start a session (camera if no file is given)
  say <text>            speak to the object
  hear <wav-file>       transcribe audio and treat it as speech
  goodbye               end the session
  objects               list known objects
  memories <id> [query] show an object's memories, or search them
  state                 show the current phase
  help                  this text
  quit                  leave";

pub const MEMORY_LIMIT: usize = 20;

#[derive(Debug, Clone, Default)]
pub struct ReplOptions {
    pub show_inner: bool,
    /// Relative file arguments are resolved against this directory.
    pub base_dir: Option<PathBuf>,
    /// Print a prompt before each line (interactive use).
    pub prompt: bool,
}

pub struct Repl<W> {
    handle: EngineHandle,
    out: W,
    opts: ReplOptions,
    name: Option<String>,
}

enum Flow {
    Continue,
    Quit,
}

impl<W: AsyncWrite + Unpin> Repl<W> {
    pub fn new(handle: EngineHandle, out: W, opts: ReplOptions) -> Self {
        Self {
            handle,
            out,
            opts,
            name: None,
        }
    }

    /// Greeting for interactive use.
    pub async fn line_intro(&mut self) -> Result<()> {
        self.line("portal ready. type `help` for commands.").await
    }

    pub fn into_output(self) -> W {
        self.out
    }

    /// Reads commands until `quit` or end of input.
    pub async fn run<R: AsyncBufRead + Unpin>(&mut self, input: R) -> Result<()> {
        let mut lines = input.lines();
        loop {
            if self.opts.prompt {
                self.write("portal> ").await?;
            }
            let Some(line) = lines.next_line().await.map_err(|e| StorageError::io("<stdin>", e))? else {
                break;
            };
            if let Flow::Quit = self.execute(&line).await? {
                break;
            }
        }
        Ok(())
    }

    /// Runs a `;`-separated script.
    pub async fn run_script(&mut self, script: &str) -> Result<()> {
        for cmd in script.split(';') {
            if let Flow::Quit = self.execute(cmd).await? {
                break;
            }
        }
        Ok(())
    }

    async fn write(&mut self, text: &str) -> Result<()> {
        self.out
            .write_all(text.as_bytes())
            .await
            .map_err(|e| StorageError::io("<stdout>", e))?;
        self.out.flush().await.map_err(|e| StorageError::io("<stdout>", e).into())
    }

    async fn line(&mut self, text: &str) -> Result<()> {
        self.write(&format!("{text}\n")).await
    }

    fn path(&self, arg: &str) -> PathBuf {
        match &self.opts.base_dir {
            Some(base) if Path::new(arg).is_relative() => base.join(arg),
            _ => PathBuf::from(arg),
        }
    }

    async fn execute(&mut self, raw: &str) -> Result<Flow> {
        let raw = raw.trim();
        if raw.is_empty() {
            return Ok(Flow::Continue);
        }
        let (cmd, arg) = raw.split_once(char::is_whitespace).unwrap_or((raw, ""));
        let arg = arg.trim();
        let outcome = match cmd {
            "quit" | "exit" => return Ok(Flow::Quit),
            "help" => self.line(HELP).await,
            "awaken" => self.awaken(arg).await,
            "say" if !arg.is_empty() => match self.handle.utterance(arg).await {
                Ok(r) => self.print_report(&r).await,
                Err(e) => Err(e),
            },
            "hear" if !arg.is_empty() => {
                let path = self.path(arg);
                match std::fs::read(&path) {
                    Ok(audio) => match self.handle.hear(audio).await {
                        Ok(r) => self.print_report(&r).await,
                        Err(e) => Err(e),
                    },
                    Err(e) => Err(StorageError::io(&path, e).into()),
                }
            }
            "goodbye" => match self.handle.goodbye().await {
                Ok(r) => self.print_report(&r).await,
                Err(e) => Err(e),
            },
            "objects" => self.objects().await,
            "memories" if !arg.is_empty() => self.memories(arg).await,
            "state" => match self.handle.snapshot(crate::events::Channel::Participant).await {
                Ok(s) => self.line(&format!("phase: {:?}", s.phase)).await,
                Err(e) => Err(e),
            },
            _ => self.line(&format!("unknown command {raw:?}\n{HELP}")).await,
        };
        match outcome {
            Ok(()) => {}
            Err(Error::EngineStopped) => return Err(Error::EngineStopped),
            Err(e) => self.line(&format!("error: {e}")).await?,
        }
        Ok(Flow::Continue)
    }

    async fn awaken(&mut self, arg: &str) -> Result<()> {
        let image = if arg.is_empty() {
            None
        } else {
            Some(load_image(&self.path(arg))?)
        };
        let r = self.handle.awaken(image).await?;
        self.print_report(&r).await
    }

    async fn objects(&mut self) -> Result<()> {
        let objects = self.handle.objects().await?;
        if objects.is_empty() {
            return self.line("(none)").await;
        }
        for o in objects {
            self.line(&format!("{}  {}  {}", o.object_id, o.persona.name, o.description))
                .await?;
        }
        Ok(())
    }

    async fn memories(&mut self, arg: &str) -> Result<()> {
        let (id, query) = arg.split_once(char::is_whitespace).unwrap_or((arg, ""));
        let query = query.trim();
        let q = MemoryQuery {
            mode: if query.is_empty() { MemoryMode::History } else { MemoryMode::Search },
            object_id: id.to_string(),
            limit: MEMORY_LIMIT,
            query_text: (!query.is_empty()).then(|| query.to_string()),
        };
        let found = self.handle.memories(q).await?;
        if found.is_empty() {
            return self.line("(none)").await;
        }
        for (r, score) in found {
            let who = match r.speaker {
                crate::memory::Speaker::Human => "human",
                crate::memory::Speaker::Object => "object",
            };
            let score = score.map(|s| format!(" ({s:.3})")).unwrap_or_default();
            self.line(&format!("{} {who}{score}: {}", r.created_at.format("%Y-%m-%d %H:%M:%S"), r.text))
                .await?;
        }
        Ok(())
    }

    async fn print_report(&mut self, r: &StepReport) -> Result<()> {
        if r.noop {
            return self.line("(nothing to do: a session is already active)").await;
        }
        if let Some(o) = &r.object {
            self.name = Some(o.name.clone());
            let how = if r.was_new == Some(true) { "met for the first time" } else { "remembered" };
            self.line(&format!("[portal] {} awakens ({how}, {})", o.name, o.object_id))
                .await?;
        }
        let name = self.name.clone().unwrap_or_else(|| "object".into());
        if self.opts.show_inner {
            for t in &r.inner_thoughts {
                self.line(&format!(
                    "  (inner) {} [intent {:.2}, speak {}]",
                    t.inner_thoughts.replace('\n', " "),
                    t.engagement_intent,
                    if t.speak { "yes" } else { "no" }
                ))
                .await?;
            }
        }
        for e in &r.appended {
            let text = match (e.speaker, e.text()) {
                (TranscriptSpeaker::Human, _) => continue,
                (TranscriptSpeaker::Object, Some(t)) => format!("{name}: {t}"),
                (TranscriptSpeaker::Object, None) => format!("({name} stays silent)"),
                (TranscriptSpeaker::Portal, Some(t)) => format!("[portal] {t}"),
                (TranscriptSpeaker::Portal, None) => continue,
            };
            self.line(&text).await?;
        }
        if let Some(c) = &r.closed {
            let note = if c.aborted {
                "aborted"
            } else if c.summary_skipped {
                "closed, summary skipped"
            } else {
                "closed"
            };
            self.line(&format!("[session {} {note}]", c.session_id)).await?;
            self.name = None;
        }
        Ok(())
    }
}
