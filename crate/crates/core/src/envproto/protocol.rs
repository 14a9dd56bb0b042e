//! Text protocol over a pair of byte streams (normally stdin/stdout).
//!
//! Server to agent, per interaction:
//!
//! ```text
//! EVENT <t_ms> HANDOVER <ue> <from_enb> <to_enb>
//! OBS <t_ms> <v_1> ... <v_k>
//! REWARD <t_ms> <r>
//! STEP <t_ms>
//! ```
//!
//! The agent answers each `STEP` with `ACT <action_id>`. The episode closes
//! with `DONE <t_ms> <final_score>`; the agent may then send `RESET [seed]` to
//! start another episode, or close its end. UE indices are 0-based, eNB ids
//! 1-based. Reals carry 9 significant digits. A malformed agent line yields
//! `ERR <reason>` and ends the session.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use super::env::{handovers, EnvConfig, EnvError, RanEnv};

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Obs { t_ms: u64, values: Vec<f64> },
    Reward { t_ms: u64, value: f64 },
    /// Handover of UE `ue` between 1-based eNB ids.
    Handover { t_ms: u64, ue: usize, from: usize, to: usize },
    Step { t_ms: u64 },
    Act { action: usize },
    Done { t_ms: u64, final_score: f64 },
    Reset { seed: Option<u64> },
    Err { reason: String },
}

/// Formats a real with 9 significant digits.
pub fn format_real(x: f64) -> String {
    format!("{x:.8e}")
}

/// The value `x` takes after a trip through the wire format.
pub fn wire_round(x: f64) -> f64 {
    format_real(x).parse().expect("formatted real parses")
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::Obs { t_ms, values } => {
                write!(f, "OBS {t_ms}")?;
                for v in values {
                    write!(f, " {}", format_real(*v))?;
                }
                Ok(())
            }
            Message::Reward { t_ms, value } => write!(f, "REWARD {t_ms} {}", format_real(*value)),
            Message::Handover { t_ms, ue, from, to } => write!(f, "EVENT {t_ms} HANDOVER {ue} {from} {to}"),
            Message::Step { t_ms } => write!(f, "STEP {t_ms}"),
            Message::Act { action } => write!(f, "ACT {action}"),
            Message::Done { t_ms, final_score } => write!(f, "DONE {t_ms} {}", format_real(*final_score)),
            Message::Reset { seed: Some(s) } => write!(f, "RESET {s}"),
            Message::Reset { seed: None } => write!(f, "RESET"),
            Message::Err { reason } => write!(f, "ERR {reason}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ParseError(String);

fn field<T: FromStr>(tok: Option<&str>, what: &str) -> Result<T, ParseError> {
    let tok = tok.ok_or_else(|| ParseError(format!("missing {what}")))?;
    tok.parse().map_err(|_| ParseError(format!("bad {what} '{tok}'")))
}

impl FromStr for Message {
    type Err = ParseError;

    fn from_str(line: &str) -> Result<Self, ParseError> {
        let line = line.trim_end_matches(['\r', '\n']);
        if let Some(reason) = line.strip_prefix("ERR ") {
            return Ok(Message::Err { reason: reason.to_owned() });
        }
        let mut toks = line.split(' ');
        let head = toks.next().unwrap_or_default();
        let msg = match head {
            "OBS" => {
                let t_ms = field(toks.next(), "time")?;
                let values = toks.by_ref().map(|t| field(Some(t), "value")).collect::<Result<_, _>>()?;
                Message::Obs { t_ms, values }
            }
            "REWARD" => Message::Reward { t_ms: field(toks.next(), "time")?, value: field(toks.next(), "reward")? },
            "EVENT" => {
                let t_ms = field(toks.next(), "time")?;
                match toks.next() {
                    Some("HANDOVER") => Message::Handover {
                        t_ms,
                        ue: field(toks.next(), "ue")?,
                        from: field(toks.next(), "source eNB")?,
                        to: field(toks.next(), "target eNB")?,
                    },
                    other => return Err(ParseError(format!("unknown event {other:?}"))),
                }
            }
            "STEP" => Message::Step { t_ms: field(toks.next(), "time")? },
            "ACT" => Message::Act { action: field(toks.next(), "action id")? },
            "DONE" => Message::Done { t_ms: field(toks.next(), "time")?, final_score: field(toks.next(), "score")? },
            "RESET" => Message::Reset {
                seed: match toks.next() {
                    None => None,
                    tok => Some(field(tok, "seed")?),
                },
            },
            _ => return Err(ParseError(format!("unknown message '{head}'"))),
        };
        if toks.next().is_some() {
            return Err(ParseError(format!("trailing fields in {head} line")));
        }
        Ok(msg)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("peer protocol violation: {0}")]
    Peer(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What the server summarised after the session ended.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ServeSummary {
    pub episodes: usize,
    pub final_scores: Vec<f64>,
}

fn send<W: Write>(out: &mut W, msg: &Message) -> std::io::Result<()> {
    writeln!(out, "{msg}")
}

fn fail<W: Write>(out: &mut W, reason: String) -> ProtocolError {
    let _ = send(out, &Message::Err { reason: reason.clone() });
    let _ = out.flush();
    ProtocolError::Peer(reason)
}

fn read_message<R: BufRead>(input: &mut R) -> std::io::Result<Option<Result<Message, ParseError>>> {
    let mut line = String::new();
    if input.read_line(&mut line)? == 0 {
        return Ok(None);
    }
    Ok(Some(line.parse()))
}

/// Serves episodes of `config` until the peer closes its input. The first
/// episode uses `episode_seed`; `RESET` without a seed increments it.
pub fn serve_stdio<R: BufRead, W: Write>(
    config: EnvConfig,
    episode_seed: u64,
    mut input: R,
    mut output: W,
) -> Result<ServeSummary, ProtocolError> {
    let mut env = RanEnv::new(config)?;
    let mut summary = ServeSummary::default();
    let mut seed = episode_seed;
    loop {
        let obs = env.reset(seed)?;
        let mut t_ms = env.simulator().map_or(0, |s| s.clock_ms());
        send(&mut output, &Message::Obs { t_ms, values: obs.data })?;
        loop {
            send(&mut output, &Message::Step { t_ms })?;
            output.flush()?;
            let action = match read_message(&mut input)? {
                None => return Ok(summary),
                Some(Ok(Message::Act { action })) => action,
                Some(Ok(other)) => return Err(fail(&mut output, format!("expected ACT, got {}", other_head(&other)))),
                Some(Err(e)) => return Err(fail(&mut output, e.0)),
            };
            let r = match env.step(action) {
                Ok(r) => r,
                Err(EnvError::InvalidAction(a)) => return Err(fail(&mut output, format!("invalid action {a}"))),
                Err(e) => return Err(e.into()),
            };
            for (t, ue, from, to) in handovers(&r.info.events) {
                send(&mut output, &Message::Handover { t_ms: t, ue, from: from + 1, to: to + 1 })?;
            }
            t_ms = r.info.t_ms;
            send(&mut output, &Message::Obs { t_ms, values: r.observation.data })?;
            send(&mut output, &Message::Reward { t_ms, value: r.reward })?;
            if r.done {
                send(&mut output, &Message::Done { t_ms, final_score: r.info.score })?;
                output.flush()?;
                summary.episodes += 1;
                summary.final_scores.push(r.info.score);
                break;
            }
        }
        match read_message(&mut input)? {
            None => return Ok(summary),
            Some(Ok(Message::Reset { seed: s })) => seed = s.unwrap_or(seed.wrapping_add(1)),
            Some(Ok(other)) => return Err(fail(&mut output, format!("expected RESET, got {}", other_head(&other)))),
            Some(Err(e)) => return Err(fail(&mut output, e.0)),
        }
    }
}

fn other_head(m: &Message) -> String {
    m.to_string().split(' ').next().unwrap_or_default().to_owned()
}

/// Everything the server sent up to (and including) the next `STEP` or `DONE`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Prompt {
    pub t_ms: u64,
    pub observation: Vec<f64>,
    pub reward: Option<f64>,
    /// `(ue, from, to)` with 1-based eNB ids.
    pub handovers: Vec<(usize, usize, usize)>,
    /// Set when the episode ended.
    pub final_score: Option<f64>,
}

/// Agent-side endpoint of the protocol.
pub struct ProtocolClient<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> ProtocolClient<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self { input, output }
    }

    /// Reads server lines until a `STEP` or `DONE` arrives.
    pub fn next_prompt(&mut self) -> Result<Prompt, ProtocolError> {
        let mut prompt = Prompt::default();
        loop {
            let msg = match read_message(&mut self.input)? {
                None => return Err(ProtocolError::Peer("server closed the stream".into())),
                Some(Ok(m)) => m,
                Some(Err(e)) => return Err(ProtocolError::Peer(e.0)),
            };
            match msg {
                Message::Obs { t_ms, values } => {
                    prompt.t_ms = t_ms;
                    prompt.observation = values;
                }
                Message::Reward { value, .. } => prompt.reward = Some(value),
                Message::Handover { ue, from, to, .. } => prompt.handovers.push((ue, from, to)),
                Message::Step { t_ms } => {
                    prompt.t_ms = t_ms;
                    return Ok(prompt);
                }
                Message::Done { t_ms, final_score } => {
                    prompt.t_ms = t_ms;
                    prompt.final_score = Some(final_score);
                    return Ok(prompt);
                }
                Message::Err { reason } => return Err(ProtocolError::Peer(reason)),
                other => return Err(ProtocolError::Peer(format!("unexpected {}", other_head(&other)))),
            }
        }
    }

    pub fn act(&mut self, action: usize) -> Result<(), ProtocolError> {
        send(&mut self.output, &Message::Act { action })?;
        Ok(self.output.flush()?)
    }

    pub fn reset(&mut self, seed: Option<u64>) -> Result<(), ProtocolError> {
        send(&mut self.output, &Message::Reset { seed })?;
        Ok(self.output.flush()?)
    }

    /// Plays one episode choosing actions with `policy`; returns the rewards
    /// and the final score as received.
    pub fn run_episode(
        &mut self,
        mut policy: impl FnMut(&Prompt) -> usize,
    ) -> Result<(Vec<f64>, f64), ProtocolError> {
        let mut rewards = Vec::new();
        loop {
            let p = self.next_prompt()?;
            if let Some(r) = p.reward {
                rewards.push(r);
            }
            if let Some(score) = p.final_score {
                return Ok((rewards, score));
            }
            let a = policy(&p);
            self.act(a)?;
        }
    }

    pub fn into_inner(self) -> (R, W) {
        (self.input, self.output)
    }
}
