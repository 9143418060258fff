//! `semindex` command line. [`run`] is the whole program; the binary only
//! wires it to the process streams and exit code.

use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand, ValueEnum};
use semindex_core::cbr::{DefaultSimilarity, SequenceMode};
use semindex_core::indexer::{delete_node, insert_node, render_indexed, ChangeSet};
use semindex_core::{
    check_correctness, index_hierarchy, infer_most_specific, parse_dconcepts, parse_hierarchy, ConceptHierarchy,
    ConceptName, Key, NodeId, Situation,
};
use semindex_store::{Assessment, Case, Episode, EpisodeKey, EpisodeMeta, InstanceRecord, Store};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "semindex", version, about = "Semantic key indexing of concept hierarchies")]
pub struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = "SEMINDEX_STORE", default_value = "semindex-store")]
    store: PathBuf,
    #[arg(long, global = true, env = "SEMINDEX_FORMAT", value_enum, default_value_t = Format::Human)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    /// Tab-separated fields, one record per line.
    Lines,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Index a hierarchy file and print the keys.
    Index {
        file: PathBuf,
        /// Also register the indexed axis in the store.
        #[arg(long)]
        register: bool,
    },
    /// Validate a hierarchy file and check its index.
    Check { file: PathBuf },
    /// Records whose key the given key partially unifies into.
    Query {
        #[arg(long)]
        axis: String,
        #[arg(long)]
        key: String,
    },
    /// Insert a node below PARENT (concept names from the root, joined by `>`).
    InsertNode {
        #[arg(long)]
        axis: String,
        #[arg(long)]
        parent: String,
        #[arg(long)]
        concept: String,
        /// Commit the new index and remap stored records. Without it the
        /// change set is only printed.
        #[arg(long)]
        remap: bool,
    },
    /// Delete the node at NODE (concept names from the root, joined by `>`).
    DeleteNode {
        #[arg(long)]
        axis: String,
        #[arg(long)]
        node: String,
        #[arg(long)]
        remap: bool,
    },
    /// Most specific valid d-concepts for a situation.
    Infer {
        #[arg(long)]
        situation: String,
        /// Stored d-concept set.
        #[arg(long, default_value = semindex_service::DEFAULT_DCONCEPTS)]
        dconcepts: String,
        /// Read the d-concepts from a file instead of the store.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Stored d-concept sets.
    #[command(subcommand)]
    Dconcepts(DConceptsCommand),
    /// Stored episodes.
    #[command(subcommand)]
    Episode(EpisodeCommand),
    /// Cases and retrieval.
    #[command(subcommand)]
    Cbr(CbrCommand),
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
}

#[derive(Debug, Subcommand)]
enum DConceptsCommand {
    /// Parse a d-concept file and store it under NAME.
    Put {
        file: PathBuf,
        #[arg(long, default_value = semindex_service::DEFAULT_DCONCEPTS)]
        name: String,
    },
    /// Print a stored set.
    Get {
        #[arg(long, default_value = semindex_service::DEFAULT_DCONCEPTS)]
        name: String,
    },
}

#[derive(Debug, Subcommand)]
enum EpisodeCommand {
    /// Store an episode and print its key.
    Add {
        #[arg(long)]
        id: String,
        /// RFC 3339; defaults to now.
        #[arg(long)]
        ts: Option<DateTime<Utc>>,
        #[arg(long, default_value = "")]
        subject: String,
        /// Affirmed bindings, e.g. `(A[0,0,1]),(T[0,1])`.
        #[arg(long, default_value = "")]
        situation: String,
        /// Negated bindings.
        #[arg(long, default_value = "")]
        negated: String,
        #[arg(long)]
        time: Option<String>,
        #[arg(long)]
        content: Option<String>,
        #[arg(long)]
        localization: Option<String>,
    },
    /// Print the episodes with ID, or the one at TS.
    Get {
        #[arg(long)]
        id: String,
        #[arg(long)]
        ts: Option<DateTime<Utc>>,
    },
}

#[derive(Debug, Subcommand)]
enum CbrCommand {
    /// Store a case and print its id.
    Add {
        /// Problem episodes as `id@timestamp`, oldest first.
        #[arg(long, required = true)]
        problem: Vec<String>,
        #[arg(long, default_value = "")]
        solution: String,
        #[arg(long)]
        assessment: Option<String>,
        #[arg(long)]
        score: Option<f64>,
    },
    /// The K most similar cases.
    Retrieve {
        #[arg(long)]
        situation: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, value_enum, default_value_t = Mode::Latest)]
        mode: Mode,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Latest,
    Mean,
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = Result<i32, Failure>;

struct Out<'a> {
    w: &'a mut dyn Write,
    format: Format,
}

impl Out<'_> {
    fn row(&mut self, fields: &[&dyn std::fmt::Display]) -> std::io::Result<()> {
        let sep = match self.format {
            Format::Human => "  ",
            Format::Lines => "\t",
        };
        let line: Vec<String> = fields.iter().map(|f| f.to_string()).collect();
        writeln!(self.w, "{}", line.join(sep))
    }

    fn text(&mut self, s: &str) -> std::io::Result<()> {
        self.w.write_all(s.as_bytes())
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    let mut o = Out { w: out, format: cli.format };
    match execute(&cli, &mut o, err) {
        Ok(code) => code,
        Err(Failure(msg)) => {
            let mut line = String::new();
            for part in msg.lines().map(str::trim).filter(|l| !l.is_empty()) {
                if !line.is_empty() {
                    line.push_str(if line.ends_with(':') { " " } else { "; " });
                }
                line.push_str(part);
            }
            let _ = writeln!(err, "error: {line}");
            EXIT_DOMAIN
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn open(cli: &Cli) -> Result<Store, Failure> {
    Ok(semindex_store::open_store(&cli.store)?)
}

fn parse_situation(text: &str) -> Result<Situation, Failure> {
    if text.trim().is_empty() {
        return Ok(Situation::default());
    }
    Ok(text.parse()?)
}

fn node_at(h: &ConceptHierarchy, path: &str) -> Result<NodeId, Failure> {
    let names = path
        .split('>')
        .map(|s| ConceptName::new(s.trim()).ok_or_else(|| Failure(format!("bad concept name in `{path}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    h.resolve_path(&names).ok_or_else(|| Failure(format!("no node at `{path}`")))
}

fn parse_episode_key(s: &str) -> Result<EpisodeKey, Failure> {
    let (id, ts) = s.rsplit_once('@').ok_or_else(|| Failure(format!("`{s}` is not of the form id@timestamp")))?;
    let ts = DateTime::parse_from_rfc3339(ts).map_err(|e| Failure(format!("{ts}: {e}")))?;
    Ok(EpisodeKey { id: id.to_string(), ts: ts.with_timezone(&Utc) })
}

fn records(situation: &str, negated: &str) -> Result<Vec<InstanceRecord>, Failure> {
    let mut out: Vec<InstanceRecord> =
        parse_situation(situation)?.bindings.iter().map(|b| InstanceRecord::affirmed(&b.axis, b.key.clone())).collect();
    out.extend(parse_situation(negated)?.bindings.iter().map(|b| InstanceRecord::negated(&b.axis, b.key.clone())));
    Ok(out)
}

fn record_row(o: &mut Out<'_>, episode: &EpisodeKey, r: &InstanceRecord) -> std::io::Result<()> {
    let value = r.value.as_deref().unwrap_or("-");
    let orphan = if r.orphaned { "orphaned" } else { "-" };
    o.row(&[episode, &r.axis, &r.node_key, &r.polarity.as_str(), &value, &orphan])
}

fn print_change(o: &mut Out<'_>, change: &ChangeSet) -> std::io::Result<()> {
    o.row(&[&"version", &change.from_version, &change.to_version])?;
    o.text(&change.to_string())
}

fn execute(cli: &Cli, o: &mut Out<'_>, err: &mut dyn Write) -> Outcome {
    match &cli.command {
        Command::Index { file, register } => {
            let ix = index_hierarchy(&parse_hierarchy(&read(file)?)?)?;
            o.text(&render_indexed(&ix))?;
            if *register {
                open(cli)?.register_axis(&ix)?;
            }
        }
        Command::Check { file } => {
            let h = parse_hierarchy(&read(file)?)?;
            let validation = h.validate();
            if !validation.is_valid() {
                o.text(&validation.to_string())?;
                return Ok(EXIT_DOMAIN);
            }
            let ix = index_hierarchy(&h)?;
            let report = check_correctness(&ix);
            if !report.is_correct() {
                o.text(&report.to_string())?;
                return Ok(EXIT_DOMAIN);
            }
            o.row(&[&"correct", &h.len(), &h.concepts().len()])?;
        }
        Command::Query { axis, key } => {
            let key: Key = key.parse()?;
            let store = open(cli)?;
            if !store.has_axis(axis)? {
                writeln!(err, "note: axis `{axis}` is not registered")?;
                return Ok(EXIT_OK);
            }
            for (e, r) in store.query_by_key(axis, &key)? {
                record_row(o, &e, &r)?;
            }
        }
        Command::InsertNode { axis, parent, concept, remap } => {
            let mut store = open(cli)?;
            let ix = store.axis(axis)?.index.clone();
            let parent = node_at(ix.hierarchy(), parent)?;
            let concept = ConceptName::new(concept).ok_or_else(|| Failure(format!("bad concept name `{concept}`")))?;
            let (next, change) = insert_node(&ix, parent, concept)?;
            maintain(&mut store, axis, &next, &change, *remap, o, err)?;
        }
        Command::DeleteNode { axis, node, remap } => {
            let mut store = open(cli)?;
            let ix = store.axis(axis)?.index.clone();
            let node = node_at(ix.hierarchy(), node)?;
            let (next, change) = delete_node(&ix, node)?;
            maintain(&mut store, axis, &next, &change, *remap, o, err)?;
        }
        Command::Infer { situation, dconcepts, file } => {
            let source = match file {
                Some(f) => read(f)?,
                None => open(cli)?.get_dconcepts(dconcepts)?,
            };
            let h = parse_dconcepts(&source)?;
            for name in infer_most_specific(&h, &parse_situation(situation)?) {
                o.row(&[&name])?;
            }
        }
        Command::Dconcepts(DConceptsCommand::Put { file, name }) => {
            open(cli)?.put_dconcepts(name, &read(file)?)?;
        }
        Command::Dconcepts(DConceptsCommand::Get { name }) => {
            o.text(&open(cli)?.get_dconcepts(name)?)?;
        }
        Command::Episode(EpisodeCommand::Add { id, ts, subject, situation, negated, time, content, localization }) => {
            let e = Episode {
                id: id.clone(),
                timestamp: ts.unwrap_or_else(Utc::now),
                subject: subject.clone(),
                instances: records(situation, negated)?,
                meta: EpisodeMeta { time: time.clone(), content: content.clone(), localization: localization.clone() },
            };
            let key = open(cli)?.put_episode(&e)?;
            o.row(&[&key])?;
        }
        Command::Episode(EpisodeCommand::Get { id, ts }) => {
            let store = open(cli)?;
            let episodes = match ts {
                Some(ts) => {
                    let key = EpisodeKey { id: id.clone(), ts: *ts };
                    vec![store.get_episode(&key)?.ok_or(semindex_store::StoreError::UnknownEpisode(key))?]
                }
                None => store.episodes_with_id(id)?,
            };
            if episodes.is_empty() {
                return Err(Failure(format!("no episode with id `{id}`")));
            }
            for e in episodes {
                let key = e.key();
                for r in &e.instances {
                    record_row(o, &key, r)?;
                }
            }
        }
        Command::Cbr(CbrCommand::Add { problem, solution, assessment, score }) => {
            let problem = problem.iter().map(|p| parse_episode_key(p)).collect::<Result<Vec<_>, _>>()?;
            let assessment =
                (assessment.is_some() || score.is_some()).then(|| Assessment { text: assessment.clone(), score: *score });
            let case = Case { id: 0, problem, solution: records(solution, "")?, assessment };
            let id = open(cli)?.add_case(&case)?;
            o.row(&[&id])?;
        }
        Command::Cbr(CbrCommand::Retrieve { situation, k, mode }) => {
            if *k == 0 {
                return Err(Failure("--k must be positive".into()));
            }
            let mode = match mode {
                Mode::Latest => SequenceMode::Latest,
                Mode::Mean => SequenceMode::Mean,
            };
            let store = open(cli)?;
            for (case, score) in store.retrieve(&parse_situation(situation)?, *k, &DefaultSimilarity, mode)? {
                let solution: Vec<String> = case.solution.iter().map(|r| format!("({}{})", r.axis, r.node_key)).collect();
                o.row(&[&case.id, &format!("{score:.6}"), &solution.join(",")])?;
            }
        }
        Command::Serve { port, host } => {
            let store = open(cli)?;
            let addr = SocketAddr::new(*host, *port);
            writeln!(err, "listening on {addr}")?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(semindex_service::serve(addr, store))?;
        }
    }
    Ok(EXIT_OK)
}

fn maintain(
    store: &mut Store,
    axis: &str,
    next: &semindex_core::IndexedHierarchy,
    change: &ChangeSet,
    remap: bool,
    o: &mut Out<'_>,
    err: &mut dyn Write,
) -> Result<(), Failure> {
    print_change(o, change)?;
    if remap {
        let report = store.apply_maintenance(axis, next, change)?;
        o.row(&[&"remap", &report.rewritten, &report.unchanged, &report.orphaned])?;
    } else {
        writeln!(err, "note: dry run, pass --remap to apply")?;
    }
    Ok(())
}
