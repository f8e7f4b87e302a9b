//! Domain knowledge: thematic classes, their spatial relations and the
//! region configurations the domain allows.
//!
//! The on-disk format is a small line-oriented text file:
//!
//! ```text
//! [classes]
//! Background 20 18
//! Muscle 200 18
//! [neighbors]
//! Background Muscle
//! [inclusions]
//! [configurations]
//! Background : Muscle
//! ```
//!
//! `#` starts a comment, blank lines are ignored and class order in
//! `[classes]` fixes the class index.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

/// Errors raised while loading or querying a knowledge base.
#[derive(Debug, Error)]
pub enum KbError {
    #[error("I/O error reading knowledge base: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid knowledge base: {0}")]
    Validation(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
}

pub type KbResult<T> = Result<T, KbError>;

/// A thematic class with its intensity prototype (0..255 scale).
#[derive(Debug, Clone, PartialEq)]
pub struct ThematicClass {
    pub id: usize,
    pub name: String,
    pub prototype_mean: f64,
    pub prototype_std: f64,
}

/// Neighborhood and inclusion relations, stored by class index.
///
/// Neighbor pairs are unordered and kept as `(min, max)`. Inclusion pairs
/// are ordered `(inner, outer)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpatialRelations {
    pub neighbor_pairs: BTreeSet<(usize, usize)>,
    pub inclusion_pairs: BTreeSet<(usize, usize)>,
}

impl SpatialRelations {
    pub fn are_neighbors(&self, a: usize, b: usize) -> bool {
        self.neighbor_pairs.contains(&(a.min(b), a.max(b)))
    }

    /// True when either class may sit inside the other.
    pub fn related_by_inclusion(&self, a: usize, b: usize) -> bool {
        self.inclusion_pairs.contains(&(a, b)) || self.inclusion_pairs.contains(&(b, a))
    }
}

/// A region of class `subject` may be surrounded by exactly the classes in
/// `context`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidConfiguration {
    pub subject: usize,
    pub context: BTreeSet<usize>,
}

/// How an observed local context is matched against configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchPolicy {
    /// Only configurations whose context equals the observed class set.
    Exact,
    /// Configurations with an identical context win; when none exists, any
    /// configuration whose context contains the observed set matches.
    #[default]
    Subset,
}

impl std::str::FromStr for MatchPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(MatchPolicy::Exact),
            "subset" => Ok(MatchPolicy::Subset),
            other => Err(format!(
                "unknown matching policy `{other}` (expected exact|subset)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    classes: Vec<ThematicClass>,
    relations: SpatialRelations,
    configurations: Vec<ValidConfiguration>,
}

/// Largest class count the 8-bit class map can carry (255 is reserved).
pub const MAX_CLASSES: usize = 254;

impl KnowledgeBase {
    /// Builds and validates a knowledge base from name-based descriptions.
    pub fn new(
        classes: Vec<(String, f64, f64)>,
        neighbors: Vec<(String, String)>,
        inclusions: Vec<(String, String)>,
        configurations: Vec<(String, Vec<String>)>,
    ) -> KbResult<Self> {
        let classes: Vec<ThematicClass> = classes
            .into_iter()
            .enumerate()
            .map(
                |(id, (name, prototype_mean, prototype_std))| ThematicClass {
                    id,
                    name,
                    prototype_mean,
                    prototype_std,
                },
            )
            .collect();
        validate_classes(&classes)?;

        let lookup = |name: &str| -> KbResult<usize> {
            classes
                .iter()
                .position(|c| c.name == name)
                .ok_or_else(|| KbError::Validation(format!("unknown class `{name}`")))
        };

        let mut relations = SpatialRelations::default();
        for (a, b) in &neighbors {
            let (a, b) = (lookup(a)?, lookup(b)?);
            if a == b {
                return Err(KbError::Validation(format!(
                    "class `{}` cannot neighbor itself",
                    classes[a].name
                )));
            }
            relations.neighbor_pairs.insert((a.min(b), a.max(b)));
        }
        for (inner, outer) in &inclusions {
            let (inner, outer) = (lookup(inner)?, lookup(outer)?);
            if inner == outer {
                return Err(KbError::Validation(format!(
                    "class `{}` cannot include itself",
                    classes[inner].name
                )));
            }
            relations.inclusion_pairs.insert((inner, outer));
        }

        let mut configs = Vec::with_capacity(configurations.len());
        for (subject, context) in &configurations {
            let subject = lookup(subject)?;
            let context = context
                .iter()
                .map(|n| lookup(n))
                .collect::<KbResult<BTreeSet<usize>>>()?;
            configs.push(ValidConfiguration { subject, context });
        }

        let kb = KnowledgeBase {
            classes,
            relations,
            configurations: configs,
        };
        kb.validate_configurations()?;
        Ok(kb)
    }

    fn validate_configurations(&self) -> KbResult<()> {
        for cfg in &self.configurations {
            let subject = &self.classes[cfg.subject].name;
            if cfg.context.is_empty() {
                return Err(KbError::Validation(format!(
                    "configuration for `{subject}` has an empty context"
                )));
            }
            if cfg.context.contains(&cfg.subject) {
                return Err(KbError::Validation(format!(
                    "configuration for `{subject}` lists itself in its context"
                )));
            }
            for &c in &cfg.context {
                if !self.relations.are_neighbors(cfg.subject, c)
                    && !self.relations.related_by_inclusion(cfg.subject, c)
                {
                    return Err(KbError::Validation(format!(
                        "configuration `{subject}` : `{}` is not backed by a neighbor or inclusion relation",
                        self.classes[c].name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn classes(&self) -> &[ThematicClass] {
        &self.classes
    }

    pub fn relations(&self) -> &SpatialRelations {
        &self.relations
    }

    pub fn configurations(&self) -> &[ValidConfiguration] {
        &self.configurations
    }

    /// Number of thematic classes, `K`.
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_id(&self, name: &str) -> KbResult<usize> {
        self.classes
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| KbError::UnknownClass(name.to_string()))
    }

    pub fn class_name(&self, id: usize) -> &str {
        &self.classes[id].name
    }

    fn names(&self, ids: BTreeSet<usize>) -> BTreeSet<String> {
        ids.into_iter()
            .map(|i| self.classes[i].name.clone())
            .collect()
    }

    /// Class ids that may be adjacent to class `c`.
    pub fn neighbors_of(&self, c: usize) -> BTreeSet<usize> {
        self.relations
            .neighbor_pairs
            .iter()
            .filter_map(|&(a, b)| {
                if a == c {
                    Some(b)
                } else if b == c {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Class ids that may lie inside class `c`.
    pub fn included_in(&self, c: usize) -> BTreeSet<usize> {
        self.relations
            .inclusion_pairs
            .iter()
            .filter(|&&(_, outer)| outer == c)
            .map(|&(inner, _)| inner)
            .collect()
    }

    /// Subjects of the configurations matching an observed context.
    pub fn subjects_for_context(
        &self,
        context: &BTreeSet<usize>,
        policy: MatchPolicy,
    ) -> BTreeSet<usize> {
        if context.is_empty() {
            return BTreeSet::new();
        }
        let exact: BTreeSet<usize> = self
            .configurations
            .iter()
            .filter(|cfg| &cfg.context == context)
            .map(|cfg| cfg.subject)
            .collect();
        match policy {
            MatchPolicy::Exact => exact,
            MatchPolicy::Subset if !exact.is_empty() => exact,
            MatchPolicy::Subset => self
                .configurations
                .iter()
                .filter(|cfg| context.is_subset(&cfg.context))
                .map(|cfg| cfg.subject)
                .collect(),
        }
    }

    /// Names of the classes that may neighbor `name`.
    pub fn classes_neighboring(&self, name: &str) -> KbResult<BTreeSet<String>> {
        let c = self.class_id(name)?;
        Ok(self.names(self.neighbors_of(c)))
    }

    /// Names of the classes that may be included in `name`.
    pub fn classes_included_in(&self, name: &str) -> KbResult<BTreeSet<String>> {
        let c = self.class_id(name)?;
        Ok(self.names(self.included_in(c)))
    }

    /// Names of the classes forming a valid configuration with the given
    /// context classes.
    pub fn configuration_subjects<S: AsRef<str>>(
        &self,
        context: &[S],
        policy: MatchPolicy,
    ) -> KbResult<BTreeSet<String>> {
        let ids = context
            .iter()
            .map(|n| self.class_id(n.as_ref()))
            .collect::<KbResult<BTreeSet<usize>>>()?;
        Ok(self.names(self.subjects_for_context(&ids, policy)))
    }

    /// Parses the text format.
    pub fn parse(text: &str) -> KbResult<Self> {
        #[derive(Clone, Copy, PartialEq)]
        enum Section {
            None,
            Classes,
            Neighbors,
            Inclusions,
            Configurations,
        }

        let mut section = Section::None;
        let mut classes = Vec::new();
        let mut neighbors = Vec::new();
        let mut inclusions = Vec::new();
        let mut configurations = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| KbError::Parse { line: line_no, msg };

            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return Err(err(format!("unterminated section header `{line}`")));
                }
                section = match &line[1..line.len() - 1] {
                    "classes" => Section::Classes,
                    "neighbors" => Section::Neighbors,
                    "inclusions" => Section::Inclusions,
                    "configurations" => Section::Configurations,
                    other => return Err(err(format!("unknown section `[{other}]`"))),
                };
                continue;
            }

            let tokens: Vec<&str> = line.split_whitespace().collect();
            match section {
                Section::None => return Err(err("content before any section header".into())),
                Section::Classes => {
                    if tokens.len() != 3 {
                        return Err(err(format!(
                            "expected `<name> <mean> <std>`, got {} fields",
                            tokens.len()
                        )));
                    }
                    let mean: f64 = tokens[1]
                        .parse()
                        .map_err(|_| err(format!("bad prototype mean `{}`", tokens[1])))?;
                    let std: f64 = tokens[2]
                        .parse()
                        .map_err(|_| err(format!("bad prototype std `{}`", tokens[2])))?;
                    classes.push((tokens[0].to_string(), mean, std));
                }
                Section::Neighbors | Section::Inclusions => {
                    if tokens.len() != 2 {
                        return Err(err(format!(
                            "expected two class names, got {}",
                            tokens.len()
                        )));
                    }
                    let pair = (tokens[0].to_string(), tokens[1].to_string());
                    if section == Section::Neighbors {
                        neighbors.push(pair);
                    } else {
                        inclusions.push(pair);
                    }
                }
                Section::Configurations => {
                    let (subject, rest) = line
                        .split_once(':')
                        .ok_or_else(|| err("expected `<subject> : <context...>`".into()))?;
                    let subject: Vec<&str> = subject.split_whitespace().collect();
                    if subject.len() != 1 {
                        return Err(err("configuration needs exactly one subject class".into()));
                    }
                    let context: Vec<String> =
                        rest.split_whitespace().map(str::to_string).collect();
                    if context.is_empty() {
                        return Err(err("configuration context is empty".into()));
                    }
                    configurations.push((subject[0].to_string(), context));
                }
            }
        }

        KnowledgeBase::new(classes, neighbors, inclusions, configurations)
    }

    /// Serializes to the text format accepted by [`KnowledgeBase::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::from("[classes]\n");
        for c in &self.classes {
            let _ = writeln!(out, "{} {} {}", c.name, c.prototype_mean, c.prototype_std);
        }
        out.push_str("\n[neighbors]\n");
        for &(a, b) in &self.relations.neighbor_pairs {
            let _ = writeln!(out, "{} {}", self.classes[a].name, self.classes[b].name);
        }
        out.push_str("\n[inclusions]\n");
        for &(inner, outer) in &self.relations.inclusion_pairs {
            let _ = writeln!(
                out,
                "{} {}",
                self.classes[inner].name, self.classes[outer].name
            );
        }
        out.push_str("\n[configurations]\n");
        for cfg in &self.configurations {
            let ctx: Vec<&str> = cfg.context.iter().map(|&c| self.class_name(c)).collect();
            let _ = writeln!(out, "{} : {}", self.class_name(cfg.subject), ctx.join(" "));
        }
        out
    }

    /// The four-class mammogram knowledge base shipped with the crate.
    pub fn mammogram() -> Self {
        Self::parse(MAMMOGRAM_KB).expect("bundled mammogram knowledge base is valid")
    }
}

fn validate_classes(classes: &[ThematicClass]) -> KbResult<()> {
    if classes.len() < 2 {
        return Err(KbError::Validation(format!(
            "at least 2 classes are required, found {}",
            classes.len()
        )));
    }
    if classes.len() > MAX_CLASSES {
        return Err(KbError::Validation(format!(
            "at most {MAX_CLASSES} classes are supported, found {}",
            classes.len()
        )));
    }
    let mut seen = BTreeSet::new();
    for c in classes {
        if !seen.insert(c.name.as_str()) {
            return Err(KbError::Validation(format!("duplicate class `{}`", c.name)));
        }
        if !(0.0..=255.0).contains(&c.prototype_mean) {
            return Err(KbError::Validation(format!(
                "class `{}` prototype mean {} outside [0, 255]",
                c.name, c.prototype_mean
            )));
        }
        if !(c.prototype_std > 0.0 && c.prototype_std.is_finite()) {
            return Err(KbError::Validation(format!(
                "class `{}` prototype std must be positive",
                c.name
            )));
        }
    }
    Ok(())
}

/// Reads and validates a knowledge base file.
pub fn load_kb(path: impl AsRef<Path>) -> KbResult<KnowledgeBase> {
    let text = std::fs::read_to_string(path)?;
    KnowledgeBase::parse(&text)
}

pub fn write_kb(kb: &KnowledgeBase, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, kb.to_text())
}

/// Text of the bundled mammogram knowledge base.
pub const MAMMOGRAM_KB: &str = include_str!("../data/mammogram.kb");
