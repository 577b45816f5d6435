//! Text serialization of derived architectures and DOT rendering of cells.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::search_space::{CellKind, CellOp};

use super::{DerivedArchitecture, DerivedCell, Provenance};

const MAGIC: &str = "stretchnas-arch v1";

/// Renders an architecture in the versioned text format understood by
/// [`import_arch`]. Deterministic: edges are emitted in ascending order.
pub fn export_arch(arch: &DerivedArchitecture) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str("[provenance]\n");
    out.push_str(&format!("config_hash = {}\n", arch.provenance.config_hash));
    out.push_str(&format!("epoch = {}\n", arch.provenance.epoch));
    out.push_str(&format!("layers = {}\n", arch.provenance.layers));
    for cell in [&arch.normal, &arch.reduction] {
        let header = match cell.kind {
            CellKind::Normal => "[normal]",
            CellKind::Reduction => "[reduction]",
        };
        out.push_str(header);
        out.push('\n');
        out.push_str(&format!("n_nodes = {}\n", cell.n_nodes));
        let removed: Vec<String> = cell.removed.iter().map(|n| n.to_string()).collect();
        if removed.is_empty() {
            out.push_str("removed =\n");
        } else {
            out.push_str(&format!("removed = {}\n", removed.join(" ")));
        }
        for (&(i, j), op) in &cell.edges {
            out.push_str(&format!("edge = {i} {j} {}\n", op.name()));
        }
    }
    out
}

struct Parser<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(idx, line)| (idx + 1, line))
            .filter(|(_, line)| !line.trim().is_empty())
            .collect();
        Parser { lines, pos: 0 }
    }

    fn peek(&self) -> Option<(usize, &'a str)> {
        self.lines.get(self.pos).copied()
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let item = self.peek();
        if item.is_some() {
            self.pos += 1;
        }
        item
    }

    fn expect_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.next()
            .ok_or_else(|| Error::parse(self.lines.len() + 1, 1, format!("expected {what}")))
    }

    fn expect_section(&mut self, name: &str) -> Result<()> {
        let (line_no, line) = self.expect_line(&format!("section [{name}]"))?;
        if line.trim() != format!("[{name}]") {
            return Err(Error::parse(
                line_no,
                1,
                format!("expected section [{name}], found {:?}", line.trim()),
            ));
        }
        Ok(())
    }

    fn expect_key(&mut self, key: &str) -> Result<(usize, String)> {
        let (line_no, line) = self.expect_line(&format!("key {key}"))?;
        let (found, value) = split_key_value(line_no, line)?;
        if found != key {
            return Err(Error::parse(
                line_no,
                1,
                format!("expected key {key}, found {found:?}"),
            ));
        }
        Ok((line_no, value))
    }
}

fn split_key_value(line_no: usize, line: &str) -> Result<(String, String)> {
    let eq = line
        .find('=')
        .ok_or_else(|| Error::parse(line_no, 1, format!("expected key = value, found {line:?}")))?;
    let key = line[..eq].trim().to_string();
    let value = line[eq + 1..].trim().to_string();
    if key.is_empty() {
        return Err(Error::parse(line_no, 1, "empty key".to_string()));
    }
    Ok((key, value))
}

fn parse_usize(line_no: usize, value: &str, what: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::parse(line_no, 1, format!("{what} must be an integer, got {value:?}")))
}

fn parse_cell(parser: &mut Parser, kind: CellKind) -> Result<DerivedCell> {
    let (line_no, value) = parser.expect_key("n_nodes")?;
    let n_nodes = parse_usize(line_no, &value, "n_nodes")?;
    if n_nodes < 4 {
        return Err(Error::parse(
            line_no,
            1,
            format!("cell needs at least 4 nodes, got {n_nodes}"),
        ));
    }
    let (line_no, value) = parser.expect_key("removed")?;
    let mut removed = BTreeSet::new();
    for tok in value.split_whitespace() {
        let node = parse_usize(line_no, tok, "removed node")?;
        if node < 3 || node >= n_nodes {
            return Err(Error::parse(
                line_no,
                1,
                format!("removed node {node} outside removable range 3..{n_nodes}"),
            ));
        }
        if !removed.insert(node) {
            return Err(Error::parse(line_no, 1, format!("duplicate removed node {node}")));
        }
    }
    let mut edges = BTreeMap::new();
    while let Some((line_no, line)) = parser.peek() {
        if line.trim_start().starts_with('[') {
            break;
        }
        parser.next();
        let (key, value) = split_key_value(line_no, line)?;
        if key != "edge" {
            return Err(Error::parse(
                line_no,
                1,
                format!("unknown key {key:?} in cell section"),
            ));
        }
        let toks: Vec<&str> = value.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::parse(
                line_no,
                1,
                format!("edge line needs `i j op`, got {value:?}"),
            ));
        }
        let i = parse_usize(line_no, toks[0], "edge source")?;
        let j = parse_usize(line_no, toks[1], "edge target")?;
        if i >= j || j < 3 || i < 1 || j > n_nodes {
            return Err(Error::parse(line_no, 1, format!("non-topological edge {i} -> {j}")));
        }
        if removed.contains(&i) || removed.contains(&j) {
            return Err(Error::parse(
                line_no,
                1,
                format!("edge {i} -> {j} touches a removed node"),
            ));
        }
        let op = CellOp::parse(toks[2])
            .map_err(|_| Error::parse(line_no, 1, format!("unknown operation {:?}", toks[2])))?;
        if edges.insert((i, j), op).is_some() {
            return Err(Error::parse(line_no, 1, format!("duplicate edge {i} -> {j}")));
        }
    }
    let cell = DerivedCell {
        n_nodes,
        kind,
        edges,
        removed,
    };
    cell.check()?;
    Ok(cell)
}

/// Parses the text format produced by [`export_arch`]. Strict: the version
/// line, section order, and per-section keys are all fixed, and structural
/// problems surface as parse errors naming the offending line.
pub fn import_arch(text: &str) -> Result<DerivedArchitecture> {
    let mut parser = Parser::new(text);
    let (line_no, line) = parser.expect_line("version line")?;
    if line.trim() != MAGIC {
        return Err(Error::parse(
            line_no,
            1,
            format!("expected version line {MAGIC:?}, found {:?}", line.trim()),
        ));
    }
    parser.expect_section("provenance")?;
    let (hash_line, config_hash) = parser.expect_key("config_hash")?;
    if config_hash.is_empty() || !config_hash.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(Error::parse(
            hash_line,
            1,
            format!("config_hash must be hex, got {config_hash:?}"),
        ));
    }
    let (line_no, value) = parser.expect_key("epoch")?;
    let epoch = parse_usize(line_no, &value, "epoch")?;
    let (line_no, value) = parser.expect_key("layers")?;
    let layers = parse_usize(line_no, &value, "layers")?;
    if layers == 0 {
        return Err(Error::parse(line_no, 1, "layers must be positive".to_string()));
    }
    parser.expect_section("normal")?;
    let normal = parse_cell(&mut parser, CellKind::Normal)?;
    parser.expect_section("reduction")?;
    let reduction = parse_cell(&mut parser, CellKind::Reduction)?;
    if let Some((line_no, line)) = parser.peek() {
        return Err(Error::parse(
            line_no,
            1,
            format!("unexpected trailing content {:?}", line.trim()),
        ));
    }
    let arch = DerivedArchitecture {
        provenance: Provenance {
            config_hash,
            epoch,
            layers,
        },
        normal,
        reduction,
    };
    arch.check()?;
    Ok(arch)
}

fn dot_node_name(node: usize) -> String {
    match node {
        1 => "c_{k-2}".to_string(),
        2 => "c_{k-1}".to_string(),
        other => other.to_string(),
    }
}

/// Renders one cell as a DOT digraph. The body holds one rankdir line, one
/// line per kept edge labeled with its operation, and one line linking every
/// kept intermediate node to the output.
pub fn export_dot(cell: &DerivedCell) -> String {
    let mut out = String::new();
    out.push_str("digraph cell {\n");
    out.push_str("  rankdir=LR;\n");
    for (&(i, j), op) in &cell.edges {
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [label=\"{}\"];\n",
            dot_node_name(i),
            dot_node_name(j),
            op.name()
        ));
    }
    for node in cell.kept_intermediates() {
        out.push_str(&format!("  \"{node}\" -> \"out\";\n"));
    }
    out.push_str("}\n");
    out
}
