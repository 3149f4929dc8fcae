//! Panel ingestion and result emission.
//!
//! Panel CSV columns: `person_id,dynasty_id,generation,father_id,mother_id,
//! spouse_id,y`, optionally followed by the latent `e,e2`. `mother_id` and
//! `spouse_id` may be absent; an empty field is a missing value. Lines that
//! start with `#` are run headers and are skipped on input.
//!
//! Panel files keep full round-trip precision. Result tables (CSV and text)
//! print 6 significant digits; JSON always carries full precision.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::estimators::FitResult;
use crate::model::ModelSpec;
use crate::moments::MomentSet;
use crate::ols::RegressionResult;
use crate::pedigree::{Columns, Pedigree, Person, SimTopology};
use crate::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

const REQUIRED: [&str; 5] = ["person_id", "dynasty_id", "generation", "father_id", "y"];
const OPTIONAL: [&str; 4] = ["mother_id", "spouse_id", "e", "e2"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Text,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "text" | "txt" => Ok(Format::Text),
            other => Err(Error::Argument(format!("unknown format `{other}`"))),
        }
    }
}

impl Format {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Format> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            "txt" | "text" => Some(Format::Text),
            _ => None,
        }
    }
}

/// Provenance line written at the top of every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub version: String,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<SimTopology>,
}

impl RunHeader {
    pub fn new(command: &str) -> Self {
        Self {
            version: VERSION.to_string(),
            command: command.to_string(),
            seed: None,
            model: None,
            topology: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_model(mut self, model: ModelSpec) -> Self {
        self.model = Some(model);
        self
    }

    pub fn with_topology(mut self, topology: SimTopology) -> Self {
        self.seed = Some(topology.seed);
        self.topology = Some(topology);
        self
    }

    /// `# multigen <version> command=<c> seed=<s> model=<json> topology=<json>`
    pub fn comment_line(&self) -> String {
        let mut s = format!("# multigen {} command={}", self.version, self.command);
        if let Some(seed) = self.seed {
            let _ = write!(s, " seed={seed}");
        }
        if let Some(m) = &self.model {
            let _ = write!(s, " model={}", serde_json::to_string(m).unwrap_or_default());
        }
        if let Some(t) = &self.topology {
            let _ = write!(s, " topology={}", serde_json::to_string(t).unwrap_or_default());
        }
        s.push('\n');
        s
    }
}

/// Formats with 6 significant digits, switching to exponent notation outside
/// `[1e-5, 1e6)`. Non-finite values print as `NaN`, `inf` or `-inf`.
pub fn fmt6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    // Let the exponent formatter do the rounding, then pick the layout.
    let sci = format!("{x:.5e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-5..6).contains(&exp) {
        format!("{x:.*}", (5 - exp) as usize)
    } else {
        sci
    }
}

fn fmt6_opt(x: Option<f64>) -> String {
    x.filter(|v| !v.is_nan()).map(fmt6).unwrap_or_default()
}

/// Values that can be written as JSON, CSV and plain text.
pub trait Emit: Serialize {
    fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
    fn to_csv(&self) -> String;
    fn to_text(&self) -> String;
}

/// Renders `value`; a header becomes a `#` comment line in CSV and text and a
/// `run` member wrapping the value in JSON.
pub fn render<T: Emit + ?Sized>(value: &T, format: Format, header: Option<&RunHeader>) -> Result<String> {
    match format {
        Format::Json => match header {
            None => value.to_json(),
            Some(h) => {
                let mut envelope = Map::new();
                envelope.insert("run".into(), serde_json::to_value(h)?);
                envelope.insert("result".into(), serde_json::to_value(value)?);
                let mut s = serde_json::to_string_pretty(&Value::Object(envelope))?;
                s.push('\n');
                Ok(s)
            }
        },
        Format::Csv | Format::Text => {
            let mut s = header.map(RunHeader::comment_line).unwrap_or_default();
            s.push_str(&if format == Format::Csv {
                value.to_csv()
            } else {
                value.to_text()
            });
            Ok(s)
        }
    }
}

pub fn emit<T: Emit + ?Sized>(value: &T, path: &Path, format: Format) -> Result<()> {
    emit_with_header(value, path, format, None)
}

pub fn emit_with_header<T: Emit + ?Sized>(
    value: &T,
    path: &Path,
    format: Format,
    header: Option<&RunHeader>,
) -> Result<()> {
    write_file(path, &render(value, format, header)?)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// CSV field quoting for the few string cells we write.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Emit for RegressionResult {
    fn to_csv(&self) -> String {
        let mut s = String::from("term,estimate,std_error\n");
        for (name, b) in &self.coefficients {
            let _ = writeln!(s, "{},{},{}", csv_field(name), fmt6(*b), fmt6_opt(self.se(name)));
        }
        let _ = writeln!(s, "intercept,{},", fmt6(self.intercept));
        let _ = writeln!(s, "r_squared,{},", fmt6(self.r_squared));
        let _ = writeln!(s, "n_obs,{},", self.n_obs);
        s
    }

    fn to_text(&self) -> String {
        let mut s = regression_table(&[("(1)".to_string(), self)]);
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

/// Side-by-side regression columns: coefficient, standard error in
/// parentheses underneath, then R-squared and the observation count.
pub fn regression_table(columns: &[(String, &RegressionResult)]) -> String {
    let mut terms: Vec<&str> = Vec::new();
    for (_, r) in columns {
        for name in r.coefficients.keys() {
            if !terms.contains(&name.as_str()) {
                terms.push(name);
            }
        }
    }
    let mut rows: Vec<(String, Vec<String>)> = Vec::new();
    for t in &terms {
        rows.push((
            t.to_string(),
            columns.iter().map(|(_, r)| r.coef(t).map(fmt6).unwrap_or_default()).collect(),
        ));
        rows.push((
            String::new(),
            columns
                .iter()
                .map(|(_, r)| r.se(t).map(|v| format!("({})", fmt6(v))).unwrap_or_default())
                .collect(),
        ));
    }
    rows.push((
        "R-squared".into(),
        columns.iter().map(|(_, r)| fmt6(r.r_squared)).collect(),
    ));
    rows.push((
        "n".into(),
        columns.iter().map(|(_, r)| r.n_obs.to_string()).collect(),
    ));
    let heads: Vec<String> = columns.iter().map(|(h, _)| h.clone()).collect();
    aligned(&heads, &rows)
}

/// Left-aligned label column followed by right-aligned value columns.
pub fn aligned(heads: &[String], rows: &[(String, Vec<String>)]) -> String {
    let label_w = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0);
    let widths: Vec<usize> = (0..heads.len())
        .map(|j| {
            rows.iter()
                .map(|(_, cells)| cells[j].chars().count())
                .chain(std::iter::once(heads[j].chars().count()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut s = String::new();
    let line = |label: &str, cells: &[String], s: &mut String| {
        let mut out = format!("{label:<label_w$}");
        for (c, w) in cells.iter().zip(&widths) {
            let _ = write!(out, "  {c:>w$}");
        }
        s.push_str(out.trim_end());
        s.push('\n');
    };
    line("", heads, &mut s);
    for (label, cells) in rows {
        line(label, cells, &mut s);
    }
    s
}

impl Emit for FitResult {
    fn to_csv(&self) -> String {
        format!(
            "rho_sq,lambda,residual_norm,n_moments,misfit\n{},{},{},{},{}\n",
            fmt6(self.rho_sq),
            fmt6(self.lambda),
            fmt6(self.residual_norm),
            self.n_moments,
            self.misfit
        )
    }

    fn to_text(&self) -> String {
        let rows = vec![
            ("rho_sq".to_string(), vec![fmt6(self.rho_sq)]),
            ("lambda".to_string(), vec![fmt6(self.lambda)]),
            ("residual_norm".to_string(), vec![fmt6(self.residual_norm)]),
            ("n_moments".to_string(), vec![self.n_moments.to_string()]),
            ("misfit".to_string(), vec![self.misfit.to_string()]),
        ];
        aligned(&["value".to_string()], &rows)
    }
}

impl Emit for MomentSet {
    fn to_csv(&self) -> String {
        let mut s = String::from("k,beta_k\n");
        for (k, b) in &self.beta_k {
            let _ = writeln!(s, "{k},{}", fmt6(*b));
        }
        s
    }

    fn to_text(&self) -> String {
        let mut heads = vec!["beta_k".to_string()];
        if self.latent_beta_k.is_some() {
            heads.push("latent".into());
        }
        if self.first_endowment_share.is_some() {
            heads.push("first_share".into());
        }
        let mut rows: Vec<(String, Vec<String>)> = self
            .beta_k
            .iter()
            .map(|(k, b)| {
                let mut cells = vec![fmt6(*b)];
                if let Some(l) = &self.latent_beta_k {
                    cells.push(fmt6_opt(l.get(k).copied()));
                }
                if let Some(sh) = &self.first_endowment_share {
                    cells.push(fmt6_opt(sh.get(k).copied()));
                }
                (format!("k={k}"), cells)
            })
            .collect();
        let pad = heads.len() - 1;
        for (name, v) in [
            ("sibling", self.sibling),
            ("cousin", self.cousin),
            ("spousal", self.spousal),
        ] {
            if let Some(v) = v {
                let mut cells = vec![fmt6(v)];
                cells.extend(std::iter::repeat_n(String::new(), pad));
                rows.push((name.to_string(), cells));
            }
        }
        aligned(&heads, &rows)
    }
}

/// Panel output, optionally with the latent endowments.
pub struct PanelView<'a> {
    pub pedigree: &'a Pedigree,
    pub include_latent: bool,
}

impl PanelView<'_> {
    fn header_columns(&self) -> Vec<&'static str> {
        let cols = self.pedigree.columns();
        let mut h = vec!["person_id", "dynasty_id", "generation", "father_id"];
        if cols.mother_id {
            h.push("mother_id");
        }
        if cols.spouse_id {
            h.push("spouse_id");
        }
        h.push("y");
        if self.include_latent && cols.latent {
            h.push("e");
            if self.pedigree.persons().iter().any(|p| p.e2.is_some()) {
                h.push("e2");
            }
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let head = self.header_columns();
        let mut s = head.join(",");
        s.push('\n');
        let id = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        // `{}` on f64 is the shortest representation that round-trips.
        let real = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for p in self.pedigree.persons() {
            for (j, col) in head.iter().enumerate() {
                if j > 0 {
                    s.push(',');
                }
                let cell = match *col {
                    "person_id" => p.person_id.to_string(),
                    "dynasty_id" => p.dynasty_id.to_string(),
                    "generation" => p.generation.to_string(),
                    "father_id" => id(p.father_id),
                    "mother_id" => id(p.mother_id),
                    "spouse_id" => id(p.spouse_id),
                    "y" => real(Some(p.y)),
                    "e" => real(p.e),
                    _ => real(p.e2),
                };
                s.push_str(&cell);
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json_value(&self) -> Value {
        let head = self.header_columns();
        let id = |v: Option<u64>| v.map(Value::from).unwrap_or(Value::Null);
        let real = |v: Option<f64>| v.map(Value::from).unwrap_or(Value::Null);
        let persons = self
            .pedigree
            .persons()
            .iter()
            .map(|p| {
                let mut m = Map::new();
                for col in &head {
                    let v = match *col {
                        "person_id" => Value::from(p.person_id),
                        "dynasty_id" => Value::from(p.dynasty_id),
                        "generation" => Value::from(p.generation),
                        "father_id" => id(p.father_id),
                        "mother_id" => id(p.mother_id),
                        "spouse_id" => id(p.spouse_id),
                        "y" => Value::from(p.y),
                        "e" => real(p.e),
                        _ => real(p.e2),
                    };
                    m.insert(col.to_string(), v);
                }
                Value::Object(m)
            })
            .collect();
        Value::Array(persons)
    }
}

pub fn render_panel(view: &PanelView<'_>, format: Format, header: Option<&RunHeader>) -> Result<String> {
    match format {
        Format::Csv => {
            let mut s = header.map(RunHeader::comment_line).unwrap_or_default();
            s.push_str(&view.to_csv());
            Ok(s)
        }
        Format::Json => {
            let mut m = Map::new();
            if let Some(h) = header {
                m.insert("run".into(), serde_json::to_value(h)?);
            }
            m.insert("persons".into(), view.to_json_value());
            let mut s = serde_json::to_string_pretty(&Value::Object(m))?;
            s.push('\n');
            Ok(s)
        }
        Format::Text => Err(Error::Argument("panels are exported as csv or json".into())),
    }
}

pub fn export_panel(
    ped: &Pedigree,
    path: &Path,
    format: Format,
    include_latent: bool,
    header: Option<&RunHeader>,
) -> Result<()> {
    let view = PanelView {
        pedigree: ped,
        include_latent,
    };
    write_file(path, &render_panel(&view, format, header)?)
}

/// Reads and validates a panel file.
pub fn load_panel(path: &Path, format: Format) -> Result<Pedigree> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match format {
        Format::Csv => parse_panel_csv(&text, path),
        Format::Json => parse_panel_json(&text, path),
        Format::Text => Err(Error::Argument("panels are read from csv or json".into())),
    }
}

/// Parses CSV panel text; `path` only labels errors.
pub fn parse_panel_csv(text: &str, path: &Path) -> Result<Pedigree> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(e.position().map_or(1, |p| p.line()), e.to_string()))?
        .clone();
    let header_line = rdr.position().line().max(1);
    let mut pos = std::collections::HashMap::new();
    for (j, h) in headers.iter().enumerate() {
        if !REQUIRED.contains(&h) && !OPTIONAL.contains(&h) {
            return Err(parse_err(header_line, format!("unknown column `{h}`")));
        }
        if pos.insert(h.to_string(), j).is_some() {
            return Err(parse_err(header_line, format!("duplicate column `{h}`")));
        }
    }
    for r in REQUIRED {
        if !pos.contains_key(r) {
            return Err(parse_err(header_line, format!("missing required column `{r}`")));
        }
    }
    let columns = Columns {
        mother_id: pos.contains_key("mother_id"),
        spouse_id: pos.contains_key("spouse_id"),
        latent: pos.contains_key("e"),
    };

    let mut persons = Vec::new();
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |name: &str| pos.get(name).and_then(|&j| rec.get(j)).unwrap_or("");
        let int = |name: &str| -> Result<Option<u64>> {
            let f = field(name);
            if f.is_empty() {
                return Ok(None);
            }
            f.parse::<u64>()
                .map(Some)
                .map_err(|_| parse_err(line, format!("{name}: `{f}` is not a non-negative integer")))
        };
        let real = |name: &str| -> Result<Option<f64>> {
            let f = field(name);
            if f.is_empty() {
                return Ok(None);
            }
            match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(parse_err(line, format!("{name}: `{f}` is not a finite number"))),
            }
        };
        let required = |name: &str, v: Option<u64>| {
            v.ok_or_else(|| parse_err(line, format!("{name} is required")))
        };
        let generation = required("generation", int("generation")?)?;
        let generation = u32::try_from(generation)
            .map_err(|_| parse_err(line, format!("generation {generation} is out of range")))?;
        persons.push(Person {
            person_id: required("person_id", int("person_id")?)?,
            dynasty_id: required("dynasty_id", int("dynasty_id")?)?,
            generation,
            father_id: int("father_id")?,
            mother_id: int("mother_id")?,
            spouse_id: int("spouse_id")?,
            y: real("y")?.ok_or_else(|| parse_err(line, "y is required".into()))?,
            e: real("e")?,
            e2: real("e2")?,
        });
        lines.push(line);
    }
    Pedigree::from_persons(persons, columns).map_err(|(i, message)| parse_err(lines[i], message))
}

/// Parses a JSON panel: either an array of person records or an object with a
/// `persons` array. Errors name the zero-based record index.
pub fn parse_panel_json(text: &str, path: &Path) -> Result<Pedigree> {
    let invalid = |message: String| Error::Validation {
        path: path.to_path_buf(),
        message,
    };
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    let records = match &root {
        Value::Array(a) => a,
        Value::Object(o) => match o.get("persons") {
            Some(Value::Array(a)) => a,
            _ => return Err(invalid("expected a `persons` array".into())),
        },
        _ => return Err(invalid("expected an array of person records".into())),
    };
    let mut columns = Columns {
        mother_id: false,
        spouse_id: false,
        latent: false,
    };
    let mut persons = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let Value::Object(obj) = rec else {
            return Err(invalid(format!("record {i}: not an object")));
        };
        for key in obj.keys() {
            if !REQUIRED.contains(&key.as_str()) && !OPTIONAL.contains(&key.as_str()) {
                return Err(invalid(format!("record {i}: unknown field `{key}`")));
            }
        }
        columns.mother_id |= obj.contains_key("mother_id");
        columns.spouse_id |= obj.contains_key("spouse_id");
        columns.latent |= obj.contains_key("e");
        let int = |name: &str| -> Result<Option<u64>> {
            match obj.get(name) {
                None | Some(Value::Null) => Ok(None),
                Some(v) => v
                    .as_u64()
                    .map(Some)
                    .ok_or_else(|| invalid(format!("record {i}: {name} is not a non-negative integer"))),
            }
        };
        let real = |name: &str| -> Result<Option<f64>> {
            match obj.get(name) {
                None | Some(Value::Null) => Ok(None),
                Some(v) => v
                    .as_f64()
                    .map(Some)
                    .ok_or_else(|| invalid(format!("record {i}: {name} is not a number"))),
            }
        };
        let need = |name: &str, v: Option<u64>| v.ok_or_else(|| invalid(format!("record {i}: {name} is required")));
        let generation = need("generation", int("generation")?)?;
        persons.push(Person {
            person_id: need("person_id", int("person_id")?)?,
            dynasty_id: need("dynasty_id", int("dynasty_id")?)?,
            generation: u32::try_from(generation)
                .map_err(|_| invalid(format!("record {i}: generation out of range")))?,
            father_id: int("father_id")?,
            mother_id: int("mother_id")?,
            spouse_id: int("spouse_id")?,
            y: real("y")?.ok_or_else(|| invalid(format!("record {i}: y is required")))?,
            e: real("e")?,
            e2: real("e2")?,
        });
    }
    Pedigree::from_persons(persons, columns).map_err(|(i, m)| invalid(format!("record {i}: {m}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LatentFactorParams;
    use crate::sim::simulate;

    fn p() -> &'static Path {
        Path::new("panel.csv")
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt6(0.448), "0.448000");
        assert_eq!(fmt6(0.3136), "0.313600");
        assert_eq!(fmt6(-0.0336), "-0.0336000");
        assert_eq!(fmt6(1.0), "1.00000");
        assert_eq!(fmt6(123456.7), "123457");
        assert_eq!(fmt6(1234567.0), "1.23457e6");
        assert_eq!(fmt6(0.999_999_7), "1.00000");
        assert_eq!(fmt6(2.5e-7), "2.50000e-7");
        assert_eq!(fmt6(0.0), "0");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let spec = ModelSpec::LatentFactor(LatentFactorParams::new(0.8, 0.7));
        let ped = simulate(&spec, &SimTopology::new(20, 3, 2, 5)).unwrap();
        let view = PanelView { pedigree: &ped, include_latent: true };
        let text = render_panel(&view, Format::Csv, Some(&RunHeader::new("simulate"))).unwrap();
        let back = parse_panel_csv(&text, p()).unwrap();
        assert_eq!(back, ped);
        let json = render_panel(&view, Format::Json, None).unwrap();
        assert_eq!(parse_panel_json(&json, p()).unwrap(), ped);
    }

    #[test]
    fn latent_columns_hidden_by_default() {
        let spec = ModelSpec::LatentFactor(LatentFactorParams::new(0.8, 0.7));
        let ped = simulate(&spec, &SimTopology::new(3, 2, 1, 5)).unwrap();
        let text = PanelView { pedigree: &ped, include_latent: false }.to_csv();
        assert!(text.starts_with("person_id,dynasty_id,generation,father_id,mother_id,spouse_id,y\n"));
        let back = parse_panel_csv(&text, p()).unwrap();
        assert!(back.persons().iter().all(|q| q.e.is_none()));
        assert!(!back.columns().latent);
    }

    #[test]
    fn generation_inconsistency_reports_line() {
        let text = "person_id,dynasty_id,generation,father_id,y\n1,0,0,,0.1\n2,0,0,1,0.2\n";
        match parse_panel_csv(text, p()) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("generation"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_and_referential_errors() {
        let bad_num = "person_id,dynasty_id,generation,father_id,y\n1,0,0,,abc\n";
        assert!(matches!(parse_panel_csv(bad_num, p()), Err(Error::Parse { line: 2, .. })));
        let orphan = "person_id,dynasty_id,generation,father_id,y\n1,0,1,9,0.0\n";
        assert!(matches!(parse_panel_csv(orphan, p()), Err(Error::Parse { line: 2, .. })));
        let dup = "person_id,dynasty_id,generation,father_id,y\n1,0,0,,0.0\n1,0,0,,1.0\n";
        match parse_panel_csv(dup, p()) {
            Err(Error::Parse { line: 3, message, .. }) => assert!(message.contains("duplicate")),
            other => panic!("{other:?}"),
        }
        let unknown = "person_id,dynasty_id,generation,father_id,y,z\n";
        assert!(parse_panel_csv(unknown, p()).is_err());
        let missing = "person_id,dynasty_id,generation,y\n";
        assert!(parse_panel_csv(missing, p()).is_err());
    }

    #[test]
    fn optional_link_columns() {
        let text = "# comment\nperson_id,dynasty_id,generation,father_id,y\n1,0,0,,0.5\n2,0,1,1,0.1\n";
        let ped = parse_panel_csv(text, p()).unwrap();
        assert_eq!(ped.len(), 2);
        assert!(!ped.columns().spouse_id && !ped.columns().mother_id);
    }

    #[test]
    fn emission_is_byte_stable() {
        let m = MomentSet::from_betas(&[0.448, 0.3136]);
        assert_eq!(m.to_csv(), "k,beta_k\n1,0.448000\n2,0.313600\n");
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [1.0, 3.0, 2.0, 5.0, 4.0];
        let r = crate::ols::ols(&y, &[("parent_y", &x)]).unwrap();
        for f in [Format::Csv, Format::Json, Format::Text] {
            assert_eq!(render(&r, f, None).unwrap(), render(&r, f, None).unwrap());
        }
        let text = r.to_text();
        assert!(text.contains("(0.346410)"), "{text}");
        assert!(text.contains("R-squared"));
    }
}
