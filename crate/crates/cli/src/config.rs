//! INI run configuration.
//!
//! ```ini
//! [grid]
//! nx = 32            # interior nodes; ny defaults to nx
//! lx = 1             # side lengths; x0, y0 default to 0
//!
//! [coefficients]
//! a = 1 + x          # expression in x, y ...
//! b_file = b.field   # ... or a field file, never both
//! h = sin(2*pi*x)*sin(pi*y)
//!
//! [solver]
//! n_samples = 256
//! method = scan      # or newton (falls back to the scan)
//! newton_tol = 1e-9
//! s_max_override = 10
//!
//! [output]
//! directory = out
//! formats = json, csv, field
//!
//! [eigen]
//! alphas = 0.01, 0.1, 1, 10
//! write_fields = false
//!
//! [study]
//! scales = 0, 0.5, 1, 2, 4
//! ```

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use ini::{Ini, ParseOption, Properties};
use kirchhoff_lab::expr::{eval_field, parse};
use kirchhoff_lab::{Grid, ScalarField};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Read { path: PathBuf, reason: String },
    #[error("missing key `{0}`")]
    Missing(String),
    #[error("key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("unknown key `{0}`")]
    Unknown(String),
}

fn invalid(key: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), reason: reason.to_string() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Scan,
    Newton,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Formats {
    pub json: bool,
    pub csv: bool,
    pub field: bool,
}

#[derive(Debug)]
pub struct Config {
    pub grid: Grid,
    base_dir: PathBuf,
    coefficients: Properties,
    pub n_samples: usize,
    pub method: Method,
    pub newton_tol: f64,
    pub s_max_override: Option<f64>,
    pub directory: PathBuf,
    pub formats: Formats,
    pub alphas: Option<Vec<f64>>,
    pub write_fields: bool,
    pub scales: Option<Vec<f64>>,
}

const SECTIONS: [(&str, &[&str]); 6] = [
    ("grid", &["nx", "ny", "x0", "y0", "lx", "ly"]),
    ("coefficients", &["a", "a_file", "b", "b_file", "h", "h_file"]),
    ("solver", &["n_samples", "method", "newton_tol", "s_max_override"]),
    ("output", &["directory", "formats"]),
    ("eigen", &["alphas", "write_fields"]),
    ("study", &["scales"]),
];

struct Section<'a> {
    name: &'static str,
    props: Option<&'a Properties>,
}

impl Section<'_> {
    fn key(&self, k: &str) -> String {
        format!("{}.{k}", self.name)
    }

    fn raw(&self, k: &str) -> Option<&str> {
        self.props.and_then(|p| p.get(k)).map(str::trim)
    }

    fn parse<T: std::str::FromStr>(&self, k: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(k).map(|v| v.parse::<T>().map_err(|e| invalid(&self.key(k), e))).transpose()
    }

    fn positive(&self, k: &str) -> Result<Option<f64>, ConfigError> {
        match self.parse::<f64>(k)? {
            Some(v) if !(v.is_finite() && v > 0.0) => Err(invalid(&self.key(k), "must be positive")),
            other => Ok(other),
        }
    }
}

/// Comma-separated list of finite reals.
pub fn parse_list(key: &str, text: &str) -> Result<Vec<f64>, ConfigError> {
    let values = text
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| invalid(key, format!("`{}`: {e}", t.trim()))))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(invalid(key, format!("`{v}` is not finite")));
    }
    if values.is_empty() {
        return Err(invalid(key, "empty list"));
    }
    Ok(values)
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.to_path_buf(), reason: e.to_string() })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, &base)
    }

    /// Parses config text; relative file paths resolve against `base_dir`.
    /// `#` starts a comment anywhere on a line.
    pub fn from_str(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let opts = ParseOption { enabled_escape: false, ..ParseOption::default() };
        let text: String = text.lines().map(|l| l.split('#').next().unwrap_or("")).collect::<Vec<_>>().join("\n");
        let ini = Ini::load_from_str_opt(&text, opts)
            .map_err(|e| ConfigError::Read { path: base_dir.to_path_buf(), reason: e.to_string() })?;
        for (name, props) in ini.iter() {
            let Some(name) = name else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(ConfigError::Unknown(k.to_string()));
                }
                continue;
            };
            let known = SECTIONS.iter().find(|(s, _)| *s == name).ok_or_else(|| ConfigError::Unknown(format!("[{name}]")))?;
            if let Some((k, _)) = props.iter().find(|(k, _)| !known.1.contains(k)) {
                return Err(ConfigError::Unknown(format!("{name}.{k}")));
            }
        }
        let section = |name: &'static str| Section { name, props: ini.section(Some(name)) };

        let g = section("grid");
        let nx: usize = g.parse("nx")?.ok_or_else(|| ConfigError::Missing(g.key("nx")))?;
        let ny: usize = g.parse("ny")?.unwrap_or(nx);
        let x0: f64 = g.parse("x0")?.unwrap_or(0.0);
        let y0: f64 = g.parse("y0")?.unwrap_or(0.0);
        let lx = g.positive("lx")?.unwrap_or(1.0);
        let ly = g.positive("ly")?.unwrap_or(1.0);
        let grid = Grid::from_extent(nx, ny, x0, y0, lx, ly).map_err(|e| invalid("grid", e))?;

        let s = section("solver");
        let n_samples = s.parse("n_samples")?.unwrap_or(kirchhoff_lab::kirchhoff::DEFAULT_SAMPLES);
        let method = match s.raw("method") {
            None | Some("scan") => Method::Scan,
            Some("newton") => Method::Newton,
            Some(other) => return Err(invalid(&s.key("method"), format!("`{other}` is not scan or newton"))),
        };
        let newton_tol = s.positive("newton_tol")?.unwrap_or(kirchhoff_lab::kirchhoff::NEWTON_TOL);
        let s_max_override = s.positive("s_max_override")?;

        let o = section("output");
        let directory = PathBuf::from(o.raw("directory").unwrap_or("out"));
        let formats = match o.raw("formats") {
            None => Formats { json: true, csv: true, field: true },
            Some(list) => {
                let mut f = Formats { json: false, csv: false, field: false };
                for item in list.split(',').map(str::trim) {
                    match item {
                        "json" => f.json = true,
                        "csv" => f.csv = true,
                        "field" => f.field = true,
                        other => return Err(invalid(&o.key("formats"), format!("unknown format `{other}`"))),
                    }
                }
                f
            }
        };

        let e = section("eigen");
        let alphas = e.raw("alphas").map(|t| parse_list(&e.key("alphas"), t)).transpose()?;
        let write_fields = e.parse("write_fields")?.unwrap_or(false);
        let st = section("study");
        let scales = st.raw("scales").map(|t| parse_list(&st.key("scales"), t)).transpose()?;

        Ok(Self {
            grid,
            base_dir: base_dir.to_path_buf(),
            coefficients: ini.section(Some("coefficients")).cloned().unwrap_or_default(),
            n_samples,
            method,
            newton_tol,
            s_max_override,
            directory,
            formats,
            alphas,
            write_fields,
            scales,
        })
    }

    /// Coefficient `name` (`a`, `b` or `h`) on the configured grid, from
    /// either `name = expr` or `name_file = path`.
    pub fn coefficient(&self, name: &str) -> Result<ScalarField, ConfigError> {
        let file_key = format!("{name}_file");
        let key = format!("coefficients.{name}");
        match (self.coefficients.get(name), self.coefficients.get(&file_key)) {
            (Some(_), Some(_)) => Err(invalid(&key, format!("give either `{name}` or `{file_key}`, not both"))),
            (None, None) => Err(ConfigError::Missing(key)),
            (Some(src), None) => {
                let expr = parse(src.trim()).map_err(|e| invalid(&key, e))?;
                eval_field(&expr, self.grid).map_err(|e| invalid(&key, e))
            }
            (None, Some(path)) => {
                let key = format!("coefficients.{file_key}");
                let path = self.base_dir.join(path.trim());
                let file = File::open(&path).map_err(|e| invalid(&key, format!("{}: {e}", path.display())))?;
                let field = ScalarField::read_from(BufReader::new(file)).map_err(|e| invalid(&key, e))?;
                if !field.grid().matches(&self.grid) {
                    return Err(invalid(&key, format!("field grid {} differs from {}", field.grid(), self.grid)));
                }
                Ok(field)
            }
        }
    }
}
