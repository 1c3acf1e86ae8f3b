use std::fmt::Write as _;
use std::io;
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Num(v) => write!(f, "{v:e}"),
            Cell::Text(s) => write!(f, "{s}"),
            Cell::Empty => Ok(()),
        }
    }
}

/// How a table is drawn by the emitted plot script (1-based columns).
#[derive(Clone, Debug, PartialEq)]
pub enum PlotHint {
    None,
    Lines { x: usize, ys: Vec<usize>, logscale: bool },
    /// One plot per distinct value of `group`.
    PerGroup { group: usize, x: usize, y: usize },
    /// Log-log points with the fitted line `exp(intercept) x^slope`.
    LogLogFit { x: usize, y: usize, slope: f64, intercept: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    /// File stem of the CSV.
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub plot: PlotHint,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            plot: PlotHint::None,
        }
    }

    pub fn with_plot(mut self, plot: PlotHint) -> Self {
        self.plot = plot;
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width of {}", self.name);
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn all_finite(&self) -> bool {
        self.rows.iter().flatten().all(|c| !matches!(c, Cell::Num(v) if !v.is_finite()))
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|c| c.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// Pass/fail check with its pinned threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub observed: f64,
    pub rule: String,
    pub pass: bool,
}

impl Verdict {
    pub fn at_most(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            rule: format!("<= {bound:e}"),
            pass: observed <= bound,
        }
    }

    pub fn at_least(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            rule: format!(">= {bound:e}"),
            pass: observed >= bound,
        }
    }

    pub fn above(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            rule: format!("> {bound:e}"),
            pass: observed > bound,
        }
    }

    pub fn below(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            rule: format!("< {bound:e}"),
            pass: observed < bound,
        }
    }

    /// `lo < observed <= hi`
    pub fn within(name: impl Into<String>, observed: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            rule: format!("in ({lo:e}, {hi:e}]"),
            pass: lo < observed && observed <= hi,
        }
    }

    /// A count of failures that must be zero.
    pub fn none_failed(name: impl Into<String>, failures: usize, total: usize) -> Self {
        Self {
            name: name.into(),
            observed: failures as f64,
            rule: format!("== 0 of {total}"),
            pass: failures == 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    pub experiment: String,
    pub seed: u64,
    pub version: String,
    pub preset_table: String,
    pub config_echo: String,
    pub tables: Vec<Table>,
    pub verdicts: Vec<Verdict>,
    pub notes: Vec<String>,
    /// Extra text artifacts `(file name, contents)`.
    pub artifacts: Vec<(String, String)>,
    pub error: Option<String>,
    pub wall_clock_s: f64,
}

pub const REPORT_FILE: &str = "report.txt";
pub const PLOT_FILE: &str = "plots.gp";

impl RunReport {
    /// Every verdict passed, every table is finite and no error occurred.
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.tables.iter().all(Table::all_finite) && self.verdicts.iter().all(|v| v.pass)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "spde-lab {}", self.version);
        let _ = writeln!(s, "experiment = {}", self.experiment);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "preset_table = {}", self.preset_table);
        let _ = writeln!(s, "status = {}", if self.passed() { "PASS" } else { "FAIL" });
        let _ = writeln!(s, "wall_clock_s = {:.3}", self.wall_clock_s);
        let _ = writeln!(s, "\n# configuration\n{}", self.config_echo.trim_end());
        let _ = writeln!(s, "\n# verdicts");
        for v in &self.verdicts {
            let _ = writeln!(
                s,
                "{} {}: observed {:e}, required {}",
                if v.pass { "PASS" } else { "FAIL" },
                v.name,
                v.observed,
                v.rule
            );
        }
        for t in self.tables.iter().filter(|t| !t.all_finite()) {
            let _ = writeln!(s, "FAIL non-finite values in {}", t.file_name());
        }
        let _ = writeln!(s, "\n# tables");
        for t in &self.tables {
            let _ = writeln!(s, "{} ({} rows)", t.file_name(), t.rows.len());
        }
        if !self.notes.is_empty() {
            let _ = writeln!(s, "\n# notes");
            for n in &self.notes {
                let _ = writeln!(s, "{n}");
            }
        }
        if let Some(e) = &self.error {
            let _ = writeln!(s, "\n# error\n{e}");
        }
        s
    }

    /// Writes every CSV, the artifacts, the report and the plot script.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for t in &self.tables {
            std::fs::write(dir.join(t.file_name()), t.to_csv())?;
        }
        for (name, text) in &self.artifacts {
            std::fs::write(dir.join(name), text)?;
        }
        std::fs::write(dir.join(PLOT_FILE), emit_plot_script(self))?;
        std::fs::write(dir.join(REPORT_FILE), self.to_text())
    }
}

fn distinct_values(t: &Table, col: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in &t.rows {
        let v = r[col - 1].to_string();
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// Gnuplot script drawing every table with a plot hint, reading the CSVs by
/// relative path. Never executed here.
pub fn emit_plot_script(report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# gnuplot script for experiment {} (spde-lab {})", report.experiment, report.version);
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set terminal pngcairo size 800,600");
    for t in &report.tables {
        let file = t.file_name();
        match &t.plot {
            PlotHint::None => {}
            PlotHint::Lines { x, ys, logscale } => {
                let _ = writeln!(s, "\nset output '{}.png'", t.name);
                let _ = writeln!(s, "{}", if *logscale { "set logscale xy" } else { "unset logscale" });
                let _ = writeln!(s, "set xlabel '{}'", t.header[x - 1]);
                let parts: Vec<String> = ys.iter().map(|y| format!("'{file}' using {x}:{y} with linespoints")).collect();
                let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
            }
            PlotHint::PerGroup { group, x, y } => {
                for g in distinct_values(t, *group) {
                    let tag = g.replace(['.', '-', '+'], "_");
                    let _ = writeln!(s, "\nset output '{}_{}{}.png'", t.name, t.header[group - 1], tag);
                    let _ = writeln!(s, "unset logscale");
                    let _ = writeln!(s, "set xlabel '{}'", t.header[x - 1]);
                    let _ = writeln!(s, "set title '{} = {g}'", t.header[group - 1]);
                    let _ = writeln!(
                        s,
                        "plot '{file}' using (${group} == {g} ? ${x} : 1/0):{y} with linespoints title '{}'",
                        t.header[y - 1]
                    );
                }
                let _ = writeln!(s, "unset title");
            }
            PlotHint::LogLogFit { x, y, slope, intercept } => {
                let _ = writeln!(s, "\nset output '{}.png'", t.name);
                let _ = writeln!(s, "set logscale xy");
                let _ = writeln!(s, "set xlabel '{}'", t.header[x - 1]);
                let _ = writeln!(s, "fit_{0}(x) = exp({intercept:e}) * x**({slope:e})", t.name.replace('-', "_"));
                let _ = writeln!(
                    s,
                    "plot '{file}' using {x}:{y} with points, fit_{}(x) title 'slope {slope:.4}' with lines",
                    t.name.replace('-', "_")
                );
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_gives_header_only_script() {
        let r = RunReport {
            experiment: "toy-carleman".into(),
            ..Default::default()
        };
        let s = emit_plot_script(&r);
        assert!(s.lines().all(|l| l.starts_with('#') || l.starts_with("set ")));
        assert!(!s.lines().any(|l| l.starts_with("plot ")));
    }

    #[test]
    fn per_group_plot_per_lambda() {
        let mut t = Table::new("sweep_heat", &["s", "lambda", "ratio"])
            .with_plot(PlotHint::PerGroup { group: 2, x: 1, y: 3 });
        for l in [1.0, 2.0] {
            for s in [1.0, 2.0] {
                t.push(vec![s.into(), l.into(), 0.1.into()]);
            }
        }
        let r = RunReport {
            tables: vec![t],
            ..Default::default()
        };
        let s = emit_plot_script(&r);
        assert_eq!(s.matches("\nplot ").count(), 2);
    }

    #[test]
    fn nan_fails_closed() {
        let mut t = Table::new("x", &["a"]);
        t.push(vec![f64::NAN.into()]);
        let mut r = RunReport {
            tables: vec![t],
            ..Default::default()
        };
        assert!(!r.passed());
        assert!(r.to_text().contains("FAIL non-finite values in x.csv"));
        r.tables.clear();
        r.verdicts.push(Verdict::at_most("nan", f64::NAN, 1.0));
        assert!(!r.passed());
    }
}
